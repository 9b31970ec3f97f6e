"""Matrix-factorization mutual-preference model and its listwise losses.

Two independent embedding spaces: one scores the proactive user's preference
for a reactive candidate, the other the reverse.  Each directional score is a
sigmoid of an inner product; the mutual score is their product.  The listwise
loss normalizes raw sigmoid scores over the candidate set (a score ratio, not
a softmax of logits) and cross-entropies them against observed feedback,
optionally reweighted by inverse exposure probabilities.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (
    AssumptionViolationError,
    ContractViolation,
    DataFormatError,
)
from .metrics import EstimatorKind
from .util import atomic_open

PROB_FLOOR = 1e-12  # clamp for normalized scores inside the log


class LossKind(enum.Enum):
    """Training-loss variant; each pairs with a validation estimator."""

    CONVENTIONAL = "conventional"
    IPW1 = "ipw1"
    IPW2 = "ipw2"

    @property
    def paired_metric(self) -> EstimatorKind:
        return {
            LossKind.CONVENTIONAL: EstimatorKind.NAIVE,
            LossKind.IPW1: EstimatorKind.IPW1,
            LossKind.IPW2: EstimatorKind.IPW2,
        }[self]


@dataclass(eq=False)
class RankerModel:
    """Four embedding tables: (proactive, reactive) x (forward, backward) spaces."""

    w_pro_fwd: np.ndarray
    w_rea_fwd: np.ndarray
    w_pro_bwd: np.ndarray
    w_rea_bwd: np.ndarray

    def __post_init__(self):
        for name in ("w_pro_fwd", "w_rea_fwd", "w_pro_bwd", "w_rea_bwd"):
            table = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, table)
            if table.ndim != 2:
                raise ContractViolation(f"{name} must be a 2-d table")
            if not np.all(np.isfinite(table)):
                raise ContractViolation(f"{name} contains non-finite entries")
        if not (
            self.w_pro_fwd.shape[1] == self.w_rea_fwd.shape[1]
            == self.w_pro_bwd.shape[1] == self.w_rea_bwd.shape[1]
        ):
            raise ContractViolation("all embedding tables must share one dimension")
        if self.w_pro_fwd.shape[0] != self.w_pro_bwd.shape[0]:
            raise ContractViolation("proactive tables must have equal row counts")
        if self.w_rea_fwd.shape[0] != self.w_rea_bwd.shape[0]:
            raise ContractViolation("reactive tables must have equal row counts")

    @property
    def dim(self) -> int:
        return self.w_pro_fwd.shape[1]

    @property
    def n_proactive(self) -> int:
        return self.w_pro_fwd.shape[0]

    @property
    def n_reactive(self) -> int:
        return self.w_rea_fwd.shape[0]

    def copy(self) -> "RankerModel":
        return RankerModel(
            w_pro_fwd=self.w_pro_fwd.copy(),
            w_rea_fwd=self.w_rea_fwd.copy(),
            w_pro_bwd=self.w_pro_bwd.copy(),
            w_rea_bwd=self.w_rea_bwd.copy(),
        )


def init_model(n_proactive: int, n_reactive: int, dim: int, seed: int) -> RankerModel:
    """Uniform init in [-1/sqrt(dim), 1/sqrt(dim)] so initial scores sit near 0.5."""
    if dim < 1:
        raise ContractViolation(f"embedding dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)

    def table(rows: int) -> np.ndarray:
        return rng.uniform(-bound, bound, size=(rows, dim))

    return RankerModel(
        w_pro_fwd=table(n_proactive),
        w_rea_fwd=table(n_reactive),
        w_pro_bwd=table(n_proactive),
        w_rea_bwd=table(n_reactive),
    )


def _check_ids(model: RankerModel, u: int, v: int) -> None:
    if not (0 <= u < model.n_proactive):
        raise IndexError(f"proactive index {u} out of range [0, {model.n_proactive})")
    if not (0 <= v < model.n_reactive):
        raise IndexError(f"reactive index {v} out of range [0, {model.n_reactive})")


def score_forward(model: RankerModel, u: int, v: int) -> float:
    """sigmoid(w_u . w_v) in the forward space."""
    _check_ids(model, u, v)
    return float(expit(model.w_pro_fwd[u] @ model.w_rea_fwd[v]))


def score_backward(model: RankerModel, u: int, v: int) -> float:
    """sigmoid(w_u . w_v) in the backward space."""
    _check_ids(model, u, v)
    return float(expit(model.w_pro_bwd[u] @ model.w_rea_bwd[v]))


def score_mutual(model: RankerModel, u: int, v: int) -> float:
    """Product of the two directional scores."""
    return score_forward(model, u, v) * score_backward(model, u, v)


def score_matrix(model: RankerModel, users: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Mutual scores for a block of users x candidates."""
    users = np.asarray(users, dtype=np.intp)
    candidates = np.asarray(candidates, dtype=np.intp)
    s_fwd = expit(model.w_pro_fwd[users] @ model.w_rea_fwd[candidates].T)
    s_bwd = expit(model.w_pro_bwd[users] @ model.w_rea_bwd[candidates].T)
    return s_fwd * s_bwd


# ---------------------------------------------------------------------------
# listwise losses
# ---------------------------------------------------------------------------

def _loss_inputs(model, u, candidates, y_fwd, y_bwd, theta_fwd, theta_bwd, kind):
    candidates = np.asarray(candidates, dtype=np.intp)
    if candidates.size == 0:
        raise ContractViolation(f"user {u} has an empty candidate list")
    if np.unique(candidates).size != candidates.size:
        raise ContractViolation("candidate list contains duplicates")
    _check_ids(model, u, int(candidates.max()))
    _check_ids(model, u, int(candidates.min()))

    yf = np.asarray(y_fwd, dtype=np.float64)
    yb = np.asarray(y_bwd, dtype=np.float64)
    if yf.shape != candidates.shape or yb.shape != candidates.shape:
        raise ContractViolation("feedback vectors must align with the candidate list")
    if not np.isin(yf, (0.0, 1.0)).all() or not np.isin(yb, (0.0, 1.0)).all():
        raise ContractViolation("feedback must be bits")
    if np.any(yb > yf):
        raise ContractViolation("infeasible feedback: y_bwd = 1 requires y_fwd = 1")

    # per-candidate cross-entropy weights for each loss variant
    if kind is LossKind.CONVENTIONAL:
        coef_fwd, coef_bwd = yf, yb
    else:
        tf = np.asarray(theta_fwd, dtype=np.float64)
        if tf.shape != candidates.shape or np.any(tf <= 0.0) or not np.all(np.isfinite(tf)):
            raise AssumptionViolationError(
                "theta_fwd must be strictly positive and aligned with candidates"
            )
        if kind is LossKind.IPW1:
            coef_fwd, coef_bwd = yf / tf, yb / tf
        elif kind is LossKind.IPW2:
            tb = np.asarray(theta_bwd, dtype=np.float64)
            if tb.shape != candidates.shape or np.any(tb <= 0.0) or not np.all(np.isfinite(tb)):
                raise AssumptionViolationError(
                    "theta_bwd must be strictly positive and aligned with candidates"
                )
            coef_fwd, coef_bwd = yf / tf, yb / (tf * tb)
        else:
            raise ContractViolation(f"unknown loss kind {kind!r}")
    return candidates, coef_fwd, coef_bwd


def _space_loss(w_actor: np.ndarray, w_targets: np.ndarray, coef: np.ndarray) -> float:
    # NaNs from exploded embeddings propagate to the caller's divergence check
    with np.errstate(invalid="ignore", divide="ignore"):
        s = expit(w_targets @ w_actor)
        p = s / s.sum()
        return float(-(coef @ np.log(np.maximum(p, PROB_FLOOR))))


def loss_terms(
    model: RankerModel,
    u: int,
    candidates,
    y_fwd,
    y_bwd,
    theta_fwd=None,
    theta_bwd=None,
    kind: LossKind = LossKind.CONVENTIONAL,
) -> tuple[float, float]:
    """(forward, backward) cross-entropy terms of the listwise loss for one user."""
    cands, coef_fwd, coef_bwd = _loss_inputs(
        model, u, candidates, y_fwd, y_bwd, theta_fwd, theta_bwd, kind
    )
    fwd = _space_loss(model.w_pro_fwd[u], model.w_rea_fwd[cands], coef_fwd)
    bwd = _space_loss(model.w_pro_bwd[u], model.w_rea_bwd[cands], coef_bwd)
    return fwd, bwd


def loss_user(
    model: RankerModel,
    u: int,
    candidates,
    y_fwd,
    y_bwd,
    theta_fwd=None,
    theta_bwd=None,
    kind: LossKind = LossKind.CONVENTIONAL,
) -> float:
    """Listwise loss of one user's candidate list (sum of both directional terms)."""
    fwd, bwd = loss_terms(model, u, candidates, y_fwd, y_bwd, theta_fwd, theta_bwd, kind)
    return fwd + bwd


@dataclass(eq=False)
class GradientTables:
    """Gradients with the same shapes as the model's four tables."""

    w_pro_fwd: np.ndarray
    w_rea_fwd: np.ndarray
    w_pro_bwd: np.ndarray
    w_rea_bwd: np.ndarray

    @staticmethod
    def zeros_like(model: RankerModel) -> "GradientTables":
        return GradientTables(
            w_pro_fwd=np.zeros_like(model.w_pro_fwd),
            w_rea_fwd=np.zeros_like(model.w_rea_fwd),
            w_pro_bwd=np.zeros_like(model.w_pro_bwd),
            w_rea_bwd=np.zeros_like(model.w_rea_bwd),
        )

    def scale(self, factor: float) -> None:
        for table in (self.w_pro_fwd, self.w_rea_fwd, self.w_pro_bwd, self.w_rea_bwd):
            table *= factor


def _space_gradient(
    w_actor: np.ndarray,
    w_targets: np.ndarray,
    coef: np.ndarray,
    grad_actor: np.ndarray,
    grad_targets: np.ndarray,
    target_rows: np.ndarray,
) -> float:
    """Accumulate one space's gradient; returns that space's loss value.

    With s = sigmoid(z), p = s / sum(s) and L = -sum(coef * log p), the
    derivative is dL/dz_v = (sum(coef) * p_v - coef_v) * (1 - s_v).  The
    probability floor inside the log is ignored by the gradient; it only
    binds at p <= 1e-12, far outside normal operation.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        s = expit(w_targets @ w_actor)
        p = s / s.sum()
        loss = float(-(coef @ np.log(np.maximum(p, PROB_FLOOR))))
        dz = (coef.sum() * p - coef) * (1.0 - s)
    grad_actor += dz @ w_targets
    grad_targets[target_rows] += dz[:, None] * w_actor[None, :]
    return loss


def accumulate_gradient(
    model: RankerModel,
    u: int,
    candidates,
    y_fwd,
    y_bwd,
    theta_fwd,
    theta_bwd,
    kind: LossKind,
    out: GradientTables,
) -> float:
    """Add one user's loss gradient into ``out``; returns the user's loss."""
    cands, coef_fwd, coef_bwd = _loss_inputs(
        model, u, candidates, y_fwd, y_bwd, theta_fwd, theta_bwd, kind
    )
    loss_fwd = _space_gradient(
        model.w_pro_fwd[u], model.w_rea_fwd[cands], coef_fwd,
        out.w_pro_fwd[u], out.w_rea_fwd, cands,
    )
    loss_bwd = _space_gradient(
        model.w_pro_bwd[u], model.w_rea_bwd[cands], coef_bwd,
        out.w_pro_bwd[u], out.w_rea_bwd, cands,
    )
    return loss_fwd + loss_bwd


def loss_gradient(
    model: RankerModel,
    u: int,
    candidates,
    y_fwd,
    y_bwd,
    theta_fwd=None,
    theta_bwd=None,
    kind: LossKind = LossKind.CONVENTIONAL,
) -> GradientTables:
    """Analytic gradient of :func:`loss_user` w.r.t. every embedding row.

    Rows of users not touched by the candidate list are zero.
    """
    out = GradientTables.zeros_like(model)
    accumulate_gradient(model, u, candidates, y_fwd, y_bwd, theta_fwd, theta_bwd, kind, out)
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"matchltr-checkpoint v1\n"
_TABLE_ORDER = ("w_pro_fwd", "w_rea_fwd", "w_pro_bwd", "w_rea_bwd")


def save_model(model: RankerModel, path) -> None:
    """Write a checkpoint: magic line, JSON header line, then raw table bytes.

    The header records dim and both side sizes; tables follow in a fixed order
    as little-endian float64, C-order.  Byte-for-byte reproducible.
    """
    header = {
        "dim": model.dim,
        "n_proactive": model.n_proactive,
        "n_reactive": model.n_reactive,
        "tables": list(_TABLE_ORDER),
        "dtype": "<f8",
    }
    with atomic_open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        for name in _TABLE_ORDER:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def load_model(path) -> RankerModel:
    """Read a checkpoint written by :func:`save_model`."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _CKPT_MAGIC:
            raise DataFormatError(f"checkpoint: bad magic line {magic!r}")
        try:
            header = json.loads(fh.readline().decode("ascii"))
            dim = int(header["dim"])
            n_pro = int(header["n_proactive"])
            n_rea = int(header["n_reactive"])
            if header["tables"] != list(_TABLE_ORDER) or header["dtype"] != "<f8":
                raise DataFormatError("checkpoint: unsupported table layout")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"checkpoint: malformed header: {exc}") from None
        tables = {}
        for name in _TABLE_ORDER:
            rows = n_pro if name.startswith("w_pro") else n_rea
            raw = fh.read(rows * dim * 8)
            if len(raw) != rows * dim * 8:
                raise DataFormatError(f"checkpoint: truncated table {name}")
            tables[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, dim).copy()
        if fh.read(1):
            raise DataFormatError("checkpoint: trailing bytes after the last table")
    return RankerModel(**tables)
