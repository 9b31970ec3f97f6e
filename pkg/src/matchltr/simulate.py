"""Synthetic two-sided markets and biased implicit-feedback sampling.

The generative story: every (proactive, reactive) pair carries two Bernoulli
relevance parameters (one per direction).  Exposure is popularity-driven --
users with more incoming preference mass are seen more often -- and implicit
feedback is the product of exposure and relevance, with the reactive side
gated behind the proactive side's selection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np
from scipy.special import expit

from .core import (
    AssumptionViolationError,
    ContractViolation,
    DataFormatError,
    FoldInfeasibleError,
    FoldPlan,
    InvalidPopulationError,
    PairObservation,
    PreferenceMatrix,
    SideAssignment,
    proactive,
    reactive,
)
from .util import atomic_open, format_float


# ---------------------------------------------------------------------------
# side assignment and folds
# ---------------------------------------------------------------------------

def assign_sides(n_users: int, seed: int) -> SideAssignment:
    """Randomly split a user population into proactive and reactive sides.

    The split is as even as possible (sizes differ by at most one; the
    reactive side gets the extra user when ``n_users`` is odd) and is
    deterministic for a fixed seed.
    """
    if n_users < 2:
        raise InvalidPopulationError(
            f"need at least 2 users to form two sides, got {n_users}"
        )
    perm = np.random.default_rng(seed).permutation(n_users)
    half = n_users // 2
    return SideAssignment(
        proactive_ids=tuple(sorted(int(i) for i in perm[:half])),
        reactive_ids=tuple(sorted(int(i) for i in perm[half:])),
    )


def make_folds(assignment: SideAssignment, k: int, seed: int, test_fold: int = 0) -> FoldPlan:
    """Partition each side into ``k`` near-equal random blocks.

    Block sizes differ by at most one (earlier blocks take the remainder).
    """
    if k < 2:
        raise ContractViolation(f"fold count must be >= 2, got {k}")
    for name, size in (("proactive", assignment.n_proactive), ("reactive", assignment.n_reactive)):
        if size < k:
            raise FoldInfeasibleError(
                f"{name} side has {size} users, cannot form {k} folds"
            )
    rng = np.random.default_rng(seed)

    def split(n: int) -> tuple[tuple[int, ...], ...]:
        perm = rng.permutation(n)
        return tuple(tuple(sorted(int(i) for i in block)) for block in np.array_split(perm, k))

    return FoldPlan(
        k=k,
        proactive_folds=split(assignment.n_proactive),
        reactive_folds=split(assignment.n_reactive),
        test_fold=test_fold,
    )


# ---------------------------------------------------------------------------
# exposure probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExposureModel:
    """Per-user exposure probabilities derived from popularity.

    ``theta_reactive_exposure[v]`` is the probability that a listed reactive
    user ``v`` is examined by any proactive user; ``theta_proactive_exposure[u]``
    is the probability that proactive user ``u`` is examined once it has
    selected someone.  The most popular user on each axis has probability
    exactly 1, and ``eta`` controls how sharply popularity translates into
    exposure (``eta = 0`` means uniform full exposure).
    """

    eta: float
    theta_reactive_exposure: np.ndarray
    theta_proactive_exposure: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "theta_reactive_exposure",
            np.asarray(self.theta_reactive_exposure, dtype=np.float64),
        )
        object.__setattr__(
            self, "theta_proactive_exposure",
            np.asarray(self.theta_proactive_exposure, dtype=np.float64),
        )
        if self.eta < 0:
            raise ContractViolation(f"eta must be non-negative, got {self.eta}")
        for name, t in (
            ("theta_reactive_exposure", self.theta_reactive_exposure),
            ("theta_proactive_exposure", self.theta_proactive_exposure),
        ):
            if t.ndim != 1 or t.size == 0:
                raise ContractViolation(f"{name} must be a non-empty vector")
            if t.min() <= 0.0 or t.max() > 1.0:
                raise AssumptionViolationError(
                    f"{name} must lie in (0, 1], got range [{t.min()}, {t.max()}]"
                )
            if t.max() != 1.0:
                raise AssumptionViolationError(
                    f"{name} must be normalized so its most popular user has "
                    f"exposure exactly 1, got max {t.max()}"
                )

    @property
    def n_proactive(self) -> int:
        return self.theta_proactive_exposure.shape[0]

    @property
    def n_reactive(self) -> int:
        return self.theta_reactive_exposure.shape[0]

    def theta_forward(self) -> np.ndarray:
        """Pairwise forward exposure matrix (constant across rows)."""
        return np.broadcast_to(
            self.theta_reactive_exposure[None, :], (self.n_proactive, self.n_reactive)
        ).copy()

    def theta_backward(self) -> np.ndarray:
        """Pairwise backward exposure matrix (constant across columns)."""
        return np.broadcast_to(
            self.theta_proactive_exposure[:, None], (self.n_proactive, self.n_reactive)
        ).copy()


def exposure_from_popularity(m: PreferenceMatrix, eta: float) -> ExposureModel:
    """Exposure probabilities from preference mass, normalized by the maximum.

    A reactive user's exposure is ``(incoming forward mass / max)**eta``; a
    proactive user's exposure is ``(incoming backward mass / max)**eta``.
    Every user must have strictly positive incoming mass, otherwise its
    exposure would be 0 and the positivity assumption breaks.
    """
    if eta < 0:
        raise ContractViolation(f"eta must be non-negative, got {eta}")
    colsums = m.forward.sum(axis=0)
    rowsums = m.backward.sum(axis=1)
    zero_cols = np.nonzero(colsums <= 0.0)[0]
    if zero_cols.size:
        raise AssumptionViolationError(
            f"reactive user {int(zero_cols[0])} has zero incoming preference mass; "
            "exposure probability would be 0"
        )
    zero_rows = np.nonzero(rowsums <= 0.0)[0]
    if zero_rows.size:
        raise AssumptionViolationError(
            f"proactive user {int(zero_rows[0])} has zero incoming preference mass; "
            "exposure probability would be 0"
        )
    return ExposureModel(
        eta=float(eta),
        theta_reactive_exposure=(colsums / colsums.max()) ** eta,
        theta_proactive_exposure=(rowsums / rowsums.max()) ** eta,
    )


# ---------------------------------------------------------------------------
# preference matrices
# ---------------------------------------------------------------------------

def latent_preferences(
    actor_factors: np.ndarray,
    target_factors: np.ndarray,
    target_offsets: np.ndarray | None = None,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One direction of a low-rank preference model, squashed to [0, 1].

    Probability of actor ``i`` preferring target ``j`` is
    ``sigmoid(actor_factors[i] . target_factors[j] + target_offsets[j])``,
    optionally perturbed by Gaussian noise truncated back into [0, 1].
    """
    actor = np.asarray(actor_factors, dtype=np.float64)
    target = np.asarray(target_factors, dtype=np.float64)
    if actor.ndim != 2 or target.ndim != 2 or actor.shape[1] != target.shape[1]:
        raise ContractViolation("factor matrices must be 2-d with a shared latent dimension")
    logits = actor @ target.T
    if target_offsets is not None:
        logits = logits + np.asarray(target_offsets, dtype=np.float64)[None, :]
    probs = expit(logits)
    if noise < 0:
        raise ContractViolation(f"noise must be non-negative, got {noise}")
    if noise > 0:
        if rng is None:
            raise ContractViolation("noise > 0 requires an rng")
        probs = np.clip(probs + noise * rng.standard_normal(probs.shape), 0.0, 1.0)
    return probs


def synth_preferences(
    n_proactive: int,
    n_reactive: int,
    rank: int,
    noise: float,
    seed: int,
    *,
    forward_base: float = 0.3,
    forward_jitter: float = 0.45,
    personal_spread: float = 0.5,
    within_logit: float = 2.5,
    across_logit: float = -2.5,
    backward_boost: float = 3.5,
    backward_jitter: float = 0.4,
) -> PreferenceMatrix:
    """Two-sided preferences where reciprocation is the scarce, clustered signal.

    Forward direction (who proactive users like): a popularity-graded latent
    model, ``sigmoid(forward_base + forward_jitter * z_v + personal taste)``,
    with per-user taste of scale ``personal_spread``.  Popular reactive users
    are genuinely more attractive, so downstream exposure roughly follows
    forward preference.

    Backward direction (who reciprocates): users on both sides carry one of
    ``rank`` latent classes; reciprocation is strong within a class
    (``within_logit``) and rare across classes (``across_logit``), except that
    class-0 proactive users are mainstream and get a ``backward_boost`` from
    everyone.  Niche-class proactive users receive little backward mass, hence
    little backward exposure, which is what makes their logged reciprocations
    rare and precious.

    Both directions are low-rank factor models squashed through a sigmoid;
    ``noise`` perturbs the probabilities and is truncated back into [0, 1].
    """
    if rank < 1:
        raise ContractViolation(f"rank must be >= 1, got {rank}")
    if n_proactive < 1 or n_reactive < 1:
        raise ContractViolation("both sides need at least one user")
    rng = np.random.default_rng(seed)
    class_pro = rng.integers(0, rank, n_proactive)
    class_rea = rng.integers(0, rank, n_reactive)

    taste_sd = np.sqrt(personal_spread / np.sqrt(rank))
    fwd_actors = rng.standard_normal((n_proactive, rank)) * taste_sd
    fwd_targets = rng.standard_normal((n_reactive, rank)) * taste_sd
    fwd_offsets = forward_base + forward_jitter * rng.standard_normal(n_reactive)
    forward = latent_preferences(fwd_actors, fwd_targets, fwd_offsets, noise, rng)

    bwd_actors = np.eye(rank)[class_rea]
    bwd_targets = np.full((n_proactive, rank), across_logit)
    bwd_targets[np.arange(n_proactive), class_pro] = within_logit
    bwd_offsets = backward_boost * (class_pro == 0)
    bwd_offsets = bwd_offsets + backward_jitter * rng.standard_normal(n_proactive)
    # backward[u, v] = preference of reactive v for proactive u
    backward = latent_preferences(bwd_actors, bwd_targets, bwd_offsets, noise, rng).T

    return PreferenceMatrix(forward=forward, backward=backward)


def save_preferences(m: PreferenceMatrix, path) -> None:
    """Write a preference matrix as dense CSV, one row per proactive user.

    The row holds the forward block then the backward block side by side
    (``2 * n_reactive`` columns).  Values use shortest round-trip formatting.
    """
    stacked = np.hstack([m.forward, m.backward])
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh)
        for row in stacked:
            writer.writerow([format_float(x) for x in row])


def _parse_float_csv(path, what: str) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                values = [float(x) for x in row]
            except ValueError as exc:
                raise DataFormatError(f"{what}: line {lineno}: {exc}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(
                    f"{what}: line {lineno}: expected {width} columns, got {len(values)}"
                )
            if any(not np.isfinite(x) or x < 0.0 or x > 1.0 for x in values):
                raise DataFormatError(
                    f"{what}: line {lineno}: entries must be finite and lie in [0, 1]"
                )
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{what}: file is empty")
    return np.asarray(rows, dtype=np.float64)


def load_preferences(path) -> PreferenceMatrix:
    """Read a preference matrix written by :func:`save_preferences`."""
    data = _parse_float_csv(path, "preference CSV")
    if data.shape[1] % 2 != 0:
        raise DataFormatError(
            f"preference CSV: expected an even column count (forward block then "
            f"backward block), got {data.shape[1]}"
        )
    n_rea = data.shape[1] // 2
    return PreferenceMatrix(forward=data[:, :n_rea], backward=data[:, n_rea:])


def load_square_preferences(path) -> PreferenceMatrix:
    """Read a square all-users preference CSV (``m[i, j]`` = i's preference for j).

    Returns the pre-assignment view where both axes index the whole
    population; follow with :meth:`PreferenceMatrix.restrict`.
    """
    data = _parse_float_csv(path, "square preference CSV")
    if data.shape[0] != data.shape[1]:
        raise DataFormatError(
            f"square preference CSV: expected a square matrix, got shape {data.shape}"
        )
    return PreferenceMatrix.from_square(data)


# ---------------------------------------------------------------------------
# feedback datasets
# ---------------------------------------------------------------------------

_DATASET_COLUMNS = (
    "u", "v", "fold_u", "fold_v",
    "r_fwd", "r_bwd", "o_fwd", "o_bwd", "y_fwd", "y_bwd",
    "theta_fwd", "theta_bwd",
)


@dataclass(frozen=True, eq=False)
class FeedbackDataset:
    """Sampled feedback for every non-test pair, in row-major pair order.

    Columnar storage: position ``i`` across all arrays describes the pair
    ``(u[i], v[i])``.  Test-block pairs are never present.
    """

    fold_plan: FoldPlan
    u: np.ndarray
    v: np.ndarray
    r_fwd: np.ndarray
    r_bwd: np.ndarray
    o_fwd: np.ndarray
    o_bwd: np.ndarray
    y_fwd: np.ndarray
    y_bwd: np.ndarray
    theta_fwd: np.ndarray
    theta_bwd: np.ndarray
    eta: float | None = None
    rng_seed: int | None = None

    def __post_init__(self):
        for name in ("u", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.intp))
        for name in ("r_fwd", "r_bwd", "o_fwd", "o_bwd", "y_fwd", "y_bwd"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int8))
        for name in ("theta_fwd", "theta_bwd"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.u.shape[0]
        for name in ("v", "r_fwd", "r_bwd", "o_fwd", "o_bwd", "y_fwd", "y_bwd",
                     "theta_fwd", "theta_bwd"):
            if getattr(self, name).shape != (n,):
                raise ContractViolation(f"column {name} has inconsistent length")
        plan = self.fold_plan
        if n:
            if self.u.min() < 0 or self.u.max() >= plan.n_proactive:
                raise ContractViolation("proactive index out of range")
            if self.v.min() < 0 or self.v.max() >= plan.n_reactive:
                raise ContractViolation("reactive index out of range")
        for name in ("r_fwd", "r_bwd", "o_fwd", "o_bwd", "y_fwd", "y_bwd"):
            col = getattr(self, name)
            if col.size and not np.isin(col, (0, 1)).all():
                raise ContractViolation(f"column {name} must contain bits")
        if not np.array_equal(self.y_fwd, self.o_fwd * self.r_fwd):
            raise ContractViolation("y_fwd must equal o_fwd * r_fwd for every pair")
        if not np.array_equal(self.y_bwd, self.y_fwd * self.o_bwd * self.r_bwd):
            raise ContractViolation("y_bwd must equal y_fwd * o_bwd * r_bwd for every pair")
        for name in ("theta_fwd", "theta_bwd"):
            t = getattr(self, name)
            if t.size and (t.min() <= 0.0 or t.max() > 1.0):
                raise AssumptionViolationError(f"{name} must lie in (0, 1]")
        in_test = plan.test_mask()[self.u, self.v]
        if in_test.any():
            bad = int(np.nonzero(in_test)[0][0])
            raise ContractViolation(
                f"pair (u={int(self.u[bad])}, v={int(self.v[bad])}) lies in the test block"
            )
        flat = self.u * plan.n_reactive + self.v
        if np.unique(flat).shape[0] != n:
            raise ContractViolation("dataset contains duplicate pairs")

    def __len__(self) -> int:
        return self.u.shape[0]

    @property
    def n_proactive(self) -> int:
        return self.fold_plan.n_proactive

    @property
    def n_reactive(self) -> int:
        return self.fold_plan.n_reactive

    def observations(self) -> Iterator[PairObservation]:
        """Yield typed observations (validated one by one)."""
        for i in range(len(self)):
            yield PairObservation(
                u=proactive(int(self.u[i])),
                v=reactive(int(self.v[i])),
                r_forward=int(self.r_fwd[i]),
                r_backward=int(self.r_bwd[i]),
                o_forward=int(self.o_fwd[i]),
                o_backward=int(self.o_bwd[i]),
                y_forward=int(self.y_fwd[i]),
                y_backward=int(self.y_bwd[i]),
                theta_forward=float(self.theta_fwd[i]),
                theta_backward=float(self.theta_bwd[i]),
            )

    def dense(self, field: str) -> np.ndarray:
        """Full (n_proactive, n_reactive) matrix of one column, NaN where unobserved."""
        if field not in _DATASET_COLUMNS[4:]:
            raise KeyError(f"unknown dataset field {field!r}")
        out = np.full((self.n_proactive, self.n_reactive), np.nan)
        out[self.u, self.v] = getattr(self, field).astype(np.float64)
        return out

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros((self.n_proactive, self.n_reactive), dtype=bool)
        mask[self.u, self.v] = True
        return mask

    def with_unit_exposure(self) -> "FeedbackDataset":
        """Counterfactual twin where everything was exposed (O = 1, theta = 1)."""
        y_fwd = self.r_fwd.copy()
        y_bwd = self.r_fwd * self.r_bwd
        return replace(
            self,
            o_fwd=np.ones_like(self.o_fwd),
            o_bwd=np.ones_like(self.o_bwd),
            y_fwd=y_fwd,
            y_bwd=y_bwd,
            theta_fwd=np.ones_like(self.theta_fwd),
            theta_bwd=np.ones_like(self.theta_bwd),
        )


def sample_dataset(
    m: PreferenceMatrix,
    exposure: ExposureModel,
    plan: FoldPlan,
    seed: int,
) -> FeedbackDataset:
    """Draw one biased-feedback realization for every non-test pair.

    Per pair, independently: forward relevance from the forward preference,
    forward exposure from the reactive user's popularity, backward relevance
    from the backward preference, backward exposure from the proactive user's
    popularity; feedback is composed from these four bits.  Deterministic for
    a fixed seed, and the draw for a given pair does not depend on the fold
    plan (the plan only selects which pairs are kept).
    """
    if (m.n_proactive, m.n_reactive) != (plan.n_proactive, plan.n_reactive):
        raise ContractViolation(
            f"preference matrix is {m.n_proactive}x{m.n_reactive} but the fold plan "
            f"covers {plan.n_proactive}x{plan.n_reactive} users"
        )
    if (exposure.n_proactive, exposure.n_reactive) != (m.n_proactive, m.n_reactive):
        raise ContractViolation("exposure model sizes do not match the preference matrix")

    rng = np.random.default_rng(seed)
    shape = (m.n_proactive, m.n_reactive)
    r_fwd = rng.random(shape) < m.forward
    o_fwd = rng.random(shape) < exposure.theta_reactive_exposure[None, :]
    r_bwd = rng.random(shape) < m.backward
    o_bwd = rng.random(shape) < exposure.theta_proactive_exposure[:, None]
    y_fwd = o_fwd & r_fwd
    y_bwd = y_fwd & o_bwd & r_bwd

    uu, vv = np.nonzero(~plan.test_mask())
    return FeedbackDataset(
        fold_plan=plan,
        u=uu,
        v=vv,
        r_fwd=r_fwd[uu, vv],
        r_bwd=r_bwd[uu, vv],
        o_fwd=o_fwd[uu, vv],
        o_bwd=o_bwd[uu, vv],
        y_fwd=y_fwd[uu, vv],
        y_bwd=y_bwd[uu, vv],
        theta_fwd=exposure.theta_reactive_exposure[vv],
        theta_bwd=exposure.theta_proactive_exposure[uu],
        eta=exposure.eta,
        rng_seed=int(seed),
    )


# ---------------------------------------------------------------------------
# file formats: dataset CSV, fold-plan JSON, exposure JSON
# ---------------------------------------------------------------------------

def save_dataset(ds: FeedbackDataset, path) -> None:
    """Write the observation table as CSV (schema: the header row)."""
    fold_u = ds.fold_plan.fold_of_proactive()[ds.u]
    fold_v = ds.fold_plan.fold_of_reactive()[ds.v]
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh)
        writer.writerow(_DATASET_COLUMNS)
        for i in range(len(ds)):
            writer.writerow([
                int(ds.u[i]), int(ds.v[i]), int(fold_u[i]), int(fold_v[i]),
                int(ds.r_fwd[i]), int(ds.r_bwd[i]), int(ds.o_fwd[i]), int(ds.o_bwd[i]),
                int(ds.y_fwd[i]), int(ds.y_bwd[i]),
                format_float(ds.theta_fwd[i]), format_float(ds.theta_bwd[i]),
            ])


def load_dataset(
    path,
    plan: FoldPlan,
    eta: float | None = None,
    rng_seed: int | None = None,
) -> FeedbackDataset:
    """Read a dataset CSV back against its fold plan.

    Fold labels stored in the file are cross-checked against the plan.
    """
    columns: dict[str, list] = {name: [] for name in _DATASET_COLUMNS}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(_DATASET_COLUMNS):
            raise DataFormatError(
                f"dataset CSV: line 1: expected header {','.join(_DATASET_COLUMNS)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_DATASET_COLUMNS):
                raise DataFormatError(
                    f"dataset CSV: line {lineno}: expected {len(_DATASET_COLUMNS)} "
                    f"columns, got {len(row)}"
                )
            try:
                for name, cell in zip(_DATASET_COLUMNS, row):
                    columns[name].append(float(cell) if name.startswith("theta") else int(cell))
            except ValueError as exc:
                raise DataFormatError(f"dataset CSV: line {lineno}: {exc}") from None

    fold_u = np.asarray(columns["fold_u"], dtype=np.intp)
    fold_v = np.asarray(columns["fold_v"], dtype=np.intp)
    u = np.asarray(columns["u"], dtype=np.intp)
    v = np.asarray(columns["v"], dtype=np.intp)
    try:
        ds = FeedbackDataset(
            fold_plan=plan,
            u=u, v=v,
            r_fwd=columns["r_fwd"], r_bwd=columns["r_bwd"],
            o_fwd=columns["o_fwd"], o_bwd=columns["o_bwd"],
            y_fwd=columns["y_fwd"], y_bwd=columns["y_bwd"],
            theta_fwd=columns["theta_fwd"], theta_bwd=columns["theta_bwd"],
            eta=eta, rng_seed=rng_seed,
        )
    except (ContractViolation, AssumptionViolationError) as exc:
        raise DataFormatError(f"dataset CSV: {exc}") from None
    if len(ds) and (
        not np.array_equal(plan.fold_of_proactive()[u], fold_u)
        or not np.array_equal(plan.fold_of_reactive()[v], fold_v)
    ):
        raise DataFormatError("dataset CSV: fold labels do not match the fold plan")
    return ds


def save_fold_plan(plan: FoldPlan, path) -> None:
    payload = {
        "k": plan.k,
        "test_fold": plan.test_fold,
        "proactive_folds": [list(f) for f in plan.proactive_folds],
        "reactive_folds": [list(f) for f in plan.reactive_folds],
    }
    with atomic_open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_fold_plan(path) -> FoldPlan:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"fold-plan JSON: {exc}") from None
    try:
        return FoldPlan(
            k=payload["k"],
            proactive_folds=tuple(tuple(f) for f in payload["proactive_folds"]),
            reactive_folds=tuple(tuple(f) for f in payload["reactive_folds"]),
            test_fold=payload["test_fold"],
        )
    except (KeyError, TypeError, ContractViolation) as exc:
        raise DataFormatError(f"fold-plan JSON: {exc}") from None


def save_exposure(exposure: ExposureModel, path) -> None:
    payload = {
        "eta": exposure.eta,
        "theta_reactive_exposure": [float(t) for t in exposure.theta_reactive_exposure],
        "theta_proactive_exposure": [float(t) for t in exposure.theta_proactive_exposure],
    }
    with atomic_open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_exposure(path) -> ExposureModel:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"exposure JSON: {exc}") from None
    try:
        return ExposureModel(
            eta=payload["eta"],
            theta_reactive_exposure=payload["theta_reactive_exposure"],
            theta_proactive_exposure=payload["theta_proactive_exposure"],
        )
    except (KeyError, TypeError, AssumptionViolationError, ContractViolation) as exc:
        raise DataFormatError(f"exposure JSON: {exc}") from None


def save_side_assignment(assignment: SideAssignment, path) -> None:
    payload = {
        "proactive_ids": list(assignment.proactive_ids),
        "reactive_ids": list(assignment.reactive_ids),
    }
    with atomic_open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_side_assignment(path) -> SideAssignment:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"side-assignment JSON: {exc}") from None
    try:
        return SideAssignment(
            proactive_ids=tuple(payload["proactive_ids"]),
            reactive_ids=tuple(payload["reactive_ids"]),
        )
    except (KeyError, TypeError, ContractViolation) as exc:
        raise DataFormatError(f"side-assignment JSON: {exc}") from None
