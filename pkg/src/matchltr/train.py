"""Training loop, checkpoint selection, and the cross-validated experiment driver.

Training is plain constant-rate SGD over user-level minibatches of the
listwise loss.  After every epoch the model ranks the validation block with
its mutual score and the configured validation estimator is evaluated; the
checkpoint returned is the epoch with the best validation value.  The
experiment driver sweeps (eta, fold, method) cells and scores each trained
model on the held-out test block with true-relevance DCG.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import (
    ContractViolation,
    DataFormatError,
    DivergenceError,
    FoldPlan,
    PreferenceMatrix,
    RankedList,
    SideAssignment,
)
from .metrics import (
    EstimatorKind,
    EvalRecord,
    LambdaWeight,
    dcg_at_k,
    dcg_from_gains,
    estimate_metric,
    rank_candidates,
)
from .ranker import (
    GradientTables,
    LossKind,
    RankerModel,
    accumulate_gradient,
    init_model,
    score_matrix,
)
from .simulate import FeedbackDataset, exposure_from_popularity, make_folds, sample_dataset
from .util import atomic_open, derive_seed, format_float


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``validation_metric_kind=None`` selects the estimator paired with the
    loss: conventional -> naive, one-sided -> one-sided, two-sided -> two-sided.
    """

    loss_kind: LossKind = LossKind.CONVENTIONAL
    validation_metric_kind: EstimatorKind | None = None
    dim: int = 64
    learning_rate: float = 0.05
    epochs: int = 200
    batch: int = 32
    seed: int = 0
    k_valid: int = 10
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 0 or self.batch < 1 or self.k_valid < 1:
            raise ContractViolation("dim, batch and k_valid must be positive; epochs >= 0")
        if self.learning_rate <= 0:
            raise ContractViolation(f"learning rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ContractViolation("weight decay must be non-negative")

    @property
    def resolved_validation_kind(self) -> EstimatorKind:
        if self.validation_metric_kind is not None:
            return self.validation_metric_kind
        return self.loss_kind.paired_metric


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    valid_metric: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def best_epoch(self) -> int | None:
        """Epoch of the (first) maximal validation metric; None for an empty log."""
        if not self.records:
            return None
        best = max(range(len(self.records)), key=lambda i: (self.records[i].valid_metric, -i))
        return self.records[best].epoch

    @property
    def best_valid_metric(self) -> float | None:
        if not self.records:
            return None
        return max(r.valid_metric for r in self.records)


def save_training_log(log: TrainingLog, path) -> None:
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "train_loss", "valid_metric"))
        for r in log.records:
            writer.writerow((r.epoch, format_float(r.train_loss), format_float(r.valid_metric)))


def load_training_log(path) -> TrainingLog:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "train_loss", "valid_metric"]:
            raise DataFormatError("training log CSV: expected header epoch,train_loss,valid_metric")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(EpochRecord(int(row[0]), float(row[1]), float(row[2])))
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"training log CSV: line {lineno}: {exc}") from None
    return TrainingLog(records=records)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _per_user_training_data(dataset: FeedbackDataset):
    """Candidate lists and aligned feedback/propensity vectors, train block only."""
    plan = dataset.fold_plan
    train_mask = plan.train_mask()
    y_fwd = dataset.dense("y_fwd")
    y_bwd = dataset.dense("y_bwd")
    t_fwd = dataset.dense("theta_fwd")
    t_bwd = dataset.dense("theta_bwd")
    per_user = []
    for u in range(plan.n_proactive):
        cands = np.nonzero(train_mask[u])[0]
        rows = (y_fwd[u, cands], y_bwd[u, cands], t_fwd[u, cands], t_bwd[u, cands])
        if any(not np.all(np.isfinite(r)) for r in rows):
            raise ContractViolation(
                f"user {u} has unobserved pairs inside the training block"
            )
        per_user.append((cands, *rows))
    return per_user


def _validation_context(dataset: FeedbackDataset):
    plan = dataset.fold_plan
    val_users = np.asarray(plan.proactive_folds[plan.validation_fold], dtype=np.intp)
    val_cands = np.asarray(plan.reactive_folds[plan.validation_fold], dtype=np.intp)
    return (
        val_users,
        val_cands,
        dataset.dense("y_fwd"),
        dataset.dense("y_bwd"),
        dataset.dense("theta_fwd"),
        dataset.dense("theta_bwd"),
    )


def validation_metric(
    model: RankerModel,
    dataset: FeedbackDataset,
    kind: EstimatorKind,
    k: int,
    _ctx=None,
) -> float:
    """Estimator value on the validation block, ranking candidates by mutual score."""
    val_users, val_cands, y_fwd, y_bwd, t_fwd, t_bwd = _ctx or _validation_context(dataset)
    scores = score_matrix(model, val_users, val_cands)
    order = rank_candidates(scores)
    rankings = [
        RankedList.from_indices(int(u), val_cands[order[i]])
        for i, u in enumerate(val_users)
    ]
    weight = LambdaWeight(k=k)
    return estimate_metric(kind, rankings, y_fwd, y_bwd, t_fwd, t_bwd, weight).value


def train_model(dataset: FeedbackDataset, cfg: TrainConfig) -> tuple[RankerModel, TrainingLog]:
    """SGD-train a ranker and return the checkpoint with the best validation value.

    The log holds one record per epoch (mean per-user training loss as
    encountered during the epoch, then the post-epoch validation metric).
    With ``epochs=0`` the freshly initialized model is returned unchanged.
    """
    plan = dataset.fold_plan
    model = init_model(plan.n_proactive, plan.n_reactive, cfg.dim, derive_seed(cfg.seed, "init"))
    log = TrainingLog()
    if cfg.epochs == 0:
        return model, log

    per_user = _per_user_training_data(dataset)
    val_ctx = _validation_context(dataset)
    metric_kind = cfg.resolved_validation_kind
    rng = np.random.default_rng(derive_seed(cfg.seed, "epochs"))
    tables = ("w_pro_fwd", "w_rea_fwd", "w_pro_bwd", "w_rea_bwd")

    best_model = None
    best_value = -np.inf
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(plan.n_proactive)
        loss_sum = 0.0
        for start in range(0, order.size, cfg.batch):
            batch = order[start:start + cfg.batch]
            grads = GradientTables.zeros_like(model)
            for u in batch:
                cands, yf, yb, tf, tb = per_user[u]
                loss_sum += accumulate_gradient(
                    model, int(u), cands, yf, yb, tf, tb, cfg.loss_kind, grads
                )
            grads.scale(1.0 / batch.size)
            for name in tables:
                table = getattr(model, name)
                if cfg.weight_decay > 0.0:
                    table *= 1.0 - cfg.learning_rate * cfg.weight_decay
                table -= cfg.learning_rate * getattr(grads, name)
        train_loss = loss_sum / plan.n_proactive
        if not np.isfinite(train_loss):
            raise DivergenceError(
                f"non-finite training loss at epoch {epoch} "
                f"(learning rate {cfg.learning_rate})"
            )
        value = validation_metric(model, dataset, metric_kind, cfg.k_valid, val_ctx)
        if not np.isfinite(value):
            raise DivergenceError(
                f"non-finite validation metric at epoch {epoch} "
                f"(learning rate {cfg.learning_rate})"
            )
        log.records.append(EpochRecord(epoch=epoch, train_loss=train_loss, valid_metric=value))
        if value > best_value:
            best_value = value
            best_model = model.copy()

    return best_model, log


# ---------------------------------------------------------------------------
# test evaluation
# ---------------------------------------------------------------------------

def expected_dcg_gain(m_fwd: np.ndarray, m_bwd: np.ndarray) -> np.ndarray:
    """Exact expectation of ``2**(R_fwd*(1+R_bwd))`` under Bernoulli relevance."""
    m_fwd = np.asarray(m_fwd, dtype=np.float64)
    m_bwd = np.asarray(m_bwd, dtype=np.float64)
    return (1.0 - m_fwd) + 2.0 * m_fwd * (1.0 - m_bwd) + 4.0 * m_fwd * m_bwd


def test_dcg_records(
    model: RankerModel,
    m: PreferenceMatrix,
    plan: FoldPlan,
    eta: float,
    method: str,
    k_values: Sequence[int],
    labels_seed: int,
    label_mode: str = "sampled",
) -> list[EvalRecord]:
    """Score the test block with mutual scores and report DCG@K rows.

    ``label_mode="sampled"`` draws test relevance bits from the preference
    matrix (seeded per fold, so every method sees the same labels);
    ``"expected"`` uses the exact expected gain instead of sampled bits.
    """
    test_users = np.asarray(plan.proactive_folds[plan.test_fold], dtype=np.intp)
    test_cands = np.asarray(plan.reactive_folds[plan.test_fold], dtype=np.intp)
    scores = score_matrix(model, test_users, test_cands)
    block = np.ix_(test_users, test_cands)

    if label_mode == "sampled":
        rng = np.random.default_rng(labels_seed)
        r_fwd = (rng.random(m.forward.shape) < m.forward)[block]
        r_bwd = (rng.random(m.backward.shape) < m.backward)[block]
    elif label_mode == "expected":
        gains = expected_dcg_gain(m.forward[block], m.backward[block])
    else:
        raise ContractViolation(f"unknown label mode {label_mode!r}")

    records = []
    for k in k_values:
        if label_mode == "sampled":
            per_user = dcg_at_k(scores, r_fwd, r_bwd, k)
        else:
            per_user = dcg_from_gains(scores, gains, k)
        n = per_user.shape[0]
        stderr = float(per_user.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        records.append(EvalRecord(
            fold=plan.test_fold,
            eta=float(eta),
            method=method,
            k=int(k),
            dcg_mean=float(per_user.mean()),
            dcg_stderr=stderr,
            n_users=int(n),
        ))
    return records


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentPlan:
    """Grid of the cross-validated comparison: exposure strengths x folds x cutoffs.

    ``folds`` is the cross-validation fold count; ``test_folds`` optionally
    restricts which of them are actually run as the test fold (all by default).
    """

    etas: tuple[float, ...]
    folds: int = 5
    k_values: tuple[int, ...] = (3, 10, 20, 30)
    seeds: tuple[int, ...] = (0,)
    test_folds: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.test_folds is not None:
            object.__setattr__(self, "test_folds", tuple(int(f) for f in self.test_folds))
        if not self.etas or not self.k_values or not self.seeds:
            raise ContractViolation("etas, k_values and seeds must be non-empty")
        if self.folds < 2:
            raise ContractViolation(f"folds must be >= 2, got {self.folds}")
        if min(self.k_values) < 1:
            raise ContractViolation("cutoffs must be positive")
        if self.test_folds is not None:
            if not self.test_folds:
                raise ContractViolation("test_folds must be non-empty when given")
            if min(self.test_folds) < 0 or max(self.test_folds) >= self.folds:
                raise ContractViolation("test_folds must lie in [0, folds)")

    @property
    def folds_to_run(self) -> tuple[int, ...]:
        return self.test_folds if self.test_folds is not None else tuple(range(self.folds))


def default_method_configs(base: TrainConfig | None = None) -> dict[LossKind, TrainConfig]:
    """One config per loss variant, sharing every other hyperparameter."""
    base = base or TrainConfig()
    return {kind: replace(base, loss_kind=kind, validation_metric_kind=None) for kind in LossKind}


def run_experiment(
    m: PreferenceMatrix,
    plan: ExperimentPlan,
    cfgs: Mapping[LossKind, TrainConfig] | None = None,
    assignment: SideAssignment | None = None,
    label_mode: str = "sampled",
    progress=None,
) -> list[EvalRecord]:
    """Run the full (seed, eta, fold, method) grid and collect DCG records.

    Folds are drawn once per seed and the test fold rotates through them.
    Test labels depend only on (seed, fold), so all methods and etas of a
    fold are scored against identical relevance draws.  Per-cell training
    seeds are derived from the plan seed; ``cfg.seed`` is ignored here.
    """
    cfgs = cfgs or default_method_configs()
    assignment = assignment or SideAssignment.trivial(m.n_proactive, m.n_reactive)
    records: list[EvalRecord] = []
    for seed in plan.seeds:
        base_folds = make_folds(assignment, plan.folds, derive_seed(seed, "folds"))
        for eta in plan.etas:
            exposure = exposure_from_popularity(m, eta)
            for fold in plan.folds_to_run:
                fplan = base_folds.with_test_fold(fold)
                dataset = sample_dataset(
                    m, exposure, fplan,
                    derive_seed(seed, f"sampling:eta={eta!r}:fold={fold}"),
                )
                labels_seed = derive_seed(seed, f"test-labels:fold={fold}")
                for kind, cfg in cfgs.items():
                    cell_cfg = replace(
                        cfg,
                        loss_kind=kind,
                        seed=derive_seed(seed, f"train:eta={eta!r}:fold={fold}:method={kind.value}"),
                    )
                    model, _ = train_model(dataset, cell_cfg)
                    records.extend(test_dcg_records(
                        model, m, fplan, eta, kind.value, plan.k_values,
                        labels_seed, label_mode,
                    ))
                    if progress is not None:
                        progress(seed=seed, eta=eta, fold=fold, method=kind.value)
    return records


# ---------------------------------------------------------------------------
# experiment config files
# ---------------------------------------------------------------------------

def save_experiment_config(
    plan: ExperimentPlan, cfgs: Mapping[LossKind, TrainConfig], path
) -> None:
    """Persist a plan plus per-method hyperparameters as JSON."""
    payload = {
        "eta_list": list(plan.etas),
        "folds": plan.folds,
        "K_list": list(plan.k_values),
        "seeds": list(plan.seeds),
        "test_folds": None if plan.test_folds is None else list(plan.test_folds),
        "methods": {
            kind.value: {
                "learning_rate": cfg.learning_rate,
                "epochs": cfg.epochs,
                "dim": cfg.dim,
                "batch": cfg.batch,
                "k_valid": cfg.k_valid,
                "weight_decay": cfg.weight_decay,
            }
            for kind, cfg in cfgs.items()
        },
    }
    with atomic_open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_experiment_config(path) -> tuple[ExperimentPlan, dict[LossKind, TrainConfig]]:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"experiment config JSON: {exc}") from None
    try:
        test_folds = payload.get("test_folds")
        plan = ExperimentPlan(
            etas=tuple(payload["eta_list"]),
            folds=int(payload["folds"]),
            k_values=tuple(payload["K_list"]),
            seeds=tuple(payload["seeds"]),
            test_folds=None if test_folds is None else tuple(test_folds),
        )
        cfgs = {}
        for name, entry in payload["methods"].items():
            kind = LossKind(name)
            cfgs[kind] = TrainConfig(
                loss_kind=kind,
                learning_rate=float(entry["learning_rate"]),
                epochs=int(entry["epochs"]),
                dim=int(entry["dim"]),
                batch=int(entry.get("batch", 32)),
                k_valid=int(entry.get("k_valid", 10)),
                weight_decay=float(entry.get("weight_decay", 0.0)),
            )
    except (KeyError, TypeError, ValueError, ContractViolation) as exc:
        raise DataFormatError(f"experiment config JSON: {exc}") from None
    return plan, cfgs
