"""Ranking metrics for two-sided feedback and their debiased estimators.

The ground-truth metric averages, over proactive users, a position-discounted
gain of the pair's mutual relevance.  Because logged feedback is censored by
exposure on both sides, the naive plug-in estimator is biased; the one-sided
inverse-propensity estimator corrects only the proactive side; the two-sided
estimator reweights the backward part of the gain by both exposure
probabilities and is exactly unbiased (verified here by closed-form
enumeration over the four exposure outcomes of each pair).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    AssumptionViolationError,
    ContractViolation,
    DataFormatError,
    RankedList,
    UndefinedAverageError,
)
from .util import atomic_open, format_float


class EstimatorKind(enum.Enum):
    """Which plug-in estimator of the ranking metric to evaluate."""

    NAIVE = "naive"
    IPW1 = "ipw1"
    IPW2 = "ipw2"


class WeightKind(enum.Enum):
    DCG_CUTOFF = "dcg_cutoff"


@dataclass(frozen=True)
class LambdaWeight:
    """Rank-discount weight: ``1 / log2(rank + 1)`` up to a cutoff, 0 beyond.

    With this weight the metric is a truncated discounted cumulative gain.
    """

    k: int
    kind: WeightKind = WeightKind.DCG_CUTOFF

    def __post_init__(self):
        if self.k < 1:
            raise ContractViolation(f"cutoff must be a positive integer, got {self.k}")

    def weights(self, ranks: np.ndarray) -> np.ndarray:
        ranks = np.asarray(ranks, dtype=np.float64)
        if ranks.size and ranks.min() < 1:
            raise ContractViolation("ranks are 1-based and must be >= 1")
        return np.where(ranks <= self.k, 1.0 / np.log2(ranks + 1.0), 0.0)


def lambda_weight(w: LambdaWeight, rank: int) -> float:
    """Discount applied to a single 1-based rank."""
    if rank < 1:
        raise ContractViolation(f"rank must be >= 1, got {rank}")
    return float(w.weights(np.asarray([rank]))[0])


# ---------------------------------------------------------------------------
# gain functions
# ---------------------------------------------------------------------------

def _as_bits(name: str, x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and not np.isin(arr, (0.0, 1.0)).all():
        raise ContractViolation(f"{name} must contain bits (0 or 1)")
    return arr


def _maybe_scalar(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


def gain_true(r_fwd, r_bwd):
    """Gain of true relevance: ``2**(r_fwd * (1 + r_bwd)) - 1`` (0, 1 or 3)."""
    rf = _as_bits("r_fwd", r_fwd)
    rb = _as_bits("r_bwd", r_bwd)
    return _maybe_scalar(np.exp2(rf * (1.0 + rb)) - 1.0)


def gain_surrogate(y_fwd, y_bwd):
    """Observable gain ``2**(y_fwd + y_bwd) - 1`` built from implicit feedback.

    Requires feasible feedback: backward feedback implies forward feedback.
    """
    yf = _as_bits("y_fwd", y_fwd)
    yb = _as_bits("y_bwd", y_bwd)
    if np.any(yb > yf):
        raise ContractViolation("infeasible feedback: y_bwd = 1 requires y_fwd = 1")
    return _maybe_scalar(np.exp2(yf + yb) - 1.0)


def _check_theta(name: str, t, floor: float = 0.0) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() <= 0.0):
        raise AssumptionViolationError(f"{name} must be strictly positive and finite")
    if floor > 0.0:
        arr = np.maximum(arr, floor)
    return arr


def gain_ipw(y_fwd, y_bwd, theta_fwd, theta_bwd, theta_floor: float = 0.0):
    """Doubly-reweighted observable gain.

    The mutual part ``2**y_fwd * (2**y_bwd - 1)`` is divided by both exposure
    probabilities, the one-sided remainder ``2**y_fwd - 1`` by the forward one
    only.  With unit propensities this reduces to :func:`gain_surrogate`.
    ``theta_floor`` optionally clips propensities from below (variance control;
    off by default).
    """
    yf = _as_bits("y_fwd", y_fwd)
    yb = _as_bits("y_bwd", y_bwd)
    if np.any(yb > yf):
        raise ContractViolation("infeasible feedback: y_bwd = 1 requires y_fwd = 1")
    tf = _check_theta("theta_fwd", theta_fwd, theta_floor)
    tb = _check_theta("theta_bwd", theta_bwd, theta_floor)
    two_yf = np.exp2(yf)
    mutual = two_yf * (np.exp2(yb) - 1.0) / (tf * tb)
    one_sided = (two_yf - 1.0) / tf
    return _maybe_scalar(mutual + one_sided)


# ---------------------------------------------------------------------------
# list metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricValue:
    """A per-user-averaged metric and the number of users averaged over."""

    value: float
    n_users: int

    def __float__(self) -> float:
        return self.value


def _gather(pair_values: np.ndarray, ranked: RankedList, what: str) -> np.ndarray:
    values = np.asarray(pair_values, dtype=np.float64)
    if values.ndim != 2:
        raise ContractViolation(f"{what} must be a 2-d (proactive x reactive) array")
    idx = ranked.entry_indices()
    u = ranked.owner.index
    if u >= values.shape[0] or (idx.size and idx.max() >= values.shape[1]):
        raise ContractViolation(f"{what} does not cover the ranked pairs of user {u}")
    picked = values[u, idx]
    if not np.all(np.isfinite(picked)):
        raise ContractViolation(f"{what} has no value for some pair ranked for user {u}")
    return picked


def _user_average(rankings: Sequence[RankedList], per_user) -> MetricValue:
    if len(rankings) == 0:
        raise UndefinedAverageError("metric is an average over users; got no users")
    totals = np.empty(len(rankings))
    for i, ranked in enumerate(rankings):
        if len(ranked) == 0:
            raise UndefinedAverageError(
                f"user {ranked.owner.index} has an empty candidate list"
            )
        totals[i] = per_user(ranked)
    return MetricValue(value=float(totals.sum() / len(rankings)), n_users=len(rankings))


def _ranks(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64)


def metric_ground_truth(
    rankings: Sequence[RankedList],
    r_fwd: np.ndarray,
    r_bwd: np.ndarray,
    weight: LambdaWeight,
) -> MetricValue:
    """Position-discounted true mutual gain, averaged over users."""

    def one(ranked: RankedList) -> float:
        lam = weight.weights(_ranks(len(ranked)))
        g = gain_true(_gather(r_fwd, ranked, "r_fwd"), _gather(r_bwd, ranked, "r_bwd"))
        return float(lam @ g)

    return _user_average(rankings, one)


def metric_naive(
    rankings: Sequence[RankedList],
    y_fwd: np.ndarray,
    y_bwd: np.ndarray,
    weight: LambdaWeight,
) -> MetricValue:
    """Plug-in estimate that treats implicit feedback as if it were relevance."""

    def one(ranked: RankedList) -> float:
        lam = weight.weights(_ranks(len(ranked)))
        g = gain_surrogate(_gather(y_fwd, ranked, "y_fwd"), _gather(y_bwd, ranked, "y_bwd"))
        return float(lam @ g)

    return _user_average(rankings, one)


def metric_ipw1(
    rankings: Sequence[RankedList],
    y_fwd: np.ndarray,
    y_bwd: np.ndarray,
    theta_fwd: np.ndarray,
    weight: LambdaWeight,
    theta_floor: float = 0.0,
) -> MetricValue:
    """One-sided correction: the surrogate gain divided by forward exposure only."""

    def one(ranked: RankedList) -> float:
        lam = weight.weights(_ranks(len(ranked)))
        g = gain_surrogate(_gather(y_fwd, ranked, "y_fwd"), _gather(y_bwd, ranked, "y_bwd"))
        tf = _check_theta("theta_fwd", _gather(theta_fwd, ranked, "theta_fwd"), theta_floor)
        return float(lam @ (g / tf))

    return _user_average(rankings, one)


def metric_ipw2(
    rankings: Sequence[RankedList],
    y_fwd: np.ndarray,
    y_bwd: np.ndarray,
    theta_fwd: np.ndarray,
    theta_bwd: np.ndarray,
    weight: LambdaWeight,
    theta_floor: float = 0.0,
) -> MetricValue:
    """Two-sided correction: unbiased for the ground-truth metric."""

    def one(ranked: RankedList) -> float:
        lam = weight.weights(_ranks(len(ranked)))
        g = gain_ipw(
            _gather(y_fwd, ranked, "y_fwd"),
            _gather(y_bwd, ranked, "y_bwd"),
            _gather(theta_fwd, ranked, "theta_fwd"),
            _gather(theta_bwd, ranked, "theta_bwd"),
            theta_floor,
        )
        return float(lam @ g)

    return _user_average(rankings, one)


def estimate_metric(
    kind: EstimatorKind,
    rankings: Sequence[RankedList],
    y_fwd: np.ndarray,
    y_bwd: np.ndarray,
    theta_fwd: np.ndarray,
    theta_bwd: np.ndarray,
    weight: LambdaWeight,
    theta_floor: float = 0.0,
) -> MetricValue:
    """Dispatch to one of the three estimators with a uniform signature."""
    if kind is EstimatorKind.NAIVE:
        return metric_naive(rankings, y_fwd, y_bwd, weight)
    if kind is EstimatorKind.IPW1:
        return metric_ipw1(rankings, y_fwd, y_bwd, theta_fwd, weight, theta_floor)
    if kind is EstimatorKind.IPW2:
        return metric_ipw2(rankings, y_fwd, y_bwd, theta_fwd, theta_bwd, weight, theta_floor)
    raise ContractViolation(f"unknown estimator kind {kind!r}")


# ---------------------------------------------------------------------------
# exact expectation oracle
# ---------------------------------------------------------------------------

def expected_metric_exact(
    rankings: Sequence[RankedList],
    r_fwd: np.ndarray,
    r_bwd: np.ndarray,
    theta_fwd: np.ndarray,
    theta_bwd: np.ndarray,
    weight: LambdaWeight,
    which: EstimatorKind,
) -> float:
    """Exact expectation of an estimator over the exposure randomness.

    Relevance labels are held fixed; the two exposure bits of every pair are
    independent, so the expectation decomposes into a per-pair sum over the
    four (o_fwd, o_bwd) outcomes.  This is the reference against which
    (un)biasedness is checked.
    """
    if len(rankings) == 0:
        raise UndefinedAverageError("metric is an average over users; got no users")
    total = 0.0
    for ranked in rankings:
        if len(ranked) == 0:
            raise UndefinedAverageError(
                f"user {ranked.owner.index} has an empty candidate list"
            )
        rf = _as_bits("r_fwd", _gather(r_fwd, ranked, "r_fwd"))
        rb = _as_bits("r_bwd", _gather(r_bwd, ranked, "r_bwd"))
        tf = _check_theta("theta_fwd", _gather(theta_fwd, ranked, "theta_fwd"))
        tb = _check_theta("theta_bwd", _gather(theta_bwd, ranked, "theta_bwd"))
        if tf.max() > 1.0 or tb.max() > 1.0:
            raise AssumptionViolationError("exposure probabilities must lie in (0, 1]")
        expected = np.zeros_like(rf)
        for o_f in (0.0, 1.0):
            p_f = tf if o_f else 1.0 - tf
            y_f = o_f * rf
            for o_b in (0.0, 1.0):
                p_b = tb if o_b else 1.0 - tb
                y_b = y_f * o_b * rb
                if which is EstimatorKind.NAIVE:
                    g = gain_surrogate(y_f, y_b)
                elif which is EstimatorKind.IPW1:
                    g = gain_surrogate(y_f, y_b) / tf
                elif which is EstimatorKind.IPW2:
                    g = gain_ipw(y_f, y_b, tf, tb)
                else:
                    raise ContractViolation(f"unknown estimator kind {which!r}")
                expected += p_f * p_b * np.asarray(g, dtype=np.float64)
        lam = weight.weights(_ranks(len(ranked)))
        total += float(lam @ expected)
    return total / len(rankings)


# ---------------------------------------------------------------------------
# evaluation DCG
# ---------------------------------------------------------------------------

def rank_candidates(scores: np.ndarray) -> np.ndarray:
    """Column order of each row by descending score; ties keep ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] == 0:
        raise ContractViolation("scores must be 2-d with at least one candidate per user")
    if not np.all(np.isfinite(scores)):
        raise ContractViolation("scores must be finite")
    return np.argsort(-scores, axis=1, kind="stable")


def dcg_from_gains(scores: np.ndarray, gains: np.ndarray, k: int) -> np.ndarray:
    """Per-user discounted cumulative gain of the top-``k`` by score.

    ``gains[u, j]`` is the gain of candidate ``j`` for user ``u``.  With fewer
    than ``k`` candidates the sum runs over what is available.
    """
    if k < 1:
        raise ContractViolation(f"cutoff must be a positive integer, got {k}")
    order = rank_candidates(scores)
    gains = np.asarray(gains, dtype=np.float64)
    if gains.shape != order.shape:
        raise ContractViolation("gains must have the same shape as scores")
    depth = min(k, order.shape[1])
    top = np.take_along_axis(gains, order[:, :depth], axis=1)
    discounts = 1.0 / np.log2(np.arange(2, depth + 2, dtype=np.float64))
    return top @ discounts


def dcg_at_k(scores: np.ndarray, r_fwd: np.ndarray, r_bwd: np.ndarray, k: int) -> np.ndarray:
    """Test-time DCG with the exponential mutual-relevance gain ``2**(r_fwd*(1+r_bwd))``.

    Note the gain here keeps the ``+1`` floor (an irrelevant pair still
    contributes ``1/log2(rank+1)``), unlike the ``2**x - 1`` gain used by the
    estimator suite; this is the form used for test-set evaluation reports.
    """
    rf = _as_bits("r_fwd", r_fwd)
    rb = _as_bits("r_bwd", r_bwd)
    return dcg_from_gains(scores, np.exp2(rf * (1.0 + rb)), k)


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------

_REPORT_COLUMNS = ("fold", "eta", "method", "K", "dcg_mean", "dcg_stderr", "n_users")


@dataclass(frozen=True)
class EvalRecord:
    """One (fold, eta, method, K) cell of an evaluation report."""

    fold: int
    eta: float
    method: str
    k: int
    dcg_mean: float
    dcg_stderr: float
    n_users: int


def save_eval_report(records: Sequence[EvalRecord], path) -> None:
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh)
        writer.writerow(_REPORT_COLUMNS)
        for r in records:
            writer.writerow([
                r.fold, format_float(r.eta), r.method, r.k,
                format_float(r.dcg_mean), format_float(r.dcg_stderr), r.n_users,
            ])


def load_eval_report(path) -> list[EvalRecord]:
    records: list[EvalRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(_REPORT_COLUMNS):
            raise DataFormatError(
                f"eval report CSV: line 1: expected header {','.join(_REPORT_COLUMNS)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_REPORT_COLUMNS):
                raise DataFormatError(
                    f"eval report CSV: line {lineno}: expected "
                    f"{len(_REPORT_COLUMNS)} columns, got {len(row)}"
                )
            try:
                records.append(EvalRecord(
                    fold=int(row[0]), eta=float(row[1]), method=row[2], k=int(row[3]),
                    dcg_mean=float(row[4]), dcg_stderr=float(row[5]), n_users=int(row[6]),
                ))
            except ValueError as exc:
                raise DataFormatError(f"eval report CSV: line {lineno}: {exc}") from None
    return records
