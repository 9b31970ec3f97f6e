"""Domain types for two-sided matching markets.

A market has a proactive side (users who browse and select first) and a
reactive side (users who respond to selections).  Everything downstream --
simulation, estimators, rankers -- is expressed over these types.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class MatchLtrError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(MatchLtrError):
    """An argument violated a documented precondition."""


class MissingItemError(MatchLtrError, KeyError):
    """A user id was looked up in a ranked list that does not contain it."""


class InvalidPopulationError(MatchLtrError, ValueError):
    """A population is too small to be split into two sides."""


class FoldInfeasibleError(MatchLtrError, ValueError):
    """A side has fewer users than the requested number of folds."""


class AssumptionViolationError(MatchLtrError, ValueError):
    """An exposure probability left the required (0, 1] range."""


class UndefinedAverageError(MatchLtrError, ValueError):
    """A per-user average was requested over an empty user set."""


class DataFormatError(MatchLtrError, ValueError):
    """A file did not parse against its documented schema."""


class DivergenceError(MatchLtrError, RuntimeError):
    """Training produced a non-finite loss."""


class Side(enum.Enum):
    PROACTIVE = "proactive"
    REACTIVE = "reactive"


@dataclass(frozen=True)
class UserId:
    """A user on one side of the market, identified by a dense per-side index."""

    side: Side
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ContractViolation(f"user index must be non-negative, got {self.index}")


def proactive(index: int) -> UserId:
    return UserId(Side.PROACTIVE, index)


def reactive(index: int) -> UserId:
    return UserId(Side.REACTIVE, index)


@dataclass(frozen=True)
class PreferenceMatrix:
    """Ground-truth mutual preference probabilities between the two sides.

    ``forward[u, v]`` is the probability that proactive user ``u`` finds
    reactive user ``v`` relevant; ``backward[u, v]`` is the probability that
    ``v`` finds ``u`` relevant.  Both matrices are ``n_proactive x n_reactive``
    with entries in [0, 1].
    """

    forward: np.ndarray
    backward: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.float64)
        bwd = np.asarray(self.backward, dtype=np.float64)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "backward", bwd)
        if fwd.ndim != 2 or bwd.shape != fwd.shape:
            raise ContractViolation(
                f"forward and backward must be 2-d with identical shape, "
                f"got {fwd.shape} and {bwd.shape}"
            )
        for name, m in (("forward", fwd), ("backward", bwd)):
            if not np.all(np.isfinite(m)):
                raise ContractViolation(f"{name} preferences contain non-finite entries")
            if m.size and (m.min() < 0.0 or m.max() > 1.0):
                raise ContractViolation(f"{name} preferences must lie in [0, 1]")

    @property
    def n_proactive(self) -> int:
        return self.forward.shape[0]

    @property
    def n_reactive(self) -> int:
        return self.forward.shape[1]

    @staticmethod
    def from_square(m: np.ndarray) -> "PreferenceMatrix":
        """View a square all-users preference matrix as a two-sided matrix.

        ``m[i, j]`` is the preference of user ``i`` for user ``j`` over a single
        population; before side assignment every user plays both roles, so the
        forward block is ``m`` itself and the backward block is ``m.T``.
        Restrict with :meth:`restrict` once sides are assigned.
        """
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractViolation(f"expected a square matrix, got shape {m.shape}")
        return PreferenceMatrix(forward=m, backward=m.T.copy())

    def restrict(self, assignment: "SideAssignment") -> "PreferenceMatrix":
        """Select the rows/columns of an all-users matrix for an assignment.

        Only meaningful for matrices built with :meth:`from_square`, where both
        axes still index the original population.
        """
        pro = np.asarray(assignment.proactive_ids)
        rea = np.asarray(assignment.reactive_ids)
        return PreferenceMatrix(
            forward=self.forward[np.ix_(pro, rea)],
            backward=self.backward[np.ix_(pro, rea)],
        )


@dataclass(frozen=True)
class SideAssignment:
    """Partition of an original user population into proactive and reactive sides.

    The tuples hold original population indices; position within a tuple is the
    dense side-local index used everywhere else.
    """

    proactive_ids: tuple[int, ...]
    reactive_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "proactive_ids", tuple(int(i) for i in self.proactive_ids))
        object.__setattr__(self, "reactive_ids", tuple(int(i) for i in self.reactive_ids))
        overlap = set(self.proactive_ids) & set(self.reactive_ids)
        if overlap:
            raise ContractViolation(f"sides must be disjoint, shared ids: {sorted(overlap)[:5]}")
        n = len(self.proactive_ids) + len(self.reactive_ids)
        if set(self.proactive_ids) | set(self.reactive_ids) != set(range(n)):
            raise ContractViolation("sides must cover the original population 0..n-1 exactly")

    @property
    def n_proactive(self) -> int:
        return len(self.proactive_ids)

    @property
    def n_reactive(self) -> int:
        return len(self.reactive_ids)

    @staticmethod
    def trivial(n_proactive: int, n_reactive: int) -> "SideAssignment":
        """Identity assignment for data born two-sided (e.g. synthetic matrices)."""
        return SideAssignment(
            proactive_ids=tuple(range(n_proactive)),
            reactive_ids=tuple(range(n_proactive, n_proactive + n_reactive)),
        )


@dataclass(frozen=True)
class FoldPlan:
    """Cross-validation folds over both sides, plus the active test fold.

    Each side is partitioned into ``k`` disjoint blocks of side-local indices.
    The test block is the cartesian product of the two ``test_fold`` blocks;
    the validation block is the product of the two ``(test_fold + 1) % k``
    blocks; every remaining pair is training data.
    """

    k: int
    proactive_folds: tuple[tuple[int, ...], ...]
    reactive_folds: tuple[tuple[int, ...], ...]
    test_fold: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "proactive_folds", tuple(tuple(int(i) for i in f) for f in self.proactive_folds)
        )
        object.__setattr__(
            self, "reactive_folds", tuple(tuple(int(i) for i in f) for f in self.reactive_folds)
        )
        if self.k < 2:
            raise ContractViolation(f"fold count must be >= 2, got {self.k}")
        if len(self.proactive_folds) != self.k or len(self.reactive_folds) != self.k:
            raise ContractViolation("number of blocks must equal k on both sides")
        if not (0 <= self.test_fold < self.k):
            raise ContractViolation(f"test_fold must lie in [0, {self.k}), got {self.test_fold}")
        for name, folds in (("proactive", self.proactive_folds), ("reactive", self.reactive_folds)):
            flat = [i for f in folds for i in f]
            n = len(flat)
            if sorted(flat) != list(range(n)):
                raise ContractViolation(f"{name} blocks must partition 0..{n - 1}")

    @property
    def n_proactive(self) -> int:
        return sum(len(f) for f in self.proactive_folds)

    @property
    def n_reactive(self) -> int:
        return sum(len(f) for f in self.reactive_folds)

    @property
    def validation_fold(self) -> int:
        return (self.test_fold + 1) % self.k

    def with_test_fold(self, test_fold: int) -> "FoldPlan":
        """Same partition, different active test fold."""
        return FoldPlan(
            k=self.k,
            proactive_folds=self.proactive_folds,
            reactive_folds=self.reactive_folds,
            test_fold=test_fold,
        )

    def fold_of_proactive(self) -> np.ndarray:
        """Vector mapping each proactive user to its fold index."""
        out = np.empty(self.n_proactive, dtype=np.intp)
        for f, block in enumerate(self.proactive_folds):
            out[list(block)] = f
        return out

    def fold_of_reactive(self) -> np.ndarray:
        out = np.empty(self.n_reactive, dtype=np.intp)
        for f, block in enumerate(self.reactive_folds):
            out[list(block)] = f
        return out

    def _block_mask(self, fold: int) -> np.ndarray:
        mask = np.zeros((self.n_proactive, self.n_reactive), dtype=bool)
        rows = np.asarray(self.proactive_folds[fold], dtype=np.intp)
        cols = np.asarray(self.reactive_folds[fold], dtype=np.intp)
        mask[np.ix_(rows, cols)] = True
        return mask

    def test_mask(self) -> np.ndarray:
        """Boolean (n_proactive, n_reactive) matrix marking held-out test pairs."""
        return self._block_mask(self.test_fold)

    def validation_mask(self) -> np.ndarray:
        return self._block_mask(self.validation_fold)

    def train_mask(self) -> np.ndarray:
        return ~(self.test_mask() | self.validation_mask())


@dataclass(frozen=True)
class PairObservation:
    """One sampled (relevance, exposure, feedback) realization for a pair.

    Feedback composes as ``y_forward = o_forward * r_forward`` and
    ``y_backward = y_forward * o_backward * r_backward``: the reactive side can
    only respond to a proactive selection it was actually exposed to.
    """

    u: UserId
    v: UserId
    r_forward: int
    r_backward: int
    o_forward: int
    o_backward: int
    y_forward: int
    y_backward: int
    theta_forward: float
    theta_backward: float

    def __post_init__(self):
        if self.u.side is not Side.PROACTIVE or self.v.side is not Side.REACTIVE:
            raise ContractViolation("u must be proactive and v reactive")
        bits = {
            "r_forward": self.r_forward,
            "r_backward": self.r_backward,
            "o_forward": self.o_forward,
            "o_backward": self.o_backward,
            "y_forward": self.y_forward,
            "y_backward": self.y_backward,
        }
        for name, b in bits.items():
            if b not in (0, 1):
                raise ContractViolation(f"{name} must be a bit, got {b!r}")
        if self.y_forward != self.o_forward * self.r_forward:
            raise ContractViolation("y_forward must equal o_forward * r_forward")
        if self.y_backward != self.y_forward * self.o_backward * self.r_backward:
            raise ContractViolation(
                "y_backward must equal y_forward * o_backward * r_backward"
            )
        for name, t in (("theta_forward", self.theta_forward), ("theta_backward", self.theta_backward)):
            if not (0.0 < t <= 1.0):
                raise AssumptionViolationError(f"{name} must lie in (0, 1], got {t}")


@dataclass(frozen=True)
class RankedList:
    """A full ranking of reactive users shown to one proactive user.

    Positions are 1-based; ``entries[0]`` is rank 1.
    """

    owner: UserId
    entries: tuple[UserId, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.owner.side is not Side.PROACTIVE:
            raise ContractViolation("ranked-list owner must be a proactive user")
        indices = [e.index for e in self.entries]
        for e in self.entries:
            if e.side is not Side.REACTIVE:
                raise ContractViolation("ranked-list entries must be reactive users")
        if len(set(indices)) != len(indices):
            raise ContractViolation("ranked list contains duplicate entries")

    @staticmethod
    def from_indices(owner_index: int, entry_indices) -> "RankedList":
        return RankedList(
            owner=proactive(owner_index),
            entries=tuple(reactive(int(j)) for j in entry_indices),
        )

    def __len__(self) -> int:
        return len(self.entries)

    def entry_indices(self) -> np.ndarray:
        """Reactive indices in rank order, as an array."""
        return np.fromiter((e.index for e in self.entries), dtype=np.intp, count=len(self.entries))


def rank_of(ranked: RankedList, v: UserId) -> int:
    """1-based position of ``v`` in a ranked list.

    Raises :class:`MissingItemError` if ``v`` is not listed.
    """
    for pos, entry in enumerate(ranked.entries, start=1):
        if entry == v:
            return pos
    raise MissingItemError(f"user {v} does not appear in the list shown to {ranked.owner}")
