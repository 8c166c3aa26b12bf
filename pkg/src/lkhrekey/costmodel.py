"""Rekeying cost, balance coefficient and the lifted objective.

Joiner ``j`` is placed either below a remaining leaf (``x[i, j] = 1``) or into
a departed slot (``y[k, j] = 1``).  Every quantity below depends on the
placement only through the row counts of ``x`` and ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .keytree import RekeyInstance


class InfeasibleAssignmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Assignment:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
            raise InfeasibleAssignmentError(f"bad shapes x{x.shape} y{y.shape}")
        if ((x != 0) & (x != 1)).any() or ((y != 0) & (y != 1)).any():
            raise InfeasibleAssignmentError("entries must be 0 or 1")
        cols = x.sum(axis=0) + y.sum(axis=0)
        if (cols != 1).any():
            bad = int(np.flatnonzero(cols != 1)[0])
            raise InfeasibleAssignmentError(f"joiner {bad} is placed {int(cols[bad])} times")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)

    __hash__ = None

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def insert_counts(self) -> np.ndarray:
        return self.x.sum(axis=1)

    @property
    def replace_counts(self) -> np.ndarray:
        return self.y.sum(axis=1)

    def check(self, instance: RekeyInstance) -> None:
        if self.x.shape != (instance.l1, instance.m) or self.y.shape != (instance.l2, instance.m):
            raise InfeasibleAssignmentError(
                f"assignment shapes x{self.x.shape} y{self.y.shape} do not match "
                f"instance (l1={instance.l1}, l2={instance.l2}, m={instance.m})"
            )

    @classmethod
    def from_counts(cls, insert_counts: Sequence[int], replace_counts: Sequence[int]) -> "Assignment":
        """Place joiners in order: first below remaining leaves, then into slots."""
        ins = np.asarray(insert_counts, dtype=np.int64)
        rep = np.asarray(replace_counts, dtype=np.int64)
        if (ins < 0).any() or (rep < 0).any():
            raise InfeasibleAssignmentError("counts must be nonnegative")
        m = int(ins.sum() + rep.sum())
        rows = np.repeat(np.arange(len(ins) + len(rep)), np.concatenate([ins, rep]))
        z = np.zeros((len(ins) + len(rep), m), dtype=np.int64)
        z[rows, np.arange(m)] = 1
        return cls(z[: len(ins)], z[len(ins):])

    @classmethod
    def empty(cls, instance: RekeyInstance) -> "Assignment":
        return cls(np.zeros((instance.l1, 0)), np.zeros((instance.l2, 0)))


@dataclass(frozen=True, eq=False)
class LiftedPoint:
    """A point of the relaxed lifted model (all entries in [0, 1])."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("x", "y", "u", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.y.ravel(), self.u, self.v])

    def is_binary(self, tol: float = 0.0) -> bool:
        z = self.flat()
        return bool(np.all(np.minimum(np.abs(z), np.abs(1 - z)) <= tol))

    def in_delta(self, instance: RekeyInstance, tol: float = 1e-9) -> bool:
        m = instance.m
        if self.x.shape != (instance.l1, m) or self.y.shape != (instance.l2, m):
            return False
        if self.u.shape != (instance.l1,) or self.v.shape != (instance.l2,):
            return False
        z = self.flat()
        if (z < -tol).any() or (z > 1 + tol).any():
            return False
        if m and np.abs(self.x.sum(axis=0) + self.y.sum(axis=0) - 1).max() > tol:
            return False
        if (self.x.sum(axis=1) > m * self.u + tol).any():
            return False
        return not (self.y.sum(axis=1) < self.v - tol).any()


Point = Union[Assignment, LiftedPoint]


def per_node_insertion_cost(d_i: int, m_i: int) -> int:
    return 0 if m_i == 0 else d_i + 2 * m_i - 1


def per_node_departure_cost(d_k: int, m_k: int) -> int:
    return d_k - 1 if m_k == 0 else (d_k - 1) + 2 * m_k - 1


def _feasible(instance: RekeyInstance, assignment: Assignment) -> Assignment:
    if not isinstance(assignment, Assignment):
        raise TypeError("expected an Assignment")
    assignment.check(instance)
    return assignment


def forced_deletion_term(instance: RekeyInstance) -> int:
    return int((instance.depths_departing - 1).sum())


def total_cost(instance: RekeyInstance, assignment: Assignment) -> int:
    """Approximate rekeying cost (overlapping keys counted per path)."""
    a = _feasible(instance, assignment)
    used_ins = a.insert_counts > 0
    used_rep = a.replace_counts > 0
    return int(
        forced_deletion_term(instance)
        + ((instance.depths_remaining - 1) * used_ins).sum()
        - used_rep.sum()
        + 2 * instance.m
    )


def positions(instance: RekeyInstance, point: Point) -> np.ndarray:
    """Index surrogates ``L'[i](m_i + 1)`` and ``A[k]/2 (m_k + 1)`` of every leaf."""
    ins = np.asarray(point.x, dtype=float).sum(axis=1)
    rep = np.asarray(point.y, dtype=float).sum(axis=1)
    return np.concatenate([
        np.asarray(instance.remaining, dtype=float) * (ins + 1),
        np.asarray(instance.departing, dtype=float) / 2 * (rep + 1),
    ])


def balance_coefficient(instance: RekeyInstance, point: Point) -> float:
    pos = positions(instance, point)
    if pos.size == 0:
        return 0.0
    return float(pos.max() - pos.min())


def step_cost(instance: RekeyInstance, assignment: Assignment) -> int:
    """The assignment-dependent cost part: sum (d_i - 1)|m_i|_0 - sum |m_k|_0."""
    a = _feasible(instance, assignment)
    return int(
        ((instance.depths_remaining - 1) * (a.insert_counts > 0)).sum()
        - (a.replace_counts > 0).sum()
    )


def objective(instance: RekeyInstance, assignment: Assignment, lam: float) -> float:
    """Combinatorial objective: step costs plus ``lam`` times the balance coefficient."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return step_cost(instance, assignment) + lam * balance_coefficient(instance, assignment)


def lift(assignment: Assignment) -> LiftedPoint:
    return LiftedPoint(
        x=assignment.x.astype(float),
        y=assignment.y.astype(float),
        u=(assignment.insert_counts > 0).astype(float),
        v=(assignment.replace_counts > 0).astype(float),
    )


def spread_term(instance: RekeyInstance, point: Point) -> float:
    """max(pos) + max(-pos), the epigraph form of the balance coefficient."""
    pos = positions(instance, point)
    if pos.size == 0:
        return 0.0
    return float(pos.max() + (-pos).max())


def lifted_objective(instance: RekeyInstance, point: LiftedPoint, lam: float) -> float:
    if not point.in_delta(instance):
        raise InfeasibleAssignmentError("point lies outside the lifted feasible set")
    return float(
        ((instance.depths_remaining - 1) * point.u).sum()
        - point.v.sum()
        + lam * spread_term(instance, point)
    )


def penalty_p(point: LiftedPoint) -> float:
    z = point.flat()
    return float(np.minimum(z, 1 - z).sum())
