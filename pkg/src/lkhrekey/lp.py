"""The linear subproblem solved at every DCA iteration.

Variables, in order: ``x`` (l1*m, row-major), ``y`` (l2*m), ``u`` (l1),
``v`` (l2), then the epigraph variables ``xi`` and ``mu`` for the largest
position and the largest negated position.  Rows, in order: m joiner
equalities, l1 + l2 linking rows, then 2(l1 + l2) epigraph rows.

The constraint matrix depends only on the instance; the subgradient only
moves the cost vector.  :class:`LpSession` exploits that by keeping one HiGHS
model alive and re-solving from the previous basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import highspy
import numpy as np
import scipy.sparse as sp

from .costmodel import LiftedPoint
from .keytree import RekeyInstance

INF = highspy.kHighsInf
SNAP_TOL = 1e-9


class LpError(RuntimeError):
    """HiGHS reported something other than an optimum."""


@dataclass(frozen=True)
class Layout:
    l1: int
    l2: int
    m: int

    @property
    def nx(self) -> int:
        return self.l1 * self.m

    @property
    def ny(self) -> int:
        return self.l2 * self.m

    @property
    def n(self) -> int:
        return self.nx + self.ny + self.l1 + self.l2 + 2

    @property
    def xs(self) -> slice:
        return slice(0, self.nx)

    @property
    def ys(self) -> slice:
        return slice(self.nx, self.nx + self.ny)

    @property
    def us(self) -> slice:
        a = self.nx + self.ny
        return slice(a, a + self.l1)

    @property
    def vs(self) -> slice:
        a = self.nx + self.ny + self.l1
        return slice(a, a + self.l2)

    @property
    def xi(self) -> int:
        return self.n - 2

    @property
    def mu(self) -> int:
        return self.n - 1

    def split(self, z: np.ndarray) -> LiftedPoint:
        return LiftedPoint(
            x=z[self.xs].reshape(self.l1, self.m),
            y=z[self.ys].reshape(self.l2, self.m),
            u=z[self.us],
            v=z[self.vs],
        )

    def names(self) -> list[str]:
        out = [f"x_{i}_{j}" for i in range(self.l1) for j in range(self.m)]
        out += [f"y_{k}_{j}" for k in range(self.l2) for j in range(self.m)]
        out += [f"u_{i}" for i in range(self.l1)] + [f"v_{k}" for k in range(self.l2)]
        return out + ["xi", "mu"]


@dataclass(frozen=True, eq=False)
class LpSubproblem:
    """min c.z  s.t.  row_lower <= A z <= row_upper,  col_lower <= z <= col_upper."""

    layout: Layout
    cost: np.ndarray
    matrix: sp.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    col_lower: np.ndarray
    col_upper: np.ndarray

    @property
    def num_vars(self) -> int:
        return self.layout.n

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    def with_cost(self, cost: np.ndarray) -> "LpSubproblem":
        cost = np.asarray(cost, dtype=float)
        if cost.shape != (self.layout.n,):
            raise ValueError(f"cost has shape {cost.shape}, expected ({self.layout.n},)")
        return LpSubproblem(self.layout, cost, self.matrix, self.row_lower,
                            self.row_upper, self.col_lower, self.col_upper)

    @cached_property
    def _csc(self) -> sp.csc_matrix:
        return self.matrix.tocsc()


@dataclass(frozen=True, eq=False)
class LpSolution:
    point: LiftedPoint
    value: float
    xi: float
    mu: float
    z: np.ndarray


def build_constraints(instance: RekeyInstance) -> LpSubproblem:
    """Constraint system of the subproblem with a zero cost vector."""
    lay = Layout(instance.l1, instance.l2, instance.m)
    l1, l2, m, n = lay.l1, lay.l2, lay.m, lay.n
    Lp = np.asarray(instance.remaining, dtype=float)
    Ah = np.asarray(instance.departing, dtype=float) / 2

    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(r)).ravel())

    xidx = np.arange(lay.nx).reshape(l1, m)
    yidx = lay.nx + np.arange(lay.ny).reshape(l2, m)
    uidx = np.arange(lay.us.start, lay.us.stop)
    vidx = np.arange(lay.vs.start, lay.vs.stop)

    # joiner equalities: sum_i x_ij + sum_k y_kj = 1
    put(np.broadcast_to(np.arange(m), (l1, m)), xidx, 1.0)
    put(np.broadcast_to(np.arange(m), (l2, m)), yidx, 1.0)
    r0 = m
    # sum_j x_ij - m u_i <= 0
    put(np.broadcast_to((r0 + np.arange(l1))[:, None], (l1, m)), xidx, 1.0)
    put(r0 + np.arange(l1), uidx, -float(m))
    r0 += l1
    # v_k - sum_j y_kj <= 0
    put(np.broadcast_to((r0 + np.arange(l2))[:, None], (l2, m)), yidx, -1.0)
    put(r0 + np.arange(l2), vidx, 1.0)
    r0 += l2
    # L'[i] sum_j x_ij - xi <= -L'[i]   and   -L'[i] sum_j x_ij - mu <= L'[i]
    put(np.broadcast_to((r0 + np.arange(l1))[:, None], (l1, m)), xidx, np.broadcast_to(Lp[:, None], (l1, m)))
    put(r0 + np.arange(l1), np.full(l1, lay.xi), -1.0)
    put(np.broadcast_to((r0 + l1 + np.arange(l1))[:, None], (l1, m)), xidx, np.broadcast_to(-Lp[:, None], (l1, m)))
    put(r0 + l1 + np.arange(l1), np.full(l1, lay.mu), -1.0)
    r0 += 2 * l1
    put(np.broadcast_to((r0 + np.arange(l2))[:, None], (l2, m)), yidx, np.broadcast_to(Ah[:, None], (l2, m)))
    put(r0 + np.arange(l2), np.full(l2, lay.xi), -1.0)
    put(np.broadcast_to((r0 + l2 + np.arange(l2))[:, None], (l2, m)), yidx, np.broadcast_to(-Ah[:, None], (l2, m)))
    put(r0 + l2 + np.arange(l2), np.full(l2, lay.mu), -1.0)
    nrows = r0 + 2 * l2

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nrows, n),
    )
    row_lower = np.concatenate([np.ones(m), np.full(nrows - m, -INF)])
    row_upper = np.concatenate([np.ones(m), np.zeros(l1 + l2), -Lp, Lp, -Ah, Ah])
    col_lower = np.concatenate([np.zeros(n - 2), [-INF, -INF]])
    col_upper = np.concatenate([np.ones(n - 2), [INF, INF]])
    return LpSubproblem(lay, np.zeros(n), matrix, row_lower, row_upper, col_lower, col_upper)


def lp_cost(layout: Layout, subgrad, lam: float) -> np.ndarray:
    """Cost vector lam*(xi + mu) - <x,alpha> - <y,beta> - <u,gamma> - <v,sigma>."""
    c = np.empty(layout.n)
    c[layout.xs] = -np.asarray(subgrad.alpha, dtype=float).ravel()
    c[layout.ys] = -np.asarray(subgrad.beta, dtype=float).ravel()
    c[layout.us] = -np.asarray(subgrad.gamma, dtype=float)
    c[layout.vs] = -np.asarray(subgrad.sigma, dtype=float)
    c[layout.xi] = c[layout.mu] = lam
    return c


def build_lp(instance: RekeyInstance, subgrad, lam: float) -> LpSubproblem:
    base = build_constraints(instance)
    lay = base.layout
    shapes = {
        "alpha": (lay.l1, lay.m), "beta": (lay.l2, lay.m),
        "gamma": (lay.l1,), "sigma": (lay.l2,),
    }
    for name, shape in shapes.items():
        got = np.shape(getattr(subgrad, name))
        if got != shape:
            raise ValueError(f"subgradient {name} has shape {got}, expected {shape}")
    return base.with_cost(lp_cost(lay, subgrad, lam))


def _snap(z: np.ndarray) -> np.ndarray:
    r = np.round(z)
    near = np.abs(z - r) <= SNAP_TOL
    z = z.copy()
    z[near] = r[near]
    return z


class LpSession:
    """A HiGHS model of one constraint system, re-solved under changing costs.

    Re-solves start from the previous optimal basis.  The sequence of answers
    is deterministic for a deterministic sequence of cost vectors.
    """

    def __init__(self, lp: LpSubproblem):
        self.lp = lp
        self._cost = lp.cost.copy()
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        h.setOptionValue("dual_feasibility_tolerance", 1e-10)
        model = highspy.HighsLp()
        model.num_col_ = lp.num_vars
        model.num_row_ = lp.num_rows
        model.col_cost_ = lp.cost
        model.col_lower_ = lp.col_lower
        model.col_upper_ = lp.col_upper
        model.row_lower_ = lp.row_lower
        model.row_upper_ = lp.row_upper
        csc = lp._csc
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = csc.indptr
        model.a_matrix_.index_ = csc.indices
        model.a_matrix_.value_ = csc.data
        h.passModel(model)
        self._h = h
        self._all = np.arange(lp.num_vars, dtype=np.int32)

    def solve(self, cost: np.ndarray | None = None) -> LpSolution:
        if cost is not None:
            cost = np.asarray(cost, dtype=float)
            if cost.shape != self._cost.shape:
                raise ValueError("cost vector has the wrong length")
            self._h.changeColsCost(len(self._all), self._all, cost)
            self._cost = cost.copy()
        self._h.run()
        status = self._h.getModelStatus()
        if status != highspy.HighsModelStatus.kOptimal:
            raise LpError(f"LP not solved to optimality: {self._h.modelStatusToString(status)}")
        z = _snap(np.asarray(self._h.getSolution().col_value, dtype=float))
        lay = self.lp.layout
        return LpSolution(
            point=lay.split(z),
            value=float(self._cost @ z),
            xi=float(z[lay.xi]),
            mu=float(z[lay.mu]),
            z=z,
        )


def solve_lp(lp: LpSubproblem) -> LpSolution:
    """Cold solve to an optimal basic solution."""
    return LpSession(lp).solve()


def _term(coef: float, name: str, first: bool) -> str:
    sign = "-" if coef < 0 else ("" if first else "+")
    mag = abs(coef)
    body = name if mag == 1 else f"{mag:.17g} {name}"
    return f"{sign} {body}".strip() if first else f" {sign} {body}"


def write_lp(lp: LpSubproblem, path) -> None:
    """Dump in CPLEX LP text format; rows and columns in canonical order."""
    names = lp.layout.names()
    lines = ["\\ batch rekeying DCA subproblem", "Minimize", " obj:"]
    obj = "".join(_term(c, names[j], k == 0) for k, (j, c) in
                  enumerate((j, c) for j, c in enumerate(lp.cost) if c != 0))
    lines[-1] += " " + (obj or "0 xi")
    lines.append("Subject To")
    A = lp.matrix
    for r in range(lp.num_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        expr = "".join(_term(A.data[q], names[A.indices[q]], q == lo) for q in range(lo, hi))
        if lp.row_lower[r] == lp.row_upper[r]:
            lines.append(f" r{r}: {expr} = {lp.row_upper[r]:.17g}")
        else:
            lines.append(f" r{r}: {expr} <= {lp.row_upper[r]:.17g}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        if lp.col_lower[j] == -INF:
            lines.append(f" {name} free")
        else:
            lines.append(f" {lp.col_lower[j]:.17g} <= {name} <= {lp.col_upper[j]:.17g}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
