"""Small Hermitian-SDP modelling layer on top of an interior-point conic backend.

A problem has Hermitian PSD matrix variables, free real scalars, a linear
objective and constraints ``sum_i Tr(A_i X_i) + a^T s (<= | ==) b``, plus
optional power-cone hypographs ``z <= x**alpha``.

Every Hermitian ``n x n`` variable is handed to the backend as a general real
symmetric ``2n x 2n`` PSD matrix ``Y`` with coefficients ``real_embed(A) / 2``.
Projecting ``Y`` onto the embedding structure keeps it PSD and leaves every such
functional unchanged, so the real problem is equivalent to the Hermitian one.
The backend is Clarabel, called through its native API.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from . import hermitian as hm
from .errors import ConfigurationError

TOL_SOLVER = 1e-7
RETRY_TOL = 1e-5

OPTIMAL, INACCURATE, INFEASIBLE, UNBOUNDED, FAILED = (
    "optimal", "inaccurate", "infeasible", "unbounded", "failed")


class Affine:
    """``const + sum Tr(C_X X) + sum a_s s`` over named matrix/scalar variables."""

    __slots__ = ("const", "mats", "scalars")

    def __init__(self, const: float = 0.0, mats: Mapping | None = None, scalars: Mapping | None = None):
        self.const = float(const)
        self.mats = dict(mats or {})
        self.scalars = dict(scalars or {})

    @staticmethod
    def lift(x) -> "Affine":
        return x if isinstance(x, Affine) else Affine(float(x))

    def __add__(self, other):
        other = Affine.lift(other)
        mats = dict(self.mats)
        for k, v in other.mats.items():
            mats[k] = mats[k] + v if k in mats else v
        scal = dict(self.scalars)
        for k, v in other.scalars.items():
            scal[k] = scal.get(k, 0.0) + v
        return Affine(self.const + other.const, mats, scal)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, c):
        c = float(c)
        return Affine(self.const * c, {k: v * c for k, v in self.mats.items()},
                      {k: v * c for k, v in self.scalars.items()})

    __rmul__ = __mul__

    def evaluate(self, values: Mapping[str, object]) -> float:
        val = self.const
        for k, C in self.mats.items():
            val += float(np.sum(np.asarray(C).T * values[k]).real)
        for k, a in self.scalars.items():
            val += a * float(values[k])
        return val

    def __repr__(self):
        return f"Affine(const={self.const:g}, mats={sorted(self.mats)}, scalars={self.scalars})"


def tr(C: np.ndarray, name: str) -> Affine:
    """The functional ``Tr(C X)`` for Hermitian ``C`` and matrix variable ``name``."""
    return Affine(mats={name: hm.hermitize(C)})


@dataclass
class Constraint:
    expr: Affine  # expr (<= | ==) 0
    sense: str
    label: str = ""


@dataclass
class PowerHypograph:
    z: Affine
    x: Affine
    alpha: float
    label: str = ""


@dataclass
class SdpProblem:
    name: str = ""
    matrix_vars: dict[str, int] = field(default_factory=dict)
    scalar_vars: list[str] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    powers: list[PowerHypograph] = field(default_factory=list)
    objective: Affine = field(default_factory=Affine)
    sense: str = "max"

    def matrix(self, name: str, dim: int) -> str:
        if name in self.matrix_vars or name in self.scalar_vars:
            raise ConfigurationError(f"variable {name!r} declared twice")
        self.matrix_vars[name] = int(dim)
        return name

    def scalar(self, name: str) -> Affine:
        if name in self.matrix_vars or name in self.scalar_vars:
            raise ConfigurationError(f"variable {name!r} declared twice")
        self.scalar_vars.append(name)
        return Affine(scalars={name: 1.0})

    def var(self, name: str) -> Affine:
        return Affine(scalars={name: 1.0})

    def _check(self, expr: Affine) -> None:
        for k, C in expr.mats.items():
            n = self.matrix_vars.get(k)
            if n is None:
                raise ConfigurationError(f"undeclared matrix variable {k!r}")
            if C.shape != (n, n):
                raise ConfigurationError(f"coefficient for {k!r} has shape {C.shape}, expected {(n, n)}")
            if not hm.is_hermitian(C, 1e-9):
                raise ConfigurationError(f"coefficient for {k!r} is not Hermitian")
        for k in expr.scalars:
            if k not in self.scalar_vars:
                raise ConfigurationError(f"undeclared scalar variable {k!r}")

    def add(self, lhs, sense: str, rhs=0.0, label: str = "") -> None:
        if sense == ">=":
            lhs, rhs, sense = rhs, lhs, "<="
        if sense not in ("<=", "=="):
            raise ConfigurationError(f"unknown constraint sense {sense!r}")
        expr = Affine.lift(lhs) - Affine.lift(rhs)
        self._check(expr)
        self.constraints.append(Constraint(expr, sense, label))

    def add_power_hypograph(self, z, x, alpha: float, label: str = "") -> None:
        """``z <= x**alpha`` (with ``x >= 0``) for ``0 < alpha < 1``."""
        if not 0 < alpha < 1:
            raise ConfigurationError("power hypograph needs 0 < alpha < 1")
        z, x = Affine.lift(z), Affine.lift(x)
        self._check(z)
        self._check(x)
        self.powers.append(PowerHypograph(z, x, float(alpha), label))

    def maximize(self, expr) -> None:
        expr = Affine.lift(expr)
        self._check(expr)
        self.objective, self.sense = expr, "max"

    def minimize(self, expr) -> None:
        expr = Affine.lift(expr)
        self._check(expr)
        self.objective, self.sense = expr, "min"

    def labelled(self, prefix: str) -> list[Constraint]:
        return [c for c in self.constraints if c.label.startswith(prefix)]


@dataclass
class SdpSolution:
    values: dict[str, object]
    objective: float
    status: str
    iterations: int = 0
    wall_time: float = 0.0
    diagnostic: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, INACCURATE)

    def __getitem__(self, name):
        return self.values[name]


# -- compilation -----------------------------------------------------------------

def _svec_index(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # upper triangle, column-major, off-diagonals scaled by sqrt(2)
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows, cols = np.array(rows), np.array(cols)
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return rows, cols, scale


_SVEC_CACHE: dict[int, tuple] = {}


def svec_index(n: int):
    if n not in _SVEC_CACHE:
        _SVEC_CACHE[n] = _svec_index(n)
    return _SVEC_CACHE[n]


def svec(S: np.ndarray) -> np.ndarray:
    rows, cols, scale = svec_index(S.shape[0])
    return S[rows, cols] * scale


def smat(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols, scale = svec_index(n)
    S = np.zeros((n, n))
    S[rows, cols] = v / scale
    S[cols, rows] = v / scale
    return S


@dataclass
class Compiled:
    q: np.ndarray
    q0: float
    A: sp.csc_matrix
    b: np.ndarray
    cones: list  # (kind, size-or-param)
    offsets: dict[str, tuple[int, int]]
    n_var: int


def _row(problem: SdpProblem, expr: Affine, offsets) -> tuple[np.ndarray, float]:
    row = np.zeros(offsets["__n__"][0])
    for k, C in expr.mats.items():
        start, _ = offsets[k]
        coef = svec(0.5 * hm.real_embed(C))
        row[start:start + coef.size] += coef
    for k, a in expr.scalars.items():
        row[offsets[k][0]] += a
    return row, expr.const


def compile_problem(problem: SdpProblem) -> Compiled:
    """Lower to Clarabel's ``min q'x  s.t.  A x + s = b,  s in K``."""
    offsets: dict[str, tuple[int, int]] = {}
    pos = 0
    for name, n in problem.matrix_vars.items():
        m = (2 * n) * (2 * n + 1) // 2
        offsets[name] = (pos, m)
        pos += m
    for name in problem.scalar_vars:
        offsets[name] = (pos, 1)
        pos += 1
    n_var = pos
    offsets["__n__"] = (n_var, 0)

    obj_row, obj_const = _row(problem, problem.objective, offsets)
    sign = -1.0 if problem.sense == "max" else 1.0

    blocks_A, blocks_b, cones = [], [], []
    eq = [c for c in problem.constraints if c.sense == "=="]
    le = [c for c in problem.constraints if c.sense == "<="]
    for group, kind in ((eq, "zero"), (le, "nonneg")):
        if not group:
            continue
        rows, rhs = [], []
        for c in group:
            r, const = _row(problem, c.expr, offsets)
            rows.append(r)
            rhs.append(-const)
        blocks_A.append(sp.csr_matrix(np.array(rows)))
        blocks_b.append(np.array(rhs))
        cones.append((kind, len(group)))
    for p in problem.powers:
        # slack (x, 1, z) must lie in the power cone x^a 1^(1-a) >= |z|
        rx, cx = _row(problem, p.x, offsets)
        rz, cz = _row(problem, p.z, offsets)
        blocks_A.append(sp.csr_matrix(np.array([-rx, np.zeros(n_var), -rz])))
        blocks_b.append(np.array([cx, 1.0, cz]))
        cones.append(("power", p.alpha))
    for name, n in problem.matrix_vars.items():
        start, m = offsets[name]
        blk = sp.csr_matrix((-np.ones(m), (np.arange(m), np.arange(start, start + m))), shape=(m, n_var))
        blocks_A.append(blk)
        blocks_b.append(np.zeros(m))
        cones.append(("psd", 2 * n))
    A = sp.vstack(blocks_A).tocsc() if blocks_A else sp.csc_matrix((0, n_var))
    b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
    del offsets["__n__"]
    return Compiled(sign * obj_row, sign * obj_const, A, b, cones, offsets, n_var)


def _clarabel_cones(cones):
    import clarabel

    out = []
    for kind, arg in cones:
        if kind == "zero":
            out.append(clarabel.ZeroConeT(arg))
        elif kind == "nonneg":
            out.append(clarabel.NonnegativeConeT(arg))
        elif kind == "power":
            out.append(clarabel.PowerConeT(arg))
        elif kind == "psd":
            out.append(clarabel.PSDTriangleConeT(arg))
    return out


def _status(raw: str) -> str:
    raw = str(raw)
    if raw == "Solved":
        return OPTIMAL
    if raw in ("AlmostSolved", "MaxIterations", "MaxTime", "InsufficientProgress"):
        return INACCURATE if raw == "AlmostSolved" else FAILED
    if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return INFEASIBLE
    if raw in ("DualInfeasible", "AlmostDualInfeasible"):
        return UNBOUNDED
    return FAILED


# Interior-point runs occasionally stall on these problems; the same tolerance
# is retried with stronger regularization, then without equilibration, then
# with shorter steps before the tolerance itself is loosened.
_FALLBACKS = (
    {},
    {"static_regularization_constant": 1e-7},
    {"equilibrate_enable": False},
    {"max_step_fraction": 0.9},
)


def _run_backend(comp: Compiled, tol: float, options: Mapping | None = None):
    import clarabel

    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_gap_abs = tol
    st.tol_gap_rel = tol
    st.tol_feas = tol
    st.tol_ktratio = max(tol, 1e-8)
    st.max_iter = 300
    st.max_threads = 1
    for key, val in (options or {}).items():
        setattr(st, key, val)
    P = sp.csc_matrix((comp.n_var, comp.n_var))
    solver = clarabel.DefaultSolver(P, comp.q, comp.A, comp.b, _clarabel_cones(comp.cones), st)
    return solver.solve()


def solve(problem: SdpProblem, tol: float = TOL_SOLVER, retry_tol: float = RETRY_TOL) -> SdpSolution:
    """Solve ``problem``; infeasible/unbounded are statuses, never exceptions.

    A stalled solve is retried with alternative backend settings, then once
    more at ``retry_tol`` (reported as inaccurate).
    """
    t0 = time.perf_counter()
    comp = compile_problem(problem)
    iters = 0
    diagnostic = ""
    raw = None
    status = FAILED
    almost = None  # first AlmostSolved result, used if nothing better turns up
    attempts = [(tol, opt) for opt in _FALLBACKS] + [(retry_tol, {})]
    for attempt_tol, opt in attempts:
        try:
            res = _run_backend(comp, attempt_tol, opt)
        except Exception as exc:  # backend crash: report, never raise
            diagnostic = f"backend error: {exc!r}"
            continue
        iters += int(res.iterations)
        st = _status(res.status)
        diagnostic = str(res.status)
        if st == OPTIMAL and attempt_tol != tol:
            st = INACCURATE
        if st == INACCURATE and almost is None and _finite(res):
            almost = res
        if st in (OPTIMAL, INFEASIBLE, UNBOUNDED):
            raw, status = res, st
            break
        raw, status = res, st
    if status not in (OPTIMAL, INFEASIBLE, UNBOUNDED) and almost is not None:
        raw, status = almost, INACCURATE
    wall = time.perf_counter() - t0
    if raw is None or status not in (OPTIMAL, INACCURATE) or not _finite(raw):
        if raw is not None and status in (OPTIMAL, INACCURATE):
            status = FAILED
        return SdpSolution({}, math.nan, status, iters, wall, diagnostic)
    values = unpack(problem, comp, np.asarray(raw.x))
    objective = problem.objective.evaluate(values)
    return SdpSolution(values, objective, status, iters, wall, diagnostic)


def _finite(raw) -> bool:
    return raw is not None and np.all(np.isfinite(np.asarray(raw.x)))


def unpack(problem: SdpProblem, comp: Compiled, x: np.ndarray) -> dict[str, object]:
    values: dict[str, object] = {}
    for name, n in problem.matrix_vars.items():
        start, m = comp.offsets[name]
        Y = smat(x[start:start + m], 2 * n)
        values[name] = hm.real_unembed(Y)
    for name in problem.scalar_vars:
        values[name] = float(x[comp.offsets[name][0]])
    return values


# -- debugging dump ----------------------------------------------------------------
#
# Plain-text, SDPA-flavoured listing of the compiled real problem:
#
#   * <problem name>
#   * var <name> <offset> <length> [matrix hermitian_dim=<n>]
#   nvar <n>
#   sense min                      (the compiled problem is always a minimization)
#   c <col> <value>                objective nonzeros, then "c0 <constant>"
#   cone <kind> <size|alpha>       in row order: zero, nonneg, power, psd
#   A <row> <col> <value>          constraint nonzeros  (A x + s = b, s in cones)
#   b <row> <value>                nonzero right-hand sides

def dump(problem: SdpProblem, path) -> None:
    comp = compile_problem(problem)
    lines = [f"* {problem.name or 'sdp'}"]
    for name, (off, m) in comp.offsets.items():
        extra = f" matrix hermitian_dim={problem.matrix_vars[name]}" if name in problem.matrix_vars else ""
        lines.append(f"* var {name} {off} {m}{extra}")
    lines.append(f"nvar {comp.n_var}")
    lines.append("sense min")
    lines += [f"c {i} {comp.q[i]!r}" for i in np.flatnonzero(comp.q)]
    lines.append(f"c0 {comp.q0!r}")
    lines += [f"cone {kind} {arg}" for kind, arg in comp.cones]
    A = comp.A.tocoo()
    lines += [f"A {r} {c} {v!r}" for r, c, v in zip(A.row, A.col, A.data)]
    lines += [f"b {i} {comp.b[i]!r}" for i in np.flatnonzero(comp.b)]
    Path(path).write_text("\n".join(lines) + "\n")
