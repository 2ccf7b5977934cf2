"""Alternating optimization of beamformers and STAR-RIS coefficients.

Each outer iteration runs a penalized phase stage (surface update with the
beamformers fixed), projects the surface back onto feasible rank-one
coefficients, then runs a Dinkelbach-weighted beamforming stage.  A surface or
beamformer update is only accepted when the true min-rate does not drop, so
the recorded objective is monotone.  Finally Gaussian randomization extracts
rank-one precoders from the relaxed covariances.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping

import numpy as np

from . import hermitian as hm
from .channel import ChannelSet, stream
from .config import SystemConfig, _coerce
from .conic import solve
from .errors import ConfigurationError, NumericError
from .model import (
    BeamSolution,
    RateReport,
    StarState,
    check_feasibility,
    equal_split_min_rate,
    gain_tables_trace,
    gain_tables_vector,
    psi_phi,
    rates,
    secrecy_scale,
    star_Q,
    user_sinrs,
)
from .subproblems import (
    SIDES,
    IterateAnchor,
    Variant,
    active_elements,
    build_beamforming_problem,
    build_phase_problem,
    expand_Q,
    stream_names,
)

_S_RANDOMIZATION = 11
RANK_ONE_RATIO = 1e-6
_MIN_STEP = 1.0 / 64


def default_rho(n1: int) -> float:
    """Penalty weight for inner phase iteration ``n1`` (1-based)."""
    return 10.0 ** (n1 - 5)


@dataclass
class OptimizerSettings:
    eps: float = 1e-3  # outer stopping threshold on the min-rate
    eps_rank: float = 1e-4  # rank-one gap accepted by the phase stage
    eps_inner: float = 1e-4  # beamforming-stage stopping threshold
    max_outer: int = 30
    max_inner1: int = 10
    max_inner2: int = 20
    rand_trials: int = 100
    seed: int = 0
    solver_tol: float = 1e-7
    rho_schedule: Callable[[int], float] = field(default=default_rho, repr=False, compare=False)

    def __post_init__(self):
        for name in ("eps", "eps_rank", "eps_inner", "solver_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("max_outer", "max_inner1", "max_inner2"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if int(self.rand_trials) < 0:
            raise ConfigurationError("rand_trials must be >= 0")

    @classmethod
    def keys(cls) -> set[str]:
        return {f.name for f in fields(cls) if f.name != "rho_schedule"}

    @classmethod
    def from_mapping(cls, values: Mapping, base: "OptimizerSettings | None" = None) -> "OptimizerSettings":
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for k, v in values.items():
            if k not in cls.keys():
                raise ConfigurationError(f"unknown optimizer key {k!r}")
            try:
                changes[k] = _coerce(types[k], v)
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {k!r}: {v!r}") from exc
        return _replace(base, **changes)

    def replace(self, **changes) -> "OptimizerSettings":
        return _replace(self, **changes)


def _replace(obj, **changes):
    import dataclasses

    return dataclasses.replace(obj, **changes)


# -- convergence trace -----------------------------------------------------------------

TRACE_COLUMNS = ("n", "R", "lambda", "gap_r", "gap_t", "inner1", "inner2", "status", "ms")


@dataclass
class TraceRow:
    n: int
    R: float
    lam: float
    gap_r: float
    gap_t: float
    inner1: int
    inner2: int
    status: str
    ms: float

    def as_tuple(self):
        return (self.n, self.R, self.lam, self.gap_r, self.gap_t, self.inner1, self.inner2, self.status, self.ms)


@dataclass
class ConvergenceTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    @property
    def objective(self) -> np.ndarray:
        return np.array([r.R for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([r.n, repr(r.R), repr(r.lam), repr(r.gap_r), repr(r.gap_t),
                        r.inner1, r.inner2, r.status, f"{r.ms:.1f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# -- evaluation of an iterate ------------------------------------------------------------

@dataclass
class Point:
    """An iterate together with its true (non-linearized) figures of merit."""

    P: list[np.ndarray]
    star: StarState
    Q: dict[str, np.ndarray]
    R: float  # min-rate with an equal common split
    beta: float
    tau: float
    lam: float
    psi: np.ndarray
    phi: np.ndarray

    def t(self, lam: float) -> float:
        return float(np.min(self.tau * self.psi - lam * self.phi))


def evaluate_point(cs: ChannelSet, cfg: SystemConfig, variant: Variant, P, star: StarState) -> Point:
    Q = star_Q(star)
    gu, _ = gain_tables_trace(cs, Q, P)
    psi, phi = psi_phi(gu, cfg.sigma2)
    if np.any(phi <= 0):
        raise NumericError("interference-plus-noise must be positive")
    if variant.common:
        gc, _ = user_sinrs(gu, cfg.sigma2)
        beta = 1.0 + float(np.min(gc))
    else:
        beta = 1.0
    tau = beta ** (1.0 / cs.K)
    lam = float(np.min(tau * psi / phi))
    return Point(list(P), star, Q, math.log2(lam), beta, tau, lam, psi, phi)


def update_lambda(P, Q, cs: ChannelSet, cfg: SystemConfig, tau: float = 1.0) -> float:
    """Dinkelbach ratio ``min_k tau * psi_k / phi_k`` at ``(P, Q)``."""
    gu, _ = gain_tables_trace(cs, Q, P)
    psi, phi = psi_phi(gu, cfg.sigma2)
    if np.any(phi <= 0):
        raise NumericError("interference-plus-noise must be positive")
    return float(np.min(tau * psi / phi))


# -- initialization --------------------------------------------------------------------------

def initial_star(cs: ChannelSet, variant: Variant = Variant()) -> StarState:
    """Equal energy split; phases co-phase each side's strongest user."""
    n = cs.N_S
    thetas = {}
    for side in SIDES:
        idx = [k for k, s in enumerate(cs.user_sides) if s == side]
        if not idx:
            thetas[side] = np.zeros(n)
            continue
        norms = [np.linalg.norm(cs.gamma_users[k]) for k in idx]
        G = cs.gamma_users[idx[int(np.argmax(norms))]]
        # gain |q^H G v|^2 is maximized by aligning q with G v (v top right singular vector)
        _, _, Vh = np.linalg.svd(G)
        a = G @ np.conj(Vh[0])
        thetas[side] = -np.angle(a)
    if variant.surface == "star":
        return StarState.uniform(n, thetas["r"], thetas["t"])
    b = {s: np.zeros(n) for s in SIDES}
    for s in SIDES:
        b[s][active_elements(n, "ris", s)] = 1.0
    return StarState(b["r"], b["t"], thetas["r"], thetas["t"])


def random_star(cs: ChannelSet, seed: int, variant: Variant = Variant()) -> StarState:
    rng = stream(seed, _S_RANDOMIZATION, 1)
    n = cs.N_S
    th_r, th_t = rng.uniform(0, 2 * math.pi, n), rng.uniform(0, 2 * math.pi, n)
    if variant.surface == "star":
        return StarState.uniform(n, th_r, th_t)
    b = {s: np.zeros(n) for s in SIDES}
    for s in SIDES:
        b[s][active_elements(n, "ris", s)] = 1.0
    return StarState(b["r"], b["t"], th_r, th_t)


def _effective_channels(cs: ChannelSet, star: StarState) -> tuple[np.ndarray, np.ndarray]:
    eu = np.stack([np.conj(h) @ star.theta_matrix(s) @ cs.H for h, s in zip(cs.h, cs.user_sides)])
    if cs.J:
        ee = np.stack([np.conj(g) @ star.theta_matrix(s) @ cs.H for g, s in zip(cs.g, cs.eve_sides)])
    else:
        ee = np.zeros((0, cs.N_T), complex)
    return eu, ee


def _secure_scale(cs, cfg, variant, Q, P) -> list[np.ndarray]:
    if not variant.secrecy:
        return P
    gu, ge = gain_tables_trace(cs, Q, P)
    s = secrecy_scale(gu, ge, cfg)
    return [s * p for p in P] if s < 1.0 else P


def initial_beams(cs: ChannelSet, cfg: SystemConfig, star: StarState, variant: Variant = Variant()) -> list[np.ndarray]:
    """Matched filters with equal power; the common stream serves the weakest user."""
    eu, _ = _effective_channels(cs, star)
    K = cs.K
    n_streams = K + 1 if variant.common else K
    p = cfg.P_max / n_streams
    W = np.zeros((cs.N_T, K + 1), complex)
    for k in range(K):
        v = np.conj(eu[k])
        W[:, k + 1] = math.sqrt(p) * v / max(np.linalg.norm(v), 1e-300)
    if variant.common:
        weakest = int(np.argmin(np.linalg.norm(eu, axis=1)))
        v = np.conj(eu[weakest])
        W[:, 0] = math.sqrt(p) * v / max(np.linalg.norm(v), 1e-300)
    P = [np.outer(W[:, m], np.conj(W[:, m])) for m in range(K + 1)]
    return _secure_scale(cs, cfg, variant, star_Q(star), P)


# -- phase stage -------------------------------------------------------------------------

@dataclass
class PhaseResult:
    Q: dict[str, np.ndarray]
    star: StarState | None
    gap_r: float
    gap_t: float
    iterations: int
    statuses: list[str]
    converged: bool

    @property
    def solved_any(self) -> bool:
        return self.star is not None


def project_rank_one(Q: dict[str, np.ndarray], surface: str = "star") -> StarState:
    """Feasible coefficients closest in direction to the principal components of ``Q``."""
    q = {s: hm.principal_component(hm.hermitize(Q[s])) for s in SIDES}
    n = q["r"].size
    if surface == "star":
        amp = np.sqrt(np.abs(q["r"]) ** 2 + np.abs(q["t"]) ** 2)
        dead = amp < 1e-12
        amp[dead] = 1.0
        b_r, b_t = np.abs(q["r"]) / amp, np.abs(q["t"]) / amp
        b_r[dead] = b_t[dead] = 1 / math.sqrt(2)
    else:
        b_r, b_t = np.zeros(n), np.zeros(n)
        b_r[active_elements(n, surface, "r")] = 1.0
        b_t[active_elements(n, surface, "t")] = 1.0
    return StarState(b_r, b_t, -np.angle(q["r"]), -np.angle(q["t"]))


def phase_stage(point: Point, cs: ChannelSet, cfg: SystemConfig, settings: OptimizerSettings,
                variant: Variant = Variant()) -> PhaseResult:
    """Penalty-CCP iterations on the lifted surface with the beamformers fixed."""
    Q_cur = dict(point.Q)
    statuses: list[str] = []
    gaps = (math.nan, math.nan)
    solved = False
    converged = False
    n1 = 0
    for n1 in range(1, settings.max_inner1 + 1):
        anchor = IterateAnchor(point.P, Q_cur, point.tau, point.beta, point.lam, settings.rho_schedule(n1))
        sol = solve(build_phase_problem(cs, cfg, anchor, variant), tol=settings.solver_tol)
        statuses.append(sol.status)
        if not sol.ok:
            break
        solved = True
        Q_cur = expand_Q(sol["Q_r"], sol["Q_t"], cs.N_S, variant.surface)
        gaps = tuple(hm.rank_one_gap(Q_cur[s]) for s in SIDES)
        if max(gaps) <= settings.eps_rank:
            converged = True
            break
    star = project_rank_one(Q_cur, variant.surface) if solved else None
    return PhaseResult(Q_cur, star, gaps[0], gaps[1], n1, statuses, converged)


# -- beamforming stage ----------------------------------------------------------------------

@dataclass
class BeamResult:
    point: Point
    iterations: int
    statuses: list[str]
    history: list[float]  # min-rate after each accepted step


def beam_stage(point: Point, cs: ChannelSet, cfg: SystemConfig, settings: OptimizerSettings,
               variant: Variant = Variant()) -> BeamResult:
    """SCA on the Dinkelbach-weighted beamforming problem.

    ``lambda`` is reset to the current ratio after every accepted step, so a
    candidate is accepted exactly when it does not lower the min-rate.
    """
    cur = point
    history = [cur.R]
    statuses: list[str] = []
    names = stream_names(cs.K, variant.common)
    n2 = 0
    for n2 in range(1, settings.max_inner2 + 1):
        lam = cur.lam
        anchor = IterateAnchor(cur.P, cur.Q, cur.tau, cur.beta, lam)
        sol = solve(build_beamforming_problem(cs, cfg, anchor, variant), tol=settings.solver_tol)
        statuses.append(sol.status)
        if not sol.ok:
            break
        P_new = [hm.hermitize(sol[nm]) for nm in names]
        if not variant.common:
            P_new = [np.zeros_like(P_new[0])] + P_new
        accepted = None
        alpha = 1.0
        while alpha >= _MIN_STEP:
            P_try = [(1 - alpha) * a + alpha * b for a, b in zip(cur.P, P_new)]
            cand = evaluate_point(cs, cfg, variant, P_try, cur.star)
            if cand.R >= cur.R:
                accepted = cand
                break
            alpha /= 2
        if accepted is None:
            break
        gain = accepted.R - cur.R
        cur = accepted
        history.append(cur.R)
        if gain <= settings.eps_inner:
            break
    return BeamResult(cur, n2, statuses, history)


# -- Gaussian randomization ------------------------------------------------------------------

@dataclass
class RandomizationResult:
    W: np.ndarray
    min_rate: float
    exact: bool  # all covariances were already rank one
    degraded: bool  # no feasible random candidate; principal components used
    n_feasible: int


def _candidate_quality(cs, cfg, variant, star, W, eu, ee):
    gu = np.abs(eu @ W) ** 2
    ge = np.abs(ee @ W) ** 2 if cs.J else np.zeros((0, W.shape[1]))
    return gu, ge


def gaussian_randomization(P, cs: ChannelSet, cfg: SystemConfig, star: StarState, L: int, seed: int,
                           variant: Variant = Variant(), tol: float = 1e-6) -> RandomizationResult:
    """Draw rank-one precoders from the relaxed covariances ``P``.

    Candidate 0 is the principal-eigenvector precoder; candidates 1..L are
    ``U diag(sqrt(lambda)) z`` with ``z ~ CN(0, I)``.  Each is rescaled by one
    common factor to the power budget, shrunk further if a secrecy constraint
    would be violated, and the best feasible min-rate wins (lowest index on ties).
    """
    K1 = len(P)
    n_t = cs.N_T
    eu, ee = _effective_channels(cs, star)
    roots = []
    exact = True
    W0 = np.zeros((n_t, K1), complex)
    for m, Pm in enumerate(P):
        lam, U = np.linalg.eigh(hm.hermitize(Pm))
        lam = np.clip(lam, 0.0, None)
        roots.append(U * np.sqrt(lam))
        if lam[-1] > 0 and n_t > 1 and lam[-2] > RANK_ONE_RATIO * lam[-1]:
            exact = False
        W0[:, m] = U[:, -1] * math.sqrt(lam[-1])

    def finish(W):
        gu, ge = _candidate_quality(cs, cfg, variant, star, W, eu, ee)
        if variant.secrecy:
            s = secrecy_scale(gu, ge, cfg)
            if s < 1.0:
                W = W * math.sqrt(s)
                gu, ge = gu * s, ge * s
        return W, gu, ge

    if exact:
        W, gu, ge = finish(W0)
        return RandomizationResult(W, equal_split_min_rate(gu, cfg, variant.common), True, False, 1)

    rng = stream(seed, _S_RANDOMIZATION, 0)
    best = None
    n_ok = 0
    for l in range(L + 1):
        if l == 0:
            W = W0.copy()
        else:
            z = (rng.standard_normal((n_t, K1)) + 1j * rng.standard_normal((n_t, K1))) / math.sqrt(2)
            W = np.stack([roots[m] @ z[:, m] for m in range(K1)], axis=1)
        power = float(np.sum(np.abs(W) ** 2))
        if power <= 0:
            continue
        W = W * math.sqrt(cfg.P_max / power)
        try:
            W, gu, ge = finish(W)
        except NumericError:
            continue
        bs = BeamSolution.from_precoders(W)
        if not check_feasibility(cs, star, bs, cfg, secrecy=variant.secrecy, tol=tol).feasible:
            continue
        n_ok += 1
        r = equal_split_min_rate(gu, cfg, variant.common)
        if best is None or r > best[0]:
            best = (r, W)
    if best is None:
        W, gu, _ = finish(W0)
        return RandomizationResult(W, equal_split_min_rate(gu, cfg, variant.common), False, True, 0)
    return RandomizationResult(best[1], best[0], False, False, n_ok)


# -- driver ------------------------------------------------------------------------------------

@dataclass
class OptimizeResult:
    beam: BeamSolution
    star: StarState
    report: RateReport
    trace: ConvergenceTrace
    relaxed_min_rate: float
    relaxed_P: list[np.ndarray]
    randomization: RandomizationResult
    degraded: bool
    status: str


def optimize(cs: ChannelSet, cfg: SystemConfig | None = None, settings: OptimizerSettings | None = None,
             variant: Variant = Variant(), optimize_phases: bool = True,
             star0: StarState | None = None, P0: list[np.ndarray] | None = None) -> OptimizeResult:
    """Run the alternating scheme.

    Starts from the deterministic initialization unless a surface ``star0``
    and/or covariances ``P0`` are supplied.
    """
    cfg = cfg or cs.cfg
    settings = settings or OptimizerSettings()
    if variant.surface == "ris" and cs.N_S % 2:
        raise ConfigurationError("separate reflect/transmit RIS halves need an even N_S")
    star = star0 if star0 is not None else initial_star(cs, variant)
    P = initial_beams(cs, cfg, star, variant) if P0 is None else _secure_scale(cs, cfg, variant, star_Q(star), list(P0))
    point = evaluate_point(cs, cfg, variant, P, star)

    trace = ConvergenceTrace()
    trace.append(TraceRow(0, point.R, point.lam, 0.0, 0.0, 0, 0, "init", 0.0))
    status = "max_outer"
    degraded = False
    for n in range(1, settings.max_outer + 1):
        t0 = time.perf_counter()
        R_prev = point.R
        gaps = (math.nan, math.nan)
        inner1 = 0
        step = []
        if optimize_phases:
            ph = phase_stage(point, cs, cfg, settings, variant)
            inner1 = ph.iterations
            gaps = (ph.gap_r, ph.gap_t)
            if not ph.converged:
                step.append("rank" if ph.solved_any else "phase_fail")
            if ph.solved_any:
                Qn = star_Q(ph.star)
                try:
                    cand = evaluate_point(cs, cfg, variant, _secure_scale(cs, cfg, variant, Qn, point.P), ph.star)
                except NumericError:
                    cand = None
                if cand is not None and cand.R >= point.R:
                    point = cand
                else:
                    step.append("phase_rejected")
        bm = beam_stage(point, cs, cfg, settings, variant)
        if bm.statuses and bm.statuses[0] not in ("optimal", "inaccurate"):
            step.append("beam_fail")
        point = bm.point
        ms = 1e3 * (time.perf_counter() - t0)
        trace.append(TraceRow(n, point.R, point.lam, gaps[0], gaps[1], inner1, bm.iterations,
                              "+".join(step) or "ok", ms))
        if abs(point.R - R_prev) <= settings.eps:
            status = "converged"
            break

    rnd = gaussian_randomization(point.P, cs, cfg, point.star, settings.rand_trials, settings.seed, variant)
    degraded = rnd.degraded
    gu, _ = gain_tables_vector(cs, point.star, rnd.W)
    gc, _ = user_sinrs(gu, cfg.sigma2)
    R_c = float(np.min(np.log2(1 + gc))) if variant.common else 0.0
    beam = BeamSolution.from_precoders(rnd.W, np.full(cs.K, R_c / cs.K))
    if not variant.common:
        beam.w[:, 0] = 0.0
        beam.P[0] = np.zeros((cs.N_T, cs.N_T), complex)
    report = rates(cs, point.star, beam, cfg)
    feas = check_feasibility(cs, point.star, beam, cfg, secrecy=variant.secrecy)
    report.worst_residual = feas.worst
    report.feasible = feas.feasible
    report.trace = trace.rows
    return OptimizeResult(beam, point.star, report, trace, point.R, point.P, rnd, degraded, status)
