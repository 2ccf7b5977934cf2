"""Quick invariant checks runnable without a test runner (``star-rsma selftest``)."""
from __future__ import annotations

import sys

import numpy as np

from . import channel
from . import hermitian as hm
from .config import SystemConfig
from .conic import SdpProblem, solve, tr
from .model import BeamSolution, StarState, gain_tables_trace, gain_tables_vector, psi_phi, star_Q, user_sinrs
from .subproblems import linearize_spectral


def _random_point(cs, rng):
    n, K1 = cs.N_S, cs.K + 1
    split = rng.uniform(0, 1, n)
    star = StarState(np.sqrt(split), np.sqrt(1 - split), rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n))
    W = rng.standard_normal((cs.N_T, K1)) + 1j * rng.standard_normal((cs.N_T, K1))
    return star, BeamSolution.from_precoders(W)


def check_trace_vs_vector(n: int) -> float:
    cfg = SystemConfig(N_T=4, N_S=8, K_r=1, K_t=1)
    rng = np.random.default_rng(0)
    worst = 0.0
    for seed in range(n):
        cs = channel.generate(cfg, seed)
        star, bs = _random_point(cs, rng)
        a = np.concatenate([x.ravel() for x in gain_tables_vector(cs, star, bs.w)])
        b = np.concatenate([x.ravel() for x in gain_tables_trace(cs, star_Q(star), bs.P)])
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))))
    return worst


def check_psi_phi(n: int) -> float:
    cfg = SystemConfig(N_T=4, N_S=8, K_r=1, K_t=1)
    rng = np.random.default_rng(1)
    worst = 0.0
    for seed in range(n):
        cs = channel.generate(cfg, seed)
        star, bs = _random_point(cs, rng)
        gu, _ = gain_tables_vector(cs, star, bs.w)
        _, gp = user_sinrs(gu, cfg.sigma2)
        psi, phi = psi_phi(gu, cfg.sigma2)
        worst = max(worst, float(np.max(np.abs(1 + gp - psi / phi))))
    return worst


def check_rank_one(n: int) -> float:
    """Returns the worst violation across the three rank-one properties."""
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(n):
        Q = hm.random_psd(rng, 6)
        worst = max(worst, -hm.rank_one_gap(Q))
        v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        worst = max(worst, abs(hm.rank_one_gap(np.outer(v, v.conj()))) - 1e-8)
        lin = linearize_spectral(hm.random_psd(rng, 6))
        worst = max(worst, lin(Q) - hm.spectral_norm(Q))
    return worst


def check_conic() -> float:
    C = np.array([[2.0, 1j], [-1j, 1.0]])
    prob = SdpProblem("selftest")
    prob.matrix("X", 2)
    prob.add(tr(np.eye(2), "X"), "==", 1.0)
    prob.maximize(tr(C, "X"))
    sol = solve(prob)
    return abs(sol.objective - float(hm.eigvalsh(C)[-1])) if sol.ok else float("inf")


def run_all(n_instances: int = 20, out=sys.stdout) -> list[str]:
    checks = [
        ("trace form matches vector form", lambda: check_trace_vs_vector(n_instances), 1e-9),
        ("1 + gamma_p = psi / phi", lambda: check_psi_phi(n_instances), 1e-9),
        ("rank-one gap and supporting hyperplane", lambda: check_rank_one(n_instances), 1e-10),
        ("conic layer recovers the top eigenvalue", check_conic, 1e-6),
    ]
    failures = []
    for name, fn, tol in checks:
        val = fn()
        ok = val <= tol
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}  (worst {val:.3g}, tol {tol:g})\n")
        if not ok:
            failures.append(name)
    return failures
