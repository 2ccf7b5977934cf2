"""Convex subproblems of the alternating scheme, expressed as :class:`SdpProblem`.

* :func:`build_phase_problem` -- STAR-RIS coefficients with beamformers fixed;
  the rank-one requirement on ``Q^l`` is handled by a nuclear-minus-spectral
  penalty whose concave part is linearized at the current inner iterate.
* :func:`build_beamforming_problem` -- beamformer covariances and the common
  rate slack with the surface fixed; the bilinear terms ``tau * psi_k`` and
  ``(beta - 1) * psi_k`` are replaced by first-order expansions around the
  anchor.

Variable names: ``P_c`` and ``P_1 .. P_K`` for the stream covariances,
``Q_r``/``Q_t`` for the lifted surface vectors, scalars ``t``, ``tau``, ``beta``.
A single common-rate slack ``beta`` is shared by all users, so every
``tau_k = beta**(1/K)`` collapses into one ``tau``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hm
from .channel import ChannelSet
from .config import SystemConfig
from .conic import Affine, SdpProblem, tr
from .errors import ConfigurationError
from .model import gain_tables_trace, receive_matrices

SIDES = ("r", "t")


@dataclass(frozen=True)
class Variant:
    """Structural switches distinguishing the proposed scheme from its baselines."""

    common: bool = True  # RSMA common stream present
    secrecy: bool = True  # internal/external eavesdropping constraints enforced
    surface: str = "star"  # "star": energy splitting on every element; "ris": split halves

    def __post_init__(self):
        if self.surface not in ("star", "ris"):
            raise ConfigurationError(f"unknown surface mode {self.surface!r}")


def active_elements(n_s: int, surface: str, side: str) -> np.ndarray:
    """Indices of elements that radiate towards ``side``."""
    if surface == "star":
        return np.arange(n_s)
    if n_s % 2:
        raise ConfigurationError("separate reflect/transmit RIS halves need an even N_S")
    half = n_s // 2
    return np.arange(half) if side == "r" else np.arange(half, n_s)


def stream_names(K: int, common: bool = True) -> list[str]:
    return (["P_c"] if common else []) + [f"P_{k + 1}" for k in range(K)]


@dataclass
class IterateAnchor:
    """Expansion point shared by both builders.

    ``P`` holds K+1 covariances (index 0 = common, a zero matrix when there is
    no common stream).  ``Q`` holds full N_S x N_S matrices per side; for the
    phase problem it is also the point where the spectral norm is linearized.
    """

    P: list[np.ndarray]
    Q: dict[str, np.ndarray]
    tau: float = 1.0
    beta: float = 1.0
    lam: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        vals = [self.tau, self.beta, self.lam, self.rho]
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("anchor scalars must be finite")
        if self.lam < 0:
            raise ConfigurationError("Dinkelbach parameter must be nonnegative")
        if self.rho < 0:
            raise ConfigurationError("penalty weight must be nonnegative")


# -- spectral-norm linearization ---------------------------------------------------

@dataclass
class SpectralLinearization:
    """Supporting hyperplane of the spectral norm at ``Q0``:
    ``A(Q) = ||Q0||_2 + Tr(u u^H (Q - Q0))`` with ``u`` the top eigenvector of ``Q0``.
    """

    anchor_norm: float
    u: np.ndarray
    anchor: np.ndarray = field(repr=False)

    @property
    def direction(self) -> np.ndarray:
        return np.outer(self.u, np.conj(self.u))

    def __call__(self, Q: np.ndarray) -> float:
        D = np.asarray(Q, complex) - self.anchor
        return self.anchor_norm + float(np.real(np.conj(self.u) @ D @ self.u))

    def affine(self, name: str) -> Affine:
        const = self.anchor_norm - float(np.real(np.conj(self.u) @ self.anchor @ self.u))
        return tr(self.direction, name) + const


def linearize_spectral(Q_anchor: np.ndarray) -> SpectralLinearization:
    Q_anchor = hm.hermitize(Q_anchor)
    lam, u = hm.largest_eigpair(Q_anchor)
    return SpectralLinearization(hm.spectral_norm(Q_anchor), u, Q_anchor)


# -- first-order surrogates for the beamforming problem -------------------------------

def _psi_affine(B: np.ndarray, K: int, sigma2: float) -> Affine:
    expr = Affine(sigma2)
    for i in range(K):
        expr = expr + tr(B, f"P_{i + 1}")
    return expr


def _anchor_psi(cs: ChannelSet, cfg: SystemConfig, anchor: IterateAnchor) -> np.ndarray:
    gu, _ = gain_tables_trace(cs, anchor.Q, anchor.P)
    return gu[:, 1:].sum(axis=1) + cfg.sigma2


def linearize_f(cs: ChannelSet, cfg: SystemConfig, anchor: IterateAnchor, k: int, Bu=None) -> Affine:
    """Affine expansion of ``tau * psi_k(P)`` at the anchor (surface held fixed).

    ``tau0 * psi_k(P) + psi_k(P0) * (tau - tau0)``: exact at the anchor, with
    gradient ``tau0 * B_k`` in every private covariance and ``psi_k(P0)`` in tau.
    """
    if Bu is None:
        Bu, _ = receive_matrices(cs, anchor.Q)
    psi0 = float(_anchor_psi(cs, cfg, anchor)[k])
    return anchor.tau * _psi_affine(Bu[k], cs.K, cfg.sigma2) + psi0 * (Affine(scalars={"tau": 1.0}) - anchor.tau)


def linearize_g(cs: ChannelSet, cfg: SystemConfig, anchor: IterateAnchor, k: int, Bu=None) -> Affine:
    """Affine expansion of ``(beta - 1) * psi_k(P)`` at the anchor."""
    if Bu is None:
        Bu, _ = receive_matrices(cs, anchor.Q)
    psi0 = float(_anchor_psi(cs, cfg, anchor)[k])
    return (anchor.beta - 1.0) * _psi_affine(Bu[k], cs.K, cfg.sigma2) + psi0 * (Affine(scalars={"beta": 1.0}) - anchor.beta)


def _secrecy_constraints(prob: SdpProblem, K: int, gain, cfg: SystemConfig, J: int, eve_gain, common: bool):
    """Add internal and external eavesdropping constraints.

    ``gain(k, m)`` / ``eve_gain(j, m)`` return the affine received power of stream
    ``m`` (0 = common) at user ``k`` / Eve ``j``.
    """
    for k in range(K):
        for i in range(K):
            if i == k:
                continue
            lhs = (1.0 / cfg.r_0) * gain(k, i + 1)
            for kp in range(K):
                if kp not in (k, i):
                    lhs = lhs - gain(k, kp + 1)
            prob.add(lhs, "<=", cfg.sigma2, label=f"internal_{k}_{i}")
    for j in range(J):
        priv_total = Affine()
        for kp in range(K):
            priv_total = priv_total + eve_gain(j, kp + 1)
        for k in range(K):
            lhs = (1.0 / cfg.r_E) * eve_gain(j, k + 1) - (priv_total - eve_gain(j, k + 1))
            if common:
                lhs = lhs - eve_gain(j, 0)
            prob.add(lhs, "<=", cfg.sigma2_E, label=f"eve_private_{j}_{k}")
        if common:
            prob.add((1.0 / cfg.r_E) * eve_gain(j, 0) - priv_total, "<=", cfg.sigma2_E, label=f"eve_common_{j}")


def build_beamforming_problem(cs: ChannelSet, cfg: SystemConfig, anchor: IterateAnchor,
                              variant: Variant = Variant()) -> SdpProblem:
    """Relaxed beamforming / common-rate problem around ``anchor`` with the surface fixed."""
    if anchor.lam < 0:
        raise ConfigurationError("Dinkelbach parameter must be nonnegative")
    K, J, n_t = cs.K, cs.J, cs.N_T
    Bu, Be = receive_matrices(cs, anchor.Q)
    prob = SdpProblem("beamforming")
    names = stream_names(K, variant.common)
    for name in names:
        prob.matrix(name, n_t)
    t = prob.scalar("t")
    if variant.common:
        tau = prob.scalar("tau")
        beta = prob.scalar("beta")

    def gain(k, m):
        if m == 0 and not variant.common:
            return Affine()
        return tr(Bu[k], names[m] if variant.common else names[m - 1])

    def eve_gain(j, m):
        if m == 0 and not variant.common:
            return Affine()
        return tr(Be[j], names[m] if variant.common else names[m - 1])

    for k in range(K):
        psi = _psi_affine(Bu[k], K, cfg.sigma2)
        f = linearize_f(cs, cfg, anchor, k, Bu) if variant.common else psi
        rhs = f
        if anchor.lam != 0:
            phi = psi - gain(k, k + 1)
            rhs = f - anchor.lam * phi
        prob.add(t, "<=", rhs, label=f"rate_{k}")
        if variant.common:
            prob.add(linearize_g(cs, cfg, anchor, k, Bu), "<=", gain(k, 0), label=f"common_{k}")

    if variant.common:
        if K >= 2:
            prob.add_power_hypograph(tau, beta, 1.0 / K, label="tau_beta")
        else:
            prob.add(tau, "<=", beta, label="tau_beta")
        prob.add(beta, ">=", 1.0, label="common_nonneg")

    if variant.secrecy:
        _secrecy_constraints(prob, K, gain, cfg, J, eve_gain, variant.common)

    power = Affine()
    for name in names:
        power = power + tr(np.eye(n_t), name)
    prob.add(power, "<=", cfg.P_max, label="power")
    prob.maximize(t)
    return prob


# -- phase-shift problem ------------------------------------------------------------------

def _reduced(M: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return M[np.ix_(idx, idx)]


def build_phase_problem(cs: ChannelSet, cfg: SystemConfig, anchor: IterateAnchor,
                        variant: Variant = Variant()) -> SdpProblem:
    """Penalized phase-shift problem with the beamformers fixed at ``anchor.P``.

    ``tau`` and ``beta`` stay at their anchor values: with ``tau`` fixed in the
    rate constraints the slack inequality ``tau <= beta**(1/K)`` forces
    ``beta >= beta0``, and the common-stream constraint is then loosest at
    ``beta = beta0`` where it is exactly linear in ``Q``.
    """
    K, J, n_s = cs.K, cs.J, cs.N_S
    act = {s: active_elements(n_s, variant.surface, s) for s in SIDES}
    P = [np.asarray(p, complex) for p in anchor.P]
    if len(P) != K + 1:
        raise ConfigurationError("anchor must hold K+1 covariances")
    for s in SIDES:
        if anchor.Q.get(s) is None or anchor.Q[s].shape != (n_s, n_s):
            raise ConfigurationError("anchor is missing a full-size Q for each side")

    prob = SdpProblem("phase")
    qname = {s: prob.matrix(f"Q_{s}", act[s].size) for s in SIDES}
    t = prob.scalar("t")

    def coeffs(G: np.ndarray, side: str) -> list[np.ndarray]:
        Gs = G[act[side]]
        return [Gs @ Pm @ hm.herm(Gs) for Pm in P]

    Au = [coeffs(G, s) for G, s in zip(cs.gamma_users, cs.user_sides)]
    Ae = [coeffs(G, s) for G, s in zip(cs.gamma_eves, cs.eve_sides)]

    def gain(k, m):
        return tr(Au[k][m], qname[cs.user_sides[k]])

    def eve_gain(j, m):
        return tr(Ae[j][m], qname[cs.eve_sides[j]])

    for k in range(K):
        psi = Affine(cfg.sigma2)
        for i in range(K):
            psi = psi + gain(k, i + 1)
        rhs = anchor.tau * psi
        if anchor.lam != 0:
            rhs = rhs - anchor.lam * (psi - gain(k, k + 1))
        prob.add(t, "<=", rhs, label=f"rate_{k}")
        if variant.common:
            prob.add((anchor.beta - 1.0) * psi, "<=", gain(k, 0), label=f"common_{k}")

    if variant.secrecy:
        _secrecy_constraints(prob, K, gain, cfg, J, eve_gain, variant.common)

    # amplitude coupling on the diagonals
    if variant.surface == "star":
        for n in range(n_s):
            E = np.zeros((n_s, n_s))
            E[n, n] = 1.0
            prob.add(tr(E, qname["r"]) + tr(E, qname["t"]), "==", 1.0, label=f"diag_{n}")
    else:
        for s in SIDES:
            m = act[s].size
            for n in range(m):
                E = np.zeros((m, m))
                E[n, n] = 1.0
                prob.add(tr(E, qname[s]), "==", 1.0, label=f"diag_{s}_{n}")

    objective = t
    if anchor.rho > 0:
        for s in SIDES:
            lin = linearize_spectral(_reduced(anchor.Q[s], act[s]))
            nuclear = tr(np.eye(act[s].size), qname[s])  # trace of a PSD matrix
            objective = objective - anchor.rho * (nuclear - lin.affine(qname[s]))
    prob.maximize(objective)
    return prob


def expand_Q(Qr_red: np.ndarray, Qt_red: np.ndarray, n_s: int, surface: str) -> dict[str, np.ndarray]:
    """Place reduced solver matrices back into full N_S x N_S matrices."""
    out = {}
    for s, M in zip(SIDES, (Qr_red, Qt_red)):
        idx = active_elements(n_s, surface, s)
        full = np.zeros((n_s, n_s), complex)
        full[np.ix_(idx, idx)] = M
        out[s] = full
    return out


# -- helpers for checks ---------------------------------------------------------------------

def constraint_violation(prob: SdpProblem, values: dict) -> float:
    """Largest violation of the affine/power constraints and PSD cones at ``values``."""
    worst = 0.0
    for c in prob.constraints:
        v = c.expr.evaluate(values)
        worst = max(worst, abs(v) if c.sense == "==" else v)
    for p in prob.powers:
        x = p.x.evaluate(values)
        worst = max(worst, p.z.evaluate(values) - max(x, 0.0) ** p.alpha, -x)
    for name in prob.matrix_vars:
        worst = max(worst, -float(hm.eigvalsh(values[name])[0]))
    return worst


def best_t(prob: SdpProblem, values: dict) -> float:
    """Largest ``t`` allowed by the ``rate_*`` constraints at ``values`` (t excluded)."""
    vals = dict(values)
    vals["t"] = 0.0
    return min(-c.expr.evaluate(vals) for c in prob.labelled("rate_"))


def anchor_values(cs: ChannelSet, anchor: IterateAnchor, variant: Variant, kind: str) -> dict:
    """Variable assignment of ``anchor`` in the namespace of the ``kind`` problem."""
    if kind == "beamforming":
        names = stream_names(cs.K, variant.common)
        Ps = anchor.P if variant.common else anchor.P[1:]
        vals: dict = dict(zip(names, Ps))
        if variant.common:
            vals["tau"] = anchor.tau
            vals["beta"] = anchor.beta
        return vals
    vals = {}
    for s in SIDES:
        idx = active_elements(cs.N_S, variant.surface, s)
        vals[f"Q_{s}"] = _reduced(anchor.Q[s], idx)
    return vals
