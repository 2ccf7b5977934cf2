"""Ground-truth SINRs, rates and constraint residuals.

Stream index convention used throughout the package: column ``0`` of every
gain table is the common stream and column ``k + 1`` is user ``k``'s private
stream.  ``gains[k, m]`` is the received power ``|h_k^H Theta^l H w_m|^2`` at
user ``k`` (with ``l`` its side); ``eve_gains[j, m]`` is the same at Eve ``j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hm
from .channel import ChannelSet
from .config import SystemConfig
from .errors import ConfigurationError, NumericError

TOL_FEAS = 1e-6


@dataclass
class StarState:
    """Per-element STAR-RIS coefficients ``beta * exp(j theta)`` for both sides.

    ``Theta^l = diag(q_l^H)``, so ``q_l = beta_l * exp(-j theta_l)``.
    """

    beta_r: np.ndarray
    beta_t: np.ndarray
    theta_r: np.ndarray
    theta_t: np.ndarray

    def __post_init__(self):
        self.beta_r = np.asarray(self.beta_r, dtype=float)
        self.beta_t = np.asarray(self.beta_t, dtype=float)
        self.theta_r = np.mod(np.asarray(self.theta_r, dtype=float), 2 * math.pi)
        self.theta_t = np.mod(np.asarray(self.theta_t, dtype=float), 2 * math.pi)

    @property
    def N_S(self) -> int:
        return self.beta_r.size

    def q(self, side: str) -> np.ndarray:
        if side == "r":
            return self.beta_r * np.exp(-1j * self.theta_r)
        if side == "t":
            return self.beta_t * np.exp(-1j * self.theta_t)
        raise ConfigurationError(f"unknown side {side!r}")

    def Q(self, side: str) -> np.ndarray:
        q = self.q(side)
        return np.outer(q, np.conj(q))

    def theta_matrix(self, side: str) -> np.ndarray:
        return np.diag(np.conj(self.q(side)))

    @classmethod
    def from_q(cls, q_r: np.ndarray, q_t: np.ndarray) -> "StarState":
        return cls(np.abs(q_r), np.abs(q_t), -np.angle(q_r), -np.angle(q_t))

    @classmethod
    def uniform(cls, n: int, theta_r=None, theta_t=None) -> "StarState":
        b = np.full(n, 1 / math.sqrt(2))
        zeros = np.zeros(n)
        return cls(b, b.copy(), zeros if theta_r is None else theta_r, zeros if theta_t is None else theta_t)

    def copy(self) -> "StarState":
        return StarState(self.beta_r.copy(), self.beta_t.copy(), self.theta_r.copy(), self.theta_t.copy())


@dataclass
class BeamSolution:
    """Precoder covariances ``P[0]`` (common), ``P[1..K]`` (private).

    ``w`` optionally holds the matching precoders as columns, shape (N_T, K+1);
    ``c_alloc`` is the common-rate share C_k of each user (bits/s/Hz).
    """

    P: list[np.ndarray]
    c_alloc: np.ndarray
    w: np.ndarray | None = None

    @classmethod
    def from_precoders(cls, W: np.ndarray, c_alloc=None) -> "BeamSolution":
        W = np.asarray(W, dtype=complex)
        P = [np.outer(W[:, m], np.conj(W[:, m])) for m in range(W.shape[1])]
        K = W.shape[1] - 1
        c = np.zeros(K) if c_alloc is None else np.asarray(c_alloc, float)
        return cls(P=P, c_alloc=c, w=W)

    @property
    def K(self) -> int:
        return len(self.P) - 1

    @property
    def total_power(self) -> float:
        return float(sum(np.trace(P).real for P in self.P))


# -- gain tables ---------------------------------------------------------------

def gain_tables_vector(cs: ChannelSet, star: StarState, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Received powers from the direct expression ``|h^H Theta H w|^2``."""
    W = np.asarray(W, complex)
    gu = np.zeros((cs.K, W.shape[1]))
    for k, (h, side) in enumerate(zip(cs.h, cs.user_sides)):
        eff = np.conj(h) @ star.theta_matrix(side) @ cs.H
        gu[k] = np.abs(eff @ W) ** 2
    ge = np.zeros((cs.J, W.shape[1]))
    for j, (g, side) in enumerate(zip(cs.g, cs.eve_sides)):
        eff = np.conj(g) @ star.theta_matrix(side) @ cs.H
        ge[j] = np.abs(eff @ W) ** 2
    return gu, ge


def receive_matrices(cs: ChannelSet, Q: dict[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """``B_k = Gamma_k^H Q^l Gamma_k`` for users and eavesdroppers.

    With these, ``Tr(Gamma_k P Gamma_k^H Q^l) = Tr(B_k P)``.
    """
    Bu = np.stack([hm.herm(G) @ Q[s] @ G for G, s in zip(cs.gamma_users, cs.user_sides)])
    if cs.J:
        Be = np.stack([hm.herm(G) @ Q[s] @ G for G, s in zip(cs.gamma_eves, cs.eve_sides)])
    else:
        Be = np.zeros((0, cs.N_T, cs.N_T), complex)
    return Bu, Be


def gain_tables_trace(cs: ChannelSet, Q: dict[str, np.ndarray], P: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Received powers from the lifted form ``Tr(Gamma P Gamma^H Q)``."""
    Bu, Be = receive_matrices(cs, Q)
    Ps = np.stack([np.asarray(p, complex) for p in P])
    # Tr(B P) = sum_ij B_ij P_ji
    gu = np.einsum("kij,mji->km", Bu, Ps).real
    ge = np.einsum("kij,mji->km", Be, Ps).real if cs.J else np.zeros((0, len(P)))
    return gu, ge


def star_Q(star: StarState) -> dict[str, np.ndarray]:
    return {"r": star.Q("r"), "t": star.Q("t")}


def gain_tables(cs: ChannelSet, star: StarState, bs: BeamSolution, form: str = "auto"):
    """Gain tables in vector form when precoders exist, else via trace forms."""
    if form == "vector" or (form == "auto" and bs.w is not None):
        if bs.w is None:
            raise ConfigurationError("vector-form evaluation needs precoder vectors")
        return gain_tables_vector(cs, star, bs.w)
    return gain_tables_trace(cs, star_Q(star), bs.P)


# -- SINRs ---------------------------------------------------------------------

def user_sinrs(gu: np.ndarray, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    K = gu.shape[0]
    own = gu[np.arange(K), np.arange(K) + 1]
    interf = gu[:, 1:].sum(axis=1)
    gamma_c = gu[:, 0] / (interf + sigma2)
    gamma_p = own / (interf - own + sigma2)
    return gamma_c, gamma_p


def internal_sinrs(gu: np.ndarray, sigma2: float) -> np.ndarray:
    """``out[k, i]`` is the SINR of private stream ``i`` at user ``k`` (diagonal NaN)."""
    K = gu.shape[0]
    priv = gu[:, 1:]
    tot = priv.sum(axis=1)
    out = np.full((K, K), np.nan)
    for k in range(K):
        for i in range(K):
            if i != k:
                out[k, i] = priv[k, i] / (tot[k] - priv[k, k] - priv[k, i] + sigma2)
    return out


def eve_sinrs(ge: np.ndarray, sigma2_E: float) -> tuple[np.ndarray, np.ndarray]:
    """Common-stream SINR (J,) and private-stream SINRs (J, K) at each Eve."""
    priv = ge[:, 1:]
    tot_priv = priv.sum(axis=1)
    gamma_c = ge[:, 0] / (tot_priv + sigma2_E)
    gamma_p = priv / (ge[:, [0]] + tot_priv[:, None] - priv + sigma2_E)
    return gamma_c, gamma_p


def sinr_user(cs, star, bs, k, cfg: SystemConfig | None = None, form="auto") -> tuple[float, float]:
    cfg = cfg or cs.cfg
    gu, _ = gain_tables(cs, star, bs, form)
    gc, gp = user_sinrs(gu, cfg.sigma2)
    return float(gc[k]), float(gp[k])


def sinr_internal(cs, star, bs, k, i, cfg: SystemConfig | None = None, form="auto") -> float:
    if i == "c" or i == k:
        raise ConfigurationError("internal SINR is defined only for another user's private stream")
    cfg = cfg or cs.cfg
    gu, _ = gain_tables(cs, star, bs, form)
    return float(internal_sinrs(gu, cfg.sigma2)[k, i])


def sinr_eve(cs, star, bs, j, cfg: SystemConfig | None = None, form="auto") -> tuple[float, np.ndarray]:
    cfg = cfg or cs.cfg
    _, ge = gain_tables(cs, star, bs, form)
    gc, gp = eve_sinrs(ge, cfg.sigma2_E)
    return float(gc[j]), gp[j].copy()


def psi_phi(gu: np.ndarray, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    """Private-power-plus-noise ``psi_k`` and interference-plus-noise ``phi_k``."""
    K = gu.shape[0]
    psi = gu[:, 1:].sum(axis=1) + sigma2
    phi = psi - gu[np.arange(K), np.arange(K) + 1]
    return psi, phi


# -- rates ---------------------------------------------------------------------

@dataclass
class RateReport:
    gamma_c: np.ndarray
    gamma_p: np.ndarray
    C: np.ndarray
    R_p: np.ndarray
    R_tot: np.ndarray
    R_c: float
    min_rate: float
    gamma_internal: np.ndarray
    gamma_eve_c: np.ndarray
    gamma_eve_p: np.ndarray
    worst_residual: float = float("nan")
    feasible: bool | None = None
    trace: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        d = {
            "min_rate": self.min_rate,
            "R_c": self.R_c,
            "worst_residual": self.worst_residual,
            "feasible": self.feasible,
        }
        for k in range(len(self.R_tot)):
            d[f"gamma_c_{k + 1}"] = float(self.gamma_c[k])
            d[f"gamma_p_{k + 1}"] = float(self.gamma_p[k])
            d[f"C_{k + 1}"] = float(self.C[k])
            d[f"R_p_{k + 1}"] = float(self.R_p[k])
            d[f"R_tot_{k + 1}"] = float(self.R_tot[k])
        K = len(self.R_tot)
        for k in range(K):
            for i in range(K):
                if i != k:
                    d[f"gamma_{k + 1}_to_{i + 1}"] = float(self.gamma_internal[k, i])
        for j in range(len(self.gamma_eve_c)):
            d[f"gamma_E_c_{j + 1}"] = float(self.gamma_eve_c[j])
            for k in range(K):
                d[f"gamma_E_{k + 1}_{j + 1}"] = float(self.gamma_eve_p[j, k])
        return d

    def to_kv(self) -> str:
        """Flat ``key = value`` block, one quantity per line."""
        return "".join(f"{k} = {v!r}\n" for k, v in self.as_dict().items())


def rates_from_gains(gu: np.ndarray, ge: np.ndarray, c_alloc, cfg: SystemConfig) -> RateReport:
    gc, gp = user_sinrs(gu, cfg.sigma2)
    R_c = float(np.min(np.log2(1 + gc)))
    C = np.clip(np.asarray(c_alloc, float), 0.0, None)
    if C.sum() > R_c:
        C = C * (R_c / C.sum()) if C.sum() > 0 else C
    R_p = np.log2(1 + gp)
    R_tot = C + R_p
    egc, egp = eve_sinrs(ge, cfg.sigma2_E)
    return RateReport(
        gamma_c=gc,
        gamma_p=gp,
        C=C,
        R_p=R_p,
        R_tot=R_tot,
        R_c=R_c,
        min_rate=float(np.min(R_tot)),
        gamma_internal=internal_sinrs(gu, cfg.sigma2),
        gamma_eve_c=egc,
        gamma_eve_p=egp,
    )


def rates(cs: ChannelSet, star: StarState, bs: BeamSolution, cfg: SystemConfig | None = None, form="auto") -> RateReport:
    """Evaluate every rate quantity; ``C_k`` comes from ``bs.c_alloc`` clipped to ``R_c``."""
    cfg = cfg or cs.cfg
    gu, ge = gain_tables(cs, star, bs, form)
    return rates_from_gains(gu, ge, bs.c_alloc, cfg)


def equal_split_min_rate(gu: np.ndarray, cfg: SystemConfig, common: bool = True) -> float:
    """Min total rate when the whole common rate is split equally (C_k = R_c / K)."""
    gc, gp = user_sinrs(gu, cfg.sigma2)
    R_c = float(np.min(np.log2(1 + gc))) if common else 0.0
    return float(np.min(R_c / gu.shape[0] + np.log2(1 + gp)))


# -- feasibility -----------------------------------------------------------------

@dataclass
class FeasibilityReport:
    residuals: dict[str, float]
    tol: float = TOL_FEAS

    @property
    def worst(self) -> float:
        return max(self.residuals.values()) if self.residuals else -math.inf

    @property
    def feasible(self) -> bool:
        return self.worst <= self.tol

    def worst_name(self) -> str:
        return max(self.residuals, key=self.residuals.get)


def secrecy_residuals(gu: np.ndarray, ge: np.ndarray, cfg: SystemConfig) -> dict[str, float]:
    """Linearized secrecy residuals ``(S / r - I - noise) / noise``; <= 0 when satisfied."""
    out = {}
    K = gu.shape[0]
    priv = gu[:, 1:]
    if K > 1:
        worst = -math.inf
        for k in range(K):
            for i in range(K):
                if i == k:
                    continue
                interf = priv[k].sum() - priv[k, k] - priv[k, i]
                worst = max(worst, (priv[k, i] / cfg.r_0 - interf - cfg.sigma2) / cfg.sigma2)
        out["internal"] = worst
    if ge.shape[0]:
        s2 = cfg.sigma2_E
        epriv = ge[:, 1:]
        tot = epriv.sum(axis=1)
        res_p = (epriv / cfg.r_E - (ge[:, [0]] + tot[:, None] - epriv) - s2) / s2
        res_c = (ge[:, 0] / cfg.r_E - tot - s2) / s2
        out["eve_private"] = float(res_p.max())
        out["eve_common"] = float(res_c.max())
    return out


def check_feasibility(
    cs: ChannelSet,
    star: StarState,
    bs: BeamSolution,
    cfg: SystemConfig | None = None,
    secrecy: bool = True,
    form: str = "auto",
    tol: float = TOL_FEAS,
) -> FeasibilityReport:
    """Signed residuals of every constraint of the max-min problem.

    All residuals are dimensionless and ``<= 0`` when the constraint holds;
    equality constraints report an absolute deviation.  With ``secrecy=False``
    the internal and external eavesdropping constraints are skipped.
    """
    cfg = cfg or cs.cfg
    res = {
        "power": bs.total_power / cfg.P_max - 1.0,
        "energy_split": float(np.max(np.abs(star.beta_r**2 + star.beta_t**2 - 1.0))),
        "amplitude": float(max(np.max(-star.beta_r), np.max(-star.beta_t),
                               np.max(star.beta_r - 1), np.max(star.beta_t - 1))),
        "common_alloc": float(np.max(-np.asarray(bs.c_alloc, float), initial=0.0)),
    }
    for P in bs.P:
        lam = hm.eigvalsh(P)[0]
        res["psd"] = max(res.get("psd", -math.inf), float(-lam) / cfg.P_max)
    if secrecy:
        gu, ge = gain_tables(cs, star, bs, form)
        res.update(secrecy_residuals(gu, ge, cfg))
    return FeasibilityReport(res, tol)


def secrecy_scale(gu: np.ndarray, ge: np.ndarray, cfg: SystemConfig) -> float:
    """Largest ``s`` in (0, 1] such that scaling every stream's power by ``s`` meets all secrecy constraints.

    Each constraint has the form ``s * a <= noise`` with ``a`` linear in the
    received powers, so the bound is closed form.
    """
    a_list = []
    K = gu.shape[0]
    priv = gu[:, 1:]
    for k in range(K):
        for i in range(K):
            if i != k:
                a = priv[k, i] / cfg.r_0 - (priv[k].sum() - priv[k, k] - priv[k, i])
                a_list.append((a, cfg.sigma2))
    if ge.shape[0]:
        epriv = ge[:, 1:]
        tot = epriv.sum(axis=1)
        for j in range(ge.shape[0]):
            for k in range(K):
                a = epriv[j, k] / cfg.r_E - (ge[j, 0] + tot[j] - epriv[j, k])
                a_list.append((a, cfg.sigma2_E))
            a_list.append((ge[j, 0] / cfg.r_E - tot[j], cfg.sigma2_E))
    s = 1.0
    for a, noise in a_list:
        if a > 0:
            s = min(s, noise / a)
    if not s > 0:
        raise NumericError("no positive power scaling satisfies the secrecy constraints")
    return s


def check_report_invariants(rep: RateReport, tol: float = 1e-9) -> None:
    """Raise if a report violates the rate bookkeeping identities."""
    if rep.R_c > float(np.min(np.log2(1 + rep.gamma_c))) + tol:
        raise NumericError("common rate exceeds the weakest user's decodable rate")
    if rep.C.sum() > rep.R_c + tol:
        raise NumericError("common-rate shares exceed the common rate")
    if np.max(np.abs(rep.R_tot - rep.C - rep.R_p)) > tol:
        raise NumericError("total rate is not common share plus private rate")
