"""Scenario geometry and seeded Rician channels around the STAR-RIS.

The surface sits at the origin along the x axis.  The half-plane ``y > 0``
(which contains the transmitter) is the reflection side ``r``; ``y < 0`` is the
transmission side ``t``.  Both the surface and the transmitter are uniform
linear arrays along x with half-wavelength spacing.

Every random quantity is drawn from its own Philox stream keyed by
``(seed, link kind, index)``, so a given link does not depend on how many other
links are generated or in which order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .config import SystemConfig, parse_kv_text
from .errors import ConfigurationError

# stream identifiers for the counter-based generator
_S_H, _S_USER, _S_EVE, _S_USER_POS, _S_EVE_POS = range(5)


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def ula(n: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response along x for direction ``angle`` (rad)."""
    return np.exp(1j * math.pi * np.arange(n) * math.cos(angle))


def pathloss(cfg: SystemConfig, dist: float, exponent: float) -> float:
    return cfg.pl0 * dist ** (-exponent)


def rician(rng: np.random.Generator, los: np.ndarray, kappa: float, pl: float) -> np.ndarray:
    shape = los.shape
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    if math.isinf(kappa):
        return math.sqrt(pl) * los
    return math.sqrt(pl) * (math.sqrt(kappa / (1 + kappa)) * los + math.sqrt(1 / (1 + kappa)) * nlos)


@dataclass(frozen=True)
class Node:
    side: str
    angle: float  # rad, as seen from the surface
    distance: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.distance * math.cos(self.angle), self.distance * math.sin(self.angle))


@dataclass(frozen=True)
class Placement:
    tx: Node
    users: list[Node]
    eves: list[Node]


def _side_angle(rng: np.random.Generator, side: str) -> float:
    u = rng.uniform(0.0, math.pi)
    return u if side == "r" else u + math.pi


def place_nodes(cfg: SystemConfig, seed: int | None = None) -> Placement:
    """Drop users and eavesdroppers uniformly on their half-circle of radius ``d``."""
    seed = cfg.seed if seed is None else seed
    tx = Node("r", math.radians(cfg.angle_TS), cfg.d_TS)
    users = [
        Node(s, _side_angle(stream(seed, _S_USER_POS, k), s), cfg.d)
        for k, s in enumerate(cfg.user_sides())
    ]
    eves = [
        Node(s, _side_angle(stream(seed, _S_EVE_POS, j), s), cfg.d)
        for j, s in enumerate(cfg.eve_sides())
    ]
    return Placement(tx, users, eves)


@dataclass
class Link:
    vector: np.ndarray
    side: str
    distance: float
    pathloss: float
    angle: float = 0.0


@dataclass
class ChannelSet:
    """Realized channels: ``H`` (N_S x N_T), users ``h_k`` and eavesdroppers ``g_j``."""

    H: np.ndarray
    users: list[Link]
    eves: list[Link]
    cfg: SystemConfig
    seed: int
    H_pathloss: float = 1.0
    placement: Placement | None = field(default=None, repr=False, compare=False)

    @property
    def h(self) -> list[np.ndarray]:
        return [u.vector for u in self.users]

    @property
    def g(self) -> list[np.ndarray]:
        return [e.vector for e in self.eves]

    @property
    def user_sides(self) -> list[str]:
        return [u.side for u in self.users]

    @property
    def eve_sides(self) -> list[str]:
        return [e.side for e in self.eves]

    @property
    def K(self) -> int:
        return len(self.users)

    @property
    def J(self) -> int:
        return len(self.eves)

    @property
    def N_S(self) -> int:
        return self.H.shape[0]

    @property
    def N_T(self) -> int:
        return self.H.shape[1]

    @cached_property
    def gamma_users(self) -> np.ndarray:
        """Cascaded matrices diag(h_k^H) H, shape (K, N_S, N_T)."""
        return np.stack([np.conj(h)[:, None] * self.H for h in self.h]) if self.users else np.zeros((0,) + self.H.shape, complex)

    @cached_property
    def gamma_eves(self) -> np.ndarray:
        if not self.eves:
            return np.zeros((0,) + self.H.shape, complex)
        return np.stack([np.conj(g)[:, None] * self.H for g in self.g])

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return (
            self.cfg == other.cfg
            and self.seed == other.seed
            and np.array_equal(self.H, other.H)
            and len(self.users) == len(other.users)
            and len(self.eves) == len(other.eves)
            and all(a.side == b.side and np.array_equal(a.vector, b.vector) for a, b in zip(self.users, other.users))
            and all(a.side == b.side and np.array_equal(a.vector, b.vector) for a, b in zip(self.eves, other.eves))
        )


def generate(cfg: SystemConfig, seed: int | None = None) -> ChannelSet:
    """Draw one channel realization for ``cfg``.

    Each link is ``sqrt(PL) * (sqrt(k/(1+k)) a_LoS + sqrt(1/(1+k)) a_NLoS)`` with
    unit-modulus ULA steering for the LoS part and CN(0, 1) scattering.
    """
    seed = cfg.seed if seed is None else int(seed)
    nodes = place_nodes(cfg, seed)
    kappa = cfg.rician_kappa

    # transmitter -> surface: arrival at the surface from angle_TS, departure
    # from the transmitter array towards the origin
    aoa = nodes.tx.angle
    los_H = np.outer(ula(cfg.N_S, aoa), np.conj(ula(cfg.N_T, aoa + math.pi)))
    pl_H = pathloss(cfg, cfg.d_TS, cfg.pathloss_exp_TS)
    H = rician(stream(seed, _S_H), los_H, kappa, pl_H)

    def link(node: Node, rng: np.random.Generator) -> Link:
        pl = pathloss(cfg, node.distance, cfg.pathloss_exp_SU)
        vec = rician(rng, ula(cfg.N_S, node.angle), kappa, pl)
        return Link(vec, node.side, node.distance, pl, node.angle)

    users = [link(n, stream(seed, _S_USER, k)) for k, n in enumerate(nodes.users)]
    eves = [link(n, stream(seed, _S_EVE, j)) for j, n in enumerate(nodes.eves)]
    return ChannelSet(H=H, users=users, eves=eves, cfg=cfg, seed=seed, H_pathloss=pl_H, placement=nodes)


# -- serialization -----------------------------------------------------------
#
# Text layout (one item per line):
#
#   # star_rsma channelset v1
#   seed = 7
#   cfg.N_T = 8
#   ...                                   one line per SystemConfig field
#   [H rows=N_S cols=N_T pathloss=...]
#   re,im re,im ...                       one line per row
#   [user k side=r distance=... pathloss=... angle=...]
#   re,im re,im ...                       the N_S entries of h_k
#   [eve j side=t distance=... pathloss=... angle=...]
#   re,im ...
#
# Floats are written with repr() so a save/load round trip is bit-exact.

_MAGIC = "# star_rsma channelset v1"


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in np.asarray(v, complex).ravel())


def _parse_vec(line: str) -> np.ndarray:
    vals = []
    for tok in line.split():
        re, im = tok.split(",")
        vals.append(complex(float(re), float(im)))
    return np.array(vals, dtype=complex)


def dumps(cs: ChannelSet) -> str:
    out = [_MAGIC, f"seed = {cs.seed}"]
    out += [f"cfg.{k} = {v!r}" for k, v in cs.cfg.to_dict().items()]
    out.append(f"[H rows={cs.N_S} cols={cs.N_T} pathloss={float(cs.H_pathloss)!r}]")
    out += [_fmt_vec(row) for row in cs.H]
    for kind, links in (("user", cs.users), ("eve", cs.eves)):
        for i, ln in enumerate(links):
            out.append(
                f"[{kind} {i} side={ln.side} distance={float(ln.distance)!r} "
                f"pathloss={float(ln.pathloss)!r} angle={float(ln.angle)!r}]"
            )
            out.append(_fmt_vec(ln.vector))
    return "\n".join(out) + "\n"


def _parse_header(line: str) -> tuple[list[str], dict[str, str]]:
    words = line.strip()[1:-1].split()
    pos = [w for w in words if "=" not in w]
    kw = dict(w.split("=", 1) for w in words if "=" in w)
    return pos, kw


def loads(text: str) -> ChannelSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _MAGIC:
        raise ConfigurationError("not a star_rsma channelset file")
    head: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("["):
        head.update(parse_kv_text(lines[i]))
        i += 1
    cfg_vals = {k[4:]: v for k, v in head.items() if k.startswith("cfg.")}
    cfg = SystemConfig.from_mapping(cfg_vals)
    seed = int(head.get("seed", cfg.seed))
    H = None
    H_pl = 1.0
    users: list[Link] = []
    eves: list[Link] = []
    try:
        while i < len(lines):
            pos, kw = _parse_header(lines[i])
            if pos[0] == "H":
                rows, cols = int(kw["rows"]), int(kw["cols"])
                H = np.stack([_parse_vec(lines[i + 1 + r]) for r in range(rows)])
                if H.shape != (rows, cols):
                    raise ConfigurationError("H block has wrong shape")
                H_pl = float(kw.get("pathloss", 1.0))
                i += 1 + rows
            else:
                ln = Link(
                    _parse_vec(lines[i + 1]),
                    kw["side"],
                    float(kw["distance"]),
                    float(kw["pathloss"]),
                    float(kw.get("angle", 0.0)),
                )
                (users if pos[0] == "user" else eves).append(ln)
                i += 2
    except (IndexError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed channelset file: {exc}") from exc
    if H is None:
        raise ConfigurationError("channelset file has no H block")
    cs = ChannelSet(H=H, users=users, eves=eves, cfg=cfg, seed=seed, H_pathloss=H_pl)
    _validate(cs)
    return cs


def _validate(cs: ChannelSet) -> None:
    cfg = cs.cfg
    if cs.H.shape != (cfg.N_S, cfg.N_T):
        raise ConfigurationError("H shape disagrees with the recorded config")
    if cs.user_sides != cfg.user_sides() or cs.eve_sides != cfg.eve_sides():
        raise ConfigurationError("side tags disagree with the recorded config")
    for ln in cs.users + cs.eves:
        if ln.vector.shape != (cfg.N_S,):
            raise ConfigurationError("link vector length differs from N_S")
    if not all(np.all(np.isfinite(a)) for a in [cs.H] + cs.h + cs.g):
        raise ConfigurationError("channelset contains non-finite entries")


def save(cs: ChannelSet, path) -> None:
    Path(path).write_text(dumps(cs))


def load(path) -> ChannelSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return loads(text)
