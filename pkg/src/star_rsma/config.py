"""Scenario parameters and the flat ``key=value`` configuration format.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Keys are :class:`SystemConfig` fields (and, when read by the CLI, optimizer
settings).  Any linear quantity may instead be given in decibels by appending
``_dB`` to its key.  Two derived keys are also accepted:

``snr_dB``
    transmit SNR; sets ``P_max = sigma2 * 10**(snr_dB / 10)``.
``inv_sigmaE2_dB``
    user-to-eavesdropper noise ratio; sets ``sigma2_E = sigma2 / 10**(x / 10)``.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError

ENV_PREFIX = "STAR_RSMA_"


def db2lin(x: float) -> float:
    return 10.0 ** (x / 10.0)


def lin2db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one scenario.

    Powers and noise variances are linear (W), thresholds are linear SINRs,
    distances are metres and ``angle_TS`` is in degrees.  The first ``K_r``
    users and the first ``J_r`` eavesdroppers sit on the reflection side.
    """

    N_T: int = 8
    N_S: int = 20
    K_r: int = 2
    K_t: int = 2
    J_r: int = 1
    J_t: int = 1
    P_max: float = 10.0
    sigma2: float = 1.0
    sigma2_E: float = 1.0
    r_0: float = 1.0
    r_E: float = 1.0
    d: float = 80.0
    d_TS: float = 50.0
    angle_TS: float = 20.0
    rician_kappa: float = 3.0
    pathloss_exp_TS: float = 2.2
    pathloss_exp_SU: float = 2.8
    pl0: float = 1e3
    seed: int = 0

    def __post_init__(self):
        for name in ("N_T", "N_S"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("K_r", "K_t", "J_r", "J_t"):
            if int(getattr(self, name)) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.K < 1:
            raise ConfigurationError("at least one user is required")
        for name in ("P_max", "sigma2", "sigma2_E", "r_0", "r_E", "d", "d_TS", "pl0"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive and finite, got {v}")
        if self.rician_kappa < 0:
            raise ConfigurationError("rician_kappa must be >= 0")

    @property
    def K(self) -> int:
        return self.K_r + self.K_t

    @property
    def J(self) -> int:
        return self.J_r + self.J_t

    @property
    def mu(self) -> np.ndarray:
        """Common-rate fractions; fixed to an equal split."""
        return np.full(self.K, 1.0 / self.K)

    @property
    def snr_dB(self) -> float:
        return lin2db(self.P_max / self.sigma2)

    def user_sides(self) -> list[str]:
        return ["r"] * self.K_r + ["t"] * self.K_t

    def eve_sides(self) -> list[str]:
        return ["r"] * self.J_r + ["t"] * self.J_t

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "SystemConfig | None" = None) -> "SystemConfig":
        """Build a config from string or numeric values, accepting ``_dB`` keys."""
        base = base or cls()
        linear, derived = _split_keys(values, cls)
        cfg = dataclasses.replace(base, **linear)
        changes = {}
        if "snr_dB" in derived:
            changes["P_max"] = cfg.sigma2 * db2lin(derived["snr_dB"])
        if "inv_sigmaE2_dB" in derived:
            changes["sigma2_E"] = cfg.sigma2 / db2lin(derived["inv_sigmaE2_dB"])
        return dataclasses.replace(cfg, **changes) if changes else cfg


_DERIVED_DB_KEYS = ("snr_dB", "inv_sigmaE2_dB")


def _coerce(field_type, raw):
    if field_type in (int, "int"):
        f = float(raw)
        if f != int(f):
            raise ConfigurationError(f"expected an integer, got {raw!r}")
        return int(f)
    if field_type in (bool, "bool"):
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"expected a boolean, got {raw!r}")
    return float(raw)


def _split_keys(values: Mapping[str, Any], cls) -> tuple[dict, dict]:
    types = {f.name: f.type for f in fields(cls)}
    linear: dict[str, Any] = {}
    derived: dict[str, float] = {}
    for key, raw in values.items():
        try:
            if key in types:
                linear[key] = _coerce(types[key], raw)
            elif key in _DERIVED_DB_KEYS:
                derived[key] = float(raw)
            elif key.endswith("_dB") and key[:-3] in types and types[key[:-3]] in (float, "float"):
                linear[key[:-3]] = db2lin(float(raw))
            else:
                raise ConfigurationError(f"unknown configuration key {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad value for {key!r}: {raw!r}") from exc
    return linear, derived


def known_keys(cls) -> set[str]:
    """Field names plus a ``<name>_dB`` alias for every float field."""
    names = {f.name for f in fields(cls)}
    return names | {f.name + "_dB" for f in fields(cls) if f.type in (float, "float")}


def parse_kv_text(text: str, source: str = "<text>") -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_kv_file(path: str | os.PathLike) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {p}: {exc}") from exc
    return parse_kv_text(text, str(p))


def env_overrides(keys: set[str], environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """Collect ``STAR_RSMA_<KEY>`` variables (key matched case-insensitively)."""
    environ = os.environ if environ is None else environ
    lookup = {k.lower(): k for k in keys}
    out = {}
    for name, value in environ.items():
        if name.upper().startswith(ENV_PREFIX):
            key = lookup.get(name[len(ENV_PREFIX):].lower())
            if key is not None:
                out[key] = value
    return out


def format_kv(values: Mapping[str, Any]) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in values.items())


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
