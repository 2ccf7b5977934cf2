"""The proposed scheme and its four comparison schemes behind one entry point."""
from __future__ import annotations

import enum

from .channel import ChannelSet
from .config import SystemConfig
from .errors import ConfigurationError
from .model import RateReport
from .optimizer import OptimizeResult, OptimizerSettings, optimize, random_star
from .subproblems import Variant


class SchemeId(str, enum.Enum):
    RSMA_STAR = "RSMA_STAR"  # proposed: RSMA + energy-splitting STAR-RIS, secrecy enforced
    SDMA = "SDMA"  # private streams only
    RSMA_RIS = "RSMA_RIS"  # half the elements reflect, the other half transmit
    RSMA_RANDOM = "RSMA_RANDOM"  # random phases, equal split, beamformers optimized
    RSMA_UPPERBOUND = "RSMA_UPPERBOUND"  # secrecy constraints dropped

    @classmethod
    def parse(cls, name: str) -> "SchemeId":
        key = str(name).strip().upper()
        key = _ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(
                f"unknown scheme {name!r}; choose from {', '.join(s.value for s in cls)}"
            ) from None


_ALIASES = {"UPPERBOUND": "RSMA_UPPERBOUND", "STAR": "RSMA_STAR", "RIS": "RSMA_RIS", "RANDOM": "RSMA_RANDOM"}

VARIANTS = {
    SchemeId.RSMA_STAR: Variant(),
    SchemeId.SDMA: Variant(common=False),
    SchemeId.RSMA_RIS: Variant(surface="ris"),
    SchemeId.RSMA_RANDOM: Variant(),
    SchemeId.RSMA_UPPERBOUND: Variant(secrecy=False),
}


def solve_scheme(scheme, cs: ChannelSet, cfg: SystemConfig | None = None,
                 settings: OptimizerSettings | None = None,
                 reference: OptimizeResult | None = None) -> OptimizeResult:
    """Run one scheme and return the full optimizer result.

    RSMA_UPPERBOUND restarts from the RSMA_STAR solution (computed here unless
    ``reference`` is given): that point is feasible for the relaxed problem and
    the iterations never lower the objective, so the bound is never below the
    proposed scheme's relaxed value.
    """
    scheme = SchemeId.parse(scheme) if not isinstance(scheme, SchemeId) else scheme
    cfg = cfg or cs.cfg
    settings = settings or OptimizerSettings()
    variant = VARIANTS[scheme]
    if scheme is SchemeId.RSMA_RIS and cs.N_S % 2:
        raise ConfigurationError("RSMA_RIS needs an even number of surface elements")
    if scheme is SchemeId.RSMA_RANDOM:
        return optimize(cs, cfg, settings, variant, optimize_phases=False,
                        star0=random_star(cs, cs.seed, variant))
    if scheme is SchemeId.RSMA_UPPERBOUND:
        if reference is None:
            reference = solve_scheme(SchemeId.RSMA_STAR, cs, cfg, settings)
        return optimize(cs, cfg, settings, variant, star0=reference.star, P0=reference.relaxed_P)
    return optimize(cs, cfg, settings, variant)


def run_scheme(scheme, cs: ChannelSet, cfg: SystemConfig | None = None,
               settings: OptimizerSettings | None = None) -> RateReport:
    """Rates of the final (rank-one) solution of ``scheme``; the trace rides along in ``report.trace``."""
    return solve_scheme(scheme, cs, cfg, settings).report
