"""Seeded Monte-Carlo sweeps over one scenario axis, written as CSV.

A sweep file uses the flat ``key = value`` format.  Sweep keys::

    axis     = r_E_dB | d_m | N_S | inv_sigmaE2_dB
    grid     = -10, -5, 0, 5, 10          (strictly increasing)
    schemes  = RSMA_STAR, SDMA            (default: all five)
    n_seeds  = 20
    seed0    = 0                          (seeds are seed0 .. seed0+n_seeds-1)
    out      = results.csv                (optional)

Every other key is a scenario or optimizer setting and sets the base point.
All schemes at one grid point see the same channel realizations.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel
from .baselines import SchemeId, solve_scheme
from .config import SystemConfig, db2lin, format_kv
from .errors import ConfigurationError, NumericError
from .optimizer import OptimizerSettings

AXES = ("r_E_dB", "d_m", "N_S", "inv_sigmaE2_dB")
CSV_HEADER = ("axis", "value", "scheme", "mean_minrate", "stderr", "n_ok", "n_fail")

DEFAULT_GRIDS = {
    "r_E_dB": (-10.0, -5.0, 0.0, 5.0, 10.0),
    "d_m": (60.0, 70.0, 80.0, 90.0, 100.0),
    "N_S": (6.0, 12.0, 18.0, 24.0, 30.0),
    "inv_sigmaE2_dB": (-5.0, 0.0, 5.0, 10.0),
}


@dataclass
class SweepSpec:
    axis: str
    grid: tuple[float, ...]
    schemes: tuple[SchemeId, ...] = tuple(SchemeId)
    n_seeds: int = 20
    base: SystemConfig = field(default_factory=SystemConfig)
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    out: str | None = None
    seed0: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"axis must be one of {', '.join(AXES)}, got {self.axis!r}")
        self.grid = tuple(float(v) for v in self.grid)
        if not self.grid:
            raise ConfigurationError("grid must not be empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigurationError("grid must be strictly increasing")
        if self.axis == "N_S" and any(v != int(v) or v < 1 for v in self.grid):
            raise ConfigurationError("N_S grid values must be positive integers")
        self.schemes = tuple(s if isinstance(s, SchemeId) else SchemeId.parse(s) for s in self.schemes)
        if not self.schemes:
            raise ConfigurationError("at least one scheme is required")
        if int(self.n_seeds) < 1:
            raise ConfigurationError("n_seeds must be >= 1")
        for v in self.grid:
            self.config_at(v)  # surface invalid grid points early

    @property
    def seeds(self) -> list[int]:
        return list(range(self.seed0, self.seed0 + self.n_seeds))

    def config_at(self, value: float) -> SystemConfig:
        b = self.base
        if self.axis == "r_E_dB":
            r = db2lin(value)
            return b.replace(r_E=r, r_0=r)
        if self.axis == "d_m":
            return b.replace(d=float(value))
        if self.axis == "N_S":
            return b.replace(N_S=int(value))
        return b.replace(sigma2_E=b.sigma2 / db2lin(value))

    @classmethod
    def from_mapping(cls, values: dict, base: SystemConfig | None = None,
                     settings: OptimizerSettings | None = None) -> "SweepSpec":
        values = dict(values)
        if "axis" not in values:
            raise ConfigurationError("sweep file needs an 'axis' key")
        axis = values.pop("axis").strip()
        grid_raw = values.pop("grid", None)
        try:
            grid = DEFAULT_GRIDS[axis] if grid_raw is None else tuple(float(x) for x in str(grid_raw).split(",") if x.strip())
        except KeyError:
            raise ConfigurationError(f"axis must be one of {', '.join(AXES)}, got {axis!r}") from None
        except ValueError as exc:
            raise ConfigurationError(f"bad grid: {grid_raw!r}") from exc
        schemes = tuple(SchemeId.parse(s) for s in str(values.pop("schemes", ",".join(s.value for s in SchemeId))).split(",") if s.strip())
        try:
            n_seeds = int(values.pop("n_seeds", 20))
            seed0 = int(values.pop("seed0", 0))
        except ValueError as exc:
            raise ConfigurationError(f"bad seed count: {exc}") from exc
        out = values.pop("out", None)
        opt_keys = OptimizerSettings.keys()
        opt = {k: v for k, v in values.items() if k in opt_keys}
        sys_vals = {k: v for k, v in values.items() if k not in opt_keys}
        cfg = SystemConfig.from_mapping(sys_vals, base)
        st = OptimizerSettings.from_mapping(opt, settings)
        return cls(axis, grid, schemes, n_seeds, cfg, st, out, seed0)


# -- result cache ------------------------------------------------------------------------------
#
# Runs are keyed by a hash of (algorithm source, scenario, settings, scheme,
# seed).  Editing any module that influences the numbers changes the source
# hash and so invalidates every cached entry.

_ALGO_MODULES = ("hermitian", "config", "channel", "model", "conic", "subproblems", "optimizer", "baselines")


def code_fingerprint() -> str:
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in _ALGO_MODULES:
        h.update((here / f"{name}.py").read_bytes())
    return h.hexdigest()[:16]


def _settings_dict(st: OptimizerSettings) -> dict:
    return {k: getattr(st, k) for k in sorted(OptimizerSettings.keys())}


def run_key(cfg: SystemConfig, settings: OptimizerSettings, scheme: SchemeId, seed: int) -> str:
    blob = json.dumps(
        {"code": code_fingerprint(), "cfg": cfg.to_dict(), "opt": _settings_dict(settings),
         "scheme": scheme.value, "seed": int(seed)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


class ResultCache:
    """One small JSON file per run under ``root``."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def get(self, key: str) -> dict | None:
        p = self.root / f"{key}.json"
        try:
            return json.loads(p.read_text())
        except (OSError, ValueError):
            return None

    def put(self, key: str, record: dict) -> None:
        tmp = self.root / f".{key}.{os.getpid()}.tmp"
        tmp.write_text(json.dumps(record))
        tmp.replace(self.root / f"{key}.json")


# -- running -----------------------------------------------------------------------------------------

def run_point(cfg: SystemConfig, settings: OptimizerSettings, seed: int, schemes, cache_dir=None) -> dict[str, dict]:
    """All requested schemes on one channel realization.

    Each record holds ``min_rate``, ``relaxed``, ``feasible``, ``worst_residual``,
    ``outer``, ``ok`` and the wall time ``seconds``; a run that raises a numerical error or returns an
    infeasible point is recorded with ``ok = False``.
    """
    cache = ResultCache(cache_dir) if cache_dir else None
    cs = channel.generate(cfg, seed)
    out: dict[str, dict] = {}
    star_ref = None
    order = sorted(schemes, key=lambda s: s is SchemeId.RSMA_UPPERBOUND)  # reference first
    for scheme in order:
        key = run_key(cfg, settings, scheme, seed)
        rec = cache.get(key) if cache else None
        if rec is None:
            t0 = time.perf_counter()
            try:
                ref = star_ref if scheme is SchemeId.RSMA_UPPERBOUND else None
                res = solve_scheme(scheme, cs, cfg, settings, reference=ref)
                if scheme is SchemeId.RSMA_STAR:
                    star_ref = res
                rep = res.report
                rec = {
                    "min_rate": rep.min_rate,
                    "relaxed": res.relaxed_min_rate,
                    "feasible": bool(rep.feasible),
                    "worst_residual": rep.worst_residual,
                    "outer": len(res.trace) - 1,
                    "ok": bool(rep.feasible) and math.isfinite(rep.min_rate),
                    "seconds": time.perf_counter() - t0,
                }
            except NumericError as exc:
                rec = {"min_rate": math.nan, "ok": False, "error": str(exc)}
            if cache:
                cache.put(key, rec)
        out[scheme.value] = rec
    return out


def _task(args):
    cfg, settings, seed, schemes, cache_dir = args
    return run_point(cfg, settings, seed, schemes, cache_dir)


@dataclass
class SweepRow:
    axis: str
    value: float
    scheme: str
    mean_minrate: float
    stderr: float
    n_ok: int
    n_fail: int
    samples: dict = field(default_factory=dict, repr=False)  # seed -> min-rate (successful runs)

    def csv_fields(self):
        return (self.axis, _num(self.value), self.scheme, repr(self.mean_minrate), repr(self.stderr), self.n_ok, self.n_fail)


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def run_sweep(spec: SweepSpec, workers: int = 1, cache_dir=None) -> list[SweepRow]:
    tasks = [(spec.config_at(v), spec.settings, seed, spec.schemes, cache_dir)
             for v in spec.grid for seed in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows = []
    it = iter(results)
    for v in spec.grid:
        per_seed = [next(it) for _ in spec.seeds]
        for scheme in spec.schemes:
            samples = {}
            fails = 0
            for seed, rec in zip(spec.seeds, per_seed):
                r = rec[scheme.value]
                if r.get("ok"):
                    samples[seed] = float(r["min_rate"])
                else:
                    fails += 1
            x = np.array(list(samples.values()))
            mean = float(x.mean()) if x.size else math.nan
            se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else (0.0 if x.size else math.nan)
            rows.append(SweepRow(spec.axis, v, scheme.value, mean, se, int(x.size), fails, samples))
    rows.sort(key=lambda r: (r.value, list(SchemeId).index(SchemeId(r.scheme))))
    if spec.out:
        write_csv(rows, spec, spec.out)
    return rows


def header_lines(spec: SweepSpec) -> list[str]:
    echo = dict(spec.base.to_dict())
    echo["snr_dB"] = spec.base.snr_dB
    echo.update({"axis": spec.axis, "n_seeds": spec.n_seeds, "seed0": spec.seed0})
    return ["# " + ln for ln in format_kv(echo).splitlines()]


def format_csv(rows: list[SweepRow], spec: SweepSpec | None = None) -> str:
    buf = io.StringIO()
    if spec is not None:
        buf.write("\n".join(header_lines(spec)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def write_csv(rows: list[SweepRow], spec: SweepSpec | None, path) -> None:
    try:
        Path(path).write_text(format_csv(rows, spec))
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}") from exc


def read_csv(path_or_text) -> list[dict]:
    """Parse a sweep CSV (comment lines skipped) into dicts of strings."""
    text = path_or_text if "\n" in str(path_or_text) else Path(path_or_text).read_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def paired_difference(a: SweepRow, b: SweepRow) -> tuple[float, float, int]:
    """Mean and standard error of ``a - b`` over the seeds both runs share."""
    common = sorted(set(a.samples) & set(b.samples))
    d = np.array([a.samples[s] - b.samples[s] for s in common])
    if d.size < 2:
        return (float(d.mean()) if d.size else math.nan), math.nan, int(d.size)
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size)), int(d.size)
