"""Run configuration: flat INI-style files, validation, and content digests.

The format is deliberately minimal: ``[section]`` headers, ``key = value``
pairs, ``#`` or ``;`` comments.  The parser tracks line numbers so that
validation errors can name both the offending field and where it was set.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_ini",
    "load_config",
    "config_digest",
]


class ConfigError(ValueError):
    """Configuration problem; the message carries field name and line number."""


@dataclass(frozen=True)
class _Entry:
    value: str
    line: int


def parse_ini(text: str) -> dict[str, dict[str, _Entry]]:
    """Parse ``[section]`` / ``key = value`` text, keeping line numbers."""
    sections: dict[str, dict[str, _Entry]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside of any [section]")
        key, _, value = line.partition("=")
        sections[current][key.strip().lower()] = _Entry(value.split("#")[0].strip(), lineno)
    return sections


class _SectionView:
    """Typed accessors over one parsed section with error locations."""

    def __init__(self, name: str, entries: dict[str, _Entry]):
        self.name = name
        self.entries = entries
        self.seen: set[str] = set()

    def _raw(self, key: str):
        self.seen.add(key)
        return self.entries.get(key)

    def _convert(self, key: str, conv, default, kind: str):
        entry = self._raw(key)
        if entry is None:
            return default
        try:
            return conv(entry.value)
        except ValueError:
            raise ConfigError(
                f"line {entry.line}: [{self.name}] {key} = {entry.value!r} is not {kind}"
            ) from None

    def str(self, key: str, default: str | None = None) -> str | None:
        entry = self._raw(key)
        return default if entry is None else entry.value

    def int(self, key: str, default: int | None = None) -> int | None:
        return self._convert(key, lambda s: int(s, 10), default, "an integer")

    def float(self, key: str, default: float | None = None) -> float | None:
        return self._convert(key, float, default, "a number")

    def bool(self, key: str, default: bool | None = None) -> bool | None:
        def conv(s: str) -> bool:
            low = s.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(s)

        return self._convert(key, conv, default, "a boolean")

    def floats(self, key: str, default=()) -> tuple[float, ...]:
        entry = self._raw(key)
        if entry is None:
            return tuple(default)
        try:
            return tuple(float(tok) for tok in entry.value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(
                f"line {entry.line}: [{self.name}] {key} must be a list of numbers"
            ) from None

    def ints(self, key: str, default=()) -> tuple[int, ...]:
        entry = self._raw(key)
        if entry is None:
            return tuple(default)
        try:
            return tuple(int(tok, 10) for tok in entry.value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(
                f"line {entry.line}: [{self.name}] {key} must be a list of integers"
            ) from None

    def line_of(self, key: str) -> int:
        entry = self.entries.get(key)
        return entry.line if entry is not None else 0

    def fail(self, key: str, message: str):
        raise ConfigError(f"line {self.line_of(key)}: [{self.name}] {key} {message}")


_EXPERIMENTS = ("simulate", "verify", "decay-sweep", "decompose")


@dataclass
class RunConfig:
    """Validated parameters of one CLI run."""

    experiment: str
    # grid
    d: int = 2
    L: float = 128.0
    M: int = 512
    # data
    gamma0: float = 0.2
    amplitude: float = 1.0
    seed: int = 1
    spectral_margin: float = 0.01
    k_lo: float = 0.0
    k_hi: float = 4.0
    # solver
    mu: int = -1
    t_end: float = 100.0
    dt0: float = 1e-4
    dt_ratio: float = 1.02
    dt_max: float = 0.05
    sample_count: int = 60
    t_first: float = 1e-3
    blowup_threshold: float = 1e6
    snapshots: bool = False
    # schedule
    schedule_kind: str = "none"
    alpha: float = 0.05
    # ensemble
    seeds: tuple[int, ...] = ()
    # sweep
    gamma0_list: tuple[float, ...] = ()
    include_focusing: bool = False
    focusing_amplitude: float = 1e-2
    # verify knobs
    verify_members: int = 32
    bernstein_members: int = 64
    fit_window: tuple[float, float] = (1.0, 80.0)
    refine_m: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)
    # run
    output_dir: str = "out"
    emit_plots: bool = False
    jobs: int = 1
    # provenance
    digest: str = ""
    source_text: str = ""


_DEFAULT_TOLERANCES = {
    "bernstein_spread_max": 10.0,
    "mismatch_slope_max": -0.8,
    "w0_slope_margin": 0.1,
    "v0_constant_max": 5.0,
    "strichartz_spread_max": 10.0,
    "strichartz_refine_rel": 0.10,
    "smoothing_constant_max": 10.0,
    "duhamel_quotient_max": 25.0,
    "embedding_spread_max": 10.0,
    "decay_slope_tol": 0.05,
    "decay_slope_tol_zero": 0.03,
    "decay_r2_min": 0.95,
}


def config_digest(text: str) -> str:
    """Stable digest of the canonicalized config text."""
    sections = parse_ini(text)
    lines = []
    for section in sorted(sections):
        for key in sorted(sections[section]):
            lines.append(f"{section}.{key}={sections[section][key].value}")
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


def load_config(text: str) -> RunConfig:
    """Parse and validate a config file; raises :class:`ConfigError` with a
    line-numbered message naming the field on any violation."""
    sections = parse_ini(text)
    known = {"run", "grid", "data", "solver", "schedule", "ensemble", "sweep", "verify"}
    views = {name: _SectionView(name, sections.get(name, {})) for name in known}
    unknown = set(sections) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    run = views["run"]
    experiment = run.str("experiment", "simulate")
    if experiment not in _EXPERIMENTS:
        run.fail("experiment", f"must be one of {_EXPERIMENTS}, got {experiment!r}")

    grid = views["grid"]
    cfg = RunConfig(experiment=experiment)
    cfg.d = grid.int("d", cfg.d)
    cfg.L = grid.float("l", cfg.L)
    cfg.M = grid.int("m", cfg.M)
    if cfg.d not in (2, 3):
        grid.fail("d", f"must be 2 or 3, got {cfg.d}")
    if cfg.L <= 0:
        grid.fail("l", "must be positive")
    if cfg.M <= 0 or cfg.M % 2 != 0:
        grid.fail("m", f"must be an even positive integer, got {cfg.M}")

    data = views["data"]
    cfg.gamma0 = data.float("gamma0", cfg.gamma0)
    cfg.amplitude = data.float("amplitude", cfg.amplitude)
    cfg.seed = data.int("seed", cfg.seed)
    cfg.spectral_margin = data.float("spectral_margin", cfg.spectral_margin)
    cfg.k_lo = data.float("k_lo", cfg.k_lo)
    cfg.k_hi = data.float("k_hi", cfg.k_hi)
    gamma_max = (cfg.d - 1) / (cfg.d + 2)
    if not 0.0 <= cfg.gamma0 < gamma_max:
        data.fail(
            "gamma0",
            f"= {cfg.gamma0} outside the admissible index range [0, {gamma_max}) for d={cfg.d}",
        )
    if cfg.amplitude <= 0:
        data.fail("amplitude", "must be positive")
    if cfg.k_lo > cfg.k_hi:
        data.fail("k_lo", f"band [{cfg.k_lo}, {cfg.k_hi}] is empty")

    solver = views["solver"]
    cfg.mu = solver.int("mu", cfg.mu)
    cfg.t_end = solver.float("t_end", cfg.t_end)
    cfg.dt0 = solver.float("dt0", cfg.dt0)
    cfg.dt_ratio = solver.float("dt_ratio", cfg.dt_ratio)
    cfg.dt_max = solver.float("dt_max", cfg.dt_max)
    cfg.sample_count = solver.int("sample_count", cfg.sample_count)
    cfg.t_first = solver.float("t_first", cfg.t_first)
    cfg.blowup_threshold = solver.float("blowup_threshold", cfg.blowup_threshold)
    cfg.snapshots = solver.bool("snapshots", cfg.snapshots)
    if cfg.mu not in (-1, 0, 1):
        solver.fail("mu", f"must be -1, 0 or 1, got {cfg.mu}")
    if cfg.t_end <= 0:
        solver.fail("t_end", "must be positive")
    if cfg.dt0 <= 0 or cfg.dt_max < cfg.dt0:
        solver.fail("dt0", "needs 0 < dt0 <= dt_max")
    if cfg.dt_ratio < 1:
        solver.fail("dt_ratio", "must be >= 1")
    if cfg.sample_count < 2:
        solver.fail("sample_count", "must be at least 2")

    sched = views["schedule"]
    cfg.schedule_kind = sched.str("kind", cfg.schedule_kind)
    cfg.alpha = sched.float("alpha", cfg.alpha)
    if cfg.schedule_kind not in ("none", "sqrt"):
        sched.fail("kind", f"must be 'none' or 'sqrt', got {cfg.schedule_kind!r}")
    if cfg.schedule_kind == "sqrt":
        if not 0 < cfg.alpha <= cfg.gamma0:
            sched.fail("alpha", f"= {cfg.alpha} must lie in (0, gamma0 = {cfg.gamma0}]")

    ens = views["ensemble"]
    seeds = ens.ints("seeds", ())
    if not seeds:
        count = ens.int("count", 0)
        base = ens.int("base_seed", 1)
        seeds = tuple(range(base, base + count)) if count else (cfg.seed,)
    if len(set(seeds)) != len(seeds):
        ens.fail("seeds", "must be distinct")
    cfg.seeds = seeds

    sweep = views["sweep"]
    cfg.gamma0_list = sweep.floats("gamma0_list", ())
    cfg.include_focusing = sweep.bool("include_focusing", cfg.include_focusing)
    cfg.focusing_amplitude = sweep.float("focusing_amplitude", cfg.focusing_amplitude)
    for g0 in cfg.gamma0_list:
        if not 0.0 <= g0 < gamma_max:
            sweep.fail(
                "gamma0_list",
                f"contains {g0}, outside the admissible index range [0, {gamma_max}) for d={cfg.d}",
            )

    verify = views["verify"]
    cfg.verify_members = verify.int("members", cfg.verify_members)
    cfg.bernstein_members = verify.int("bernstein_members", cfg.bernstein_members)
    window = verify.floats("fit_window", cfg.fit_window)
    if len(window) != 2 or not 0 < window[0] < window[1]:
        verify.fail("fit_window", "must be two increasing positive times")
    cfg.fit_window = (window[0], window[1])
    cfg.refine_m = verify.int("refine_m", cfg.refine_m)
    cfg.tolerances = dict(_DEFAULT_TOLERANCES)
    for key in list(verify.entries):
        if key in _DEFAULT_TOLERANCES:
            cfg.tolerances[key] = verify.float(key)

    cfg.output_dir = run.str("output_dir", cfg.output_dir)
    cfg.emit_plots = run.bool("emit_plots", cfg.emit_plots)
    cfg.jobs = run.int("jobs", cfg.jobs)
    if cfg.jobs < 1:
        run.fail("jobs", "must be >= 1")

    for view in views.values():
        stray = set(view.entries) - view.seen
        if stray:
            key = sorted(stray)[0]
            view.fail(key, "is not a recognized option")

    if not math.isfinite(cfg.t_first) or cfg.t_first <= 0 or cfg.t_first >= cfg.t_end:
        solver.fail("t_first", "must satisfy 0 < t_first < t_end")

    cfg.digest = config_digest(text)
    cfg.source_text = text
    return cfg
