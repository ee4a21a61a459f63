"""Experiment configuration: YAML loading with dB-suffixed numbers, the
reference scenario, and serialisation back to YAML."""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass
from typing import Any, Optional

import numpy as np
import yaml

from .exceptions import ConfigError
from .model import GaussianMixture, SystemConfig, TargetEnvironment, UserGeometry

__all__ = [
    "ChannelConfig",
    "SweepConfig",
    "MonteCarloConfig",
    "BenchmarkConfig",
    "OutputConfig",
    "ExperimentConfig",
    "default_scenario",
    "parse_quantity",
    "load_config",
    "loads_config",
    "dump_config",
]

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(dBm|dB)?\s*$")
SWEEP_VARIABLES = ("rate_target", "snr_db")


def parse_quantity(value, where: str = "value") -> float:
    """Number, or string with an optional ``dB`` / ``dBm`` suffix, to linear units.

    ``"30 dBm"`` is 1 W and ``"-8 dB"`` is ``10**-0.8``.
    """
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _QUANTITY.match(value)
        if m:
            x = float(m.group(1))
            unit = m.group(2)
            if unit == "dBm":
                return 10.0 ** ((x - 30.0) / 10.0)
            if unit == "dB":
                return 10.0 ** (x / 10.0)
            return x
    raise ConfigError(f"{where}: cannot parse {value!r} as a number (optionally with dB/dBm)")


def _db(value, where: str) -> float:
    """Quantity stated on a dB scale; plain numbers are already in dB."""
    if isinstance(value, str) and value.strip().endswith("dB"):
        return 10.0 * math.log10(parse_quantity(value, where))
    return parse_quantity(value, where)


@dataclass(frozen=True)
class ChannelConfig:
    geometry: UserGeometry = UserGeometry()
    seed: int = 0


@dataclass(frozen=True)
class SweepConfig:
    variable: str = "rate_target"
    grid: tuple = tuple(round(5.0 + 0.2 * i, 10) for i in range(12))

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable: unknown variable {self.variable!r}; "
                              f"expected one of {SWEEP_VARIABLES}")
        if len(self.grid) == 0:
            raise ConfigError("sweep.grid: grid must be non-empty")


@dataclass(frozen=True)
class MonteCarloConfig:
    trials: int = 500
    seed: int = 1
    estimator: str = "map"
    snr_grid_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    grid_points: int = 2048

    def __post_init__(self):
        if self.estimator not in ("map", "mle"):
            raise ConfigError(f"montecarlo.estimator: expected 'map' or 'mle', got {self.estimator!r}")
        if self.trials < 1:
            raise ConfigError("montecarlo.trials: must be >= 1")
        if len(self.snr_grid_db) == 0:
            raise ConfigError("montecarlo.snr_grid_db: grid must be non-empty")


@dataclass(frozen=True)
class BenchmarkConfig:
    variance: float = 10 ** -1.5
    draws: int = 200
    hermite_order: int = 12
    seed: int = 2

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigError("benchmark.variance: must be >= 0")
        if self.draws < 1 or self.hermite_order < 1:
            raise ConfigError("benchmark.draws and benchmark.hermite_order must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    path: Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ConfigError(f"output.format: expected 'csv' or 'json', got {self.format!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a CLI command needs; immutable and YAML round-trippable."""

    system: SystemConfig = SystemConfig()
    prior: GaussianMixture = GaussianMixture(
        (0.31, 0.24, 0.28, 0.17), (-0.74, -0.54, 0.75, 0.95),
        (10 ** -2.5, 1e-2, 1e-2, 10 ** -2.5))
    channel: ChannelConfig = ChannelConfig()
    snr_db: float = -5.0
    alpha_phase: float = 0.0
    rate_target: float = 6.5
    sweep: SweepConfig = SweepConfig()
    montecarlo: MonteCarloConfig = MonteCarloConfig()
    benchmark: BenchmarkConfig = BenchmarkConfig()
    output: OutputConfig = OutputConfig()
    n_jobs: int = 1

    def environment(self, snr_db: Optional[float] = None) -> TargetEnvironment:
        return TargetEnvironment.from_snr_db(self.snr_db if snr_db is None else snr_db,
                                             self.system, self.alpha_phase)

    def channel_matrix(self) -> np.ndarray:
        from .model import rician_channel

        return rician_channel(self.system, self.channel.geometry,
                              np.random.default_rng(self.channel.seed))

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **changes)


def default_scenario() -> ExperimentConfig:
    """Reference scenario: 10 transmit / 12 receive antennas, 8-antenna user,
    25 symbols, 30 dBm budget, -90 dBm noise, -5 dB echo SNR, 6.5 bit/s/Hz."""
    return ExperimentConfig()


# -- parsing ---------------------------------------------------------------

def _line_index(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[path + (i,)] = v.start_mark.line + 1
            _line_index(v, path + (i,), out)
    return out


class _Reader:
    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines

    def where(self, path):
        line = self.lines.get(tuple(path))
        dotted = ".".join(str(p) for p in path)
        return f"{dotted} (line {line})" if line else dotted

    def section(self, name) -> dict:
        sec = self.data.get(name, {})
        if sec is None:
            return {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{self.where((name,))}: expected a mapping")
        return sec

    def check_keys(self, path, mapping, allowed):
        for key in mapping:
            if key not in allowed:
                raise ConfigError(f"{self.where(tuple(path) + (key,))}: unknown field "
                                  f"(expected one of {sorted(allowed)})")

    def integer(self, path, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{self.where(path)}: expected an integer, got {value!r}")
        return value

    def number(self, path, value):
        return parse_quantity(value, self.where(path))

    def numbers(self, path, value, db=False):
        if not isinstance(value, (list, tuple)) or len(value) == 0:
            raise ConfigError(f"{self.where(path)}: expected a non-empty list")
        conv = _db if db else parse_quantity
        return tuple(conv(v, self.where(tuple(path) + (i,))) for i, v in enumerate(value))


def _grid(reader: _Reader, path, spec):
    if isinstance(spec, dict):
        reader.check_keys(path, spec, {"start", "stop", "step"})
        try:
            start, stop, step = (float(spec[k]) for k in ("start", "stop", "step"))
        except KeyError as exc:
            raise ConfigError(f"{reader.where(path)}: range needs start, stop and step") from exc
        if step <= 0 or stop < start:
            raise ConfigError(f"{reader.where(path)}: need step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return reader.numbers(path, spec)


def _build(data: dict, lines: dict) -> ExperimentConfig:
    r = _Reader(data, lines)
    base = ExperimentConfig()
    top = {"system", "prior", "channel", "target", "rate_target", "sweep", "montecarlo",
           "benchmark", "output", "n_jobs"}
    r.check_keys((), data, top)

    s = r.section("system")
    r.check_keys(("system",), s, {"n_tx", "n_rx", "n_user", "symbols", "power", "noise_comm",
                                  "noise_sense", "spacing_over_lambda", "bs_height_m",
                                  "target_range_m"})
    sysd = asdict(base.system)
    for key in ("n_tx", "n_rx", "n_user", "symbols"):
        if key in s:
            sysd[key] = r.integer(("system", key), s[key])
    for key, field_name in (("power", "power_w"), ("noise_comm", "noise_comm_w"),
                            ("noise_sense", "noise_sense_w"),
                            ("spacing_over_lambda", "spacing_over_lambda"),
                            ("bs_height_m", "bs_height_m"), ("target_range_m", "target_range_m")):
        if key in s:
            sysd[field_name] = r.number(("system", key), s[key])
    system = _wrap(lambda: SystemConfig(**sysd), r.where(("system",)))

    p = r.section("prior")
    r.check_keys(("prior",), p, {"weights", "means", "variances"})
    prior = base.prior
    if p:
        missing = {"weights", "means", "variances"} - set(p)
        if missing:
            raise ConfigError(f"{r.where(('prior',))}: missing {sorted(missing)}")
        prior = _wrap(lambda: GaussianMixture(r.numbers(("prior", "weights"), p["weights"]),
                                              r.numbers(("prior", "means"), p["means"]),
                                              r.numbers(("prior", "variances"), p["variances"])),
                      r.where(("prior",)))

    c = r.section("channel")
    r.check_keys(("channel",), c, {"rician_factor", "ref_loss", "exponent", "range_m",
                                   "height_m", "theta", "spacing_over_lambda", "seed"})
    geo = asdict(base.channel.geometry)
    for key in ("rician_factor", "ref_loss", "exponent", "range_m", "height_m", "theta",
                "spacing_over_lambda"):
        if key in c:
            geo[key] = r.number(("channel", key), c[key])
    channel = ChannelConfig(_wrap(lambda: UserGeometry(**geo), r.where(("channel",))),
                            r.integer(("channel", "seed"), c.get("seed", base.channel.seed)))

    t = r.section("target")
    r.check_keys(("target",), t, {"snr", "phase"})
    snr_db = _db(t["snr"], r.where(("target", "snr"))) if "snr" in t else base.snr_db
    phase = r.number(("target", "phase"), t.get("phase", base.alpha_phase))

    rate_target = base.rate_target
    if "rate_target" in data:
        rate_target = r.number(("rate_target",), data["rate_target"])
        if rate_target < 0:
            raise ConfigError(f"{r.where(('rate_target',))}: must be >= 0")

    sw = r.section("sweep")
    r.check_keys(("sweep",), sw, {"variable", "grid"})
    sweep = base.sweep
    if sw:
        sweep = _wrap(lambda: SweepConfig(sw.get("variable", base.sweep.variable),
                                          _grid(r, ("sweep", "grid"), sw["grid"])
                                          if "grid" in sw else base.sweep.grid),
                      r.where(("sweep",)))

    mc = r.section("montecarlo")
    r.check_keys(("montecarlo",), mc, {"trials", "seed", "estimator", "snr_grid_db", "grid_points"})
    mcd = asdict(base.montecarlo)
    for key in ("trials", "seed", "grid_points"):
        if key in mc:
            mcd[key] = r.integer(("montecarlo", key), mc[key])
    if "estimator" in mc:
        mcd["estimator"] = mc["estimator"]
    if "snr_grid_db" in mc:
        mcd["snr_grid_db"] = tuple(_db(v, r.where(("montecarlo", "snr_grid_db", i)))
                                   for i, v in enumerate(mc["snr_grid_db"]))
    montecarlo = _wrap(lambda: MonteCarloConfig(**mcd), r.where(("montecarlo",)))

    b = r.section("benchmark")
    r.check_keys(("benchmark",), b, {"variance", "draws", "hermite_order", "seed"})
    bd = asdict(base.benchmark)
    if "variance" in b:
        bd["variance"] = r.number(("benchmark", "variance"), b["variance"])
    for key in ("draws", "hermite_order", "seed"):
        if key in b:
            bd[key] = r.integer(("benchmark", key), b[key])
    benchmark = _wrap(lambda: BenchmarkConfig(**bd), r.where(("benchmark",)))

    o = r.section("output")
    r.check_keys(("output",), o, {"path", "format"})
    output = _wrap(lambda: OutputConfig(o.get("path"), o.get("format", "csv")),
                   r.where(("output",)))

    n_jobs = r.integer(("n_jobs",), data.get("n_jobs", 1))
    return ExperimentConfig(system, prior, channel, snr_db, phase, rate_target, sweep,
                            montecarlo, benchmark, output, n_jobs)


def _wrap(make, where):
    try:
        return make()
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(where) else f"{where}: {msg}") from exc
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def loads_config(text: str) -> ExperimentConfig:
    """Parse YAML text; missing sections fall back to the reference scenario."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error{loc}: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be a mapping")
    return _build(data, _line_index(node) if node is not None else {})


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return loads_config(text)


def _to_plain(cfg: ExperimentConfig) -> dict[str, Any]:
    s = cfg.system
    g = cfg.channel.geometry
    out = {
        "system": {"n_tx": s.n_tx, "n_rx": s.n_rx, "n_user": s.n_user, "symbols": s.symbols,
                   "power": s.power_w, "noise_comm": s.noise_comm_w, "noise_sense": s.noise_sense_w,
                   "spacing_over_lambda": s.spacing_over_lambda, "bs_height_m": s.bs_height_m,
                   "target_range_m": s.target_range_m},
        "prior": {"weights": list(cfg.prior.weights), "means": list(cfg.prior.means),
                  "variances": list(cfg.prior.variances)},
        "channel": {"rician_factor": g.rician_factor, "ref_loss": g.ref_loss,
                    "exponent": g.exponent, "range_m": g.range_m, "height_m": g.height_m,
                    "theta": g.theta, "seed": cfg.channel.seed},
        "target": {"snr": f"{cfg.snr_db!r} dB", "phase": cfg.alpha_phase},
        "rate_target": cfg.rate_target,
        "sweep": {"variable": cfg.sweep.variable, "grid": list(cfg.sweep.grid)},
        "montecarlo": {"trials": cfg.montecarlo.trials, "seed": cfg.montecarlo.seed,
                       "estimator": cfg.montecarlo.estimator,
                       "snr_grid_db": list(cfg.montecarlo.snr_grid_db),
                       "grid_points": cfg.montecarlo.grid_points},
        "benchmark": {"variance": cfg.benchmark.variance, "draws": cfg.benchmark.draws,
                      "hermite_order": cfg.benchmark.hermite_order, "seed": cfg.benchmark.seed},
        "output": {"format": cfg.output.format},
        "n_jobs": cfg.n_jobs,
    }
    if g.spacing_over_lambda is not None:
        out["channel"]["spacing_over_lambda"] = g.spacing_over_lambda
    if cfg.output.path is not None:
        out["output"]["path"] = cfg.output.path
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    """YAML text that :func:`loads_config` maps back to an equal config."""
    return yaml.safe_dump(_to_plain(cfg), sort_keys=False)
