"""
Scenario configuration files.

Configs are TOML (format_version 1).  Every key is optional; omitted keys take
the defaults below and are echoed back through :meth:`ExperimentConfig.effective`.
Unknown keys are rejected so a typo never silently falls back to a default.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel_model import RelayKind
from .errors import ConfigError
from .relay_selection import AllocationConfig
from .simulation import ALGORITHMS, NoisePattern, PopulationSpec, ScenarioConfig

FORMAT_VERSION = 1
BUNDLED = ("fig3", "fig4", "fig5")


@dataclass(frozen=True)
class SweepParams:
    l_min: int = 1
    l_max: int = 20
    l_step: int = 1
    l_values: tuple[int, ...] | None = None
    trials: int = 100
    algorithms: tuple[str, ...] = ALGORITHMS
    d_values: tuple[float, ...] | None = None
    source_powers: tuple[float, ...] | None = None

    def L_values(self) -> list[int]:
        if self.l_values is not None:
            return sorted(set(self.l_values))
        return list(range(self.l_min, self.l_max + 1, self.l_step))


@dataclass(frozen=True)
class ChainParams:
    instances: int = 1000
    l_values: tuple[int, ...] = (2, 4, 8, 12, 16)
    b1_draws: int = 200


@dataclass(frozen=True)
class BoundParams:
    instances: int = 10000
    l_max: int = 20
    coef_range: tuple[float, float] = (0.01, 1.0)
    power_range: tuple[float, float] = (1.0, 25.0)
    noise_max: float = 2.0
    source_power_range: tuple[float, float] = (1.0, 25.0)
    y_sq_range: tuple[float, float] = (0.1, 4.0)


@dataclass(frozen=True)
class OrchestrateParams:
    destinations: int = 3
    l_min: int = 1
    l_max: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    population: PopulationSpec
    scenario: ScenarioConfig
    sweep: SweepParams = field(default_factory=SweepParams)
    allocation: AllocationConfig = field(default_factory=AllocationConfig)
    chain: ChainParams = field(default_factory=ChainParams)
    bound: BoundParams = field(default_factory=BoundParams)
    orchestrate: OrchestrateParams = field(default_factory=OrchestrateParams)
    seed: int = 0
    source: str = "<memory>"
    digest: str = ""

    def effective(self) -> dict[str, Any]:
        """Every parameter in force, defaults included."""
        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "seed": self.seed,
            "population": self.population.to_dict(),
            "scenario": asdict(self.scenario),
            "sweep": asdict(self.sweep),
            "allocation": asdict(self.allocation),
            "chain": asdict(self.chain),
            "bound": asdict(self.bound),
            "orchestrate": asdict(self.orchestrate),
        }


# ----------------------------------------------------------------------
# parsing helpers
# ----------------------------------------------------------------------

class _Section:
    """Dict wrapper that tracks consumed keys and names its path in errors."""

    def __init__(self, data: Any, path: str, source: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: [{path}] must be a table")
        self.data, self.path, self.source = data, path, source
        self.used: set[str] = set()

    def where(self, key: str) -> str:
        if not key:
            return self.path or "<top>"
        return f"{self.path}.{key}" if self.path else key

    def fail(self, key: str, msg: str):
        raise ConfigError(f"{self.source}: {self.where(key)}: {msg}")

    def sub(self, key: str) -> "_Section":
        self.used.add(key)
        return _Section(self.data.get(key, {}), self.where(key), self.source)

    def get(self, key: str, default=None, kind=float):
        self.used.add(key)
        if key not in self.data:
            return default
        v = self.data[key]
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(key, f"expected a number, got {v!r}")
            return float(v)
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(key, f"expected an integer, got {v!r}")
            return v
        if kind is str:
            if not isinstance(v, str):
                self.fail(key, f"expected a string, got {v!r}")
            return v
        return v

    def interval(self, key: str, default, lo_bound=None, hi_bound=None):
        v = self.get(key, None, kind=None)
        if v is None:
            return default
        if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            self.fail(key, f"expected an interval [lo, hi], got {v!r}")
        lo, hi = float(v[0]), float(v[1])
        if lo > hi:
            self.fail(key, f"interval [{lo}, {hi}] has lo > hi")
        if lo_bound is not None and lo < lo_bound or hi_bound is not None and hi > hi_bound:
            self.fail(key, f"interval [{lo}, {hi}] must lie within [{lo_bound}, {hi_bound}]")
        return (lo, hi)

    def number_list(self, key: str, default, kind=float):
        v = self.get(key, None, kind=None)
        if v is None:
            return default
        if not isinstance(v, list) or not v:
            self.fail(key, f"expected a non-empty list, got {v!r}")
        for x in v:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or (kind is int and not isinstance(x, int)):
                self.fail(key, f"bad list element {x!r}")
        return tuple(kind(x) for x in v)

    def check_unknown(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.source}: unknown key(s) {', '.join(self.where(k) for k in extra)}")


def _guard(section: _Section, key: str, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        section.fail(key, str(exc))


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("v2xrelay") / "configs" / f"{name}.toml"))


def resolve_config_path(path: str | Path) -> Path:
    """Filesystem path, or the name of a bundled config (``fig3``, ``fig4``, ``fig5``)."""
    p = Path(path)
    if p.exists():
        return p
    if str(path) in BUNDLED:
        return bundled_path(str(path))
    raise ConfigError(f"config file not found: {path}")


def load_config(path: str | Path) -> ExperimentConfig:
    p = resolve_config_path(path)
    raw = p.read_bytes()
    return parse_config(raw, str(p))


def parse_config(raw: bytes | str, source: str = "<string>") -> ExperimentConfig:
    if isinstance(raw, str):
        raw = raw.encode()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{source}: not UTF-8 ({exc})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from None

    top = _Section(data, "", source)
    version = top.get("format_version", FORMAT_VERSION, kind=int)
    if version != FORMAT_VERSION:
        top.fail("format_version", f"unsupported version {version}, expected {FORMAT_VERSION}")
    name = top.get("name", Path(source).stem, kind=str)
    seed = top.get("seed", 0, kind=int)
    if not 0 <= seed < 2**64:
        top.fail("seed", "must be an unsigned 64-bit integer")

    # population
    pop = top.sub("population")
    defaults = PopulationSpec()
    to_src = pop.sub("toward_source")
    to_dst = pop.sub("toward_destination")
    ivs = {
        "h_src_toward_src": to_src.interval("h_src", defaults.h_src_toward_src, 0.0, 1.0),
        "h_dst_toward_src": to_src.interval("h_dst", defaults.h_dst_toward_src, 0.0, 1.0),
        "h_src_toward_dst": to_dst.interval("h_src", defaults.h_src_toward_dst, 0.0, 1.0),
        "h_dst_toward_dst": to_dst.interval("h_dst", defaults.h_dst_toward_dst, 0.0, 1.0),
    }
    to_src.check_unknown()
    to_dst.check_unknown()
    rp = pop.data.get("relay_power", defaults.relay_power)
    relay_power = pop.interval("relay_power", None) if isinstance(rp, list) else pop.get("relay_power", defaults.relay_power)
    noise_sec = pop.sub("noise")
    noise = _guard(
        noise_sec,
        "pattern",
        lambda: NoisePattern(
            noise_sec.get("pattern", "constant", kind=str),
            noise_sec.get("value", 1.0),
            noise_sec.get("value_mod0", 0.0),
        ),
    )
    noise_sec.check_unknown()
    population = _guard(
        pop,
        "",
        lambda: PopulationSpec(
            n_total=pop.get("n_total", defaults.n_total, kind=int),
            seed=seed,
            d=pop.get("d", defaults.d),
            relay_power=relay_power,
            noise=noise,
            motion_split=pop.get("motion_split", defaults.motion_split),
            kind=RelayKind(pop.get("kind", defaults.kind.value, kind=str)),
            min_power=pop.get("min_power", 0.0),
            **ivs,
        ),
    )
    pop.check_unknown()

    sc = top.sub("scenario")
    scenario = _guard(
        sc,
        "",
        lambda: ScenarioConfig(
            source_power=sc.get("source_power", 15.0),
            y_sq=sc.get("y_sq", 2.0),
            dest_noise_var=sc.get("dest_noise_var", 1.0),
            bandwidth_kbps=sc.get("bandwidth_kbps", 1.0),
            total_power_rule=sc.get("total_power_rule", "scaled", kind=str),
            per_relay_power=sc.get("per_relay_power", None),
            total_power=sc.get("total_power", None),
        ),
    )
    sc.check_unknown()

    sw = top.sub("sweep")
    algorithms = tuple(sw.get("algorithms", list(ALGORITHMS), kind=None))
    for a in algorithms:
        if a not in ALGORITHMS:
            sw.fail("algorithms", f"unknown algorithm {a!r}; expected a subset of {list(ALGORITHMS)}")
    sweep = SweepParams(
        l_min=sw.get("l_min", 1, kind=int),
        l_max=sw.get("l_max", min(20, population.n_total), kind=int),
        l_step=sw.get("l_step", 1, kind=int),
        l_values=sw.number_list("l_values", None, kind=int),
        trials=sw.get("trials", 100, kind=int),
        algorithms=algorithms,
        d_values=sw.number_list("d_values", None),
        source_powers=sw.number_list("source_powers", None),
    )
    sw.check_unknown()
    _validate_sweep(sw, sweep, population.n_total)

    al = top.sub("allocation")
    allocation = _guard(
        al, "", lambda: AllocationConfig(al.get("quantum", None), al.get("max_iters", 10**6, kind=int))
    )
    al.check_unknown()

    ch = top.sub("chain")
    chain = ChainParams(
        instances=ch.get("instances", 1000, kind=int),
        l_values=ch.number_list("l_values", (2, 4, 8, 12, 16), kind=int),
        b1_draws=ch.get("b1_draws", 200, kind=int),
    )
    ch.check_unknown()
    if chain.instances < 1 or chain.b1_draws < 1:
        ch.fail("instances", "instances and b1_draws must be >= 1")
    if min(chain.l_values) < 1 or max(chain.l_values) > population.n_total:
        ch.fail("l_values", f"values must lie in [1, {population.n_total}]")

    bd = top.sub("bound")
    bound = BoundParams(
        instances=bd.get("instances", 10000, kind=int),
        l_max=bd.get("l_max", 20, kind=int),
        coef_range=bd.interval("coef_range", (0.01, 1.0), 0.0, 1.0),
        power_range=bd.interval("power_range", (1.0, 25.0)),
        noise_max=bd.get("noise_max", 2.0),
        source_power_range=bd.interval("source_power_range", (1.0, 25.0)),
        y_sq_range=bd.interval("y_sq_range", (0.1, 4.0)),
    )
    bd.check_unknown()
    if bound.instances < 1 or bound.l_max < 1 or not bound.noise_max > 0:
        bd.fail("instances", "instances, l_max and noise_max must be positive")
    if not bound.power_range[0] > 0 or not bound.source_power_range[0] > 0:
        bd.fail("power_range", "power ranges must be strictly positive")

    orc = top.sub("orchestrate")
    orchestrate = OrchestrateParams(
        destinations=orc.get("destinations", 3, kind=int),
        l_min=orc.get("l_min", 1, kind=int),
        l_max=orc.get("l_max", min(20, population.n_total), kind=int),
    )
    orc.check_unknown()
    if orchestrate.destinations < 1 or not 1 <= orchestrate.l_min <= orchestrate.l_max <= population.n_total:
        orc.fail("l_max", f"need destinations >= 1 and 1 <= l_min <= l_max <= {population.n_total}")

    top.check_unknown()
    return ExperimentConfig(
        name=name,
        population=population,
        scenario=scenario,
        sweep=sweep,
        allocation=allocation,
        chain=chain,
        bound=bound,
        orchestrate=orchestrate,
        seed=seed,
        source=source,
        digest=hashlib.sha256(raw).hexdigest(),
    )


def _validate_sweep(sec: _Section, sweep: SweepParams, n_total: int):
    if sweep.trials < 1:
        sec.fail("trials", "must be >= 1")
    if sweep.l_step < 1:
        sec.fail("l_step", "must be >= 1")
    Ls = sweep.L_values()
    if not Ls or Ls[0] < 1 or Ls[-1] > n_total:
        sec.fail("l_max", f"relay counts must lie in [1, {n_total}], got {Ls[:1]}..{Ls[-1:]}")
    if sweep.d_values is not None and any(d <= 0 for d in sweep.d_values):
        sec.fail("d_values", "grid steps must be > 0")
    if sweep.source_powers is not None and any(q <= 0 for q in sweep.source_powers):
        sec.fail("source_powers", "source powers must be > 0")
