"""
Seeded relay populations, baseline selectors and capacity sweeps.

Randomness only enters through population generation and the arbitrary
(equal-power) selector.  Every stream is a numpy ``PCG64`` generator built
from a ``SeedSequence``; per-trial and per-destination streams come from
spawn keys on the master seed, so results do not depend on execution order.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .capacity import DEFAULT_BANDWIDTH_KBPS, CapacityValue, rank_relays
from .channel_model import DestinationNode, RelayKind, RelayNode, SourceSignal
from .errors import InfeasibleBudget, V2XError
from .relay_selection import (
    AllocationConfig,
    ChainReport,
    PoolArrays,
    RelaySelection,
    Scheme,
    _check_count,
    select_optimized,
    select_topk,
    select_uniform,
    selection_capacity,
    verify_capacity_chain,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("proposed_b3", "topk_b2", "uniform_b1", "max_fading", "max_power")
BASELINES = ("topk_b2", "uniform_b1", "max_fading", "max_power")

# spawn-key namespaces, so trial, B-1 and destination streams never collide
_NS_TRIAL = 1
_NS_B1 = 2
_NS_DEST = 3


def derive_seed(master_seed: int, *key: int) -> int:
    """64-bit seed for the substream identified by ``key`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ----------------------------------------------------------------------
# population spec
# ----------------------------------------------------------------------

Interval = tuple[float, float]


class NoiseKind(str, enum.Enum):
    CONSTANT = "constant"
    MOD3 = "mod3"


@dataclass(frozen=True)
class NoisePattern:
    """Relay noise variance by 1-based relay index ``g``.

    ``constant`` gives every relay ``value``; ``mod3`` gives ``value`` when
    ``g % 3 in (1, 2)`` and ``value_mod0`` when ``g % 3 == 0``.
    """

    kind: NoiseKind = NoiseKind.CONSTANT
    value: float = 1.0
    value_mod0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.value < 0 or self.value_mod0 < 0:
            raise ValueError("noise variances must be >= 0")

    def for_index(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g)
        if self.kind is NoiseKind.CONSTANT:
            return np.full(g.shape, float(self.value))
        return np.where(g % 3 == 0, float(self.value_mod0), float(self.value))


def _check_interval(name: str, iv: Interval):
    lo, hi = iv
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"interval {name}={list(iv)} must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class PopulationSpec:
    n_total: int = 100
    seed: int = 0
    h_src_toward_src: Interval = (0.8, 0.95)
    h_dst_toward_src: Interval = (0.0, 0.65)
    h_src_toward_dst: Interval = (0.75, 0.9)
    h_dst_toward_dst: Interval = (0.0, 0.7)
    d: float = 0.001
    relay_power: float | Interval = 20.0
    noise: NoisePattern = field(default_factory=NoisePattern)
    motion_split: float = 0.5
    kind: RelayKind = RelayKind.VEHICLE
    min_power: float = 0.0  # per-relay floor, capped at each relay's own power

    def __post_init__(self):
        if self.n_total < 1:
            raise ValueError(f"n_total must be >= 1, got {self.n_total}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for name in self.interval_names():
            _check_interval(name, getattr(self, name))
        if not self.d > 0:
            raise ValueError(f"d must be > 0, got {self.d}")
        if isinstance(self.relay_power, tuple):
            lo, hi = self.relay_power
            if not 0 < lo <= hi:
                raise ValueError(f"relay_power interval {list(self.relay_power)} must satisfy 0 < lo <= hi")
        elif not self.relay_power > 0:
            raise ValueError(f"relay_power must be > 0, got {self.relay_power}")
        if not 0.0 <= self.motion_split <= 1.0:
            raise ValueError(f"motion_split must lie in [0, 1], got {self.motion_split}")
        if self.min_power < 0:
            raise ValueError(f"min_power must be >= 0, got {self.min_power}")

    @staticmethod
    def interval_names() -> tuple[str, ...]:
        return ("h_src_toward_src", "h_dst_toward_src", "h_src_toward_dst", "h_dst_toward_dst")

    @property
    def mean_relay_power(self) -> float:
        if isinstance(self.relay_power, tuple):
            return 0.5 * (self.relay_power[0] + self.relay_power[1])
        return float(self.relay_power)

    def degenerate_grids(self) -> list[str]:
        """Intervals whose grid collapses to the single point ``lo``."""
        return [n for n in self.interval_names() if self.d > getattr(self, n)[1] - getattr(self, n)[0]]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise"] = {"kind": self.noise.kind.value, "value": self.noise.value, "value_mod0": self.noise.value_mod0}
        out["kind"] = self.kind.value
        return out


def coefficient_grid(interval: Interval, d: float) -> np.ndarray:
    """Arithmetic grid ``lo, lo + d, ...`` not exceeding ``hi``."""
    lo, hi = interval
    n = int(math.floor((hi - lo) / d + 1e-9)) + 1
    return np.minimum(np.round(lo + d * np.arange(n), 12), hi)


def on_grid(value: float, interval: Interval, d: float, tol: float = 1e-9) -> bool:
    lo, hi = interval
    if value < lo - tol or value > hi + tol:
        return False
    k = (value - lo) / d
    return abs(k - round(k)) < 1e-6


def generate_population(spec: PopulationSpec) -> list[RelayNode]:
    """Draw ``spec.n_total`` relays; fully determined by ``spec.seed``."""
    for name in spec.degenerate_grids():
        log.warning("grid step d=%g exceeds the width of %s; every draw is its lower end", spec.d, name)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    n = spec.n_total

    toward_src = rng.random(n) < spec.motion_split

    def draw(iv_src: Interval, iv_dst: Interval) -> np.ndarray:
        g_src = coefficient_grid(iv_src, spec.d)
        g_dst = coefficient_grid(iv_dst, spec.d)
        u = rng.random(n)
        k_src = np.minimum((u * len(g_src)).astype(np.int64), len(g_src) - 1)
        k_dst = np.minimum((u * len(g_dst)).astype(np.int64), len(g_dst) - 1)
        return np.where(toward_src, g_src[k_src], g_dst[k_dst])

    h_src = draw(spec.h_src_toward_src, spec.h_src_toward_dst)
    h_dst = draw(spec.h_dst_toward_src, spec.h_dst_toward_dst)
    if isinstance(spec.relay_power, tuple):
        power = rng.uniform(spec.relay_power[0], spec.relay_power[1], n)
    else:
        power = np.full(n, float(spec.relay_power))
    g = np.arange(1, n + 1)
    noise = spec.noise.for_index(g)

    return [
        RelayNode(
            int(g[k]), float(h_src[k]), float(h_dst[k]), float(power[k]), float(noise[k]),
            min_power=min(spec.min_power, float(power[k])), kind=spec.kind,
        )
        for k in range(n)
    ]


# ----------------------------------------------------------------------
# scenario
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Source/destination parameters and the rule that sets ``Q_tot`` for L relays.

    ``total_power_rule="scaled"`` gives ``L * per_relay_power`` (the
    population's mean relay power when ``per_relay_power`` is None);
    ``"fixed"`` always gives ``total_power``.
    """

    source_power: float = 15.0
    y_sq: float = 2.0
    dest_noise_var: float = 1.0
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS
    total_power_rule: str = "scaled"
    per_relay_power: float | None = None
    total_power: float | None = None

    def __post_init__(self):
        if not self.source_power > 0:
            raise ValueError(f"source_power must be > 0, got {self.source_power}")
        if self.y_sq < 0 or self.dest_noise_var < 0:
            raise ValueError("y_sq and dest_noise_var must be >= 0")
        if not self.bandwidth_kbps > 0:
            raise ValueError(f"bandwidth_kbps must be > 0, got {self.bandwidth_kbps}")
        if self.total_power_rule not in ("scaled", "fixed"):
            raise ValueError(f"total_power_rule must be 'scaled' or 'fixed', got {self.total_power_rule!r}")
        if self.total_power_rule == "fixed" and not (self.total_power and self.total_power > 0):
            raise ValueError("total_power_rule='fixed' needs total_power > 0")
        if self.per_relay_power is not None and not self.per_relay_power > 0:
            raise ValueError("per_relay_power must be > 0")

    def source(self) -> SourceSignal:
        return SourceSignal.scalar(self.y_sq, self.source_power)

    def destination(self) -> DestinationNode:
        return DestinationNode(self.dest_noise_var)

    def budget(self, L: int, mean_relay_power: float) -> float:
        if self.total_power_rule == "fixed":
            return float(self.total_power)
        per = self.per_relay_power if self.per_relay_power is not None else mean_relay_power
        return L * per


# ----------------------------------------------------------------------
# baselines
# ----------------------------------------------------------------------

def _top_by_key(pool: Sequence[RelayNode], L: int, key: Callable[[RelayNode], float]) -> list[int]:
    keys = np.array([key(r) for r in pool])
    ids = np.array([r.id for r in pool])
    idx = np.lexsort((ids, -keys))[:L]
    return [int(ids[i]) for i in idx]


def _equal_split(pool, ids, L, total_power, scheme) -> RelaySelection:
    share = total_power / L
    mins = {r.id: r.min_power for r in pool}
    worst = max(mins[i] for i in ids)
    if share < worst:
        raise InfeasibleBudget(f"equal share {share} W is below a selected relay's minimum {worst} W")
    return RelaySelection(ids, [share] * L, total_power, scheme)


def baseline_max_fading(source, pool, dest, L: int, total_power: float) -> RelaySelection:
    """Top-L relays by the two-hop gain ``h_src * h_dst``, equal power."""
    _check_count(len(pool), L)
    ids = _top_by_key(pool, L, lambda r: r.h_src * r.h_dst)
    return _equal_split(pool, ids, L, total_power, Scheme.MAX_FADING)


def baseline_max_power(source, pool, dest, L: int, total_power: float) -> RelaySelection:
    """Top-L relays by their own power rating; transmitted with equal power ``Q_tot / L``."""
    _check_count(len(pool), L)
    ids = _top_by_key(pool, L, lambda r: r.power)
    return _equal_split(pool, ids, L, total_power, Scheme.MAX_POWER)


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    L: int
    label: str
    mean_capacity_kbps: float | None
    trials: int
    error: str | None = None

    @property
    def valid(self) -> bool:
        return self.mean_capacity_kbps is not None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    labels: list[str]
    trials: int
    seed: int
    provenance: dict = field(default_factory=dict)

    def cell(self, L: int, label: str) -> SweepRow:
        for r in self.rows:
            if r.L == L and r.label == label:
                return r
        raise KeyError((L, label))

    def curve(self, label: str) -> dict[int, float | None]:
        return {r.L: r.mean_capacity_kbps for r in self.rows if r.label == label}

    def L_values(self) -> list[int]:
        return sorted({r.L for r in self.rows})


def _run_algorithm(label, source, pool, pa, dest, L, Q, ranked, alloc, bw, b1_seed):
    if label == "proposed_b3":
        sel = select_optimized(source, pool, dest, L, Q, alloc, bw, ranked=ranked)
    elif label == "topk_b2":
        sel = select_topk(source, pool, dest, L, Q, bw, ranked=ranked)
    elif label == "uniform_b1":
        sel = select_uniform(pa, L, Q, b1_seed)
    elif label == "max_fading":
        sel = baseline_max_fading(source, pool, dest, L, Q)
    elif label == "max_power":
        sel = baseline_max_power(source, pool, dest, L, Q)
    else:
        raise ValueError(f"unknown algorithm {label!r}; expected one of {ALGORITHMS}")
    return selection_capacity(source, pa, dest, sel, bw).kbps


def trial_capacities(
    spec: PopulationSpec,
    config: ScenarioConfig,
    L_values: Sequence[int],
    algorithms: Sequence[str],
    trial: int,
    master_seed: int,
    alloc: AllocationConfig | None = None,
) -> dict[tuple[int, str], float | V2XError]:
    """Capacities for one seeded population: ``{(L, label): kbps or error}``."""
    pop_seed = derive_seed(master_seed, _NS_TRIAL, trial)
    pool = generate_population(replace(spec, seed=pop_seed))
    pa = PoolArrays.from_pool(pool)
    source, dest = config.source(), config.destination()
    ranked = rank_relays(source, pool, dest, config.bandwidth_kbps)
    out: dict[tuple[int, str], float | V2XError] = {}
    for L in L_values:
        Q = config.budget(L, spec.mean_relay_power)
        for label in algorithms:
            try:
                out[(L, label)] = _run_algorithm(
                    label, source, pool, pa, dest, L, Q, ranked, alloc, config.bandwidth_kbps,
                    derive_seed(master_seed, _NS_B1, trial, L),
                )
            except V2XError as exc:
                out[(L, label)] = exc
    return out


def sweep_capacity(
    spec: PopulationSpec,
    config: ScenarioConfig,
    L_values: Iterable[int],
    algorithms: Sequence[str] = ALGORITHMS,
    trials: int = 1,
    master_seed: int | None = None,
    alloc: AllocationConfig | None = None,
) -> SweepResult:
    """Mean capacity per (L, algorithm) over ``trials`` seeded populations.

    A cell whose computation fails in any trial is reported with
    ``mean_capacity_kbps=None`` and the first error message; the rest of the
    sweep still runs.
    """
    L_values = sorted(set(int(L) for L in L_values))
    if not L_values or L_values[0] < 1 or L_values[-1] > spec.n_total:
        raise ValueError(f"L values must lie in [1, {spec.n_total}], got {L_values}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
    master = spec.seed if master_seed is None else int(master_seed)

    sums = {(L, a): 0.0 for L in L_values for a in algorithms}
    errors: dict[tuple[int, str], str] = {}
    for t in range(trials):
        for key, v in trial_capacities(spec, config, L_values, algorithms, t, master, alloc).items():
            if isinstance(v, V2XError):
                errors.setdefault(key, f"{type(v).__name__}: {v}")
            else:
                sums[key] += v

    rows = []
    for L in L_values:
        for a in algorithms:
            if (L, a) in errors:
                rows.append(SweepRow(L, a, None, trials, errors[(L, a)]))
            else:
                rows.append(SweepRow(L, a, sums[(L, a)] / trials, trials))
    provenance = {
        "population": spec.to_dict(),
        "scenario": asdict(config),
        "allocation": asdict(alloc or AllocationConfig()),
        "master_seed": master,
    }
    return SweepResult(rows, list(algorithms), trials, master, provenance)


@dataclass(frozen=True)
class Margin:
    L: int
    baseline_label: str
    margin_kbps: float | None


def compare_algorithms(
    spec: PopulationSpec,
    config: ScenarioConfig,
    L_values: Iterable[int],
    trials: int = 1,
    master_seed: int | None = None,
    alloc: AllocationConfig | None = None,
) -> tuple[SweepResult, list[Margin]]:
    """Sweep every algorithm and tabulate ``proposed_b3`` minus each baseline."""
    result = sweep_capacity(spec, config, L_values, ALGORITHMS, trials, master_seed, alloc)
    margins = []
    for L in result.L_values():
        ours = result.cell(L, "proposed_b3").mean_capacity_kbps
        for b in BASELINES:
            theirs = result.cell(L, b).mean_capacity_kbps
            m = None if ours is None or theirs is None else ours - theirs
            margins.append(Margin(L, b, m))
    return result, margins


# ----------------------------------------------------------------------
# multi-destination orchestration
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Destination:
    """A destination vehicle; ``h_dst`` overrides the pool's second-hop gains by relay id."""

    name: str
    node: DestinationNode
    h_dst: Mapping[int, float] | None = None

    def view(self, pool: Sequence[RelayNode]) -> list[RelayNode]:
        if self.h_dst is None:
            return list(pool)
        return [replace(r, h_dst=float(self.h_dst[r.id])) for r in pool]


@dataclass(frozen=True)
class OrchestrationEntry:
    destination: str
    L: int | None
    selection: RelaySelection | None
    capacity: CapacityValue | None
    error: str | None = None


def argmax_smallest(curve: Sequence[tuple[int, float]]) -> int:
    """L with the highest capacity, ties broken toward the smaller L."""
    best_L, best_c = None, -math.inf
    for L, c in sorted(curve):
        if c > best_c:
            best_L, best_c = L, c
    return best_L


def best_relay_count(
    source: SourceSignal,
    pool: Sequence[RelayNode],
    dest: DestinationNode,
    L_values: Sequence[int],
    budget: Callable[[int], float],
    alloc: AllocationConfig | None = None,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
    choose: Callable[[Sequence[tuple[int, float]]], int] = argmax_smallest,
) -> tuple[int, RelaySelection, CapacityValue]:
    """Run the optimized selector for every L and keep the one ``choose`` picks."""
    ranked = rank_relays(source, pool, dest, bandwidth_kbps)
    pa = PoolArrays.from_pool(pool)
    results = {}
    for L in L_values:
        if L > len(pool):
            continue
        sel = select_optimized(source, pool, dest, L, budget(L), alloc, bandwidth_kbps, ranked=ranked)
        results[L] = (sel, selection_capacity(source, pa, dest, sel, bandwidth_kbps))
    if not results:
        raise ValueError(f"no L in {list(L_values)} fits a pool of {len(pool)} relays")
    L = choose([(L, cap.kbps) for L, (_, cap) in results.items()])
    return L, results[L][0], results[L][1]


def orchestrate_multi_destination(
    source: SourceSignal,
    destinations: Sequence[Destination],
    pool: Sequence[RelayNode],
    L_values: Sequence[int],
    budget: Callable[[int], float],
    alloc: AllocationConfig | None = None,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
    choose: Callable[[Sequence[tuple[int, float]]], int] = argmax_smallest,
) -> list[OrchestrationEntry]:
    """Pick a relay subset, relay count and power split for every destination.

    Relays are shared: one relay may serve several destinations in the same
    slot, so each destination is solved independently and the output does not
    depend on the order of ``destinations``.
    """
    if not destinations:
        raise ValueError("at least one destination is required")
    out = []
    for dst in destinations:
        try:
            L, sel, cap = best_relay_count(
                source, dst.view(pool), dst.node, L_values, budget, alloc, bandwidth_kbps, choose
            )
            out.append(OrchestrationEntry(dst.name, L, sel, cap))
        except (V2XError, KeyError, ValueError) as exc:
            out.append(OrchestrationEntry(dst.name, None, None, None, f"{type(exc).__name__}: {exc}"))
    return out


def draw_destinations(
    spec: PopulationSpec,
    count: int,
    dest_noise_var: float,
    master_seed: int,
) -> list[Destination]:
    """Destinations with their own second-hop gains, redrawn from ``spec``."""
    dests = []
    for k in range(count):
        seed = derive_seed(master_seed, _NS_DEST, k)
        drawn = generate_population(replace(spec, seed=seed))
        dests.append(Destination(f"dest{k + 1}", DestinationNode(dest_noise_var), {r.id: r.h_dst for r in drawn}))
    return dests


# ----------------------------------------------------------------------
# random instances for the SNR bound sweep
# ----------------------------------------------------------------------

def random_bound_instance(
    rng: np.random.Generator,
    l_max: int = 20,
    coef_range: Interval = (0.01, 1.0),
    power_range: Interval = (1.0, 25.0),
    noise_max: float = 2.0,
    source_power_range: Interval = (1.0, 25.0),
    y_sq_range: Interval = (0.1, 4.0),
) -> tuple[SourceSignal, list[RelayNode], DestinationNode]:
    """One instance with a noiseless destination and strictly noisy relays."""
    L = int(rng.integers(1, l_max + 1))
    h = rng.uniform(coef_range[0], coef_range[1], size=(2, L))
    power = rng.uniform(power_range[0], power_range[1], size=L)
    # noise in (0, noise_max]
    noise = noise_max - rng.uniform(0.0, noise_max, size=L)
    source = SourceSignal.scalar(float(rng.uniform(*y_sq_range)), float(rng.uniform(*source_power_range)))
    relays = [
        RelayNode(g + 1, float(h[0, g]), float(h[1, g]), float(power[g]), float(noise[g])) for g in range(L)
    ]
    return source, relays, DestinationNode(0.0)


# ----------------------------------------------------------------------
# capacity chain over many populations
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ChainRow:
    instance: int
    L: int
    report: ChainReport


def chain_sweep(
    spec: PopulationSpec,
    config: ScenarioConfig,
    L_values: Sequence[int],
    instances: int,
    b1_draws: int = 200,
    master_seed: int | None = None,
    alloc: AllocationConfig | None = None,
) -> list[ChainRow]:
    """:func:`verify_capacity_chain` on ``instances`` seeded populations for every L."""
    master = spec.seed if master_seed is None else int(master_seed)
    source, dest = config.source(), config.destination()
    rows = []
    for i in range(instances):
        pool = generate_population(replace(spec, seed=derive_seed(master, _NS_TRIAL, i)))
        ranked = rank_relays(source, pool, dest, config.bandwidth_kbps)
        for L in L_values:
            rep = verify_capacity_chain(
                source, pool, dest, L, config.budget(L, spec.mean_relay_power), alloc,
                config.bandwidth_kbps, b1_draws, derive_seed(master, _NS_B1, i, L), ranked=ranked,
            )
            rows.append(ChainRow(i, L, rep))
    return rows
