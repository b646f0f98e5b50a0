"""
Relay subset selection and power allocation.

Three schemes of increasing effort share one result type:

* ``uniform_arbitrary`` - a random L-subset, equal power ``Q_tot / L``
* ``uniform_ranked``    - the L relays with the best individual capacity, equal power
* ``optimized``         - the ranked subset with a searched power split

The searched split is a greedy quantized ascent on the combined capacity:
power moves between relays in multiples of ``quantum`` while every relay stays
above its minimum forwarding power and the total is conserved.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import (
    DEFAULT_BANDWIDTH_KBPS,
    RankedRelays,
    capacity_bits,
    capacity_from_snr,
    rank_relays,
)
from .channel_model import DestinationNode, RelayNode, SourceSignal, combined_snr_arrays, leq
from .errors import EmptyPool, EmptySelection, InfeasibleBudget, InsufficientRelays

log = logging.getLogger(__name__)

B1_MAX_RETRIES = 100


class Scheme(str, enum.Enum):
    UNIFORM_ARBITRARY = "uniform_arbitrary"
    UNIFORM_RANKED = "uniform_ranked"
    OPTIMIZED = "optimized"
    MAX_FADING = "max_fading"
    MAX_POWER = "max_power"


@dataclass(frozen=True)
class RelaySelection:
    """Ordered relay subset with per-relay transmit powers.

    ``ordering_ok`` is only set for optimized selections: whether individual
    capacities under the allocated powers stay non-increasing along
    ``relay_ids``.  A ``False`` value is a diagnostic, not an error.
    """

    relay_ids: tuple[int, ...]
    powers: tuple[float, ...]
    total_power: float
    scheme: Scheme
    ordering_ok: bool | None = None
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "relay_ids", tuple(int(i) for i in self.relay_ids))
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if not self.relay_ids:
            raise EmptySelection("a selection needs at least one relay")
        if len(self.relay_ids) != len(self.powers):
            raise ValueError("relay_ids and powers differ in length")
        if len(set(self.relay_ids)) != len(self.relay_ids):
            raise ValueError(f"duplicate relay ids in {self.relay_ids}")
        if any(p < 0 for p in self.powers):
            raise ValueError("negative power in selection")
        s = math.fsum(self.powers)
        if abs(s - self.total_power) > 1e-9 * max(abs(self.total_power), 1e-300):
            raise ValueError(f"powers sum to {s}, expected total_power={self.total_power}")

    def __len__(self):
        return len(self.relay_ids)


@dataclass(frozen=True)
class AllocationConfig:
    """Greedy ascent knobs; ``quantum=None`` means ``total_power / 1000``."""

    quantum: float | None = None
    max_iters: int = 10**6

    def __post_init__(self):
        if self.quantum is not None and not self.quantum > 0:
            raise ValueError(f"quantum must be > 0, got {self.quantum}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    def quantum_for(self, total_power: float) -> float:
        return self.quantum if self.quantum is not None else total_power / 1000.0


# ----------------------------------------------------------------------
# evaluation helpers
# ----------------------------------------------------------------------

@dataclass
class PoolArrays:
    """Column view of a relay pool, indexed by relay id."""

    ids: np.ndarray
    h_src: np.ndarray
    h_dst: np.ndarray
    power: np.ndarray
    noise: np.ndarray
    min_power: np.ndarray
    index: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_pool(cls, pool: Sequence[RelayNode]) -> "PoolArrays":
        pa = cls(
            ids=np.array([r.id for r in pool], dtype=np.int64),
            h_src=np.array([r.h_src for r in pool], dtype=float),
            h_dst=np.array([r.h_dst for r in pool], dtype=float),
            power=np.array([r.power for r in pool], dtype=float),
            noise=np.array([r.noise_var for r in pool], dtype=float),
            min_power=np.array([r.min_power for r in pool], dtype=float),
        )
        pa.index = {int(rid): k for k, rid in enumerate(pa.ids)}
        if len(pa.index) != len(pool):
            raise ValueError("relay ids must be unique within a pool")
        return pa

    def rows(self, relay_ids: Sequence[int]) -> np.ndarray:
        try:
            return np.array([self.index[int(i)] for i in relay_ids], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"relay id {exc.args[0]} not in pool") from None

    def snr(self, source: SourceSignal, dest: DestinationNode, rows: np.ndarray, powers: np.ndarray) -> float:
        return combined_snr_arrays(
            source.power, source.y_sq, self.h_src[rows], self.h_dst[rows], powers, self.noise[rows], dest.noise_var
        )


def _as_arrays(pool) -> PoolArrays:
    return pool if isinstance(pool, PoolArrays) else PoolArrays.from_pool(pool)


def selection_snr(source: SourceSignal, pool, dest: DestinationNode, selection: RelaySelection) -> float:
    pa = _as_arrays(pool)
    return pa.snr(source, dest, pa.rows(selection.relay_ids), np.asarray(selection.powers))


def selection_capacity(
    source: SourceSignal,
    pool,
    dest: DestinationNode,
    selection: RelaySelection,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
):
    """Combined capacity of ``selection`` using its allocated powers."""
    return capacity_from_snr(selection_snr(source, pool, dest, selection), bandwidth_kbps)


def _check_count(n_pool: int, L: int):
    if n_pool == 0:
        raise EmptyPool("relay pool is empty")
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if L > n_pool:
        raise InsufficientRelays(f"requested L={L} relays from a pool of {n_pool}")


# ----------------------------------------------------------------------
# selectors
# ----------------------------------------------------------------------

def select_uniform(
    pool: Sequence[RelayNode] | PoolArrays,
    L: int,
    total_power: float,
    rng_seed: int | np.random.Generator,
    max_retries: int = B1_MAX_RETRIES,
) -> RelaySelection:
    """Random L-subset with equal power per relay.

    Subsets whose equal share falls below some member's minimum power are
    re-drawn, at most ``max_retries`` times.
    """
    pa = _as_arrays(pool)
    n = len(pa.ids)
    _check_count(n, L)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    share = total_power / L
    attempts = 1 if L == n else max_retries
    for _ in range(attempts):
        rows = np.arange(n) if L == n else rng.choice(n, size=L, replace=False)
        if share >= pa.min_power[rows].max():
            return RelaySelection(pa.ids[rows], [share] * L, total_power, Scheme.UNIFORM_ARBITRARY)
    raise InfeasibleBudget(f"no feasible {L}-subset for total_power={total_power} after {attempts} draws")


def select_topk(
    source: SourceSignal,
    pool: Sequence[RelayNode],
    dest: DestinationNode,
    L: int,
    total_power: float,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
    ranked: RankedRelays | None = None,
) -> RelaySelection:
    """Top-L relays by individual capacity, equal power ``total_power / L``.

    ``ranked`` may carry a precomputed :func:`rank_relays` result for ``pool``.
    """
    _check_count(len(pool), L)
    if ranked is None:
        ranked = rank_relays(source, pool, dest, bandwidth_kbps)
    ids = ranked.order[:L]
    share = total_power / L
    mins = {r.id: r.min_power for r in pool}
    worst = max(mins[i] for i in ids)
    if share < worst:
        raise InfeasibleBudget(f"equal share {share} W is below a selected relay's minimum {worst} W")
    return RelaySelection(ids, [share] * L, total_power, Scheme.UNIFORM_RANKED)


def feasible_start(mins: np.ndarray, total_power: float) -> np.ndarray:
    """Equal split raised to the minimum powers, rest shared equally.

    Returns the unique point where every relay gets ``max(t, min_w)`` with the
    level ``t`` chosen so the total is conserved.  Equal to the uniform split
    whenever that is feasible.
    """
    L = len(mins)
    if math.fsum(mins) > total_power * (1 + 1e-12):
        raise InfeasibleBudget(f"minimum powers sum to {math.fsum(mins)} W > budget {total_power} W")
    if total_power / L >= mins.max():
        return np.full(L, total_power / L)
    m = np.sort(mins)
    suffix = np.concatenate([np.cumsum(m[::-1])[::-1], [0.0]])
    level = m[0]
    for k in range(L, 0, -1):
        # k lowest-minimum relays sit at the level, the rest at their minimums
        t = (total_power - suffix[k]) / k
        if t >= m[k - 1]:
            level = t
            break
    return np.maximum(level, mins)


def _ascent(a, b, K, c, p, mins, q, max_iters, total_power):
    """Greedy pairwise quantum transfers; returns (powers, snr, moves)."""
    slack = 1e-12 * total_power

    def value(A, B):
        den = B * B + c
        if den == 0:
            return math.inf if A != 0 else 0.0
        return A * A * K / den

    x = np.sqrt(p)
    A, B = float(a @ x), float(b @ x)
    best = value(A, B)
    moves = 0
    L = len(p)
    while moves < max_iters:
        can_give = p - q >= mins - slack
        if not can_give.any():
            break
        up = np.sqrt(p + q) - x
        down = np.where(can_give, np.sqrt(np.maximum(p - q, 0.0)) - x, 0.0)
        A2 = A + (a * down)[:, None] + (a * up)[None, :]
        B2 = B + (b * down)[:, None] + (b * up)[None, :]
        den = B2 * B2 + c
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.where(den > 0, A2 * A2 * K / den, np.where(A2 != 0, np.inf, 0.0))
        cand[~can_give, :] = -np.inf
        np.fill_diagonal(cand, -np.inf)
        flat = int(np.argmax(cand))
        i, j = divmod(flat, L)
        if not cand[i, j] > best * (1 + 1e-13):
            break
        # keep pushing along the winning pair while it still pays off
        while moves < max_iters and p[i] - q >= mins[i] - slack:
            xi, xj = math.sqrt(max(p[i] - q, 0.0)), math.sqrt(p[j] + q)
            A_new = A + a[i] * (xi - x[i]) + a[j] * (xj - x[j])
            B_new = B + b[i] * (xi - x[i]) + b[j] * (xj - x[j])
            v = value(A_new, B_new)
            if not v > best * (1 + 1e-13):
                break
            p[i] = max(p[i] - q, 0.0)
            p[j] += q
            x[i], x[j] = xi, xj
            A, B, best = A_new, B_new, v
            moves += 1
        # resynchronise the running sums to avoid drift
        A, B = float(a @ x), float(b @ x)
        best = value(A, B)
    return p, best, moves


def allocate_power(
    source: SourceSignal,
    pool: Sequence[RelayNode] | PoolArrays,
    selection: RelaySelection,
    dest: DestinationNode,
    config: AllocationConfig | None = None,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
) -> RelaySelection:
    """Search a power split for ``selection`` that maximises combined capacity.

    Hard constraints: every relay at or above its ``min_power`` and the split
    summing to ``selection.total_power``.  The start point is the equal split
    (raised to minimums where needed) and the search never accepts a worse
    point, so the result is never below the start.
    """
    config = config or AllocationConfig()
    pa = _as_arrays(pool)
    rows = pa.rows(selection.relay_ids)
    Q = selection.total_power
    mins = pa.min_power[rows]
    p = feasible_start(mins, Q)

    amp_src = pa.h_dst[rows] * pa.h_src[rows]
    a = amp_src
    b = pa.h_dst[rows] * pa.noise[rows]
    K = source.power * source.y_sq
    c = (len(rows) * dest.noise_var) ** 2

    moves = 0
    if len(rows) > 1:
        p, _, moves = _ascent(a, b, K, c, p, mins, config.quantum_for(Q), config.max_iters, Q)
        # absorb rounding so the budget is met to machine precision
        p[int(np.argmax(p))] += Q - math.fsum(p)

    ordering_ok = _ordering_holds(source, pa, dest, rows, p)
    return RelaySelection(
        selection.relay_ids, p, Q, Scheme.OPTIMIZED, ordering_ok=ordering_ok, iterations=moves
    )


def _ordering_holds(source, pa: PoolArrays, dest, rows, powers) -> bool:
    caps = []
    for r, pw in zip(rows, powers):
        try:
            caps.append(capacity_bits(pa.snr(source, dest, np.array([r]), np.array([pw]))))
        except Exception:
            caps.append(math.inf)
    return all(leq(caps[k + 1], caps[k]) for k in range(len(caps) - 1))


def select_optimized(
    source: SourceSignal,
    pool: Sequence[RelayNode],
    dest: DestinationNode,
    L: int,
    total_power: float,
    config: AllocationConfig | None = None,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
    ranked: RankedRelays | None = None,
) -> RelaySelection:
    """Ranked top-L subset followed by :func:`allocate_power`."""
    _check_count(len(pool), L)
    if ranked is None:
        ranked = rank_relays(source, pool, dest, bandwidth_kbps)
    ids = ranked.order[:L]
    start = RelaySelection(ids, [total_power / L] * L, total_power, Scheme.UNIFORM_RANKED)
    return allocate_power(source, pool, start, dest, config, bandwidth_kbps)


# ----------------------------------------------------------------------
# capacity chain
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ChainReport:
    c_b3: float
    c_b2: float
    c_b1_mean: float
    chain_holds: bool
    b3_dominates: bool
    b2_beats_b1_mean: bool
    b1_draws_above_b2: int
    trials: int


def verify_capacity_chain(
    source: SourceSignal,
    pool: Sequence[RelayNode],
    dest: DestinationNode,
    L: int,
    total_power: float,
    config: AllocationConfig | None = None,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
    trials: int = 200,
    seed: int = 0,
    eps: float = 1e-9,
    ranked: RankedRelays | None = None,
) -> ChainReport:
    """Evaluate the three schemes on one instance and compare them.

    The equal-power arbitrary scheme is averaged over ``trials`` seeded draws.
    Individual draws that beat the ranked scheme are counted and logged; only
    the mean enters ``chain_holds``.
    """
    pa = PoolArrays.from_pool(pool)
    if ranked is None:
        ranked = rank_relays(source, pool, dest, bandwidth_kbps)
    b2 = select_topk(source, pool, dest, L, total_power, bandwidth_kbps, ranked=ranked)
    b3 = select_optimized(source, pool, dest, L, total_power, config, bandwidth_kbps, ranked=ranked)
    c_b2 = selection_capacity(source, pa, dest, b2, bandwidth_kbps).kbps
    c_b3 = selection_capacity(source, pa, dest, b3, bandwidth_kbps).kbps

    rng = np.random.default_rng(seed)
    c_b1 = np.empty(trials)
    for t in range(trials):
        sel = select_uniform(pa, L, total_power, rng)
        c_b1[t] = selection_capacity(source, pa, dest, sel, bandwidth_kbps).kbps
    above = int(np.sum(c_b1 > c_b2 + eps))
    if above:
        log.info("L=%d: %d of %d arbitrary draws beat the ranked subset", L, above, trials)
    c_b1_mean = float(c_b1.mean())

    b3_dom = c_b3 >= c_b2 - eps
    b2_mean = c_b2 >= c_b1_mean - eps
    return ChainReport(c_b3, c_b2, c_b1_mean, b3_dom and b2_mean, b3_dom, b2_mean, above, trials)
