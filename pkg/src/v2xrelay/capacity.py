"""AWGN capacity of relayed paths and capacity-based relay ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel_model import DestinationNode, RelayNode, SourceSignal, relay_arrays, combined_snr
from .errors import EmptyPool, InfiniteSnr, InvalidSnr

DEFAULT_BANDWIDTH_KBPS = 1.0


@dataclass(frozen=True)
class CapacityValue:
    bits_per_use: float
    kbps: float


def capacity_bits(snr: float) -> float:
    return 0.5 * math.log2(1.0 + snr)


def capacity_from_snr(snr: float, bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS) -> CapacityValue:
    """``0.5 * log2(1 + snr)`` bits per use, scaled by the bandwidth in kbps."""
    if not snr >= 0:
        raise InvalidSnr(f"snr must be >= 0, got {snr}")
    if not bandwidth_kbps > 0:
        raise ValueError(f"bandwidth_kbps must be > 0, got {bandwidth_kbps}")
    bits = capacity_bits(snr)
    return CapacityValue(bits, bits * bandwidth_kbps)


def path_capacity(
    source: SourceSignal,
    relays: Sequence[RelayNode],
    dest: DestinationNode,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
) -> CapacityValue:
    return capacity_from_snr(combined_snr(source, relays, dest), bandwidth_kbps)


def individual_capacity(
    source: SourceSignal,
    relay: RelayNode,
    dest: DestinationNode,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
) -> CapacityValue:
    """Capacity of the one-relay path, destination noise included.

    Unbounded SNR maps to an infinite capacity so such relays rank first.
    """
    try:
        return path_capacity(source, [relay], dest, bandwidth_kbps)
    except InfiniteSnr:
        return CapacityValue(math.inf, math.inf)


@dataclass(frozen=True)
class RankedRelays:
    order: list[int]
    capacities: list[CapacityValue]


def individual_snrs(source: SourceSignal, pool: Sequence[RelayNode], dest: DestinationNode) -> np.ndarray:
    """One-relay combined SNR for every relay in ``pool``; ``inf`` when unbounded."""
    h_src, h_dst, powers, noise = relay_arrays(pool)
    amp = np.sqrt(powers) * h_dst
    signal = (amp * h_src) ** 2 * source.power * source.y_sq
    denom = (amp * noise) ** 2 + dest.noise_var**2
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = signal / denom
    snr[(denom == 0) & (signal == 0)] = 0.0
    return snr


def rank_relays(
    source: SourceSignal,
    pool: Sequence[RelayNode],
    dest: DestinationNode,
    bandwidth_kbps: float = DEFAULT_BANDWIDTH_KBPS,
) -> RankedRelays:
    """Sort relays by descending individual capacity, ties by ascending id."""
    if not pool:
        raise EmptyPool("cannot rank an empty relay pool")
    bits = 0.5 * np.log2(1.0 + individual_snrs(source, pool, dest))
    ids = np.array([r.id for r in pool])
    idx = np.lexsort((ids, -bits))
    return RankedRelays(
        [int(ids[i]) for i in idx],
        [CapacityValue(float(bits[i]), float(bits[i]) * bandwidth_kbps) for i in idx],
    )
