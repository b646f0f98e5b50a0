"""Cooperative two-hop relay selection and power allocation for V2X links."""

__version__ = "0.1.0"

from .capacity import CapacityValue, capacity_from_snr, path_capacity, rank_relays
from .channel_model import (
    DestinationNode,
    RelayKind,
    RelayNode,
    SourceSignal,
    combined_snr,
    single_path_snr,
    sum_path_snr,
    verify_snr_bound,
)
from .relay_selection import (
    AllocationConfig,
    RelaySelection,
    Scheme,
    allocate_power,
    select_optimized,
    select_topk,
    select_uniform,
    verify_capacity_chain,
)
from .simulation import PopulationSpec, ScenarioConfig, generate_population, sweep_capacity
