"""
Two-hop amplify-and-forward signal model.

A source vehicle transmits ``y`` with power ``Q_src``.  Each relay ``g``
receives ``sqrt(Q_src) * h_src_g * y + noise_g`` and forwards it with its own
power over a second hop ``h_dst_g``.  Noise variances enter the signal as
deterministic additive terms, so every quantity here is an exact function of
its inputs.

SNR functions return plain floats.  When every noise term in a denominator is
zero the ratio is unbounded and :class:`~v2xrelay.errors.InfiniteSnr` is
raised instead of returning ``inf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySelection, InfiniteSnr, InvalidRelay, InvalidSignal, PreconditionViolated

REL_TOL = 1e-9
ABS_TOL = 1e-12


def leq(a: float, b: float, rel: float = REL_TOL, abs_: float = ABS_TOL) -> bool:
    """``a <= b`` up to a relative tolerance with an absolute floor."""
    return a <= b + max(rel * max(abs(a), abs(b)), abs_)


class RelayKind(str, enum.Enum):
    VEHICLE = "vehicle"
    UAV = "uav"
    MOBILE = "mobile"
    FIXED_STATION = "fixed_station"


@dataclass(frozen=True)
class RelayNode:
    id: int
    h_src: float
    h_dst: float
    power: float
    noise_var: float
    min_power: float = 0.0
    kind: RelayKind = RelayKind.VEHICLE

    def __post_init__(self):
        if self.id < 1:
            raise InvalidRelay(f"relay id must be >= 1, got {self.id}")
        for name in ("h_src", "h_dst"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidRelay(f"relay {self.id}: {name}={v} outside [0, 1]")
        if not self.power > 0:
            raise InvalidRelay(f"relay {self.id}: power must be > 0, got {self.power}")
        if self.min_power < 0 or self.min_power > self.power:
            raise InvalidRelay(
                f"relay {self.id}: min_power={self.min_power} must lie in [0, power={self.power}]"
            )
        if self.noise_var < 0:
            raise InvalidRelay(f"relay {self.id}: noise_var must be >= 0, got {self.noise_var}")


@dataclass(frozen=True)
class SourceSignal:
    """Transmitting vehicle: sensing vector ``y`` and transmit power.

    ``n`` optionally pins the expected signal dimension.
    """

    y: np.ndarray
    power: float
    n: int | None = None
    y_sq: float = field(init=False)

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.ndim != 1 or y.size < 1:
            raise InvalidSignal("y must be a non-empty 1-D vector")
        if self.n is not None and y.size != self.n:
            raise InvalidSignal(f"signal dimension {y.size} does not match configured n={self.n}")
        if not self.power > 0:
            raise InvalidSignal(f"source power must be > 0, got {self.power}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_sq", float(np.dot(y, y)))

    @classmethod
    def scalar(cls, y_sq: float, power: float) -> "SourceSignal":
        """One-dimensional signal with ``|y|^2 = y_sq``."""
        if y_sq < 0:
            raise InvalidSignal(f"y_sq must be >= 0, got {y_sq}")
        return cls(np.array([math.sqrt(y_sq)]), power)


@dataclass(frozen=True)
class DestinationNode:
    noise_var: float = 0.0

    def __post_init__(self):
        if self.noise_var < 0:
            raise InvalidSignal(f"destination noise_var must be >= 0, got {self.noise_var}")


# ----------------------------------------------------------------------
# signal propagation
# ----------------------------------------------------------------------

def received_at_relay(source: SourceSignal, relay: RelayNode) -> np.ndarray:
    """First-hop signal at the relay, elementwise over ``y``."""
    return math.sqrt(source.power) * relay.h_src * source.y + relay.noise_var


def relayed_to_destination(source: SourceSignal, relay: RelayNode, dest: DestinationNode) -> np.ndarray:
    """Signal at the destination through a single relay."""
    return math.sqrt(relay.power) * relay.h_dst * received_at_relay(source, relay) + dest.noise_var


def combined_received(source: SourceSignal, relays: Sequence[RelayNode], dest: DestinationNode) -> np.ndarray:
    """Superposition at the destination of all relayed copies.

    The destination noise is counted once per path, i.e. ``L * noise_var``.
    """
    if not relays:
        raise EmptySelection("combined_received needs at least one relay")
    total = np.zeros_like(source.y)
    for r in relays:
        total = total + math.sqrt(r.power) * r.h_dst * received_at_relay(source, r)
    return total + len(relays) * dest.noise_var


# ----------------------------------------------------------------------
# SNR
# ----------------------------------------------------------------------

def combined_snr_arrays(
    source_power: float,
    y_sq: float,
    h_src: np.ndarray,
    h_dst: np.ndarray,
    powers: np.ndarray,
    noise_var: np.ndarray,
    dest_noise_var: float,
) -> float:
    """Combined-path SNR from parallel arrays.

    Powers may be zero here (an allocation can starve a relay); the node
    invariant ``power > 0`` only applies to :class:`RelayNode` itself.
    """
    L = len(powers)
    if L == 0:
        raise EmptySelection("combined SNR of an empty relay set")
    amp = np.sqrt(powers) * h_dst
    signal = float(np.sum(amp * h_src)) ** 2 * source_power * y_sq
    noise = float(np.sum(amp * noise_var)) ** 2 + (L * dest_noise_var) ** 2
    if noise == 0.0:
        if signal == 0.0:
            return 0.0
        raise InfiniteSnr("all noise terms are zero")
    return signal / noise


def relay_arrays(relays: Sequence[RelayNode]):
    h_src = np.array([r.h_src for r in relays], dtype=float)
    h_dst = np.array([r.h_dst for r in relays], dtype=float)
    powers = np.array([r.power for r in relays], dtype=float)
    noise = np.array([r.noise_var for r in relays], dtype=float)
    return h_src, h_dst, powers, noise


def combined_snr(source: SourceSignal, relays: Sequence[RelayNode], dest: DestinationNode) -> float:
    """SNR at the destination when all ``relays`` forward simultaneously.

    ``(sum_g sqrt(Q_g) h_dst_g sqrt(Q_src) h_src_g)^2 |y|^2`` over
    ``(sum_g sqrt(Q_g) h_dst_g s2_g)^2 + (L s2_dst)^2``.
    """
    if not relays:
        raise EmptySelection("combined_snr needs at least one relay")
    h_src, h_dst, powers, noise = relay_arrays(relays)
    return combined_snr_arrays(source.power, source.y_sq, h_src, h_dst, powers, noise, dest.noise_var)


def path_terms(source: SourceSignal, relay: RelayNode) -> tuple[float, float]:
    """Signal and noise amplitudes ``(U, I)`` of a single relayed path."""
    gain = math.sqrt(relay.power) * relay.h_dst
    U = abs(gain * math.sqrt(source.power) * relay.h_src) * math.sqrt(source.y_sq)
    I = abs(gain * relay.noise_var)
    return U, I


def single_path_snr(source: SourceSignal, relay: RelayNode, dest: DestinationNode | None = None) -> float:
    """Per-path SNR ``U^2 / I^2``.

    Destination noise is deliberately ignored; ``dest`` is accepted only so
    the call signature matches the other SNR functions.
    """
    U, I = path_terms(source, relay)
    if U == 0.0:
        return 0.0
    if I == 0.0:
        raise InfiniteSnr(f"relay {relay.id} has zero relay noise")
    return (U / I) ** 2


def sum_path_snr(source: SourceSignal, relays: Sequence[RelayNode], dest: DestinationNode | None = None) -> float:
    return float(sum(single_path_snr(source, r, dest) for r in relays))


# ----------------------------------------------------------------------
# upper bound check
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StepCheck:
    name: str
    lhs: float
    rhs: float
    relation: str
    holds: bool


@dataclass(frozen=True)
class BoundReport:
    combined: float
    summed: float
    holds: bool
    steps: list[StepCheck]

    def all_steps_hold(self) -> bool:
        return all(s.holds for s in self.steps)


def _step(name: str, lhs: float, relation: str, rhs: float) -> StepCheck:
    if relation == "<=":
        ok = leq(lhs, rhs)
    elif relation == ">=":
        ok = leq(rhs, lhs)
    elif relation == "==":
        ok = leq(lhs, rhs) and leq(rhs, lhs)
    else:
        raise ValueError(relation)
    return StepCheck(name, float(lhs), float(rhs), relation, ok)


def verify_snr_bound(source: SourceSignal, relays: Sequence[RelayNode], dest: DestinationNode) -> BoundReport:
    """Check that the combined SNR never exceeds the sum of per-path SNRs.

    Only valid for a noiseless destination.  Besides the final inequality the
    report records every intermediate step of the argument, evaluated on the
    same instance:

    * ``sum_as_u2``: the per-path sum rewritten as ``sum u_w^2`` with ``U_w = u_w I_w``
    * ``square_of_sum``: ``(sum I)^2 >= sum I^2``
    * ``drop_cross_terms``: ``summed >= sum u^2 * sum I^2 / (sum I)^2``
    * ``cauchy_schwarz``: ``(sum u I)^2 <= sum u^2 * sum I^2``
    * ``after_cauchy_schwarz``: ``summed >= (sum u I)^2 / (sum I)^2``
    * ``combined_form``: combined SNR equals ``(sum u I)^2 / (sum I)^2``
    """
    if dest.noise_var != 0:
        raise PreconditionViolated(
            f"bound requires a noiseless destination, got noise_var={dest.noise_var}"
        )
    if not relays:
        raise EmptySelection("verify_snr_bound needs at least one relay")

    combined = combined_snr(source, relays, dest)
    summed = sum_path_snr(source, relays, dest)

    terms = [path_terms(source, r) for r in relays]
    U = np.array([t[0] for t in terms])
    I = np.array([t[1] for t in terms])
    # paths with I == 0 carry U == 0 as well (otherwise sum_path_snr raised)
    u = np.divide(U, I, out=np.zeros_like(U), where=I > 0)

    sum_I = float(I.sum())
    sum_I2 = float(np.dot(I, I))
    sum_u2 = float(np.dot(u, u))
    sum_uI = float(np.dot(u, I))

    steps = [
        _step("sum_as_u2", summed, "==", sum_u2),
        _step("square_of_sum", sum_I**2, ">=", sum_I2),
    ]
    if sum_I > 0:
        steps += [
            _step("drop_cross_terms", summed, ">=", sum_u2 * sum_I2 / sum_I**2),
            _step("cauchy_schwarz", sum_uI**2, "<=", sum_u2 * sum_I2),
            _step("after_cauchy_schwarz", summed, ">=", sum_uI**2 / sum_I**2),
            _step("combined_form", combined, "==", sum_uI**2 / sum_I**2),
        ]
    else:
        steps.append(_step("cauchy_schwarz", sum_uI**2, "<=", sum_u2 * sum_I2))

    return BoundReport(combined, summed, leq(combined, summed), steps)
