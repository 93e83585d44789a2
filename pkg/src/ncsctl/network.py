"""Network timing: message sizes, delay aggregates, and delay policies.

The loop under study ships quantized measurements and symbol-valued inputs
through a shared network whose per-message latency is bounded but not
known in advance.  This module turns the raw channel characteristics into
the two numbers the rest of the toolkit consumes: the smallest and largest
number of sampling periods one full sensing-to-actuation round trip can
occupy.

A round trip stacks, in order: a node request, transport of the measurement
message, the controller's compute time, another node request, and transport
of the input message, with propagation latency on both crossings.  Dropouts
are modeled by retransmission: up to ``n_dropout`` consecutive losses
stretch the worst case by a factor ``1 + n_dropout`` while leaving the best
case alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PolicyExhausted

# Downward nudge applied before every ceiling so that products that are
# integers up to double rounding do not jump a slot.
CEIL_NUDGE = 1e-12


def _ceil(v: float) -> int:
    return int(math.ceil(v - CEIL_NUDGE))


def message_bits(symbol_count: int, overhead: float) -> int:
    """Bits on the wire for one message drawn from ``symbol_count`` symbols.

    The payload is ``ceil(log2(count))`` bits; framing scales it by
    ``1 + overhead`` and the result is rounded up to whole bits.
    """
    if symbol_count < 1:
        raise ValueError("symbol_count must be at least 1")
    payload = (symbol_count - 1).bit_length() if symbol_count > 1 else 0
    return _ceil((1.0 + overhead) * payload)


@dataclass(frozen=True)
class NetworkParams:
    """Channel and node characteristics.

    Rates are in bits per second; times in seconds; overheads are fractions
    of payload.  ``n_dropout`` is the largest number of consecutive losses
    of a single message the network can inflict.
    """

    bandwidth_min: float
    bandwidth_max: float
    delta_ctrl_min: float
    delta_ctrl_max: float
    delta_req_min: float
    delta_req_max: float
    delta_net_min: float
    delta_net_max: float
    overhead_meas: float
    overhead_input: float
    n_dropout: int = 0

    def __post_init__(self):
        if not (0 < self.bandwidth_min <= self.bandwidth_max):
            raise ValueError("need 0 < bandwidth_min <= bandwidth_max")
        for lo, hi, nm in (
            (self.delta_ctrl_min, self.delta_ctrl_max, "ctrl"),
            (self.delta_req_min, self.delta_req_max, "req"),
            (self.delta_net_min, self.delta_net_max, "net"),
        ):
            if lo < 0 or hi < lo:
                raise ValueError(f"delta_{nm} bounds out of order")
        if self.n_dropout < 0:
            raise ValueError("n_dropout must be nonnegative")


@dataclass(frozen=True)
class DelayBounds:
    """Round-trip delay aggregates and their sampling-period counts."""

    bits_meas: int
    bits_input: int
    transport_meas_min: float
    transport_meas_max: float
    transport_input_min: float
    transport_input_max: float
    round_trip_min: float
    round_trip_max: float
    delay_min: float
    delay_max: float
    n_min: int
    n_max: int
    tau: float

    def as_report(self) -> dict:
        return {
            "bits_meas": self.bits_meas,
            "bits_input": self.bits_input,
            "transport_meas_min_s": self.transport_meas_min,
            "transport_meas_max_s": self.transport_meas_max,
            "transport_input_min_s": self.transport_input_min,
            "transport_input_max_s": self.transport_input_max,
            "round_trip_min_s": self.round_trip_min,
            "round_trip_max_s": self.round_trip_max,
            "delay_min_s": self.delay_min,
            "delay_max_s": self.delay_max,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "tau_s": self.tau,
        }


def compute_delay_bounds(
    params: NetworkParams,
    n_measurement_symbols: int,
    n_input_symbols: int,
    tau: float,
) -> DelayBounds:
    """Aggregate per-message bounds into whole-period delay counts.

    Fast channel conditions (highest bandwidth, smallest latencies) give the
    best case; the slow extremes give the worst case, which dropout
    retransmission then scales by ``1 + n_dropout``.  Period counts round
    up, and finite bandwidth makes at least one period elapse in every
    round trip.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    bm = message_bits(n_measurement_symbols, params.overhead_meas)
    bi = message_bits(n_input_symbols, params.overhead_input)

    tm_min = bm / params.bandwidth_max
    tm_max = bm / params.bandwidth_min
    ti_min = bi / params.bandwidth_max
    ti_max = bi / params.bandwidth_min

    rt_min = (
        tm_min
        + params.delta_ctrl_min
        + ti_min
        + 2.0 * params.delta_req_min
        + 2.0 * params.delta_net_min
    )
    rt_max = (
        tm_max
        + params.delta_ctrl_max
        + ti_max
        + 2.0 * params.delta_req_max
        + 2.0 * params.delta_net_max
    )

    d_min = rt_min
    d_max = (1 + params.n_dropout) * rt_max

    n_min = max(1, _ceil(d_min / tau))
    n_max = max(1, _ceil(d_max / tau))
    if n_min > n_max:
        raise ValueError("delay bounds inverted; check channel parameters")
    return DelayBounds(
        bits_meas=bm,
        bits_input=bi,
        transport_meas_min=tm_min,
        transport_meas_max=tm_max,
        transport_input_min=ti_min,
        transport_input_max=ti_max,
        round_trip_min=rt_min,
        round_trip_max=rt_max,
        delay_min=d_min,
        delay_max=d_max,
        n_min=n_min,
        n_max=n_max,
        tau=tau,
    )


# ---------------------------------------------------------------------------
# Delay policies
# ---------------------------------------------------------------------------


class DelayPolicy:
    """Produces the period count of each successive loop iteration."""

    def sample(self, bounds: DelayBounds, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


class UniformDelays(DelayPolicy):
    """Independent uniform draws over [n_min; n_max]."""

    def sample(self, bounds: DelayBounds, rng: np.random.Generator) -> int:
        return int(rng.integers(bounds.n_min, bounds.n_max + 1))

    def describe(self) -> str:
        return "uniform"


class FixedDelays(DelayPolicy):
    """Every iteration takes the same number of periods."""

    def __init__(self, n: int):
        self.n = int(n)

    def sample(self, bounds: DelayBounds, rng: np.random.Generator) -> int:
        if not bounds.n_min <= self.n <= bounds.n_max:
            raise ValueError(
                f"fixed delay {self.n} outside [{bounds.n_min}; {bounds.n_max}]"
            )
        return self.n

    def describe(self) -> str:
        return f"fixed({self.n})"


class ScriptedDelays(DelayPolicy):
    """Plays back an explicit finite sequence; raises when it runs dry."""

    def __init__(self, sequence: list[int]):
        self.sequence = [int(v) for v in sequence]
        self._pos = 0

    def sample(self, bounds: DelayBounds, rng: np.random.Generator) -> int:
        if self._pos >= len(self.sequence):
            raise PolicyExhausted(
                f"scripted delay sequence exhausted after {self._pos} draws"
            )
        v = self.sequence[self._pos]
        self._pos += 1
        if not bounds.n_min <= v <= bounds.n_max:
            raise ValueError(f"scripted delay {v} outside [{bounds.n_min}; {bounds.n_max}]")
        return v

    def reset(self) -> None:
        self._pos = 0

    def describe(self) -> str:
        return f"scripted(len={len(self.sequence)})"


class WorstCaseDelays(DelayPolicy):
    def sample(self, bounds: DelayBounds, rng: np.random.Generator) -> int:
        return bounds.n_max

    def describe(self) -> str:
        return "worst-case-max"


class BestCaseDelays(DelayPolicy):
    def sample(self, bounds: DelayBounds, rng: np.random.Generator) -> int:
        return bounds.n_min

    def describe(self) -> str:
        return "best-case-min"


def make_policy(spec: str) -> DelayPolicy:
    """Parse a policy description: ``uniform``, ``fixed:N``, ``worst``,
    ``best``, or ``script:1,2,3``."""
    if spec == "uniform":
        return UniformDelays()
    if spec == "worst":
        return WorstCaseDelays()
    if spec == "best":
        return BestCaseDelays()
    if spec.startswith("fixed:"):
        return FixedDelays(int(spec.split(":", 1)[1]))
    if spec.startswith("script:"):
        seq = [int(v) for v in spec.split(":", 1)[1].split(",") if v.strip()]
        return ScriptedDelays(seq)
    raise ValueError(f"unknown delay policy {spec!r}")
