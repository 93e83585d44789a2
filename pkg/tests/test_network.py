"""Channel timing model: codeword sizing, delay bounds, delay policies."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncsctl.errors import PolicyExhausted
from ncsctl.network import (
    BestCaseDelays,
    DelayBounds,
    FixedDelays,
    NetworkParams,
    ScriptedDelays,
    UniformDelays,
    WorstCaseDelays,
    compute_delay_bounds,
    make_policy,
    message_bits,
)


def test_message_bits_oracles():
    assert message_bits(1, 0.0) == 0
    assert message_bits(2, 0.0) == 1
    assert message_bits(66, 0.2) == 9  # ceil(1.2 * 7)
    assert message_bits(201 ** 3, 0.2) == 28  # ceil(1.2 * 23)


def test_message_bits_rejects_empty_alphabet():
    with pytest.raises(ValueError):
        message_bits(0, 0.0)


def test_message_bits_monotone_in_count():
    prev = 0
    for n in range(1, 300):
        cur = message_bits(n, 0.2)
        assert cur >= prev
        prev = cur


def reference_params(**over) -> NetworkParams:
    base = dict(
        bandwidth_min=100.0,
        bandwidth_max=1000.0,
        delta_ctrl_min=0.01,
        delta_ctrl_max=0.1,
        delta_req_min=0.05,
        delta_req_max=0.2,
        delta_net_min=0.1,
        delta_net_max=0.25,
        overhead_meas=0.2,
        overhead_input=0.2,
        n_dropout=1,
    )
    base.update(over)
    return NetworkParams(**base)


def test_delay_bounds_arithmetic_oracle():
    # zero latencies, 1 bit/s both ways, one-bit codewords: the round trip
    # is exactly two seconds of pure transmission, so two periods at tau=1
    params = NetworkParams(
        bandwidth_min=1.0, bandwidth_max=1.0,
        delta_ctrl_min=0.0, delta_ctrl_max=0.0,
        delta_req_min=0.0, delta_req_max=0.0,
        delta_net_min=0.0, delta_net_max=0.0,
        overhead_meas=0.0, overhead_input=0.0,
    )
    b = compute_delay_bounds(params, n_measurement_symbols=2, n_input_symbols=2, tau=1.0)
    assert b.bits_meas == 1 and b.bits_input == 1
    assert b.delay_min == pytest.approx(2.0)
    assert b.delay_max == pytest.approx(2.0)
    assert (b.n_min, b.n_max) == (2, 2)


def test_delay_bounds_reference_scenario():
    b = compute_delay_bounds(
        reference_params(), n_measurement_symbols=201 ** 3,
        n_input_symbols=66, tau=1.0,
    )
    assert b.bits_meas == 28 and b.bits_input == 9
    # best case: 28/1000 + 0.01 + 9/1000 + 2*0.05 + 2*0.1 = 0.347
    assert b.delay_min == pytest.approx(0.347)
    # worst case doubles the round trip through one permitted dropout:
    # 2 * (28/100 + 0.1 + 9/100 + 2*0.2 + 2*0.25) = 2.74
    assert b.delay_max == pytest.approx(2.74)
    assert (b.n_min, b.n_max) == (1, 3)


def test_delay_bounds_report_keys():
    b = compute_delay_bounds(reference_params(), 201 ** 3, 66, tau=1.0)
    rep = b.as_report()
    assert rep["n_min"] == 1 and rep["n_max"] == 3
    assert rep["bits_meas"] == 28
    assert rep["delay_max_s"] == pytest.approx(2.74)
    assert rep["tau_s"] == 1.0


def test_delay_count_floor_is_one():
    params = NetworkParams(
        bandwidth_min=1e9, bandwidth_max=1e9,
        delta_ctrl_min=0.0, delta_ctrl_max=0.0,
        delta_req_min=0.0, delta_req_max=0.0,
        delta_net_min=0.0, delta_net_max=0.0,
        overhead_meas=0.0, overhead_input=0.0,
    )
    b = compute_delay_bounds(params, 4, 4, tau=1.0)
    assert b.n_min == 1 and b.n_max == 1


def test_network_params_validation():
    with pytest.raises(ValueError):
        reference_params(bandwidth_min=-1.0)
    with pytest.raises(ValueError):
        reference_params(delta_ctrl_min=0.2, delta_ctrl_max=0.1)
    with pytest.raises(ValueError):
        reference_params(n_dropout=-1)


@settings(max_examples=80, deadline=None)
@given(
    widen_net=st.floats(0.0, 1.0),
    widen_req=st.floats(0.0, 1.0),
    drop_bw=st.floats(0.0, 0.5),
    extra_dropout=st.integers(0, 2),
)
def test_delay_bounds_monotone_under_degradation(widen_net, widen_req, drop_bw, extra_dropout):
    base = reference_params()
    worse = reference_params(
        delta_net_max=base.delta_net_max + widen_net,
        delta_req_max=base.delta_req_max + widen_req,
        bandwidth_min=base.bandwidth_min * (1.0 - drop_bw),
        n_dropout=base.n_dropout + extra_dropout,
    )
    b0 = compute_delay_bounds(base, 201 ** 3, 66, tau=1.0)
    b1 = compute_delay_bounds(worse, 201 ** 3, 66, tau=1.0)
    assert b1.delay_max >= b0.delay_max - 1e-12
    assert b1.n_max >= b0.n_max
    assert b1.delay_min <= b0.delay_min + 1e-12
    assert b1.n_min <= b0.n_min


# ---------------------------------------------------------------------------
# Delay policies
# ---------------------------------------------------------------------------


def any_bounds(n_min: int, n_max: int) -> DelayBounds:
    return DelayBounds(
        bits_meas=1, bits_input=1,
        transport_meas_min=0.0, transport_meas_max=0.0,
        transport_input_min=0.0, transport_input_max=0.0,
        round_trip_min=float(n_min), round_trip_max=float(n_max),
        delay_min=float(n_min), delay_max=float(n_max),
        n_min=n_min, n_max=n_max, tau=1.0,
    )


def test_uniform_policy_frequencies():
    bounds = any_bounds(1, 3)
    rng = np.random.default_rng(12345)
    policy = UniformDelays()
    draws = np.array([policy.sample(bounds, rng) for _ in range(100_000)])
    assert draws.min() == 1 and draws.max() == 3
    for v in (1, 2, 3):
        freq = float(np.mean(draws == v))
        assert abs(freq - 1.0 / 3.0) < 0.02


def test_fixed_policy():
    bounds = any_bounds(1, 3)
    rng = np.random.default_rng(0)
    assert FixedDelays(2).sample(bounds, rng) == 2
    with pytest.raises(ValueError):
        FixedDelays(4).sample(bounds, rng)


def test_scripted_policy_and_reset():
    bounds = any_bounds(1, 3)
    rng = np.random.default_rng(0)
    policy = ScriptedDelays([1, 3, 2])
    assert [policy.sample(bounds, rng) for _ in range(3)] == [1, 3, 2]
    with pytest.raises(PolicyExhausted):
        policy.sample(bounds, rng)
    policy.reset()
    assert policy.sample(bounds, rng) == 1


def test_extremal_policies():
    bounds = any_bounds(1, 3)
    rng = np.random.default_rng(0)
    assert WorstCaseDelays().sample(bounds, rng) == 3
    assert BestCaseDelays().sample(bounds, rng) == 1


def test_make_policy_dispatch():
    assert make_policy("uniform").describe() == "uniform"
    assert make_policy("worst").describe() == "worst-case-max"
    assert make_policy("best").describe() == "best-case-min"
    assert make_policy("fixed:2").describe() == "fixed(2)"
    assert make_policy("script:1,2,3").describe() == "scripted(len=3)"
    with pytest.raises(ValueError):
        make_policy("nonsense")
