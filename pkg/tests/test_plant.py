"""Plant geometry and sampled-dynamics tests.

Hand-computed values first (exact solutions of the linear benchmark, pencil
and paper quantizer results), then property checks over random points.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_halving_plant
from ncsctl.errors import DegenerateAxis, OutsideBox
from ncsctl.plant import (
    BoxUnion,
    Lattice,
    PlantModel,
    linear_field,
    normalize,
    single_track_field,
)


# ---------------------------------------------------------------------------
# Region geometry
# ---------------------------------------------------------------------------


def test_box_union_contains_and_clamp():
    box = BoxUnion.from_bounds([[(0.0, 1.0), (0.0, 1.0)]])
    assert box.dim == 2
    assert box.contains(np.array([0.5, 0.5]))
    assert box.contains(np.array([1.0 + 1e-10, 0.0]))  # boundary tolerance
    assert not box.contains(np.array([1.1, 0.5]))
    c = box.clamp(np.array([1.0 + 1e-10, -1e-10]))
    assert np.all(c >= 0.0) and np.all(c <= 1.0)


def test_box_union_two_rects_first_wins():
    box = BoxUnion.from_bounds([[(0.0, 1.0)], [(0.5, 1.5)]])
    assert box.first_rect(np.array([0.74])) == 0
    assert box.first_rect(np.array([1.2])) == 1
    assert box.first_rect(np.array([1.7])) is None
    lo, hi = box.bounding()
    assert lo[0] == 0.0 and hi[0] == 1.5
    assert box.min_side() == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Quantizer oracles
# ---------------------------------------------------------------------------


def test_quantize_scalar_oracle():
    lat = Lattice(mu=np.array([0.5]), box=BoxUnion.from_bounds([[(-1.0, 1.0)]]))
    assert lat.quantize(np.array([0.26]))[0] == pytest.approx(0.5)
    assert lat.quantize(np.array([0.24]))[0] == pytest.approx(0.0)
    assert lat.quantize(np.array([-0.26]))[0] == pytest.approx(-0.5)


def test_quantize_tie_rounds_up():
    lat = Lattice(mu=np.array([0.5]), box=BoxUnion.from_bounds([[(-1.0, 1.0)]]))
    assert lat.quantize(np.array([0.25]))[0] == pytest.approx(0.5)
    assert lat.quantize(np.array([-0.25]))[0] == pytest.approx(0.0)
    assert lat.quantize(np.array([0.75]))[0] == pytest.approx(1.0)


def test_quantize_vector_oracle():
    box = BoxUnion.from_bounds([[(-1.0, 1.0)] * 3])
    lat = Lattice(mu=np.array([0.005, 0.005, 0.005]), box=box)
    q = lat.quantize(np.array([0.0026, -0.0026, 0.0]))
    assert q == pytest.approx([0.005, -0.005, 0.0])


def test_quantize_outside_region_raises():
    lat = Lattice(mu=np.array([0.5]), box=BoxUnion.from_bounds([[(-1.0, 1.0)]]))
    with pytest.raises(OutsideBox):
        lat.quantize(np.array([1.5]))


def test_quantize_clamps_to_rect_range():
    # nearest multiple of 0.4 to 0.95 is 1.2, outside [0, 1]; snap back to 0.8
    lat = Lattice(mu=np.array([0.4]), box=BoxUnion.from_bounds([[(0.0, 1.0)]]))
    assert lat.quantize(np.array([0.95]))[0] == pytest.approx(0.8)


def test_enumerate_oracle_single_rect():
    lat = Lattice(mu=np.array([1.0]), box=BoxUnion.from_bounds([[(-1.0, 1.0)]]))
    pts = lat.enumerate_points()
    assert pts[:, 0].tolist() == [-1.0, 0.0, 1.0]
    assert lat.count() == 3


def test_enumerate_oracle_union():
    box = BoxUnion.from_bounds([[(0.0, 1.0)], [(2.0, 3.0)]])
    lat = Lattice(mu=np.array([0.5]), box=box)
    pts = sorted(p[0] for p in lat.enumerate_points())
    assert pts == [0.0, 0.5, 1.0, 2.0, 2.5, 3.0]
    assert lat.count() == 6


def test_enumerate_union_dedup_overlap():
    box = BoxUnion.from_bounds([[(0.0, 1.0)], [(0.5, 1.5)]])
    lat = Lattice(mu=np.array([0.5]), box=box)
    assert lat.count() == 4  # 0, 0.5, 1.0 from the first rect; 1.5 new


def test_lattice_validation():
    box = BoxUnion.from_bounds([[(-1.0, 1.0)]])
    with pytest.raises(ValueError):
        Lattice(mu=np.array([0.1, 0.1]), box=box)
    with pytest.raises(ValueError):
        Lattice(mu=np.array([-0.1]), box=box)


def test_index_point_round_trip():
    box = BoxUnion.from_bounds([[(-1.0, 1.0)] * 2])
    lat = Lattice(mu=np.array([0.25, 0.25]), box=box)
    idx = lat.quantize_index(np.array([0.3, -0.4]))
    p = lat.point_of(idx)
    assert lat.index_of(p) == idx
    with pytest.raises(ValueError):
        lat.index_of(np.array([0.3, -0.4]))


def test_indices_within_radius():
    box = BoxUnion.from_bounds([[(-1.0, 1.0)]])
    lat = Lattice(mu=np.array([0.25]), box=box)
    got = lat.indices_within(np.array([0.0]), 0.26)
    assert got == [(-1,), (0,), (1,)]
    # region boundary truncates the ball
    got = lat.indices_within(np.array([1.0]), 0.6)
    assert got == [(2,), (3,), (4,)]


@settings(max_examples=120, deadline=None)
@given(
    x=st.tuples(
        st.floats(-1.0, 1.0, allow_nan=False),
        st.floats(-1.0, 1.0, allow_nan=False),
    ),
    mu=st.floats(0.05, 0.6),
)
def test_quantizer_error_bound_and_idempotence(x, mu):
    box = BoxUnion.from_bounds([[(-1.0, 1.0)] * 2])
    lat = Lattice(mu=np.array([mu, mu]), box=box)
    q = lat.quantize(np.array(x))
    assert np.max(np.abs(q - np.array(x))) <= mu + 1e-12
    assert np.allclose(lat.quantize(q), q)
    assert box.contains(q)


# ---------------------------------------------------------------------------
# Sampled flow oracles
# ---------------------------------------------------------------------------


def test_flow_scalar_exponential():
    plant = make_halving_plant(tau=1.0)
    y = plant.flow(np.array([1.0]), np.array([0.0]))
    assert abs(y[0] - math.exp(-1.0)) < 1e-8


def test_flow_halving_two_periods():
    plant = make_halving_plant()  # tau = ln 2
    y1 = plant.flow(np.array([1.0]), np.array([0.0]))
    y2 = plant.flow(y1, np.array([0.0]))
    assert y1[0] == pytest.approx(0.5, abs=1e-9)
    assert y2[0] == pytest.approx(0.25, abs=1e-9)


def test_flow_affine_fixed_point():
    # x' = -x + u has fixed point u: starting there stays there
    plant = make_halving_plant()
    y = plant.flow(np.array([0.5]), np.array([0.5]))
    assert y[0] == pytest.approx(0.5, abs=1e-9)


def make_vehicle(tau: float = 1.0) -> PlantModel:
    box = [(-1.0, 6.0), (-1.0, 1.0), (-1.0, 1.0)]
    return PlantModel(
        dim_x=3,
        dim_u=2,
        vector_field=single_track_field(0.5, 1.5),
        state_box=BoxUnion.from_bounds([box]),
        init_box=BoxUnion.from_bounds([[(-0.1, 0.1)] * 3]),
        input_points=[(0.0, 0.0), (5.0, 0.0)],
        tau=tau,
        u_ref_index=0,
        name="vehicle",
    )


def test_vehicle_straight_drive():
    plant = make_vehicle()
    y = plant.flow(np.array([0.0, 0.0, 0.0]), np.array([5.0, 0.0]))
    assert y == pytest.approx([5.0, 0.0, 0.0], abs=1e-8)


def test_vehicle_turn_changes_heading():
    plant = make_vehicle(tau=0.2)
    y = plant.flow(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.5]))
    assert y[2] > 0.01
    assert y[1] > 0.0  # left turn drifts left


def test_flow_many_matches_loop():
    plant = make_halving_plant()
    xs = np.array([[0.2], [-0.7], [1.0]])
    u = np.array([0.5])
    batch = plant.flow_many(xs, u)
    single = np.stack([plant.flow(x, u) for x in xs])
    assert np.allclose(batch, single, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    x0=st.floats(-0.9, 0.9),
    u=st.sampled_from([-0.5, 0.0, 0.5]),
    t1=st.floats(0.05, 0.5),
    t2=st.floats(0.05, 0.5),
)
def test_flow_semigroup(x0, u, t1, t2):
    plant = make_halving_plant()
    a = plant.flow(np.array([x0]), np.array([u]), t1 + t2)
    b = plant.flow(plant.flow(np.array([x0]), np.array([u]), t1), np.array([u]), t2)
    assert abs(a[0] - b[0]) <= 10 * plant.tol_ode


def test_flow_closed_form_linear():
    # y(t) = (x0 - u) e^{-t} + u for the scalar benchmark
    plant = make_halving_plant()
    for x0, u, t in [(0.8, -0.5, 0.3), (-0.2, 0.5, 1.7), (0.0, 0.0, 2.0)]:
        y = plant.flow(np.array([x0]), np.array([u]), t)
        assert abs(y[0] - ((x0 - u) * math.exp(-t) + u)) < 1e-8


# ---------------------------------------------------------------------------
# Plant validation
# ---------------------------------------------------------------------------


def test_plant_validation_errors():
    box = BoxUnion.from_bounds([[(-1.0, 1.0)]])
    field = linear_field([[-1.0]], [[1.0]])
    with pytest.raises(ValueError):
        PlantModel(1, 1, field, box, box, [], tau=1.0)
    with pytest.raises(ValueError):
        PlantModel(1, 1, field, box, box, [(0.0, 0.0)], tau=1.0)
    with pytest.raises(ValueError):
        PlantModel(1, 1, field, box, box, [(0.0,)], tau=-1.0)
    with pytest.raises(ValueError):
        PlantModel(1, 1, field, box, box, [(0.0,)], tau=1.0, u_ref_index=5)
    big = BoxUnion.from_bounds([[(-2.0, 2.0)]])
    with pytest.raises(ValueError):
        PlantModel(1, 1, field, box, big, [(0.0,)], tau=1.0)


def test_u_ref_property():
    plant = make_halving_plant(inputs=(-0.5, 0.0, 0.5))
    assert plant.n_inputs == 3
    assert plant.u_ref[0] == pytest.approx(0.0)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def test_normalize_identity_box():
    plant = make_halving_plant(box=(-1.0, 1.0), inputs=(-1.0, 0.0, 1.0))
    norm = normalize(plant)
    lo, hi = norm.plant.state_box.bounding()
    assert lo[0] == pytest.approx(-1.0) and hi[0] == pytest.approx(1.0)
    assert np.allclose(norm.state_map.scale, 1.0)
    assert np.allclose(norm.state_map.offset, 0.0)
    assert norm.plant.name.endswith(":normalized")


def test_normalize_vehicle_box():
    box = [(-50.0, 50.0), (-50.0, 50.0), (-math.pi, math.pi)]
    plant = PlantModel(
        dim_x=3,
        dim_u=2,
        vector_field=single_track_field(0.5, 1.5),
        state_box=BoxUnion.from_bounds([box]),
        init_box=BoxUnion.from_bounds([[(-1.0, 1.0)] * 3]),
        input_points=[(0.0, 0.0), (2.5, 0.5), (5.0, -0.5)],
        tau=1.0,
    )
    norm = normalize(plant)
    lo, hi = norm.plant.state_box.bounding()
    assert np.allclose(lo, -1.0) and np.allclose(hi, 1.0)
    x = np.array([12.5, -37.0, 1.0])
    z = norm.to_normalized_state(x)
    assert np.max(np.abs(norm.to_physical_state(z) - x)) < 1e-12
    u = np.array([2.5, 0.5])
    w = norm.to_normalized_input(u)
    assert np.max(np.abs(norm.to_physical_input(w) - u)) < 1e-12


def test_normalize_one_sided_axis():
    box = [(0.0, 4.0)]
    plant = PlantModel(
        1, 1, linear_field([[-1.0]], [[1.0]]),
        BoxUnion.from_bounds([box]), BoxUnion.from_bounds([[(0.0, 1.0)]]),
        [(0.0,), (2.0,)], tau=1.0,
    )
    norm = normalize(plant)
    lo, hi = norm.plant.state_box.bounding()
    assert lo[0] == pytest.approx(0.0) and hi[0] == pytest.approx(1.0)


def test_normalize_conjugacy():
    # trajectories correspond exactly under the axis maps
    box = [(-50.0, 50.0), (-50.0, 50.0), (-math.pi, math.pi)]
    plant = PlantModel(
        dim_x=3,
        dim_u=2,
        vector_field=single_track_field(0.5, 1.5),
        state_box=BoxUnion.from_bounds([box]),
        init_box=BoxUnion.from_bounds([[(-1.0, 1.0)] * 3]),
        input_points=[(0.0, 0.0), (2.5, 0.5)],
        tau=0.5,
    )
    norm = normalize(plant)
    x0 = np.array([3.0, -4.0, 0.25])
    u = np.array([2.5, 0.5])
    raw = plant.flow(x0, u)
    via = norm.to_physical_state(
        norm.plant.flow(norm.to_normalized_state(x0), norm.to_normalized_input(u))
    )
    assert np.max(np.abs(raw - via)) < 1e-6


def test_normalize_degenerate_axis():
    box = [(-1.0, 1.0), (0.3, 0.3)]
    plant = PlantModel(
        2, 1,
        linear_field([[-1.0, 0.0], [0.0, -1.0]], [[1.0], [0.0]]),
        BoxUnion.from_bounds([box]), BoxUnion.from_bounds([box]),
        [(0.0,)], tau=1.0,
    )
    with pytest.raises(DegenerateAxis):
        normalize(plant)
