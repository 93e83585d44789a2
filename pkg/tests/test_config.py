"""Scenario-file ingestion: the shipped files and the failure diagnostics."""

import math
import textwrap
from pathlib import Path

import numpy as np
import pytest

from ncsctl.config import ConfigError, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_ini(tmp_path, body) -> str:
    p = tmp_path / "scenario.ini"
    p.write_text(textwrap.dedent(body))
    return str(p)


MINIMAL = """
    [plant]
    field = linear
    dim = 1
    a = 0
    b = 1
    state_box = -2:2
    init_box = -0.5:0.5
    tau = 1.0
    input_grid = -1:1:0.5
    u_ref = 2

    [abstraction]
    mu_x = 0.25
    n_min = 1
    n_max = 2
"""


def test_full_vehicle_scenario_loads():
    b = load_config(CONFIGS / "vehicle_full.ini")
    assert b.plant.name == "vehicle-full"
    assert b.plant.dim_x == 3 and b.plant.dim_u == 2
    assert len(b.plant.input_points) == 66  # 6 speeds x 11 steering angles
    assert b.plant.input_points[0][1] == pytest.approx(-math.pi / 3)
    assert b.plant.u_ref_index == 5
    assert b.certificate is not None and b.certificate.rate == pytest.approx(3.0)
    assert b.network is not None
    assert b.network.bandwidth_min == pytest.approx(100.0)
    assert b.network.n_dropout == 1
    assert b.abstraction.mu_x == pytest.approx(0.01)
    assert (b.abstraction.n_min, b.abstraction.n_max) == (1, 3)
    assert b.engine == "product"
    assert b.layout is None and b.spec_path is None
    assert b.eps is None and b.theta is None
    assert b.out_dir == (CONFIGS / "../out/full").resolve()


def test_desk_scenario_loads():
    b = load_config(CONFIGS / "vehicle_desk.ini")
    assert b.plant.dim_x == 1
    assert len(b.plant.input_points) == 21
    assert b.plant.input_points[b.plant.u_ref_index][0] == pytest.approx(0.05)
    assert b.engine == "patrol"
    assert b.layout is not None
    assert b.layout.n_slices == 12
    assert b.layout.n_spec_states() == 168
    assert b.layout.labels[9] == "CHARGE"
    assert b.layout.matching() == pytest.approx(b.theta)
    assert (b.eps, b.theta) == (pytest.approx(0.05), pytest.approx(0.025))
    assert b.unsafe is not None
    assert b.unsafe.contains(np.array([0.6]))
    assert not b.unsafe.contains(np.array([0.5]))
    assert (b.sim.policy, b.sim.seed) == ("uniform", 2025)
    assert (b.sim.horizon, b.sim.runs) == (94, 100)


def test_scalar_scenario_loads():
    b = load_config(CONFIGS / "scalar_hold.ini")
    assert len(b.plant.input_points) == 9
    assert b.plant.input_points[4][0] == pytest.approx(0.0)
    assert b.certificate.rate == pytest.approx(0.0)
    assert b.layout.widths == (14,)
    assert b.unsafe is None
    assert b.sim.runs == 5
    assert float(b.lattice.mu[0]) == pytest.approx(0.25)


def test_numeric_fields_accept_arithmetic(tmp_path):
    path = write_ini(tmp_path, MINIMAL.replace("tau = 1.0", "tau = pi/4 + e*0"))
    b = load_config(path)
    assert b.plant.tau == pytest.approx(math.pi / 4)


def test_numeric_fields_reject_calls_and_names(tmp_path):
    path = write_ini(tmp_path, MINIMAL.replace("tau = 1.0", "tau = exp(1)"))
    with pytest.raises(ConfigError, match=r"\[plant\] tau"):
        load_config(path)
    path = write_ini(tmp_path, MINIMAL.replace("tau = 1.0", "tau = banana"))
    with pytest.raises(ConfigError, match="banana"):
        load_config(path)


def test_missing_required_key_names_itself(tmp_path):
    path = write_ini(tmp_path, MINIMAL.replace("tau = 1.0", ""))
    with pytest.raises(ConfigError, match=r"\[plant\] tau: required key missing"):
        load_config(path)


def test_missing_section_names_itself(tmp_path):
    body = MINIMAL.split("[abstraction]")[0]
    with pytest.raises(ConfigError, match=r"missing section \[abstraction\]"):
        load_config(write_ini(tmp_path, body))


def test_unknown_engine_rejected(tmp_path):
    path = write_ini(tmp_path, MINIMAL + "    engine = quantum\n")
    with pytest.raises(ConfigError, match="unknown engine 'quantum'"):
        load_config(path)


def test_patrol_engine_needs_layout(tmp_path):
    path = write_ini(tmp_path, MINIMAL + "    engine = patrol\n")
    with pytest.raises(ConfigError, match=r"needs a \[patrol\] section"):
        load_config(path)


def test_ragged_matrix_rejected(tmp_path):
    body = MINIMAL.replace("dim = 1", "dim = 2").replace(
        "a = 0", "a = 0 1 | 2"
    ).replace("b = 1", "b = 1 | 1").replace(
        "state_box = -2:2", "state_box = -2:2, -2:2"
    ).replace("init_box = -0.5:0.5", "init_box = -0.5:0.5, -0.5:0.5")
    with pytest.raises(ConfigError, match="ragged matrix"):
        load_config(write_ini(tmp_path, body))


def test_box_dimension_mismatch(tmp_path):
    body = MINIMAL.replace("state_box = -2:2", "state_box = -2:2, -3:3")
    with pytest.raises(ConfigError, match="has 2 axes, plant has 1"):
        load_config(write_ini(tmp_path, body))


def test_inverted_range_rejected(tmp_path):
    body = MINIMAL.replace("init_box = -0.5:0.5", "init_box = 0.5:-0.5")
    with pytest.raises(ConfigError, match="inverted"):
        load_config(write_ini(tmp_path, body))


def test_grid_axis_shapes(tmp_path):
    body = MINIMAL.replace("input_grid = -1:1:0.5", "input_grid = -1:1")
    with pytest.raises(ConfigError, match="expected lo:hi:step"):
        load_config(write_ini(tmp_path, body))
    body = MINIMAL.replace("input_grid = -1:1:0.5", "input_grid = -1:1:0")
    with pytest.raises(ConfigError, match="bad grid axis"):
        load_config(write_ini(tmp_path, body))


def test_grid_axis_count_must_match_input_dim(tmp_path):
    body = MINIMAL.replace("input_grid = -1:1:0.5", "input_grid = -1:1:0.5, 0:1:0.5")
    with pytest.raises(ConfigError, match="2 axes, input has 1"):
        load_config(write_ini(tmp_path, body))


def test_exactly_one_input_source(tmp_path):
    body = MINIMAL + "    input_points = 0.0 0.5\n"
    # configparser keeps both keys in [plant]? input_points must live there
    body = MINIMAL.replace(
        "input_grid = -1:1:0.5",
        "input_grid = -1:1:0.5\n    input_points = 0.0 0.5",
    )
    with pytest.raises(ConfigError, match="exactly one of"):
        load_config(write_ini(tmp_path, body))
    body = MINIMAL.replace("input_grid = -1:1:0.5\n    u_ref = 2", "u_ref = 0")
    with pytest.raises(ConfigError, match="exactly one of"):
        load_config(write_ini(tmp_path, body))


def test_input_points_parsing(tmp_path):
    body = MINIMAL.replace("input_grid = -1:1:0.5", "input_points = -0.5 0 0.5").replace(
        "u_ref = 2", "u_ref = 1"
    )
    b = load_config(write_ini(tmp_path, body))
    assert [p[0] for p in b.plant.input_points] == [-0.5, 0.0, 0.5]

    body = body.replace("input_points = -0.5 0 0.5", "input_points = 0 1; 2")
    with pytest.raises(ConfigError, match="has 2 coords"):
        load_config(write_ini(tmp_path, body))


def test_u_ref_range_check(tmp_path):
    body = MINIMAL.replace("u_ref = 2", "u_ref = 9")
    with pytest.raises(ConfigError, match="outside 0..4"):
        load_config(write_ini(tmp_path, body))


def test_vehicle_field_needs_three_states(tmp_path):
    body = """
        [plant]
        field = single_track_vehicle
        dim = 2
        a = 0.5
        b = 1.5
        state_box = -1:1, -1:1
        init_box = -0.1:0.1, -0.1:0.1
        tau = 1.0
        input_points = 0 0
        [abstraction]
        mu_x = 0.1
        n_min = 1
        n_max = 1
    """
    with pytest.raises(ConfigError, match="3 states"):
        load_config(write_ini(tmp_path, body))


def test_unknown_field_kind(tmp_path):
    body = MINIMAL.replace("field = linear", "field = cubic")
    with pytest.raises(ConfigError, match="unknown kind 'cubic'"):
        load_config(write_ini(tmp_path, body))


def test_expression_field(tmp_path):
    body = """
        [plant]
        field = expr
        dim = 1
        dim_u = 1
        expr0 = -x1 + u1
        state_box = -2:2
        init_box = -0.5:0.5
        tau = 1.0
        input_points = 0.0
        [abstraction]
        mu_x = 0.25
        n_min = 1
        n_max = 1
    """
    b = load_config(write_ini(tmp_path, body))
    x = b.plant.flow_map(np.array([1.0]), np.array([0.0]))
    assert x[0] == pytest.approx(math.exp(-1.0), abs=1e-6)

    with pytest.raises(ConfigError, match=r"\[plant\] expr\*"):
        load_config(write_ini(tmp_path, body.replace("-x1 + u1", "-q + u1")))


def test_non_integer_where_integer_needed(tmp_path):
    body = MINIMAL.replace("n_min = 1", "n_min = 1.5")
    with pytest.raises(ConfigError, match="expected an integer"):
        load_config(write_ini(tmp_path, body))


def test_labels_need_colon(tmp_path):
    body = MINIMAL + textwrap.dedent("""
        engine = patrol
        eps = 0.75
        theta = 0.375

        [patrol]
        drifts = 0
        core_width = 4
        labels = HOMEZERO
    """)
    with pytest.raises(ConfigError, match="expected NAME:slice"):
        load_config(write_ini(tmp_path, body))


def test_spec_path_resolves_relative_to_file(tmp_path):
    body = MINIMAL + textwrap.dedent("""
        [spec]
        file = waypoints.spec
    """)
    b = load_config(write_ini(tmp_path, body))
    assert b.spec_path == (tmp_path / "waypoints.spec").resolve()


def test_output_dir_defaults_and_resolves(tmp_path):
    b = load_config(write_ini(tmp_path, MINIMAL))
    assert b.out_dir == Path.cwd() / "out"
    body = MINIMAL + textwrap.dedent("""
        [output]
        dir = results/run1
    """)
    b = load_config(write_ini(tmp_path, body))
    assert b.out_dir == (tmp_path / "results/run1").resolve()


def test_open_and_parse_failures(tmp_path):
    with pytest.raises(ConfigError, match="cannot open"):
        load_config(tmp_path / "absent.ini")
    p = tmp_path / "broken.ini"
    p.write_text("tau = 1.0\n")  # key before any section header
    with pytest.raises(ConfigError):
        load_config(p)
