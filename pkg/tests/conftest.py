"""Shared builders for the test suite.

Most tests want one of two things: a tiny scalar plant whose sampled-data
map has a closed form we can evaluate by hand, or a small random transition
system to throw at the relation algebra.  Both live here.
"""

import math

import numpy as np
import pytest

from ncsctl.plant import BoxUnion, Lattice, PlantModel, linear_field
from ncsctl.tsys import AggregateState, FiniteSystem

# One-dimensional contraction x' = -x + u sampled at tau = ln 2.  The exact
# period map is f(x, u) = (x - u) e^{-tau} + u = x/2 + u/2, so with u = 0 the
# state halves every period.  Cheap, exactly solvable, and contractive.
HALVING_TAU = math.log(2.0)


def exact_halving_map(x: float, u: float, periods: int = 1) -> float:
    """Closed-form sampled map of x' = -x + u at tau = ln 2."""
    for _ in range(periods):
        x = 0.5 * x + 0.5 * u
    return x


def make_halving_plant(
    inputs=(-0.5, 0.0, 0.5),
    box=(-1.0, 1.0),
    init=None,
    tau: float = HALVING_TAU,
    u_ref_index=None,
    tol_ode: float = 1e-9,
) -> PlantModel:
    pts = [(float(u),) for u in inputs]
    if u_ref_index is None:
        u_ref_index = min(range(len(pts)), key=lambda i: (abs(pts[i][0]), i))
    if init is None:
        init = box
    return PlantModel(
        dim_x=1,
        dim_u=1,
        vector_field=linear_field([[-1.0]], [[1.0]]),
        state_box=BoxUnion.from_bounds([list(box)]),
        init_box=BoxUnion.from_bounds([list(init)]),
        input_points=pts,
        tau=tau,
        u_ref_index=u_ref_index,
        tol_ode=tol_ode,
        name="halving",
    )


@pytest.fixture
def halving_plant() -> PlantModel:
    return make_halving_plant()


@pytest.fixture
def halving_lattice(halving_plant) -> Lattice:
    return Lattice(mu=np.array([0.25]), box=halving_plant.state_box)


# ---------------------------------------------------------------------------
# Random finite systems for the relation algebra
# ---------------------------------------------------------------------------


def scalar_output_state(value: float, tag: int) -> AggregateState:
    """A one-sample burst state carrying ``value`` as its visible output.

    ``tag`` rides in the held-input slot purely to keep states with equal
    outputs distinct under interning.
    """
    return AggregateState(burst=((float(value),),), held=int(tag))


def random_system(
    rng: np.random.Generator,
    max_states: int = 6,
    n_inputs: int = 2,
    output_values=(0.0, 1.0, 2.0),
    p_edge: float = 0.5,
    ensure_nonblocking: bool = False,
) -> FiniteSystem:
    """Random small transition system with integer-ish scalar outputs.

    Outputs are drawn from ``output_values`` so tests can pick comparison
    thresholds that sit strictly between the realized distances.
    """
    n = int(rng.integers(1, max_states + 1))
    sys = FiniteSystem(inputs=[f"u{k}" for k in range(n_inputs)], name="rnd")
    for i in range(n):
        v = float(output_values[int(rng.integers(0, len(output_values)))])
        sys.intern(scalar_output_state(v, i))
    for src in range(n):
        for u in range(n_inputs):
            dsts = [d for d in range(n) if rng.random() < p_edge]
            if dsts:
                sys.set_post(src, u, dsts)
    if ensure_nonblocking:
        for src in range(n):
            if not sys.enabled(src):
                sys.set_post(src, 0, [int(rng.integers(0, n))])
    k = int(rng.integers(1, n + 1))
    sys.initial = set(int(i) for i in rng.choice(n, size=k, replace=False))
    return sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criterion verdicts after the usual summary."""
    try:
        from test_acceptance import CRITERION_LINES
    except Exception:
        return
    if not CRITERION_LINES:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for line in sorted(CRITERION_LINES):
        terminalreporter.write_line("  " + line)
