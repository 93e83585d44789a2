"""Turn a synthesized sub-system into an executable Mealy machine.

The machine's states are the controller sub-system's aggregate states.  A
(state, measurement) pair is in the machine's domain exactly when the
state's last burst element equals the measurement; on the domain the
machine emits one input (chosen once per state by the selection policy,
since the measurement is forced there) and moves into the successor set
under that input.  The successor is pinned down only when the next
measurement arrives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlockingController, OutsideDomain
from .tsys import FiniteSystem

CONTROLLER_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Selection policies
# ---------------------------------------------------------------------------


def select_inputs(
    policy: str, options_per_state: list[list[int]], n_inputs: int
) -> list[int]:
    """One input id per state, drawn from that state's surviving options.

    Policies: ``first-canonical`` (lowest id), ``random:SEED`` (seeded draw,
    in state order), ``priority:3,1,2`` (first listed id that survives,
    falling back to lowest).  States with no options get -1.
    """
    chosen = []
    if policy == "first-canonical":
        for opts in options_per_state:
            chosen.append(min(opts) if opts else -1)
        return chosen
    if policy.startswith("random:"):
        rng = np.random.default_rng(int(policy.split(":", 1)[1]))
        for opts in options_per_state:
            chosen.append(int(sorted(opts)[rng.integers(len(opts))]) if opts else -1)
        return chosen
    if policy.startswith("priority:"):
        order = [int(v) for v in policy.split(":", 1)[1].split(",")]
        bad = [v for v in order if not 0 <= v < n_inputs]
        if bad:
            raise ValueError(f"priority list names unknown input ids {bad}")
        for opts in options_per_state:
            if not opts:
                chosen.append(-1)
                continue
            pick = next((v for v in order if v in opts), min(opts))
            chosen.append(pick)
        return chosen
    raise ValueError(f"unknown selection policy {policy!r}")


# ---------------------------------------------------------------------------
# Mealy machine over an explicit sub-system
# ---------------------------------------------------------------------------


@dataclass
class StepOutcome:
    u_idx: int
    candidates: tuple[int, ...]


class MealyController:
    """Executable controller over an explicit synthesized sub-system."""

    def __init__(
        self,
        sys: FiniteSystem,
        mu_x: float,
        n_min: int,
        n_max: int,
        policy: str = "first-canonical",
    ):
        if not sys.is_nonblocking():
            raise BlockingController(
                f"controller sub-system blocks at states {sys.blocking_states()[:10]}"
            )
        self.sys = sys
        self.mu_x = float(mu_x)
        self.n_min = int(n_min)
        self.n_max = int(n_max)
        self.policy = policy
        options = [sys.enabled(i) for i in range(sys.n_states())]
        self.table = select_inputs(policy, options, len(sys.inputs))
        # index initial states by their (single) burst element
        self._init_by_meas: dict[tuple[float, ...], int] = {}
        for i in sorted(sys.initial):
            st = sys.states[i]
            if st.n == 1:
                self._init_by_meas.setdefault(st.last, i)

    # -- domain ------------------------------------------------------------

    def in_domain(self, xi: int, w: tuple[float, ...]) -> bool:
        return self.sys.states[xi].last == tuple(w)

    def initial_for(self, w: tuple[float, ...]) -> int:
        hit = self._init_by_meas.get(tuple(w))
        if hit is None:
            raise OutsideDomain(
                "no controller initial state matches the first measurement",
                measurement=tuple(w),
            )
        return hit

    # -- stepping ----------------------------------------------------------

    def step(self, xi: int, w: tuple[float, ...]) -> StepOutcome:
        """Emit the selected input and the admissible successor set."""
        if not self.in_domain(xi, w):
            raise OutsideDomain(
                f"measurement does not match controller state {xi}",
                state=self.sys.states[xi].last,
                measurement=tuple(w),
            )
        u = self.table[xi]
        nxt = self.sys.post(xi, u)
        if not nxt:
            raise BlockingController(f"no successor at state {xi} under input {u}")
        return StepOutcome(u_idx=u, candidates=nxt)

    def resolve(
        self, outcome: StepOutcome, n_realized: int, w_next: tuple[float, ...]
    ) -> int:
        """Pick the unique candidate matching the realized burst: length
        equal to the holding time, last element equal to the new
        measurement.  Lowest id wins if several match."""
        w_next = tuple(w_next)
        hits = [
            c
            for c in outcome.candidates
            if self.sys.states[c].n == n_realized and self.sys.states[c].last == w_next
        ]
        if not hits:
            raise OutsideDomain(
                f"no controller successor matches holding time {n_realized}",
                measurement=w_next,
            )
        return min(hits)

    def emitted_input(self, xi: int) -> int:
        return self.table[xi]

    def n_states(self) -> int:
        return self.sys.n_states()

    # -- serialization -----------------------------------------------------

    def serialize(self) -> str:
        head = [
            f"# controller v{CONTROLLER_FORMAT_VERSION}",
            f"mu_x {format(self.mu_x, '.17g')}",
            f"n_min {self.n_min}",
            f"n_max {self.n_max}",
            f"policy {self.policy}",
        ]
        sel = [f"sel {i} {u}" for i, u in enumerate(self.table)]
        return "\n".join(head) + "\nsystem-begin\n" + self.sys.serialize() + "system-end\n" + "\n".join(sel) + "\n"

    @staticmethod
    def deserialize(text: str) -> "MealyController":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# controller v1"):
            raise ValueError("not a v1 controller file")
        meta = {}
        i = 1
        while i < len(lines) and lines[i] != "system-begin":
            k, v = lines[i].split(None, 1)
            meta[k] = v
            i += 1
        j = lines.index("system-end", i)
        sys = FiniteSystem.deserialize("\n".join(lines[i + 1 : j]))
        ctrl = MealyController(
            sys,
            mu_x=float(meta["mu_x"]),
            n_min=int(meta["n_min"]),
            n_max=int(meta["n_max"]),
            policy=meta["policy"],
        )
        table = list(ctrl.table)
        for ln in lines[j + 1 :]:
            if not ln.strip():
                continue
            tag, idx, u = ln.split()
            if tag != "sel":
                raise ValueError(f"bad selector line {ln!r}")
            table[int(idx)] = int(u)
        ctrl.table = table
        return ctrl


def refine(
    sc: FiniteSystem,
    mu_x: float,
    n_min: int,
    n_max: int,
    policy: str = "first-canonical",
) -> MealyController:
    """Wrap a non-blocking synthesized sub-system as a Mealy machine."""
    return MealyController(sc, mu_x, n_min, n_max, policy)
