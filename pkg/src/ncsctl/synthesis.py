"""Controller synthesis over the symbolic model.

The user describes a specification as a finite graph of state-vectors.  It
is lifted to burst form (paths whose lengths match the admissible delay
window), then a safety-style game is solved on the product of the symbolic
model and the lifted specification: a product state survives when some
input exists under which every model successor can be answered by a
specification move that stays in the surviving set.

The surviving product is then projected onto the model side as an honest
sub-system: a state keeps an input only when that input works for every
specification state it remains paired with, so the pairing itself is a
valid simulation witness.  Both witnesses (precision mu_x toward the
lifted spec, exact toward the model) are returned for independent
re-checking; nothing is trusted merely because the fixpoint emitted it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityExceeded, EmptyController, ParameterViolation
from .relations import PairRelation, within, feedback_compose
from .tsys import INCOMPARABLE, AggregateState, FiniteSystem, burst_distance

SPEC_FORMAT_VERSION = 1
DUMMY_INPUT = "q"


# ---------------------------------------------------------------------------
# Specification graphs
# ---------------------------------------------------------------------------


@dataclass
class Specification:
    """Finite graph over state-vectors: the target behavior."""

    names: list[str]
    coords: np.ndarray  # (n_states, dim)
    transitions: set[tuple[int, int]]
    initial: set[int]

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.ndim != 2 or len(self.names) != self.coords.shape[0]:
            raise ValueError("coords must be (n_states, dim) matching names")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate specification state names")
        if not self.initial:
            raise ValueError("specification needs at least one initial state")
        n = len(self.names)
        for (a, b) in self.transitions:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"transition endpoint out of range: ({a},{b})")
        for i in self.initial:
            if not 0 <= i < n:
                raise ValueError(f"initial state out of range: {i}")

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def n_states(self) -> int:
        return len(self.names)

    def successors(self, i: int) -> list[int]:
        return sorted(b for (a, b) in self.transitions if a == i)

    def serialize(self) -> str:
        lines = [f"# spec v{SPEC_FORMAT_VERSION}"]
        for name, row in zip(self.names, self.coords):
            vals = " ".join(format(v, ".17g") for v in row)
            lines.append(f"state {name} {vals}")
        for (a, b) in sorted(self.transitions):
            lines.append(f"trans {self.names[a]} {self.names[b]}")
        for i in sorted(self.initial):
            lines.append(f"init {self.names[i]}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def deserialize(text: str) -> "Specification":
        names: list[str] = []
        rows: list[list[float]] = []
        trans: list[tuple[str, str]] = []
        init: list[str] = []
        for ln_no, raw in enumerate(text.splitlines(), start=1):
            ln = raw.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if parts[0] == "state":
                names.append(parts[1])
                rows.append([float(v) for v in parts[2:]])
            elif parts[0] == "trans":
                trans.append((parts[1], parts[2]))
            elif parts[0] == "init":
                init.append(parts[1])
            else:
                raise ValueError(f"line {ln_no}: unknown directive {parts[0]!r}")
        if not names:
            raise ValueError("specification file has no states")
        idx = {n: i for i, n in enumerate(names)}
        try:
            tset = {(idx[a], idx[b]) for (a, b) in trans}
            iset = {idx[n] for n in init}
        except KeyError as e:
            raise ValueError(f"unknown state name {e.args[0]!r} in spec file") from e
        return Specification(names, np.asarray(rows), tset, iset)


def lift_spec(
    spec: Specification, n_min: int, n_max: int, budget: int = 1_000_000
) -> FiniteSystem:
    """Re-express the specification over bursts of admissible lengths.

    States: bare initial vectors plus every path of the spec graph with
    length in [n_min, n_max].  One dummy input; a path follows another when
    the predecessor's last vector steps to the successor's first vector in
    the spec graph.  Outputs are the bursts themselves.
    """
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    sys = FiniteSystem(inputs=[DUMMY_INPUT], name="lifted-spec")

    def vec(i: int) -> tuple[float, ...]:
        return tuple(float(v) for v in spec.coords[i])

    succ = {i: spec.successors(i) for i in range(spec.n_states())}

    # path enumeration, lengths n_min..n_max, as tuples of spec-state ids
    paths: list[tuple[int, ...]] = []
    level = [(i,) for i in range(spec.n_states())]
    for depth in range(1, n_max + 1):
        if depth >= n_min:
            paths.extend(level)
            if len(paths) > budget:
                raise CapacityExceeded("spec path budget exceeded", len(paths), budget)
        if depth < n_max:
            level = [p + (j,) for p in level for j in succ[p[-1]]]
    if not paths:
        raise ValueError("specification graph admits no paths of admissible length")

    path_state = {
        p: sys.intern(AggregateState(tuple(vec(i) for i in p), held=-1)) for p in paths
    }
    init_state = {}
    for i in sorted(spec.initial):
        sid = sys.intern(AggregateState((vec(i),), held=-1, initial_form=True))
        init_state[i] = sid
        sys.initial.add(sid)

    # group paths by first element for the last-to-first transition rule
    by_first: dict[int, list[tuple[int, ...]]] = {}
    for p in paths:
        by_first.setdefault(p[0], []).append(p)

    def connect(src_id: int, last: int):
        dsts = [path_state[p] for j in succ[last] for p in by_first.get(j, ())]
        if dsts:
            sys.set_post(src_id, 0, dsts)

    for i, sid in init_state.items():
        connect(sid, i)
    for p, sid in path_state.items():
        connect(sid, p[-1])
    return sys


# ---------------------------------------------------------------------------
# Parameter conditions
# ---------------------------------------------------------------------------


@dataclass
class ParamReport:
    entries: list[tuple[str, bool, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e[1] for e in self.entries)

    def add(self, name: str, ok: bool, margin: float):
        self.entries.append((name, bool(ok), float(margin)))

    def as_dict(self) -> dict:
        out = {"ok": self.ok}
        for name, ok, margin in self.entries:
            out[f"{name}.ok"] = ok
            out[f"{name}.margin"] = margin
        return out

    def failures(self) -> list[str]:
        return [name for name, ok, _ in self.entries if not ok]


def check_parameters(
    mu_x: float,
    theta: float,
    eps: float,
    mu_hat_x: float | None = None,
    variant: str = "fc",
    cert=None,
    tau: float | None = None,
) -> ParamReport:
    """Margins for the synthesis precision chain.

    Quantization plus matching slack must fit inside the tracking accuracy,
    and the pitch may exceed neither the matching slack nor the finest
    admissible pitch.  For the contractive variant the accuracy must also
    dominate the two-way equivalence floor.
    """
    rep = ParamReport()
    rep.add("precision_chain", mu_x + theta <= eps, eps - (mu_x + theta))
    rep.add("pitch_vs_slack", mu_x <= theta, theta - mu_x)
    if mu_hat_x is not None:
        rep.add("pitch_vs_region", mu_x <= mu_hat_x, mu_hat_x - mu_x)
    if variant == "gas":
        if cert is None or tau is None:
            raise ValueError("gas variant check needs the certificate and the period")
        from .abstraction import gas_epsilon_floor

        floor = gas_epsilon_floor(cert, tau, mu_x)
        rep.add("accuracy_floor", eps >= floor, eps - floor)
    return rep


# ---------------------------------------------------------------------------
# Product safety game
# ---------------------------------------------------------------------------


@dataclass
class ControllerResult:
    controller: FiniteSystem
    witness_spec: PairRelation  # controller -> lifted spec, precision mu_x
    witness_plant: PairRelation  # controller -> symbolic model, exact
    product_pairs: int
    waves: int
    report: dict = field(default_factory=dict)


def _product_candidates(s_star: FiniteSystem, sq: FiniteSystem, mu_x: float):
    """Output-compatible pairs, grouped for the game."""
    by_len: dict[int, list[int]] = {}
    for q in range(sq.n_states()):
        by_len.setdefault(len(sq.output_of(q)), []).append(q)
    pairs = set()
    for a in range(s_star.n_states()):
        ha = s_star.output_of(a)
        for q in by_len.get(len(ha), ()):
            if within(burst_distance(ha, sq.output_of(q)), mu_x):
                pairs.add((a, q))
    return pairs


def _winning_inputs(s_star, sq, a: int, q: int, alive) -> list[int]:
    """Inputs under which every model successor is answered by a spec move."""
    spec_post = sq.post(q, 0)
    out = []
    for u in s_star.enabled(a):
        good = True
        for a2 in s_star.post(a, u):
            if not any((a2, q2) in alive for q2 in spec_post):
                good = False
                break
        if good:
            out.append(u)
    return out


def solve_product_game(s_star: FiniteSystem, sq: FiniteSystem, mu_x: float):
    """Greatest fixpoint of the survival rule; returns (alive set, waves,
    first deletion wave) for diagnostics."""
    alive = _product_candidates(s_star, sq, mu_x)
    waves = 0
    first_deleted: list[tuple[int, int]] = []
    pending = set(alive)
    while pending:
        wave = sorted(pending)
        pending.clear()
        doomed = [
            (a, q)
            for (a, q) in wave
            if (a, q) in alive and not _winning_inputs(s_star, sq, a, q, alive)
        ]
        if doomed:
            waves += 1
            if waves == 1:
                first_deleted = doomed[:50]
        for (a, q) in doomed:
            alive.discard((a, q))
            for (pa, _u) in s_star.predecessors(a):
                for (pq, _uq) in sq.predecessors(q):
                    if (pa, pq) in alive:
                        pending.add((pa, pq))
    return alive, waves, first_deleted


def _uniformize(s_star, sq, alive: set) -> tuple[set, dict[int, list[int]]]:
    """Shrink the winning pairs until each surviving model state has a
    nonempty input set valid for every spec state it is paired with."""
    alive = set(alive)
    while True:
        rows: dict[int, list[int]] = {}
        for (a, q) in alive:
            rows.setdefault(a, []).append(q)
        u_of: dict[int, list[int]] = {}
        drop_pairs = []
        drop_states = []
        for a, qs in sorted(rows.items()):
            common: set[int] | None = None
            for q in sorted(qs):
                wins = _winning_inputs(s_star, sq, a, q, alive)
                if not wins:
                    drop_pairs.append((a, q))
                    continue
                common = set(wins) if common is None else common & set(wins)
            if common is None:
                # every pair of this state is doomed
                continue
            if not common:
                drop_states.append(a)
            else:
                u_of[a] = sorted(common)
        if not drop_pairs and not drop_states:
            return alive, u_of
        for p in drop_pairs:
            alive.discard(p)
        for a in drop_states:
            for q in rows[a]:
                alive.discard((a, q))


def synthesize(
    s_star: FiniteSystem,
    sq: FiniteSystem,
    mu_x: float,
    theta: float,
    eps: float,
    mu_hat_x: float | None = None,
    check_feedback: bool = True,
) -> ControllerResult:
    """Solve the product game and extract the maximal controller.

    Raises ParameterViolation when the precision chain fails and
    EmptyController when no initial model state survives paired with an
    initial spec state.
    """
    prep = check_parameters(mu_x, theta, eps, mu_hat_x)
    if not prep.ok:
        raise ParameterViolation(
            f"precision conditions failed: {', '.join(prep.failures())}",
            report=prep.as_dict(),
        )

    alive, waves, first_deleted = solve_product_game(s_star, sq, mu_x)
    alive, u_of = _uniformize(s_star, sq, alive)

    covered_init = sorted(
        a
        for a in s_star.initial
        if a in u_of and any((a, q) in alive for q in sq.initial)
    )
    if not covered_init:
        raise EmptyController(
            "no initial state survives the product game",
            frontier=[f"model={a} spec={q}" for (a, q) in first_deleted],
        )

    # reachable restriction along kept inputs
    keep: list[int] = []
    seen = set(covered_init)
    queue = list(covered_init)
    while queue:
        a = queue.pop(0)
        keep.append(a)
        for u in u_of[a]:
            for a2 in s_star.post(a, u):
                if a2 not in seen:
                    seen.add(a2)
                    queue.append(a2)

    ctrl = FiniteSystem(inputs=list(s_star.inputs), name="controller")
    new_id = {a: ctrl.intern(s_star.states[a]) for a in keep}
    for a in keep:
        for u in u_of[a]:
            ctrl.set_post(new_id[a], u, [new_id[a2] for a2 in s_star.post(a, u)])
    for a in covered_init:
        ctrl.initial.add(new_id[a])

    w_spec = PairRelation(
        {(new_id[a], q) for (a, q) in alive if a in new_id}, mu_x, "approx-sim"
    )
    w_plant = PairRelation({(new_id[a], a) for a in keep}, 0.0, "strong-alt-sim")

    if check_feedback:
        closed = feedback_compose(s_star, ctrl, w_plant, 0.0)
        if not closed.is_nonblocking():
            raise AssertionError(
                "closed loop has blocking states; synthesis invariant broken"
            )

    return ControllerResult(
        controller=ctrl,
        witness_spec=w_spec,
        witness_plant=w_plant,
        product_pairs=len(alive),
        waves=waves,
        report={
            "controller.states": ctrl.n_states(),
            "controller.transitions": ctrl.n_transitions(),
            "controller.initial": len(ctrl.initial),
            "game.pairs": len(alive),
            "game.waves": waves,
        },
    )
