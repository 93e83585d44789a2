"""Approximate simulation relations between finite transition systems.

Three transfer conditions are supported, all over a shared output metric:

* plain: every move of the left system is answered by some move of the
  right system, labels free;
* alternating: the left system commits a label, the right system picks a
  label, then every right move under it is matched by a left move;
* strong alternating: like alternating but the right system must reuse the
  left label.

The strong variant is the one the synthesis pipeline consumes; the other
two exist as checkers and for the composition lemmas.  A relation is
computed as a greatest fixpoint: start from every output-compatible pair
and delete pairs whose transfer condition fails, until stable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import RelationFlavorMismatch
from .tsys import INCOMPARABLE, FiniteSystem, burst_distance

FLAVORS = ("approx-sim", "alt-approx-sim", "strong-alt-sim", "strong-alt-bisim")

# Outputs live on floating-point lattices; distances between exact lattice
# points can exceed the nominal pitch by an ulp, so the epsilon test gets a
# relative guard.
EPS_REL_GUARD = 1e-9
EPS_ABS_GUARD = 1e-12


def within(dist, eps: float) -> bool:
    """Output-distance test under epsilon, INCOMPARABLE always failing."""
    if dist is INCOMPARABLE:
        return False
    return dist <= eps + EPS_REL_GUARD * eps + EPS_ABS_GUARD


@dataclass
class Absent:
    """Returned when the fixpoint leaves some initial state uncovered."""

    uncovered: list[int]
    reason: str = "initial states of the left system not covered"

    def __bool__(self) -> bool:
        return False


@dataclass
class PairRelation:
    """A set of related state-id pairs with its precision and flavor."""

    pairs: set[tuple[int, int]]
    epsilon: float
    flavor: str

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")

    def __contains__(self, pair: tuple[int, int]) -> bool:
        return pair in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __bool__(self) -> bool:
        return True

    def image(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.pairs if a == i)

    def preimage(self, j: int) -> list[int]:
        return sorted(i for (i, b) in self.pairs if b == j)

    def inverse(self) -> "PairRelation":
        return PairRelation({(j, i) for (i, j) in self.pairs}, self.epsilon, self.flavor)

    def serialize(self) -> str:
        lines = [f"# relation v1", f"flavor {self.flavor}", f"epsilon {self.epsilon!r}"]
        for i, j in sorted(self.pairs):
            lines.append(f"p {i} {j}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def deserialize(text: str) -> "PairRelation":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# relation v1"):
            raise ValueError("not a v1 relation file")
        flavor = lines[1].split(None, 1)[1]
        epsilon = float(lines[2].split(None, 1)[1])
        pairs = set()
        for ln in lines[3:]:
            tag, a, b = ln.split()
            if tag != "p":
                raise ValueError(f"bad relation line {ln!r}")
            pairs.add((int(a), int(b)))
        return PairRelation(pairs, epsilon, flavor)


# ---------------------------------------------------------------------------
# Transfer-condition predicates (pure reads against a candidate pair set)
# ---------------------------------------------------------------------------


def _ok_plain(s1: FiniteSystem, s2: FiniteSystem, i: int, j: int, pairs) -> bool:
    moves2 = [j2 for u2 in s2.enabled(j) for j2 in s2.post(j, u2)]
    for u1 in s1.enabled(i):
        for i2 in s1.post(i, u1):
            if not any((i2, j2) in pairs for j2 in moves2):
                return False
    return True


def _ok_alt(s1: FiniteSystem, s2: FiniteSystem, i: int, j: int, pairs) -> bool:
    en2 = s2.enabled(j)
    for u1 in s1.enabled(i):
        post1 = s1.post(i, u1)
        found = False
        for u2 in en2:
            if all(
                any((i2, j2) in pairs for i2 in post1) for j2 in s2.post(j, u2)
            ):
                found = True
                break
        if not found:
            return False
    return True


def _ok_strong(s1: FiniteSystem, s2: FiniteSystem, i: int, j: int, pairs) -> bool:
    for u in s1.enabled(i):
        post2 = s2.post(j, u)
        if not post2:
            return False  # label not available on the right
        post1 = s1.post(i, u)
        for j2 in post2:
            if not any((i2, j2) in pairs for i2 in post1):
                return False
    return True


_CHECKS = {
    "approx-sim": _ok_plain,
    "alt-approx-sim": _ok_alt,
    "strong-alt-sim": _ok_strong,
}


# ---------------------------------------------------------------------------
# Greatest fixpoint
# ---------------------------------------------------------------------------


def _candidates(s1: FiniteSystem, s2: FiniteSystem, eps: float) -> set[tuple[int, int]]:
    out = set()
    for i in range(s1.n_states()):
        h1 = s1.output_of(i)
        for j in range(s2.n_states()):
            if within(burst_distance(h1, s2.output_of(j)), eps):
                out.add((i, j))
    return out


def _pred_states(s: FiniteSystem, dst: int) -> set[int]:
    return {src for (src, _u) in s.predecessors(dst)}


def _fixpoint(s1, s2, pairs: set, check) -> set:
    """Worklist pruning: a deleted pair re-enqueues predecessor pairs.

    Checks within a wave are pure reads; deletions happen serially in
    canonical pair order, so the result is order-independent (it is the
    greatest fixpoint) and the run is reproducible.
    """
    pending = set(pairs)
    while pending:
        wave = sorted(pending)
        pending.clear()
        doomed = [p for p in wave if p in pairs and not check(s1, s2, p[0], p[1], pairs)]
        for (a, b) in doomed:
            pairs.discard((a, b))
            for p in _pred_states(s1, a):
                for q in _pred_states(s2, b):
                    if (p, q) in pairs:
                        pending.add((p, q))
    return pairs


def _initial_gap(s1: FiniteSystem, s2: FiniteSystem, pairs) -> list[int]:
    return sorted(
        i for i in s1.initial if not any((i, j) in pairs for j in s2.initial)
    )


def largest_approx_sim(s1: FiniteSystem, s2: FiniteSystem, eps: float):
    pairs = _fixpoint(s1, s2, _candidates(s1, s2, eps), _ok_plain)
    gap = _initial_gap(s1, s2, pairs)
    if gap:
        return Absent(gap)
    return PairRelation(pairs, eps, "approx-sim")


def largest_alt_sim(s1: FiniteSystem, s2: FiniteSystem, eps: float):
    pairs = _fixpoint(s1, s2, _candidates(s1, s2, eps), _ok_alt)
    gap = _initial_gap(s1, s2, pairs)
    if gap:
        return Absent(gap)
    return PairRelation(pairs, eps, "alt-approx-sim")


def largest_strong_alt_sim(s1: FiniteSystem, s2: FiniteSystem, eps: float):
    pairs = _fixpoint(s1, s2, _candidates(s1, s2, eps), _ok_strong)
    gap = _initial_gap(s1, s2, pairs)
    if gap:
        return Absent(gap)
    return PairRelation(pairs, eps, "strong-alt-sim")


def strong_alt_bisim(s1: FiniteSystem, s2: FiniteSystem, eps: float):
    """Greatest R with R strong-alt from s1 to s2 and R^-1 from s2 to s1."""
    pairs = _candidates(s1, s2, eps)
    mirror = {(b, a) for (a, b) in pairs}

    def check(i: int, j: int) -> bool:
        return _ok_strong(s1, s2, i, j, pairs) and _ok_strong(s2, s1, j, i, mirror)

    pending = set(pairs)
    while pending:
        wave = sorted(pending)
        pending.clear()
        doomed = [p for p in wave if p in pairs and not check(p[0], p[1])]
        for (a, b) in doomed:
            pairs.discard((a, b))
            mirror.discard((b, a))
            for p in _pred_states(s1, a):
                for q in _pred_states(s2, b):
                    if (p, q) in pairs:
                        pending.add((p, q))
    gap1 = _initial_gap(s1, s2, pairs)
    gap2 = _initial_gap(s2, s1, {(b, a) for (a, b) in pairs})
    if gap1 or gap2:
        return Absent(gap1 or gap2)
    return PairRelation(pairs, eps, "strong-alt-bisim")


def compute_largest(flavor: str, s1, s2, eps: float):
    fn = {
        "approx-sim": largest_approx_sim,
        "alt-approx-sim": largest_alt_sim,
        "strong-alt-sim": largest_strong_alt_sim,
        "strong-alt-bisim": strong_alt_bisim,
    }.get(flavor)
    if fn is None:
        raise ValueError(f"unknown flavor {flavor!r}")
    return fn(s1, s2, eps)


# ---------------------------------------------------------------------------
# Post-hoc verification
# ---------------------------------------------------------------------------


def check_relation(rel: PairRelation, s1: FiniteSystem, s2: FiniteSystem) -> list[str]:
    """Re-verify every defining condition of ``rel``; returns violations.

    Used on synthesis witnesses so that nothing is trusted just because a
    fixpoint produced it.
    """
    out = []
    for (i, j) in sorted(rel.pairs):
        d = burst_distance(s1.output_of(i), s2.output_of(j))
        if not within(d, rel.epsilon):
            out.append(f"(ii) pair ({i},{j}) output distance {d} > {rel.epsilon}")
    gap = _initial_gap(s1, s2, rel.pairs)
    for i in gap:
        out.append(f"(i) initial state {i} of the left system uncovered")
    if rel.flavor == "strong-alt-bisim":
        gap2 = _initial_gap(s2, s1, {(b, a) for (a, b) in rel.pairs})
        for j in gap2:
            out.append(f"(i) initial state {j} of the right system uncovered")
        mirror = {(b, a) for (a, b) in rel.pairs}
        for (i, j) in sorted(rel.pairs):
            if not _ok_strong(s1, s2, i, j, rel.pairs):
                out.append(f"(iii″) forward transfer fails at ({i},{j})")
            if not _ok_strong(s2, s1, j, i, mirror):
                out.append(f"(iii″) backward transfer fails at ({i},{j})")
        return out
    check = _CHECKS[rel.flavor]
    for (i, j) in sorted(rel.pairs):
        if not check(s1, s2, i, j, rel.pairs):
            out.append(f"transfer condition fails at ({i},{j})")
    return out


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def compose(rab: PairRelation, rbc: PairRelation) -> PairRelation:
    """Relational composition; precisions add."""
    if rab.flavor != rbc.flavor:
        raise RelationFlavorMismatch(
            f"cannot compose {rab.flavor!r} with {rbc.flavor!r}"
        )
    by_b: dict[int, list[int]] = {}
    for (b, c) in rbc.pairs:
        by_b.setdefault(b, []).append(c)
    pairs = {(a, c) for (a, b) in rab.pairs for c in by_b.get(b, ())}
    return PairRelation(pairs, rab.epsilon + rbc.epsilon, rab.flavor)


# ---------------------------------------------------------------------------
# Feedback composition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairState:
    """State of a feedback product: plant component carries the output."""

    plant_state: object
    plant_id: int
    ctrl_id: int

    def output(self):
        return self.plant_state.output()

    def key(self) -> bytes:
        return b"P" + self.plant_id.to_bytes(8, "little") + self.ctrl_id.to_bytes(8, "little")


def feedback_compose(
    s_plant: FiniteSystem,
    s_ctrl: FiniteSystem,
    rel: PairRelation,
    eps: float,
) -> FiniteSystem:
    """Close the loop: run plant and controller in lockstep on shared labels.

    ``rel`` must be a strong alternating simulation from the controller to
    the plant; the product's states are the inverse-related pairs, its
    output is the plant's.
    """
    if rel.flavor not in ("strong-alt-sim", "strong-alt-bisim"):
        raise RelationFlavorMismatch(
            f"feedback composition needs a strong alternating relation, got {rel.flavor!r}"
        )
    if [repr(u) for u in s_plant.inputs] != [repr(u) for u in s_ctrl.inputs]:
        raise RelationFlavorMismatch("plant and controller input alphabets differ")

    prod = FiniteSystem(inputs=list(s_plant.inputs), name="closed-loop")
    inv = {(p, c) for (c, p) in rel.pairs}

    id_of: dict[tuple[int, int], int] = {}

    def intern(p: int, c: int) -> int:
        key = (p, c)
        hit = id_of.get(key)
        if hit is not None:
            return hit
        i = prod.intern(PairState(s_plant.states[p], p, c))
        id_of[key] = i
        return i

    for (p, c) in sorted(inv):
        if p in s_plant.initial and c in s_ctrl.initial:
            prod.initial.add(intern(p, c))

    # breadth-first closure over joint moves
    cursor = 0
    while cursor < prod.n_states():
        st: PairState = prod.states[cursor]
        p, c = st.plant_id, st.ctrl_id
        for u in range(len(prod.inputs)):
            dsts = []
            for p2 in s_plant.post(p, u):
                for c2 in s_ctrl.post(c, u):
                    if (p2, c2) in inv:
                        dsts.append(intern(p2, c2))
            if dsts:
                prod.set_post(cursor, u, dsts)
        cursor += 1
    return prod
