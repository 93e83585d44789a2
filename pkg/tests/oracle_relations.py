"""Reference implementation of the behavioural relations.

Written straight from the declarative definitions as full-sweep fixpoint
iteration: recompute the surviving set from scratch until nothing changes.
Quadratic and slow, but each quantifier is spelled out once and visibly.
Shared by the unit suite and the acceptance suite.

Callers must pick epsilon strictly between realized output distances; this
module compares with plain <= and knows nothing about float guard bands.
"""

from ncsctl.tsys import INCOMPARABLE, burst_distance


def compatible_pairs(s1, s2, eps: float) -> set:
    out = set()
    for i in range(s1.n_states()):
        a = s1.output_of(i)
        for j in range(s2.n_states()):
            d = burst_distance(a, s2.output_of(j))
            if d is not INCOMPARABLE and d <= eps:
                out.add((i, j))
    return out


def plain_ok(s1, s2, i: int, j: int, rel: set) -> bool:
    """Every left move is answered by some right move, labels ignored."""
    right = [j2 for u in range(len(s2.inputs)) for j2 in s2.post(j, u)]
    for u in range(len(s1.inputs)):
        for i2 in s1.post(i, u):
            if not any((i2, j2) in rel for j2 in right):
                return False
    return True


def alt_ok(s1, s2, i: int, j: int, rel: set) -> bool:
    """For each left input there is a right input whose every outcome is
    answered by some outcome of the left input."""
    for u1 in range(len(s1.inputs)):
        p1 = s1.post(i, u1)
        if not p1:
            continue
        matched = False
        for u2 in range(len(s2.inputs)):
            p2 = s2.post(j, u2)
            if p2 and all(any((i2, j2) in rel for i2 in p1) for j2 in p2):
                matched = True
                break
        if not matched:
            return False
    return True


def strong_ok(s1, s2, i: int, j: int, rel: set) -> bool:
    """Same-label variant: each left input must be available on the right
    and every right outcome answered by some left outcome."""
    for u in range(len(s1.inputs)):
        p1 = s1.post(i, u)
        if not p1:
            continue
        p2 = s2.post(j, u)
        if not p2:
            return False
        for j2 in p2:
            if not any((i2, j2) in rel for i2 in p1):
                return False
    return True


TRANSFER = {
    "approx-sim": plain_ok,
    "alt-approx-sim": alt_ok,
    "strong-alt-sim": strong_ok,
}


def bisim_ok(s1, s2, i: int, j: int, rel: set) -> bool:
    mirror = {(b, a) for (a, b) in rel}
    return strong_ok(s1, s2, i, j, rel) and strong_ok(s2, s1, j, i, mirror)


def sweep_fixpoint(s1, s2, eps: float, flavor: str) -> set:
    """Greatest post-fixpoint below the output-compatible pairs."""
    if flavor == "strong-alt-bisim":
        ok = bisim_ok
    else:
        ok = TRANSFER[flavor]
    rel = compatible_pairs(s1, s2, eps)
    while True:
        keep = {(i, j) for (i, j) in rel if ok(s1, s2, i, j, rel)}
        if keep == rel:
            return rel
        rel = keep


def initial_gap(s1, s2, rel: set) -> list:
    return sorted(
        i for i in s1.initial if not any((i, j) in rel for j in s2.initial)
    )


def has_gap(s1, s2, rel: set, flavor: str) -> bool:
    if initial_gap(s1, s2, rel):
        return True
    if flavor == "strong-alt-bisim":
        mirror = {(b, a) for (a, b) in rel}
        return bool(initial_gap(s2, s1, mirror))
    return False
