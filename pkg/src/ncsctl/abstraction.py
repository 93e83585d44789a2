"""Symbolic models of the networked loop.

Three successor maps share one aggregate-state shape:

* ``concrete_successors`` iterates the sampled-data map exactly and is the
  ground truth the symbolic maps approximate.
* ``symbolic_successors_fc`` builds the nondeterministic lattice model that
  is sound for any plant admitting a forward-completeness certificate: a
  lattice burst is a successor when every link sits within a certificate
  ball of the quantized image chain.
* ``symbolic_successors_gas`` builds the deterministic quantized-chain
  model available when the certificate is contractive.

In every case the burst of a successor is produced by the *source* state's
held input; the transition label only becomes the new held input.  This is
what makes the models faithful to a loop whose actuation lags its sensing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityExceeded
from .plant import Lattice, PlantModel
from .tsys import AggregateState, FiniteSystem

# Relative float guard applied to certificate-ball membership so that exact
# theoretical equalities do not flip on the last ulp.
PRED_GUARD = 1e-12


# ---------------------------------------------------------------------------
# Class-K-infinity functions
# ---------------------------------------------------------------------------


class KinfFn:
    """Strictly increasing function on [0, inf) with f(0) = 0."""

    def __call__(self, r: float) -> float:
        raise NotImplementedError

    def inverse(self, s: float) -> float:
        raise NotImplementedError


class PowerLaw(KinfFn):
    """f(r) = coef * r**power, with a closed-form inverse."""

    def __init__(self, coef: float, power: float):
        if coef <= 0 or power <= 0:
            raise ValueError("PowerLaw needs positive coefficient and power")
        self.coef = float(coef)
        self.power = float(power)

    def __call__(self, r: float) -> float:
        return self.coef * float(r) ** self.power

    def inverse(self, s: float) -> float:
        if s < 0:
            raise ValueError("inverse of negative value")
        return (float(s) / self.coef) ** (1.0 / self.power)

    def __repr__(self) -> str:
        return f"PowerLaw({self.coef:g}, {self.power:g})"


class TabulatedKinf(KinfFn):
    """Wrap an arbitrary increasing callable; invert by expanding bisection."""

    def __init__(self, fn: Callable[[float], float], tol: float = 1e-10):
        self.fn = fn
        self.tol = tol

    def __call__(self, r: float) -> float:
        return float(self.fn(float(r)))

    def inverse(self, s: float) -> float:
        if s <= 0:
            return 0.0
        hi = 1.0
        for _ in range(200):
            if self.fn(hi) >= s:
                break
            hi *= 2.0
        else:
            raise ValueError("inverse bracket expansion failed")
        lo = 0.0
        while hi - lo > self.tol:
            mid = 0.5 * (lo + hi)
            if self.fn(mid) >= s:
                hi = mid
            else:
                lo = mid
        return hi


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass
class LyapunovCertificate:
    """Incremental-stability certificate for the sampled-data map.

    ``v(x1, x2)`` must broadcast over leading batch axes.  ``rate`` is the
    continuous-time exponential rate: over one period the certificate value
    contracts (rate < 0) or grows (rate > 0) by at most ``exp(rate * tau)``.
    ``alpha_lo`` and ``alpha_hi`` sandwich ``v`` against the max norm of the
    state difference, and ``gamma`` bounds how much ``v`` moves when its
    second argument moves.
    """

    v: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rate: float
    alpha_lo: KinfFn
    alpha_hi: KinfFn
    gamma: KinfFn
    symmetric: bool = True
    name: str = ""

    def growth(self, tau: float) -> float:
        return math.exp(self.rate * tau)


def quadratic_certificate(dim: int, rate: float, gamma_coef: float, name: str = "quadratic") -> LyapunovCertificate:
    """v = 0.5 * |x1 - x2|_2^2 with power-law envelopes."""

    def v(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
        return 0.5 * np.sum(d * d, axis=-1)

    return LyapunovCertificate(
        v=v,
        rate=rate,
        alpha_lo=PowerLaw(0.5, 2.0),
        alpha_hi=PowerLaw(0.5 * dim, 2.0),
        gamma=PowerLaw(gamma_coef, 1.0),
        symmetric=True,
        name=name,
    )


def pnorm_certificate(dim: int, rate: float, p: float = 8.0, name: str = "pnorm") -> LyapunovCertificate:
    """v = |x1 - x2|_p: norm-like, so all three envelopes are linear.

    The cross-norm factor dim**(1/p) bounds both the upper envelope and the
    displacement modulus.
    """
    factor = dim ** (1.0 / p)

    def v(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
        return np.sum(d**p, axis=-1) ** (1.0 / p)

    return LyapunovCertificate(
        v=v,
        rate=rate,
        alpha_lo=PowerLaw(1.0, 1.0),
        alpha_hi=PowerLaw(factor, 1.0),
        gamma=PowerLaw(factor, 1.0),
        symmetric=True,
        name=name,
    )


def sup_certificate(rate: float, name: str = "sup") -> LyapunovCertificate:
    """v = |x1 - x2|_inf: every envelope is the identity, with no slack.

    Exact for translation-invariant flows (integrators), where the state
    difference is preserved over a period and rate = 0 is tight.
    """

    def v(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
        return np.max(d, axis=-1)

    ident = PowerLaw(1.0, 1.0)
    return LyapunovCertificate(
        v=v,
        rate=rate,
        alpha_lo=ident,
        alpha_hi=ident,
        gamma=ident,
        symmetric=True,
        name=name,
    )


def make_certificate(kind: str, dim: int, params: dict) -> LyapunovCertificate:
    if kind == "quadratic":
        return quadratic_certificate(dim, float(params["rate"]), float(params["gamma_coef"]))
    if kind == "pnorm":
        return pnorm_certificate(dim, float(params["rate"]), float(params.get("p", 8.0)))
    if kind == "sup":
        return sup_certificate(float(params["rate"]))
    raise ValueError(f"unknown certificate kind {kind!r}")


@dataclass
class CertificateCheck:
    ok: bool
    n_samples: int
    worst_sandwich: float
    worst_gamma: float
    worst_decay: float
    worst_symmetry: float
    messages: list[str] = field(default_factory=list)


def validate_certificate(
    plant: PlantModel,
    cert: LyapunovCertificate,
    rng: np.random.Generator,
    n_samples: int = 200,
    tol: float = 1e-7,
) -> CertificateCheck:
    """Spot-check the certificate laws on sampled state pairs.

    This is sampling, not proof: a passing report means no sampled violation
    beyond ``tol``.  Decay is checked in integrated form over one period.
    """
    lo, hi = plant.state_box.bounding()
    xs1, xs2, xs3 = [], [], []
    while len(xs1) < n_samples:
        cand = rng.uniform(lo, hi, size=(3, plant.dim_x))
        if all(plant.state_box.contains(c) for c in cand):
            xs1.append(cand[0])
            xs2.append(cand[1])
            xs3.append(cand[2])
    x1 = np.asarray(xs1)
    x2 = np.asarray(xs2)
    x3 = np.asarray(xs3)

    vals = cert.v(x1, x2)
    dist = np.max(np.abs(x1 - x2), axis=-1)
    lo_env = np.asarray([cert.alpha_lo(r) for r in dist])
    hi_env = np.asarray([cert.alpha_hi(r) for r in dist])
    sandwich = max(float(np.max(lo_env - vals)), float(np.max(vals - hi_env)))

    move = np.max(np.abs(x2 - x3), axis=-1)
    gmod = np.asarray([cert.gamma(r) for r in move])
    gamma_gap = float(np.max(cert.v(x1, x2) - cert.v(x1, x3) - gmod))

    factor = cert.growth(plant.tau)
    worst_decay = -math.inf
    for k in range(min(n_samples, 64)):
        u = plant.input_points[int(rng.integers(plant.n_inputs))]
        y1 = plant.flow_map(x1[k], u)
        y2 = plant.flow_map(x2[k], u)
        gap = float(cert.v(y1, y2) - factor * cert.v(x1[k], x2[k]))
        worst_decay = max(worst_decay, gap)

    sym = 0.0
    if cert.symmetric:
        sym = float(np.max(np.abs(cert.v(x1, x2) - cert.v(x2, x1))))

    msgs = []
    if sandwich > tol:
        msgs.append(f"envelope sandwich violated by {sandwich:.3g}")
    if gamma_gap > tol:
        msgs.append(f"displacement modulus violated by {gamma_gap:.3g}")
    if worst_decay > tol:
        msgs.append(f"one-period decay violated by {worst_decay:.3g}")
    if sym > tol:
        msgs.append(f"symmetry violated by {sym:.3g}")
    return CertificateCheck(
        ok=not msgs,
        n_samples=n_samples,
        worst_sandwich=sandwich,
        worst_gamma=gamma_gap,
        worst_decay=worst_decay,
        worst_symmetry=sym,
        messages=msgs,
    )


# ---------------------------------------------------------------------------
# Abstraction configuration
# ---------------------------------------------------------------------------


@dataclass
class AbstractionConfig:
    """Parameters shared by the symbolic models.

    ``variant`` selects the nondeterministic ("fc") or contractive ("gas")
    construction.  ``n_min``/``n_max`` come from the network delay bounds.
    """

    mu_x: float
    n_min: int
    n_max: int
    variant: str = "fc"
    state_budget: int = 500_000

    def __post_init__(self):
        if self.mu_x <= 0:
            raise ValueError("mu_x must be positive")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.variant not in ("fc", "gas"):
            raise ValueError("variant must be 'fc' or 'gas'")


def fc_bound(cert: LyapunovCertificate, tau: float, mu_x: float) -> float:
    """Certificate-ball size of the nondeterministic model's links."""
    return (cert.growth(tau) + 2.0) * cert.gamma(mu_x)


def fc_radius(cert: LyapunovCertificate, tau: float, mu_x: float) -> float:
    """Max-norm over-approximation of the link ball's extent."""
    return cert.alpha_lo.inverse(fc_bound(cert, tau, mu_x))


def gas_epsilon_floor(cert: LyapunovCertificate, tau: float, mu_x: float) -> float:
    """Smallest accuracy at which the contractive model is exact (two-way)."""
    g = cert.growth(tau)
    if g >= 1.0:
        raise ValueError("contractive construction requires a negative rate")
    return mu_x + cert.alpha_lo.inverse((2.0 + g) / (1.0 - g) * cert.gamma(mu_x))


# ---------------------------------------------------------------------------
# Flow cache
# ---------------------------------------------------------------------------


class FlowTable:
    """Memoized one-period flow images on lattice points.

    Keyed by (lattice index tuple, input id).  Stores the exact image, its
    region membership, and the quantized image when inside.
    """

    def __init__(self, plant: PlantModel, lattice: Lattice):
        self.plant = plant
        self.lattice = lattice
        self._cache: dict[tuple[tuple[int, ...], int], tuple[np.ndarray, bool, tuple[int, ...] | None]] = {}

    def image(self, idx: tuple[int, ...], u_idx: int):
        key = (idx, u_idx)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        x = self.lattice.point_of(idx)
        y = self.plant.flow_map(x, self.plant.input_points[u_idx])
        inside = self.plant.state_box.contains(y)
        qidx = self.lattice.quantize_index(y) if inside else None
        out = (y, inside, qidx)
        self._cache[key] = out
        return out

    def __len__(self) -> int:
        return len(self._cache)


# ---------------------------------------------------------------------------
# Successor maps
# ---------------------------------------------------------------------------


def iterating_input_index(plant: PlantModel, state: AggregateState) -> int:
    """The input that drives a state's successor bursts: the held one, or
    the reference input for pre-first-iteration states."""
    if state.initial_form:
        return plant.u_ref_index
    if state.held < 0:
        raise ValueError("state carries no held input")
    return state.held


def concrete_successors(
    plant: PlantModel, state: AggregateState, u_idx: int, n2: int
) -> AggregateState | None:
    """Exact successor burst of length ``n2`` labeled ``u_idx``.

    Returns None when the chain leaves the state region (a legal outcome
    that simply means this transition does not exist).
    """
    it = plant.input_points[iterating_input_index(plant, state)]
    x = np.asarray(state.last, dtype=float)
    burst = []
    for _ in range(n2):
        x = plant.flow_map(x, it)
        if not plant.state_box.contains(x):
            return None
        burst.append(x)
    return AggregateState.from_arrays(burst, held=u_idx)


def _fc_link_candidates(
    lattice: Lattice,
    cert: LyapunovCertificate,
    bound: float,
    radius: float,
    center_idx: tuple[int, ...],
) -> list[tuple[int, ...]]:
    """Lattice indices within the certificate ball around a quantized image."""
    center = lattice.point_of(center_idx)
    out = []
    for idx in lattice.indices_within(center, radius * (1.0 + PRED_GUARD) + 1e-15):
        y = lattice.point_of(idx)
        if float(cert.v(center, y)) <= bound * (1.0 + PRED_GUARD):
            out.append(idx)
    return out


def fc_successor_bursts(
    plant: PlantModel,
    lattice: Lattice,
    cert: LyapunovCertificate,
    cfg: AbstractionConfig,
    state: AggregateState,
    flows: FlowTable | None = None,
    budget: int | None = None,
) -> list[tuple[tuple[int, ...], ...]]:
    """All successor bursts (as index tuples) of the nondeterministic model.

    The result is shared by every transition label.  Bursts are ordered by
    length then lexicographically.  ``budget`` caps the count.
    """
    flows = flows if flows is not None else FlowTable(plant, lattice)
    bound = fc_bound(cert, plant.tau, cfg.mu_x)
    radius = cert.alpha_lo.inverse(bound)
    it_idx = iterating_input_index(plant, state)

    anchor = np.asarray(state.last, dtype=float)
    img = plant.flow_map(anchor, plant.input_points[it_idx])
    if not plant.state_box.contains(img):
        return []
    first_center = lattice.quantize_index(img)

    out: list[tuple[tuple[int, ...], ...]] = []
    level = [(first_center, ())]  # (center for this link, prefix)
    # expand level by level; chains that leave the region just stop extending
    for depth in range(1, cfg.n_max + 1):
        next_level = []
        for center_idx, prefix in level:
            for idx in _fc_link_candidates(lattice, cert, bound, radius, center_idx):
                chain = prefix + (idx,)
                if depth >= cfg.n_min:
                    out.append(chain)
                    if budget is not None and len(out) > budget:
                        raise CapacityExceeded(
                            "successor burst budget exceeded", len(out), budget
                        )
                if depth < cfg.n_max:
                    _, inside, qidx = flows.image(idx, it_idx)
                    if inside:
                        next_level.append((qidx, chain))
        level = next_level
        if not level:
            break
    out.sort(key=lambda c: (len(c), c))
    return out


def symbolic_successors_fc(
    plant: PlantModel,
    lattice: Lattice,
    cert: LyapunovCertificate,
    cfg: AbstractionConfig,
    state: AggregateState,
    u_idx: int,
    flows: FlowTable | None = None,
    budget: int | None = None,
) -> list[AggregateState]:
    bursts = fc_successor_bursts(plant, lattice, cert, cfg, state, flows, budget)
    return [
        AggregateState(tuple(tuple(lattice.point_of(i).tolist()) for i in chain), held=u_idx)
        for chain in bursts
    ]


def fc_transition_exists(
    plant: PlantModel,
    lattice: Lattice,
    cert: LyapunovCertificate,
    cfg: AbstractionConfig,
    src: AggregateState,
    u_idx: int,
    dst: AggregateState,
    flows: FlowTable | None = None,
) -> bool:
    """Membership test for the nondeterministic model, link by link.

    Unlike successor enumeration this runs in O(burst length) and is the
    workhorse of soundness audits on plants whose successor sets are huge.
    """
    if dst.held != u_idx:
        return False
    if not cfg.n_min <= dst.n <= cfg.n_max:
        return False
    bound = fc_bound(cert, plant.tau, cfg.mu_x) * (1.0 + PRED_GUARD)
    it = plant.input_points[iterating_input_index(plant, src)]

    prev = np.asarray(src.last, dtype=float)
    for elem in dst.burst:
        img = plant.flow_map(prev, it)
        if not plant.state_box.contains(img):
            return False
        center = lattice.quantize(img)
        y = np.asarray(elem, dtype=float)
        if float(cert.v(center, y)) > bound:
            return False
        prev = y
    return True


def symbolic_successors_gas(
    plant: PlantModel,
    lattice: Lattice,
    cfg: AbstractionConfig,
    state: AggregateState,
    u_idx: int,
    flows: FlowTable | None = None,
) -> list[AggregateState]:
    """Deterministic quantized chains: one successor per admissible length."""
    flows = flows if flows is not None else FlowTable(plant, lattice)
    it_idx = iterating_input_index(plant, state)

    anchor = np.asarray(state.last, dtype=float)
    img = plant.flow_map(anchor, plant.input_points[it_idx])
    if not plant.state_box.contains(img):
        return []
    idx = lattice.quantize_index(img)

    chain = [idx]
    out = []
    for depth in range(2, cfg.n_max + 1):
        _, inside, qidx = flows.image(chain[-1], it_idx)
        if not inside:
            break
        chain.append(qidx)
    for n in range(cfg.n_min, min(len(chain), cfg.n_max) + 1):
        burst = tuple(tuple(lattice.point_of(i).tolist()) for i in chain[:n])
        out.append(AggregateState(burst, held=u_idx))
    return out


# ---------------------------------------------------------------------------
# Reachable construction
# ---------------------------------------------------------------------------


@dataclass
class ReachResult:
    system: FiniteSystem
    truncated: bool
    unexpanded: list[int]
    n_expanded: int


def initial_states_on_lattice(plant: PlantModel, lattice: Lattice) -> list[AggregateState]:
    """Pre-first-iteration configurations on the init-region lattice."""
    init_lat = Lattice(lattice.mu, plant.init_box)
    out = []
    for idx in init_lat.iter_indices():
        x0 = init_lat.point_of(idx)
        out.append(AggregateState.from_arrays([x0], held=plant.u_ref_index, initial_form=True))
    return out


def build_reachable(
    kind: str,
    plant: PlantModel,
    lattice: Lattice,
    cfg: AbstractionConfig,
    cert: LyapunovCertificate | None = None,
    seeds: Sequence[AggregateState] | None = None,
    budget: int | None = None,
    max_depth: int | None = None,
) -> ReachResult:
    """Breadth-first closure of a successor map from seed states.

    ``kind`` is one of ``fc``, ``gas``, ``concrete``.  The walk is
    deterministic: states are expanded in interning order and successor
    lists are sorted before interning.  When the state budget or the depth
    cap stops the walk the result is marked truncated and the frontier
    (discovered but unexpanded states) is reported; frontier states may
    look blocking even though the underlying model is not.
    """
    if kind == "fc" and cert is None:
        raise ValueError("fc construction needs a certificate")
    if kind == "gas" and cfg.variant != "gas":
        raise ValueError("config variant must be 'gas' for the contractive model")
    budget = budget if budget is not None else cfg.state_budget

    labels = [tuple(float(v) for v in u) for u in plant.input_points]
    sys = FiniteSystem(inputs=labels, name=f"{kind}-model")
    flows = FlowTable(plant, lattice)

    if seeds is None:
        seeds = initial_states_on_lattice(plant, lattice)
    for s in seeds:
        sys.initial.add(sys.intern(s))

    depth_of = {i: 0 for i in range(sys.n_states())}
    cursor = 0
    truncated = False
    skipped: list[int] = []
    while cursor < sys.n_states():
        src = cursor
        cursor += 1
        state = sys.states[src]
        d = depth_of[src]
        if max_depth is not None and d >= max_depth:
            truncated = True
            skipped.append(src)
            continue

        if kind == "concrete":
            per_u: list[list[AggregateState]] = []
            for u in range(plant.n_inputs):
                lst = []
                for n2 in range(cfg.n_min, cfg.n_max + 1):
                    nxt = concrete_successors(plant, state, u, n2)
                    if nxt is not None:
                        lst.append(nxt)
                per_u.append(lst)
        elif kind == "gas":
            per_u = [
                symbolic_successors_gas(plant, lattice, cfg, state, u, flows)
                for u in range(plant.n_inputs)
            ]
        else:
            bursts = fc_successor_bursts(plant, lattice, cert, cfg, state, flows)
            per_u = []
            for u in range(plant.n_inputs):
                per_u.append(
                    [
                        AggregateState(
                            tuple(tuple(lattice.point_of(i).tolist()) for i in chain),
                            held=u,
                        )
                        for chain in bursts
                    ]
                )

        for u, succs in enumerate(per_u):
            ids = []
            for nxt in succs:
                j = sys.lookup(nxt)
                if j is None:
                    if sys.n_states() >= budget:
                        truncated = True
                        continue
                    j = sys.intern(nxt)
                    depth_of[j] = d + 1
                ids.append(j)
            if ids:
                sys.set_post(src, u, ids)

    return ReachResult(
        system=sys,
        truncated=truncated,
        unexpanded=skipped,
        n_expanded=cursor - len(skipped),
    )
