"""Plant descriptions: dynamics, admissible regions, and quantization lattices.

A plant couples a controlled vector field with the geometry the rest of the
toolkit needs: the admissible state region (a finite union of axis-aligned
hyperrectangles), the region initial conditions are drawn from, a finite set
of admissible input values, and the sampling period used by the sampled-data
map.  The quantization lattice lives here too because every downstream
module measures distances against it.

Conventions
-----------
* All vectors are 1-D numpy arrays of float64; batched variants stack them
  along the leading axis.
* Lattice points are integer multiples of the per-axis step, not anchored at
  region corners.
* Region membership uses an absolute boundary tolerance of 1e-9; points that
  close to a face are treated as inside and clamped inward.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import (
    CapacityExceeded,
    DegenerateAxis,
    IntegrationDiverged,
    OutsideBox,
)

BOUNDARY_TOL = 1e-9
# Relative nudge used when a float ratio sits on a rounding boundary.
TIE_NUDGE = 1e-12


# ---------------------------------------------------------------------------
# Region geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxUnion:
    """Finite union of closed axis-aligned hyperrectangles.

    Rectangles keep their declaration order; operations that must pick a
    single rectangle (quantization, clamping) use the first one that
    contains the query point.
    """

    rects: tuple[tuple[np.ndarray, np.ndarray], ...]

    @staticmethod
    def from_bounds(bounds: Sequence[Sequence[Sequence[float]]] | Sequence[Sequence[float]]) -> "BoxUnion":
        """Build from ``[(lo, hi), ...]`` per axis, or a list of such boxes."""
        first = bounds[0]
        if np.isscalar(first[0]):
            bounds = [bounds]  # single rectangle
        rects = []
        for rect in bounds:
            lo = np.asarray([float(ax[0]) for ax in rect])
            hi = np.asarray([float(ax[1]) for ax in rect])
            if np.any(hi < lo):
                raise ValueError("rectangle with hi < lo")
            rects.append((lo, hi))
        dims = {r[0].size for r in rects}
        if len(dims) != 1:
            raise ValueError("rectangles of mixed dimension")
        return BoxUnion(tuple(rects))

    @property
    def dim(self) -> int:
        return self.rects[0][0].size

    def rect_contains(self, i: int, x: np.ndarray, tol: float = BOUNDARY_TOL) -> bool:
        lo, hi = self.rects[i]
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def first_rect(self, x: np.ndarray, tol: float = BOUNDARY_TOL) -> int | None:
        for i in range(len(self.rects)):
            if self.rect_contains(i, x, tol):
                return i
        return None

    def contains(self, x: np.ndarray, tol: float = BOUNDARY_TOL) -> bool:
        return self.first_rect(x, tol) is not None

    def contains_many(self, xs: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        """Vectorized membership for an (N, dim) stack."""
        ok = np.zeros(xs.shape[0], dtype=bool)
        for lo, hi in self.rects:
            ok |= np.all(xs >= lo - tol, axis=1) & np.all(xs <= hi + tol, axis=1)
        return ok

    def clamp(self, x: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        """Clamp a nearly-inside point onto its first containing rectangle."""
        i = self.first_rect(x, tol)
        if i is None:
            raise OutsideBox(f"point {x.tolist()} outside region")
        lo, hi = self.rects[i]
        return np.minimum(np.maximum(x, lo), hi)

    def bounding(self) -> tuple[np.ndarray, np.ndarray]:
        los = np.min(np.stack([r[0] for r in self.rects]), axis=0)
        his = np.max(np.stack([r[1] for r in self.rects]), axis=0)
        return los, his

    def min_side(self) -> float:
        return min(float(np.min(hi - lo)) for lo, hi in self.rects)


# ---------------------------------------------------------------------------
# Quantization lattice
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    """Integer-multiples lattice restricted to a box union.

    ``mu`` is the per-axis step (a scalar is broadcast).  ``mu_hat`` is the
    finest structural bound the region supports: the smallest side length
    over all rectangles.  The nearest-point guarantee (every region point
    has a lattice point within one step in the max norm) holds whenever
    ``max(mu) <= mu_hat``; the constructor does not enforce it so that
    callers can inspect degenerate setups, but ``check_step()`` reports it.
    """

    mu: np.ndarray
    box: BoxUnion

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.size == 1:
            mu = np.full(self.box.dim, float(mu[0]))
        if mu.size != self.box.dim:
            raise ValueError("mu dimension mismatch")
        if np.any(mu <= 0):
            raise ValueError("mu must be positive")
        object.__setattr__(self, "mu", mu)

    @property
    def mu_hat(self) -> float:
        return self.box.min_side()

    @property
    def mu_max(self) -> float:
        return float(np.max(self.mu))

    def check_step(self) -> bool:
        return self.mu_max <= self.mu_hat + BOUNDARY_TOL

    # -- integer index ranges ------------------------------------------------

    def _rect_ranges(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.box.rects[i]
        kmin = np.ceil((lo - BOUNDARY_TOL) / self.mu).astype(np.int64)
        kmax = np.floor((hi + BOUNDARY_TOL) / self.mu).astype(np.int64)
        return kmin, kmax

    def quantize(self, x: np.ndarray) -> np.ndarray:
        """Nearest lattice point, ties rounded toward +inf, kept inside the
        region (per-axis snap, first containing rectangle decides)."""
        x = np.asarray(x, dtype=float)
        i = self.box.first_rect(x)
        if i is None:
            raise OutsideBox(f"cannot quantize {x.tolist()}: outside region")
        k = np.floor(x / self.mu + 0.5 + TIE_NUDGE).astype(np.int64)
        kmin, kmax = self._rect_ranges(i)
        if np.any(kmin > kmax):
            raise OutsideBox("rectangle holds no lattice point on some axis")
        k = np.minimum(np.maximum(k, kmin), kmax)
        return k * self.mu

    def quantize_index(self, x: np.ndarray) -> tuple[int, ...]:
        q = self.quantize(x)
        return tuple(np.round(q / self.mu).astype(np.int64).tolist())

    def index_of(self, p: np.ndarray) -> tuple[int, ...]:
        """Integer coordinates of an exact lattice point."""
        k = np.round(np.asarray(p, dtype=float) / self.mu).astype(np.int64)
        if np.max(np.abs(k * self.mu - p)) > 1e-7 * max(1.0, self.mu_max):
            raise ValueError(f"{p} is not a lattice point")
        return tuple(k.tolist())

    def point_of(self, idx: Sequence[int]) -> np.ndarray:
        return np.asarray(idx, dtype=float) * self.mu

    # -- enumeration ----------------------------------------------------------

    def rect_count(self, i: int) -> int:
        kmin, kmax = self._rect_ranges(i)
        if np.any(kmin > kmax):
            return 0
        return int(np.prod((kmax - kmin + 1).astype(object)))

    def count(self, budget: int | None = None) -> int:
        """Number of distinct lattice points in the region.

        Single-rectangle regions use the closed form; unions enumerate with
        deduplication and honor ``budget``.
        """
        if len(self.box.rects) == 1:
            n = self.rect_count(0)
            if budget is not None and n > budget:
                raise CapacityExceeded("lattice count over budget", n, budget)
            return n
        seen: set[tuple[int, ...]] = set()
        for idx in self.iter_indices():
            seen.add(idx)
            if budget is not None and len(seen) > budget:
                raise CapacityExceeded("lattice count over budget", len(seen), budget)
        return len(seen)

    def iter_indices(self) -> Iterator[tuple[int, ...]]:
        """All lattice indices, rectangle declaration order then lexicographic.
        Points shared by several rectangles are yielded once (first owner)."""
        seen: set[tuple[int, ...]] = set()
        for i in range(len(self.box.rects)):
            kmin, kmax = self._rect_ranges(i)
            if np.any(kmin > kmax):
                continue
            axes = [range(int(a), int(b) + 1) for a, b in zip(kmin, kmax)]
            for idx in _lex_product(axes):
                if idx not in seen:
                    seen.add(idx)
                    yield idx

    def enumerate_points(self, budget: int | None = None) -> np.ndarray:
        pts = []
        for n, idx in enumerate(self.iter_indices()):
            if budget is not None and n >= budget:
                raise CapacityExceeded("lattice enumeration over budget", n + 1, budget)
            pts.append(idx)
        if not pts:
            return np.empty((0, self.box.dim))
        return np.asarray(pts, dtype=float) * self.mu

    def indices_within(self, center: np.ndarray, radius: float) -> list[tuple[int, ...]]:
        """Lattice indices within ``radius`` of ``center`` in the max norm,
        intersected with the region.  Sorted lexicographically."""
        center = np.asarray(center, dtype=float)
        out: set[tuple[int, ...]] = set()
        for i in range(len(self.box.rects)):
            lo, hi = self.box.rects[i]
            a = np.maximum(center - radius, lo - BOUNDARY_TOL)
            b = np.minimum(center + radius, hi + BOUNDARY_TOL)
            if np.any(a > b):
                continue
            kmin = np.ceil((a - BOUNDARY_TOL) / self.mu).astype(np.int64)
            kmax = np.floor((b + BOUNDARY_TOL) / self.mu).astype(np.int64)
            if np.any(kmin > kmax):
                continue
            axes = [range(int(p), int(q) + 1) for p, q in zip(kmin, kmax)]
            for idx in _lex_product(axes):
                out.add(idx)
        return sorted(out)


def _lex_product(axes: list[range]) -> Iterator[tuple[int, ...]]:
    if not axes:
        yield ()
        return
    head, *tail = axes
    if not tail:
        for v in head:
            yield (v,)
        return
    for v in head:
        for rest in _lex_product(tail):
            yield (v,) + rest


# ---------------------------------------------------------------------------
# ODE integration: adaptive Dormand-Prince 5(4), batch capable
# ---------------------------------------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def integrate_autonomous(
    f: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_end: float,
    tol: float = 1e-9,
    max_steps: int = 200_000,
) -> np.ndarray:
    """Integrate ``dy/dt = f(y)`` from 0 to ``t_end``.

    ``y0`` may be a single state ``(n,)`` or a batch ``(B, n)``; the batch
    shares step sizes (the worst error estimate controls acceptance), which
    keeps the result independent of batch composition order but not of
    batch membership.  Callers that need bit-stable per-state results use
    batch size one; the toolkit's caches do.
    """
    y = np.asarray(y0, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[None, :]
    if t_end == 0.0:
        out = y.copy()
        return out[0] if single else out
    t = 0.0
    h = t_end / 64.0
    hmin = abs(t_end) * 1e-14
    k = [np.empty_like(y) for _ in range(7)]
    steps = 0
    while t < t_end:
        steps += 1
        if steps > max_steps:
            raise IntegrationDiverged(f"step budget {max_steps} exhausted at t={t:.6g}")
        h = min(h, t_end - t)
        k[0] = f(y)
        for s in range(1, 7):
            acc = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[s]) if a != 0.0)
            k[s] = f(acc)
        y5 = y + h * sum(b * k[j] for j, b in enumerate(_DP_B5) if b != 0.0)
        y4 = y + h * sum(b * k[j] for j, b in enumerate(_DP_B4) if b != 0.0)
        err = np.abs(y5 - y4)
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y5))
        ratio = float(np.max(err / scale)) if err.size else 0.0
        if not math.isfinite(ratio):
            raise IntegrationDiverged("non-finite state during integration")
        if ratio <= 1.0:
            t += h
            y = y5
            grow = 0.9 * (ratio + 1e-16) ** -0.2
            h *= min(5.0, max(0.2, grow))
        else:
            h *= max(0.2, 0.9 * ratio**-0.2)
            if h < hmin:
                raise IntegrationDiverged("step size collapsed below floor")
    return y[0] if single else y


# ---------------------------------------------------------------------------
# Plant model
# ---------------------------------------------------------------------------


@dataclass
class PlantModel:
    """A controlled plant plus the geometry the toolkit operates on.

    ``vector_field(x, u)`` must accept ``x`` of shape ``(n,)`` or ``(B, n)``
    with ``u`` of shape ``(m,)`` (one input for the whole batch) or
    ``(B, m)`` and return the matching shape.
    """

    dim_x: int
    dim_u: int
    vector_field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    state_box: BoxUnion
    init_box: BoxUnion
    input_points: np.ndarray
    tau: float
    u_ref_index: int = 0
    tol_ode: float = 1e-9
    input_box: tuple[np.ndarray, np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        self.input_points = np.asarray(self.input_points, dtype=float)
        if self.input_points.ndim == 1:
            self.input_points = self.input_points[:, None]
        if self.input_points.shape[1] != self.dim_u:
            raise ValueError("input_points dimension mismatch")
        if self.input_points.shape[0] == 0:
            raise ValueError("empty input set")
        if self.state_box.dim != self.dim_x or self.init_box.dim != self.dim_x:
            raise ValueError("box dimension mismatch")
        if not 0 <= self.u_ref_index < len(self.input_points):
            raise ValueError("u_ref_index out of range")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        # cheap sanity: init rectangles sit inside the state region
        for lo, hi in self.init_box.rects:
            for corner in (lo, hi):
                if not self.state_box.contains(corner):
                    raise ValueError("init region leaves the state region")

    @property
    def n_inputs(self) -> int:
        return int(self.input_points.shape[0])

    @property
    def u_ref(self) -> np.ndarray:
        return self.input_points[self.u_ref_index]

    def flow(self, x: np.ndarray, u: np.ndarray, t: float | None = None) -> np.ndarray:
        """State reached from ``x`` after ``t`` seconds of constant input
        ``u`` (default: one sampling period)."""
        t = self.tau if t is None else t
        u = np.asarray(u, dtype=float)

        def rhs(y: np.ndarray) -> np.ndarray:
            return self.vector_field(y, u)

        return integrate_autonomous(rhs, x, t, tol=self.tol_ode)

    def flow_map(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """The sampled-data successor map (one period)."""
        return self.flow(x, u, self.tau)

    def flow_many(self, xs: np.ndarray, u: np.ndarray, t: float | None = None) -> np.ndarray:
        """Batched flow: ``xs`` is ``(B, n)``."""
        return self.flow(xs, u, t)


# ---------------------------------------------------------------------------
# Built-in vector fields and the expression mini-language
# ---------------------------------------------------------------------------


def linear_field(A: Sequence[Sequence[float]], B: Sequence[Sequence[float]]) -> Callable:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)

    def f(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return x @ A.T + np.asarray(u, dtype=float) @ B.T

    return f


def single_track_field(a: float, b: float) -> Callable:
    """Kinematic single-track (bicycle) model.

    State (x, y, heading); input (speed, steering angle).  The slip angle of
    the virtual center wheel is ``arctan(a*tan(steer)/b)``.
    """

    def f(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = u[..., 0]
        steer = u[..., 1]
        slip = np.arctan(a * np.tan(steer) / b)
        th = x[..., 2]
        out = np.empty_like(x)
        cs = np.cos(slip)
        out[..., 0] = v * np.cos(th + slip) / cs
        out[..., 1] = v * np.sin(th + slip) / cs
        out[..., 2] = v * np.tan(steer) / b
        return out

    return f


_EXPR_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "arctan": np.arctan,
    "atan": np.arctan,
    "arcsin": np.arcsin,
    "arccos": np.arccos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sign": np.sign,
    "min": np.minimum,
    "max": np.maximum,
}
_EXPR_CONSTS = {"pi": math.pi, "e": math.e}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _check_expr(tree: ast.AST, names: set[str]) -> None:
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in expression: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _EXPR_FUNCS:
                raise ValueError("only whitelisted function calls allowed")
            if node.keywords:
                raise ValueError("keyword arguments not allowed")
        if isinstance(node, ast.Name):
            if node.id not in names and node.id not in _EXPR_FUNCS and node.id not in _EXPR_CONSTS:
                raise ValueError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError("only numeric constants allowed")


def expression_field(components: Sequence[str], dim_x: int, dim_u: int) -> Callable:
    """Compile per-component expressions over x1..xn, u1..um into a field.

    The grammar admits arithmetic, powers, and a fixed set of elementary
    functions; nothing else.  Expressions are validated once at build time.
    """
    if len(components) != dim_x:
        raise ValueError("one expression per state component required")
    names = {f"x{i+1}" for i in range(dim_x)} | {f"u{j+1}" for j in range(dim_u)}
    compiled = []
    for src in components:
        tree = ast.parse(src, mode="eval")
        _check_expr(tree, names)
        compiled.append(compile(tree, "<vector-field>", "eval"))
    glob = {"__builtins__": {}}
    glob.update(_EXPR_FUNCS)
    glob.update(_EXPR_CONSTS)

    def f(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        env = {}
        for i in range(dim_x):
            env[f"x{i+1}"] = x[..., i]
        for j in range(dim_u):
            env[f"u{j+1}"] = u[..., j]
        out = np.empty_like(x)
        for i, code in enumerate(compiled):
            val = eval(code, glob, env)  # noqa: S307 - AST whitelisted above
            out[..., i] = val
        return out

    return f


def make_vector_field(kind: str, params: dict, dim_x: int, dim_u: int) -> Callable:
    """Registry for named vector fields used by config ingestion."""
    if kind == "linear":
        return linear_field(params["A"], params["B"])
    if kind == "single_track_vehicle":
        return single_track_field(float(params["a"]), float(params["b"]))
    if kind == "expr":
        return expression_field(params["components"], dim_x, dim_u)
    raise ValueError(f"unknown vector field kind {kind!r}")


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass
class AffineMap:
    """Per-axis map ``raw = scale * scaled + offset``."""

    scale: np.ndarray
    offset: np.ndarray

    def to_scaled(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.offset) / self.scale

    def to_raw(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.offset


def _axis_maps(lo: np.ndarray, hi: np.ndarray) -> AffineMap:
    width = hi - lo
    if np.any(width <= 0):
        bad = int(np.argmin(width))
        raise DegenerateAxis(f"axis {bad} has zero width, cannot rescale")
    scale = np.empty_like(width)
    offset = np.empty_like(width)
    for i in range(width.size):
        if lo[i] == 0.0 and hi[i] > 0.0:
            scale[i] = hi[i]  # one-sided: [0, hi] -> [0, 1]
            offset[i] = 0.0
        elif hi[i] == 0.0 and lo[i] < 0.0:
            scale[i] = -lo[i]  # one-sided: [lo, 0] -> [-1, 0]
            offset[i] = 0.0
        else:
            scale[i] = (hi[i] - lo[i]) / 2.0
            offset[i] = (hi[i] + lo[i]) / 2.0
    return AffineMap(scale, offset)


@dataclass
class NormalizedPlant:
    plant: PlantModel
    state_map: AffineMap
    input_map: AffineMap

    def to_normalized_state(self, x: np.ndarray) -> np.ndarray:
        return self.state_map.to_scaled(x)

    def to_physical_state(self, z: np.ndarray) -> np.ndarray:
        return self.state_map.to_raw(z)

    def to_normalized_input(self, u: np.ndarray) -> np.ndarray:
        return self.input_map.to_scaled(u)

    def to_physical_input(self, w: np.ndarray) -> np.ndarray:
        return self.input_map.to_raw(w)


def _map_box(box: BoxUnion, m: AffineMap) -> BoxUnion:
    rects = tuple((m.to_scaled(lo), m.to_scaled(hi)) for lo, hi in box.rects)
    return BoxUnion(rects)


def normalize(plant: PlantModel) -> NormalizedPlant:
    """Rescale every state and input axis onto [-1, 1] (or [0, 1] for
    one-sided axes) and wrap the vector field accordingly.

    The wrapped field satisfies ``g(z, w) = S^-1 f(S z + c, E w + d)`` where
    (S, c) and (E, d) are the state and input axis maps, so trajectories
    correspond exactly under the maps.
    """
    slo, shi = plant.state_box.bounding()
    smap = _axis_maps(slo, shi)
    if plant.input_box is not None:
        ilo, ihi = plant.input_box
        ilo = np.asarray(ilo, dtype=float)
        ihi = np.asarray(ihi, dtype=float)
    else:
        ilo = np.min(plant.input_points, axis=0)
        ihi = np.max(plant.input_points, axis=0)
    imap = _axis_maps(ilo, ihi)

    raw_f = plant.vector_field
    sscale = smap.scale

    def g(z: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = smap.to_raw(z)
        u = imap.to_raw(np.asarray(w, dtype=float))
        return raw_f(x, u) / sscale

    scaled = PlantModel(
        dim_x=plant.dim_x,
        dim_u=plant.dim_u,
        vector_field=g,
        state_box=_map_box(plant.state_box, smap),
        init_box=_map_box(plant.init_box, smap),
        input_points=imap.to_scaled(plant.input_points),
        tau=plant.tau,
        u_ref_index=plant.u_ref_index,
        tol_ode=plant.tol_ode,
        input_box=(imap.to_scaled(ilo), imap.to_scaled(ihi)),
        name=plant.name + ":normalized" if plant.name else "normalized",
    )
    return NormalizedPlant(scaled, smap, imap)
