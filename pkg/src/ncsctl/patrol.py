"""Slice-synchronous patrol synthesis for lattice-translation plants.

The generic pipeline materializes every burst of the nondeterministic
model before solving the product game, which is hopeless when each link
fans out over a whole certificate ball: successor counts grow like the
ball volume raised to the burst length.  For a scalar plant whose
one-period flow is an exact lattice translation, the game value cannot
depend on anything but the landing cell, the phase of a time-sliced
cyclic specification, and the input committed one round earlier.  This
module solves the safety game directly on that quotient with integer
interval arithmetic and returns a compact controller that speaks the
same runtime protocol as the refined Mealy tables.

Soundness rests on facts checked up front: the flow moves every lattice
point by a whole number of cells per period, and the certificate ball
spans a fixed symmetric window of cells.  With both in hand, the j-th
element of any admissible burst from cell ``z`` under a per-period drift
of ``d`` cells lies in ``z + j*d ± K*j``, and conversely every cell in
that window is realized by some chain, so containment in the slice bands
and one-step survival reduce to erosions of boolean slabs.

The quotient is exact, not merely sound: band membership of a burst
element decides whether *some* specification path can match it (cover
points are spaced two cells apart, so any in-band cell is within one
pitch of a cover point), and the cyclic specification advances exactly
one slice per sample, so the paired specification state carries no
information beyond the slice index already in the quotient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .abstraction import (
    PRED_GUARD,
    AbstractionConfig,
    LyapunovCertificate,
    fc_bound,
    fc_radius,
)
from .errors import EmptyController, OutsideDomain, ParameterViolation
from .plant import Lattice, PlantModel
from .synthesis import Specification, check_parameters

PATROL_FORMAT_VERSION = 1

# Tolerance for "this float is really an integer number of cells".
_CELL_TOL = 1e-9


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorridorLayout:
    """A cyclic sequence of one-dimensional position bands, one per period.

    Slice ``s`` owns the band of cells ``centers[s] ± widths[s]`` on the
    pitch-``mu`` lattice; the nominal motion advances ``drifts[s]`` cells
    while moving from slice ``s`` to ``s+1``.  Waypoint slices may carry
    labels, which only affect specification state names.
    """

    mu: float
    drifts: tuple[int, ...]
    centers: tuple[int, ...]
    widths: tuple[int, ...]
    labels: dict[int, str] = field(default_factory=dict)
    initial_slice: int = 0
    cover_step: int = 2

    def __post_init__(self):
        L = len(self.drifts)
        if L < 1:
            raise ValueError("layout needs at least one slice")
        if len(self.centers) != L or len(self.widths) != L:
            raise ValueError("drifts, centers, widths must have equal length")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if sum(self.drifts) != 0:
            raise ValueError("drifts must sum to zero over one cycle")
        if self.cover_step < 2 or self.cover_step % 2:
            raise ValueError("cover_step must be even and at least 2")
        p = self.cover_step // 2
        for s in range(L):
            if self.centers[(s + 1) % L] != self.centers[s] + self.drifts[s]:
                raise ValueError(f"centers inconsistent with drifts at slice {s}")
            if self.widths[s] < 1:
                raise ValueError("every band needs width >= 1")
            if self.widths[s] % p:
                raise ValueError(
                    f"band width {self.widths[s]} at slice {s} must be a "
                    f"multiple of the cover radius {p}"
                )
        if not 0 <= self.initial_slice < L:
            raise ValueError("initial_slice out of range")
        seen = set()
        for s, name in self.labels.items():
            if not 0 <= s < L:
                raise ValueError(f"label slice {s} out of range")
            if not name or any(c.isspace() for c in name):
                raise ValueError(f"bad label {name!r}")
            if name in seen:
                raise ValueError(f"duplicate label {name!r}")
            seen.add(name)

    @property
    def n_slices(self) -> int:
        return len(self.drifts)

    @property
    def cover_radius(self) -> int:
        """Cells a single cover point accounts for, on each side."""
        return self.cover_step // 2

    def matching(self) -> float:
        """Output-matching distance the cover realizes: a band cell is
        within this of some cover point exactly when it is in the band."""
        return self.cover_radius * self.mu

    def band_lo(self, s: int) -> int:
        return self.centers[s] - self.widths[s]

    def band_hi(self, s: int) -> int:
        return self.centers[s] + self.widths[s]

    def n_spec_states(self) -> int:
        p = self.cover_radius
        return sum(w // p for w in self.widths)

    def cover_offsets(self, s: int) -> list[int]:
        """Cell offsets of the slice's cover points: ``widths[s]/p`` points
        spaced ``2p`` cells apart whose radius-``p`` neighborhoods tile the
        band exactly (no out-of-band cell is matched)."""
        w, p = self.widths[s], self.cover_radius
        return list(range(-w + p, w - p + 1, 2 * p))

    def slice_name(self, s: int) -> str:
        return self.labels.get(s, f"s{s:02d}")

    def to_specification(self) -> Specification:
        names: list[str] = []
        rows: list[list[float]] = []
        owner: list[list[int]] = []
        for s in range(self.n_slices):
            base = self.slice_name(s)
            ids = []
            for o in self.cover_offsets(s):
                ids.append(len(names))
                names.append(f"{base}{o:+d}")
                rows.append([(self.centers[s] + o) * self.mu])
            owner.append(ids)
        trans = set()
        for s in range(self.n_slices):
            t = (s + 1) % self.n_slices
            for a in owner[s]:
                for b in owner[t]:
                    trans.add((a, b))
        init = set(owner[self.initial_slice])
        return Specification(names, np.asarray(rows), trans, init)


def corridor_layout(
    mu: float,
    drifts: Sequence[int],
    core_width: int,
    labels: dict[str, int] | None = None,
    widths: Sequence[int] | None = None,
    initial_slice: int = 0,
    cover_step: int = 2,
) -> CorridorLayout:
    """Build a layout from a drift profile.

    When ``widths`` is not given every band gets ``core_width``, rounded
    up to a multiple of the cover radius.  Sizing guidance: each link of
    the nondeterministic model kicks up to three cells, an input stays
    blind for up to two bursts, and drift changes between slices add
    mismatch on top, so useful widths start around the high twenties; the
    game itself is the arbiter.
    """
    d = tuple(int(v) for v in drifts)
    L = len(d)
    centers = [0]
    for s in range(L - 1):
        centers.append(centers[-1] + d[s])
    if sum(d) != 0:
        raise ValueError("drifts must sum to zero over one cycle")
    p = max(1, int(cover_step) // 2)

    if widths is None:
        widths = [p * ((core_width + p - 1) // p)] * L

    lab = {}
    if labels:
        for name, s in labels.items():
            lab[int(s)] = str(name)
    return CorridorLayout(
        mu=float(mu),
        drifts=d,
        centers=tuple(centers),
        widths=tuple(int(w) for w in widths),
        labels=lab,
        initial_slice=int(initial_slice),
        cover_step=int(cover_step),
    )


# ---------------------------------------------------------------------------
# Compact controller
# ---------------------------------------------------------------------------


@dataclass
class PatrolStep:
    """Committed input plus the controller state that committed it."""

    u_idx: int
    src: int


class CorridorController:
    """Quantized-feedback machine over (slice, cell, held-input) states.

    Runtime protocol matches the refined Mealy tables: ``initial_for`` maps
    the first measurement to a state, ``step`` commits an input, and
    ``resolve`` advances once the realized burst length and the landing
    measurement are known.
    """

    def __init__(
        self,
        mu: float,
        n_min: int,
        n_max: int,
        n_slices: int,
        initial_slice: int,
        u_ref_index: int,
        input_values: Sequence[float],
        input_drifts: Sequence[int],
        centers: Sequence[int],
        widths: Sequence[int],
        entries: Sequence[tuple[int, int, int]],
        chosen: Sequence[int],
    ):
        self.mu = float(mu)
        self.n_min = int(n_min)
        self.n_max = int(n_max)
        self.n_slices = int(n_slices)
        self.initial_slice = int(initial_slice)
        self.u_ref_index = int(u_ref_index)
        self.input_values = tuple(float(v) for v in input_values)
        self.input_drifts = tuple(int(v) for v in input_drifts)
        self.centers = tuple(int(v) for v in centers)
        self.widths = tuple(int(v) for v in widths)
        self.entries = [tuple(int(v) for v in e) for e in entries]
        self.chosen = [int(c) for c in chosen]
        if len(self.entries) != len(self.chosen):
            raise ValueError("one chosen input per entry required")
        if len(self.input_values) != len(self.input_drifts):
            raise ValueError("one drift per input required")
        n_u = len(self.input_values)
        for (s, _z, held), c in zip(self.entries, self.chosen):
            if not 0 <= s < self.n_slices:
                raise ValueError("entry slice out of range")
            if not (0 <= held < n_u and 0 <= c < n_u):
                raise ValueError("entry input out of range")
        self._ids = {key: i for i, key in enumerate(self.entries)}
        if len(self._ids) != len(self.entries):
            raise ValueError("duplicate controller entries")

    def n_states(self) -> int:
        return len(self.entries)

    # -- measurements ---------------------------------------------------------

    def _cell_of(self, w) -> int:
        w = tuple(w)
        if len(w) != 1:
            raise OutsideDomain(
                f"patrol controller expects scalar measurements, got {len(w)} axes",
                measurement=w,
            )
        c = float(w[0]) / self.mu
        k = round(c)
        if abs(c - k) > 1e-6:
            raise OutsideDomain(
                f"measurement {w[0]!r} is not a lattice point", measurement=w
            )
        return int(k)

    # -- protocol --------------------------------------------------------------

    def initial_for(self, w) -> int:
        key = (self.initial_slice, self._cell_of(w), self.u_ref_index)
        xi = self._ids.get(key)
        if xi is None:
            raise OutsideDomain(
                "initial measurement outside controller domain", measurement=tuple(w)
            )
        return xi

    def in_domain(self, xi: int, w) -> bool:
        if not 0 <= xi < len(self.entries):
            return False
        try:
            cell = self._cell_of(w)
        except OutsideDomain:
            return False
        return self.entries[xi][1] == cell

    def step(self, xi: int, w) -> PatrolStep:
        if not 0 <= xi < len(self.entries):
            raise OutsideDomain(f"unknown controller state {xi}", state=xi)
        if self.entries[xi][1] != self._cell_of(w):
            raise OutsideDomain(
                "measurement disagrees with controller state",
                state=xi,
                measurement=tuple(w),
            )
        return PatrolStep(u_idx=self.chosen[xi], src=xi)

    def resolve(self, outcome: PatrolStep, n_realized: int, w_next) -> int:
        if not self.n_min <= n_realized <= self.n_max:
            raise OutsideDomain(
                f"realized burst length {n_realized} outside [{self.n_min};{self.n_max}]"
            )
        s, _z, _held = self.entries[outcome.src]
        key = (
            (s + n_realized) % self.n_slices,
            self._cell_of(w_next),
            outcome.u_idx,
        )
        xi = self._ids.get(key)
        if xi is None:
            raise OutsideDomain(
                "landing measurement outside controller domain",
                measurement=tuple(w_next),
            )
        return xi

    def emitted_input(self, xi: int) -> int:
        if not 0 <= xi < len(self.entries):
            raise OutsideDomain(f"unknown controller state {xi}", state=xi)
        return self.chosen[xi]

    # -- persistence ------------------------------------------------------------

    def serialize(self) -> str:
        lines = [f"# patrol-controller v{PATROL_FORMAT_VERSION}"]
        lines.append(f"mu {self.mu:.17g}")
        lines.append(f"n_min {self.n_min}")
        lines.append(f"n_max {self.n_max}")
        lines.append(f"n_slices {self.n_slices}")
        lines.append(f"initial_slice {self.initial_slice}")
        lines.append(f"u_ref {self.u_ref_index}")
        lines.append(f"inputs {len(self.input_values)}")
        for i, (v, d) in enumerate(zip(self.input_values, self.input_drifts)):
            lines.append(f"input {i} {v:.17g} {d}")
        for s in range(self.n_slices):
            lines.append(f"slice {s} {self.centers[s]} {self.widths[s]}")
        lines.append(f"entries {len(self.entries)}")
        for (s, z, held), c in zip(self.entries, self.chosen):
            lines.append(f"entry {s} {z} {held} {c}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def deserialize(text: str) -> "CorridorController":
        header: dict[str, str] = {}
        inputs: list[tuple[int, float, int]] = []
        slices: list[tuple[int, int, int]] = []
        entries: list[tuple[int, int, int]] = []
        chosen: list[int] = []
        n_entries = None
        for ln_no, raw in enumerate(text.splitlines(), start=1):
            ln = raw.strip()
            if not ln:
                continue
            if ln.startswith("#"):
                if ln_no == 1 and f"patrol-controller v{PATROL_FORMAT_VERSION}" not in ln:
                    raise ValueError(f"unsupported controller format: {ln!r}")
                continue
            parts = ln.split()
            if parts[0] == "input":
                inputs.append((int(parts[1]), float(parts[2]), int(parts[3])))
            elif parts[0] == "slice":
                slices.append((int(parts[1]), int(parts[2]), int(parts[3])))
            elif parts[0] == "entry":
                entries.append((int(parts[1]), int(parts[2]), int(parts[3])))
                chosen.append(int(parts[4]))
            elif parts[0] == "entries":
                n_entries = int(parts[1])
            elif len(parts) == 2:
                header[parts[0]] = parts[1]
            else:
                raise ValueError(f"line {ln_no}: cannot parse {ln!r}")
        for key in ("mu", "n_min", "n_max", "n_slices", "initial_slice", "u_ref", "inputs"):
            if key not in header:
                raise ValueError(f"controller file missing {key!r}")
        if len(inputs) != int(header["inputs"]):
            raise ValueError("input count disagrees with header")
        if n_entries is None or n_entries != len(entries):
            raise ValueError("entry count disagrees with header")
        inputs.sort()
        if [i for i, _, _ in inputs] != list(range(len(inputs))):
            raise ValueError("input ids must be 0..n-1")
        n_slices = int(header["n_slices"])
        slices.sort()
        if [s for s, _, _ in slices] != list(range(n_slices)):
            raise ValueError("slice ids must be 0..n-1")
        return CorridorController(
            mu=float(header["mu"]),
            n_min=int(header["n_min"]),
            n_max=int(header["n_max"]),
            n_slices=n_slices,
            initial_slice=int(header["initial_slice"]),
            u_ref_index=int(header["u_ref"]),
            input_values=[v for _, v, _ in inputs],
            input_drifts=[d for _, _, d in inputs],
            centers=[c for _, c, _ in slices],
            widths=[w for _, _, w in slices],
            entries=entries,
            chosen=chosen,
        )


# ---------------------------------------------------------------------------
# Synthesis on the quotient
# ---------------------------------------------------------------------------


@dataclass
class PatrolResult:
    controller: CorridorController
    spec: Specification
    alive_pairs: int
    waves: list[int]
    covered_init: list[int]
    uncovered_init: list[int]
    report: dict
    # every committable next input per controller entry, keyed by
    # (slice, cell, held input id); diagnostic only, not serialized
    kept: dict[tuple[int, int, int], tuple[int, ...]]


def _require(cond: bool, message: str):
    if not cond:
        raise ParameterViolation(message)


def _link_window(cert: LyapunovCertificate, tau: float, mu: float) -> int:
    """Half-width, in cells, of the certificate ball around a link center.

    The admissible cells must form a symmetric contiguous window; anything
    else cannot be folded into interval arithmetic and is rejected.
    """
    bound = fc_bound(cert, tau, mu) * (1.0 + PRED_GUARD)
    radius = fc_radius(cert, tau, mu) * (1.0 + PRED_GUARD) + 1e-15
    kmax = int(math.floor(radius / mu + 1e-12))
    zero = np.zeros(1)
    offs = [
        o
        for o in range(-kmax, kmax + 1)
        if float(cert.v(zero, np.asarray([o * mu]))) <= bound
    ]
    K = max(offs) if offs else -1
    _require(
        offs == list(range(-K, K + 1)) and K >= 0,
        "certificate ball must cut a symmetric contiguous cell window",
    )
    return K


def _check_translation(plant: PlantModel, mu: float, cells: Sequence[int]) -> list[int]:
    """Verify the one-period flow is a whole-cell translation per input and
    return the drift table.  Sampling a handful of cells is enough: the
    drift check is exact at each sampled point and the synthesis result is
    additionally certified by simulation downstream."""
    drifts = []
    for ui in range(plant.n_inputs):
        u = plant.input_points[ui]
        d = float(u[0]) * plant.tau / mu
        k = round(d)
        _require(
            abs(d - k) <= _CELL_TOL,
            f"input {ui} moves {d:.6g} cells per period; patrol needs whole cells",
        )
        for z in cells:
            x = np.asarray([z * mu])
            y = plant.flow_map(x, u)
            _require(
                abs(float(y[0]) - (z * mu + float(u[0]) * plant.tau)) <= 1e-9,
                f"flow under input {ui} is not a lattice translation at cell {z}",
            )
        drifts.append(int(k))
    return drifts


def synthesize_corridor(
    plant: PlantModel,
    lattice: Lattice,
    cert: LyapunovCertificate,
    cfg: AbstractionConfig,
    layout: CorridorLayout,
    theta: float,
    eps: float,
    mu_hat_x: float | None = None,
) -> PatrolResult:
    """Solve the patrol safety game on the (slice, cell, held) quotient.

    The output-matching distance of the game is the layout's cover radius
    (cover points tile the bands, so band membership and matchability
    coincide); the quantizer pitch must not exceed it.  Raises
    ParameterViolation when the precision chain or an engine precondition
    fails, and EmptyController when no initial cell survives.
    """
    matching = layout.matching()
    prep = check_parameters(matching, theta, eps, mu_hat_x)
    if not prep.ok:
        raise ParameterViolation(
            f"precision conditions failed: {', '.join(prep.failures())}",
            report=prep.as_dict(),
        )

    _require(plant.dim_x == 1, "patrol synthesis handles scalar plants only")
    mu = float(lattice.mu[0])
    _require(
        abs(mu - layout.mu) <= 1e-12 * mu,
        "layout pitch must equal the lattice pitch",
    )
    _require(
        abs(mu - cfg.mu_x) <= 1e-12 * mu,
        "quantizer pitch must equal the abstraction pitch",
    )
    _require(
        cfg.mu_x <= matching * (1.0 + 1e-12),
        "quantizer pitch must not exceed the cover matching distance",
    )

    L = layout.n_slices
    lo = [layout.band_lo(s) for s in range(L)]
    hi = [layout.band_hi(s) for s in range(L)]
    C = [hi[s] - lo[s] + 1 for s in range(L)]
    n_u = plant.n_inputs

    K = _link_window(cert, plant.tau, mu)
    probe = sorted({min(lo), max(hi), 0, layout.centers[layout.initial_slice]})
    du = _check_translation(plant, mu, probe)

    # the state region must cover the bands plus one full burst of reach,
    # otherwise region clipping would prune adversary moves the quotient
    # still counts (and the two engines would disagree)
    dmax = max(abs(d) for d in du) if du else 0
    margin = cfg.n_max * (dmax + K) + dmax
    for c in range(min(lo) - margin, max(hi) + margin + 1):
        _require(
            plant.state_box.contains(np.asarray([c * mu])),
            "state region must cover the patrol bands plus one burst of reach",
        )

    # -- containment: all admissible bursts stay inside the slice bands ------
    alive: list[np.ndarray] = []
    for s in range(L):
        cells = np.arange(lo[s], hi[s] + 1)
        ok = np.zeros((C[s], n_u), dtype=bool)
        for ui in range(n_u):
            a, b = lo[s], hi[s]
            for j in range(1, cfg.n_max + 1):
                t = (s + j) % L
                a = max(a, lo[t] - j * du[ui] + K * j)
                b = min(b, hi[t] - j * du[ui] - K * j)
            if a <= b:
                ok[:, ui] = (cells >= a) & (cells <= b)
        alive.append(ok)

    def eroded_slabs() -> dict[tuple[int, int], np.ndarray]:
        out = {}
        for t in range(L):
            for n in range(cfg.n_min, cfg.n_max + 1):
                pad = np.zeros((K * n, n_u), dtype=bool)
                stack = np.concatenate([pad, alive[t], pad], axis=0)
                win = sliding_window_view(stack, 2 * K * n + 1, axis=0)
                out[(t, n)] = win.all(axis=2)
        return out

    def survival_candidates(s: int, ui: int, slabs) -> np.ndarray:
        """For each band cell of slice s holding input ui: which next inputs
        keep every landing of every admissible burst length alive."""
        cells = np.arange(lo[s], hi[s] + 1)
        cand = np.ones((C[s], n_u), dtype=bool)
        for n in range(cfg.n_min, cfg.n_max + 1):
            t = (s + n) % L
            pos = cells + n * du[ui] - lo[t]
            valid = (pos >= 0) & (pos < C[t])
            g = np.zeros((C[s], n_u), dtype=bool)
            g[valid] = slabs[(t, n)][pos[valid]]
            cand &= g
        return cand

    # -- greatest fixpoint: delete states with no surviving commitment -------
    waves: list[int] = []
    while True:
        slabs = eroded_slabs()
        deleted = 0
        for s in range(L):
            for ui in range(n_u):
                col = alive[s][:, ui]
                if not col.any():
                    continue
                keep = col & survival_candidates(s, ui, slabs).any(axis=1)
                d = int(col.sum()) - int(keep.sum())
                if d:
                    alive[s][:, ui] = keep
                    deleted += d
        waves.append(deleted)
        if deleted == 0:
            break

    alive_pairs = int(sum(a.sum() for a in alive))

    # -- chosen inputs (first canonical surviving commitment) ----------------
    slabs = eroded_slabs()
    chosen_tbl: list[np.ndarray] = []
    for s in range(L):
        pick = np.full((C[s], n_u), -1, dtype=np.int64)
        for ui in range(n_u):
            cand = survival_candidates(s, ui, slabs)
            has = cand.any(axis=1)
            first = np.argmax(cand, axis=1)
            sel = alive[s][:, ui] & has
            pick[sel, ui] = first[sel]
        chosen_tbl.append(pick)

    # -- initial coverage ------------------------------------------------------
    s0 = layout.initial_slice
    init_lat = Lattice(lattice.mu, plant.init_box)
    init_cells = sorted(idx[0] for idx in init_lat.iter_indices())
    u_ref = plant.u_ref_index
    covered, uncovered = [], []
    for z in init_cells:
        inside = lo[s0] <= z <= hi[s0] and alive[s0][z - lo[s0], u_ref]
        (covered if inside else uncovered).append(z)
    if not covered:
        raise EmptyController(
            "no initial cell survives the patrol game",
            frontier=[f"slice={s0} cell={z}" for z in uncovered[:50]],
        )

    # -- reachable restriction under the chosen inputs ------------------------
    seen: set[tuple[int, int, int]] = set()
    queue: list[tuple[int, int, int]] = []
    for z in covered:
        key = (s0, z, u_ref)
        if key not in seen:
            seen.add(key)
            queue.append(key)
    head = 0
    while head < len(queue):
        s, z, held = queue[head]
        head += 1
        c = int(chosen_tbl[s][z - lo[s], held])
        if c < 0:
            raise AssertionError("alive state lost its commitment; fixpoint broken")
        for n in range(cfg.n_min, cfg.n_max + 1):
            t = (s + n) % L
            base = z + n * du[held]
            for z2 in range(base - K * n, base + K * n + 1):
                key = (t, z2, c)
                if key not in seen:
                    seen.add(key)
                    queue.append(key)

    entries = sorted(seen)
    chosen = [int(chosen_tbl[s][z - lo[s], held]) for (s, z, held) in entries]

    kept_rows: dict[tuple[int, int], np.ndarray] = {}
    kept: dict[tuple[int, int, int], tuple[int, ...]] = {}
    for (s, z, held) in entries:
        row = kept_rows.get((s, held))
        if row is None:
            row = survival_candidates(s, held, slabs)
            kept_rows[(s, held)] = row
        kept[(s, z, held)] = tuple(int(c) for c in np.nonzero(row[z - lo[s]])[0])

    controller = CorridorController(
        mu=mu,
        n_min=cfg.n_min,
        n_max=cfg.n_max,
        n_slices=L,
        initial_slice=s0,
        u_ref_index=u_ref,
        input_values=[float(u[0]) for u in plant.input_points],
        input_drifts=du,
        centers=layout.centers,
        widths=layout.widths,
        entries=entries,
        chosen=chosen,
    )
    spec = layout.to_specification()
    report = {
        "controller.states": controller.n_states(),
        "controller.initial": len(covered),
        "game.pairs": alive_pairs,
        "game.waves": waves,
        "init.covered": len(covered),
        "init.uncovered": len(uncovered),
        "spec.states": spec.n_states(),
        "link.window": K,
        "matching": matching,
    }
    return PatrolResult(
        controller=controller,
        spec=spec,
        alive_pairs=alive_pairs,
        waves=waves,
        covered_init=covered,
        uncovered_init=uncovered,
        report=report,
        kept=kept,
    )
