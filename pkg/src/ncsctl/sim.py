"""Closed-loop execution of the networked control loop.

The loop runs at the sampling level: the plant advances one period per
step under the input that was emitted one iteration ago (actuation lags
sensing by construction), while the controller is consulted once per
network iteration with the quantized sample taken at the iteration's
start.  Holding times come from a delay policy; the realized holding time
and the next measurement together pin down the controller's next state.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import LeftStateSpace, TraceInvalid
from .network import DelayBounds, DelayPolicy
from .plant import Lattice, PlantModel
from .refine import MealyController
from .synthesis import Specification

TRACE_FORMAT_VERSION = 1
FLOAT_FMT = ".12g"


@dataclass
class LoopTrace:
    """Everything observable about one closed-loop run.

    Per sampling index s: the exact sample, its quantization, and the input
    id applied on the interval starting at s.  Per iteration k (1-based in
    the semantics, 0-based in these lists): measurement, emitted input id,
    holding time, start index, controller state id.  ``v_ids[0]`` is the
    reference input applied before the first emission arrives.
    """

    y_tilde: np.ndarray  # (n_samples+1, dim)
    y: np.ndarray  # quantized, same shape
    applied: list[int]  # input id per sampling interval, length n_samples
    w: list[tuple[float, ...]]  # per-iteration measurements
    v_ids: list[int]  # [u_ref, v_1, v_2, ...]
    n_seq: list[int]  # drawn holding times per started iteration
    m_seq: list[int]  # start sample of each iteration, m_seq[0] = 0
    xi_seq: list[int]  # controller state per iteration
    horizon: int
    seed: int | None = None
    policy_name: str = ""
    truncated_tail: bool = False

    def n_iterations(self) -> int:
        return len(self.w)

    def check_invariants(self, lattice: Lattice) -> list[str]:
        """Structural laws of the loop; violations returned, not raised."""
        out = []
        for k in range(len(self.m_seq) - 1):
            if self.m_seq[k + 1] != self.m_seq[k] + self.n_seq[k]:
                out.append(f"holding time chain broken at iteration {k}")
        for k, m in enumerate(self.m_seq):
            if tuple(self.y[m]) != self.w[k]:
                out.append(f"measurement {k} is not the sample at its start index")
        for s in range(len(self.applied)):
            k = max(i for i, m in enumerate(self.m_seq) if m <= s)
            if self.applied[s] != self.v_ids[k]:
                out.append(f"hold law broken at interval {s}")
        for s in range(self.y.shape[0]):
            if tuple(lattice.quantize(self.y_tilde[s])) != tuple(self.y[s]):
                out.append(f"quantization law broken at sample {s}")
        return out


@dataclass
class _FallbackBounds:
    n_min: int
    n_max: int


def run_loop(
    plant: PlantModel,
    ctrl: MealyController,
    x0: np.ndarray,
    policy: DelayPolicy,
    horizon: int,
    rng: np.random.Generator,
    lattice: Lattice,
    bounds: DelayBounds | None = None,
    seed: int | None = None,
) -> LoopTrace:
    """Run the loop for ``horizon`` sampling intervals.

    A final iteration that would overrun the horizon is cut short: its
    samples are kept but no further controller work happens.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    if not plant.init_box.contains(x0):
        raise ValueError("x0 outside the configured initial region")
    if bounds is None:
        bounds = _FallbackBounds(ctrl.n_min, ctrl.n_max)

    y_tilde = [x0]
    y = [lattice.quantize(x0)]
    applied: list[int] = []
    w_list: list[tuple[float, ...]] = []
    v_ids = [plant.u_ref_index]
    n_list: list[int] = []
    m_list: list[int] = []
    xi_list: list[int] = []

    xi = ctrl.initial_for(tuple(y[0]))
    m = 0
    k = 1
    truncated = False
    while m < horizon:
        w = tuple(y[m])
        w_list.append(w)
        m_list.append(m)
        xi_list.append(xi)
        outcome = ctrl.step(xi, w)
        v_ids.append(outcome.u_idx)

        n_k = policy.sample(bounds, rng)
        n_list.append(n_k)
        steps = min(n_k, horizon - m)
        u_apply = plant.input_points[v_ids[k - 1]]
        for _ in range(steps):
            x_next = plant.flow_map(y_tilde[-1], u_apply)
            if not plant.state_box.contains(x_next):
                raise LeftStateSpace(
                    f"trajectory left the state region at sample {len(y_tilde)}; "
                    f"state {np.array2string(x_next, precision=6)}"
                )
            y_tilde.append(x_next)
            y.append(lattice.quantize(x_next))
            applied.append(v_ids[k - 1])
        if steps < n_k:
            truncated = True
            break
        m += n_k
        if m < horizon:
            xi = ctrl.resolve(outcome, n_k, tuple(y[m]))
        k += 1

    return LoopTrace(
        y_tilde=np.asarray(y_tilde),
        y=np.asarray(y),
        applied=applied,
        w=w_list,
        v_ids=v_ids,
        n_seq=n_list,
        m_seq=m_list,
        xi_seq=xi_list,
        horizon=horizon,
        seed=seed,
        policy_name=policy.describe(),
        truncated_tail=truncated,
    )


# ---------------------------------------------------------------------------
# Trace verification against the raw specification
# ---------------------------------------------------------------------------


@dataclass
class VerifyResult:
    ok: bool
    first_failure: int | None
    witness: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def verify_trace(trace: LoopTrace, spec: Specification, eps: float) -> VerifyResult:
    """Does some specification run shadow every exact sample within eps?

    Forward set-propagation over sampling indices: keep the set of spec
    states consistent with the prefix; the verdict is positive iff the set
    never empties.  A witness run is rebuilt from back-pointers.
    """
    coords = spec.coords
    samples = trace.y_tilde
    guard = eps + 1e-9 * eps + 1e-12

    def near(s: int) -> np.ndarray:
        d = np.max(np.abs(coords - samples[s]), axis=1)
        return d <= guard

    succ = {i: spec.successors(i) for i in range(spec.n_states())}
    alive = near(0)
    init_mask = np.zeros(spec.n_states(), dtype=bool)
    init_mask[sorted(spec.initial)] = True
    alive &= init_mask
    if not alive.any():
        return VerifyResult(False, 0)

    back: list[dict[int, int]] = [{i: -1 for i in np.flatnonzero(alive)}]
    for s in range(1, samples.shape[0]):
        ok_here = near(s)
        nxt: dict[int, int] = {}
        for i in sorted(back[-1]):
            for j in succ[i]:
                if ok_here[j] and j not in nxt:
                    nxt[j] = i
        if not nxt:
            return VerifyResult(False, s)
        back.append(nxt)

    # rebuild one witness run, preferring the lowest final state
    run = [min(back[-1])]
    for s in range(len(back) - 1, 0, -1):
        run.append(back[s][run[-1]])
    run.reverse()
    return VerifyResult(True, None, [spec.names[i] for i in run])


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), FLOAT_FMT)


def export_trace(trace: LoopTrace, samples_path: str, iters_path: str | None = None) -> tuple[str, str]:
    """Write the per-sample and per-iteration CSVs; returns both paths.

    Formatting is fixed-width significant decimal, so identical traces
    produce identical bytes.
    """
    if iters_path is None:
        base = samples_path[:-4] if samples_path.endswith(".csv") else samples_path
        iters_path = base + ".iters.csv"

    dim = trace.y_tilde.shape[1]
    buf = io.StringIO()
    buf.write(f"# trace v{TRACE_FORMAT_VERSION} kind=samples dim={dim} "
              f"horizon={trace.horizon} policy={trace.policy_name} seed={trace.seed}\n")
    cols = ["s"] + [f"x{i+1}" for i in range(dim)] + [f"q{i+1}" for i in range(dim)] + ["applied_input", "iter_start"]
    buf.write(",".join(cols) + "\n")
    starts = set(trace.m_seq)
    for s in range(trace.y_tilde.shape[0]):
        held = trace.applied[s] if s < len(trace.applied) else -1
        row = [str(s)]
        row += [_fmt(v) for v in trace.y_tilde[s]]
        row += [_fmt(v) for v in trace.y[s]]
        row.append(str(held))
        row.append("1" if s in starts else "0")
        buf.write(",".join(row) + "\n")
    with open(samples_path, "w") as fh:
        fh.write(buf.getvalue())

    buf2 = io.StringIO()
    buf2.write(f"# trace v{TRACE_FORMAT_VERSION} kind=iterations n={trace.n_iterations()}\n")
    buf2.write("k,start_sample,holding_time,emitted_input,controller_state," +
               ",".join(f"w{i+1}" for i in range(dim)) + "\n")
    for k in range(trace.n_iterations()):
        row = [
            str(k + 1),
            str(trace.m_seq[k]),
            str(trace.n_seq[k]),
            str(trace.v_ids[k + 1]),
            str(trace.xi_seq[k]),
        ]
        row += [_fmt(v) for v in trace.w[k]]
        buf2.write(",".join(row) + "\n")
    with open(iters_path, "w") as fh:
        fh.write(buf2.getvalue())
    return samples_path, iters_path


def load_trace_arrays(samples_path: str) -> dict:
    """Parse a samples CSV back into arrays (at the file's precision)."""
    with open(samples_path) as fh:
        header = fh.readline()
        if not header.startswith("# trace v1"):
            raise TraceInvalid("not a v1 trace file")
        meta = dict(kv.split("=", 1) for kv in header[2:].split() if "=" in kv)
        names = fh.readline().strip().split(",")
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    dim = int(meta["dim"])
    data = {
        "s": np.asarray([int(r[0]) for r in rows]),
        "y_tilde": np.asarray([[float(v) for v in r[1 : 1 + dim]] for r in rows]),
        "y": np.asarray([[float(v) for v in r[1 + dim : 1 + 2 * dim]] for r in rows]),
        "applied": [int(r[1 + 2 * dim]) for r in rows],
        "iter_start": [int(r[2 + 2 * dim]) for r in rows],
        "meta": meta,
        "columns": names,
    }
    return data
