"""Command-line driver for the toolkit.

Subcommands mirror the workflow: ``validate`` a scenario file, derive
``delays`` from the channel, ``abstract`` the plant, ``synthesize`` a
controller, ``simulate`` the closed loop, ``verify`` recorded traces, and
``demo-vehicle`` to run the whole chain on one scenario.

Exit codes: 0 on success, 2 for configuration and parameter problems,
3 when synthesis proves the instance empty, 4 when a runtime invariant
breaks (domain exits, blocked controllers, budget overruns, bad traces).
Reports are flat ``key value`` text with a ``# report v1`` first line;
timing goes to stderr so report bytes stay reproducible.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .abstraction import build_reachable, validate_certificate
from .config import ConfigBundle, ConfigError, load_config
from .errors import (
    BlockingController,
    CapacityExceeded,
    EmptyController,
    LeftStateSpace,
    OutsideDomain,
    ParameterViolation,
    PolicyExhausted,
    TraceInvalid,
)
from .network import compute_delay_bounds, make_policy
from .patrol import CorridorController, synthesize_corridor
from .refine import MealyController
from .sim import export_trace, load_trace_arrays, run_loop, verify_trace
from .synthesis import Specification, check_parameters, lift_spec, synthesize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EMPTY = 3
EXIT_RUNTIME = 4

REPORT_HEAD = "# report v1"


# ---------------------------------------------------------------------------
# Report plumbing
# ---------------------------------------------------------------------------


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".12g")
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def report_text(pairs: dict) -> str:
    lines = [REPORT_HEAD]
    for k, v in pairs.items():
        lines.append(f"{k} {_fmt_value(v)}")
    return "\n".join(lines) + "\n"


def emit_report(pairs: dict, path: Path | None = None) -> None:
    text = report_text(pairs)
    sys.stdout.write(text)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Shared steps
# ---------------------------------------------------------------------------


def _gate(bundle: ConfigBundle):
    """Parameter gate for whatever engine the scenario selects."""
    if bundle.eps is None or bundle.theta is None:
        return None
    matching = bundle.layout.matching() if bundle.layout is not None else bundle.abstraction.mu_x
    return check_parameters(
        matching,
        bundle.theta,
        bundle.eps,
        mu_hat_x=bundle.lattice.mu_hat,
        variant=bundle.abstraction.variant,
        cert=bundle.certificate,
        tau=bundle.plant.tau,
    )


def _delays_pairs(bundle: ConfigBundle) -> dict:
    if bundle.network is None:
        raise ConfigError("this scenario has no [network] section")
    n_states = bundle.lattice.count()
    db = compute_delay_bounds(bundle.network, n_states, bundle.plant.n_inputs, bundle.plant.tau)
    pairs = {"state_symbols": n_states, "input_symbols": bundle.plant.n_inputs}
    pairs.update(db.as_report())
    acfg = bundle.abstraction
    pairs["abstraction_n_min"] = acfg.n_min
    pairs["abstraction_n_max"] = acfg.n_max
    pairs["consistent_with_abstraction"] = (db.n_min == acfg.n_min and db.n_max == acfg.n_max)
    return pairs


def _load_spec(bundle: ConfigBundle, spec_file: str | None) -> Specification:
    if spec_file is not None:
        return Specification.deserialize(Path(spec_file).read_text())
    if bundle.spec_path is not None:
        return Specification.deserialize(bundle.spec_path.read_text())
    if bundle.layout is not None:
        return bundle.layout.to_specification()
    raise ConfigError("no specification: give [spec] file or a [patrol] section")


def _synthesize_bundle(bundle: ConfigBundle, out_dir: Path) -> dict:
    """Run the configured engine; write controller.txt / spec.txt / report."""
    if bundle.eps is None or bundle.theta is None:
        raise ConfigError("[abstraction] eps and theta are required for synthesis")
    if bundle.certificate is None:
        raise ConfigError("a [certificate] section is required for synthesis")
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    if bundle.engine == "patrol":
        res = synthesize_corridor(
            bundle.plant, bundle.lattice, bundle.certificate,
            bundle.abstraction, bundle.layout, bundle.theta, bundle.eps,
        )
        controller_text = res.controller.serialize()
        spec_text = res.spec.serialize()
        pairs = dict(res.report)
    else:
        spec = _load_spec(bundle, None)
        reach = build_reachable(
            bundle.abstraction.variant, bundle.plant, bundle.lattice,
            bundle.abstraction, cert=bundle.certificate,
        )
        if reach.truncated:
            raise CapacityExceeded(
                "abstraction hit its state budget; raise [abstraction] state_budget",
                count=reach.system.n_states(),
                budget=bundle.abstraction.state_budget,
            )
        lifted = lift_spec(spec, bundle.abstraction.n_min, bundle.abstraction.n_max)
        matching = bundle.layout.matching() if bundle.layout is not None else bundle.abstraction.mu_x
        gres = synthesize(reach.system, lifted, matching, bundle.theta, bundle.eps)
        ctrl = MealyController(
            gres.controller, matching, bundle.abstraction.n_min, bundle.abstraction.n_max
        )
        controller_text = ctrl.serialize()
        spec_text = spec.serialize()
        pairs = dict(gres.report)
        pairs["model.states"] = reach.system.n_states()
    elapsed = time.perf_counter() - t0

    (out_dir / "controller.txt").write_text(controller_text)
    (out_dir / "spec.txt").write_text(spec_text)
    pairs["engine"] = bundle.engine
    pairs["controller_file"] = "controller.txt"
    pairs["spec_file"] = "spec.txt"
    _status(f"synthesis finished in {elapsed:.3f}s")
    return pairs


def _load_controller(path: Path):
    text = path.read_text()
    head = text.splitlines()[0] if text else ""
    if head.startswith("# patrol-controller"):
        return CorridorController.deserialize(text)
    if head.startswith("# controller"):
        return MealyController.deserialize(text)
    raise ConfigError(f"{path}: not a controller file")


def _initial_points(bundle: ConfigBundle, ctrl) -> list[np.ndarray]:
    """Initial lattice cells the controller actually covers, as points."""
    from .plant import Lattice

    init_lat = Lattice(bundle.lattice.mu, bundle.plant.init_box)
    pts = []
    for idx in init_lat.iter_indices():
        p = init_lat.point_of(idx)
        try:
            ctrl.initial_for(tuple(float(v) for v in p))
        except OutsideDomain:
            continue
        pts.append(p)
    if not pts:
        raise OutsideDomain("controller covers no cell of the initial region")
    return pts


@lru_cache(maxsize=4)
def _worker_setup(config_path: str, controller_path: str):
    bundle = load_config(config_path)
    ctrl = _load_controller(Path(controller_path))
    points = _initial_points(bundle, ctrl)
    return bundle, ctrl, points


def _run_one(config_path: str, controller_path: str, out_dir: str,
             i: int, seed: int, policy_str: str, horizon: int) -> tuple[int, int, int, bool]:
    bundle, ctrl, points = _worker_setup(config_path, controller_path)
    x0 = points[i % len(points)]
    policy = make_policy(policy_str)
    trace = run_loop(
        bundle.plant, ctrl, x0, policy, horizon,
        np.random.default_rng(seed), bundle.lattice, seed=seed,
    )
    base = Path(out_dir) / f"run_{i:03d}"
    export_trace(trace, str(base) + ".samples.csv", str(base) + ".iters.csv")
    return i, trace.n_iterations(), len(trace.applied), trace.truncated_tail


def _simulate_batch(bundle: ConfigBundle, controller_path: Path, out_dir: Path,
                    runs: int, seed0: int, policy_str: str, horizon: int,
                    jobs: int) -> dict:
    ctrl = _load_controller(controller_path)
    if bundle.network is not None:
        db = compute_delay_bounds(
            bundle.network, bundle.lattice.count(), bundle.plant.n_inputs, bundle.plant.tau
        )
        if (db.n_min, db.n_max) != (ctrl.n_min, ctrl.n_max):
            raise ConfigError(
                f"channel gives delay counts [{db.n_min};{db.n_max}] but the "
                f"controller was built for [{ctrl.n_min};{ctrl.n_max}]"
            )
    out_dir.mkdir(parents=True, exist_ok=True)
    args = [
        (str(bundle.path), str(controller_path), str(out_dir),
         i, seed0 + i, policy_str, horizon)
        for i in range(runs)
    ]
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, *zip(*args)))
    else:
        results = [_run_one(*a) for a in args]
    elapsed = time.perf_counter() - t0
    _status(f"{runs} runs in {elapsed:.2f}s ({jobs} worker{'s' if jobs > 1 else ''})")

    results.sort()
    iters = [r[1] for r in results]
    pairs: dict = {
        "runs": runs,
        "policy": policy_str,
        "horizon": horizon,
        "seed_base": seed0,
        "iterations_min": min(iters),
        "iterations_max": max(iters),
        "iterations_mean": sum(iters) / len(iters),
        "truncated_tails": sum(1 for r in results if r[3]),
    }
    for i, n_it, n_samp, _tr in results:
        pairs[f"run_{i:03d}.iterations"] = n_it
        pairs[f"run_{i:03d}.samples"] = n_samp
    return pairs


def _verify_dir(bundle: ConfigBundle, traces_dir: Path, eps: float,
                spec: Specification) -> tuple[dict, bool]:
    files = sorted(traces_dir.glob("run_*.samples.csv"))
    if not files:
        raise ConfigError(f"no run_*.samples.csv files under {traces_dir}")
    pairs: dict = {"traces": len(files), "eps": eps}
    all_ok = True
    for f in files:
        data = load_trace_arrays(str(f))
        res = verify_trace(SimpleNamespace(y_tilde=data["y_tilde"]), spec, eps)
        key = f.name.replace(".samples.csv", "")
        pairs[f"{key}.ok"] = res.ok
        if not res.ok:
            pairs[f"{key}.first_failure_sample"] = res.first_failure
            all_ok = False
    pairs["all_ok"] = all_ok
    return pairs, all_ok


def _clearance_pairs(spec: Specification, unsafe, eps: float) -> dict:
    """Worst-case margin between any specification point and the keep-out set."""
    worst = float("inf")
    for c in np.asarray(spec.coords, dtype=float):
        for lo, hi in unsafe.rects:
            gap = float(np.max(np.maximum(lo - c, c - hi)))
            worst = min(worst, gap)
    return {
        "clearance_margin": worst,
        "clearance_required": eps,
        "clearance_ok": worst > eps,
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    bundle = load_config(args.config)
    plant = bundle.plant
    pairs: dict = {
        "config": str(bundle.path),
        "plant": plant.name or "(unnamed)",
        "dim_x": plant.dim_x,
        "dim_u": plant.dim_u,
        "tau": plant.tau,
        "inputs": plant.n_inputs,
        "state_cells": bundle.lattice.count(),
        "mu_x": bundle.abstraction.mu_x,
        "n_min": bundle.abstraction.n_min,
        "n_max": bundle.abstraction.n_max,
        "variant": bundle.abstraction.variant,
        "engine": bundle.engine,
    }
    if bundle.layout is not None:
        pairs["patrol_slices"] = bundle.layout.n_slices
        pairs["patrol_spec_states"] = bundle.layout.n_spec_states()
        pairs["patrol_matching"] = bundle.layout.matching()

    gate = _gate(bundle)
    if gate is None:
        pairs["gate_checked"] = False
    else:
        pairs["gate_checked"] = True
        for k, v in gate.as_dict().items():
            pairs[f"gate_{k}"] = v

    if bundle.certificate is not None:
        chk = validate_certificate(plant, bundle.certificate, np.random.default_rng(0))
        pairs["certificate"] = bundle.certificate.name
        pairs["certificate_ok"] = chk.ok
        pairs["certificate_worst_decay"] = chk.worst_decay
        pairs["certificate_worst_sandwich"] = chk.worst_sandwich
    else:
        chk = None

    emit_report(pairs)
    if gate is not None and not gate.ok:
        raise ParameterViolation(
            "parameter gate failed: " + ", ".join(gate.failures()), report=gate.as_dict()
        )
    if chk is not None and not chk.ok:
        raise ParameterViolation("certificate spot-check failed: " + "; ".join(chk.messages))
    return EXIT_OK


def cmd_delays(args) -> int:
    bundle = load_config(args.config)
    t0 = time.perf_counter()
    pairs = _delays_pairs(bundle)
    _status(f"delay worksheet in {time.perf_counter() - t0:.3f}s")
    out = Path(args.out) if args.out else None
    emit_report(pairs, out)
    return EXIT_OK


def cmd_abstract(args) -> int:
    bundle = load_config(args.config)
    if bundle.certificate is None:
        raise ConfigError("a [certificate] section is required to abstract")
    t0 = time.perf_counter()
    reach = build_reachable(
        bundle.abstraction.variant, bundle.plant, bundle.lattice,
        bundle.abstraction, cert=bundle.certificate,
    )
    elapsed = time.perf_counter() - t0
    _status(f"abstraction in {elapsed:.2f}s")
    pairs = {
        "variant": bundle.abstraction.variant,
        "states": reach.system.n_states(),
        "inputs": len(reach.system.inputs),
        "expanded": reach.n_expanded,
        "truncated": reach.truncated,
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(reach.system.serialize())
        pairs["system_file"] = args.out
    emit_report(pairs)
    if reach.truncated:
        raise CapacityExceeded(
            "abstraction hit its state budget; raise [abstraction] state_budget",
            count=reach.system.n_states(),
            budget=bundle.abstraction.state_budget,
        )
    return EXIT_OK


def cmd_synthesize(args) -> int:
    bundle = load_config(args.config)
    out_dir = Path(args.out) if args.out else bundle.out_dir
    pairs = _synthesize_bundle(bundle, out_dir)
    emit_report(pairs, out_dir / "synthesize.report")
    return EXIT_OK


def cmd_simulate(args) -> int:
    bundle = load_config(args.config)
    out_dir = Path(args.out) if args.out else bundle.out_dir
    controller_path = Path(args.controller) if args.controller else out_dir / "controller.txt"
    if not controller_path.exists():
        raise ConfigError(f"controller file {controller_path} not found; synthesize first")
    runs = args.runs if args.runs is not None else bundle.sim.runs
    seed0 = args.seed if args.seed is not None else bundle.sim.seed
    policy_str = args.policy or bundle.sim.policy
    horizon = args.horizon if args.horizon is not None else bundle.sim.horizon
    pairs = _simulate_batch(
        bundle, controller_path, out_dir, runs, seed0, policy_str, horizon, args.jobs
    )
    emit_report(pairs, out_dir / "simulate.report")
    return EXIT_OK


def cmd_verify(args) -> int:
    bundle = load_config(args.config)
    traces_dir = Path(args.traces) if args.traces else bundle.out_dir
    eps = args.eps if args.eps is not None else bundle.eps
    if eps is None:
        raise ConfigError("no eps: give --eps or set [abstraction] eps")
    spec_file = args.spec
    if spec_file is None and (traces_dir / "spec.txt").exists():
        spec_file = str(traces_dir / "spec.txt")
    spec = _load_spec(bundle, spec_file)
    pairs, all_ok = _verify_dir(bundle, traces_dir, eps, spec)
    emit_report(pairs, traces_dir / "verify.report")
    if not all_ok:
        bad = [k for k, v in pairs.items() if k.endswith(".ok") and v is False]
        raise TraceInvalid(f"{len(bad)} trace(s) escape the specification tube: "
                           + ", ".join(b[:-3] for b in bad[:8]))
    return EXIT_OK


def cmd_demo_vehicle(args) -> int:
    bundle = load_config(args.config)
    out_dir = Path(args.out) if args.out else bundle.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    demo: dict = {"config": str(bundle.path)}

    gate = _gate(bundle)
    if gate is not None and not gate.ok:
        raise ParameterViolation(
            "parameter gate failed: " + ", ".join(gate.failures()), report=gate.as_dict()
        )
    demo["gate_ok"] = True

    if bundle.network is not None:
        dpairs = _delays_pairs(bundle)
        emit_report(dpairs, out_dir / "delays.report")
        if not dpairs["consistent_with_abstraction"]:
            raise ConfigError(
                "channel-derived delay counts disagree with [abstraction] n_min/n_max"
            )
        demo["delays_n_min"] = dpairs["n_min"]
        demo["delays_n_max"] = dpairs["n_max"]

    spairs = _synthesize_bundle(bundle, out_dir)
    emit_report(spairs, out_dir / "synthesize.report")
    demo["controller_states"] = spairs["controller.states"]

    # serialization round trip before trusting the file
    ctrl_path = out_dir / "controller.txt"
    text = ctrl_path.read_text()
    again = _load_controller(ctrl_path).serialize()
    if again != text:
        raise TraceInvalid("controller serialization does not round-trip")
    demo["controller_roundtrip"] = True

    runs = args.runs if args.runs is not None else bundle.sim.runs
    simpairs = _simulate_batch(
        bundle, ctrl_path, out_dir, runs, bundle.sim.seed,
        bundle.sim.policy, bundle.sim.horizon, args.jobs,
    )
    emit_report(simpairs, out_dir / "simulate.report")
    demo["runs"] = runs
    demo["iterations_mean"] = simpairs["iterations_mean"]

    spec = Specification.deserialize((out_dir / "spec.txt").read_text())
    vpairs, all_ok = _verify_dir(bundle, out_dir, bundle.eps, spec)
    emit_report(vpairs, out_dir / "verify.report")
    demo["verified"] = all_ok
    if not all_ok:
        raise TraceInvalid("closed-loop traces escape the specification tube")

    if bundle.unsafe is not None:
        cpairs = _clearance_pairs(spec, bundle.unsafe, bundle.eps)
        demo.update(cpairs)
        if not cpairs["clearance_ok"]:
            raise ParameterViolation(
                "specification tube intrudes into the keep-out region"
            )

    demo["ok"] = True
    emit_report(demo, out_dir / "demo.report")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ncsctl",
        description="Symbolic controller synthesis for lattice plants behind shared channels",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load a scenario and check its parameters")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("delays", help="derive sampling-period delay counts from the channel")
    p.add_argument("config")
    p.add_argument("--out", help="also write the worksheet to this file")
    p.set_defaults(func=cmd_delays)

    p = sub.add_parser("abstract", help="build the symbolic model and print statistics")
    p.add_argument("config")
    p.add_argument("--out", help="write the serialized transition system here")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("synthesize", help="synthesize a controller for the scenario")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default from [output] dir)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="run closed-loop simulations against a controller")
    p.add_argument("config")
    p.add_argument("--controller", help="controller file (default OUT/controller.txt)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--policy", help="uniform | fixed:N | worst | best | script:1,2,...")
    p.add_argument("--horizon", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check recorded traces against the specification")
    p.add_argument("config")
    p.add_argument("--traces", help="directory of run_*.samples.csv (default [output] dir)")
    p.add_argument("--spec", help="specification file (default TRACES/spec.txt)")
    p.add_argument("--eps", type=float)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo-vehicle", help="full chain on one scenario file")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--runs", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_demo_vehicle)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        rep = getattr(exc, "report", None)
        if rep:
            for k, v in rep.items():
                print(f"  {k} {_fmt_value(v)}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyController as exc:
        print(f"error: {exc}", file=sys.stderr)
        for line in (exc.frontier or [])[:12]:
            print(f"  {line}", file=sys.stderr)
        return EXIT_EMPTY
    except (OutsideDomain, LeftStateSpace, TraceInvalid, BlockingController,
            CapacityExceeded, PolicyExhausted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
