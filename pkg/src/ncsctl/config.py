"""INI-driven assembly of a working loop: plant, lattice, certificate,
channel, engine parameters, and simulation settings.

One file describes one scenario.  Numeric fields accept arithmetic
expressions over ``pi`` and ``e`` (``-pi/3``, ``2.5e-2``), ranges are
written ``lo:hi``, per-axis lists are comma-separated, and unions of
boxes are separated by ``|``.  Every diagnostic names its section and
key, so a broken file points at itself.
"""

from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .abstraction import AbstractionConfig, LyapunovCertificate, make_certificate
from .network import NetworkParams
from .patrol import CorridorLayout, corridor_layout
from .plant import BoxUnion, Lattice, PlantModel, make_vector_field


class ConfigError(ValueError):
    """A scenario file that cannot be turned into objects."""


# ---------------------------------------------------------------------------
# Scalar field parsing
# ---------------------------------------------------------------------------

_NUM_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Name,
    ast.Load,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)
_NUM_CONSTS = {"pi": math.pi, "e": math.e}


def _num(raw: str, where: str) -> float:
    """One float, possibly written as arithmetic over pi and e."""
    text = raw.strip()
    try:
        tree = ast.parse(text, mode="eval")
        for node in ast.walk(tree):
            if not isinstance(node, _NUM_NODES):
                raise ValueError(type(node).__name__)
            if isinstance(node, ast.Name) and node.id not in _NUM_CONSTS:
                raise ValueError(f"unknown name {node.id!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ValueError("non-numeric constant")
        val = eval(  # noqa: S307 - AST restricted to arithmetic just above
            compile(tree, "<config>", "eval"), {"__builtins__": {}}, dict(_NUM_CONSTS)
        )
    except (SyntaxError, ValueError) as exc:
        raise ConfigError(f"{where}: cannot read number from {raw!r} ({exc})") from None
    return float(val)


def _int(raw: str, where: str) -> int:
    v = _num(raw, where)
    if abs(v - round(v)) > 1e-9:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}")
    return int(round(v))


def _pair(raw: str, where: str) -> tuple[float, float]:
    parts = raw.split(":")
    if len(parts) != 2:
        raise ConfigError(f"{where}: expected lo:hi, got {raw!r}")
    lo, hi = (_num(p, where) for p in parts)
    if hi < lo:
        raise ConfigError(f"{where}: range {raw!r} is inverted")
    return lo, hi


def _box_union(raw: str, where: str, dim: int) -> BoxUnion:
    boxes = []
    for chunk in raw.split("|"):
        axes = [a for a in chunk.split(",") if a.strip()]
        if len(axes) != dim:
            raise ConfigError(
                f"{where}: box {chunk.strip()!r} has {len(axes)} axes, plant has {dim}"
            )
        boxes.append([_pair(a, where) for a in axes])
    return BoxUnion.from_bounds(boxes)


def _grid_axis(raw: str, where: str) -> np.ndarray:
    parts = raw.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{where}: expected lo:hi:step, got {raw!r}")
    lo, hi, step = (_num(p, where) for p in parts)
    if step <= 0 or hi < lo:
        raise ConfigError(f"{where}: bad grid axis {raw!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


# ---------------------------------------------------------------------------
# Section readers
# ---------------------------------------------------------------------------


def _get(cp, section: str, key: str, default: str | None = None) -> str:
    if not cp.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    if cp.has_option(section, key):
        return cp.get(section, key)
    if default is None:
        raise ConfigError(f"[{section}] {key}: required key missing")
    return default


def _opt(cp, section: str, key: str) -> str | None:
    if cp.has_section(section) and cp.has_option(section, key):
        return cp.get(section, key)
    return None


def _matrix(raw: str, where: str) -> list[list[float]]:
    rows = []
    for line in raw.split("|"):
        vals = [_num(v, where) for v in line.split()]
        if not vals:
            raise ConfigError(f"{where}: empty matrix row")
        rows.append(vals)
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{where}: ragged matrix")
    return rows


def build_plant(cp: configparser.ConfigParser) -> PlantModel:
    sec = "plant"
    kind = _get(cp, sec, "field")
    dim_x = _int(_get(cp, sec, "dim"), f"[{sec}] dim")

    if kind == "linear":
        A = _matrix(_get(cp, sec, "a"), f"[{sec}] a")
        B = _matrix(_get(cp, sec, "b"), f"[{sec}] b")
        if len(A) != dim_x or len(A[0]) != dim_x:
            raise ConfigError(f"[{sec}] a: expected a {dim_x}x{dim_x} matrix")
        dim_u = len(B[0])
        if len(B) != dim_x:
            raise ConfigError(f"[{sec}] b: expected {dim_x} rows")
        field = make_vector_field("linear", {"A": A, "B": B}, dim_x, dim_u)
    elif kind == "single_track_vehicle":
        if dim_x != 3:
            raise ConfigError(f"[{sec}] dim: single-track vehicle has 3 states")
        dim_u = 2
        field = make_vector_field(
            "single_track_vehicle",
            {"a": _num(_get(cp, sec, "a"), f"[{sec}] a"),
             "b": _num(_get(cp, sec, "b"), f"[{sec}] b")},
            dim_x, dim_u,
        )
    elif kind == "expr":
        dim_u = _int(_get(cp, sec, "dim_u"), f"[{sec}] dim_u")
        comps = []
        for i in range(dim_x):
            comps.append(_get(cp, sec, f"expr{i}"))
        try:
            field = make_vector_field("expr", {"components": comps}, dim_x, dim_u)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] expr*: {exc}") from None
    else:
        raise ConfigError(f"[{sec}] field: unknown kind {kind!r}")

    state_box = _box_union(_get(cp, sec, "state_box"), f"[{sec}] state_box", dim_x)
    init_box = _box_union(_get(cp, sec, "init_box"), f"[{sec}] init_box", dim_x)

    grid = _opt(cp, sec, "input_grid")
    points = _opt(cp, sec, "input_points")
    if (grid is None) == (points is None):
        raise ConfigError(f"[{sec}]: give exactly one of input_grid / input_points")
    if grid is not None:
        axes = [a for a in grid.split(",") if a.strip()]
        if len(axes) != dim_u:
            raise ConfigError(f"[{sec}] input_grid: {len(axes)} axes, input has {dim_u}")
        mesh = np.meshgrid(
            *[_grid_axis(a, f"[{sec}] input_grid") for a in axes], indexing="ij"
        )
        input_points = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    else:
        where = f"[{sec}] input_points"
        if dim_u == 1 and ";" not in points:
            vals = [_num(v, where) for v in points.split()]
            input_points = np.asarray(vals).reshape(-1, 1)
        else:
            rows = []
            for chunk in points.split(";"):
                vals = [_num(v, where) for v in chunk.split()]
                if len(vals) != dim_u:
                    raise ConfigError(f"{where}: point {chunk.strip()!r} has {len(vals)} coords")
                rows.append(vals)
            input_points = np.asarray(rows)

    u_ref = _int(_get(cp, sec, "u_ref", "0"), f"[{sec}] u_ref")
    if not 0 <= u_ref < len(input_points):
        raise ConfigError(f"[{sec}] u_ref: index {u_ref} outside 0..{len(input_points) - 1}")

    input_box = None
    raw_ib = _opt(cp, sec, "input_box")
    if raw_ib is not None:
        input_box = _box_union(raw_ib, f"[{sec}] input_box", dim_u)

    try:
        return PlantModel(
            dim_x=dim_x,
            dim_u=dim_u,
            vector_field=field,
            state_box=state_box,
            init_box=init_box,
            input_points=input_points,
            tau=_num(_get(cp, sec, "tau"), f"[{sec}] tau"),
            u_ref_index=u_ref,
            input_box=input_box,
            name=_get(cp, sec, "name", ""),
        )
    except ValueError as exc:
        raise ConfigError(f"[{sec}]: {exc}") from None


def build_certificate(cp, dim: int) -> LyapunovCertificate:
    sec = "certificate"
    kind = _get(cp, sec, "kind")
    params = {"rate": _num(_get(cp, sec, "rate"), f"[{sec}] rate")}
    if kind == "quadratic":
        params["gamma_coef"] = _num(_get(cp, sec, "gamma_coef"), f"[{sec}] gamma_coef")
    if kind == "pnorm":
        params["p"] = _num(_get(cp, sec, "p", "8.0"), f"[{sec}] p")
    try:
        return make_certificate(kind, dim, params)
    except ValueError as exc:
        raise ConfigError(f"[{sec}]: {exc}") from None


def build_network(cp) -> NetworkParams:
    sec = "network"
    ctrl = _pair(_get(cp, sec, "delta_ctrl"), f"[{sec}] delta_ctrl")
    req = _pair(_get(cp, sec, "delta_req"), f"[{sec}] delta_req")
    net = _pair(_get(cp, sec, "delta_net"), f"[{sec}] delta_net")
    try:
        return NetworkParams(
            bandwidth_min=_num(_get(cp, sec, "bandwidth_min_bps"), f"[{sec}] bandwidth_min_bps"),
            bandwidth_max=_num(_get(cp, sec, "bandwidth_max_bps"), f"[{sec}] bandwidth_max_bps"),
            delta_ctrl_min=ctrl[0],
            delta_ctrl_max=ctrl[1],
            delta_req_min=req[0],
            delta_req_max=req[1],
            delta_net_min=net[0],
            delta_net_max=net[1],
            overhead_meas=_num(_get(cp, sec, "overhead_meas"), f"[{sec}] overhead_meas"),
            overhead_input=_num(_get(cp, sec, "overhead_input"), f"[{sec}] overhead_input"),
            n_dropout=_int(_get(cp, sec, "n_dropout", "0"), f"[{sec}] n_dropout"),
        )
    except ValueError as exc:
        raise ConfigError(f"[{sec}]: {exc}") from None


def build_abstraction(cp) -> AbstractionConfig:
    sec = "abstraction"
    try:
        return AbstractionConfig(
            mu_x=_num(_get(cp, sec, "mu_x"), f"[{sec}] mu_x"),
            n_min=_int(_get(cp, sec, "n_min"), f"[{sec}] n_min"),
            n_max=_int(_get(cp, sec, "n_max"), f"[{sec}] n_max"),
            variant=_get(cp, sec, "variant", "fc"),
            state_budget=_int(_get(cp, sec, "state_budget", "500000"), f"[{sec}] state_budget"),
        )
    except ValueError as exc:
        raise ConfigError(f"[{sec}]: {exc}") from None


def build_layout(cp, mu: float) -> CorridorLayout:
    sec = "patrol"
    drifts = [_int(v, f"[{sec}] drifts") for v in _get(cp, sec, "drifts").split()]
    labels: dict[str, int] = {}
    raw = _opt(cp, sec, "labels")
    if raw:
        for chunk in raw.split(","):
            if ":" not in chunk:
                raise ConfigError(f"[{sec}] labels: expected NAME:slice, got {chunk.strip()!r}")
            name, s = chunk.rsplit(":", 1)
            labels[name.strip()] = _int(s, f"[{sec}] labels")
    widths = None
    raw_w = _opt(cp, sec, "widths")
    if raw_w is not None:
        widths = [_int(v, f"[{sec}] widths") for v in raw_w.split()]
    try:
        return corridor_layout(
            mu=mu,
            drifts=drifts,
            core_width=_int(_get(cp, sec, "core_width", "0"), f"[{sec}] core_width"),
            labels=labels or None,
            widths=widths,
            initial_slice=_int(_get(cp, sec, "initial_slice", "0"), f"[{sec}] initial_slice"),
            cover_step=_int(_get(cp, sec, "cover_step", "2"), f"[{sec}] cover_step"),
        )
    except ValueError as exc:
        raise ConfigError(f"[{sec}]: {exc}") from None


@dataclass
class SimSettings:
    policy: str = "uniform"
    seed: int = 0
    horizon: int = 50
    runs: int = 20


@dataclass
class ConfigBundle:
    """Everything a scenario file pins down, as live objects."""

    path: Path
    plant: PlantModel
    lattice: Lattice
    certificate: LyapunovCertificate | None
    abstraction: AbstractionConfig
    eps: float | None
    theta: float | None
    engine: str
    network: NetworkParams | None
    spec_path: Path | None
    layout: CorridorLayout | None
    sim: SimSettings
    out_dir: Path
    unsafe: BoxUnion | None = None


def load_config(path: str | Path) -> ConfigBundle:
    """Read one scenario file and build every object it describes."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    plant = build_plant(cp)
    acfg = build_abstraction(cp)
    lattice = Lattice(acfg.mu_x, plant.state_box)

    cert = build_certificate(cp, plant.dim_x) if cp.has_section("certificate") else None
    network = build_network(cp) if cp.has_section("network") else None

    sec = "abstraction"
    raw_eps = _opt(cp, sec, "eps")
    raw_theta = _opt(cp, sec, "theta")
    eps = _num(raw_eps, f"[{sec}] eps") if raw_eps is not None else None
    theta = _num(raw_theta, f"[{sec}] theta") if raw_theta is not None else None
    engine = _get(cp, sec, "engine", "product")
    if engine not in ("product", "patrol"):
        raise ConfigError(f"[{sec}] engine: unknown engine {engine!r}")

    spec_path = None
    raw_spec = _opt(cp, "spec", "file")
    if raw_spec is not None:
        spec_path = (path.parent / raw_spec).resolve()
    layout = build_layout(cp, acfg.mu_x) if cp.has_section("patrol") else None

    if engine == "patrol" and layout is None:
        raise ConfigError("engine=patrol needs a [patrol] section")
    if engine == "product" and spec_path is None and layout is None:
        # product synthesis needs a target; a layout can stand in for a file
        pass

    sim = SimSettings(
        policy=_get(cp, "sim", "policy", "uniform") if cp.has_section("sim") else "uniform",
        seed=_int(_get(cp, "sim", "seed", "0"), "[sim] seed") if cp.has_section("sim") else 0,
        horizon=_int(_get(cp, "sim", "horizon", "50"), "[sim] horizon") if cp.has_section("sim") else 50,
        runs=_int(_get(cp, "sim", "runs", "20"), "[sim] runs") if cp.has_section("sim") else 20,
    )

    out_raw = _opt(cp, "output", "dir")
    out_dir = (path.parent / out_raw).resolve() if out_raw else Path.cwd() / "out"

    unsafe = None
    raw_unsafe = _opt(cp, "patrol", "unsafe")
    if raw_unsafe is not None:
        unsafe = _box_union(raw_unsafe, "[patrol] unsafe", plant.dim_x)

    return ConfigBundle(
        path=path,
        plant=plant,
        lattice=lattice,
        certificate=cert,
        abstraction=acfg,
        eps=eps,
        theta=theta,
        engine=engine,
        network=network,
        spec_path=spec_path,
        layout=layout,
        sim=sim,
        out_dir=out_dir,
        unsafe=unsafe,
    )
