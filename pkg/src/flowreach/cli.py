"""Command-line front end.

    flowreach run MODEL [overrides] [--plot VARS PATH] [--stats PATH]
    flowreach compare MODEL --modes none,all [overrides]

Exit codes: 0 = safe, 1 = verdict unknown, 2 = input error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .automaton import (
    DECOMPOSE_MODES,
    HybridAutomaton,
    ParseError,
    ReachSettings,
    REPRESENTATIONS,
    UnsafeSpec,
    parse_model,
    validate,
)
from .decomposition import VariablePartition
from .geometry import octagonal_directions
from .reach import DEFAULT_SEGMENT_CAP, FlowpipeSegment, ReachResult, analyze


@dataclass(frozen=True)
class RunConfig:
    """One analysis invocation: model file plus setting overrides."""

    model_path: str
    delta: float | None = None
    horizon: float | None = None
    depth: str | None = None  # numeric string or "unbounded"
    aggregation: str | None = None  # on | off
    decompose: str | None = None
    rep: str | None = None
    max_segments: int = DEFAULT_SEGMENT_CAP
    plot_vars: tuple[str, str] | None = None
    plot_path: str | None = None
    plot_format: str = "csv"
    stats_path: str | None = None


@dataclass(frozen=True)
class StatsRecord:
    wall_time_seconds: float
    flowpipes: int
    segments: int
    mode: str
    representation: str
    disc_size: int
    clock_size: int
    rest_size: int
    verdict: str

    def lines(self) -> list[str]:
        return [f"{key} = {getattr(self, key)}" for key in (
            "wall_time_seconds", "flowpipes", "segments", "mode",
            "representation", "disc_size", "clock_size", "rest_size",
            "verdict",
        )]


class InputError(Exception):
    """Anything that should terminate with exit code 2."""


def _load(config: RunConfig):
    path = Path(config.model_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from exc
    try:
        automaton, settings, unsafe = parse_model(text)
    except ParseError as exc:
        raise InputError(f"{path}:{exc}") from exc
    diagnostics = validate(automaton, unsafe)
    if diagnostics:
        raise InputError("; ".join(diagnostics))
    settings = _apply_overrides(settings, config)
    if config.plot_vars is not None:
        for name in config.plot_vars:
            if name not in automaton.variables:
                raise InputError(f"plot variable {name!r} not in the model")
    return automaton, settings, unsafe


def _apply_overrides(settings: ReachSettings, config: RunConfig) -> ReachSettings:
    depth = settings.depth
    if config.depth is not None:
        depth = None if config.depth == "unbounded" else int(config.depth)
    aggregation = settings.aggregation
    if config.aggregation is not None:
        aggregation = config.aggregation == "on"
    try:
        return ReachSettings(
            delta=config.delta if config.delta is not None else settings.delta,
            horizon=config.horizon if config.horizon is not None else settings.horizon,
            depth=depth,
            aggregation=aggregation,
            decompose=config.decompose if config.decompose is not None else settings.decompose,
            rep=config.rep if config.rep is not None else settings.rep,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _stats_of(result: ReachResult, settings: ReachSettings) -> StatsRecord:
    disc, clock, rest = result.partition.sizes()
    return StatsRecord(
        wall_time_seconds=result.wall_time,
        flowpipes=result.flowpipes,
        segments=len(result.segments),
        mode=settings.decompose,
        representation=settings.rep,
        disc_size=disc,
        clock_size=clock,
        rest_size=rest,
        verdict=result.verdict,
    )


# -- plot geometry --------------------------------------------------------


def _polygon_from_halfplanes(c: np.ndarray, d: np.ndarray) -> np.ndarray:
    """CCW vertices of the (bounded) 2-D region C x <= d."""
    finite = np.isfinite(d)
    c, d = c[finite], d[finite]
    pts = []
    m = c.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            sub = c[[i, j]]
            if abs(np.linalg.det(sub)) < 1e-12:
                continue
            x = np.linalg.solve(sub, d[[i, j]])
            if np.all(c @ x <= d + 1e-7):
                pts.append(x)
    uniq: list[np.ndarray] = []
    for p in pts:
        if not any(np.hypot(*(p - q)) < 1e-9 for q in uniq):
            uniq.append(p)
    if len(uniq) < 3:
        return np.array(uniq) if uniq else np.zeros((0, 2))
    arr = np.array(uniq)
    center = arr.mean(axis=0)
    order = np.argsort(np.arctan2(arr[:, 1] - center[1], arr[:, 0] - center[0]))
    return arr[order]


def segment_polygon(segment: FlowpipeSegment, partition: VariablePartition,
                    var_i: int, var_j: int) -> np.ndarray:
    """Octagonal outer polygon of the segment's (var_i, var_j) projection.

    Cross-product support functions are separable, so the projection support
    is the sum of per-sub-space supports of the restricted directions.
    """
    dirs = octagonal_directions(2)
    sups = np.zeros(dirs.shape[0])
    for k, sub in enumerate(partition.subspaces):
        local = np.zeros((dirs.shape[0], sub.size))
        hit = False
        for col, var in enumerate((var_i, var_j)):
            if var in sub.members:
                local[:, sub.members.index(var)] = dirs[:, col]
                hit = True
        if hit:
            sups = sups + segment.sets[k].support_batch(local)
    return _polygon_from_halfplanes(dirs, sups)


def _write_plot(path: str, fmt: str, polygons, var_names) -> None:
    # repr(float) round-trips; numpy scalars would print their type name.
    polygons = [(seg, [(float(vx), float(vy)) for vx, vy in verts])
                for seg, verts in polygons]
    if fmt == "csv":
        lines = ["flowpipe,segment,location,t1,t2,vx,vy"]
        for seg, verts in polygons:
            for vx, vy in verts:
                lines.append(f"{seg.flowpipe},{seg.index},{seg.location},"
                             f"{seg.t1!r},{seg.t2!r},{vx!r},{vy!r}")
        Path(path).write_text("\n".join(lines) + "\n")
    elif fmt == "gnuplot":
        blocks = [f"# {var_names[0]} vs {var_names[1]}, one block per polygon"]
        for seg, verts in polygons:
            blocks.append(f"# flowpipe {seg.flowpipe} segment {seg.index} "
                          f"{seg.location} [{seg.t1!r}, {seg.t2!r}]")
            closed = list(verts) + [verts[0]] if len(verts) else []
            blocks.extend(f"{vx!r} {vy!r}" for vx, vy in closed)
            blocks.append("")
        Path(path).write_text("\n".join(blocks) + "\n")
    elif fmt == "svg":
        all_pts = np.vstack([verts for _, verts in polygons if len(verts)]) \
            if polygons else np.zeros((1, 2))
        lo = all_pts.min(axis=0)
        hi = all_pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
                 f'viewBox="{lo[0]!r} {lo[1]!r} {span[0]!r} {span[1]!r}">']
        for _, verts in polygons:
            if len(verts) < 3:
                continue
            pts = " ".join(f"{vx!r},{vy!r}" for vx, vy in verts)
            parts.append(f'  <polygon points="{pts}" fill="none" '
                         f'stroke="black" stroke-width="{(span.min() / 500)!r}"/>')
        parts.append("</svg>")
        Path(path).write_text("\n".join(parts) + "\n")
    else:
        raise InputError(f"unknown plot format {fmt!r}")


# -- commands --------------------------------------------------------------


def run(config: RunConfig, out=sys.stdout) -> tuple[int, StatsRecord]:
    """Execute one analysis; returns (exit code, stats)."""
    automaton, settings, unsafe = _load(config)
    result = analyze(automaton, settings, unsafe,
                     max_segments=config.max_segments)
    stats = _stats_of(result, settings)
    for line in stats.lines():
        print(line, file=out)
    if result.capped:
        print("warning: segment cap reached, result is partial", file=out)
    if config.stats_path:
        Path(config.stats_path).write_text("\n".join(stats.lines()) + "\n")
    if config.plot_vars is not None and config.plot_path:
        vi = automaton.var_index(config.plot_vars[0])
        vj = automaton.var_index(config.plot_vars[1])
        polygons = [(seg, segment_polygon(seg, result.partition, vi, vj))
                    for seg in result.segments]
        _write_plot(config.plot_path, config.plot_format, polygons,
                    config.plot_vars)
    return (0 if result.verdict == "safe" else 1), stats


def _containment(none_result: ReachResult, dec_result: ReachResult,
                 tol: float = 1e-9) -> tuple[bool, float]:
    """Check mode-none segments against the decomposed cross product."""
    def keyed(res):
        return {(res.flowpipe_paths[s.flowpipe], s.index): s for s in res.segments}

    none_by_key = keyed(none_result)
    dec_by_key = keyed(dec_result)
    worst = 0.0
    n = dec_result.partition.dim
    for key, nseg in none_by_key.items():
        dseg = dec_by_key.get(key)
        if dseg is None:
            return False, np.inf
        glob = nseg.sets[0]
        for k, sub in enumerate(dec_result.partition.subspaces):
            dirs = octagonal_directions(sub.size)
            lifted = np.zeros((dirs.shape[0], n))
            lifted[:, list(sub.members)] = dirs
            excess = glob.support_batch(lifted) - dseg.sets[k].support_batch(dirs)
            worst = max(worst, float(np.max(excess)))
    return worst <= tol, worst


def compare(configs: list[RunConfig], out=sys.stdout) -> int:
    """Run several configurations of one model and tabulate the results."""
    if not configs:
        raise InputError("compare needs at least one configuration")
    if len({c.model_path for c in configs}) != 1:
        raise InputError("compare expects a single model file")
    rows = []
    results = []
    for config in configs:
        automaton, settings, unsafe = _load(config)
        result = analyze(automaton, settings, unsafe,
                         max_segments=config.max_segments)
        results.append((settings, result))
        rows.append(_stats_of(result, settings))
    header = f"{'mode':12} {'rep':5} {'flowpipes':>9} {'segments':>9} " \
             f"{'seconds':>9} {'verdict':>8}"
    print(header, file=out)
    for stats in rows:
        print(f"{stats.mode:12} {stats.representation:5} {stats.flowpipes:>9} "
              f"{stats.segments:>9} {stats.wall_time_seconds:>9.2f} "
              f"{stats.verdict:>8}", file=out)
    none_entries = [(s, r) for s, r in results if s.decompose == "none"]
    if none_entries:
        base_settings, base = none_entries[0]
        for settings, result in results:
            if settings.decompose == "none":
                continue
            ok, worst = _containment(base, result)
            status = "ok" if ok else f"violated by {worst:.3e}"
            ratio = result.wall_time / max(base.wall_time, 1e-9)
            flag = " speedup" if ratio < 1.0 else ""
            print(f"containment none in cross({settings.decompose}): {status}; "
                  f"time ratio {ratio:.2f}{flag}", file=out)
    return 1 if any(s.verdict != "safe" for s in rows) else 0


# -- argument parsing ------------------------------------------------------


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--delta", type=float)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--depth", help="jump depth bound or 'unbounded'")
    parser.add_argument("--aggregation", choices=["on", "off"])
    parser.add_argument("--rep", choices=list(REPRESENTATIONS))
    parser.add_argument("--max-segments", type=int, default=DEFAULT_SEGMENT_CAP)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowreach",
        description="Flowpipe reachability analysis with variable separation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="analyze one model")
    p_run.add_argument("model")
    _add_overrides(p_run)
    p_run.add_argument("--decompose", choices=list(DECOMPOSE_MODES))
    p_run.add_argument("--plot", nargs=2, metavar=("VAR,VAR", "PATH"),
                       help="emit 2-D projection polygons for two variables")
    p_run.add_argument("--plot-format", choices=["csv", "gnuplot", "svg"],
                       default="csv")
    p_run.add_argument("--stats", dest="stats_path")

    p_cmp = sub.add_parser("compare", help="run one model under several modes")
    p_cmp.add_argument("model")
    _add_overrides(p_cmp)
    p_cmp.add_argument("--modes", default="none,all",
                       help="comma-separated decomposition modes")
    return parser


def _config_from_args(args, decompose: str | None) -> RunConfig:
    plot_vars = None
    plot_path = None
    if getattr(args, "plot", None):
        pair, plot_path = args.plot
        names = tuple(part.strip() for part in pair.split(","))
        if len(names) != 2 or not all(names):
            raise InputError("--plot expects two variable names like 'x,y'")
        plot_vars = names
    if args.depth is not None and args.depth != "unbounded":
        try:
            int(args.depth)
        except ValueError:
            raise InputError("--depth expects an integer or 'unbounded'") from None
    return RunConfig(
        model_path=args.model,
        delta=args.delta,
        horizon=args.horizon,
        depth=args.depth,
        aggregation=args.aggregation,
        decompose=decompose,
        rep=args.rep,
        max_segments=args.max_segments,
        plot_vars=plot_vars,
        plot_path=plot_path,
        plot_format=getattr(args, "plot_format", "csv"),
        stats_path=getattr(args, "stats_path", None),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            code, _ = run(_config_from_args(args, args.decompose))
            return code
        modes = [m.strip() for m in args.modes.split(",") if m.strip()]
        if not modes:
            raise InputError("--modes must name at least one mode")
        for mode in modes:
            if mode not in DECOMPOSE_MODES:
                raise InputError(f"unknown decomposition mode {mode!r}")
        configs = [_config_from_args(args, mode) for mode in modes]
        return compare(configs)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
