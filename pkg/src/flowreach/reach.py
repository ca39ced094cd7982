"""Flowpipe construction and the worklist reachability search.

State sets are carried per sub-space (projective representation).  Disc and
clock sub-spaces always use boxes; the rest sub-space uses the configured
representation.  The flowpipe recurrence is

    first segment:  ((p hull e^{dA} p) + bloating) intersect Inv
    next segments:  (e^{dA} segment) intersect Inv

and a flowpipe stops as soon as any sub-space turns empty (emptiness
synchronization).  Jump successors feed a FIFO worklist; jumps whose guard
already fails on the constant disc sub-space are pruned once per task.
"""
from __future__ import annotations

import time
from collections import deque
from functools import reduce
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .automaton import (
    AffineFlow,
    AffineReset,
    HybridAutomaton,
    ReachSettings,
    UnsafeSpec,
)
from .decomposition import (
    DecomposedAutomaton,
    VariablePartition,
    classify,
    decompose,
    split_condition,
)
from .geometry import (
    Box,
    Condition,
    HPolytope,
    SfHull,
    SfIntersect,
    SfLeaf,
    SfNode,
    SfSum,
    StateSet,
    aggregate,
    convert,
)
from .linalg import affine_step, inf_norm

DEFAULT_SEGMENT_CAP = 100_000


@dataclass(frozen=True, eq=False)
class BloatingBox:
    """Per-dimension symmetric bloating radii for one flow step."""

    radii: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float).ravel()
        if np.any(r < 0):
            raise ValueError("bloating radii must be nonnegative")
        object.__setattr__(self, "radii", r)

    @property
    def is_zero(self) -> bool:
        return not self.radii.any()

    def as_box(self) -> Box:
        return Box(-self.radii, self.radii)


def _flow_blocks(a: np.ndarray) -> list[list[int]]:
    """Connected components of the flow matrix's coupling graph."""
    n = a.shape[0]
    adj = (a != 0.0) | (a != 0.0).T
    np.fill_diagonal(adj, True)
    seen = [False] * n
    blocks = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in np.nonzero(adj[v])[0]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        blocks.append(sorted(comp))
    return blocks


def bloating_box(a: np.ndarray, b: np.ndarray, p: StateSet,
                 delta: float) -> BloatingBox:
    """First-order bound on the deviation from linear interpolation.

    Computed per connected block of the flow matrix so that uncoupled
    variables (discrete quantities and clocks in particular) never pick up
    bloating from unrelated dynamics:

        alpha_B = (e^{d|A_B|} - 1 - d|A_B|) R_B + (e^{d|A_B|} - 1) d |b_B|

    with R_B the largest absolute support of p along the block's axes.
    Blocks with a zero matrix have exactly affine solutions, so alpha = 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    n = b.shape[0]
    radii = np.zeros(n)
    for block in _flow_blocks(a):
        sub = a[np.ix_(block, block)]
        nrm = inf_norm(sub)
        if nrm == 0.0:
            continue
        eye = np.zeros((len(block), n))
        eye[range(len(block)), block] = 1.0
        sups = p.support_batch(np.vstack([eye, -eye]))
        r_p = float(np.max(np.abs(sups)))
        growth = np.expm1(delta * nrm)
        alpha = (growth - delta * nrm) * r_p + growth * delta * inf_norm(b[block])
        radii[block] = alpha
    return BloatingBox(radii)


def _box_hull(a: Box, b: Box) -> Box:
    if a.is_empty():
        return b
    if b.is_empty():
        return a
    return Box(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))


def _clip(mapped: StateSet, inv: Condition,
          inv_poly: HPolytope | None) -> StateSet:
    """Intersect with the invariant, skipping rows that cannot clip.

    Lazy trees are concretized to their octagonal template before clipping;
    the lazy min rule for intersection supports is too loose in directions
    that mix a clipped coordinate with an unclipped one.
    """
    if inv.is_true:
        return mapped
    if isinstance(mapped, (Box, HPolytope)):
        return mapped.intersect(inv)
    sups = mapped.support_batch(inv.c_matrix)
    if np.all(sups <= inv.d_vector):
        return mapped
    return aggregate([mapped]).intersect(inv)


def _first_segment(p: StateSet, flow: AffineFlow, inv: Condition, delta: float,
                   m: np.ndarray, v: np.ndarray,
                   inv_poly: HPolytope | None) -> StateSet:
    if isinstance(p, Box):
        mapped = p.affine_map(m, v)
        hull = _box_hull(p, mapped)
        bloat = bloating_box(flow.a_matrix, flow.b_vector, p, delta)
        if not bloat.is_zero:
            hull = hull.minkowski_sum(bloat.as_box())
        return hull.intersect(inv)
    base = p if isinstance(p, SfNode) else SfLeaf(p)
    hull = SfHull(base, base.affine_map(m, v))
    bloat = bloating_box(flow.a_matrix, flow.b_vector, p, delta)
    out: StateSet = hull if bloat.is_zero else SfSum(hull, SfLeaf(bloat.as_box()))
    return _clip(out, inv, inv_poly)


def _next_segment(omega: StateSet, inv: Condition, m: np.ndarray,
                  v: np.ndarray, inv_poly: HPolytope | None) -> StateSet:
    if isinstance(omega, Box):
        return omega.affine_map(m, v).intersect(inv)
    return _clip(omega.affine_map(m, v), inv, inv_poly)


def first_segment(p: StateSet, flow: AffineFlow, inv: Condition,
                  delta: float, inv_poly: HPolytope | None = None) -> StateSet:
    """Over-approximation of everything reachable from p within [0, delta]."""
    m, v = affine_step(flow.a_matrix, flow.b_vector, delta)
    return _first_segment(p, flow, inv, delta, m, v, inv_poly)


def next_segment(omega: StateSet, flow: AffineFlow, inv: Condition,
                 delta: float, inv_poly: HPolytope | None = None) -> StateSet:
    """One time step of the flowpipe recurrence."""
    m, v = affine_step(flow.a_matrix, flow.b_vector, delta)
    return _next_segment(omega, inv, m, v, inv_poly)


def flow_step(p: StateSet, flow: AffineFlow, inv: Condition, delta: float,
              is_first: bool, inv_poly: HPolytope | None = None) -> StateSet:
    """Dispatch to first_segment or next_segment."""
    if is_first:
        return first_segment(p, flow, inv, delta, inv_poly)
    return next_segment(p, flow, inv, delta, inv_poly)


def jump_successor(p: StateSet, guard: Condition, reset: AffineReset,
                   target_inv: Condition,
                   guard_poly: HPolytope | None = None,
                   target_inv_poly: HPolytope | None = None) -> StateSet:
    """Successor set (reset applied to p within the guard) in the target."""
    if guard.is_true:
        clipped = p
    elif isinstance(p, (Box, HPolytope)):
        clipped = p.intersect(guard)
    else:
        clipped = SfIntersect(p, guard_poly if guard_poly is not None
                              else HPolytope(guard))
    if clipped.is_empty():
        return Box.empty(reset.c_vector.shape[0])
    mapped = clipped.affine_map(reset.a_matrix, reset.c_vector)
    return _clip(mapped, target_inv, target_inv_poly) \
        if not isinstance(mapped, Box) else mapped.intersect(target_inv)


@dataclass(frozen=True, eq=False)
class FlowpipeSegment:
    """One recorded flowpipe element with per-sub-space sets."""

    location: str
    sets: tuple[StateSet, ...]
    t1: float
    t2: float
    flowpipe: int
    index: int


@dataclass(frozen=True, eq=False)
class ReachTask:
    location: str
    sets: tuple[StateSet, ...]
    t1: float
    t2: float
    depth: int
    # Jump trail: ((jump index, source segment index), ...) from the root.
    path: tuple[tuple[int, int], ...] = ()


@dataclass(eq=False)
class ReachResult:
    segments: list[FlowpipeSegment]
    flowpipes: int
    partition: VariablePartition
    verdict: str  # safe | unknown
    witnesses: list[FlowpipeSegment]
    wall_time: float
    capped: bool = False
    flowpipe_paths: list[tuple] = field(default_factory=list)


def _condition_box(cond: Condition) -> Box:
    """Bounding box of a condition; exact when all rows are axis-aligned."""
    if cond.is_true:
        raise ValueError("initial sets must be bounded")
    box = convert(HPolytope(cond), "box")
    if not box.is_empty() and (np.any(np.isinf(box.lo)) or np.any(np.isinf(box.hi))):
        raise ValueError("initial sets must be bounded")
    return box


class _SubContext:
    """Precomputed per-location / per-jump data for one sub-space."""

    def __init__(self, dec: DecomposedAutomaton, k: int, delta: float, rep: str):
        sub = dec.partition.subspaces[k]
        self.tag = sub.tag
        self.rep = rep if sub.tag == "rest" else "box"
        self.flows = {name: flows[k] for name, flows in dec.flows.items()}
        self.step_maps = {
            name: affine_step(flow.a_matrix, flow.b_vector, delta)
            for name, flow in self.flows.items()
        }
        self.invariants = {name: invs[k] for name, invs in dec.invariants.items()}
        self.inv_polys = {
            name: (HPolytope(inv) if not inv.is_true else None)
            for name, inv in self.invariants.items()
        }
        self.guards = [g[k] for g in dec.guards]
        self.guard_polys = [HPolytope(g) if not g.is_true else None
                            for g in self.guards]
        self.resets = [r[k] for r in dec.resets]


def analyze(automaton: HybridAutomaton, settings: ReachSettings,
            unsafe: UnsafeSpec | None = None,
            on_aggregate: Callable | None = None,
            max_segments: int = DEFAULT_SEGMENT_CAP) -> ReachResult:
    """Worklist reachability analysis over the decomposed automaton."""
    start_time = time.perf_counter()
    unsafe = unsafe if unsafe is not None else UnsafeSpec({})
    partition = classify(automaton, settings.decompose, unsafe)
    dec = decompose(automaton, partition)
    delta, horizon = settings.delta, settings.horizon
    n_subs = len(partition.subspaces)
    subs = [_SubContext(dec, k, delta, settings.rep) for k in range(n_subs)]
    disc_idx = [k for k, s in enumerate(subs) if s.tag == "disc"]
    flow_idx = [k for k, s in enumerate(subs) if s.tag != "disc"]
    jumps_from: dict[str, list[int]] = {loc.name: [] for loc in automaton.locations}
    for j, jump in enumerate(automaton.jumps):
        jumps_from[jump.source].append(j)

    worklist: deque[ReachTask] = deque()
    for name, inits in dec.initials.items():
        sets = []
        for k, init in enumerate(inits):
            cond = init.conjoin(subs[k].invariants[name])
            sets.append(_condition_box(cond))
        if any(s.is_empty() for s in sets):
            continue
        worklist.append(ReachTask(name, tuple(sets), 0.0, 0.0, 0))

    segments: list[FlowpipeSegment] = []
    flowpipe_paths: list[tuple] = []
    capped = False
    fp_id = 0

    while worklist and not capped:
        task = worklist.popleft()
        flowpipe_paths.append(task.path)
        loc = task.location
        # Discrete prefilter: the disc sub-spaces never change during flow,
        # so each jump's disc successor is computed once per task.
        enabled: list[tuple[int, dict[int, StateSet]]] = []
        for j in jumps_from[loc]:
            jump = automaton.jumps[j]
            disc_succ: dict[int, StateSet] = {}
            ok = True
            for k in disc_idx:
                s = jump_successor(task.sets[k], subs[k].guards[j],
                                   subs[k].resets[j],
                                   subs[k].invariants[jump.target],
                                   subs[k].guard_polys[j],
                                   subs[k].inv_polys[jump.target])
                if s.is_empty():
                    ok = False
                    break
                disc_succ[k] = convert(s, "box")
            if ok:
                enabled.append((j, disc_succ))

        # Per jump: (successor sets, t1, t2, source segment index).
        buffers: dict[int, list[tuple]] = {j: [] for j, _ in enabled}
        omega = list(task.sets)
        t1, t2 = task.t1, task.t2
        is_first = True
        seg_index = 0
        while True:
            if t1 < horizon:
                alive = True
                for k in flow_idx:
                    m, v = subs[k].step_maps[loc]
                    if is_first:
                        if subs[k].rep == "sf" and isinstance(omega[k], Box):
                            omega[k] = SfLeaf(omega[k])
                        stepped = _first_segment(omega[k], subs[k].flows[loc],
                                                 subs[k].invariants[loc], delta,
                                                 m, v, subs[k].inv_polys[loc])
                    else:
                        stepped = _next_segment(omega[k], subs[k].invariants[loc],
                                                m, v, subs[k].inv_polys[loc])
                    if stepped.is_empty():
                        alive = False
                        break
                    omega[k] = stepped
                if not alive:
                    break
                t2 += delta
                if not is_first:
                    t1 += delta
            segment = FlowpipeSegment(loc, tuple(omega), t1, t2, fp_id, seg_index)
            segments.append(segment)
            for j, disc_succ in enabled:
                jump = automaton.jumps[j]
                succ: list[StateSet] = [None] * n_subs
                ok = True
                for k in disc_idx:
                    succ[k] = disc_succ[k]
                for k in flow_idx:
                    s = jump_successor(omega[k], subs[k].guards[j],
                                       subs[k].resets[j],
                                       subs[k].invariants[jump.target],
                                       subs[k].guard_polys[j],
                                       subs[k].inv_polys[jump.target])
                    if s.is_empty():
                        ok = False
                        break
                    succ[k] = convert(s, "box")
                if ok:
                    buffers[j].append((tuple(succ), t1, t2, seg_index))
            is_first = False
            seg_index += 1
            if len(segments) >= max_segments:
                capped = True
                break
            if t1 >= horizon:
                break

        child_depth = task.depth + 1
        if settings.depth is not None and child_depth > settings.depth:
            fp_id += 1
            continue
        for j, _ in enabled:
            entries = buffers[j]
            if not entries:
                continue
            if settings.aggregation and len(entries) > 1:
                member_tuples = [sets for sets, _, _, _ in entries]
                # Boxing the octagonal hull equals the box hull of the member
                # boxes, so the full template hull is only built on demand.
                boxed = []
                for k in range(n_subs):
                    boxes = [convert(sets[k], "box") for sets in member_tuples]
                    boxed.append(reduce(_box_hull, boxes))
                boxed = tuple(boxed)
                if on_aggregate is not None:
                    agg_sets = tuple(
                        aggregate([sets[k] for sets in member_tuples])
                        for k in range(n_subs))
                    on_aggregate(member_tuples, agg_sets)
                lo_t = min(t for _, t, _, _ in entries)
                hi_t = max(t for _, _, t, _ in entries)
                first_seg = min(s for _, _, _, s in entries)
                worklist.append(ReachTask(
                    automaton.jumps[j].target, boxed, lo_t, hi_t,
                    child_depth, task.path + ((j, first_seg),)))
            else:
                for sets, lo_t, hi_t, src_seg in entries:
                    worklist.append(ReachTask(
                        automaton.jumps[j].target, sets, lo_t, hi_t,
                        child_depth, task.path + ((j, src_seg),)))
        fp_id += 1

    verdict, witnesses = safety_check(segments, unsafe, partition)
    return ReachResult(
        segments=segments,
        flowpipes=fp_id,
        partition=partition,
        verdict=verdict,
        witnesses=witnesses,
        wall_time=time.perf_counter() - start_time,
        capped=capped,
        flowpipe_paths=flowpipe_paths,
    )


def safety_check(segments: Sequence[FlowpipeSegment], unsafe: UnsafeSpec,
                 partition: VariablePartition) -> tuple[str, list[FlowpipeSegment]]:
    """Verdict `safe` iff every segment misses the unsafe states in some
    sub-space; otherwise `unknown` with the witnessing segments."""
    if unsafe.is_empty:
        return "safe", []
    split: dict[str, tuple] = {}
    polys: dict[str, tuple] = {}
    for name, cond in unsafe.conditions.items():
        parts = split_condition(cond, partition, f"unsafe for {name}")
        split[name] = parts
        polys[name] = tuple(HPolytope(c) if not c.is_true else None
                            for c in parts)
    witnesses = []
    for segment in segments:
        names = [n for n in (segment.location, "*") if n in split]
        for name in names:
            hit = True
            for k, cond in enumerate(split[name]):
                if cond.is_true:
                    continue
                s = segment.sets[k]
                if isinstance(s, Box):
                    inter = s.intersect(cond)
                else:
                    inter = SfIntersect(s, polys[name][k])
                if inter.is_empty():
                    hit = False
                    break
            if hit:
                witnesses.append(segment)
                break
    return ("unknown" if witnesses else "safe"), witnesses
