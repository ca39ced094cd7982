"""Syntactic variable separation.

Variables are split into sub-spaces at the granularity of connected
components of a dependency graph: two variables are linked when any flow
matrix, condition row, or reset couples them.  Components whose variables
have derivative 0 everywhere form the disc sub-space, components whose
variables are pure clocks (derivative 1 everywhere) form the clock
sub-space, everything else is rest.  Analyzing the sub-spaces separately is
sound because every model predicate then decomposes into a conjunction of
per-sub-space predicates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .automaton import AffineFlow, AffineReset, HybridAutomaton, UnsafeSpec
from .geometry import Condition, StateSet


class NotSeparableError(ValueError):
    """A condition or reset row couples two different sub-spaces."""


@dataclass(frozen=True)
class SubSpace:
    tag: str  # disc | clock | rest
    members: tuple[int, ...]

    def __post_init__(self):
        if self.tag not in ("disc", "clock", "rest"):
            raise ValueError(f"unknown sub-space tag {self.tag!r}")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class VariablePartition:
    """Ordered, disjoint cover of the variable indices."""

    dim: int
    subspaces: tuple[SubSpace, ...]

    def __post_init__(self):
        object.__setattr__(self, "subspaces", tuple(self.subspaces))
        seen = sorted(i for sub in self.subspaces for i in sub.members)
        if seen != list(range(self.dim)):
            raise ValueError("sub-spaces must partition the variable indices")

    def sizes(self) -> tuple[int, int, int]:
        """Total variable counts as (disc, clock, rest)."""
        out = {"disc": 0, "clock": 0, "rest": 0}
        for sub in self.subspaces:
            out[sub.tag] += sub.size
        return out["disc"], out["clock"], out["rest"]

    def subspace_of(self, var: int) -> int:
        for k, sub in enumerate(self.subspaces):
            if var in sub.members:
                return k
        raise IndexError(var)


def dependency_graph(automaton: HybridAutomaton,
                     unsafe: UnsafeSpec | None = None) -> np.ndarray:
    """Symmetric boolean adjacency matrix of syntactic variable coupling.

    Edge (i, j) iff some flow or reset matrix has a nonzero entry linking i
    and j, or some condition row (invariant, guard, initial, or unsafe)
    mentions both.
    """
    n = automaton.dim
    adj = np.zeros((n, n), dtype=bool)

    def couple_matrix(m: np.ndarray, off_diagonal_only: bool = True):
        nz = m != 0.0
        if off_diagonal_only:
            np.fill_diagonal(nz, False)
        adj[nz] = True
        adj[nz.T] = True

    def couple_condition(cond: Condition):
        for row in cond.c_matrix:
            (support,) = np.nonzero(row)
            for a in support:
                for b in support:
                    if a != b:
                        adj[a, b] = True

    for loc in automaton.locations:
        couple_matrix(loc.flow.a_matrix)
        couple_condition(loc.invariant)
    for jump in automaton.jumps:
        couple_matrix(jump.reset.a_matrix)
        couple_condition(jump.guard)
    for cond in automaton.initial.values():
        couple_condition(cond)
    if unsafe is not None:
        for cond in unsafe.conditions.values():
            couple_condition(cond)
    return adj


def _connected_components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen = [False] * n
    components = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in np.nonzero(adj[v])[0]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        components.append(sorted(comp))
    return components


def _component_tag(automaton: HybridAutomaton, comp: Sequence[int]) -> str:
    disc = all(
        not loc.flow.a_matrix[i].any() and loc.flow.b_vector[i] == 0.0
        for loc in automaton.locations for i in comp
    )
    if disc:
        return "disc"
    clock = all(
        not loc.flow.a_matrix[i].any() and loc.flow.b_vector[i] == 1.0
        for loc in automaton.locations for i in comp
    )
    return "clock" if clock else "rest"


def classify(automaton: HybridAutomaton, mode: str,
             unsafe: UnsafeSpec | None = None) -> VariablePartition:
    """Partition the variables for the requested decomposition mode.

    Modes: `none` (single sub-space), `timed` (clocks split off),
    `discrete` (derivative-0 variables split off), `all` (both), and
    `components` (every connected component on its own).
    """
    n = automaton.dim
    if mode == "none":
        return VariablePartition(n, (SubSpace("rest", tuple(range(n))),))

    adj = dependency_graph(automaton, unsafe)
    tagged = [(comp, _component_tag(automaton, comp))
              for comp in _connected_components(adj)]

    if mode == "components":
        subs = [SubSpace(tag, tuple(comp)) for comp, tag in tagged]
        return VariablePartition(n, tuple(subs))

    want_disc = mode in ("discrete", "all")
    want_clock = mode in ("timed", "all")
    if not (want_disc or want_clock):
        raise ValueError(f"unknown decomposition mode {mode!r}")

    disc, clock, rest = [], [], []
    for comp, tag in tagged:
        if tag == "disc" and want_disc:
            disc.extend(comp)
        elif tag == "clock" and want_clock:
            clock.extend(comp)
        else:
            rest.extend(comp)
    subs = []
    if disc:
        subs.append(SubSpace("disc", tuple(sorted(disc))))
    if clock:
        subs.append(SubSpace("clock", tuple(sorted(clock))))
    if rest:
        subs.append(SubSpace("rest", tuple(sorted(rest))))
    return VariablePartition(n, tuple(subs))


def split_condition(cond: Condition, partition: VariablePartition,
                    what: str) -> tuple[Condition, ...]:
    """Assign every condition row to the sub-space owning its support."""
    n = partition.dim
    per_sub: list[tuple[list, list]] = [([], []) for _ in partition.subspaces]
    for row, bound in zip(cond.c_matrix, cond.d_vector):
        (support,) = np.nonzero(row)
        if support.size == 0:
            # Constant rows constrain every sub-space identically.
            for sub, (rows, bounds) in zip(partition.subspaces, per_sub):
                rows.append(np.zeros(sub.size))
                bounds.append(bound)
            continue
        owners = {partition.subspace_of(int(i)) for i in support}
        if len(owners) > 1:
            raise NotSeparableError(
                f"{what}: row couples sub-spaces {sorted(owners)}")
        (k,) = owners
        members = partition.subspaces[k].members
        rows, bounds = per_sub[k]
        rows.append(row[list(members)])
        bounds.append(bound)
    out = []
    for sub, (rows, bounds) in zip(partition.subspaces, per_sub):
        if rows:
            out.append(Condition(np.array(rows), np.array(bounds)))
        else:
            out.append(Condition.true(sub.size))
    return tuple(out)


def _split_flow(flow: AffineFlow, partition: VariablePartition,
                what: str) -> tuple[AffineFlow, ...]:
    out = []
    for k, sub in enumerate(partition.subspaces):
        idx = list(sub.members)
        for i in idx:
            (support,) = np.nonzero(flow.a_matrix[i])
            outside = [j for j in support if partition.subspace_of(int(j)) != k]
            if outside:
                raise NotSeparableError(
                    f"{what}: flow of variable {i} depends on another sub-space")
        out.append(AffineFlow(flow.a_matrix[np.ix_(idx, idx)],
                              flow.b_vector[idx]))
    return tuple(out)


def _split_reset(reset: AffineReset, partition: VariablePartition,
                 what: str) -> tuple[AffineReset, ...]:
    out = []
    for k, sub in enumerate(partition.subspaces):
        idx = list(sub.members)
        for i in idx:
            (support,) = np.nonzero(reset.a_matrix[i])
            outside = [j for j in support if partition.subspace_of(int(j)) != k]
            if outside:
                raise NotSeparableError(
                    f"{what}: reset of variable {i} reads another sub-space")
        out.append(AffineReset(reset.a_matrix[np.ix_(idx, idx)],
                               reset.c_vector[idx]))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class DecomposedAutomaton:
    """Per-sub-space slices of every flow, condition, and reset."""

    automaton: HybridAutomaton
    partition: VariablePartition
    flows: Mapping[str, tuple[AffineFlow, ...]]
    invariants: Mapping[str, tuple[Condition, ...]]
    initials: Mapping[str, tuple[Condition, ...]]
    guards: tuple[tuple[Condition, ...], ...]
    resets: tuple[tuple[AffineReset, ...], ...]

    @property
    def n_subspaces(self) -> int:
        return len(self.partition.subspaces)


def decompose(automaton: HybridAutomaton,
              partition: VariablePartition) -> DecomposedAutomaton:
    """Slice every model component along the partition.

    Raises NotSeparableError when a row couples two sub-spaces; partitions
    produced by classify never do.
    """
    flows, invariants, initials = {}, {}, {}
    for loc in automaton.locations:
        flows[loc.name] = _split_flow(loc.flow, partition, f"location {loc.name}")
        invariants[loc.name] = split_condition(loc.invariant, partition,
                                                f"invariant of {loc.name}")
    for name, cond in automaton.initial.items():
        initials[name] = split_condition(cond, partition, f"init of {name}")
    guards, resets = [], []
    for jump in automaton.jumps:
        what = f"jump {jump.source}->{jump.target}"
        guards.append(split_condition(jump.guard, partition, f"guard of {what}"))
        resets.append(_split_reset(jump.reset, partition, f"reset of {what}"))
    return DecomposedAutomaton(automaton, partition, flows, invariants,
                               initials, tuple(guards), tuple(resets))


def projective_of(state: StateSet,
                  partition: VariablePartition) -> list[StateSet]:
    """Projections of a state set onto each sub-space, in partition order."""
    return [state.project(list(sub.members)) for sub in partition.subspaces]
