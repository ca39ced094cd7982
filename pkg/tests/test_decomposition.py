import itertools

import numpy as np
import pytest

from flowreach.automaton import (
    AffineFlow,
    AffineReset,
    HybridAutomaton,
    Jump,
    Location,
    UnsafeSpec,
)
from flowreach.decomposition import (
    NotSeparableError,
    SubSpace,
    VariablePartition,
    classify,
    decompose,
    dependency_graph,
    projective_of,
)
from flowreach.geometry import Box, Condition, HPolytope
from oracles import box_vertices, support_of_points


def make_automaton(n, a=None, b=None, inv=None, guard=None, reset=None, init=None):
    """Single-location, optionally self-looping automaton for graph tests."""
    a = np.zeros((n, n)) if a is None else np.asarray(a, dtype=float)
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    inv = inv if inv is not None else Condition.true(n)
    init = init if init is not None else Condition.true(n)
    loc = Location("l", AffineFlow(a, b), inv)
    jumps = ()
    if guard is not None or reset is not None:
        jumps = (Jump("l", "l",
                      guard if guard is not None else Condition.true(n),
                      reset if reset is not None else AffineReset.identity(n)),)
    return HybridAutomaton(tuple(f"x{i}" for i in range(n)), (loc,), jumps,
                           {"l": init})


def oracle_graph(automaton, unsafe=None):
    """Re-check every matrix entry and condition row with plain loops."""
    n = automaton.dim
    adj = np.zeros((n, n), dtype=bool)
    conds = [loc.invariant for loc in automaton.locations]
    conds += [j.guard for j in automaton.jumps]
    conds += list(automaton.initial.values())
    if unsafe is not None:
        conds += list(unsafe.conditions.values())
    mats = [loc.flow.a_matrix for loc in automaton.locations]
    mats += [j.reset.a_matrix for j in automaton.jumps]
    for i, j in itertools.combinations(range(n), 2):
        hit = any(m[i, j] != 0 or m[j, i] != 0 for m in mats)
        hit = hit or any(row[i] != 0 and row[j] != 0
                         for c in conds for row in c.c_matrix)
        adj[i, j] = adj[j, i] = hit
    return adj


class TestDependencyGraph:
    def test_diagonal_flows_axis_aligned_conditions_edgeless(self):
        h = make_automaton(
            3,
            a=np.diag([1.0, 2.0, 3.0]),
            inv=Condition(np.array([[1.0, 0, 0], [0, 0, -1.0]]), np.array([5.0, 0.0])),
        )
        assert not dependency_graph(h).any()

    def test_guard_co_occurrence(self):
        guard = Condition(np.array([[1.0, 1.0, 0.0]]), np.array([1.0]))
        adj = dependency_graph(make_automaton(3, guard=guard))
        assert adj[0, 1] and adj[1, 0]
        assert not adj[0, 2] and not adj[2, 2]

    def test_flow_coupling(self):
        a = np.zeros((3, 3))
        a[0, 2] = 0.5
        adj = dependency_graph(make_automaton(3, a=a))
        assert adj[0, 2] and adj[2, 0] and not adj[0, 1]

    def test_reset_from_other_variable(self):
        reset_a = np.eye(3)
        reset_a[1, 0] = 1.0  # x1 := x0 + x1
        adj = dependency_graph(make_automaton(3, reset=AffineReset(reset_a, np.zeros(3))))
        assert adj[0, 1] and not adj[0, 2]

    def test_unsafe_rows_participate(self):
        h = make_automaton(3)
        unsafe = UnsafeSpec({"*": Condition(np.array([[1.0, 0, 1.0]]), np.array([1.0]))})
        assert not dependency_graph(h).any()
        assert dependency_graph(h, unsafe)[0, 2]

    def test_block_diagonal_matches_entrywise_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            a = np.zeros((4, 4))
            a[:2, :2] = rng.uniform(-1, 1, (2, 2))
            a[2:, 2:] = rng.uniform(-1, 1, (2, 2))
            rows = np.zeros((2, 4))
            rows[0, :2] = rng.uniform(-1, 1, 2)
            rows[1, 2:] = rng.uniform(-1, 1, 2)
            h = make_automaton(4, a=a, inv=Condition(rows, np.ones(2)))
            got = dependency_graph(h)
            assert np.array_equal(got, oracle_graph(h))
            # Exactly the two intra-block cliques.
            want = np.zeros((4, 4), dtype=bool)
            want[:2, :2] = a[:2, :2] != 0
            want[2:, 2:] = a[2:, 2:] != 0
            want |= want.T
            want[0, 1] = want[1, 0] = True
            want[2, 3] = want[3, 2] = True
            np.fill_diagonal(want, False)
            assert np.array_equal(got, want)


class TestClassify:
    def build_mixed(self):
        # x0: disc, x1: clock, x2: rest (self-coupled flow)
        a = np.zeros((3, 3))
        a[2, 2] = -1.0
        b = np.array([0.0, 1.0, 2.0])
        return make_automaton(3, a=a, b=b)

    def test_mode_none_single_subspace(self):
        p = classify(self.build_mixed(), "none")
        assert len(p.subspaces) == 1
        assert p.subspaces[0].members == (0, 1, 2)
        assert p.sizes() == (0, 0, 3)

    def test_mode_all_three_way(self):
        p = classify(self.build_mixed(), "all")
        tags = {s.tag: s.members for s in p.subspaces}
        assert tags == {"disc": (0,), "clock": (1,), "rest": (2,)}
        assert p.sizes() == (1, 1, 1)

    def test_mode_timed_keeps_disc_in_rest(self):
        p = classify(self.build_mixed(), "timed")
        tags = {s.tag: s.members for s in p.subspaces}
        assert tags == {"clock": (1,), "rest": (0, 2)}

    def test_mode_discrete_keeps_clock_in_rest(self):
        p = classify(self.build_mixed(), "discrete")
        tags = {s.tag: s.members for s in p.subspaces}
        assert tags == {"disc": (0,), "rest": (1, 2)}

    def test_coupled_clock_loses_clock_status_only_if_flow_differs(self):
        # Two clocks linked by a guard stay clocks, merged into one sub-space.
        guard = Condition(np.array([[1.0, -1.0, 0.0]]), np.array([0.0]))
        h = make_automaton(3, b=np.array([1.0, 1.0, 0.0]), guard=guard)
        p = classify(h, "all")
        tags = {s.tag: s.members for s in p.subspaces}
        assert tags == {"clock": (0, 1), "disc": (2,)}

    def test_disc_coupled_to_rest_becomes_rest(self):
        a = np.zeros((2, 2))
        a[1, 0] = 1.0  # x1' = x0, x0' = 0: coupling drags x0 into rest
        p = classify(make_automaton(2, a=a), "all")
        assert [s.tag for s in p.subspaces] == ["rest"]
        assert p.sizes() == (0, 0, 2)

    def test_mode_components_granularity(self):
        h = make_automaton(3, b=np.array([0.0, 0.0, 1.0]))
        p = classify(h, "components")
        assert len(p.subspaces) == 3
        assert p.sizes() == (2, 1, 0)


class TestDecompose:
    def test_edgeless_two_var_recomposition(self):
        a = np.diag([2.0, -1.0])
        b = np.array([0.5, 3.0])
        inv = Condition(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([4.0, 5.0]))
        h = make_automaton(2, a=a, b=b, inv=inv)
        p = VariablePartition(2, (SubSpace("rest", (0,)), SubSpace("rest", (1,))))
        d = decompose(h, p)
        f0, f1 = d.flows["l"]
        assert f0.a_matrix[0, 0] == 2.0 and f0.b_vector[0] == 0.5
        assert f1.a_matrix[0, 0] == -1.0 and f1.b_vector[0] == 3.0
        i0, i1 = d.invariants["l"]
        assert i0.c_matrix.tolist() == [[1.0]] and i0.d_vector.tolist() == [4.0]
        assert i1.c_matrix.tolist() == [[1.0]] and i1.d_vector.tolist() == [5.0]

    def test_hand_partition_violating_guard_raises(self):
        guard = Condition(np.array([[1.0, 1.0]]), np.array([1.0]))
        h = make_automaton(2, guard=guard)
        p = VariablePartition(2, (SubSpace("rest", (0,)), SubSpace("rest", (1,))))
        with pytest.raises(NotSeparableError):
            decompose(h, p)

    def test_cross_subspace_flow_raises(self):
        a = np.zeros((2, 2))
        a[0, 1] = 1.0
        h = make_automaton(2, a=a)
        p = VariablePartition(2, (SubSpace("rest", (0,)), SubSpace("rest", (1,))))
        with pytest.raises(NotSeparableError):
            decompose(h, p)

    def test_classify_partitions_always_decompose(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            n = 5
            a = np.zeros((n, n))
            # Random diagonal rest dynamics plus random axis-aligned rows.
            for i in rng.choice(n, size=2, replace=False):
                a[i, i] = rng.uniform(-1, 1)
            b = rng.choice([0.0, 1.0], size=n)
            rows = np.zeros((3, n))
            for r in rows:
                r[rng.integers(n)] = rng.uniform(-1, 1)
            h = make_automaton(n, a=a, b=b,
                               inv=Condition(rows, rng.uniform(0, 1, 3)))
            for mode in ("none", "timed", "discrete", "all", "components"):
                decompose(h, classify(h, mode))

    def test_guard_and_reset_slicing(self):
        guard = Condition(np.array([[0.0, 1.0]]), np.array([3.0]))
        reset_a = np.eye(2)
        reset_c = np.array([0.0, -1.0])
        h = make_automaton(2, guard=guard, reset=AffineReset(reset_a, reset_c))
        p = VariablePartition(2, (SubSpace("rest", (0,)), SubSpace("rest", (1,))))
        d = decompose(h, p)
        g0, g1 = d.guards[0]
        assert g0.is_true and g1.c_matrix.tolist() == [[1.0]]
        r0, r1 = d.resets[0]
        assert r0.is_identity and r1.c_vector.tolist() == [-1.0]


class TestProjectiveOf:
    def test_box_split_is_exact(self):
        box = Box([0.0, 2.0], [1.0, 3.0])
        p = VariablePartition(2, (SubSpace("rest", (0,)), SubSpace("rest", (1,))))
        p0, p1 = projective_of(box, p)
        assert np.allclose(p0.lo, [0]) and np.allclose(p0.hi, [1])
        assert np.allclose(p1.lo, [2]) and np.allclose(p1.hi, [3])

    def test_diagonal_segment_overapproximates(self):
        segment = HPolytope(Condition(
            np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, 0.0], [-1.0, 0.0]]),
            np.array([0.0, 0.0, 1.0, 0.0]),
        ))
        p = VariablePartition(2, (SubSpace("rest", (0,)), SubSpace("rest", (1,))))
        p0, p1 = projective_of(segment, p)
        for proj in (p0, p1):
            assert abs(proj.support([1.0]) - 1.0) < 1e-9
            assert abs(proj.support([-1.0]) - 0.0) < 1e-9
        # The corner (0, 1) is in the cross product but not on the diagonal.
        assert not segment.contains_point([0.0, 1.0], tol=1e-6)

    def test_random_polytope_matches_vertex_projection_oracle(self):
        rng = np.random.default_rng(37)
        p = VariablePartition(3, (SubSpace("rest", (0,)), SubSpace("rest", (1, 2))))
        for _ in range(10):
            lo = rng.uniform(-2, 0, 3)
            hi = lo + rng.uniform(0.5, 2, 3)
            m = rng.normal(size=(3, 3)) + 3 * np.eye(3)
            box = HPolytope.from_box(Box(lo, hi)).affine_map(m)
            verts = box_vertices(lo, hi) @ m.T
            proj0, proj1 = projective_of(box, p)
            assert abs(proj0.support([1.0]) - support_of_points(verts[:, :1], [1.0])) < 1e-9
            for d in ([1.0, 0.0], [0.0, -1.0], [1.0, 1.0]):
                want = support_of_points(verts[:, 1:], d)
                assert abs(proj1.support(d) - want) < 1e-9


class TestPartitionValidation:
    def test_must_cover(self):
        with pytest.raises(ValueError):
            VariablePartition(3, (SubSpace("rest", (0, 1)),))

    def test_must_be_disjoint(self):
        with pytest.raises(ValueError):
            VariablePartition(2, (SubSpace("rest", (0, 1)), SubSpace("disc", (1,))))

    def test_bad_tag(self):
        with pytest.raises(ValueError):
            SubSpace("temporal", (0,))
