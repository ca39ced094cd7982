"""Convex state sets behind one interface: boxes, H-polytopes, and lazy
support-function trees, plus template evaluation, aggregation and conversion.

All sets are immutable after construction.  Support-function trees share
children by reference; evaluation is pure, so concurrent reads are safe.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError, lp_feasible, LinearProgram, LpInfeasible, LpOptimum, LpUnbounded, lp_optimize

TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometric operation (e.g. support of the empty set)."""


# ---------------------------------------------------------------------------
# Conditions and template directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    """Linear predicate C x <= d.  An empty row list means 'true'."""

    c_matrix: np.ndarray
    d_vector: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c_matrix, dtype=float))
        d = np.asarray(self.d_vector, dtype=float).ravel()
        if c.shape[0] != d.shape[0]:
            raise DimensionError("condition rows and bounds disagree")
        object.__setattr__(self, "c_matrix", c)
        object.__setattr__(self, "d_vector", d)

    @staticmethod
    def true(dim: int) -> "Condition":
        return Condition(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.c_matrix.shape[1]

    @property
    def is_true(self) -> bool:
        return self.c_matrix.shape[0] == 0

    def conjoin(self, other: "Condition") -> "Condition":
        if self.dim != other.dim:
            raise DimensionError("cannot conjoin conditions of different dimension")
        return Condition(
            np.vstack([self.c_matrix, other.c_matrix]),
            np.concatenate([self.d_vector, other.d_vector]),
        )

    def restrict(self, dims) -> "Condition":
        """Keep only the rows whose support lies inside `dims`, re-indexed."""
        dims = list(dims)
        keep = []
        for i, row in enumerate(self.c_matrix):
            support = np.nonzero(row)[0]
            if all(j in dims for j in support):
                keep.append(i)
        return Condition(self.c_matrix[keep][:, dims], self.d_vector[keep])


def box_directions(dim: int) -> np.ndarray:
    """The 2d axis directions, arranged [+e_0..+e_{d-1}, -e_0..-e_{d-1}]."""
    eye = np.eye(dim)
    return np.vstack([eye, -eye])


def octagonal_directions(dim: int) -> np.ndarray:
    """Octagonal template: {+-e_i} plus all normalized (+-e_i +- e_j), i<j.

    In two dimensions this is the regular octagon; in d dimensions it has
    2d + 2d(d-1) directions and always contains the box directions.
    """
    base = [np.eye(dim)[i] for i in range(dim)]
    inv = 1.0 / np.sqrt(2.0)
    for i, j in itertools.combinations(range(dim), 2):
        for si, sj in ((1, 1), (1, -1)):
            v = np.zeros(dim)
            v[i] = si * inv
            v[j] = sj * inv
            base.append(v)
    base = np.array(base)
    return np.vstack([base, -base])


# ---------------------------------------------------------------------------
# State sets
# ---------------------------------------------------------------------------

class StateSet:
    """Common interface of all convex state-set representations."""

    dim: int

    # -- representation-specific hooks -------------------------------------
    def support_batch(self, dirs: np.ndarray) -> np.ndarray:
        """Support values for a (k, dim) array of directions.

        Returns +inf for unbounded directions and -inf when the set is
        empty; never raises.
        """
        raise NotImplementedError

    def is_empty(self) -> bool:
        raise NotImplementedError

    def contains_point(self, x, tol: float = TOL) -> bool:
        """Membership up to the template relaxation (sound outer check)."""
        x = np.asarray(x, dtype=float)
        dirs = octagonal_directions(self.dim)
        sup = self.support_batch(dirs)
        return bool(np.all(dirs @ x <= sup + tol))

    # -- generic operations (lazy tree fallbacks) ---------------------------
    def support(self, direction) -> float:
        d = np.asarray(direction, dtype=float).ravel()
        if d.shape[0] != self.dim:
            raise DimensionError("direction dimension mismatch")
        if self.is_empty():
            raise GeometryError("support of the empty set is undefined")
        return float(self.support_batch(d[None, :])[0])

    def affine_map(self, m, v=None) -> "StateSet":
        m, v = _check_affine(self.dim, m, v)
        return SfAffine(m, v, self)

    def minkowski_sum(self, other: "StateSet") -> "StateSet":
        _check_same_dim(self, other)
        return SfSum(self, other)

    def hull_union(self, other: "StateSet") -> "StateSet":
        _check_same_dim(self, other)
        return SfHull(self, other)

    def intersect(self, cond: Condition) -> "StateSet":
        if cond.dim != self.dim:
            raise DimensionError("condition dimension mismatch")
        if cond.is_true:
            return self
        return SfIntersect(self, HPolytope(cond))

    def project(self, dims) -> "StateSet":
        dims = _check_dims(self.dim, dims)
        return SfProject(dims, self)


def _check_same_dim(a: StateSet, b: StateSet):
    if a.dim != b.dim:
        raise DimensionError(f"set dimensions differ: {a.dim} vs {b.dim}")


def _check_affine(dim, m, v):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[1] != dim:
        raise DimensionError("map columns must match set dimension")
    if v is None:
        v = np.zeros(m.shape[0])
    else:
        v = np.asarray(v, dtype=float).ravel()
        if v.shape[0] != m.shape[0]:
            raise DimensionError("offset dimension must match map rows")
    return m, v


def _check_dims(dim, dims):
    dims = list(dims)
    if not dims:
        raise DimensionError("projection needs at least one dimension")
    if any(not (0 <= d < dim) for d in dims):
        raise DimensionError("projection index out of range")
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise DimensionError("projection indices must be strictly increasing")
    return dims


class Box(StateSet):
    """Axis-aligned box given by per-dimension closed intervals."""

    __slots__ = ("lo", "hi", "dim")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise DimensionError("box bounds disagree on dimension")
        self.lo = lo
        self.hi = hi
        self.dim = lo.shape[0]

    @staticmethod
    def empty(dim: int) -> "Box":
        return Box(np.full(dim, np.inf), np.full(dim, -np.inf))

    @staticmethod
    def point(x) -> "Box":
        x = np.asarray(x, dtype=float)
        return Box(x, x)

    def is_empty(self) -> bool:
        return bool(np.any(self.lo > self.hi))

    def support_batch(self, dirs):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        if self.is_empty():
            return np.full(dirs.shape[0], -np.inf)
        # Masking before the product keeps 0 * inf out of unbounded boxes.
        hi_part = dirs * np.where(dirs > 0, self.hi, 0.0)
        lo_part = dirs * np.where(dirs < 0, self.lo, 0.0)
        return (hi_part + lo_part).sum(axis=1)

    def contains_point(self, x, tol: float = TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def affine_map(self, m, v=None) -> "Box":
        # Interval-arithmetic image; exact when the map is diagonal.
        m, v = _check_affine(self.dim, m, v)
        if self.is_empty():
            return Box.empty(m.shape[0])
        center = (self.lo + self.hi) / 2.0
        radius = (self.hi - self.lo) / 2.0
        c = m @ center + v
        r = np.abs(m) @ radius
        return Box(c - r, c + r)

    def minkowski_sum(self, other):
        _check_same_dim(self, other)
        if isinstance(other, Box):
            if self.is_empty() or other.is_empty():
                return Box.empty(self.dim)
            return Box(self.lo + other.lo, self.hi + other.hi)
        return super().minkowski_sum(other)

    def intersect(self, cond: Condition):
        if cond.dim != self.dim:
            raise DimensionError("condition dimension mismatch")
        if self.is_empty():
            return self
        lo, hi = self.lo.copy(), self.hi.copy()
        general_rows = []
        for row, bound in zip(cond.c_matrix, cond.d_vector):
            support = np.nonzero(row)[0]
            if support.shape[0] == 0:
                if bound < -TOL:
                    return Box.empty(self.dim)
                continue
            if support.shape[0] == 1:
                j = support[0]
                coeff = row[j]
                if coeff > 0:
                    hi[j] = min(hi[j], bound / coeff)
                else:
                    lo[j] = max(lo[j], bound / coeff)
            else:
                general_rows.append((row, bound))
        clipped = Box(lo, hi)
        if not general_rows:
            return clipped
        if clipped.is_empty():
            return Box.empty(self.dim)
        extra = Condition(
            np.array([r for r, _ in general_rows]),
            np.array([b for _, b in general_rows]),
        )
        return HPolytope(clipped.to_condition().conjoin(extra))

    def project(self, dims) -> "Box":
        dims = _check_dims(self.dim, dims)
        return Box(self.lo[dims], self.hi[dims])

    def to_condition(self) -> Condition:
        eye = np.eye(self.dim)
        return Condition(np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo]))

    def widen(self, radius: float) -> "Box":
        """Symmetric bloating by a constant radius in every dimension."""
        if self.is_empty():
            return self
        return Box(self.lo - radius, self.hi + radius)

    def __repr__(self):
        if self.is_empty():
            return f"Box.empty({self.dim})"
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"


class HPolytope(StateSet):
    """Convex polyhedron in halfspace representation C x <= d."""

    def __init__(self, condition: Condition, d_vector=None):
        if not isinstance(condition, Condition):
            condition = Condition(condition, d_vector)
        self.condition = condition
        self.dim = condition.dim
        self._empty: bool | None = None
        self._support_cache: dict[bytes, float] = {}

    @staticmethod
    def empty_set(dim: int) -> "HPolytope":
        return HPolytope(Condition(np.zeros((1, dim)), np.array([-1.0])))

    @staticmethod
    def from_box(box: Box) -> "HPolytope":
        if box.is_empty():
            return HPolytope.empty_set(box.dim)
        return HPolytope(box.to_condition())

    @property
    def c_matrix(self):
        return self.condition.c_matrix

    @property
    def d_vector(self):
        return self.condition.d_vector

    def is_empty(self) -> bool:
        if self._empty is None:
            self._empty = not lp_feasible(self.c_matrix, self.d_vector)
        return self._empty

    def support_batch(self, dirs):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        if self.is_empty():
            return np.full(dirs.shape[0], -np.inf)
        out = np.empty(dirs.shape[0])
        for i, d in enumerate(dirs):
            key = d.tobytes()
            val = self._support_cache.get(key)
            if val is None:
                val = self._support_one(d)
                self._support_cache[key] = val
            out[i] = val
        return out

    def _support_one(self, direction):
        res = lp_optimize(LinearProgram(self.c_matrix, self.d_vector, direction))
        if isinstance(res, LpOptimum):
            return res.value
        if isinstance(res, LpUnbounded):
            return np.inf
        # Infeasible cannot happen here: emptiness was checked.
        return -np.inf

    def contains_point(self, x, tol: float = TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.c_matrix @ x <= self.d_vector + tol))

    def affine_map(self, m, v=None):
        m, v = _check_affine(self.dim, m, v)
        if m.shape[0] == m.shape[1]:
            det = np.linalg.det(m)
            if abs(det) > 1e-12:
                inv = np.linalg.inv(m)
                rows = self.c_matrix @ inv
                return HPolytope(Condition(rows, self.d_vector + rows @ v))
        return SfAffine(m, v, self)

    def intersect(self, cond: Condition):
        if cond.dim != self.dim:
            raise DimensionError("condition dimension mismatch")
        if cond.is_true:
            return self
        return HPolytope(self.condition.conjoin(cond))

    def __repr__(self):
        return f"HPolytope({self.c_matrix.shape[0]} halfspaces, dim={self.dim})"


# ---------------------------------------------------------------------------
# Lazy support-function tree nodes
# ---------------------------------------------------------------------------

class SfNode(StateSet):
    """Base of the lazy operation tree; children are immutable StateSets."""

    _empty: bool | None

    def __init__(self):
        self._empty = None

    def children(self):
        raise NotImplementedError

    def _has_hull(self) -> bool:
        if isinstance(self, SfHull):
            return True
        return any(c._has_hull() if isinstance(c, SfNode) else False for c in self.children())

    def is_empty(self) -> bool:
        if self._empty is None:
            if self._has_hull():
                self._empty = self._template_empty()
            else:
                blocks = _FlattenState()
                out = _flatten(self, blocks)
                if out is None:
                    self._empty = self._template_empty()
                else:
                    self._empty = not blocks.feasible(out)
        return self._empty

    def _template_empty(self) -> bool:
        # Sound but incomplete: the set is declared empty only when some
        # opposite direction pair certifies an empty support interval.
        dirs = box_directions(self.dim)
        sup = self.support_batch(dirs)
        if np.any(np.isneginf(sup)):
            return True
        half = self.dim
        return bool(np.any(sup[:half] + sup[half:] < -TOL))


class SfLeaf(SfNode):
    """Explicit wrapper marking a concrete set as a support-function value."""

    def __init__(self, base: StateSet):
        super().__init__()
        self.base = base
        self.dim = base.dim

    def children(self):
        return (self.base,)

    def support_batch(self, dirs):
        return self.base.support_batch(dirs)

    def is_empty(self):
        return self.base.is_empty()


class SfAffine(SfNode):
    def __init__(self, m, v, child: StateSet):
        super().__init__()
        # Compose chained affine maps to keep trees shallow.
        if isinstance(child, SfAffine):
            m2 = np.asarray(m) @ child.m
            v2 = np.asarray(m) @ child.v + v
            m, v, child = m2, v2, child.child
        self.m = np.asarray(m, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.child = child
        self.dim = self.m.shape[0]

    def children(self):
        return (self.child,)

    def support_batch(self, dirs):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        inner = self.child.support_batch(dirs @ self.m)
        with np.errstate(invalid="ignore"):
            out = inner + dirs @ self.v
        out[np.isneginf(inner)] = -np.inf
        return out


class SfSum(SfNode):
    def __init__(self, left: StateSet, right: StateSet):
        super().__init__()
        self.left, self.right = left, right
        self.dim = left.dim

    def children(self):
        return (self.left, self.right)

    def support_batch(self, dirs):
        a = self.left.support_batch(dirs)
        b = self.right.support_batch(dirs)
        with np.errstate(invalid="ignore"):
            out = a + b
        out[np.isneginf(a) | np.isneginf(b)] = -np.inf
        return out


class SfHull(SfNode):
    def __init__(self, left: StateSet, right: StateSet):
        super().__init__()
        self.left, self.right = left, right
        self.dim = left.dim

    def children(self):
        return (self.left, self.right)

    def support_batch(self, dirs):
        return np.maximum(self.left.support_batch(dirs), self.right.support_batch(dirs))


class SfIntersect(SfNode):
    """Intersection with the standard min-of-supports over-approximation."""

    def __init__(self, left: StateSet, right: StateSet):
        super().__init__()
        self.left, self.right = left, right
        self.dim = left.dim

    def children(self):
        return (self.left, self.right)

    def support_batch(self, dirs):
        return np.minimum(self.left.support_batch(dirs), self.right.support_batch(dirs))


class SfProject(SfNode):
    def __init__(self, dims, child: StateSet):
        super().__init__()
        self.dims = list(dims)
        self.child = child
        self.dim = len(self.dims)

    def children(self):
        return (self.child,)

    def support_batch(self, dirs):
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        lifted = np.zeros((dirs.shape[0], self.child.dim))
        lifted[:, self.dims] = dirs
        return self.child.support_batch(lifted)


# ---------------------------------------------------------------------------
# Exact emptiness by flattening the tree into one LP
# ---------------------------------------------------------------------------

class _FlattenState:
    """Accumulates auxiliary variables and constraints during flattening."""

    def __init__(self):
        self.n_vars = 0
        self.rows = []        # (coeff-dict over var index, bound)
        self.infeasible = False

    def new_vars(self, k):
        start = self.n_vars
        self.n_vars += k
        return start

    def add_rows(self, c, offset, d):
        for row, bound in zip(c, d):
            self.rows.append((offset, row, bound))

    def feasible(self, out):
        if self.infeasible:
            return False
        if not self.rows:
            return True
        n = self.n_vars
        mat = np.zeros((len(self.rows), n))
        rhs = np.empty(len(self.rows))
        for i, (offset, row, bound) in enumerate(self.rows):
            mat[i, offset:offset + row.shape[0]] = row
            rhs[i] = bound
        return lp_feasible(mat, rhs)


def _flatten(node: StateSet, state: _FlattenState):
    """Return (E, f) with set = {E z + f | constraints on z}, or None."""
    if isinstance(node, Box):
        if node.is_empty():
            state.infeasible = True
        start = state.new_vars(node.dim)
        eye = np.eye(node.dim)
        cond = node.to_condition()
        state.add_rows(cond.c_matrix, start, cond.d_vector)
        e = np.zeros((node.dim, state.n_vars))
        e[:, start:start + node.dim] = eye
        return e, np.zeros(node.dim)
    if isinstance(node, HPolytope):
        start = state.new_vars(node.dim)
        state.add_rows(node.c_matrix, start, node.d_vector)
        e = np.zeros((node.dim, state.n_vars))
        e[:, start:start + node.dim] = np.eye(node.dim)
        return e, np.zeros(node.dim)
    if isinstance(node, SfLeaf):
        return _flatten(node.base, state)
    if isinstance(node, SfAffine):
        sub = _flatten(node.child, state)
        if sub is None:
            return None
        e, f = sub
        return node.m @ _pad(e, state.n_vars), node.m @ f + node.v
    if isinstance(node, SfProject):
        sub = _flatten(node.child, state)
        if sub is None:
            return None
        e, f = sub
        return _pad(e, state.n_vars)[node.dims], f[node.dims]
    if isinstance(node, SfSum):
        a = _flatten(node.left, state)
        if a is None:
            return None
        b = _flatten(node.right, state)
        if b is None:
            return None
        ea, fa = a
        eb, fb = b
        return _pad(ea, state.n_vars) + _pad(eb, state.n_vars), fa + fb
    if isinstance(node, SfIntersect):
        a = _flatten(node.left, state)
        if a is None:
            return None
        b = _flatten(node.right, state)
        if b is None:
            return None
        ea, fa = a
        eb, fb = b
        ea = _pad(ea, state.n_vars)
        eb = _pad(eb, state.n_vars)
        diff = ea - eb
        rhs = fb - fa
        state.add_rows(diff, 0, rhs)
        state.add_rows(-diff, 0, -rhs)
        return ea, fa
    return None


def _pad(e: np.ndarray, n_vars: int) -> np.ndarray:
    if e.shape[1] == n_vars:
        return e
    out = np.zeros((e.shape[0], n_vars))
    out[:, :e.shape[1]] = e
    return out


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def affine_map(s: StateSet, m, v=None) -> StateSet:
    return s.affine_map(m, v)


def minkowski_sum(a: StateSet, b: StateSet) -> StateSet:
    return a.minkowski_sum(b)


def convex_hull_union(a: StateSet, b: StateSet) -> StateSet:
    return a.hull_union(b)


def intersect(s: StateSet, cond: Condition) -> StateSet:
    return s.intersect(cond)


def project(s: StateSet, dims) -> StateSet:
    return s.project(dims)


def is_empty(s: StateSet) -> bool:
    return s.is_empty()


def support(s: StateSet, direction) -> float:
    return s.support(direction)


def template_eval(s: StateSet, dirs: np.ndarray) -> HPolytope:
    """Template over-approximation {x | t_i . x <= support(s, t_i)}."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if dirs.shape[1] != s.dim:
        raise DimensionError("template directions dimension mismatch")
    sup = s.support_batch(dirs)
    if np.any(np.isneginf(sup)):
        return HPolytope.empty_set(s.dim)
    keep = np.isfinite(sup)
    return HPolytope(Condition(dirs[keep], sup[keep]))


def aggregate(sets: list[StateSet]) -> HPolytope:
    """Template hull of a non-empty list: support = max over members."""
    if not sets:
        raise GeometryError("aggregate needs at least one set")
    dim = sets[0].dim
    for s in sets[1:]:
        if s.dim != dim:
            raise DimensionError("aggregate inputs must share a dimension")
    dirs = octagonal_directions(dim)
    sup = np.full(dirs.shape[0], -np.inf)
    for s in sets:
        sup = np.maximum(sup, s.support_batch(dirs))
    if np.any(np.isneginf(sup)):
        return HPolytope.empty_set(dim)
    keep = np.isfinite(sup)
    return HPolytope(Condition(dirs[keep], sup[keep]))


def variant_of(s: StateSet) -> str:
    if isinstance(s, Box):
        return "box"
    if isinstance(s, HPolytope):
        return "hpoly"
    return "sf"


def convert(s: StateSet, target: str) -> StateSet:
    """Convert to the target variant; over-approximates where necessary."""
    if target == variant_of(s):
        return s
    if target == "box":
        dirs = box_directions(s.dim)
        sup = s.support_batch(dirs)
        if np.any(np.isneginf(sup)) or s.is_empty():
            return Box.empty(s.dim)
        return Box(-sup[s.dim:], sup[:s.dim])
    if target == "hpoly":
        if isinstance(s, Box):
            return HPolytope.from_box(s)
        return template_eval(s, octagonal_directions(s.dim))
    if target == "sf":
        return SfLeaf(s)
    raise ValueError(f"unknown target variant {target!r}")
