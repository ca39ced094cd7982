"""Dense linear-algebra kernel: matrix exponential, norms, and a small LP layer.

All functions are pure and operate on plain numpy arrays (float64).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class DimensionError(ValueError):
    """Operand shapes do not line up."""


def inf_norm(a: np.ndarray) -> float:
    """Matrix infinity norm: max over rows of the sum of absolute entries."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    if a.ndim == 1:
        return float(np.abs(a).max()) if a.size else 0.0
    return float(np.abs(a).sum(axis=1).max())


def mat_exp(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^{tA} by scaling-and-squaring over a Taylor core.

    The scaled matrix has infinity norm <= 0.5, so the 24-term series is
    accurate to far below 1e-12 relative error for ||tA||_inf <= 10.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix exponential needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    m = a * t
    norm = inf_norm(m)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        m = m / (2.0 ** squarings)
    # Horner evaluation of sum_{k<=24} M^k / k!
    ident = np.eye(n)
    result = ident.copy()
    for k in range(24, 0, -1):
        result = ident + (m @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result


def homogenize(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Embed affine dynamics x' = Ax + b into the (d+1)-dim linear system."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d) or b.shape != (d,):
        raise DimensionError("homogenize needs a (d,d) matrix and a d-vector")
    out = np.zeros((d + 1, d + 1))
    out[:d, :d] = a
    out[:d, d] = b
    return out


def affine_step(a: np.ndarray, b: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """One-step affine map (M, v) with x(delta) = M x(0) + v for x' = Ax + b."""
    d = np.asarray(a).shape[0]
    full = mat_exp(homogenize(a, b), delta)
    return full[:d, :d], full[:d, d]


@dataclass(frozen=True)
class LinearProgram:
    """maximize objective . x  subject to  C x <= d."""

    c_matrix: np.ndarray
    d_vector: np.ndarray
    objective: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c_matrix, dtype=float))
        d = np.asarray(self.d_vector, dtype=float).ravel()
        obj = np.asarray(self.objective, dtype=float).ravel()
        if c.size == 0:
            c = c.reshape(0, obj.shape[0])
        if c.shape[0] != d.shape[0]:
            raise DimensionError("constraint matrix and bound vector disagree on row count")
        if c.shape[1] != obj.shape[0]:
            raise DimensionError("objective dimension does not match constraint columns")
        object.__setattr__(self, "c_matrix", c)
        object.__setattr__(self, "d_vector", d)
        object.__setattr__(self, "objective", obj)


@dataclass(frozen=True)
class LpOptimum:
    value: float
    point: np.ndarray


@dataclass(frozen=True)
class LpInfeasible:
    pass


@dataclass(frozen=True)
class LpUnbounded:
    pass


def lp_optimize(lp: LinearProgram) -> LpOptimum | LpInfeasible | LpUnbounded:
    """Solve the LP, returning an exact verdict class."""
    n = lp.objective.shape[0]
    if lp.c_matrix.shape[0] == 0:
        if np.allclose(lp.objective, 0.0):
            return LpOptimum(0.0, np.zeros(n))
        return LpUnbounded()
    res = linprog(
        -lp.objective,
        A_ub=lp.c_matrix,
        b_ub=lp.d_vector,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status == 2:
        # HiGHS presolve can label an unbounded problem infeasible; a second
        # pass without presolve separates the two verdicts.
        res = linprog(
            -lp.objective,
            A_ub=lp.c_matrix,
            b_ub=lp.d_vector,
            bounds=[(None, None)] * n,
            method="highs",
            options={"presolve": False},
        )
        if res.status == 2:
            return LpInfeasible()
    if res.status == 3:
        return LpUnbounded()
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    return LpOptimum(float(-res.fun), np.asarray(res.x, dtype=float))


def lp_feasible(c_matrix: np.ndarray, d_vector: np.ndarray) -> bool:
    """Feasibility of C x <= d."""
    c = np.atleast_2d(np.asarray(c_matrix, dtype=float))
    d = np.asarray(d_vector, dtype=float).ravel()
    if c.shape[0] == 0:
        return True
    n = c.shape[1]
    if n == 0:
        # Zero-dimensional space: feasible iff no bound is violated by the
        # empty product point.
        return bool(np.all(d >= -1e-12))
    res = linprog(
        np.zeros(n),
        A_ub=c,
        b_ub=d,
        bounds=[(None, None)] * n,
        method="highs",
    )
    return res.status == 0
