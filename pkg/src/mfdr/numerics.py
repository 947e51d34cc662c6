"""Deterministic scalar minimization and quadrature kernels.

Every schedule construction and certainty-equivalent integral in the package
reduces to two primitives: a bracketed one-dimensional minimization of a
piecewise-smooth objective (payment-rate objectives have kinks where effort
boxes start to bind) and a fixed-grid quadrature. Both are implemented once,
with bit-reproducible results: fixed evaluation layouts, fixed iteration
counts, and pairwise numpy summation, so identical inputs give identical
outputs regardless of threading or call order.

The minimizer runs a coarse scan followed by golden-section refinement and is
provided in two forms: :func:`minimize_scalar` for a single bracket and
:func:`minimize_on_grid` for a whole family of brackets at once (one per time
node), which is what the schedule builders use — the batch form is pure numpy
and orders of magnitude faster than looping the scalar form over a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "MinimizeResult",
    "minimize_scalar",
    "minimize_on_grid",
    "integrate",
    "integrate_samples",
]

#: Inverse golden ratio 1/phi, the golden-section shrink factor per iteration.
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

#: Hard cap on golden-section iterations (reached only for absurdly small tol).
_MAX_GOLDEN_ITERATIONS = 200


@dataclass(frozen=True)
class MinimizeResult:
    """Outcome of a bracketed scalar minimization.

    Attributes
    ----------
    argmin:
        Best evaluated point; lies in [lo, hi] and within the requested
        tolerance of a local minimizer of the refined bracket.
    min_value:
        Objective value at ``argmin`` (the value actually observed, not a
        re-evaluation).
    evaluations:
        Total number of objective evaluations performed.
    """

    argmin: float
    min_value: float
    evaluations: int


def _default_tol(lo: np.ndarray, hi: np.ndarray) -> float:
    """Scale-adjusted default tolerance: 1e-9 relative to the bracket scale."""
    scale = max(float(np.max(np.abs(lo))), float(np.max(np.abs(hi))))
    return 1e-9 * (1.0 + scale)


def _better(
    f_new: np.ndarray, x_new: np.ndarray, f_best: np.ndarray, x_best: np.ndarray
) -> np.ndarray:
    """Deterministic comparison: lower value wins; exact ties go to the point
    with smaller magnitude, then to the larger (rightmost) point."""
    return (f_new < f_best) | (
        (f_new == f_best)
        & (
            (np.abs(x_new) < np.abs(x_best))
            | ((np.abs(x_new) == np.abs(x_best)) & (x_new > x_best))
        )
    )


def minimize_on_grid(
    f: Callable[[np.ndarray], np.ndarray],
    lo: Sequence[float] | np.ndarray,
    hi: Sequence[float] | np.ndarray,
    tol: float | None = None,
    coarse_n: int = 256,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Minimize a family of bracketed scalar objectives simultaneously.

    Each row ``j`` carries its own bracket ``[lo[j], hi[j]]``. The objective
    ``f`` must accept an array of shape ``(n_rows, k)`` whose row ``j`` holds
    candidate points for bracket ``j``, and return values of the same shape.

    Strategy per row: a ``coarse_n``-point uniform scan (plus the point 0
    whenever the bracket spans it, so that magnitude tie-breaking can settle
    flat valleys at exactly zero), then golden-section refinement of the best
    coarse sub-bracket down to width ``tol``. The reported minimizer is the
    best point ever evaluated, with ties broken toward smaller ``|argmin|``.

    Parameters
    ----------
    f:
        Vectorized objective, shape-preserving as described above.
    lo, hi:
        Bracket endpoints, one pair per row, with ``lo < hi`` elementwise.
    tol:
        Absolute bracket-width target; defaults to 1e-9 scaled by the bracket
        magnitude.
    coarse_n:
        Number of coarse-scan points per row (>= 3).

    Returns
    -------
    (argmin, min_value, evaluations):
        Arrays of shape ``(n_rows,)`` and the total evaluation count.

    Raises
    ------
    ValueError:
        On malformed brackets or parameters.
    ArithmeticError:
        If the objective returns NaN anywhere (reported with its location).
    """
    lo_arr = np.atleast_1d(np.asarray(lo, dtype=float))
    hi_arr = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo_arr.shape != hi_arr.shape or lo_arr.ndim != 1:
        raise ValueError("lo and hi must be 1-D arrays of equal length")
    if not (np.isfinite(lo_arr).all() and np.isfinite(hi_arr).all()):
        raise ValueError("brackets must be finite")
    if not (lo_arr < hi_arr).all():
        raise ValueError("every bracket needs lo < hi")
    if coarse_n < 3:
        raise ValueError("coarse_n must be at least 3")
    if tol is None:
        tol = _default_tol(lo_arr, hi_arr)
    if not tol > 0.0:
        raise ValueError("tol must be positive")

    n_rows = lo_arr.shape[0]
    evaluations = 0

    def evaluate(points: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        values = np.asarray(f(points), dtype=float)
        if values.shape != points.shape:
            raise ValueError(
                f"objective returned shape {values.shape} for input shape {points.shape}"
            )
        if np.isnan(values).any():
            row, col = np.argwhere(np.isnan(values))[0]
            raise ArithmeticError(
                f"objective returned NaN at x={points[row, col]!r} (bracket row {row})"
            )
        evaluations += points.size
        return values

    # Coarse scan on a uniform grid with exact endpoints.
    fractions = np.linspace(0.0, 1.0, coarse_n)
    scan = lo_arr[:, None] + (hi_arr - lo_arr)[:, None] * fractions[None, :]
    scan[:, 0] = lo_arr
    scan[:, -1] = hi_arr
    scan_values = evaluate(scan)

    best_x = scan[:, 0].copy()
    best_f = scan_values[:, 0].copy()
    best_col = np.zeros(n_rows, dtype=np.intp)
    for col in range(1, coarse_n):
        take = _better(scan_values[:, col], scan[:, col], best_f, best_x)
        best_col = np.where(take, col, best_col)
        best_x = np.where(take, scan[:, col], best_x)
        best_f = np.where(take, scan_values[:, col], best_f)

    # Evaluate 0 wherever the bracket spans it (duplicate lo elsewhere; harmless).
    spans_zero = (lo_arr < 0.0) & (hi_arr > 0.0)
    if spans_zero.any():
        zero_col = np.where(spans_zero, 0.0, lo_arr)
        zero_values = evaluate(zero_col[:, None])[:, 0]
        take = _better(zero_values, zero_col, best_f, best_x)
        best_x = np.where(take, zero_col, best_x)
        best_f = np.where(take, zero_values, best_f)

    # Golden-section refinement of the best coarse sub-bracket.
    left_col = np.maximum(best_col - 1, 0)
    right_col = np.minimum(best_col + 1, coarse_n - 1)
    a = np.take_along_axis(scan, left_col[:, None], axis=1)[:, 0]
    b = np.take_along_axis(scan, right_col[:, None], axis=1)[:, 0]

    width = float(np.max(b - a))
    if width > tol:
        n_iter = min(
            _MAX_GOLDEN_ITERATIONS,
            int(math.ceil(math.log(width / tol) / -math.log(_INV_PHI))),
        )
    else:
        n_iter = 0

    if n_iter > 0:
        x1 = b - _INV_PHI * (b - a)
        x2 = a + _INV_PHI * (b - a)
        inner = evaluate(np.stack([x1, x2], axis=1))
        f1, f2 = inner[:, 0].copy(), inner[:, 1].copy()
        for x_pt, f_pt in ((x1, f1), (x2, f2)):
            take = _better(f_pt, x_pt, best_f, best_x)
            best_x = np.where(take, x_pt, best_x)
            best_f = np.where(take, f_pt, best_f)

        for _ in range(n_iter):
            take_left = f1 < f2
            a = np.where(take_left, a, x1)
            b = np.where(take_left, x2, b)
            x_keep = np.where(take_left, x1, x2)
            f_keep = np.where(take_left, f1, f2)
            span = b - a
            x_new = np.where(take_left, b - _INV_PHI * span, a + _INV_PHI * span)
            f_new = evaluate(x_new[:, None])[:, 0]
            x1 = np.where(take_left, x_new, x_keep)
            f1 = np.where(take_left, f_new, f_keep)
            x2 = np.where(take_left, x_keep, x_new)
            f2 = np.where(take_left, f_keep, f_new)
            take = _better(f_new, x_new, best_f, best_x)
            best_x = np.where(take, x_new, best_x)
            best_f = np.where(take, f_new, best_f)

    return best_x, best_f, evaluations


def minimize_scalar(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float | None = None,
    coarse_n: int = 256,
) -> MinimizeResult:
    """Minimize a scalar objective on ``[lo, hi]``.

    Single-bracket form of :func:`minimize_on_grid` (same scan, refinement,
    tie-breaking, and determinism guarantees). For continuous objectives the
    reported ``min_value`` never exceeds the best coarse-scan value, and
    ``argmin`` lies within ``tol`` of a local minimizer of the best coarse
    sub-bracket.
    """

    def batched(points: np.ndarray) -> np.ndarray:
        flat = points.reshape(-1)
        return np.array([float(f(float(x))) for x in flat]).reshape(points.shape)

    argmin, min_value, evaluations = minimize_on_grid(
        batched, [lo], [hi], tol=tol, coarse_n=coarse_n
    )
    return MinimizeResult(
        argmin=float(argmin[0]), min_value=float(min_value[0]), evaluations=evaluations
    )


def integrate_samples(values: Sequence[float] | np.ndarray, lo: float, hi: float) -> float:
    """Composite Simpson quadrature from uniformly spaced samples.

    ``values`` holds f at ``n+1`` uniform nodes spanning ``[lo, hi]`` with
    ``n`` even. Exact for polynomials up to degree 3. The weighted sum uses
    numpy pairwise summation, so the result is reproducible bit-for-bit.
    """
    samples = np.asarray(values, dtype=float)
    if samples.ndim != 1:
        raise ValueError("values must be one-dimensional")
    n_intervals = samples.shape[0] - 1
    if n_intervals < 2 or n_intervals % 2 != 0:
        raise ValueError("need an even number of intervals >= 2 (odd sample count >= 3)")
    if hi < lo:
        raise ValueError("need lo <= hi")
    if hi == lo:
        return 0.0
    weights = np.ones(samples.shape[0])
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    h = (hi - lo) / n_intervals
    return float(h / 3.0 * np.sum(weights * samples))


def integrate(
    f: Callable[[float], float], lo: float, hi: float, n_intervals: int
) -> float:
    """Composite Simpson quadrature of ``f`` over ``[lo, hi]``.

    Parameters
    ----------
    f:
        Scalar integrand, evaluated at the ``n_intervals + 1`` uniform nodes.
    lo, hi:
        Integration limits with ``lo <= hi``.
    n_intervals:
        Even number of uniform sub-intervals, >= 2.

    Raises
    ------
    ValueError:
        On malformed limits or interval counts.
    ArithmeticError:
        If the integrand returns NaN (reported with its location).
    """
    if n_intervals < 2 or n_intervals % 2 != 0:
        raise ValueError("n_intervals must be even and >= 2")
    if hi < lo:
        raise ValueError("need lo <= hi")
    if hi == lo:
        return 0.0
    nodes = np.linspace(lo, hi, n_intervals + 1)
    nodes[0] = lo
    nodes[-1] = hi
    values = np.empty(nodes.shape[0])
    for i, x in enumerate(nodes):
        y = float(f(float(x)))
        if math.isnan(y):
            raise ArithmeticError(f"integrand returned NaN at x={x!r} (node {i})")
        values[i] = y
    return integrate_samples(values, lo, hi)
