"""Distribution and fit metrics for posterior push-forwards.

``w1_distance`` integrates ``|F_a - F_b|`` exactly over the merged support
of two empirical distributions (piecewise-constant CDFs), which for equal
sample counts reduces to the mean absolute difference of sorted samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ConstantTargetError(ValueError):
    """R^2 is undefined when the reference values have zero variance."""


@dataclass(frozen=True)
class EmpiricalDist:
    """Sorted sample vector representing a one-dimensional empirical law."""

    samples: np.ndarray

    @classmethod
    def from_samples(cls, values) -> "EmpiricalDist":
        arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if arr.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        return cls(samples=arr)

    @property
    def n(self) -> int:
        return self.samples.size


def w1_distance(a, b) -> float:
    """Exact 1-Wasserstein distance between two empirical distributions."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("need at least one sample on each side")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    xs = np.concatenate([a, b])
    order = np.argsort(xs, kind="mergesort")
    xs_sorted = xs[order]
    # CDF difference just right of each support point
    cdf_diff = np.cumsum(np.where(order < a.size, 1.0 / a.size, -1.0 / b.size))
    gaps = np.diff(xs_sorted)
    return float(np.sum(np.abs(cdf_diff[:-1]) * gaps))


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination of predictions against references."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction and reference shapes differ")
    if y_true.size < 2:
        raise ValueError("need at least two points")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTargetError("reference values are constant")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class PushforwardResult:
    """Observable values per (input point, posterior sample), with summaries."""

    values: np.ndarray  # (n_inputs, n_samples)
    mean: np.ndarray
    std: np.ndarray


def pushforward(theta_samples, inputs, observable_batch: Callable) -> PushforwardResult:
    """Push posterior samples through an observable along a set of inputs.

    ``observable_batch(theta, inputs) -> (n_inputs,)`` evaluates one
    parameter vector on all inputs.  Standard deviation is the population
    one so a single sample reports exactly zero spread.
    """
    theta_samples = np.asarray(theta_samples, dtype=np.float64)
    if theta_samples.ndim != 2 or theta_samples.shape[0] == 0:
        raise ValueError("theta_samples must be (n_samples, n_params), non-empty")
    cols = [np.asarray(observable_batch(theta, inputs)) for theta in theta_samples]
    values = np.stack(cols, axis=1)
    return PushforwardResult(
        values=values, mean=values.mean(axis=1), std=values.std(axis=1, ddof=0)
    )


@dataclass(frozen=True)
class LCurvePoint:
    lam: float
    test_r2: float
    active_count: int


def lcurve_sweep(
    lambdas: Sequence[float], train_eval: Callable[[float], tuple[float, int]]
) -> tuple[list[LCurvePoint], float]:
    """Sweep the regularization weight and pick the sparsest near-optimal point.

    ``train_eval(lam)`` returns ``(test_r2, active_count)``; failures are
    recorded as ``-inf`` rather than aborting the sweep.  The selected
    ``lambda*`` is the largest weight whose R^2 is within 0.01 of the best.
    """
    seen, unique = set(), []
    for lam in lambdas:
        if lam < 0.0:
            raise ValueError("regularization weights must be non-negative")
        if lam not in seen:
            seen.add(lam)
            unique.append(lam)
    if not unique:
        raise ValueError("need at least one regularization weight")
    points = []
    for lam in unique:
        try:
            r2, active = train_eval(lam)
        except Exception:
            r2, active = float("-inf"), -1
        points.append(LCurvePoint(lam=lam, test_r2=r2, active_count=active))
    finite = [p.test_r2 for p in points if np.isfinite(p.test_r2)]
    if not finite:
        raise ValueError("every sweep point failed")
    best = max(finite)
    eligible = [p.lam for p in points if np.isfinite(p.test_r2) and p.test_r2 >= best - 0.01]
    return points, max(eligible)
