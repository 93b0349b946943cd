"""Scalar differentiation engine used by every model in the package.

Expressions are compositions of the elementary operations exported here
(add/mul/power via jnp arithmetic, exp, log, softplus, sigmoid, clamp,
vmin/vmax) applied to an input vector and a parameter vector.  Input
sensitivities are forward-mode tangents, parameter sensitivities are
reverse-mode gradients, and the two nest (forward-over-reverse), so the
parameter gradient of an input derivative is well defined.  All evaluation
is double precision and bit-deterministic for fixed inputs.

Conventions pinned here and relied on elsewhere:

* ``softplus`` uses the stable branch (``logaddexp(x, 0)``, i.e.
  ``x + log1p(exp(-x))`` for positive ``x``) so large pre-activations do
  not overflow.
* ``vmin``/``vmax``/``clamp`` use the subgradient convention: derivative 1
  on the pass-through side, 0 on the clamped side, with ties broken to
  pass-through.  ``clamp(x, lo, hi)`` therefore has derivative 1 whenever
  ``lo <= x <= hi``, including at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np


class DomainError(ValueError):
    """An elementary operation was evaluated outside its domain."""


class UnboundLeafError(ValueError):
    """An expression referenced an input or parameter slot that was not bound."""


class NonFiniteError(FloatingPointError):
    """A gradient came back NaN or infinite."""


# ---------------------------------------------------------------------------
# elementary operations


def softplus(x):
    return jnp.logaddexp(x, 0.0)


def sigmoid(x):
    return jax.nn.sigmoid(x)


def vmax(a, b):
    """Pointwise maximum, derivative 1 on the winning side (ties to ``a``)."""
    return jnp.where(a >= b, a, b)


def vmin(a, b):
    """Pointwise minimum, derivative 1 on the winning side (ties to ``a``)."""
    return jnp.where(a <= b, a, b)


def clamp(x, lo, hi):
    """Clamp with derivative 1 anywhere ``lo <= x <= hi``, 0 outside."""
    return jnp.where(x < lo, lo, jnp.where(x > hi, hi, x))


# ---------------------------------------------------------------------------
# expression surface


@dataclass(frozen=True)
class ScalarExpr:
    """A scalar-valued expression of an input vector and a parameter vector.

    ``fn(inputs, params)`` must be built from the elementary operations
    above (plus jnp arithmetic) so that it is traceable and composable.
    Expressions are immutable and reusable across bindings.
    """

    fn: Callable
    n_inputs: int
    n_params: int


@dataclass(frozen=True)
class DualValue:
    """Primal value and directional (forward-mode) tangent."""

    value: float
    tangent: float


def _bind(expr: ScalarExpr, inputs, params):
    x = jnp.atleast_1d(jnp.asarray(inputs, dtype=jnp.float64))
    p = jnp.atleast_1d(jnp.asarray(params, dtype=jnp.float64))
    if x.shape != (expr.n_inputs,):
        raise UnboundLeafError(
            f"expression expects {expr.n_inputs} inputs, got {x.shape}"
        )
    if p.shape != (expr.n_params,):
        raise UnboundLeafError(
            f"expression expects {expr.n_params} parameters, got {p.shape}"
        )
    return x, p


def evaluate(expr: ScalarExpr, inputs, params=()) -> float:
    """Evaluate the expression at a full binding of inputs and parameters."""
    x, p = _bind(expr, inputs, params)
    val = float(expr.fn(x, p))
    if not np.isfinite(val):
        raise DomainError(f"expression evaluated to {val}")
    return val


def input_derivative(expr: ScalarExpr, inputs, params, direction: int) -> DualValue:
    """Forward-mode derivative along one input coordinate.

    The tangent seed is 1 for ``direction`` and 0 elsewhere; constants
    (and parameters) carry zero tangent.
    """
    x, p = _bind(expr, inputs, params)
    if not 0 <= direction < expr.n_inputs:
        raise UnboundLeafError(f"no input coordinate {direction}")
    seed = jnp.zeros_like(x).at[direction].set(1.0)
    val, tan = jax.jvp(lambda xx: expr.fn(xx, p), (x,), (seed,))
    val, tan = float(val), float(tan)
    if not (np.isfinite(val) and np.isfinite(tan)):
        raise DomainError(f"derivative evaluated to ({val}, {tan})")
    return DualValue(value=val, tangent=tan)


def param_gradient(expr: ScalarExpr, inputs, params) -> np.ndarray:
    """Reverse-mode gradient with respect to the full parameter vector."""
    x, p = _bind(expr, inputs, params)
    val, grad = jax.value_and_grad(lambda pp: expr.fn(x, pp))(p)
    if not np.isfinite(float(val)):
        raise DomainError(f"expression evaluated to {float(val)}")
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("parameter gradient has non-finite entries")
    return grad


def check_gradient(f: Callable, x, h: float = 1e-6) -> float:
    """Compare the analytic gradient of ``f`` against central differences.

    Returns the maximum over coordinates of
    ``|analytic - fd| / max(1, |analytic|)``.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    analytic = np.asarray(jax.grad(lambda v: f(v))(jnp.asarray(x)), dtype=np.float64)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd = (float(f(jnp.asarray(x + e))) - float(f(jnp.asarray(x - e)))) / (2 * h)
        rel = abs(analytic[i] - fd) / max(1.0, abs(analytic[i]))
        worst = max(worst, rel)
    return worst
