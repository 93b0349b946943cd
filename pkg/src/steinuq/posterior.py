"""Log-posterior assembly and MAP training.

The (unnormalized) log posterior is ``log pi(theta) = -[ sum_i r_i(theta)^2
/ sigma_i^2 + penalty(theta) ]`` where ``r`` are observation residuals and
the penalty is ``lam ||theta||_p^p`` for p in {1, 2} (the L0 path trains
gate locations jointly with the weights instead, see ``train_map``).

One Adam implementation serves everything that optimizes or transports:
MAP descent steps subtract ``lr * adam_direction(grad loss)`` and Stein
updates add ``lr * adam_direction(phi)``, so a single-particle transport
with the identity kernel reproduces Adam ascent bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from steinuq.autodiff import NonFiniteError
from steinuq.gates import GateState, deterministic_gates, draw_gate_noise, l0_loss_terms

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_direction(m, v, t, grad):
    """One Adam moment update; returns ``(m', v', direction)``.

    The direction is ``m_hat / (sqrt(v_hat) + eps)`` and is odd in the
    gradient, so the same transform serves descent and ascent.
    """
    m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad**2
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    return m, v, m_hat / (jnp.sqrt(v_hat) + ADAM_EPS)


@dataclass(frozen=True)
class LogPosteriorModel:
    """Bundle of residual map, observation scales, and prior penalty.

    ``residual_fn(theta) -> (R,)`` must be jax-traceable.  ``prior_p`` is 1
    or 2; a zero ``prior_lambda`` turns the prior off.  ``clamp_mask``
    marks coordinates optimizers must project onto [0, inf) after every
    step (gradients themselves are not masked).
    """

    residual_fn: Callable
    sigma: np.ndarray
    prior_p: int = 2
    prior_lambda: float = 0.0
    clamp_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.prior_p not in (1, 2):
            raise ValueError("prior exponent must be 1 or 2")
        if self.prior_lambda < 0.0:
            raise ValueError("prior weight must be non-negative")
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=np.float64))
        if (self.sigma <= 0.0).any():
            raise ValueError("observation scales must be positive")

    def penalty(self, theta):
        if self.prior_lambda == 0.0:
            return 0.0 * jnp.sum(theta)
        if self.prior_p == 1:
            # sign(theta) * theta has subgradient sign(theta), with 0 at 0
            return self.prior_lambda * jnp.sum(jnp.sign(theta) * theta)
        return self.prior_lambda * jnp.sum(theta**2)

    def neg_log_density(self, theta):
        r = self.residual_fn(theta)
        return jnp.sum((r / jnp.asarray(self.sigma)) ** 2) + self.penalty(theta)

    def log_density(self, theta):
        return -self.neg_log_density(theta)

    def score(self, theta):
        return jax.grad(self.log_density)(theta)


def log_posterior(theta, model: LogPosteriorModel) -> tuple[float, np.ndarray]:
    """Value and gradient of the log posterior at ``theta``."""
    theta = jnp.asarray(theta, dtype=jnp.float64)
    val, grad = jax.value_and_grad(model.log_density)(theta)
    val = float(val)
    grad = np.asarray(grad)
    if not np.isfinite(val) or not np.all(np.isfinite(grad)):
        raise NonFiniteError("log posterior is not finite at this point")
    return val, grad


def _apply_clamp(theta, mask):
    if mask is None:
        return theta
    return jnp.where(jnp.asarray(mask), jnp.maximum(theta, 0.0), theta)


@dataclass
class MapResult:
    theta: np.ndarray  # test-time parameters (gated for L0)
    theta_bar: np.ndarray  # raw trained weights
    gate_state: GateState | None
    losses: np.ndarray


def train_map(
    model: LogPosteriorModel,
    theta0,
    lr: float = 0.005,
    epochs: int = 2000,
    record_every: int = 50,
) -> MapResult:
    """Adam descent on the negative log posterior, clamping after each step."""
    if epochs < 0:
        raise ValueError("epoch count must be non-negative")
    theta = jnp.asarray(theta0, dtype=jnp.float64)
    mask = None if model.clamp_mask is None else jnp.asarray(model.clamp_mask)

    @jax.jit
    def step(theta, m, v, t):
        loss, g = jax.value_and_grad(model.neg_log_density)(theta)
        m, v, d = adam_direction(m, v, t, g)
        theta = _apply_clamp(theta - lr * d, mask)
        return theta, m, v, loss

    m = jnp.zeros_like(theta)
    v = jnp.zeros_like(theta)
    losses = []
    for t in range(1, epochs + 1):
        theta, m, v, loss = step(theta, m, v, t)
        if t % record_every == 0 or t == epochs:
            loss = float(loss)
            if not np.isfinite(loss):
                raise NonFiniteError(f"training loss diverged at epoch {t}")
            losses.append(loss)
    out = np.asarray(theta)
    return MapResult(theta=out, theta_bar=out, gate_state=None, losses=np.asarray(losses))


def train_map_l0(
    data_loss_fn: Callable,
    n_params: int,
    lam: float,
    theta0,
    lr: float = 0.08,
    epochs: int = 2000,
    m_samples: int = 1,
    seed: int = 0,
    clamp_mask: np.ndarray | None = None,
    record_every: int = 50,
) -> MapResult:
    """Joint Adam on weights and gate locations for the L0 objective.

    Per epoch one fresh uniform draw per gate (``m_samples`` of them) feeds
    the Monte Carlo loss; the returned test-time ``theta`` folds the
    deterministic gates into the trained weights.
    """
    if lam < 0.0:
        raise ValueError("penalty weight must be non-negative")
    rng = np.random.default_rng(seed)
    state = GateState.initialize(n_params, rng)
    terms = l0_loss_terms(data_loss_fn, state)
    mask = None if clamp_mask is None else jnp.asarray(clamp_mask)

    @jax.jit
    def step(tb, la, m, v, t, U):
        def total(tb, la):
            data, pen = terms(tb, la, U)
            return data + lam * pen

        loss, (g_tb, g_la) = jax.value_and_grad(total, argnums=(0, 1))(tb, la)
        g = jnp.concatenate([g_tb, g_la])
        m, v, d = adam_direction(m, v, t, g)
        tb = _apply_clamp(tb - lr * d[:n_params], mask)
        la = la - lr * d[n_params:]
        return tb, la, m, v, loss

    tb = jnp.asarray(theta0, dtype=jnp.float64)
    la = jnp.asarray(state.log_alpha)
    m = jnp.zeros(2 * n_params)
    v = jnp.zeros(2 * n_params)
    losses = []
    for t in range(1, epochs + 1):
        U = jnp.asarray(draw_gate_noise(n_params, m_samples, rng))
        tb, la, m, v, loss = step(tb, la, m, v, t, U)
        if t % record_every == 0 or t == epochs:
            loss = float(loss)
            if not np.isfinite(loss):
                raise NonFiniteError(f"training loss diverged at epoch {t}")
            losses.append(loss)
    state.log_alpha = np.asarray(la)
    theta_bar = np.asarray(tb)
    theta = theta_bar * deterministic_gates(state)
    return MapResult(
        theta=theta, theta_bar=theta_bar, gate_state=state, losses=np.asarray(losses)
    )


# ---------------------------------------------------------------------------
# residual builders for the two physical problems


def gent_residual_model(
    spec, dataset, prior_p: int = 2, prior_lambda: float = 0.0
) -> LogPosteriorModel:
    """Stress-matching posterior for the hyperelastic ICNN."""
    from steinuq.datagen import observation_sigmas
    from steinuq.potentials import hyper_stress_fn

    Fs = jnp.asarray(dataset.inputs.reshape(-1, 3, 3))
    Y = jnp.asarray(dataset.outputs)
    stress_batch = jax.vmap(hyper_stress_fn(spec), in_axes=(None, 0))

    def residual(theta):
        S = stress_batch(theta, Fs).reshape(Y.shape)
        return (S - Y).ravel()

    sigma = observation_sigmas(dataset.outputs, dataset.noise).ravel()
    return LogPosteriorModel(
        residual_fn=residual,
        sigma=sigma,
        prior_p=prior_p,
        prior_lambda=prior_lambda,
        clamp_mask=spec.constraint_mask(),
    )


def mechchem_residual_model(
    spec, dataset, prior_p: int = 2, prior_lambda: float = 0.0
) -> LogPosteriorModel:
    """Stress-and-chemical-potential posterior for the mechanochemistry MLP."""
    from steinuq.datagen import observation_sigmas
    from steinuq.potentials import mechchem_observables_fn

    Evecs = jnp.asarray(dataset.inputs[:, :3])
    cs = jnp.asarray(dataset.inputs[:, 3])
    Y = jnp.asarray(dataset.outputs)
    obs = mechchem_observables_fn(spec)

    def one(theta, evec, c):
        S, mu = obs(theta, evec, c)
        return jnp.stack([S[0, 0], S[1, 1], S[0, 1], mu])

    batch = jax.vmap(one, in_axes=(None, 0, 0))

    def residual(theta):
        return (batch(theta, Evecs, cs) - Y).ravel()

    sigma = observation_sigmas(np.asarray(dataset.outputs), dataset.noise).ravel()
    return LogPosteriorModel(
        residual_fn=residual,
        sigma=sigma,
        prior_p=prior_p,
        prior_lambda=prior_lambda,
        clamp_mask=None,
    )


def compact_model(base: LogPosteriorModel, active_indices, n_full: int, prior_lambda: float, clamp_mask=None) -> LogPosteriorModel:
    """Posterior over the surviving coordinates of a pruned model.

    The compact vector scatters into a full vector (exact zeros elsewhere)
    before hitting the base residuals; the prior is the isotropic Gaussian
    ``lam ||theta_c||^2`` matching the L2 correspondence ``var = 1/(2 lam)``.
    """
    idx = jnp.asarray(np.asarray(active_indices, dtype=np.int64))

    def residual(theta_c):
        full = jnp.zeros(n_full).at[idx].set(theta_c)
        return base.residual_fn(full)

    mask = None
    if clamp_mask is not None:
        mask = np.asarray(clamp_mask)[np.asarray(active_indices)]
    return LogPosteriorModel(
        residual_fn=residual,
        sigma=base.sigma,
        prior_p=2,
        prior_lambda=prior_lambda,
        clamp_mask=mask,
    )
