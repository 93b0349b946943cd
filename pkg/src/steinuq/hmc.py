"""Hamiltonian Monte Carlo baseline: leapfrog proposals with Metropolis correction.

The sampler uses an identity mass matrix, so the momentum is standard normal
and the Hamiltonian is -log pi(q) + ||p||^2 / 2.  Targets follow the same
protocol as the particle transport code: a ``log_density(theta)`` scalar and a
``score(theta)`` gradient, both accepting 1-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .svgd import PosteriorSamples

__all__ = ["HMCConfig", "leapfrog", "hamiltonian", "hmc_run"]


@dataclass(frozen=True)
class HMCConfig:
    """Chain settings: proposal geometry plus how much of the chain to keep.

    ``chain_length`` counts post-burn-in proposals; every ``thinning``-th state
    is kept, so the output holds ``chain_length // thinning`` samples.
    """

    step_size: float
    n_leapfrog: int
    chain_length: int
    burn_in: int = 0
    thinning: int = 1

    def __post_init__(self) -> None:
        if not self.step_size > 0.0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.n_leapfrog < 1:
            raise ValueError(f"n_leapfrog must be >= 1, got {self.n_leapfrog}")
        if self.chain_length < 1:
            raise ValueError(f"chain_length must be >= 1, got {self.chain_length}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.thinning < 1:
            raise ValueError(f"thinning must be >= 1, got {self.thinning}")


def leapfrog(q, p, score_fn, step_size, n_steps):
    """Integrate Hamilton's equations with the Stoermer-Verlet splitting.

    ``score_fn`` is the gradient of log pi, so the force on the momentum is
    +score.  A zero step size returns the state unchanged.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    p = p + 0.5 * step_size * np.asarray(score_fn(q), dtype=float)
    for k in range(n_steps):
        q = q + step_size * p
        if k < n_steps - 1:
            p = p + step_size * np.asarray(score_fn(q), dtype=float)
    p = p + 0.5 * step_size * np.asarray(score_fn(q), dtype=float)
    return q, p


def hamiltonian(q, p, log_density_fn) -> float:
    """Total energy -log pi(q) + kinetic term for identity mass."""
    p = np.asarray(p, dtype=float)
    return -float(log_density_fn(q)) + 0.5 * float(p @ p)


def hmc_run(target, theta0, cfg: HMCConfig, seed: int = 0) -> PosteriorSamples:
    """Run one chain and return thinned post-burn-in samples.

    A proposal whose trajectory leaves the support (non-finite energy change)
    is rejected like any other; the chain continues from the current state.
    Diagnostics carry the overall acceptance rate and per-proposal |dH|.
    """
    rng = np.random.default_rng(seed)
    q = np.array(theta0, dtype=float).ravel()
    current_logp = float(target.log_density(q))
    if not np.isfinite(current_logp):
        raise ValueError("initial state has non-finite log density")

    total = cfg.burn_in + cfg.chain_length
    kept: list[np.ndarray] = []
    abs_delta_h = np.empty(total)
    accepted = 0

    for i in range(total):
        p = rng.standard_normal(q.size)
        u = rng.uniform()
        q_new, p_new = leapfrog(q, p, target.score, cfg.step_size, cfg.n_leapfrog)
        if np.all(np.isfinite(q_new)) and np.all(np.isfinite(p_new)):
            new_logp = float(target.log_density(q_new))
            h_old = -current_logp + 0.5 * float(p @ p)
            h_new = -new_logp + 0.5 * float(p_new @ p_new)
            delta_h = h_new - h_old
        else:
            delta_h = np.inf
        abs_delta_h[i] = abs(delta_h) if np.isfinite(delta_h) else np.inf
        if np.isfinite(delta_h) and u < np.exp(min(0.0, -delta_h)):
            q = q_new
            current_logp = new_logp
            accepted += 1
        if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thinning == cfg.thinning - 1:
            kept.append(q.copy())

    samples = np.stack(kept) if kept else np.empty((0, q.size))
    return PosteriorSamples(
        samples=samples,
        method="hmc",
        iterations=total,
        diagnostics={
            "acceptance_rate": accepted / total,
            "abs_delta_h": abs_delta_h,
            "kept": len(kept),
        },
    )
