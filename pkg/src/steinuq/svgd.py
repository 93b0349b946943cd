"""Stein variational transport, full-space and subspace-projected.

The update direction for particle ``i`` in an ensemble of ``S`` particles

    phi_i = (1/S) sum_j [ k(x_j, x_i) score(x_j) + grad_{x_j} k(x_j, x_i) ]

uses the RBF kernel ``k(a, b) = exp(-||a - b||^2 / h)`` with the median
heuristic ``h = med^2 / log(S + 1)`` unless a fixed bandwidth is given.
Updates are synchronous: every phi is computed from the current ensemble
before any particle moves.  The step rule is either a per-particle Adam
transform (sharing the package-wide Adam) or plain scaling by a step size.

The projected variant transports reduced coordinates ``t = Psi^T (theta -
theta*)`` against the pulled-back posterior and reconstructs samples as
``theta = Psi t + theta* + (I - Psi Psi^T) eta`` with prior-sampled
complements ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from steinuq.posterior import LogPosteriorModel, adam_direction

BANDWIDTH_FLOOR = 1e-8


class DegenerateSpectrumError(ValueError):
    """The curvature operator has no usable spectral content."""


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel configuration; ``bandwidth=None`` selects the median rule."""

    bandwidth: float | None = None
    floor: float = BANDWIDTH_FLOOR

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0.0:
            raise ValueError("fixed bandwidth must be positive")
        if self.floor <= 0.0:
            raise ValueError("bandwidth floor must be positive")


def rbf_kernel(a, b, h: float):
    """Kernel value and its gradient in the first argument."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if h <= 0.0:
        raise ValueError("bandwidth must be positive")
    k = float(np.exp(-np.sum((a - b) ** 2) / h))
    grad_a = -(2.0 / h) * (a - b) * k
    return k, grad_a


def median_bandwidth(particles, floor: float = BANDWIDTH_FLOOR) -> float:
    """``med^2 / log(S + 1)`` over the distinct pairwise distances."""
    X = np.atleast_2d(np.asarray(particles, dtype=np.float64))
    S = X.shape[0]
    if S < 2:
        return floor
    iu = np.triu_indices(S, k=1)
    d = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))[iu]
    med = float(np.median(d))
    return max(med**2 / np.log(S + 1.0), floor)


def _phi(X, G, h):
    """Synchronous Stein directions for all particles at bandwidth ``h``."""
    S = X.shape[0]
    sq = jnp.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    K = jnp.exp(-sq / h)
    drive = K @ G / S
    repulse = (2.0 / h) * (K.sum(axis=0)[:, None] * X - K @ X) / S
    return drive + repulse


def _median_bandwidth_traced(X, floor):
    S = X.shape[0]
    if S < 2:
        return jnp.asarray(floor)
    iu = jnp.triu_indices(S, k=1)
    sq = jnp.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    med = jnp.median(jnp.sqrt(sq[iu]))
    return jnp.maximum(med**2 / jnp.log(S + 1.0), floor)


@dataclass
class ParticleEnsemble:
    """Current particle locations plus per-particle Adam moments."""

    particles: np.ndarray  # (S, P)
    iteration: int = 0
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=np.float64))

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]


def init_ensemble(center, n_particles: int, spread: float, seed: int) -> ParticleEnsemble:
    """Gaussian cloud of ``n_particles`` around ``center``."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    center = np.asarray(center, dtype=np.float64)
    rng = np.random.default_rng(seed)
    X = center[None, :] + spread * rng.standard_normal((n_particles, center.size))
    return ParticleEnsemble(particles=X)


@dataclass(frozen=True)
class StepRule:
    """``adam`` transforms phi per particle; ``plain`` scales it by ``lr``."""

    kind: str = "adam"
    lr: float = 0.05

    def __post_init__(self):
        if self.kind not in ("adam", "plain"):
            raise ValueError("step rule must be 'adam' or 'plain'")
        if self.lr <= 0.0:
            raise ValueError("step size must be positive")


@dataclass
class PosteriorSamples:
    samples: np.ndarray  # (n_samples, P)
    method: str
    iterations: int
    diagnostics: dict = field(default_factory=dict)


SAMPLES_SCHEMA = 1


def save_samples(path, samples: PosteriorSamples, seed: int = 0) -> None:
    """Line-delimited text dump: header comments, then one sample per line."""
    arr = np.asarray(samples.samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("refusing to write an empty sample set")
    lines = [
        f"# steinuq-samples schema={SAMPLES_SCHEMA}",
        f"# method={samples.method} seed={seed} iterations={samples.iterations}",
        f"# n={arr.shape[0]} dim={arr.shape[1]}",
    ]
    for row in arr:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_samples(path) -> PosteriorSamples:
    raw = Path(path).read_text().splitlines()
    if not raw or not raw[0].startswith("# steinuq-samples schema="):
        raise ValueError("missing samples header")
    schema = int(raw[0].split("=")[1])
    if schema != SAMPLES_SCHEMA:
        raise ValueError(f"samples schema {schema} unsupported (expected {SAMPLES_SCHEMA})")
    meta: dict[str, str] = {}
    body = []
    for line in raw[1:]:
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
        elif line.strip():
            body.append(np.array([float(v) for v in line.split()]))
    if not body:
        raise ValueError("samples file has no data rows")
    arr = np.vstack(body)
    n, dim = int(meta.get("n", arr.shape[0])), int(meta.get("dim", arr.shape[1]))
    if arr.shape != (n, dim):
        raise ValueError(f"expected {n}x{dim} samples, found {arr.shape[0]}x{arr.shape[1]}")
    return PosteriorSamples(
        samples=arr,
        method=meta.get("method", "unknown"),
        iterations=int(meta.get("iterations", 0)),
        diagnostics={"seed": int(meta.get("seed", 0))},
    )


def _score_batch_fn(target) -> Callable:
    """Vectorized score of either a LogPosteriorModel or an analytic target."""
    if hasattr(target, "score_batch"):
        return target.score_batch
    return jax.vmap(target.score)


def svgd_step(
    ensemble: ParticleEnsemble,
    target,
    kernel: KernelSpec = KernelSpec(),
    step: StepRule = StepRule(),
    clamp_mask: np.ndarray | None = None,
) -> ParticleEnsemble:
    """One synchronous transport step; returns the advanced ensemble."""
    out, _ = svgd_run(ensemble, target, kernel=kernel, step=step, iterations=1, clamp_mask=clamp_mask)
    return out


def compute_phi(particles, target, kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    """The Stein directions at the current particle locations."""
    X = jnp.atleast_2d(jnp.asarray(particles, dtype=jnp.float64))
    G = _score_batch_fn(target)(X)
    h = kernel.bandwidth
    if h is None:
        h = median_bandwidth(np.asarray(X), kernel.floor)
    return np.asarray(_phi(X, G, h))


def svgd_run(
    ensemble: ParticleEnsemble,
    target,
    kernel: KernelSpec = KernelSpec(),
    step: StepRule = StepRule(),
    iterations: int = 500,
    clamp_mask: np.ndarray | None = None,
) -> tuple[ParticleEnsemble, PosteriorSamples]:
    """Run Stein transport and return the moved ensemble plus samples.

    Zero iterations is a no-op that still reports (empty) diagnostics.
    """
    if iterations < 0:
        raise ValueError("iteration count must be non-negative")
    score_batch = _score_batch_fn(target)
    mask = None if clamp_mask is None else jnp.asarray(clamp_mask)
    fixed_h = kernel.bandwidth

    @jax.jit
    def iter_step(X, m, v, t):
        G = score_batch(X)
        h = jnp.asarray(fixed_h) if fixed_h is not None else _median_bandwidth_traced(X, kernel.floor)
        phi = _phi(X, G, h)
        if step.kind == "adam":
            m, v, d = adam_direction(m, v, t, phi)
            X = X + step.lr * d
        else:
            X = X + step.lr * phi
        if mask is not None:
            X = jnp.where(mask[None, :], jnp.maximum(X, 0.0), X)
        return X, m, v, jnp.mean(jnp.sqrt(jnp.sum(phi**2, axis=1)))

    X = jnp.asarray(ensemble.particles)
    m = jnp.zeros_like(X) if ensemble.adam_m is None else jnp.asarray(ensemble.adam_m)
    v = jnp.zeros_like(X) if ensemble.adam_v is None else jnp.asarray(ensemble.adam_v)
    trace = []
    t0 = ensemble.iteration
    for t in range(t0 + 1, t0 + iterations + 1):
        X, m, v, phi_norm = iter_step(X, m, v, t)
        trace.append(float(phi_norm))
    if trace and not np.isfinite(trace[-1]):
        raise FloatingPointError("transport diverged to non-finite directions")
    out = ParticleEnsemble(
        particles=np.asarray(X),
        iteration=t0 + iterations,
        adam_m=np.asarray(m),
        adam_v=np.asarray(v),
    )
    samples = PosteriorSamples(
        samples=np.asarray(X),
        method="svgd",
        iterations=t0 + iterations,
        diagnostics={"mean_phi_norm": np.asarray(trace)},
    )
    return out, samples


# ---------------------------------------------------------------------------
# analytic targets


@dataclass(frozen=True)
class GaussianL1Target:
    """``log pi = -1/2 (x - m)^T Lam (x - m) - l1 ||x||_1`` (l1 may be 0)."""

    mean: np.ndarray
    precision: np.ndarray
    l1_weight: float = 0.0

    def log_density(self, x):
        d = x - jnp.asarray(self.mean)
        quad = -0.5 * d @ jnp.asarray(self.precision) @ d
        return quad - self.l1_weight * jnp.sum(jnp.sign(x) * x)

    def score(self, x):
        d = x - jnp.asarray(self.mean)
        return -jnp.asarray(self.precision) @ d - self.l1_weight * jnp.sign(x)

    def score_batch(self, X):
        D = X - jnp.asarray(self.mean)[None, :]
        return -D @ jnp.asarray(self.precision).T - self.l1_weight * jnp.sign(X)


def sparsifying_prior_svgd(
    precision,
    mean,
    l1_weight: float,
    ensemble: ParticleEnsemble,
    iterations: int = 1000,
    step: StepRule = StepRule(),
    kernel: KernelSpec = KernelSpec(),
) -> tuple[ParticleEnsemble, PosteriorSamples]:
    """Transport against a Gaussian-plus-L1 target (the shrinkage demo)."""
    target = GaussianL1Target(
        mean=np.asarray(mean, dtype=np.float64),
        precision=np.asarray(precision, dtype=np.float64),
        l1_weight=l1_weight,
    )
    ens, samples = svgd_run(ensemble, target, kernel=kernel, step=step, iterations=iterations)
    samples.method = "svgd-l1"
    return ens, samples


# ---------------------------------------------------------------------------
# curvature subspace


def gauss_newton_hessian(model: LogPosteriorModel, theta_star) -> np.ndarray:
    """``H = 2 J^T Sigma^{-1} J`` of the data misfit at the MAP point."""
    theta_star = jnp.asarray(theta_star, dtype=jnp.float64)
    J = np.asarray(jax.jacrev(model.residual_fn)(theta_star))
    if J.size == 0:
        return np.zeros((theta_star.size, theta_star.size))
    W = J / (np.asarray(model.sigma)[:, None] ** 2)
    H = 2.0 * J.T @ W
    return 0.5 * (H + H.T)


@dataclass
class SubspaceProjector:
    """Orthonormal informative directions plus what reconstruction needs."""

    basis: np.ndarray  # (P, r), orthonormal columns
    eigenvalues: np.ndarray  # (r,)
    theta_star: np.ndarray
    prior_var: np.ndarray  # diagonal of Sigma_0

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def active_subspace(
    H, prior_var, theta_star, threshold: float = 0.99
) -> SubspaceProjector:
    """Dominant generalized eigenspace of ``H psi = lam Sigma_0^{-1} psi``.

    Solved through the symmetric transform ``Sigma_0^{1/2} H Sigma_0^{1/2}``;
    negative eigenvalues are floored at zero and the rank is the smallest
    count reaching ``threshold`` of the total spectral content.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    H = np.asarray(H, dtype=np.float64)
    prior_var = np.asarray(prior_var, dtype=np.float64)
    if (prior_var <= 0.0).any():
        raise ValueError("prior variances must be positive")
    d = np.sqrt(prior_var)
    M = d[:, None] * H * d[None, :]
    M = 0.5 * (M + M.T)
    lam, V = np.linalg.eigh(M)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.maximum(lam, 0.0)
    total = lam.sum()
    if total == 0.0:
        raise DegenerateSpectrumError("curvature has no positive spectral content")
    r = int(np.searchsorted(np.cumsum(lam) / total, threshold) + 1)
    r = min(r, lam.size)
    raw = d[:, None] * V[:, :r]
    Q, R = np.linalg.qr(raw)
    Q = Q * np.sign(np.diag(R))[None, :]
    return SubspaceProjector(
        basis=Q,
        eigenvalues=lam[:r],
        theta_star=np.asarray(theta_star, dtype=np.float64),
        prior_var=prior_var,
    )


def psvgd_run(
    ensemble: ParticleEnsemble,
    target,
    projector: SubspaceProjector,
    kernel: KernelSpec = KernelSpec(),
    step: StepRule = StepRule(),
    iterations: int = 500,
    seed: int = 0,
    sample_complement: bool = True,
) -> tuple[ParticleEnsemble, PosteriorSamples]:
    """Transport in the informative subspace, then reconstruct full samples."""
    Psi = jnp.asarray(projector.basis)
    t_star = jnp.asarray(projector.theta_star)

    class Reduced:
        @staticmethod
        def log_density(t):
            return target.log_density(t_star + Psi @ t)

        score = staticmethod(jax.grad(lambda t: target.log_density(t_star + Psi @ t)))

    X0 = (ensemble.particles - projector.theta_star) @ projector.basis
    red = ParticleEnsemble(
        particles=X0, iteration=ensemble.iteration
    )
    red, red_samples = svgd_run(red, Reduced, kernel=kernel, step=step, iterations=iterations)
    T = red.particles
    full = T @ projector.basis.T + projector.theta_star[None, :]
    if sample_complement:
        rng = np.random.default_rng(seed)
        eta = rng.standard_normal(full.shape) * np.sqrt(projector.prior_var)[None, :]
        full = full + eta - (eta @ projector.basis) @ projector.basis.T
    out = ParticleEnsemble(particles=full, iteration=red.iteration)
    samples = PosteriorSamples(
        samples=full.copy(),
        method="psvgd",
        iterations=red.iteration,
        diagnostics={
            "mean_phi_norm": red_samples.diagnostics["mean_phi_norm"],
            "rank": projector.rank,
            "reduced_particles": T.copy(),
        },
    )
    return out, samples
