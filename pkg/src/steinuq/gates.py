"""Hard-concrete stochastic gates for L0 sparsification of parameter vectors.

Each scalar parameter ``theta_j`` gets a gate ``z_j`` in [0, 1] whose
distribution is a stretched, clamped binary concrete controlled by a
location parameter ``log_alpha_j``.  Training minimizes a Monte Carlo
estimate of the gated data loss plus ``lambda`` times the expected number
of open gates; at freeze time the deterministic gate replaces sampling and
parameters with closed gates are pruned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jax.numpy as jnp
import numpy as np

from steinuq.autodiff import clamp, sigmoid

SCHEMA_VERSION = 1


class InvalidUniformError(ValueError):
    """Gate noise must lie strictly inside (0, 1)."""


class AllPrunedError(ValueError):
    """Every gate closed; there is no model left to keep."""


@dataclass
class GateState:
    """Per-parameter gate locations plus the stretch hyperparameters."""

    log_alpha: np.ndarray
    gamma: float = -0.1
    zeta: float = 1.1
    beta: float = 2.0 / 3.0
    init_std: float = 0.01

    def __post_init__(self):
        self.log_alpha = np.asarray(self.log_alpha, dtype=np.float64)
        if not (self.gamma < 0.0 < 1.0 < self.zeta):
            raise ValueError("stretch interval must satisfy gamma < 0 < 1 < zeta")
        if self.beta <= 0.0:
            raise ValueError("temperature must be positive")

    @classmethod
    def initialize(cls, n: int, rng: np.random.Generator, **kw) -> "GateState":
        state = cls(log_alpha=np.zeros(n), **kw)
        state.log_alpha = rng.normal(0.0, state.init_std, size=n)
        return state

    @property
    def n(self) -> int:
        return self.log_alpha.size


def _sample_gates(log_alpha, u, gamma, zeta, beta):
    s = sigmoid((jnp.log(u) - jnp.log1p(-u) + log_alpha) / beta)
    return clamp(s * (zeta - gamma) + gamma, 0.0, 1.0)


def _deterministic_gates(log_alpha, gamma, zeta):
    return clamp(sigmoid(log_alpha) * (zeta - gamma) + gamma, 0.0, 1.0)


def _l0_penalty(log_alpha, gamma, zeta, beta):
    return jnp.sum(sigmoid(log_alpha - beta * jnp.log(-gamma / zeta)))


def sample_gates(state: GateState, u) -> np.ndarray:
    """Stochastic gates for uniform noise ``u`` (strictly inside (0, 1))."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != state.log_alpha.shape:
        raise ValueError("noise must match the gate vector shape")
    if not ((u > 0.0) & (u < 1.0)).all():
        raise InvalidUniformError("uniform noise must lie strictly in (0, 1)")
    return np.asarray(
        _sample_gates(jnp.asarray(state.log_alpha), jnp.asarray(u), state.gamma, state.zeta, state.beta)
    )


def deterministic_gates(state: GateState) -> np.ndarray:
    """Noise-free gates used at freeze/test time."""
    return np.asarray(_deterministic_gates(jnp.asarray(state.log_alpha), state.gamma, state.zeta))


def l0_penalty(state: GateState) -> float:
    """Expected number of open gates (the differentiable L0 surrogate)."""
    return float(_l0_penalty(jnp.asarray(state.log_alpha), state.gamma, state.zeta, state.beta))


def draw_gate_noise(n: int, m_samples: int, rng: np.random.Generator) -> np.ndarray:
    """(m_samples, n) uniforms clipped to the open interval."""
    u = rng.random((m_samples, n))
    return np.clip(u, 1e-12, 1.0 - 1e-12)


def l0_loss_terms(data_loss_fn: Callable, state: GateState):
    """Traced ``(theta_bar, log_alpha, U) -> (mc_data_loss, penalty)``.

    ``U`` has shape (M, n); the data loss is averaged over the M gate draws
    with the gates applied multiplicatively to ``theta_bar``.
    """
    gamma, zeta, beta = state.gamma, state.zeta, state.beta

    def terms(theta_bar, log_alpha, U):
        def one(u):
            z = _sample_gates(log_alpha, u, gamma, zeta, beta)
            return data_loss_fn(theta_bar * z)

        losses = jnp.stack([one(U[m]) for m in range(U.shape[0])])
        return jnp.mean(losses), _l0_penalty(log_alpha, gamma, zeta, beta)

    return terms


def l0_training_loss(
    data_loss_fn: Callable,
    theta_bar,
    state: GateState,
    lam: float,
    m_samples: int = 1,
    seed: int = 0,
) -> float:
    """MC objective: mean gated data loss over M draws plus ``lam`` gates open."""
    if m_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    if lam < 0.0:
        raise ValueError("penalty weight must be non-negative")
    rng = np.random.default_rng(seed)
    U = draw_gate_noise(state.n, m_samples, rng)
    terms = l0_loss_terms(data_loss_fn, state)
    data, pen = terms(
        jnp.asarray(theta_bar, dtype=jnp.float64),
        jnp.asarray(state.log_alpha),
        jnp.asarray(U),
    )
    return float(data) + lam * float(pen)


def lp_penalty(theta, p: int, lam: float) -> float:
    """``lam * ||theta||_p^p`` for p in {1, 2}."""
    if p not in (1, 2):
        raise ValueError("only p = 1 and p = 2 are supported")
    if lam < 0.0:
        raise ValueError("penalty weight must be non-negative")
    theta = np.asarray(theta, dtype=np.float64)
    return lam * float(np.sum(np.abs(theta)) if p == 1 else np.sum(theta**2))


@dataclass
class SparseModel:
    """Frozen result of pruning: compact parameters on the surviving support."""

    spec: object
    active_indices: np.ndarray
    compact_params: np.ndarray
    gates: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_active(self) -> int:
        return self.active_indices.size

    def materialize(self) -> np.ndarray:
        """Full-length parameter vector, exact zeros off the support."""
        full = np.zeros(self.gates.size, dtype=np.float64)
        full[self.active_indices] = self.compact_params
        return full


def prune(theta_bar, state: GateState, spec=None, provenance: dict | None = None) -> SparseModel:
    """Keep parameters whose deterministic gate is open; fold the gate in."""
    theta_bar = np.asarray(theta_bar, dtype=np.float64)
    if theta_bar.shape != state.log_alpha.shape:
        raise ValueError("parameters and gates must have matching shape")
    z = deterministic_gates(state)
    active = np.flatnonzero(z > 0.0)
    if active.size == 0:
        raise AllPrunedError("all gates are closed")
    return SparseModel(
        spec=spec,
        active_indices=active,
        compact_params=theta_bar[active] * z[active],
        gates=z,
        provenance=provenance or {},
    )


def save_sparse_model(path, sm: SparseModel, spec_dict: dict | None = None) -> None:
    doc = {
        "schema": SCHEMA_VERSION,
        "spec": spec_dict,
        "active_indices": sm.active_indices.tolist(),
        "compact_params": [repr(v) for v in sm.compact_params.tolist()],
        "gates": [repr(v) for v in sm.gates.tolist()],
        "provenance": sm.provenance,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_sparse_model(path) -> tuple[SparseModel, dict | None]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(
            f"sparse-model schema {doc.get('schema')} unsupported (expected {SCHEMA_VERSION})"
        )
    sm = SparseModel(
        spec=None,
        active_indices=np.asarray(doc["active_indices"], dtype=np.int64),
        compact_params=np.array([float(v) for v in doc["compact_params"]]),
        gates=np.array([float(v) for v in doc["gates"]]),
        provenance=doc["provenance"],
    )
    return sm, doc["spec"]
