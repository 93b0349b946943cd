"""Neural potential models with physics constraints baked into the forward map.

Two model families:

* an input-convex network (ICNN) for isotropic hyperelastic strain energy,
  evaluated on the invariants ``(I1, I2, J)`` of the right Cauchy-Green
  tensor, with second Piola-Kirchhoff stress obtained by differentiation;
* a small softplus MLP for a coupled mechanochemical free energy, evaluated
  on strain features plus concentration, with stress and chemical potential
  obtained by differentiation.

Both potentials are normalized so that energy and stress vanish identically
at the reference state for every parameter vector.  The normalization for
the hyperelastic model subtracts the reference energy and a volumetric term
``n (J - 1)`` with ``n = 2 dI1 + 4 dI2 + dJ`` evaluated at the reference
invariants ``(3, 3, 1)``; the arithmetic is arranged so the reference stress
is exactly zero in floating point, not merely small.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from steinuq.autodiff import softplus

SCHEMA_VERSION = 1
REF_INVARIANTS = (3.0, 3.0, 1.0)

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)


class SingularDeformationError(ValueError):
    """det(C) is non-positive, so the deformation is inadmissible."""


class ConcentrationOutOfRangeError(ValueError):
    """Concentration must lie in [0, 1]."""


class NegativeWeightError(ValueError):
    """A weight in a non-negativity-constrained layer is negative."""


class Invariants(NamedTuple):
    I1: float
    I2: float
    J: float


# ---------------------------------------------------------------------------
# kinematics


def _det3(C):
    return (
        C[0, 0] * (C[1, 1] * C[2, 2] - C[1, 2] * C[2, 1])
        - C[0, 1] * (C[1, 0] * C[2, 2] - C[1, 2] * C[2, 0])
        + C[0, 2] * (C[1, 0] * C[2, 1] - C[1, 1] * C[2, 0])
    )


def _inv3_sym(C, det):
    # cofactor form keeps the inverse exactly symmetric and maps the
    # identity to the identity without rounding
    i00 = (C[1, 1] * C[2, 2] - C[1, 2] * C[1, 2]) / det
    i11 = (C[0, 0] * C[2, 2] - C[0, 2] * C[0, 2]) / det
    i22 = (C[0, 0] * C[1, 1] - C[0, 1] * C[0, 1]) / det
    i01 = (C[0, 2] * C[1, 2] - C[0, 1] * C[2, 2]) / det
    i02 = (C[0, 1] * C[1, 2] - C[0, 2] * C[1, 1]) / det
    i12 = (C[0, 1] * C[0, 2] - C[0, 0] * C[1, 2]) / det
    return jnp.array([[i00, i01, i02], [i01, i11, i12], [i02, i12, i22]])


def _invariants_from_C(C):
    I1 = C[0, 0] + C[1, 1] + C[2, 2]
    # I2 = tr(cof C), the sum of principal 2x2 minors
    I2 = (
        (C[1, 1] * C[2, 2] - C[1, 2] * C[2, 1])
        + (C[0, 0] * C[2, 2] - C[0, 2] * C[2, 0])
        + (C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0])
    )
    J = jnp.sqrt(_det3(C))
    return jnp.stack([I1, I2, J])


def invariants(F) -> Invariants:
    """Isotropic invariants ``(I1, I2, J)`` of ``C = F^T F``."""
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (3, 3):
        raise ValueError(f"deformation gradient must be 3x3, got {F.shape}")
    C = F.T @ F
    det = float(_det3(jnp.asarray(C)))
    if det <= 0.0:
        raise SingularDeformationError(f"det(C) = {det} is not positive")
    iv = _invariants_from_C(jnp.asarray(C))
    return Invariants(float(iv[0]), float(iv[1]), float(iv[2]))


def strain_features(E, c) -> tuple[float, float, float]:
    """Reduced strain features ``(e1, e2, e6)`` of a symmetric 2x2 strain.

    Plane-strain convention: the out-of-plane strain is zero, so
    ``e1 = (E11 + E22) / sqrt(3)``; ``e2 = (E11 - E22) / sqrt(2)``;
    ``e6 = sqrt(2) E12``.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.shape != (2, 2):
        raise ValueError(f"strain must be 2x2, got {E.shape}")
    c = float(c)
    if not 0.0 <= c <= 1.0:
        raise ConcentrationOutOfRangeError(f"concentration {c} outside [0, 1]")
    e1 = (E[0, 0] + E[1, 1]) / _SQRT3
    e2 = (E[0, 0] - E[1, 1]) / _SQRT2
    e6 = _SQRT2 * 0.5 * (E[0, 1] + E[1, 0])
    return float(e1), float(e2), float(e6)


# ---------------------------------------------------------------------------
# architectures


@dataclass(frozen=True)
class ICNNSpec:
    """Bias-free input-convex network with tied passthrough weights.

    Layer 1 applies ``softplus(W1 x)``; every later layer applies
    ``softplus(Wk (x_pad + h))`` where the raw input is zero-padded to the
    hidden width, so the passthrough shares ``Wk`` with the skip term.  The
    final layer is affine in the same padded sum.  Weights in layers 2..N
    are constrained non-negative (clamped after every optimizer step); W1
    may take any sign because ``softplus`` of an affine map is convex
    regardless.
    """

    n_inputs: int = 3
    hidden: tuple[int, ...] = (30, 30)

    def __post_init__(self):
        if not self.hidden:
            raise ValueError("need at least one hidden layer")
        if any(h < self.n_inputs for h in self.hidden):
            raise ValueError("hidden widths must be at least the input width")

    @property
    def shapes(self) -> list[tuple[int, int]]:
        dims = [self.n_inputs, *self.hidden]
        out = [(dims[i + 1], dims[i]) for i in range(len(self.hidden))]
        out.append((1, self.hidden[-1]))
        return out

    @property
    def n_params(self) -> int:
        return sum(r * c for r, c in self.shapes)

    def unflatten(self, theta):
        mats, k = [], 0
        for r, c in self.shapes:
            mats.append(jnp.reshape(theta[k : k + r * c], (r, c)))
            k += r * c
        return mats

    def constraint_mask(self) -> np.ndarray:
        """True on entries that must stay non-negative (all but layer 1)."""
        mask = np.ones(self.n_params, dtype=bool)
        r0, c0 = self.shapes[0]
        mask[: r0 * c0] = False
        return mask

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        chunks = []
        for i, (r, c) in enumerate(self.shapes):
            w = rng.normal(0.0, 1.0 / np.sqrt(c), size=r * c)
            if i > 0:
                w = np.abs(w)
            chunks.append(w)
        return np.concatenate(chunks)


@dataclass(frozen=True)
class MLPSpec:
    """Plain softplus MLP with a scalar output."""

    n_inputs: int = 4
    hidden: tuple[int, ...] = (4, 16, 4)
    with_biases: bool = True

    @property
    def shapes(self) -> list[tuple[int, int]]:
        dims = [self.n_inputs, *self.hidden, 1]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        n = sum(r * c for r, c in self.shapes)
        if self.with_biases:
            n += sum(r for r, _ in self.shapes)
        return n

    def unflatten(self, theta):
        Ws, bs, k = [], [], 0
        for r, c in self.shapes:
            Ws.append(jnp.reshape(theta[k : k + r * c], (r, c)))
            k += r * c
            if self.with_biases:
                bs.append(theta[k : k + r])
                k += r
            else:
                bs.append(jnp.zeros(r))
        return Ws, bs

    def constraint_mask(self) -> np.ndarray:
        return np.zeros(self.n_params, dtype=bool)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        chunks = []
        for r, c in self.shapes:
            chunks.append(rng.normal(0.0, 1.0 / np.sqrt(c), size=r * c))
            if self.with_biases:
                chunks.append(np.zeros(r))
        return np.concatenate(chunks)


@dataclass
class ParamVector:
    """Flat parameter vector bound to its architecture, plus an active mask."""

    spec: ICNNSpec | MLPSpec
    values: np.ndarray
    active: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n_params,):
            raise ValueError(
                f"expected {self.spec.n_params} parameters, got {self.values.shape}"
            )
        if self.active is not None:
            self.active = np.asarray(self.active, dtype=bool)
            if self.active.shape != self.values.shape:
                raise ValueError("active mask must match the parameter vector")

    def materialized(self) -> np.ndarray:
        """Values with masked-off entries forced to exactly zero."""
        if self.active is None:
            return self.values.copy()
        return np.where(self.active, self.values, 0.0)


def clamp_nonneg(spec, theta: np.ndarray) -> np.ndarray:
    """Project constrained entries onto [0, inf); idempotent."""
    mask = spec.constraint_mask()
    theta = np.asarray(theta, dtype=np.float64)
    return np.where(mask, np.maximum(theta, 0.0), theta)


def _check_constrained(spec, theta):
    mask = spec.constraint_mask()
    bad = np.asarray(theta)[mask]
    if bad.size and bad.min() < 0.0:
        raise NegativeWeightError(
            f"constrained weight {bad.min()} is negative; clamp before calling"
        )


# ---------------------------------------------------------------------------
# forward maps (traced; compose freely under jit/vmap/grad)


def _pad_to(x, width):
    if width == x.shape[0]:
        return x
    return jnp.concatenate([x, jnp.zeros(width - x.shape[0])])


def icnn_raw(spec: ICNNSpec, theta, x):
    """Un-normalized ICNN output at input vector ``x``."""
    Ws = spec.unflatten(theta)
    h = softplus(Ws[0] @ x)
    for W in Ws[1:-1]:
        h = softplus(W @ (_pad_to(x, h.shape[0]) + h))
    return (Ws[-1] @ (_pad_to(x, h.shape[0]) + h))[0]


def mlp_raw(spec: MLPSpec, theta, x):
    Ws, bs = spec.unflatten(theta)
    h = x
    for W, b in zip(Ws[:-1], bs[:-1]):
        h = softplus(W @ h + b)
    return (Ws[-1] @ h + bs[-1])[0]


def icnn_forward(spec: ICNNSpec, theta, x) -> float:
    """Checked scalar evaluation of the raw network."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters")
    _check_constrained(spec, theta)
    x = jnp.asarray(x, dtype=jnp.float64)
    return float(icnn_raw(spec, jnp.asarray(theta), x))


def hyper_potential_fn(spec: ICNNSpec):
    """Normalized strain-energy ``psi_hat(theta, F)`` as a traced callable."""
    ref = jnp.asarray(REF_INVARIANTS)
    net = lambda theta, iv: icnn_raw(spec, theta, iv)
    grad_net = jax.grad(net, argnums=1)

    def psi(theta, F):
        C = F.T @ F
        iv = _invariants_from_C(C)
        # evaluating the pair through one vmapped kernel makes the reference
        # subtraction exact when iv == ref bit for bit
        vals = jax.vmap(net, in_axes=(None, 0))(theta, jnp.stack([iv, ref]))
        g_ref = grad_net(theta, ref)
        n = 2.0 * g_ref[0] + 4.0 * g_ref[1] + g_ref[2]
        return vals[0] - vals[1] - n * (iv[2] - 1.0)

    return psi


def stress_normalization_constant(spec: ICNNSpec, theta) -> float:
    """The volumetric slope ``n = 2 dI1 + 4 dI2 + dJ`` at (3, 3, 1)."""
    g = jax.grad(lambda iv: icnn_raw(spec, jnp.asarray(theta), iv))(
        jnp.asarray(REF_INVARIANTS)
    )
    return float(2.0 * g[0] + 4.0 * g[1] + g[2])


def hyper_stress_fn(spec: ICNNSpec):
    """Second Piola-Kirchhoff stress ``S(theta, F)`` of the normalized energy.

    ``S = 2 [dI1 I + dI2 (I1 I - C) + dJ_hat (J/2) C^{-1}]`` with
    ``dJ_hat = (dJ - dJ_ref) - (2 dI1_ref + 4 dI2_ref)`` so the reference
    state carries exactly zero stress.
    """
    ref = jnp.asarray(REF_INVARIANTS)
    eye = jnp.eye(3)
    net = lambda theta, iv: icnn_raw(spec, theta, iv)
    grad_net = jax.grad(net, argnums=1)

    def stress(theta, F):
        C = F.T @ F
        iv = _invariants_from_C(C)
        g_pair = jax.vmap(grad_net, in_axes=(None, 0))(theta, jnp.stack([iv, ref]))
        g, gr = g_pair[0], g_pair[1]
        t = 2.0 * gr[0] + 4.0 * gr[1]
        dJ_hat = (g[2] - gr[2]) - t
        det = _det3(C)
        Cinv = _inv3_sym(C, det)
        J = iv[2]
        return 2.0 * (g[0] * eye + g[1] * (iv[0] * eye - C) + dJ_hat * (J / 2.0) * Cinv)

    return stress


def hyper_potential(spec: ICNNSpec, theta, F) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    _check_constrained(spec, theta)
    invariants(F)  # admissibility check
    return float(hyper_potential_fn(spec)(jnp.asarray(theta), jnp.asarray(F, dtype=jnp.float64)))


def hyper_stress(spec: ICNNSpec, theta, F) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    _check_constrained(spec, theta)
    invariants(F)
    S = hyper_stress_fn(spec)(jnp.asarray(theta), jnp.asarray(F, dtype=jnp.float64))
    return np.asarray(S)


def mechchem_potential_fn(spec: MLPSpec):
    """Normalized free energy ``psi_hat(theta, evec, c)``.

    ``evec = (E11, E22, E12)`` packs the symmetric in-plane strain; the
    network sees features ``(e1, e2, e6, c)`` and its value at the all-zero
    feature vector is subtracted, so any constant offset the network can
    express cancels.
    """
    net = lambda theta, x: mlp_raw(spec, theta, x)

    def psi(theta, evec, c):
        e1 = (evec[0] + evec[1]) / _SQRT3
        e2 = (evec[0] - evec[1]) / _SQRT2
        e6 = _SQRT2 * evec[2]
        x = jnp.stack([e1, e2, e6, c])
        vals = jax.vmap(net, in_axes=(None, 0))(theta, jnp.stack([x, jnp.zeros(4)]))
        return vals[0] - vals[1]

    return psi


def mechchem_observables_fn(spec: MLPSpec):
    """Stress (symmetric 2x2) and chemical potential from the free energy.

    The strain derivative uses the symmetric-tensor convention: with
    ``evec = (E11, E22, E12)``, ``S12 = (d psi / d E12) / 2`` because the
    off-diagonal slot represents both E12 and E21.
    """
    psi = mechchem_potential_fn(spec)
    grads = jax.grad(psi, argnums=(1, 2))

    def obs(theta, evec, c):
        gE, gc = grads(theta, evec, c)
        S = jnp.array([[gE[0], gE[2] / 2.0], [gE[2] / 2.0, gE[1]]])
        return S, gc

    return obs


def mechchem_potential(spec: MLPSpec, theta, E, c) -> float:
    strain_features(E, c)  # validates shape and concentration range
    E = np.asarray(E, dtype=np.float64)
    evec = jnp.array([E[0, 0], E[1, 1], 0.5 * (E[0, 1] + E[1, 0])])
    return float(mechchem_potential_fn(spec)(jnp.asarray(theta, dtype=jnp.float64), evec, jnp.asarray(float(c))))


def mechchem_observables(spec: MLPSpec, theta, E, c) -> tuple[np.ndarray, float]:
    strain_features(E, c)
    E = np.asarray(E, dtype=np.float64)
    evec = jnp.array([E[0, 0], E[1, 1], 0.5 * (E[0, 1] + E[1, 0])])
    S, mu = mechchem_observables_fn(spec)(
        jnp.asarray(theta, dtype=jnp.float64), evec, jnp.asarray(float(c))
    )
    return np.asarray(S), float(mu)


# ---------------------------------------------------------------------------
# serialization


def _spec_to_dict(spec) -> dict:
    if isinstance(spec, ICNNSpec):
        return {
            "kind": "icnn",
            "n_inputs": spec.n_inputs,
            "hidden": list(spec.hidden),
            "activation": "softplus",
            "constrained_layers": [False] + [True] * len(spec.hidden),
        }
    if isinstance(spec, MLPSpec):
        return {
            "kind": "mlp",
            "n_inputs": spec.n_inputs,
            "hidden": list(spec.hidden),
            "activation": "softplus",
            "with_biases": spec.with_biases,
            "constrained_layers": [False] * (len(spec.hidden) + 1),
        }
    raise TypeError(f"unknown spec type {type(spec)}")


def _spec_from_dict(d: dict):
    if d["kind"] == "icnn":
        return ICNNSpec(n_inputs=d["n_inputs"], hidden=tuple(d["hidden"]))
    if d["kind"] == "mlp":
        return MLPSpec(
            n_inputs=d["n_inputs"],
            hidden=tuple(d["hidden"]),
            with_biases=d["with_biases"],
        )
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(path, pv: ParamVector, provenance: dict | None = None) -> None:
    doc = {
        "schema": SCHEMA_VERSION,
        "spec": _spec_to_dict(pv.spec),
        "values": [repr(v) for v in pv.values.tolist()],
        "active": None if pv.active is None else pv.active.astype(int).tolist(),
        "provenance": provenance or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_model(path) -> tuple[ParamVector, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(
            f"model schema {doc.get('schema')} unsupported (expected {SCHEMA_VERSION})"
        )
    spec = _spec_from_dict(doc["spec"])
    values = np.array([float(v) for v in doc["values"]], dtype=np.float64)
    active = None if doc["active"] is None else np.array(doc["active"], dtype=bool)
    return ParamVector(spec=spec, values=values, active=active), doc["provenance"]
