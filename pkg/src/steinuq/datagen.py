"""Synthetic ground-truth generators and dataset serialization.

Two closed-form material models supply training and validation data:

* a Gent-type incompressible-leaning hyperelastic solid (strain energy in
  ``I1, I2, J`` with a locking stretch limit), differentiated by hand to
  second Piola-Kirchhoff stress, with the same reference-state shift that
  the learned models use so the truth also carries exactly zero stress at
  ``F = I``;
* a double-well mechanochemical free energy in strain features and
  concentration, differentiated by hand to stress and chemical potential.

Datasets serialize to a line-oriented text format: ``#``-prefixed header
(schema version, generator name, parameters, noise, seed, column names)
followed by one CSV record per sample with round-trip-exact floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from steinuq.potentials import (
    ConcentrationOutOfRangeError,
    SingularDeformationError,
)

SCHEMA_VERSION = 1

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)


class GentLockingError(ValueError):
    """The deformation reached the Gent locking stretch ``I1 - 3 >= Jm``."""


class RejectionOverflowError(RuntimeError):
    """Too many consecutive rejected draws; the sampling box is inadmissible."""


class SchemaMismatchError(ValueError):
    """Dataset file was written with an unsupported schema version."""


class DatasetParseError(ValueError):
    """Dataset file is malformed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class GentParams:
    jm: float = 77.931
    t1: float = 2.4195
    t2: float = -0.75
    t3: float = 1.20975


@dataclass(frozen=True)
class MechchemParams:
    d_c: float = 2.0
    d_e: float = 0.1
    s_e: float = 0.1


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"  # "multiplicative" | "additive" | "none"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("multiplicative", "additive", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.level < 0.0:
            raise ValueError("noise level must be non-negative")


@dataclass
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    generator: str
    params: dict
    noise: NoiseSpec
    seed: int
    input_columns: tuple[str, ...]
    output_columns: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# Gent truth


def _inv3_sym_np(C: np.ndarray, det: float) -> np.ndarray:
    i00 = (C[1, 1] * C[2, 2] - C[1, 2] * C[1, 2]) / det
    i11 = (C[0, 0] * C[2, 2] - C[0, 2] * C[0, 2]) / det
    i22 = (C[0, 0] * C[1, 1] - C[0, 1] * C[0, 1]) / det
    i01 = (C[0, 2] * C[1, 2] - C[0, 1] * C[2, 2]) / det
    i02 = (C[0, 1] * C[1, 2] - C[0, 2] * C[1, 1]) / det
    i12 = (C[0, 1] * C[0, 2] - C[0, 0] * C[1, 2]) / det
    return np.array([[i00, i01, i02], [i01, i11, i12], [i02, i12, i22]])


def _invariants_np(F: np.ndarray):
    C = F.T @ F
    det = float(np.linalg.det(C))
    if det <= 0.0:
        raise SingularDeformationError(f"det(C) = {det} is not positive")
    I1 = float(np.trace(C))
    I2 = float(
        (C[1, 1] * C[2, 2] - C[1, 2] * C[2, 1])
        + (C[0, 0] * C[2, 2] - C[0, 2] * C[2, 0])
        + (C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0])
    )
    return C, I1, I2, np.sqrt(det), det


def gent_energy_raw(I1: float, I2: float, J: float, p: GentParams = GentParams()) -> float:
    """Un-shifted Gent strain energy at given invariants."""
    if I1 - 3.0 >= p.jm:
        raise GentLockingError(f"I1 - 3 = {I1 - 3.0} reached the limit Jm = {p.jm}")
    return float(
        -(p.t1 / 2.0) * p.jm * np.log(1.0 - (I1 - 3.0) / p.jm)
        - p.t2 * np.log(I2 / J)
        + p.t3 * ((J**2 - 1.0) / 2.0 - np.log(J))
    )


def _gent_partials(I1: float, I2: float, J: float, p: GentParams):
    d1 = (p.t1 / 2.0) / (1.0 - (I1 - 3.0) / p.jm)
    d2 = -p.t2 / I2
    dJ = p.t2 / J + p.t3 * (J - 1.0 / J)
    return d1, d2, dJ


def gent_truth(F, p: GentParams = GentParams()):
    """Shifted energy and stress ``(psi_hat, S)`` of the Gent ground truth.

    Uses the same normalization as the learned models: subtract the
    reference energy and the volumetric slope ``n = 2 d1 + 4 d2 + dJ`` at
    ``(3, 3, 1)`` times ``(J - 1)``, which zeroes the reference stress
    exactly.
    """
    F = np.asarray(F, dtype=np.float64)
    C, I1, I2, J, det = _invariants_np(F)
    if I1 - 3.0 >= p.jm:
        raise GentLockingError(f"I1 - 3 = {I1 - 3.0} reached the limit Jm = {p.jm}")
    d1, d2, dJ = _gent_partials(I1, I2, J, p)
    d1r, d2r, dJr = _gent_partials(3.0, 3.0, 1.0, p)
    t = 2.0 * d1r + 4.0 * d2r
    n = t + dJr
    psi = gent_energy_raw(I1, I2, J, p) - gent_energy_raw(3.0, 3.0, 1.0, p) - n * (J - 1.0)
    dJ_hat = (dJ - dJr) - t
    Cinv = _inv3_sym_np(C, det)
    S = 2.0 * (d1 * np.eye(3) + d2 * (I1 * np.eye(3) - C) + dJ_hat * (J / 2.0) * Cinv)
    return float(psi), S


# ---------------------------------------------------------------------------
# mechanochemistry truth


def mechchem_truth(E, c: float, p: MechchemParams = MechchemParams()):
    """Free energy, stress, and chemical potential ``(psi, S, mu)``.

    ``psi = 16 d_c (c^4 - 2 c^3 + c^2) + (2 d_e / s_e^2)(e1^2 + e6^2)
    + (d_e / s_e^4) e2^4 + (2c - 1)(2 d_e / s_e^2) e2^2`` in the strain
    features of the symmetric in-plane strain ``E``.
    """
    E = np.asarray(E, dtype=np.float64)
    c = float(c)
    if not 0.0 <= c <= 1.0:
        raise ConcentrationOutOfRangeError(f"concentration {c} outside [0, 1]")
    e1 = (E[0, 0] + E[1, 1]) / _SQRT3
    e2 = (E[0, 0] - E[1, 1]) / _SQRT2
    e6 = _SQRT2 * 0.5 * (E[0, 1] + E[1, 0])
    a = 2.0 * p.d_e / p.s_e**2
    b = p.d_e / p.s_e**4
    psi = (
        16.0 * p.d_c * (c**4 - 2.0 * c**3 + c**2)
        + a * (e1**2 + e6**2)
        + b * e2**4
        + (2.0 * c - 1.0) * a * e2**2
    )
    mu = 16.0 * p.d_c * (4.0 * c**3 - 6.0 * c**2 + 2.0 * c) + 2.0 * a * e2**2
    g1 = 2.0 * a * e1
    g2 = 4.0 * b * e2**3 + 2.0 * (2.0 * c - 1.0) * a * e2
    g6 = 2.0 * a * e6
    S = np.array(
        [
            [g1 / _SQRT3 + g2 / _SQRT2, g6 / _SQRT2],
            [g6 / _SQRT2, g1 / _SQRT3 - g2 / _SQRT2],
        ]
    )
    return float(psi), S, float(mu)


# ---------------------------------------------------------------------------
# sampling


def sample_deformations(
    n: int,
    eps: float = 0.2,
    seed: int = 0,
    dim: int = 3,
    gent: GentParams | None = None,
    det_floor: float = 1e-8,
    max_rejects: int = 10_000,
) -> np.ndarray:
    """Random deformation gradients ``F = I + U[-eps, eps]`` per entry.

    Draws are rejected (and redrawn, consuming the stream deterministically)
    when ``det(C) <= det_floor`` or, with a Gent guard, when the draw sits
    at or beyond the locking stretch.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if eps < 0.0:
        raise ValueError("perturbation half-width must be non-negative")
    rng = np.random.default_rng(seed)
    out = np.empty((n, dim, dim))
    for i in range(n):
        rejects = 0
        while True:
            F = np.eye(dim) + rng.uniform(-eps, eps, size=(dim, dim))
            det_C = float(np.linalg.det(F)) ** 2
            ok = det_C > det_floor
            if ok and gent is not None and dim == 3:
                I1 = float(np.trace(F.T @ F))
                ok = I1 - 3.0 < gent.jm
            if ok:
                out[i] = F
                break
            rejects += 1
            if rejects >= max_rejects:
                raise RejectionOverflowError(
                    f"{rejects} consecutive rejections at sample {i}"
                )
    return out


def uniaxial_path(points: int = 1000, span: float = 0.4):
    """Uniaxial validation path ``F = I + gamma e1 (x) e1``, gamma in [-span, span]."""
    if points < 2:
        raise ValueError("need at least two path points")
    gammas = np.linspace(-span, span, points)
    Fs = np.tile(np.eye(3), (points, 1, 1))
    Fs[:, 0, 0] = 1.0 + gammas
    return gammas, Fs


def mechchem_path(points: int = 1000, span: float = 0.4):
    """In-plane stretch path with concentration ramped over [0, 1].

    ``F11 = 1 + gamma`` on a 2x2 deformation, ``c = 1.25 (gamma + span)``.
    """
    if points < 2:
        raise ValueError("need at least two path points")
    gammas = np.linspace(-span, span, points)
    Es = np.zeros((points, 2, 2))
    for i, g in enumerate(gammas):
        F = np.eye(2)
        F[0, 0] = 1.0 + g
        Es[i] = 0.5 * (F.T @ F - np.eye(2))
    cs = 1.25 * (gammas + span)
    return gammas, Es, np.clip(cs, 0.0, 1.0)


def validation_path(kind: str, points: int = 1000):
    if kind == "uniaxial":
        return uniaxial_path(points)
    if kind == "mechchem":
        return mechchem_path(points)
    raise ValueError(f"unknown validation path {kind!r}")


def apply_noise(Y, noise: NoiseSpec) -> np.ndarray:
    """Corrupt observations: multiplicative ``y (1 + eta)`` or additive ``y + eta``."""
    Y = np.asarray(Y, dtype=np.float64)
    if noise.kind == "none" or noise.level == 0.0:
        return Y.copy()
    rng = np.random.default_rng(noise.seed)
    eta = rng.normal(0.0, noise.level, size=Y.shape)
    if noise.kind == "multiplicative":
        return Y * (1.0 + eta)
    return Y + eta


def observation_sigmas(Y_clean, noise: NoiseSpec) -> np.ndarray:
    """Per-observation likelihood stdevs implied by the noise model.

    Multiplicative: ``sigma_i = level * max(1, |y_i|)``; additive: constant
    ``level``; no noise: 1.
    """
    Y_clean = np.asarray(Y_clean, dtype=np.float64)
    if noise.kind == "multiplicative" and noise.level > 0.0:
        return noise.level * np.maximum(1.0, np.abs(Y_clean))
    if noise.kind == "additive" and noise.level > 0.0:
        return np.full_like(Y_clean, noise.level)
    return np.ones_like(Y_clean)


# ---------------------------------------------------------------------------
# dataset assembly

GENT_INPUT_COLS = tuple(f"F{i}{j}" for i in range(1, 4) for j in range(1, 4))
GENT_OUTPUT_COLS = tuple(f"S{i}{j}" for i in range(1, 4) for j in range(1, 4))
MECHCHEM_INPUT_COLS = ("E11", "E22", "E12", "c")
MECHCHEM_OUTPUT_COLS = ("S11", "S22", "S12", "mu")


def make_gent_dataset(
    n: int = 80,
    eps: float = 0.2,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    params: GentParams = GentParams(),
) -> Dataset:
    Fs = sample_deformations(n, eps=eps, seed=seed, gent=params)
    S = np.stack([gent_truth(F, params)[1] for F in Fs])
    noisy = apply_noise(S.reshape(n, 9), noise)
    return Dataset(
        inputs=Fs.reshape(n, 9),
        outputs=noisy,
        generator="gent",
        params=vars(params).copy(),
        noise=noise,
        seed=seed,
        input_columns=GENT_INPUT_COLS,
        output_columns=GENT_OUTPUT_COLS,
    )


def make_mechchem_dataset(
    n: int = 100,
    eps: float = 0.2,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    params: MechchemParams = MechchemParams(),
) -> Dataset:
    rng = np.random.default_rng(seed)
    Fs = sample_deformations(n, eps=eps, seed=seed, dim=2)
    cs = rng.random(n)
    rows_in, rows_out = [], []
    for F, c in zip(Fs, cs):
        E = 0.5 * (F.T @ F - np.eye(2))
        _, S, mu = mechchem_truth(E, c, params)
        rows_in.append([E[0, 0], E[1, 1], E[0, 1], c])
        rows_out.append([S[0, 0], S[1, 1], S[0, 1], mu])
    noisy = apply_noise(np.asarray(rows_out), noise)
    return Dataset(
        inputs=np.asarray(rows_in),
        outputs=noisy,
        generator="mechchem",
        params=vars(params).copy(),
        noise=noise,
        seed=seed,
        input_columns=MECHCHEM_INPUT_COLS,
        output_columns=MECHCHEM_OUTPUT_COLS,
    )


# ---------------------------------------------------------------------------
# text serialization


def write_dataset(path, ds: Dataset) -> None:
    if ds.n == 0:
        raise ValueError("refusing to write an empty dataset")
    lines = [
        f"# steinuq-dataset schema={SCHEMA_VERSION}",
        f"# generator: {ds.generator}",
        f"# params: {json.dumps(ds.params, sort_keys=True)}",
        f"# noise: {json.dumps({'kind': ds.noise.kind, 'level': ds.noise.level, 'seed': ds.noise.seed}, sort_keys=True)}",
        f"# seed: {ds.seed}",
        f"# n: {ds.n}",
        f"# columns: {','.join(ds.input_columns)};{','.join(ds.output_columns)}",
    ]
    for x, y in zip(ds.inputs, ds.outputs):
        lines.append(",".join(repr(float(v)) for v in (*x, *y)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    raw = Path(path).read_text().splitlines()
    if not raw:
        raise DatasetParseError(1, "empty file")
    head = raw[0].strip()
    if not head.startswith("# steinuq-dataset schema="):
        raise DatasetParseError(1, "missing dataset header")
    schema = int(head.split("=")[1])
    if schema != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"dataset schema {schema} unsupported (expected {SCHEMA_VERSION})"
        )
    meta: dict[str, str] = {}
    body_start = None
    for idx, line in enumerate(raw[1:], start=2):
        if line.startswith("#"):
            try:
                key, value = line[1:].split(":", 1)
            except ValueError:
                raise DatasetParseError(idx, f"malformed header line {line!r}")
            meta[key.strip()] = value.strip()
        else:
            body_start = idx
            break
    for key in ("generator", "params", "noise", "seed", "n", "columns"):
        if key not in meta:
            raise DatasetParseError(body_start or len(raw), f"missing header field {key!r}")
    if body_start is None:
        body_start = len(raw) + 1
    in_cols, out_cols = (tuple(part.split(",")) for part in meta["columns"].split(";"))
    width = len(in_cols) + len(out_cols)
    n = int(meta["n"])
    rows = []
    for idx, line in enumerate(raw[body_start - 1 :], start=body_start):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise DatasetParseError(idx, f"expected {width} fields, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as e:
            raise DatasetParseError(idx, str(e))
    if len(rows) != n:
        raise DatasetParseError(
            len(raw), f"header promises {n} records, found {len(rows)}"
        )
    arr = np.asarray(rows)
    noise_doc = json.loads(meta["noise"])
    return Dataset(
        inputs=arr[:, : len(in_cols)],
        outputs=arr[:, len(in_cols) :],
        generator=meta["generator"],
        params=json.loads(meta["params"]),
        noise=NoiseSpec(**noise_doc),
        seed=int(meta["seed"]),
        input_columns=in_cols,
        output_columns=out_cols,
    )
