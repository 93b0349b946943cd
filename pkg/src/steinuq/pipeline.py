"""Staged experiment driver: seeded, resumable runs with hashed artifacts.

A run writes its artifacts into one output directory and records them in a
manifest keyed on the configuration hash.  Rerunning with the same
configuration skips stages whose outputs are on disk and unchanged; a
different configuration invalidates the manifest and everything reruns.
Every random stream is seeded from the configuration (directly or derived
from its hash), so two fresh runs of the same configuration produce
byte-identical artifacts.

Stage order for the physical problems is generate -> train-map ->
[sparsify] -> sample -> evaluate (sparsify only for the gate-based
regularizer); the analytic Gaussian demo runs sample -> evaluate.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from .configs import ExperimentConfig, config_hash
from .datagen import (
    gent_truth,
    make_gent_dataset,
    make_mechchem_dataset,
    mechchem_path,
    mechchem_truth,
    read_dataset,
    uniaxial_path,
    write_dataset,
)
from .gates import load_sparse_model, prune, save_sparse_model
from .hmc import HMCConfig, hmc_run
from .metrics import lcurve_sweep, r2_score, w1_distance
from .posterior import (
    compact_model,
    gent_residual_model,
    mechchem_residual_model,
    train_map,
    train_map_l0,
)
from .potentials import (
    ICNNSpec,
    MLPSpec,
    ParamVector,
    hyper_stress_fn,
    load_model,
    mechchem_observables_fn,
    save_model,
)
from .svgd import (
    GaussianL1Target,
    PosteriorSamples,
    StepRule,
    active_subspace,
    gauss_newton_hessian,
    init_ensemble,
    load_samples,
    psvgd_run,
    save_samples,
    sparsifying_prior_svgd,
    svgd_run,
)

__all__ = [
    "StageError",
    "RunManifest",
    "build_spec",
    "run_pipeline",
    "run_lcurve",
    "DEMO_MEAN",
    "DEMO_PRECISION",
]

MANIFEST_SCHEMA = 1
REPLICA_COUNT = 200  # noisy data replicas per path point for the W1 column
VALIDATION_POINTS = 1000

# the analytic shrinkage-demo target: correlated pair plus one weak coordinate
DEMO_MEAN = np.array([1.0, 2.0, 3.0])
DEMO_PRECISION = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.025]])
DEMO_REFERENCE_HMC = HMCConfig(step_size=0.45, n_leapfrog=20, chain_length=8000, burn_in=500)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause if isinstance(cause, BaseException) else None
        super().__init__(f"stage {stage!r} failed: {cause}")


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config_hash: str
    stages: list[str] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)  # relpath -> sha256
    stage_seconds: dict[str, float] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)

    def save(self, path) -> None:
        doc = {
            "schema": MANIFEST_SCHEMA,
            "config_hash": self.config_hash,
            "stages": self.stages,
            "files": self.files,
            "stage_seconds": self.stage_seconds,
            "seeds": self.seeds,
        }
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunManifest | None":
        path = Path(path)
        if not path.exists():
            return None
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            return None
        if doc.get("schema") != MANIFEST_SCHEMA:
            return None
        return cls(
            config_hash=doc.get("config_hash", ""),
            stages=list(doc.get("stages", [])),
            files=dict(doc.get("files", {})),
            stage_seconds=dict(doc.get("stage_seconds", {})),
            seeds=dict(doc.get("seeds", {})),
        )


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _derive_seed(chash: str, label: str) -> int:
    """A stable per-run stream seed that is not any user-chosen seed."""
    digest = hashlib.sha256(f"{chash}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


# ---------------------------------------------------------------------------
# problem wiring


def build_spec(cfg: ExperimentConfig):
    if cfg.problem == "hyperelasticity":
        return ICNNSpec(hidden=cfg.architecture.hidden)
    if cfg.problem == "mechanochemistry":
        return MLPSpec(hidden=cfg.architecture.hidden, with_biases=cfg.architecture.with_biases)
    raise ValueError(f"no network spec for problem {cfg.problem!r}")


def _make_dataset(cfg: ExperimentConfig):
    maker = make_gent_dataset if cfg.problem == "hyperelasticity" else make_mechchem_dataset
    return maker(n=cfg.data.n, eps=cfg.data.eps, noise=cfg.data.noise, seed=cfg.data.seed)


def _residual_model(cfg: ExperimentConfig, spec, ds, p: int, lam: float):
    if cfg.problem == "hyperelasticity":
        return gent_residual_model(spec, ds, prior_p=p, prior_lambda=lam)
    return mechchem_residual_model(spec, ds, prior_p=p, prior_lambda=lam)


def _clamp_mask(cfg: ExperimentConfig, spec):
    return spec.constraint_mask() if cfg.problem == "hyperelasticity" else None


def _path_observable(cfg: ExperimentConfig, spec, points: int = VALIDATION_POINTS):
    """Validation path: abscissas, true S11, and a batched model S11 map."""
    if cfg.problem == "hyperelasticity":
        gammas, Fs = uniaxial_path(points)
        truth = np.array([gent_truth(F)[1][0, 0] for F in Fs])
        stress = jax.jit(
            jax.vmap(jax.vmap(hyper_stress_fn(spec), in_axes=(None, 0)), in_axes=(0, None))
        )
        inputs = jnp.asarray(np.stack(Fs))

        def batch(thetas):  # (S, P) -> (S, points)
            return np.asarray(stress(jnp.asarray(thetas), inputs))[:, :, 0, 0]

        return gammas, truth, batch

    gammas, Es, cs = mechchem_path(points)
    truth = np.array([mechchem_truth(E, c)[1][0, 0] for E, c in zip(Es, cs)])
    evecs = jnp.asarray(np.stack([[E[0, 0], E[1, 1], E[0, 1]] for E in Es]))
    cs_j = jnp.asarray(cs)
    obs = mechchem_observables_fn(spec)

    def one(theta, evec, c):
        S, _mu = obs(theta, evec, c)
        return S[0, 0]

    batched = jax.jit(jax.vmap(jax.vmap(one, in_axes=(None, 0, 0)), in_axes=(0, None, None)))

    def batch(thetas):
        return np.asarray(batched(jnp.asarray(thetas), evecs, cs_j))

    return gammas, truth, batch


class _JitTarget:
    """Numpy-facing adapter so the HMC loop sees compiled density/score."""

    def __init__(self, target):
        self._logp = jax.jit(target.log_density)
        self._score = jax.jit(target.score)

    def log_density(self, q):
        return float(self._logp(jnp.asarray(q)))

    def score(self, q):
        return np.asarray(self._score(jnp.asarray(q)))


class _NumpyGaussianL1:
    """Pure-numpy twin of the Gaussian-plus-L1 demo target (for the HMC reference)."""

    def __init__(self, mean, precision, l1_weight: float = 0.0):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.precision = np.asarray(precision, dtype=np.float64)
        self.l1_weight = float(l1_weight)

    def log_density(self, x):
        d = np.asarray(x) - self.mean
        return float(-0.5 * d @ self.precision @ d - self.l1_weight * np.abs(x).sum())

    def score(self, x):
        d = np.asarray(x) - self.mean
        return -self.precision @ d - self.l1_weight * np.sign(x)


def _demo_l1_weight(cfg: ExperimentConfig) -> float:
    return cfg.regularizer.lam if cfg.regularizer.p == 1 else 0.0


# ---------------------------------------------------------------------------
# stages


def _stage_generate(cfg, outdir, chash) -> dict:
    ds = _make_dataset(cfg)
    write_dataset(outdir / "dataset.txt", ds)
    return {"data": cfg.data.seed, "noise": cfg.data.noise.seed}


def _stage_train_map(cfg, outdir, chash) -> dict:
    spec = build_spec(cfg)
    ds = read_dataset(outdir / "dataset.txt")
    rng = np.random.default_rng(cfg.map.seed)
    theta0 = spec.init_params(rng)
    p, lam = cfg.regularizer.p, cfg.regularizer.lam
    cmask = _clamp_mask(cfg, spec)
    seeds = {"map_init": cfg.map.seed}

    if p == 0:
        plain = _residual_model(cfg, spec, ds, p=2, lam=0.0)
        sigma = jnp.asarray(plain.sigma)

        def data_loss(theta):
            r = plain.residual_fn(theta) / sigma
            return jnp.sum(r * r)

        gate_seed = cfg.map.resolved_gate_seed
        res = train_map_l0(
            data_loss,
            spec.n_params,
            lam,
            theta0,
            lr=cfg.map.lr,
            epochs=cfg.map.epochs,
            m_samples=cfg.regularizer.mc_samples,
            seed=gate_seed,
            clamp_mask=cmask,
        )
        provenance = {
            "regularizer": {"p": p, "lambda": lam},
            "theta_bar": [repr(v) for v in np.asarray(res.theta_bar).tolist()],
            "log_alpha": [repr(v) for v in np.asarray(res.gate_state.log_alpha).tolist()],
            "final_loss": repr(float(res.losses[-1])),
        }
        seeds["gates"] = gate_seed
    else:
        model = _residual_model(cfg, spec, ds, p=p, lam=lam)
        res = train_map(model, theta0, lr=cfg.map.lr, epochs=cfg.map.epochs)
        provenance = {
            "regularizer": {"p": p, "lambda": lam},
            "final_loss": repr(float(res.losses[-1])),
        }
    save_model(outdir / "map_model.json", ParamVector(spec=spec, values=np.asarray(res.theta)), provenance)
    return seeds


def _stage_sparsify(cfg, outdir, chash) -> dict:
    spec = build_spec(cfg)
    _pv, provenance = load_model(outdir / "map_model.json")
    if "theta_bar" not in provenance or "log_alpha" not in provenance:
        raise ValueError(
            "map model carries no gate state; pruning applies only to the "
            "gate-based regularizer (p=0)"
        )
    from .gates import GateState

    theta_bar = np.array([float(v) for v in provenance["theta_bar"]])
    log_alpha = np.array([float(v) for v in provenance["log_alpha"]])
    sm = prune(theta_bar, GateState(log_alpha=log_alpha), spec=spec,
               provenance={"regularizer": provenance.get("regularizer")})
    from .potentials import _spec_to_dict

    save_sparse_model(outdir / "sparse_model.json", sm, _spec_to_dict(spec))
    return {}


def _materializer(active_indices, n_full: int):
    idx = np.asarray(active_indices, dtype=np.int64)

    def expand(X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        full = np.zeros((X.shape[0], n_full))
        full[:, idx] = X
        return full

    return expand


def _sample_physical(cfg, outdir, chash):
    spec = build_spec(cfg)
    method = cfg.method
    p = cfg.regularizer.p
    ds = read_dataset(outdir / "dataset.txt")
    pv, _prov = load_model(outdir / "map_model.json")

    if p == 0:
        sm, _sd = load_sparse_model(outdir / "sparse_model.json")
        base = _residual_model(cfg, spec, ds, p=2, lam=0.0)
        target = compact_model(
            base,
            sm.active_indices,
            spec.n_params,
            prior_lambda=method.post_prune_lambda,
            clamp_mask=_clamp_mask(cfg, spec),
        )
        center = np.asarray(sm.compact_params)
        expand = _materializer(sm.active_indices, spec.n_params)
        prior_lam = method.post_prune_lambda
    else:
        target = _residual_model(cfg, spec, ds, p=p, lam=cfg.regularizer.lam)
        center = np.asarray(pv.values)
        expand = lambda X: np.atleast_2d(np.asarray(X, dtype=np.float64))
        prior_lam = cfg.regularizer.lam

    if method.kind == "svgd":
        ens = init_ensemble(center, method.particles, method.spread, seed=method.seed)
        _, ps = svgd_run(
            ens,
            target,
            step=StepRule("adam", method.lr),
            iterations=method.iterations,
            clamp_mask=target.clamp_mask,
        )
    elif method.kind == "psvgd":
        if p == 1:
            raise ValueError(
                "projected transport reconstructs the inactive subspace from a "
                "Gaussian prior; use p=2 (or p=0 with a post-prune weight)"
            )
        if prior_lam <= 0.0:
            raise ValueError("projected transport needs a proper prior (lambda > 0)")
        H = gauss_newton_hessian(target, center)
        prior_var = np.full(center.size, 1.0 / prior_lam)
        proj = active_subspace(H, prior_var, center, threshold=method.subspace_threshold)
        ens = init_ensemble(center, method.particles, method.spread, seed=method.seed)
        _, ps = psvgd_run(
            ens,
            target,
            proj,
            step=StepRule("adam", method.lr),
            iterations=method.iterations,
            seed=method.seed + 1,
        )
    else:  # hmc
        hc = method.hmc if method.hmc is not None else HMCConfig(0.005, 10, 2000, 200)
        ps = hmc_run(_JitTarget(target), center, hc, seed=method.seed)

    return PosteriorSamples(samples=expand(ps.samples), method=ps.method, iterations=ps.iterations)


def _sample_demo(cfg, outdir, chash):
    method = cfg.method
    if cfg.regularizer.p == 0:
        raise ValueError("the analytic demo supports p=1 (shrinkage) or p=2 (plain Gaussian)")
    l1 = _demo_l1_weight(cfg)
    center = np.zeros(DEMO_MEAN.size)
    if method.kind == "svgd":
        ens = init_ensemble(center, method.particles, method.spread, seed=method.seed)
        step = StepRule("adam", method.lr)
        if l1 > 0.0:
            _, ps = sparsifying_prior_svgd(
                DEMO_PRECISION, DEMO_MEAN, l1, ens, iterations=method.iterations, step=step
            )
        else:
            target = GaussianL1Target(mean=DEMO_MEAN, precision=DEMO_PRECISION)
            _, ps = svgd_run(ens, target, step=step, iterations=method.iterations)
    elif method.kind == "psvgd":
        target = GaussianL1Target(mean=DEMO_MEAN, precision=DEMO_PRECISION, l1_weight=l1)
        proj = active_subspace(
            DEMO_PRECISION, np.ones(center.size), center, threshold=method.subspace_threshold
        )
        ens = init_ensemble(center, method.particles, method.spread, seed=method.seed)
        _, ps = psvgd_run(
            ens, target, proj,
            step=StepRule("adam", method.lr),
            iterations=method.iterations,
            seed=method.seed + 1,
        )
    else:  # hmc
        hc = method.hmc if method.hmc is not None else HMCConfig(0.45, 20, 4000, 500)
        ps = hmc_run(_NumpyGaussianL1(DEMO_MEAN, DEMO_PRECISION, l1), center, hc, seed=method.seed)
    return PosteriorSamples(samples=np.asarray(ps.samples), method=ps.method, iterations=ps.iterations)


def _stage_sample(cfg, outdir, chash) -> dict:
    sampler = _sample_demo if cfg.problem == "gaussian-demo" else _sample_physical
    ps = sampler(cfg, outdir, chash)
    save_samples(outdir / "samples.txt", ps, seed=cfg.method.seed)
    return {"method": cfg.method.seed}


def _write_table(path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _evaluate_physical(cfg, outdir, chash) -> dict:
    spec = build_spec(cfg)
    ps = load_samples(outdir / "samples.txt")
    pv, _prov = load_model(outdir / "map_model.json")
    gammas, truth, batch = _path_observable(cfg, spec)

    pred_map = batch(pv.values[None, :])[0]
    map_r2 = r2_score(truth, pred_map)

    push = batch(ps.samples)  # (S, points)
    noise = cfg.data.noise
    rep_seed = _derive_seed(chash, "replicas")
    rng = np.random.default_rng(rep_seed)
    if noise.kind == "multiplicative":
        replicas = truth[:, None] * (1.0 + noise.level * rng.standard_normal((truth.size, REPLICA_COUNT)))
    elif noise.kind == "additive":
        replicas = truth[:, None] + noise.level * rng.standard_normal((truth.size, REPLICA_COUNT))
    else:
        replicas = truth[:, None]

    w1 = np.array([w1_distance(push[:, i], replicas[i]) for i in range(truth.size)])
    rows = zip(
        (float(g) for g in gammas),
        (float(m) for m in push.mean(axis=0)),
        (float(s) for s in push.std(axis=0, ddof=0)),
        (float(v) for v in w1),
    )
    _write_table(outdir / "table.csv", "gamma,mean,stdev,w1", rows)

    if cfg.regularizer.p == 0:
        sm, _sd = load_sparse_model(outdir / "sparse_model.json")
        active = int(sm.n_active)
    elif cfg.regularizer.p == 1:
        active = int(np.sum(np.abs(pv.values) > 1e-6))
    else:
        active = int(spec.n_params)

    summary = {
        "problem": cfg.problem,
        "method": ps.method,
        "regularizer_p": cfg.regularizer.p,
        "lambda": cfg.regularizer.lam,
        "n_params": int(spec.n_params),
        "active_count": active,
        "n_samples": int(ps.samples.shape[0]),
        "map_r2": map_r2,
        "mean_w1": float(w1.mean()),
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return {"replicas": rep_seed}


def _evaluate_demo(cfg, outdir, chash) -> dict:
    ps = load_samples(outdir / "samples.txt")
    l1 = _demo_l1_weight(cfg)
    ref_seed = _derive_seed(chash, "reference")
    ref = hmc_run(
        _NumpyGaussianL1(DEMO_MEAN, DEMO_PRECISION, l1),
        DEMO_MEAN.copy(),
        DEMO_REFERENCE_HMC,
        seed=ref_seed,
    )
    dim = ps.samples.shape[1]
    w1 = np.array([w1_distance(ps.samples[:, k], ref.samples[:, k]) for k in range(dim)])
    rows = [
        (k, float(ps.samples[:, k].mean()), float(ps.samples[:, k].std(ddof=0)), float(w1[k]))
        for k in range(dim)
    ]
    _write_table(outdir / "table.csv", "coord,mean,stdev,w1", rows)
    summary = {
        "problem": cfg.problem,
        "method": ps.method,
        "regularizer_p": cfg.regularizer.p,
        "lambda": cfg.regularizer.lam,
        "n_params": dim,
        "n_samples": int(ps.samples.shape[0]),
        "mean_w1": float(w1.mean()),
        "reference": "hmc",
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return {"reference": ref_seed}


def _stage_evaluate(cfg, outdir, chash) -> dict:
    if cfg.problem == "gaussian-demo":
        return _evaluate_demo(cfg, outdir, chash)
    return _evaluate_physical(cfg, outdir, chash)


_STAGE_FNS = {
    "generate": _stage_generate,
    "train-map": _stage_train_map,
    "sparsify": _stage_sparsify,
    "sample": _stage_sample,
    "evaluate": _stage_evaluate,
}


def stage_plan(cfg: ExperimentConfig) -> list[tuple[str, list[str], list[str]]]:
    """(name, required inputs, outputs) per stage, in execution order."""
    if cfg.problem == "gaussian-demo":
        return [
            ("sample", [], ["samples.txt"]),
            ("evaluate", ["samples.txt"], ["table.csv", "summary.json"]),
        ]
    plan = [
        ("generate", [], ["dataset.txt"]),
        ("train-map", ["dataset.txt"], ["map_model.json"]),
    ]
    if cfg.regularizer.p == 0:
        plan.append(("sparsify", ["map_model.json"], ["sparse_model.json"]))
        plan.append(
            ("sample", ["dataset.txt", "map_model.json", "sparse_model.json"], ["samples.txt"])
        )
        plan.append(
            ("evaluate", ["map_model.json", "sparse_model.json", "samples.txt"],
             ["table.csv", "summary.json"])
        )
    else:
        plan.append(("sample", ["dataset.txt", "map_model.json"], ["samples.txt"]))
        plan.append(("evaluate", ["map_model.json", "samples.txt"], ["table.csv", "summary.json"]))
    return plan


def _stage_intact(prev: RunManifest, outputs: list[str], outdir: Path) -> bool:
    return all(
        name in prev.files and (outdir / name).exists() and _sha256(outdir / name) == prev.files[name]
        for name in outputs
    )


def run_pipeline(cfg: ExperimentConfig, resume: bool = True, only: str | None = None) -> RunManifest:
    """Run all stages (or one named stage) for a configuration.

    With ``resume`` (the default), stages whose recorded outputs are intact
    under the same configuration hash are skipped.  ``only`` runs a single
    stage and requires its input artifacts to exist already.
    """
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    prev = RunManifest.load(outdir / "manifest.json")
    if prev is not None and prev.config_hash != chash:
        prev = None

    plan = stage_plan(cfg)
    names = [name for name, _, _ in plan]
    if only is not None and only not in names:
        raise StageError(
            only, f"not part of the plan for problem {cfg.problem!r} (stages: {', '.join(names)})"
        )

    man = RunManifest(config_hash=chash)
    if prev is not None:
        man.seeds.update(prev.seeds)

    for name, requires, outputs in plan:
        carried = prev is not None and _stage_intact(prev, outputs, outdir)
        if only is not None and name != only:
            if carried:
                for out in outputs:
                    man.files[out] = prev.files[out]
                if name in prev.stage_seconds:
                    man.stage_seconds[name] = prev.stage_seconds[name]
                man.stages.append(name)
            continue
        if only is None and resume and carried:
            for out in outputs:
                man.files[out] = prev.files[out]
            if name in prev.stage_seconds:
                man.stage_seconds[name] = prev.stage_seconds[name]
            man.stages.append(name)
            continue

        missing = [req for req in requires if not (outdir / req).exists()]
        if missing:
            raise StageError(
                name, f"missing input artifacts {missing}; run the earlier stages first"
            )
        t0 = time.perf_counter()
        try:
            stage_seeds = _STAGE_FNS[name](cfg, outdir, chash) or {}
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        man.stage_seconds[name] = time.perf_counter() - t0
        man.seeds.update(stage_seeds)
        for out in outputs:
            man.files[out] = _sha256(outdir / out)
        man.stages.append(name)

    man.save(outdir / "manifest.json")
    return man


# ---------------------------------------------------------------------------
# regularization sweep


def run_lcurve(cfg: ExperimentConfig, lambdas) -> tuple[list, float]:
    """Train one MAP per weight at a fixed seed/budget; write lcurve.csv."""
    if cfg.problem == "gaussian-demo":
        raise StageError("lcurve", "the regularization sweep applies to the physical problems")
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = build_spec(cfg)
    ds = _make_dataset(cfg)
    _gammas, truth, batch = _path_observable(cfg, spec)
    rng = np.random.default_rng(cfg.map.seed)
    theta0 = spec.init_params(rng)
    cmask = _clamp_mask(cfg, spec)
    p = cfg.regularizer.p

    plain = _residual_model(cfg, spec, ds, p=2, lam=0.0)
    sigma = jnp.asarray(plain.sigma)

    def data_loss(theta):
        r = plain.residual_fn(theta) / sigma
        return jnp.sum(r * r)

    def train_eval(lam: float) -> tuple[float, int]:
        if p == 0:
            res = train_map_l0(
                data_loss, spec.n_params, lam, theta0,
                lr=cfg.map.lr, epochs=cfg.map.epochs,
                m_samples=cfg.regularizer.mc_samples,
                seed=cfg.map.resolved_gate_seed, clamp_mask=cmask,
            )
            sm = prune(res.theta_bar, res.gate_state, spec=spec)
            theta, active = res.theta, int(sm.n_active)
        else:
            model = _residual_model(cfg, spec, ds, p=p, lam=lam)
            res = train_map(model, theta0, lr=cfg.map.lr, epochs=cfg.map.epochs)
            theta = res.theta
            if p == 1:
                active = int(np.sum(np.abs(np.asarray(theta)) > 1e-6))
            else:
                active = int(spec.n_params)
        r2 = r2_score(truth, batch(np.asarray(theta)[None, :])[0])
        return float(r2), active

    try:
        points, lam_star = lcurve_sweep(lambdas, train_eval)
    except Exception as exc:
        raise StageError("lcurve", exc) from exc

    lines = [f"# steinuq-lcurve lambda_star={lam_star!r}", "lambda,r2,active_count"]
    for pt in points:
        lines.append(f"{pt.lam!r},{pt.test_r2!r},{pt.active_count}")
    (outdir / "lcurve.csv").write_text("\n".join(lines) + "\n")
    return points, lam_star
