"""Desk-scale acceptance checks across the whole package.

Each test is one independent end-to-end claim, from gradient correctness
through the full staged pipeline.  The heavy hyperelastic reference chain
(data, the three regularized MAP fits, the pruned posterior) is built once
per module and shared.
"""

import time
from dataclasses import replace
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
import pytest

from steinuq.autodiff import check_gradient
from steinuq.configs import config_from_dict
from steinuq.datagen import (
    NoiseSpec,
    gent_truth,
    make_gent_dataset,
    make_mechchem_dataset,
    mechchem_truth,
    uniaxial_path,
)
from steinuq.gates import GateState, l0_loss_terms, prune
from steinuq.hmc import HMCConfig, hmc_run
from steinuq.metrics import w1_distance
from steinuq.pipeline import run_pipeline
from steinuq.posterior import (
    LogPosteriorModel,
    compact_model,
    gent_residual_model,
    mechchem_residual_model,
    train_map,
    train_map_l0,
)
from steinuq.potentials import (
    ICNNSpec,
    MLPSpec,
    hyper_potential_fn,
    hyper_stress_fn,
    mechchem_observables_fn,
)
from steinuq.svgd import (
    GaussianL1Target,
    StepRule,
    active_subspace,
    gauss_newton_hessian,
    init_ensemble,
    psvgd_run,
    sparsifying_prior_svgd,
    svgd_run,
)


# ---------------------------------------------------------------------------
# shared hyperelastic reference chain


@pytest.fixture(scope="module")
def workspace():
    ws = {}
    spec = ICNNSpec()
    noise = NoiseSpec(kind="multiplicative", level=0.1, seed=3)
    ds = make_gent_dataset(n=80, eps=0.2, noise=noise, seed=0)
    gammas, Fs = uniaxial_path(points=200)
    S11_true = np.array([gent_truth(F)[1][0, 0] for F in Fs])
    stress_b = jax.jit(
        jax.vmap(jax.vmap(hyper_stress_fn(spec), in_axes=(None, 0)), in_axes=(0, None))
    )
    Fs_j = jnp.asarray(np.stack(Fs))

    rng = np.random.default_rng(99)
    replicas = S11_true[:, None] * (
        1.0 + noise.level * rng.standard_normal((S11_true.size, 200))
    )

    def path_s11(thetas):
        return np.asarray(stress_b(jnp.asarray(np.atleast_2d(thetas)), Fs_j))[:, :, 0, 0]

    def mean_path_w1(thetas):
        S = path_s11(thetas)
        return float(np.mean([w1_distance(S[:, i], replicas[i]) for i in range(S.shape[1])]))

    def path_r2(theta):
        pred = path_s11(theta)[0]
        ss_res = np.sum((S11_true - pred) ** 2)
        ss_tot = np.sum((S11_true - S11_true.mean()) ** 2)
        return 1.0 - ss_res / ss_tot

    theta0 = spec.init_params(np.random.default_rng(7))
    cmask = spec.constraint_mask()
    plain = gent_residual_model(spec, ds, prior_p=2, prior_lambda=0.0)
    sigma = jnp.asarray(plain.sigma)

    def data_loss(theta):
        r = plain.residual_fn(theta) / sigma
        return jnp.sum(r * r)

    t0 = time.perf_counter()
    m2 = gent_residual_model(spec, ds, prior_p=2, prior_lambda=0.5)
    fit_l2 = train_map(m2, theta0, lr=0.005, epochs=3000)
    m1 = gent_residual_model(spec, ds, prior_p=1, prior_lambda=1e-2)
    fit_l1 = train_map(m1, theta0, lr=0.01, epochs=3000)
    fit_l0 = train_map_l0(
        data_loss, spec.n_params, 10.0, theta0, lr=0.08, epochs=4000, seed=11, clamp_mask=cmask
    )
    ws["map_seconds"] = time.perf_counter() - t0

    sparse = prune(fit_l0.theta_bar, fit_l0.gate_state, spec=spec)
    compact = compact_model(
        plain, sparse.active_indices, spec.n_params, prior_lambda=1e-3, clamp_mask=cmask
    )
    idx = np.asarray(sparse.active_indices)

    def expand(Xc):
        Xc = np.atleast_2d(Xc)
        full = np.zeros((Xc.shape[0], spec.n_params))
        full[:, idx] = Xc
        return full

    def sparse_posterior_w1(n_particles: int) -> float:
        ens = init_ensemble(
            np.asarray(sparse.compact_params), n_particles, 0.05, seed=100 + n_particles
        )
        ens, _ = svgd_run(
            ens, compact, step=StepRule("adam", 0.01), iterations=1000,
            clamp_mask=compact.clamp_mask,
        )
        return mean_path_w1(expand(ens.particles))

    ws.update(
        spec=spec, ds=ds, theta0=theta0, cmask=cmask, m2=m2,
        fit_l2=fit_l2, fit_l1=fit_l1, fit_l0=fit_l0, sparse=sparse,
        r2_l2=path_r2(fit_l2.theta), r2_l1=path_r2(fit_l1.theta), r2_l0=path_r2(fit_l0.theta),
        mean_path_w1=mean_path_w1, sparse_posterior_w1=sparse_posterior_w1,
        w1_sparse_10=sparse_posterior_w1(10),
    )
    return ws


# ---------------------------------------------------------------------------
# 01 gradient correctness


def test_01_gradients_match_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    icnn = ICNNSpec(hidden=(4, 5))
    energy = hyper_potential_fn(icnn)
    mlp = MLPSpec(hidden=(5,))
    observables = mechchem_observables_fn(mlp)

    worst_smooth, worst_gate, checked = 0.0, 0.0, 0
    for rep in range(25):
        # stored-energy gradient with respect to the weights at a random stretch
        F = jnp.asarray(np.eye(3) + 0.15 * rng.standard_normal((3, 3)))
        theta = icnn.init_params(rng) + 0.05  # keep constrained weights off the clamp

        def f_energy(th, F=F):
            return energy(th, F)

        worst_smooth = max(worst_smooth, check_gradient(f_energy, theta))
        checked += 1

        # coupled stress/chemical-potential gradient
        evec = jnp.asarray(rng.uniform(-0.2, 0.2, 3))
        c = float(rng.uniform(0.05, 0.95))
        theta_m = mlp.init_params(rng)

        def f_obs(th, evec=evec, c=c):
            S, mu = observables(th, evec, c)
            return S[0, 0] + 0.3 * mu

        worst_smooth = max(worst_smooth, check_gradient(f_obs, theta_m))
        checked += 1

        # posterior scores for linear-residual models under both priors
        A = jnp.asarray(rng.standard_normal((6, 8)))
        b = jnp.asarray(rng.standard_normal(6))
        model = LogPosteriorModel(
            residual_fn=lambda th, A=A, b=b: A @ th - b,
            sigma=rng.uniform(0.5, 2.0, 6),
            prior_p=1 if rep % 2 else 2,
            prior_lambda=float(rng.uniform(0.1, 2.0)),
        )
        theta_p = rng.standard_normal(8)
        theta_p = np.where(np.abs(theta_p) < 0.1, 0.3, theta_p)  # stay off the L1 kink
        worst_smooth = max(worst_smooth, check_gradient(model.log_density, theta_p))
        checked += 1

        # gate objective with respect to the gate locations, interior noise draws
        w = jnp.asarray(rng.uniform(0.5, 1.5, 8))
        y = jnp.asarray(rng.standard_normal(8))
        terms = l0_loss_terms(
            lambda th, w=w, y=y: jnp.sum((th * w - y) ** 2),
            GateState(log_alpha=rng.uniform(-0.5, 0.5, 8)),
        )
        theta_bar = jnp.asarray(rng.standard_normal(8))
        U = jnp.asarray(rng.uniform(0.3, 0.7, (1, 8)))
        lam = float(rng.uniform(0.5, 2.0))

        def f_gate(log_alpha, terms=terms, theta_bar=theta_bar, U=U, lam=lam):
            mc_loss, penalty = terms(theta_bar, log_alpha, U)
            return mc_loss + lam * penalty

        worst_gate = max(worst_gate, check_gradient(f_gate, rng.uniform(-0.5, 0.5, 8)))
        checked += 1

    elapsed = time.perf_counter() - t0
    assert checked == 100
    assert worst_smooth < 1e-5, f"worst smooth-path gradient error {worst_smooth:.2e}"
    assert worst_gate < 1e-4, f"worst gate-path gradient error {worst_gate:.2e}"
    assert elapsed < 60.0, f"gradient sweep took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 02 transport degenerates to optimization for one particle


def test_02_single_particle_transport_is_map_ascent():
    target_center = jnp.asarray([2.0, -1.0])
    weights = jnp.sqrt(jnp.asarray([1.5, 0.4]) / 2.0)
    model = LogPosteriorModel(
        residual_fn=lambda th: weights * (th - target_center),
        sigma=np.ones(2),
        prior_p=2,
        prior_lambda=0.0,
    )
    start = np.array([[-0.3, 0.6]])
    from steinuq.svgd import ParticleEnsemble

    ens, _ = svgd_run(
        ParticleEnsemble(particles=start.copy()),
        model,
        step=StepRule("adam", 0.05),
        iterations=500,
    )
    fit = train_map(model, start[0], lr=0.05, epochs=500)
    gap = np.max(np.abs(ens.particles[0] - np.asarray(fit.theta)))
    assert gap < 1e-12, f"single-particle transport drifted {gap:.2e} from plain ascent"


# ---------------------------------------------------------------------------
# 03 both transports recover a correlated gaussian


def test_03_bivariate_gaussian_recovered_by_both_transports():
    t0 = time.perf_counter()
    m = np.array([1.0, -0.5])
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    prec = np.linalg.inv(cov)
    target = GaussianL1Target(mean=m, precision=prec)

    ens, _ = svgd_run(
        init_ensemble(np.zeros(2), 100, 1.0, seed=8),
        target,
        step=StepRule("adam", 0.05),
        iterations=1500,
    )
    proj = active_subspace(prec, np.full(2, 1e4), m)
    assert proj.rank == 2
    _, ps = psvgd_run(
        init_ensemble(np.zeros(2), 100, 1.0, seed=8),
        target,
        proj,
        step=StepRule("adam", 0.05),
        iterations=1500,
        sample_complement=False,
    )

    ref = np.random.default_rng(123).multivariate_normal(m, cov, size=200_000)
    for name, X in (("full", ens.particles), ("projected", ps.samples)):
        for k in range(2):
            w1 = w1_distance(X[:, k], ref[:, k])
            assert w1 <= 0.05, f"{name} transport marginal {k}: W1={w1:.4f}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"gaussian recovery took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 04-07 the hyperelastic reference chain


def test_04_stress_map_fits_under_every_regularizer(workspace):
    assert workspace["map_seconds"] < 600.0, f"MAP fits took {workspace['map_seconds']:.0f}s"
    for key in ("r2_l0", "r2_l1", "r2_l2"):
        assert workspace[key] >= 0.95, f"{key} = {workspace[key]:.4f}"


def test_05_gate_training_yields_tiny_active_set(workspace):
    n_params = workspace["spec"].n_params
    n_active = workspace["sparse"].n_active
    assert n_params >= 1000
    assert n_active <= 20, f"{n_active} surviving weights"
    assert workspace["r2_l0"] >= 0.90, f"sparse fit R2 {workspace['r2_l0']:.4f}"


def test_06_pushforward_w1_stable_in_particle_count(workspace):
    w1 = {10: workspace["w1_sparse_10"]}
    for S in (5, 25, 50, 100):
        w1[S] = workspace["sparse_posterior_w1"](S)
    ladder = [w1[S] for S in (5, 10, 25, 50)]
    for prev, nxt in zip(ladder, ladder[1:]):
        assert nxt <= 1.1 * prev, f"W1 ladder rose: {ladder}"
    drift = abs(w1[50] - w1[100]) / w1[50]
    assert drift < 0.10, f"doubling 50 -> 100 moved W1 by {100 * drift:.1f}%"


def test_07_sparse_posterior_matches_dense_and_beats_projected(workspace):
    spec, m2 = workspace["spec"], workspace["m2"]
    theta_l2 = workspace["fit_l2"].theta
    cmask = workspace["cmask"]
    mean_path_w1 = workspace["mean_path_w1"]

    ens, _ = svgd_run(
        init_ensemble(theta_l2, 10, 0.05, seed=55),
        m2,
        step=StepRule("adam", 0.005),
        iterations=1000,
        clamp_mask=cmask,
    )
    w1_dense = mean_path_w1(ens.particles)

    H = gauss_newton_hessian(m2, theta_l2)
    proj = active_subspace(H, np.full(spec.n_params, 1.0 / 0.5), theta_l2)
    _, ps = psvgd_run(
        init_ensemble(theta_l2, 10, 0.05, seed=56),
        m2,
        proj,
        step=StepRule("adam", 0.005),
        iterations=1000,
        seed=57,
    )
    w1_projected = mean_path_w1(ps.samples)

    w1_sparse = workspace["w1_sparse_10"]
    assert w1_sparse <= 1.1 * w1_dense, f"sparse {w1_sparse:.4f} vs dense {w1_dense:.4f}"
    assert w1_sparse < w1_projected, f"sparse {w1_sparse:.4f} vs projected {w1_projected:.4f}"


# ---------------------------------------------------------------------------
# 08 chain statistics and integrator scaling


class _UnitGaussian:
    def log_density(self, q):
        return -0.5 * float(np.sum(np.asarray(q) ** 2))

    def score(self, q):
        return -np.asarray(q)


def test_08_hmc_moments_and_energy_error_scaling():
    out = hmc_run(
        _UnitGaussian(), np.zeros(1), HMCConfig(0.5, 8, 10_000, burn_in=200), seed=42
    )
    mean, std = float(out.samples.mean()), float(out.samples.std())
    acc = out.diagnostics["acceptance_rate"]
    assert abs(mean) < 0.1, f"chain mean {mean:.3f}"
    assert abs(std - 1.0) < 0.1, f"chain std {std:.3f}"
    assert 0.6 <= acc <= 0.999, f"acceptance {acc:.3f}"

    means = []
    for eps, n_leap in ((0.5, 8), (0.25, 16)):
        cfg = HMCConfig(step_size=eps, n_leapfrog=n_leap, chain_length=2000, burn_in=100)
        run = hmc_run(_UnitGaussian(), np.array([1.5]), cfg, seed=7)
        dh = run.diagnostics["abs_delta_h"]
        means.append(np.mean(dh[np.isfinite(dh)]))
    ratio = means[0] / means[1]
    assert 3.0 <= ratio <= 5.0, f"energy error ratio {ratio:.2f} under step halving"


# ---------------------------------------------------------------------------
# 09 transport metric against a brute-force oracle


def test_09_w1_agrees_with_brute_force():
    def oracle(a, b):
        a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
        xs = np.sort(np.concatenate([a, b]))
        mids = 0.5 * (xs[:-1] + xs[1:])
        Fa = np.searchsorted(a, mids, side="right") / a.size
        Fb = np.searchsorted(b, mids, side="right") / b.size
        return float(np.sum(np.abs(Fa - Fb) * np.diff(xs)))

    rng = np.random.default_rng(17)
    for _ in range(200):
        a = rng.standard_normal(rng.integers(1, 60)) * rng.uniform(0.5, 3.0)
        b = rng.standard_normal(rng.integers(1, 60)) + rng.uniform(-2.0, 2.0)
        fast, slow = w1_distance(a, b), oracle(a, b)
        assert abs(fast - slow) <= 1e-10 * max(1.0, abs(slow)), f"{fast} vs {slow}"


# ---------------------------------------------------------------------------
# 10 shrinkage demo against a grid-search mode


def test_10_l1_demo_shrinks_weak_coordinate_to_grid_mode():
    Lam = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.025]])
    m = np.array([1.0, 2.0, 3.0])
    _, samples = sparsifying_prior_svgd(
        Lam, m, 1.0, init_ensemble(np.zeros(3), 50, 1.0, seed=15), iterations=1000
    )
    mean = samples.samples.mean(0)

    # brute-force the penalized mode of the informed pair on a 1e-3 grid
    block = Lam[:2, :2]
    x1 = np.arange(0.0, 1.5001, 1e-3)
    x2 = np.arange(0.5, 2.5001, 1e-3)
    D1 = x1[:, None] - m[0]
    D2 = x2[None, :] - m[1]
    objective = (
        0.5 * (block[0, 0] * D1**2 + 2 * block[0, 1] * D1 * D2 + block[1, 1] * D2**2)
        + np.abs(x1)[:, None]
        + np.abs(x2)[None, :]
    )
    i, j = np.unravel_index(np.argmin(objective), objective.shape)
    mode = np.array([x1[i], x2[j]])
    np.testing.assert_allclose(mode, [2.0 / 3.0, 5.0 / 3.0], atol=2e-3)

    assert abs(mean[2]) < 0.2, f"weak coordinate mean {mean[2]:.3f}"
    assert abs(mean[0] - mode[0]) < 0.3, f"coordinate 0 mean {mean[0]:.3f} vs mode {mode[0]:.3f}"
    assert abs(mean[1] - mode[1]) < 0.3, f"coordinate 1 mean {mean[1]:.3f} vs mode {mode[1]:.3f}"


# ---------------------------------------------------------------------------
# 11 learned chemical potential keeps the double-well sign structure


def test_11_learned_chemical_potential_has_double_well_signs():
    spec = MLPSpec()
    noise = NoiseSpec(kind="multiplicative", level=0.1, seed=5)
    ds = make_mechchem_dataset(n=100, eps=0.2, noise=noise, seed=2)
    theta0 = spec.init_params(np.random.default_rng(9))
    plain = mechchem_residual_model(spec, ds, prior_p=2, prior_lambda=0.0)
    sigma = jnp.asarray(plain.sigma)

    def data_loss(theta):
        r = plain.residual_fn(theta) / sigma
        return jnp.sum(r * r)

    fit = train_map_l0(
        data_loss, spec.n_params, 0.1, theta0, lr=0.08, epochs=8000, seed=13
    )

    # ground truth: on the zero-strain slice the true potential's roots sit
    # exactly at the well/barrier composition values
    E0 = np.zeros((2, 2))
    for c_root in (0.0, 0.5, 1.0):
        mu_true = mechchem_truth(E0, c_root)[2]
        assert abs(mu_true) < 1e-12

    observables = mechchem_observables_fn(spec)
    zero_evec = jnp.zeros(3)

    def mu_hat(c: float) -> float:
        _S, mu = observables(jnp.asarray(fit.theta), zero_evec, float(c))
        return float(mu)

    cs_lo = np.linspace(0.02, 0.48, 24)
    cs_hi = np.linspace(0.52, 0.98, 24)
    mus_lo = np.array([mu_hat(c) for c in cs_lo])
    mus_hi = np.array([mu_hat(c) for c in cs_hi])

    assert mus_lo.max() > 0.0, f"no positive excursion below the barrier: max {mus_lo.max():.3f}"
    assert mus_hi.min() < 0.0, f"no negative excursion above the barrier: min {mus_hi.min():.3f}"
    # the sign change happens between the positive and negative excursions
    c_pos = cs_lo[int(np.argmax(mus_lo))]
    c_neg = cs_hi[int(np.argmin(mus_hi))]
    grid = np.linspace(c_pos, c_neg, 50)
    values = np.array([mu_hat(c) for c in grid])
    assert (values > 0).any() and (values < 0).any()
    first_negative = int(np.argmax(values < 0))
    assert (values[:first_negative] >= 0).all(), "sign pattern is not positive-then-negative"


# ---------------------------------------------------------------------------
# 12 pipeline determinism


def test_12_pipeline_reruns_are_byte_identical(tmp_path):
    raw = {
        "problem": "hyperelasticity",
        "output_dir": str(tmp_path / "a"),
        "data": {"n": 30, "noise": {"kind": "multiplicative", "level": 0.1, "seed": 3}},
        "regularizer": {"p": 0, "lambda": 10.0},
        "map": {"lr": 0.08, "epochs": 300, "seed": 7, "gate_seed": 11},
        "method": {"kind": "svgd", "particles": 4, "iterations": 60, "lr": 0.01},
    }
    cfg_a = config_from_dict(raw)
    cfg_b = replace(cfg_a, output_dir=str(tmp_path / "b"))
    man_a = run_pipeline(cfg_a)
    man_b = run_pipeline(cfg_b)
    assert man_a.config_hash == man_b.config_hash
    assert man_a.files == man_b.files
    for name in man_a.files:
        bytes_a = (tmp_path / "a" / name).read_bytes()
        bytes_b = (tmp_path / "b" / name).read_bytes()
        assert bytes_a == bytes_b, f"{name} differs between identical runs"
