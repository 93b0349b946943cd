import numpy as np
import pytest
from pytest import approx

from steinuq.hmc import HMCConfig, hamiltonian, hmc_run, leapfrog
from steinuq.svgd import GaussianL1Target


class UnitGaussian:
    def log_density(self, q):
        q = np.asarray(q, dtype=float)
        return -0.5 * float(q @ q)

    def score(self, q):
        return -np.asarray(q, dtype=float)


class PositiveExponential:
    """Density exp(-q) on q > 0; log density -inf outside the support."""

    def log_density(self, q):
        q = float(np.asarray(q).ravel()[0])
        return -q if q > 0.0 else -np.inf

    def score(self, q):
        return -np.ones_like(np.asarray(q, dtype=float))


class TestConfig:
    def test_valid(self):
        cfg = HMCConfig(step_size=0.1, n_leapfrog=10, chain_length=100)
        assert cfg.burn_in == 0 and cfg.thinning == 1

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(step_size=0.0),
            dict(step_size=-0.1),
            dict(n_leapfrog=0),
            dict(chain_length=0),
            dict(burn_in=-1),
            dict(thinning=0),
        ],
    )
    def test_invalid(self, kwargs):
        base = dict(step_size=0.1, n_leapfrog=10, chain_length=100)
        base.update(kwargs)
        with pytest.raises(ValueError):
            HMCConfig(**base)


class TestLeapfrog:
    def test_hand_value_unit_gaussian(self):
        q, p = leapfrog(np.array([1.0]), np.array([0.0]), UnitGaussian().score, 0.1, 1)
        assert q[0] == approx(0.995, rel=1e-15)
        assert p[0] == approx(-0.09975, rel=1e-15)

    def test_zero_step_is_identity_with_unit_acceptance(self):
        t = UnitGaussian()
        q0, p0 = np.array([1.3, -0.4]), np.array([0.2, 0.8])
        q, p = leapfrog(q0, p0, t.score, 0.0, 5)
        assert np.array_equal(q, q0) and np.array_equal(p, p0)
        dh = hamiltonian(q, p, t.log_density) - hamiltonian(q0, p0, t.log_density)
        assert np.exp(-dh) == 1.0

    def test_reversibility(self):
        # integrate forward, flip momentum, integrate back
        t = UnitGaussian()
        q0, p0 = np.array([0.7]), np.array([-0.3])
        q1, p1 = leapfrog(q0, p0, t.score, 0.2, 25)
        q2, p2 = leapfrog(q1, -p1, t.score, 0.2, 25)
        assert q2[0] == approx(q0[0], abs=1e-12)
        assert -p2[0] == approx(p0[0], abs=1e-12)

    def test_requires_steps(self):
        with pytest.raises(ValueError):
            leapfrog(np.zeros(1), np.zeros(1), UnitGaussian().score, 0.1, 0)


class TestHamiltonian:
    def test_hand_value(self):
        h = hamiltonian(np.array([1.0]), np.array([2.0]), UnitGaussian().log_density)
        assert h == approx(2.5)


class TestRun:
    def test_unit_gaussian_statistics(self):
        cfg = HMCConfig(step_size=0.5, n_leapfrog=8, chain_length=10_000, burn_in=200)
        out = hmc_run(UnitGaussian(), np.array([3.0]), cfg, seed=42)
        x = out.samples[:, 0]
        assert out.diagnostics["kept"] == 10_000
        assert abs(x.mean()) < 0.1
        assert abs(x.std() - 1.0) < 0.1
        assert 0.6 <= out.diagnostics["acceptance_rate"] <= 0.999
        assert out.method == "hmc"

    def test_energy_error_quadratic_in_step(self):
        # halving the step at fixed trajectory time shrinks |dH| about 4x
        means = []
        for eps, n_leap in [(0.5, 8), (0.25, 16)]:
            cfg = HMCConfig(step_size=eps, n_leapfrog=n_leap, chain_length=2000, burn_in=100)
            out = hmc_run(UnitGaussian(), np.array([1.5]), cfg, seed=7)
            dh = out.diagnostics["abs_delta_h"]
            means.append(np.mean(dh[np.isfinite(dh)]))
        assert 3.0 <= means[0] / means[1] <= 5.0

    def test_deterministic(self):
        cfg = HMCConfig(step_size=0.4, n_leapfrog=5, chain_length=200, burn_in=10)
        a = hmc_run(UnitGaussian(), np.zeros(2), cfg, seed=3)
        b = hmc_run(UnitGaussian(), np.zeros(2), cfg, seed=3)
        assert np.array_equal(a.samples, b.samples)
        c = hmc_run(UnitGaussian(), np.zeros(2), cfg, seed=4)
        assert not np.array_equal(a.samples, c.samples)

    def test_thinning_and_burn_in_bookkeeping(self):
        cfg = HMCConfig(step_size=0.3, n_leapfrog=3, chain_length=12, burn_in=5, thinning=3)
        out = hmc_run(UnitGaussian(), np.zeros(1), cfg, seed=0)
        assert out.samples.shape == (4, 1)
        assert out.iterations == 17
        assert out.diagnostics["abs_delta_h"].shape == (17,)

    def test_bounded_support_rejects_instead_of_aborting(self):
        cfg = HMCConfig(step_size=0.3, n_leapfrog=4, chain_length=500, burn_in=50)
        out = hmc_run(PositiveExponential(), np.array([1.0]), cfg, seed=5)
        assert (out.samples > 0.0).all()
        assert np.isinf(out.diagnostics["abs_delta_h"]).any()
        assert 0.0 < out.diagnostics["acceptance_rate"] < 1.0
        assert out.samples.mean() == approx(1.0, abs=0.2)  # Exp(1) mean

    def test_multidimensional_gaussian(self):
        cfg = HMCConfig(step_size=0.5, n_leapfrog=8, chain_length=4000, burn_in=200)
        out = hmc_run(UnitGaussian(), np.full(3, 2.0), cfg, seed=11)
        assert out.samples.shape == (4000, 3)
        assert np.abs(out.samples.mean(0)).max() < 0.1
        assert np.abs(out.samples.std(0) - 1.0).max() < 0.1

    def test_invalid_start(self):
        cfg = HMCConfig(step_size=0.1, n_leapfrog=2, chain_length=10)
        with pytest.raises(ValueError):
            hmc_run(PositiveExponential(), np.array([-1.0]), cfg, seed=0)

    def test_array_backed_target_protocol(self):
        # the same target objects used for particle transport drive the chain
        target = GaussianL1Target(mean=np.array([2.0]), precision=np.array([[4.0]]))
        cfg = HMCConfig(step_size=0.2, n_leapfrog=3, chain_length=2000, burn_in=100)
        out = hmc_run(target, np.zeros(1), cfg, seed=21)
        assert out.samples[:, 0].mean() == approx(2.0, abs=0.1)
        assert out.samples[:, 0].std() == approx(0.5, abs=0.1)
