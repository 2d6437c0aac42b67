import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import random_unitary, two_mode_nu_minus_pt, williamson_nu
from entrans.errors import DivergenceError, DomainError, InvalidStateError, SingularThresholdError
from entrans.fock_space import ModeLayout, make_tmsv
from entrans.fourport import DeviceSpec, apply_channel
from entrans.gaussian import (
    GaussianState,
    ScalarDevice,
    ThresholdInputs,
    amplifier_margin,
    fiber_margin,
    is_separable_ppt,
    lmax_fiber,
    margin_crossing,
    max_gain,
    moments_from_density,
    nth_threshold,
    realify,
    symplectic_eigenvalues,
    symplectic_form,
    tmsv_covariance,
    transform_moments,
    transform_moments_device,
    vacuum_state,
)

seeds = st.integers(0, 2**32 - 1)


def random_gaussian(rng):
    """Thermal diagonal covariance dressed with passive optics and local squeezing."""
    nu = 0.5 + rng.exponential(0.5, size=2)
    D = np.diag(np.repeat(nu, 2))
    sq = np.diag(np.exp([r := rng.normal(0, 0.4), -r, (s := rng.normal(0, 0.4)), -s]))
    S = realify(random_unitary(rng, 2)) @ sq @ realify(random_unitary(rng, 2))
    return GaussianState(rng.normal(size=4), S @ D @ S.T)


class TestStates:
    def test_tmsv_examples(self):
        assert np.allclose(tmsv_covariance(0).cov, np.eye(4) / 2)
        assert tmsv_covariance(0.5).cov[0, 0] == pytest.approx(0.5 * np.cosh(1.0))

    @given(st.floats(0, 3))
    def test_tmsv_is_pure(self, zeta):
        cov = tmsv_covariance(zeta).cov
        assert np.allclose(williamson_nu(cov), 0.5, atol=1e-9 * np.cosh(2 * zeta))
        assert np.allclose(symplectic_eigenvalues(cov), 0.5, atol=1e-9 * np.cosh(2 * zeta))

    def test_unphysical_rejected(self):
        with pytest.raises(InvalidStateError):
            GaussianState(np.zeros(4), np.eye(4) * 0.3)
        with pytest.raises(InvalidStateError):
            GaussianState(np.zeros(2), np.array([[1.0, 0.2], [0.0, 1.0]]))

    def test_json_roundtrip(self, rng):
        g = random_gaussian(rng)
        back = GaussianState.from_dict(json.loads(json.dumps(g.to_dict())))
        assert np.array_equal(back.cov, g.cov) and back.convention == g.convention

    @given(seeds)
    def test_symplectic_eigenvalues_match_williamson(self, seed):
        g = random_gaussian(np.random.default_rng(seed))
        assert np.allclose(symplectic_eigenvalues(g.cov), williamson_nu(g.cov), atol=1e-9)

    def test_realify_of_unitary_is_symplectic_orthogonal(self, rng):
        S = realify(random_unitary(rng, 2))
        omega = symplectic_form(2)
        assert np.allclose(S @ omega @ S.T, omega) and np.allclose(S @ S.T, np.eye(4))


class TestPPT:
    def test_vacuum_on_boundary(self):
        res = is_separable_ppt(vacuum_state())
        assert res.separable and abs(res.margin) < 1e-12

    def test_tmsv_value(self):
        res = is_separable_ppt(tmsv_covariance(0.5))
        assert res.entangled
        assert res.nu_min == pytest.approx(0.5 * np.exp(-1.0), abs=1e-12)

    @given(seeds)
    def test_matches_determinant_invariants(self, seed):
        g = random_gaussian(np.random.default_rng(seed))
        assert is_separable_ppt(g).nu_min == pytest.approx(two_mode_nu_minus_pt(g.cov), abs=1e-8)

    def test_needs_two_modes(self):
        with pytest.raises(DomainError):
            is_separable_ppt(vacuum_state(1))


class TestTransform:
    def test_lossless_is_identity(self, rng):
        g = random_gaussian(rng)
        out = transform_moments(g, ScalarDevice(1.0), ScalarDevice(1.0))
        assert np.allclose(out.cov, g.cov) and np.allclose(out.mean, g.mean)

    def test_half_transmission_diagonal(self):
        out = transform_moments(tmsv_covariance(0.3), *[ScalarDevice(np.sqrt(0.5))] * 2)
        assert out.cov[0, 0] == pytest.approx(0.5 * (1 + 0.5 * (np.cosh(0.6) - 1)))

    def test_full_absorption_gives_vacuum(self, rng):
        out = transform_moments(random_gaussian(rng), ScalarDevice(0.0), ScalarDevice(0.0))
        assert np.allclose(out.cov, np.eye(4) / 2) and np.allclose(out.mean, 0)

    @given(seeds, st.sampled_from([1, -1]), st.floats(0, 3))
    def test_physicality_preserved(self, seed, sigma, n_th):
        rng = np.random.default_rng(seed)
        g = random_gaussian(rng)
        mags = rng.uniform(0, 1, 2) if sigma == 1 else rng.uniform(1, 3, 2)
        devs = [ScalarDevice(m * np.exp(1j * rng.uniform(0, 6)), sigma, n_th) for m in mags]
        out = transform_moments(g, *devs)
        assert np.linalg.eigvalsh(out.cov + 0.5j * symplectic_form(2))[0] > -1e-10

    def test_scalar_and_matrix_forms_agree(self, rng):
        g = random_gaussian(rng)
        t1, t2 = 1.3 * np.exp(0.4j), 1.1 * np.exp(-2j)
        a = transform_moments(g, ScalarDevice(t1, -1, 0.7), ScalarDevice(t2, -1, 0.7))
        b = transform_moments_device(g, DeviceSpec.diagonal(t1, t2, -1, 0.7))
        assert np.allclose(a.cov, b.cov, atol=1e-12) and np.allclose(a.mean, b.mean)


class TestFockAgreement:
    def test_tmsv_through_lossy_fibers(self):
        q = np.tanh(0.3)
        rho = make_tmsv(q, ModeLayout((12, 12))).density()
        t1, t2 = np.sqrt(0.5), 0.8 * np.exp(1.2j)
        fock = moments_from_density(apply_channel(rho, DeviceSpec.diagonal(t1, t2)))
        gauss = transform_moments(tmsv_covariance(0.3), ScalarDevice(t1), ScalarDevice(t2))
        assert np.abs(fock.cov - gauss.cov).max() < 1e-6

    def test_general_thermal_device(self, rng):
        U, W = random_unitary(rng, 2), random_unitary(rng, 2)
        spec = DeviceSpec.from_transmission(U @ np.diag([0.9, 0.5]) @ W, 1, 0.05)
        rho = make_tmsv(np.tanh(0.3), ModeLayout((12, 12))).density()
        out = apply_channel(rho, spec, device_cutoff=8, field_cutoffs=(12, 12))
        fock = moments_from_density(out)
        gauss = transform_moments_device(tmsv_covariance(0.3), spec)
        assert np.abs(fock.cov - gauss.cov).max() < 1e-6

    def test_amplifier(self):
        rho = make_tmsv(np.tanh(0.2), ModeLayout((8, 8))).density()
        spec = DeviceSpec.diagonal(1.1, 1.05, sigma=-1)
        fock = moments_from_density(apply_channel(rho, spec, field_cutoffs=(22, 22)))
        gauss = transform_moments(tmsv_covariance(0.2), ScalarDevice(1.1, -1), ScalarDevice(1.05, -1))
        assert np.abs(fock.cov - gauss.cov).max() < 1e-6


class TestThresholds:
    def test_nth_threshold_examples(self):
        assert nth_threshold(ThresholdInputs(30.0, np.sqrt(0.5))) == pytest.approx(0.5)
        assert nth_threshold(ThresholdInputs(0.0, np.sqrt(0.3))) <= 0
        with pytest.raises(SingularThresholdError):
            nth_threshold(ThresholdInputs(1.0, 1.0))

    def test_inputs_validated(self):
        with pytest.raises(DomainError):
            ThresholdInputs(1.0, 0.9, R=0.6)

    @given(st.floats(0.05, 4), st.floats(0.05, 0.95), st.floats(0, 0.9), st.floats(0, 6.28))
    def test_absorber_threshold_zeroes_the_margin(self, zeta, t_sq, r_frac, phase):
        r_sq = r_frac * (1 - t_sq)
        R = np.sqrt(r_sq) * np.exp(1j * phase)
        n_star = nth_threshold(ThresholdInputs(zeta, np.sqrt(t_sq), R))
        if n_star > 0:
            dev = ScalarDevice(np.sqrt(t_sq), 1, n_star, R)
            g = transform_moments(tmsv_covariance(zeta), dev, dev)
            assert abs(is_separable_ppt(g).margin) < 1e-9 * np.cosh(2 * zeta)

    @given(st.floats(0.05, 4), st.floats(1.01, 2.0), st.floats(0, 0.5))
    def test_amplifier_threshold_zeroes_the_margin(self, zeta, t_sq, r_sq):
        R = np.sqrt(r_sq)
        n_star = nth_threshold(ThresholdInputs(zeta, np.sqrt(t_sq), R, sigma=-1))
        if n_star > 0:
            assert abs(amplifier_margin(zeta, t_sq, n_star, R)) < 1e-9 * np.cosh(2 * zeta) * t_sq

    def test_lmax_examples(self):
        assert lmax_fiber(30.0, 1.0) == pytest.approx(0.5 * np.log(1.5))
        assert lmax_fiber(0.0, 1.0) == 0
        assert lmax_fiber(1.0, np.inf) == 0
        with pytest.raises(DivergenceError):
            lmax_fiber(1.0, 0.0)

    @pytest.mark.parametrize("zeta", [0.25, 0.5, 1.0, 3.0])
    @pytest.mark.parametrize("n_th", [0.5, 1.0, 2.0])
    def test_consistency_triangle(self, zeta, n_th):
        lmax = lmax_fiber(zeta, n_th)
        assert abs(fiber_margin(zeta, n_th, lmax)) < 1e-9
        crossing = margin_crossing(lambda x: fiber_margin(zeta, n_th, x), np.linspace(0, 2, 81))
        assert abs(crossing - lmax) < 1e-6
        n_back = nth_threshold(ThresholdInputs(zeta, np.exp(-crossing)))
        assert abs(n_back - n_th) < 1e-6

    def test_max_gain_examples(self):
        assert max_gain(np.inf) == (2.0, 1.0)
        assert max_gain(0.0) == (1.0, 0.0)
        assert max_gain(np.arctanh(0.5))[1] == pytest.approx(0.5)
        with pytest.raises(DomainError):
            max_gain(1.0, 1.5)

    @given(st.floats(0, 5))
    def test_gain_is_tanh(self, zeta):
        assert max_gain(zeta)[1] == pytest.approx(np.tanh(zeta), abs=1e-14)

    def test_max_gain_is_the_n0_root_of_the_general_threshold(self):
        zeta, R = 0.8, 0.3
        t2, _ = max_gain(zeta, R)
        assert nth_threshold(ThresholdInputs(zeta, np.sqrt(t2), R, sigma=-1)) == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("zeta", [0.25, 0.5493, 1.0, 3.0, 8.0])
    def test_amplifier_sign_change(self, zeta):
        crossing = margin_crossing(lambda t2: amplifier_margin(zeta, t2), np.linspace(1, 2.2, 61))
        assert abs(crossing - max_gain(zeta)[0]) < 1e-6

    def test_crossing_edge_cases(self):
        assert margin_crossing(lambda x: 1.0, [0, 1]) == 0
        assert margin_crossing(lambda x: -1.0, [0, 1]) is None
