import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deom.bath import (BathExpansion, Drude, LorentzianMode, LorentzPair, Mode,
                       OhmicExponential, SpectralDensity, bose_poles,
                       correlation_fdt, eval_spectral_density, fit_report,
                       matsubara_expansion, pade_expansion,
                       reconstruct_correlation, time_reversal_holds,
                       validate_symmetry)
from deom.errors import QuadratureError, UnsupportedSpectralDensity

DRUDE = SpectralDensity.isotropic(Drude(0.5, 1.0))
GRID = np.linspace(-20.0, 20.0, 1000)


def drude_matsubara_oracle(lam, gam, beta, t, terms=2_000_000):
    """Residue sum for the Drude correlation, coded without the package."""
    nu = 2.0 * np.pi * np.arange(1, terms + 1) / beta
    re = lam * gam / math.tan(beta * gam / 2) * math.exp(-gam * t)
    re += np.sum(4 * lam * gam * nu / (beta * (nu ** 2 - gam ** 2)) * np.exp(-nu * t))
    return complex(re, -lam * gam * math.exp(-gam * t))


# frozen from drude_matsubara_oracle with 2e6 Matsubara terms
C_DRUDE_T1 = 0.33730983309257373 - 0.18393972058572117j
C_DRUDE_T05 = 0.56954434552143 - 0.3032653298563167j


class TestSpectralDensity:
    def test_drude_plug_in(self):
        assert DRUDE(1.0)[0, 0] == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("shape", [Drude(0.5, 1.0), OhmicExponential(0.3, 2.0),
                                       LorentzianMode(0.2, 1.5, 0.4), LorentzPair(2.0, 0.05)])
    def test_odd_families_vanish_at_zero(self, shape):
        assert shape(0.0) == 0.0

    def test_discrete_mode_lorentz_pair(self):
        spec = SpectralDensity.discrete_modes([Mode(2.0, 0.1)], width_factor=0.025)
        # 0.1 * (1/0.05 - 0.05 / (4^2 + 0.05^2)) evaluated by hand
        assert spec(2.0)[0, 0].real == pytest.approx(1.9996875488204968, rel=1e-14)
        assert spec(-2.0)[0, 0] == -spec(2.0)[0, 0]
        peak = GRID[np.argmax([spec(w)[0, 0].real for w in GRID])]
        assert abs(peak - 2.0) < 0.05

    def test_polarizations_build_outer_products(self):
        spec = SpectralDensity.discrete_modes(
            [Mode(1.0, 0.5, ((1.0, 0.0), (0.0, 1.0)))], components=("x", "y"))
        J = spec(1.0)
        assert J[0, 1] == 0 and J[0, 0] == J[1, 1]

    def test_composite_fills_both_triangles(self):
        spec = SpectralDensity.composite({(0, 0): Drude(0.5, 1.0), (1, 1): Drude(0.5, 1.0),
                                          (0, 1): Drude(0.1, 1.0)}, components=("x", "y"))
        J = eval_spectral_density(spec, 0.7)
        assert J[0, 1] == J[1, 0] == Drude(0.1, 1.0)(0.7)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            Drude(-1.0, 1.0)
        with pytest.raises(ValueError):
            LorentzPair(0.0, 0.1)


class TestSymmetry:
    @pytest.mark.parametrize("shape", [Drude(0.5, 1.0), OhmicExponential(0.3, 2.0),
                                       LorentzianMode(0.2, 1.5, 0.4)])
    def test_scalar_families_pass(self, shape):
        rep = validate_symmetry(SpectralDensity.isotropic(shape, ("x", "y", "z")), GRID)
        assert rep.passed and rep.max_residual == 0.0

    def test_odd_imaginary_off_diagonal_is_flagged(self):
        # J_xy = i k w is odd: conj(J_xy(w)) = -i k w but -J_xy(-w) = +i k w,
        # so the reflection relation fails even though the matrix is Hermitian
        k = 0.1
        J = lambda w: np.array([[w, 1j * k * w], [-1j * k * w, w]])
        rep = validate_symmetry(J, GRID)
        assert not rep.passed
        assert {r for *_, r in rep.violations} == {"conj(J(w)) != -J(-w)"}

    def test_even_imaginary_off_diagonal_passes(self):
        # an imaginary off-diagonal part must be even in w to satisfy both relations
        k = 0.1
        J = lambda w: np.array([[w, 1j * k * w * w / (1 + w * w)],
                                [-1j * k * w * w / (1 + w * w), w]])
        assert validate_symmetry(J, GRID).passed

    def test_broken_hermiticity_names_pair(self):
        J = lambda w: np.array([[w, 0.2 * w], [0.1 * w, w]])
        rep = validate_symmetry(J, GRID)
        pairs = {(i, j) for i, j, _, rel in rep.violations if rel == "conj(J_ij) != J_ji"}
        assert (0, 1) in pairs

    def test_positivity_violation(self):
        rep = validate_symmetry(lambda w: np.array([[-w]]), GRID)
        assert any(rel == "J_ii/w < 0" for *_, rel in rep.violations)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            validate_symmetry(DRUDE, [])


class TestFDT:
    def test_frozen_drude_values(self):
        assert abs(correlation_fdt(DRUDE, 1.0, 1.0)[0, 0] - C_DRUDE_T1) < 1e-12
        assert abs(correlation_fdt(DRUDE, 1.0, 0.5)[0, 0] - C_DRUDE_T05) < 1e-12

    def test_frozen_value_reproduced_by_oracle(self):
        assert abs(drude_matsubara_oracle(0.5, 1.0, 1.0, 1.0) - C_DRUDE_T1) < 1e-12

    def test_negative_time_is_conjugate(self):
        for t in (0.3, 1.7):
            np.testing.assert_array_equal(correlation_fdt(DRUDE, 1.0, -t),
                                          np.conj(correlation_fdt(DRUDE, 1.0, t)))

    def test_drude_real_part_at_zero_diverges(self):
        with pytest.raises(QuadratureError):
            correlation_fdt(DRUDE, 1.0, 0.0)

    @pytest.mark.parametrize("beta", [1.0, 20.0, 200.0])
    def test_imaginary_part_is_temperature_independent(self, beta):
        t = 1e-3
        c = correlation_fdt(DRUDE, beta, t)[0, 0]
        assert c.imag == pytest.approx(-0.5 * math.exp(-t), abs=1e-10)

    def test_high_temperature_converges(self):
        c = correlation_fdt(DRUDE, 0.1, 1.0)[0, 0]
        assert abs(c - drude_matsubara_oracle(0.5, 1.0, 0.1, 1.0, 200_000)) < 1e-10

    def test_lorentzian_mode_positive_at_zero(self):
        spec = SpectralDensity.isotropic(LorentzianMode(0.2, 1.5, 0.4))
        assert correlation_fdt(spec, 1.0, 0.0)[0, 0].real > 0

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            correlation_fdt(DRUDE, -1.0, 1.0)


class TestBosePoles:
    def test_matsubara(self):
        nu, w = bose_poles("matsubara", 3, 2.0)
        np.testing.assert_allclose(nu, np.pi * np.arange(1, 4))
        assert np.all(w == 1.0)

    @given(st.floats(0.1, 50.0), st.integers(1, 8))
    def test_pade_poles_scale_inversely_with_beta(self, beta, K):
        nu1, w1 = bose_poles("pade", K, 1.0)
        nub, wb = bose_poles("pade", K, beta)
        np.testing.assert_allclose(nub * beta, nu1, rtol=1e-14)
        np.testing.assert_array_equal(w1, wb)

    def test_pade_leading_pole_close_to_matsubara(self):
        nu, w = bose_poles("pade", 6, 1.0)
        assert nu[0] == pytest.approx(2 * np.pi, rel=1e-8)
        assert w[0] == pytest.approx(1.0, rel=1e-8)

    def test_pade_reproduces_bose_function(self):
        nu, w = bose_poles("pade", 6, 1.0)
        for x in (0.3, 1.0, 3.0):
            approx = 1 / x + 0.5 + np.sum(2 * w * x / (x * x + nu * nu))
            assert approx == pytest.approx(1 / (1 - math.exp(-x)), rel=1e-12)

    def test_unknown_method_and_bad_K(self):
        with pytest.raises(ValueError):
            bose_poles("fourier", 2, 1.0)
        with pytest.raises(ValueError):
            bose_poles("pade", -1, 1.0)


class TestExpansions:
    def test_drude_matsubara_coefficients(self):
        exp = matsubara_expansion(DRUDE, 1.0, 3)
        eta0 = 0.5 * (1 / math.tan(0.5) - 1j)
        assert exp.exponents[0] == 1.0
        assert abs(exp.coefficients[0, 0, 0] - eta0) < 1e-15
        for n in (1, 2, 3):
            nu = 2 * np.pi * n
            ref = 4 * 0.5 * nu / (nu * nu - 1.0)
            assert exp.exponents[n] == nu
            assert abs(exp.coefficients[n, 0, 0] - ref) < 1e-14
        assert exp.coefficients[1, 0, 0] == pytest.approx(0.32658231280633826, rel=1e-14)

    def test_real_exponents_map_to_themselves(self):
        exp = matsubara_expansion(DRUDE, 1.0, 4)
        assert exp.conjugate == tuple(range(5))

    def test_complex_poles_cross_map(self):
        exp = pade_expansion(SpectralDensity.isotropic(LorentzianMode(0.2, 1.5, 0.4)), 1.0, 2)
        assert exp.conjugate[:2] == (1, 0)
        assert exp.exponents[1] == np.conj(exp.exponents[0])

    def test_K0_identical_for_both_methods(self):
        a = matsubara_expansion(DRUDE, 2.0, 0)
        b = pade_expansion(DRUDE, 2.0, 0)
        np.testing.assert_array_equal(a.exponents, b.exponents)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_high_temperature_K0(self):
        beta = 0.1
        exp = matsubara_expansion(DRUDE, beta, 0)
        assert abs(exp.coefficients[0, 0, 0] - (2 * 0.5 / beta - 0.5j)) / 10.0 < 1e-3
        rep = fit_report(exp, DRUDE, window=(0.25, 5.0), samples=41)
        assert rep.max_relative < 1e-2

    def test_pade_K6_fit(self):
        rep = fit_report(pade_expansion(DRUDE, 1.0, 6), DRUDE, window=(0.25, 5.0), samples=41)
        assert rep.max_relative < 1e-6
        worse = fit_report(matsubara_expansion(DRUDE, 1.0, 6), DRUDE, (0.25, 5.0), 41)
        assert worse.max_relative > rep.max_relative

    def test_pade_beats_matsubara_at_low_temperature(self):
        window = (0.25, 5.0)
        p = fit_report(pade_expansion(DRUDE, 5.0, 2), DRUDE, window, 41)
        m = fit_report(matsubara_expansion(DRUDE, 5.0, 2), DRUDE, window, 41)
        assert np.max(p.absolute_errors) < np.max(m.absolute_errors)

    def test_fit_bound_honored_at_random_points(self):
        exp = pade_expansion(DRUDE, 1.0, 6)
        declared = fit_report(exp, DRUDE, (0.25, 5.0), 41).max_relative
        rng = np.random.default_rng(7)
        for t in rng.uniform(0.25, 5.0, 100):
            ref = correlation_fdt(DRUDE, 1.0, t)
            err = np.linalg.norm(reconstruct_correlation(exp, t) - ref) / np.linalg.norm(ref)
            assert err <= 2 * declared

    def test_divergent_samples_reported(self):
        rep = fit_report(matsubara_expansion(DRUDE, 1.0, 2), DRUDE, (0.0, 1.0), 5)
        assert rep.divergent_times == [0.0]
        assert math.isinf(rep.max_relative)

    def test_matrix_valued_expansion(self):
        spec = SpectralDensity.composite({(0, 0): Drude(0.5, 1.0), (1, 1): Drude(0.3, 2.0),
                                          (0, 1): Drude(0.1, 1.0)}, components=("x", "y"))
        exp = pade_expansion(spec, 1.0, 4)
        assert exp.coefficients.shape == (6, 2, 2)
        rep = fit_report(exp, spec, (0.5, 3.0), 11)
        assert rep.max_relative < 1e-4

    def test_ohmic_has_no_pole_structure(self):
        with pytest.raises(UnsupportedSpectralDensity):
            pade_expansion(SpectralDensity.isotropic(OhmicExponential(0.3, 2.0)), 1.0, 2)

    def test_reconstruct_shapes(self):
        exp = pade_expansion(DRUDE, 1.0, 2)
        assert reconstruct_correlation(exp, 0.5).shape == (1, 1)
        assert reconstruct_correlation(exp, np.array([0.1, 0.5])).shape == (2, 1, 1)
        with pytest.raises(ValueError):
            reconstruct_correlation(exp, -1.0)


class TestTimeReversal:
    @pytest.mark.parametrize("method", [matsubara_expansion, pade_expansion])
    @pytest.mark.parametrize("spec", [
        DRUDE,
        SpectralDensity.isotropic(LorentzianMode(0.2, 1.5, 0.4)),
        SpectralDensity.isotropic(LorentzianMode(0.2, 0.5, 3.0)),
        SpectralDensity.discrete_modes([Mode(1.0, 0.1), Mode(2.5, 0.2)]),
    ])
    def test_identity_holds_bitwise(self, method, spec):
        exp = method(spec, 1.3, 3)
        assert time_reversal_holds(exp)

    def test_identity_detects_corrupted_map(self):
        # the identity reduces to the map pairing each exponent with its conjugate,
        # so a map that bypasses constructor validation must be caught
        exp = pade_expansion(SpectralDensity.isotropic(LorentzianMode(0.2, 1.5, 0.4)), 1.0, 2)
        object.__setattr__(exp, "conjugate", (0, 1) + exp.conjugate[2:])
        assert not time_reversal_holds(exp)

    def test_constructor_validates_conjugate_map(self):
        g = np.array([1 + 1j, 1 - 1j])
        c = np.ones((2, 1, 1), dtype=complex)
        with pytest.raises(ValueError):
            BathExpansion(1.0, g, c, (0, 1))
        with pytest.raises(ValueError):
            BathExpansion(1.0, np.array([-1.0 + 0j]), c[:1], (0,))


class TestSerialization:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.2, 10.0), st.integers(0, 6))
    def test_json_round_trip_is_bitwise(self, beta, K):
        exp = pade_expansion(SpectralDensity.isotropic(LorentzianMode(0.2, 1.5, 0.4)), beta, K)
        back = BathExpansion.from_json(exp.to_json())
        assert back.exponents.tobytes() == exp.exponents.tobytes()
        assert back.coefficients.tobytes() == exp.coefficients.tobytes()
        assert back.conjugate == exp.conjugate and back.beta == exp.beta
