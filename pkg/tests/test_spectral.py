import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from rstokes.errors import DomainError
from rstokes.spectral import (
    SolutionField, UnsupportedGeneratorError, coefvec_from_csv, coefvec_to_csv, eigenfunction,
    make_spectrum, norm_tau, project_function, sample_physical, spectrum_from_csv,
    spectrum_to_csv,
)


class TestMakeSpectrum:
    def test_interval(self):
        assert make_spectrum("interval_dirichlet", 3).eigenvalues.tolist() == [1.0, 4.0, 9.0]

    def test_interval_length(self):
        sp = make_spectrum("interval_dirichlet", 2, L=2.0)
        assert np.allclose(sp.eigenvalues, [(math.pi / 2) ** 2, math.pi ** 2])

    def test_rectangle(self):
        sp = make_spectrum("rectangle_dirichlet", 4)
        assert np.allclose(sp.eigenvalues, [2, 5, 5, 8])
        # ties broken by (m, n)
        assert sp.indices[:3] == ((1, 1), (1, 2), (2, 1))

    def test_explicit_sorted(self):
        assert make_spectrum("explicit_list", values=[3, 1, 2]).eigenvalues.tolist() == [1, 2, 3]

    @pytest.mark.parametrize("vals", [[1.0, 0.0], [-1.0], [], [1.0, float("inf")]])
    def test_explicit_rejects(self, vals):
        with pytest.raises(DomainError):
            make_spectrum("explicit_list", values=vals)

    def test_rejects_bad_sizes(self):
        with pytest.raises(DomainError):
            make_spectrum("interval_dirichlet", 0)
        with pytest.raises(DomainError):
            make_spectrum("interval_dirichlet", 3, L=-1.0)
        with pytest.raises(DomainError):
            make_spectrum("nope", 3)

    def test_readonly(self):
        sp = make_spectrum("interval_dirichlet", 3)
        with pytest.raises(ValueError):
            sp.eigenvalues[0] = 5.0


class TestNorm:
    def test_single_mode(self):
        sp = make_spectrum("interval_dirichlet", 3)
        assert norm_tau([1, 0, 0], sp, 1.0) == 1.0
        sp2 = make_spectrum("explicit_list", values=[3.0, 5.0])
        assert norm_tau([1, 0], sp2, 1.0) == 3.0

    def test_examples(self):
        sp = make_spectrum("explicit_list", values=[1.0, 4.0])
        assert norm_tau([1, 1], sp, 0.5) == pytest.approx(math.sqrt(5))
        assert norm_tau([1, 1], sp, -1.0) == pytest.approx(math.sqrt(1 + 1 / 16))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            norm_tau([1, 2], make_spectrum("interval_dirichlet", 3), 0.0)

    @given(hnp.arrays(float, 6, elements=st.floats(-1e3, 1e3)))
    def test_parseval(self, v):
        sp = make_spectrum("interval_dirichlet", 6)
        assert norm_tau(v, sp, 0.0) ** 2 == pytest.approx(float(np.sum(v * v)), rel=1e-12, abs=1e-300)

    @given(hnp.arrays(float, 5, elements=st.floats(-10, 10)), st.floats(-1, 1), st.floats(0, 1))
    def test_monotone_in_tau(self, v, t1, dt):
        sp = make_spectrum("interval_dirichlet", 5)  # lambda_1 = 1
        assert norm_tau(v, sp, t1 + dt) >= norm_tau(v, sp, t1) * (1 - 1e-12)


class TestProjection:
    def test_eigenfunction_roundtrip(self):
        sp = make_spectrum("interval_dirichlet", 4)
        c = project_function(eigenfunction(sp, 1), sp)
        assert np.allclose(c, [0, 1, 0, 0], atol=1e-8)

    def test_zero(self):
        sp = make_spectrum("interval_dirichlet", 4)
        assert np.allclose(project_function(lambda x: 0 * x, sp), 0.0)

    def test_parabola_closed_form(self):
        sp = make_spectrum("interval_dirichlet", 8)
        c = project_function(lambda x: x * (math.pi - x), sp)
        k = np.arange(1, 9)
        exact = np.where(k % 2 == 1, math.sqrt(2 / math.pi) * 4 / k ** 3, 0.0)
        assert np.allclose(c, exact, atol=1e-10)

    @pytest.mark.parametrize("m", [0, 17, 63])
    def test_roundtrip_64_modes(self, m):
        sp = make_spectrum("interval_dirichlet", 64)
        c = project_function(eigenfunction(sp, m), sp)
        e = np.zeros(64)
        e[m] = 1.0
        assert np.max(np.abs(c - e)) < 1e-8

    def test_rectangle_roundtrip(self):
        sp = make_spectrum("rectangle_dirichlet", 6)
        c = project_function(eigenfunction(sp, 2), sp)
        assert np.allclose(c, np.eye(6)[2], atol=1e-8)

    def test_explicit_unsupported(self):
        sp = make_spectrum("explicit_list", values=[1.0])
        with pytest.raises(UnsupportedGeneratorError):
            project_function(lambda x: x, sp)
        with pytest.raises(UnsupportedGeneratorError):
            eigenfunction(sp, 0)


class TestSampling:
    def _field(self, sp, coef):
        coef = np.asarray(coef, dtype=float)
        return SolutionField(np.array([0.0, 1.0]), np.column_stack([coef, 2 * coef]), sp)

    def test_single_mode(self):
        sp = make_spectrum("interval_dirichlet", 3)
        f = self._field(sp, [1, 0, 0])
        assert sample_physical(f, [math.pi / 2], 0)[0] == pytest.approx(math.sqrt(2 / math.pi))

    def test_zero_field(self):
        sp = make_spectrum("interval_dirichlet", 3)
        assert np.all(sample_physical(self._field(sp, [0, 0, 0]), [0.3, 1.0], 1) == 0.0)

    def test_two_modes_hand_sum(self):
        sp = make_spectrum("interval_dirichlet", 2)
        f = self._field(sp, [0.5, -1.5])
        x = np.array([0.2, 1.1, 2.9])
        c = math.sqrt(2 / math.pi)
        hand = 2 * (0.5 * c * np.sin(x) - 1.5 * c * np.sin(2 * x))
        assert np.allclose(sample_physical(f, x, 1), hand, atol=1e-12)

    def test_rectangle_points(self):
        sp = make_spectrum("rectangle_dirichlet", 2)
        f = self._field(sp, [1, 0])
        v = sample_physical(f, [[math.pi / 2, math.pi / 2]], 0)
        assert v[0] == pytest.approx(2 / math.pi)

    def test_errors(self):
        sp = make_spectrum("interval_dirichlet", 2)
        f = self._field(sp, [1, 0])
        with pytest.raises(IndexError):
            sample_physical(f, [0.1], 5)
        with pytest.raises(UnsupportedGeneratorError):
            sample_physical(self._field(make_spectrum("explicit_list", values=[1, 2]), [1, 0]), [0.1], 0)

    def test_field_shape_checked(self):
        sp = make_spectrum("interval_dirichlet", 2)
        with pytest.raises(DomainError):
            SolutionField(np.array([0.0, 1.0]), np.zeros((3, 2)), sp)
        with pytest.raises(DomainError):
            SolutionField(np.array([0.0, 1.0]), np.array([[0.0, np.nan], [0, 0]]), sp)


class TestCsv:
    @pytest.mark.parametrize("sp", [
        make_spectrum("interval_dirichlet", 5, L=2.5),
        make_spectrum("rectangle_dirichlet", 7, Lx=1.0, Ly=2.0),
        make_spectrum("explicit_list", values=[0.3, 7.0, 1e6]),
    ])
    def test_spectrum_roundtrip(self, sp):
        text = spectrum_to_csv(sp)
        assert text.startswith("# generator=")
        back = spectrum_from_csv(text)
        assert back.generator == sp.generator
        assert np.array_equal(back.eigenvalues, sp.eigenvalues)

    def test_coefvec_roundtrip(self):
        sp = make_spectrum("interval_dirichlet", 4)
        v = np.array([1 / 3, -2e-17, 5.0, math.pi])
        assert np.array_equal(coefvec_from_csv(coefvec_to_csv(v, sp)), v)

    def test_header_required(self):
        with pytest.raises(DomainError):
            spectrum_from_csv("eigenvalue\n1\n")
