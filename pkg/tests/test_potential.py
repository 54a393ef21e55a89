import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldalab import potential as P
from ldalab.errors import InputError, PreconditionError
from ldalab.lattice import GridDensity, build_lattice


def test_gaussian_transform_at_zero_and_two():
    g = P.gaussian()
    hat = P.hankel_transform(g, [0.0, 2.0])
    assert hat[0] == pytest.approx(math.pi ** 1.5, rel=1e-8)
    assert hat[1] == pytest.approx(math.pi ** 1.5 * math.exp(-1), rel=1e-8)


def test_gaussian_transform_matches_closed_form_on_grid():
    g = P.gaussian(a=2.0, b=0.7)
    k = np.linspace(0.1, 12, 40)
    exact = 2.0 * (math.pi ** 1.5) * 0.7 ** 3 * np.exp(-(k * 0.7) ** 2 / 4)
    np.testing.assert_allclose(P.hankel_transform(g, k), exact, rtol=1e-6, atol=1e-12)


def test_transform_decays():
    for pot in (P.gaussian(), P.exponential(), P.bump()):
        hat = P.hankel_transform(pot, [0.0, 60.0])
        assert abs(hat[1]) < 0.01 * hat[0]


def test_transform_is_cached():
    g = P.gaussian()
    a = P.hankel_transform(g, [1.5])
    assert g._cache
    assert P.hankel_transform(g, [1.5])[0] == a[0]


def test_validate_gaussian():
    rep = P.validate_short_range(P.gaussian())
    assert rep.passed
    assert rep.l1_norm == pytest.approx(math.pi ** 1.5, rel=1e-6)
    assert rep.first_moment == pytest.approx(2 * math.pi, rel=1e-6)
    assert rep.l1_norm_hat == pytest.approx(8 * math.pi ** 3, rel=1e-6)
    assert rep.omega_zero == 1.0
    # inversion sanity: w(0) = (2 pi)^-3 int w_hat
    assert rep.inversion_residual < 1e-6


def test_validate_negative_profile_fails():
    neg = P.RadialPotential("custom", {}, lambda r: -np.exp(-r * r), r_cut=8.0)
    rep = P.validate_short_range(neg)
    assert not rep.verdict["omega_nonnegative"]
    assert not rep.passed


def test_validate_coulomb_fails_integrability():
    rep = P.validate_short_range(P.coulomb())
    assert not rep.verdict["omega_integrable"]
    assert not rep.passed


def test_exponential_passes_and_bump_flags_hat_monotonicity():
    assert P.validate_short_range(P.exponential()).passed
    rep = P.validate_short_range(P.bump())
    assert rep.verdict["omega_nonnegative"] and rep.verdict["hat_nonnegative"]
    assert not rep.verdict["hat_decreasing"]


def test_coulomb_bound_kernel_level():
    # sup_r r w(r) is finite for short-range kernels, so C/r dominates w
    g = P.gaussian()
    rep = P.validate_short_range(g)
    r = np.linspace(1e-3, 8, 2000)
    assert np.all(rep.coulomb_bound / r - g(r) >= -1e-12)


def test_tabulated_matches_family_and_rejects_bad_input():
    r = np.linspace(0, 8, 801)
    tab = P.tabulated(r, np.exp(-r * r))
    x = np.linspace(0, 7.9, 50)
    np.testing.assert_allclose(tab(x), np.exp(-x * x), atol=1e-5)
    with pytest.raises(InputError):
        P.tabulated([-1.0, 0.0, 1.0], [1.0, 0.5, 0.1])
    with pytest.raises(InputError):
        P.tabulated([0.0, 2.0, 1.0], [1.0, 0.5, 0.1])


def test_from_spec():
    pot = P.from_spec({"family": "gaussian", "a": "2", "b": "0.5"})
    assert pot(0.0) == pytest.approx(2.0)
    with pytest.raises(InputError):
        P.from_spec({"family": "yukawa"})


def test_direct_energy_point_masses():
    m = build_lattice(1, 2)
    rho = GridDensity(m, [1.0, 1.0])
    assert P.direct_energy(rho, rho, P.gaussian()) == pytest.approx(1 + math.exp(-1), rel=1e-14)
    zero = GridDensity(m, [0.0, 0.0])
    assert P.direct_energy(zero, zero, P.gaussian()) == 0.0


def test_direct_energy_grid_mismatch():
    a = GridDensity(build_lattice(1, 3), [0.1, 0.2, 0.3])
    b = GridDensity(build_lattice(1, 3, h=0.5), [0.1, 0.2, 0.3])
    with pytest.raises(InputError):
        P.direct_energy(a, b, P.gaussian())


def test_gaussian_kernel_matrix_is_psd():
    # eigen-decomposition oracle for D(rho, rho) >= 0
    for dim, shape in ((1, 20), (2, 6), (3, 4)):
        W = build_lattice(dim, shape).interaction(P.gaussian())
        assert np.linalg.eigvalsh(W).min() > -1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8),
       st.lists(st.floats(0, 1), min_size=8, max_size=8),
       st.floats(-2, 2))
def test_direct_energy_symmetric_bilinear(x, y, c):
    m = build_lattice(1, 8)
    g = P.gaussian()
    a, b = GridDensity(m, x), GridDensity(m, y)
    ab = GridDensity(m, np.add(x, y))
    assert P.direct_energy(a, b, g) == pytest.approx(P.direct_energy(b, a, g), abs=1e-12)
    lhs = P.direct_energy(ab, ab, g)
    rhs = P.direct_energy(a, a, g) + 2 * P.direct_energy(a, b, g) + P.direct_energy(b, b, g)
    assert lhs == pytest.approx(rhs, abs=1e-10)
    assert P.direct_energy(a, a, g) >= -1e-12


def test_kernel_difference_transform():
    g = P.gaussian()
    k = np.linspace(0, 10, 101)
    assert P.kernel_difference_transform(g, 1.0, k) == 0.0
    assert P.kernel_difference_transform(g, 0.5, k) >= 0.0
    for alpha in np.linspace(0.1, 1.0, 10):
        assert P.kernel_difference_transform(g, alpha, k) >= -1e-10
    with pytest.raises(InputError):
        P.kernel_difference_transform(g, 1.5, k)


def test_kernel_difference_detects_nonmonotone_transform():
    g = P.gaussian()
    kk = np.linspace(0, 12, 241)
    hat = math.pi ** 1.5 * np.exp(-kk ** 2 / 4) + 2.0 * np.exp(-((kk - 3) / 0.3) ** 2)
    bumped = P.with_transform(g, kk, hat)
    assert P.kernel_difference_transform(bumped, 0.5, np.linspace(0, 10, 201)) < 0


def test_gs_kernel_bounds_and_decay():
    g = P.gaussian()
    k8, i8 = P.gs_kernel(g, 8, 0.5, 256, seed=1)
    k16, i16 = P.gs_kernel(g, 16, 0.5, 256, seed=1)
    for k in (k8, k16):
        assert np.all(k.h_profile >= 0) and np.all(k.h_profile <= 1)
    assert 0.35 < i16 / i8 < 0.65
    with pytest.raises(PreconditionError):
        P.gs_kernel(g, 4, 3.0)


def test_gs_profile_scaling_identity():
    from ldalab.geometry import averaged_autocorrelation

    rng = np.random.default_rng(3)
    x = rng.uniform(-0.8, 0.8, size=(10, 3))
    a = averaged_autocorrelation(x, 2.0, 0.2, 4096, seed=11)
    b = averaged_autocorrelation(x / 2, 1.0, 0.1, 4096, seed=12)
    np.testing.assert_allclose(a, b, atol=0.02)


def test_gs_profile_near_one_at_origin():
    from ldalab.geometry import averaged_autocorrelation

    ratios = []
    for s in (0.02, 0.05, 0.1, 0.2):
        h0 = averaged_autocorrelation(np.zeros((1, 3)), 1.0, s, 2048, seed=5)[0]
        assert 0 <= h0 <= 1
        ratios.append((1 - h0) / s)
    # |1 - h(0)| <= c s with a finite fitted c
    assert max(ratios) < 5.0
