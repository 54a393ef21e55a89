import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldalab import geometry as G
from ldalab.errors import CapacityError, InputError
from ldalab.lattice import (GridDensity, RandomSmooth, SlowlyVarying, SmearedProfile,
                            build_lattice, density_functionals,
                            kinetic_hoffmann_ostenhoff_gap, sample_density)
from ldalab.potential import gaussian


def test_periodic_ring_spectrum():
    m = build_lattice(1, 4, boundary="periodic")
    np.testing.assert_allclose(np.linalg.eigvalsh(m.dense_laplacian()), [0, 2, 2, 4], atol=1e-12)


def test_open_pair_laplacian():
    m = build_lattice(1, 2)
    np.testing.assert_array_equal(m.dense_laplacian(), [[1, -1], [-1, 1]])


@pytest.mark.parametrize("h", [1.0, 0.5])
def test_cubic_torus_spectrum(h):
    m = build_lattice(3, 4, h=h, boundary="periodic")
    ev = np.linalg.eigvalsh(m.dense_laplacian())
    one = (2 - 2 * np.cos(2 * np.pi * np.arange(4) / 4)) / h ** 2
    oracle = np.sort((one[:, None, None] + one[None, :, None] + one[None, None, :]).ravel())
    np.testing.assert_allclose(ev, oracle, atol=1e-10)
    assert ev.min() == pytest.approx(0, abs=1e-12)
    assert ev.max() == pytest.approx(12 / h ** 2)


def test_laplacian_psd_and_row_sums():
    for bc in ("open", "periodic"):
        K = build_lattice(2, (3, 5), boundary=bc).dense_laplacian()
        assert np.allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() > -1e-12
        np.testing.assert_allclose(K.sum(axis=1), 0, atol=1e-14)


def test_interaction_matrix():
    m = build_lattice(2, 4, boundary="periodic", pot=gaussian())
    W = m.interaction()
    assert np.allclose(W, W.T) and W.min() >= 0
    np.testing.assert_allclose(np.diag(W), 1.0)
    # minimum image: sites 0 and 3 on a ring of 4 are neighbours
    assert W[0, 3 * 4] == pytest.approx(np.exp(-1))


def test_builder_rejects_bad_input():
    with pytest.raises(InputError):
        build_lattice(4, 3)
    with pytest.raises(InputError):
        build_lattice(1, 1)
    with pytest.raises(InputError):
        build_lattice(1, 3, h=0)
    with pytest.raises(InputError):
        build_lattice(1, 3, boundary="twisted")
    with pytest.raises(CapacityError):
        build_lattice(1, 17).check_fock()


def test_density_validation():
    m = build_lattice(1, 3)
    with pytest.raises(InputError):
        GridDensity(m, [0.1, -0.1, 0.2])
    with pytest.raises(InputError):
        GridDensity(m, [0.1, 0.2])
    with pytest.raises(InputError):
        GridDensity(m, [0.1, np.nan, 0.2])
    with pytest.raises(InputError):
        sample_density([0.5, 1.5, 0.0], m)
    assert not sample_density([0.5, 1.5, 0.0], m, representable=False).representable()


def test_constant_density_functionals():
    m = build_lattice(3, 4, h=0.5, boundary="periodic")
    c = 0.3
    f = density_functionals(GridDensity(m, np.full(m.n_sites, c)))
    V = (4 * 0.5) ** 3
    assert f.ho == 0 and f.grad_theta_p == 0
    assert f.mass == pytest.approx(c * V)
    assert f.l2 == pytest.approx(c * c * V)
    assert f.l53 == pytest.approx(c ** (5 / 3) * V)


def test_single_occupied_site():
    m = build_lattice(1, 5)
    f = density_functionals(GridDensity(m, [0, 1, 0, 0, 0]), theta=0.5, p=4)
    assert f.ho == pytest.approx(2.0)
    assert f.grad_theta_p == pytest.approx(2.0)


def test_zero_mass_means_zero_functionals():
    f = density_functionals(GridDensity(build_lattice(2, 3), np.zeros(9)))
    assert all(v == 0 for v in (f.mass, f.l2, f.l53, f.ho, f.grad_theta_p))


def test_regime_warning():
    with pytest.warns(UserWarning):
        density_functionals(GridDensity(build_lattice(1, 3), [0.1, 0.2, 0.3]), theta=1.2)


def _profile(x, y):
    return (0.5 + 0.2 * np.sin(2 * np.pi * x) + 0.15 * np.sin(2 * np.pi * (x + 2 * y) + 0.4)
            + 0.1 * np.cos(2 * np.pi * y))


def test_refinement_is_first_order_on_open_square():
    vals = []
    for n in (64, 128, 256):
        m = build_lattice(2, n, h=1 / n, origin=(0.5 / n, 0.5 / n))
        f = density_functionals(GridDensity(m, _profile(*m.coords.T)))
        vals.append((f.ho, f.grad_theta_p))
    d = np.diff(np.array(vals), axis=0)
    ratio = d[0] / d[1]
    assert np.all((ratio >= 1.5) & (ratio <= 2.5))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_ho_gap_nonnegative_for_random_rdm(seed, k):
    rng = np.random.default_rng(seed)
    m = build_lattice(1, 6)
    A = rng.normal(size=(6, 6))
    U = np.linalg.qr(A)[0][:, :k]
    occ = rng.uniform(0, 1, size=k)
    gamma = (U * occ) @ U.T
    assert kinetic_hoffmann_ostenhoff_gap(m, gamma) >= -1e-12


def test_smeared_profile_recipe():
    l, rho0 = 4.0, 0.3
    region = G.tile_region(l, 1)
    m = build_lattice(3, 9, h=0.5, origin=(-2, -2, -2))
    rho = sample_density(SmearedProfile(region, 1.0, rho0), m)
    assert rho.values.min() >= 0 and rho.values.max() <= rho0 + 1e-12
    assert rho.mass() == pytest.approx(rho0 * l ** 3 / 24, rel=0.05)


def test_slowly_varying_identity_and_random_reproducible():
    m = build_lattice(1, 9)
    base = lambda x: 0.4 * np.exp(-x[:, 0] ** 2 / 4)
    a = sample_density(SlowlyVarying(base, 1.0), m)
    np.testing.assert_allclose(a.values, base(m.coords - m.coords.mean(axis=0)))
    r1 = sample_density(RandomSmooth(7, 2.0), build_lattice(2, 8))
    r2 = sample_density(RandomSmooth(7, 2.0), build_lattice(2, 8))
    assert np.array_equal(r1.values, r2.values)
    with pytest.raises(InputError):
        sample_density(object(), m)
