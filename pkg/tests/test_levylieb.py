import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldalab import levylieb as L
from ldalab.errors import CapacityError, InputError, StateError
from ldalab.lattice import GridDensity, build_lattice
from ldalab.lattice import kinetic_hoffmann_ostenhoff_gap
from ldalab.potential import gaussian


def _dense_fock_hamiltonian(model, pot, v):
    """Full 2^M Fock matrix built from Jordan-Wigner operators (independent oracle)."""
    M = model.n_sites
    a = np.array([[0, 1], [0, 0]], dtype=float)
    Z = np.diag([1.0, -1.0])
    I = np.eye(2)
    ops = []
    for i in range(M):
        mats = [Z] * i + [a] + [I] * (M - i - 1)
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        ops.append(out)
    num = [c.T @ c for c in ops]
    K = model.dense_laplacian()
    W = model.interaction(pot) if pot is not None else np.zeros((M, M))
    H = sum(K[i, j] * ops[i].T @ ops[j] for i in range(M) for j in range(M))
    H = H + sum(W[i, j] * num[i] @ num[j] for i in range(M) for j in range(i + 1, M))
    H = H + sum(v[i] * num[i] for i in range(M))
    return H


def test_ground_value_zero_potential_is_vacuum():
    m = build_lattice(1, 4)
    e, info = L.ground_value(m, gaussian(), np.zeros(4))
    # the one-particle zero mode of the open chain ties with the vacuum
    assert e == pytest.approx(0.0, abs=1e-14) and 0 in info["ground_sectors"]


def test_ground_value_single_site():
    m = build_lattice(1, 2)
    # second site pushed far up: one level at v_1 + K_11 = -3 + 1, shifted by
    # the hopping at second order, -1/1e6
    v = np.array([-3.0, 1e6])
    e, info = L.ground_value(m, None, v)
    assert e == pytest.approx(-2.0 - 1e-6, abs=1e-9)
    assert info["ground_sectors"] == [1]
    assert e == pytest.approx(np.linalg.eigvalsh(_dense_fock_hamiltonian(m, None, v)).min())


def test_ground_value_pair_against_dense_oracle():
    m = build_lattice(1, 2)
    g = gaussian()
    v = np.array([-3.0, -3.0])
    e, info = L.ground_value(m, g, v)
    ref = np.linalg.eigvalsh(_dense_fock_hamiltonian(m, g, v)).min()
    assert e == pytest.approx(ref, abs=1e-12)
    assert e == pytest.approx(-4 + math.exp(-1), abs=1e-12)
    assert info["ground_sectors"] == [2]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_ground_value_random_against_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    m = build_lattice(1, 5)
    g = gaussian(a=rng.uniform(0, 3))
    v = rng.normal(scale=2, size=5)
    e, _ = L.ground_value(m, g, v)
    ref = min(0.0, np.linalg.eigvalsh(_dense_fock_hamiltonian(m, g, v)).min())
    assert e == pytest.approx(ref, abs=1e-10)


def test_ground_value_capacity():
    with pytest.raises(CapacityError):
        L.ground_value(build_lattice(1, 17), None, np.zeros(17))


def test_vacuum_observables():
    m = build_lattice(1, 4)
    kin, inter, rho = L.state_observables(L.vacuum_state(4), m, gaussian())
    assert kin == 0 and inter == 0 and rho.mass() == 0


def test_single_particle_observables():
    m = build_lattice(1, 4)
    phi = np.array([0.1, 0.7, -0.5, 0.3])
    phi /= np.linalg.norm(phi)
    kin, inter, rho = L.state_observables(L.slater_state(4, phi), m, gaussian())
    assert kin == pytest.approx(phi @ m.dense_laplacian() @ phi)
    assert inter == 0
    np.testing.assert_allclose(rho.values, phi ** 2)


def test_mixture_observables_linear():
    m = build_lattice(1, 5)
    Q = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 2)))[0]
    s = L.slater_state(5, Q)
    half = s.mix(L.vacuum_state(5), 0.5)
    k1, i1, r1 = L.state_observables(s, m, gaussian())
    k2, i2, r2 = L.state_observables(half, m, gaussian())
    assert k2 == pytest.approx(k1 / 2) and i2 == pytest.approx(i1 / 2)
    np.testing.assert_allclose(r2.values, r1.values / 2)
    assert half.trace() == pytest.approx(1.0)


def test_random_state_trace_and_psd():
    st_ = L.random_grand_state(5, np.random.default_rng(1))
    assert st_.trace() == pytest.approx(1.0)
    for N in st_.blocks:
        assert np.linalg.eigvalsh(st_.sector_matrix(N)).min() > -1e-10


def test_state_errors():
    s = L.vacuum_state(3)
    with pytest.raises(StateError):
        L.state_observables(s, build_lattice(1, 4), None)
    bad = L.GrandState(3, np.arange(3), np.array([], dtype=int), {0: 2 * np.ones((1, 1))})
    with pytest.raises(StateError):
        L.state_observables(bad, build_lattice(1, 3), None)
    with pytest.raises(StateError):
        L.GrandState(3, np.arange(3), np.array([], dtype=int), {1: np.ones((2, 1))})


def test_one_body_rdm_of_slater_is_projector():
    Q = np.linalg.qr(np.random.default_rng(2).normal(size=(5, 2)))[0]
    g = L.one_body_rdm(L.slater_state(5, Q))
    np.testing.assert_allclose(g, Q @ Q.T, atol=1e-12)


def test_levy_lieb_zero_density():
    m = build_lattice(1, 4)
    br, cert, state = L.levy_lieb(m, gaussian(), GridDensity(m, np.zeros(4)))
    assert br.f_ll == 0 and state.vacuum_weight == 1.0 and cert.converged


def test_forced_two_site():
    m = build_lattice(1, 2)
    rho = GridDensity(m, [1.0, 0.0])
    br, cert, _ = L.levy_lieb(m, gaussian(), rho)
    assert br.f_ll == pytest.approx(1.0, abs=1e-12)
    T, gamma = L.kinetic_min(m, rho)
    assert T == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(gamma, [[1, 0], [0, 0]], atol=1e-12)


def test_kinetic_min_half_filled_ring():
    m = build_lattice(1, 4, boundary="periodic")
    T, _ = L.kinetic_min(m, GridDensity(m, np.full(4, 0.5)))
    assert T == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("dim,n,rho0", [(1, 10, 0.43), (2, 4, 0.3), (3, 3, 0.21)])
def test_kinetic_min_uniform_torus_fills_levels(dim, n, rho0):
    m = build_lattice(dim, n, boundary="periodic")
    T, gamma = L.kinetic_min(m, GridDensity(m, np.full(m.n_sites, rho0)))
    ev = np.linalg.eigvalsh(m.dense_laplacian())
    N = rho0 * m.n_sites
    k = int(np.floor(N))
    oracle = ev[:k].sum() + (N - k) * ev[k]
    assert T == pytest.approx(oracle, abs=1e-8)
    np.testing.assert_allclose(np.diag(gamma), rho0, atol=1e-9)


def test_exchange_trivial_cases():
    m = build_lattice(1, 4)
    assert L.exchange_energy(m, gaussian(), GridDensity(m, np.zeros(4))).exchange == 0
    rho = GridDensity(m, [0.2, 0.5, 0.7, 0.3])
    T, _ = L.kinetic_min(m, rho)
    br = L.exchange_energy(m, None, rho)
    assert br.exchange == pytest.approx(T, abs=1e-7)
    br0 = L.exchange_energy(m, gaussian(a=0.0), rho)
    assert br0.f_ll == pytest.approx(T, abs=1e-7)


def _random_density(rng, n):
    return rng.uniform(0.05, 0.9, size=n)


def test_exchange_lower_bound_and_certificates():
    g = gaussian()
    m = build_lattice(1, 6)
    rng = np.random.default_rng(3)
    for _ in range(10):
        rho = GridDensity(m, _random_density(rng, 6))
        br, cert, state = L.levy_lieb(m, g, rho)
        assert cert.converged and abs(cert.gap) <= 1e-6 and cert.density_error <= 1e-6
        assert br.exchange >= -0.5 * g.omega_zero * rho.mass() - 1e-9
        T, _ = L.kinetic_min(m, rho)
        assert br.f_ll >= T - 1e-9
        assert br.f_ll == pytest.approx(br.kinetic + br.interaction)
        assert br.exchange == pytest.approx(br.f_ll - br.direct)
        _, _, rho_s = L.state_observables(state, m, g)
        np.testing.assert_allclose(rho_s.values, rho.values, atol=1e-6)
        for N in state.blocks:
            assert np.linalg.eigvalsh(state.sector_matrix(N)).min() > -1e-10


def test_levy_lieb_convexity():
    g = gaussian()
    m = build_lattice(1, 6)
    rng = np.random.default_rng(4)
    cache = {}

    def F(x):
        key = tuple(np.round(x, 15))
        if key not in cache:
            cache[key] = L.levy_lieb(m, g, GridDensity(m, x))[0].f_ll
        return cache[key]

    for _ in range(50):
        a, b = _random_density(rng, 6), _random_density(rng, 6)
        for lam in (0.25, 0.5, 0.75):
            assert F(lam * a + (1 - lam) * b) <= lam * F(a) + (1 - lam) * F(b) + 1e-7


def test_dual_trace_monotone_within_stage():
    m = build_lattice(1, 7)
    rho = GridDensity(m, _random_density(np.random.default_rng(5), 7))
    _, cert, _ = L.levy_lieb(m, gaussian(), rho)
    _, _, cert1 = L.kinetic_min(m, rho, return_certificate=True)
    for c in (cert, cert1):
        for beta, group in itertools.groupby(c.trace, key=lambda t: t[0]):
            vals = [g for _, g in group]
            assert all(y >= x - 1e-12 for x, y in zip(vals, vals[1:]))


def test_pinned_sites():
    m = build_lattice(1, 6)
    rho = GridDensity(m, [1.0, 0.4, 0.0, 0.7, 1.0, 0.3])
    br, cert, state = L.levy_lieb(m, gaussian(), rho)
    assert cert.converged
    _, _, r = L.state_observables(state, m, gaussian())
    np.testing.assert_allclose(r.values, rho.values, atol=1e-8)


def test_degenerate_cube_certificate():
    # the 4-particle sector ground state of the 2x2x2 cube is degenerate
    m = build_lattice(3, 2)
    rho = GridDensity(m, np.full(8, 0.5))
    br, cert, _ = L.levy_lieb(m, gaussian(), rho)
    assert cert.converged and abs(cert.gap) < 1e-9


def test_kinetic_min_hoffmann_ostenhoff_on_optimum():
    m = build_lattice(2, 5)
    rho = GridDensity(m, np.random.default_rng(6).uniform(0, 1, 25))
    T, gamma = L.kinetic_min(m, rho)
    assert kinetic_hoffmann_ostenhoff_gap(m, gamma) >= -1e-9
    assert np.linalg.eigvalsh(gamma).min() > -1e-9
    assert np.linalg.eigvalsh(gamma).max() < 1 + 1e-9


def test_levy_lieb_rejects_bad_density_and_size():
    m = build_lattice(1, 3)
    with pytest.raises(InputError):
        L.levy_lieb(m, gaussian(), GridDensity(m, [0.5, 1.5, 0.2]))
    big = build_lattice(1, 19)
    with pytest.raises(CapacityError):
        L.levy_lieb(big, gaussian(), GridDensity(big, np.full(19, 0.5)))
