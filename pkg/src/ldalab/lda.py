"""Energy per volume of smeared tetrahedra, its thermodynamic limit and the LDA residual."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from . import geometry
from .errors import CapacityError, InputError, PreconditionError
from .lattice import (FOCK_CAP, GridDensity, LatticeModel, build_lattice,
                      density_functionals)


# --------------------------------------------------------------------------
# closed forms

def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2 * math.pi ** (d / 2) / gamma_fn(d / 2)


def c_LT(d: int) -> float:
    """Semiclassical kinetic constant ``4 pi^2 d/(d+2) (d/|S^{d-1}|)^{2/d}``."""
    return 4 * math.pi ** 2 * d / (d + 2) * (d / sphere_area(d)) ** (2 / d)


@dataclass(frozen=True)
class TheoryConstants:
    dim: int
    c_LT: float
    c_free: float

    @classmethod
    def for_dim(cls, d: int) -> "TheoryConstants":
        c = c_LT(d)
        return cls(d, c, c)


def free_gas_elda(rho0, dim: int = 3):
    """Continuum spinless free-gas energy per volume, ``c(d) rho0^{1+2/d}``."""
    r = np.asarray(rho0, dtype=float)
    if np.any(r < 0):
        raise InputError("density must be nonnegative")
    out = c_LT(dim) * r ** (1 + 2 / dim)
    return float(out) if out.ndim == 0 else out


def laplacian_spectrum(dim: int, n: int, h: float = 1.0) -> np.ndarray:
    """All eigenvalues of the periodic graph Laplacian on ``n^dim`` sites."""
    e1 = (2 - 2 * np.cos(2 * np.pi * np.arange(n) / n)) / h ** 2
    ev = e1
    for _ in range(dim - 1):
        ev = (ev[:, None] + e1[None, :]).ravel()
    return ev


@dataclass
class FermiSea:
    dim: int
    n: int
    h: float
    rho0: float
    particles: float
    volume: float
    kinetic: float

    @property
    def per_volume(self) -> float:
        return self.kinetic / self.volume

    @property
    def lt_ratio(self) -> float:
        """``(T/V) / rho0^{1+2/d}``, to be compared with c_LT(d)."""
        return self.per_volume / self.rho0 ** (1 + 2 / self.dim)


def torus_fermi_sea(dim: int, n: int, h: float, rho0: float) -> FermiSea:
    """Free fermions at uniform density on a periodic torus by spectrum filling.

    The lowest ``floor(N)`` levels are filled and the next one carries the
    fractional remainder, ``N = rho0 V``.
    """
    if rho0 < 0 or rho0 * h ** dim > 1:
        raise InputError("need 0 <= rho0 h^d <= 1")
    ev = laplacian_spectrum(dim, n, h)
    V = (n * h) ** dim
    N = rho0 * V
    m = int(math.floor(N + 1e-12))
    part = np.partition(ev, min(m, len(ev) - 1))
    T = float(np.sort(part[:m]).sum()) if m else 0.0
    if m < len(ev):
        T += (N - m) * float(part[m])
    return FermiSea(dim, n, h, rho0, N, V, T)


def lattice_free_gas_elda(rho0: float, dim: int, h: float = 1.0, n: Optional[int] = None) -> float:
    """Thermodynamic-limit energy per volume of free lattice fermions.

    Closed form in 1-D, ``h^-3 (2 nu - (2/pi) sin(pi nu))`` with ``nu = rho0 h``;
    large-torus spectrum filling otherwise.
    """
    nu = rho0 * h ** dim
    if nu < 0 or nu > 1:
        raise InputError("need 0 <= rho0 h^d <= 1")
    if dim == 1:
        return (2 * nu - 2 / math.pi * math.sin(math.pi * nu)) / h ** 3
    n = n or (2048 if dim == 2 else 160)
    return torus_fermi_sea(dim, n, h, rho0).per_volume


def lattice_exchange_first_order(rho0: float, pot, h: float = 1.0, r_max: int = 2000) -> float:
    """First-order exchange per length of the 1-D lattice Fermi sea.

    ``-(1/2) h^-1 sum_r w(r h) gamma(r)^2`` with ``gamma(r) = sin(pi nu r)/(pi r)``.
    """
    nu = rho0 * h
    r = np.arange(1, r_max + 1)
    g = np.sin(math.pi * nu * r) / (math.pi * r)
    return -0.5 / h * (pot(0.0) * nu ** 2 + 2 * float(np.sum(pot(r * h) * g * g)))


def lattice_elda_1d(pot=None, h: float = 1.0) -> Callable:
    """Vectorized 1-D lattice ``e_LDA``: free gas plus first-order exchange."""

    def f(r):
        r = np.asarray(r, dtype=float)
        out = np.array([lattice_free_gas_elda(x, 1, h)
                        + (lattice_exchange_first_order(x, pot, h) if pot is not None else 0.0)
                        for x in r.ravel()])
        return out.reshape(r.shape)

    return f


def slowly_varying_chain(N: int, amplitude: float = 0.6, h: float = 1.0, pot=None) -> GridDensity:
    """``amplitude cos^2(pi x / 2N)`` on ``|x| < N``, sampled on a chain over ``[-N, N]``."""
    if N < 1:
        raise InputError("need N >= 1")
    n = int(round(2 * N / h)) + 1
    model = build_lattice(1, n, h, "open", pot, origin=[-N])
    x = model.coords[:, 0]
    vals = np.where(np.abs(x) < N, amplitude * np.cos(np.pi * x / (2 * N)) ** 2, 0.0)
    return GridDensity(model, vals)


# --------------------------------------------------------------------------
# e_Delta samples

@dataclass
class EldaSample:
    rho0: float
    l: float
    delta: float
    value: float
    dim: int
    lower_bound: float
    meta: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = dict(rho0=self.rho0, l=self.l, delta=self.delta, value=self.value, dim=self.dim,
                   lower_bound=self.lower_bound)
        row.update({k: v for k, v in self.meta.items() if np.isscalar(v)})
        return row


def smeared_tile_density(rho0: float, l: float, delta: float, dim: int = 3, h: float = 1.0,
                         offset: float = 0.5, n_r: int = 12, n_ang: int = 96) -> GridDensity:
    """``rho0 (1_{l Delta} * eta_delta)`` sampled on lattice sites covering its support.

    In 3-D the set is the reference tile at scale ``l``; in 1-D it is ``[0, l]``.
    Sites sit at ``h (k + offset)``.
    """
    if dim == 3:
        region = geometry.tile_region(l, 1)
    elif dim == 1:
        region = geometry.Interval(0.0, l)
    else:
        raise InputError("tetrahedral samples exist for dim 3 and the 1-D interval analogue")
    lo, hi = region.bbox()
    reach = delta / 10
    first = np.floor((lo - reach) / h - offset) + 1
    last = np.ceil((hi + reach) / h - offset) - 1
    shape = tuple(int(s) for s in (last - first + 1))
    model = build_lattice(dim, shape, h, "open", origin=h * (first + offset))
    vals = rho0 * geometry.smeared_at(model.coords, region, delta, n_r, n_ang)
    return GridDensity(model, vals)


def _region_volume(l: float, dim: int) -> float:
    return l ** 3 / 24 if dim == 3 else l


def e_delta(rho0: float, l: float, delta: float, dim: int = 3, h: float = 1.0, pot=None,
            tol: Optional[float] = None, cap: int = FOCK_CAP, offset: float = 0.5) -> EldaSample:
    """Exchange energy per volume of a smeared tetrahedron (interval in 1-D).

    Parameters
    ----------
    rho0 : float
        Constant density inside the set.
    l, delta : float
        Scale of the set and smearing length, ``0 < delta <= l/2``.
    dim : {1, 3}
    h : float
        Lattice spacing.
    pot : RadialPotential, optional
        Interaction. Without one the energy is the minimal kinetic energy
        (one-body problem, any size); with one an exact Fock solve is used.
    """
    from .levylieb import kinetic_min, levy_lieb

    if not (0 < delta <= l / 2):
        raise PreconditionError("need 0 < delta <= l/2")
    if rho0 < 0 or rho0 * h ** dim > 1:
        raise InputError("need 0 <= rho0 h^d <= 1")
    vol = _region_volume(l, dim)
    rho = smeared_tile_density(rho0, l, delta, dim, h, offset)
    model = rho.model
    n_active = int(np.sum((rho.occupations > 1e-14) & (rho.occupations < 1 - 1e-14)))
    meta = dict(h=h, n_sites=model.n_sites, n_active=n_active, mass=rho.mass(),
                mass_exact=rho0 * vol)
    if rho0 == 0:
        return EldaSample(rho0, l, delta, 0.0, dim, 0.0, dict(meta, gap=0.0))
    if pot is None:
        t = tol if tol is not None else max(1e-9, 1e-6 * rho0 * vol * 10)
        T, _, cert = kinetic_min(model, rho, tol=t, return_certificate=True)
        E, gap, lower = T, cert.gap, 0.0
        meta["solver"] = "one-body"
    else:
        if n_active > cap:
            raise CapacityError(f"{n_active} active sites exceed the Fock cap of {cap}")
        model.pot = pot
        b, cert, _ = levy_lieb(model, pot, rho, tol=tol or 1e-7, cap=cap)
        E, gap = b.exchange, cert.gap
        lower = -0.5 * float(pot(0.0)) * rho0
        meta["solver"] = "fock"
        meta["direct"] = b.direct
    meta.update(gap=gap, converged=bool(cert.converged))
    return EldaSample(rho0, l, delta, E / vol, dim, lower, meta)


# --------------------------------------------------------------------------
# extrapolation

@dataclass
class EldaEstimate:
    rho0: float
    e_inf: float
    a: float
    b: float
    residual: float
    max_abs_residual: float
    samples: list
    model: str
    accepted: bool
    threshold: float

    def to_dict(self) -> dict:
        return dict(rho0=self.rho0, e_inf=self.e_inf, a=self.a, b=self.b, residual=self.residual,
                    max_abs_residual=self.max_abs_residual, model=self.model,
                    accepted=self.accepted, threshold=self.threshold,
                    n_samples=len(self.samples))

    def predict(self, l, delta):
        l = np.asarray(l, dtype=float)
        return self.e_inf + self.a / (l * np.asarray(delta, dtype=float)) + self.b / l


def extrapolate_elda(samples: Sequence[EldaSample], threshold: Optional[float] = None) -> EldaEstimate:
    """Least-squares fit ``e(l, delta) = e_inf + a/(l delta) + b/l``.

    When every sample shares one ``delta`` the two correction terms coincide;
    the fit then uses ``e_inf + b/l`` and reports ``a = 0`` (model "reduced").
    The estimate is flagged not accepted when the largest absolute residual
    exceeds ``threshold`` (default: 1e-8 relative to the largest value).
    """
    if len(samples) < 3:
        raise InputError("need at least 3 samples")
    rho0s = {s.rho0 for s in samples}
    if len(rho0s) != 1:
        raise InputError("samples mix several densities")
    l = np.array([s.l for s in samples], dtype=float)
    d = np.array([s.delta for s in samples], dtype=float)
    y = np.array([s.value for s in samples], dtype=float)
    if len({(a, b) for a, b in zip(l, d)}) != len(samples):
        raise InputError("samples must have distinct (l, delta)")
    full = np.column_stack([np.ones_like(l), 1 / (l * d), 1 / l])
    if np.allclose(d, d[0]):
        X, kind = full[:, [0, 2]], "reduced"
    else:
        X, kind = full, "full"
    if np.linalg.matrix_rank(X, tol=1e-10 * np.linalg.norm(X)) < X.shape[1]:
        raise InputError("rank-deficient design: samples are collinear in the fit variables")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    if kind == "reduced":
        e_inf, a, b = coef[0], 0.0, coef[1]
    else:
        e_inf, a, b = coef
    res = y - X @ coef
    thr = threshold if threshold is not None else 1e-8 * max(1.0, float(np.max(np.abs(y))))
    mx = float(np.max(np.abs(res)))
    return EldaEstimate(next(iter(rho0s)), float(e_inf), float(a), float(b),
                        float(np.sqrt(np.mean(res ** 2))), mx, list(samples), kind,
                        mx <= thr, float(thr))


@dataclass
class EldaInterpolant:
    """Piecewise-linear ``e_LDA`` over a table of densities (0 outside is an error)."""

    rho0: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        o = np.argsort(self.rho0)
        self.rho0 = np.asarray(self.rho0, dtype=float)[o]
        self.values = np.asarray(self.values, dtype=float)[o]

    @classmethod
    def from_estimates(cls, estimates: Sequence[EldaEstimate]) -> "EldaInterpolant":
        return cls(np.array([e.rho0 for e in estimates]), np.array([e.e_inf for e in estimates]))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.rho0[0] - 1e-12) or np.any(r > self.rho0[-1] + 1e-12):
            raise InputError("density outside the interpolation table")
        return np.interp(r, self.rho0, self.values)

    def lipschitz(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.rho0))))


# --------------------------------------------------------------------------
# LDA functional and residual

def lda_functional(rho: GridDensity, f: Callable, pot=None) -> float:
    """``D(rho) + h^d sum_i f(rho_i)``."""
    from .potential import direct_energy

    try:
        fv = np.asarray(f(rho.values), dtype=float)
    except Exception as exc:  # noqa: BLE001 - user callable
        raise InputError(f"local energy function failed: {exc}") from exc
    if fv.shape != rho.values.shape or not np.all(np.isfinite(fv)):
        raise InputError("local energy function undefined on the density values")
    direct = direct_energy(rho, rho, pot) if pot is not None else 0.0
    return direct + rho.model.cell_volume * float(fv.sum())


@dataclass
class ResidualBudget:
    eps: float
    p: float
    theta: float
    exchange: float
    lda_local: float
    lhs: float
    mass: float
    local_term: float
    ho_term: float
    gradient_term: float
    gap: float

    @property
    def rhs(self) -> float:
        return self.local_term + self.ho_term + self.gradient_term

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else math.inf)

    @property
    def normalized(self) -> float:
        return self.lhs / self.mass if self.mass > 0 else 0.0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(rhs=self.rhs, ratio=self.ratio, normalized=self.normalized)
        return d


def check_window(p: float, theta: float) -> None:
    if not p > 3:
        raise InputError("need p > 3")
    if not 0 < theta < 1:
        raise InputError("need 0 < theta < 1")
    if not (2 <= p * theta <= 1 + 2 * p / 5):
        raise InputError("need 2 <= p theta <= 1 + 2p/5")


def theorem2_residual(model: LatticeModel, pot, rho: GridDensity, eps: float, p: float,
                      theta: float, e_lda_fn: Callable, tol: float = 1e-8,
                      cap: int = FOCK_CAP, return_rdm: bool = False):
    """``|E(rho) - int e_LDA(rho)|`` against the unit-constant error terms.

    The right side uses ``eps int(rho + rho^2)``, ``eps^-1 int |grad sqrt rho|^2``
    and ``eps^(1 - 5/(2p)) int |grad rho^theta|^p``. With ``return_rdm`` the
    one-body density matrix of the minimizer is returned as well.
    """
    from .levylieb import kinetic_min, levy_lieb, one_body_rdm

    check_window(p, theta)
    if not eps > 0:
        raise InputError("need eps > 0")
    if rho.model is not model:
        rho = GridDensity(model, rho.values)
    fb = density_functionals(rho, theta, p)
    if fb.mass == 0:
        out = ResidualBudget(eps, p, theta, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        return (out, np.zeros((model.n_sites,) * 2)) if return_rdm else out
    if pot is None:
        E, gamma, cert = kinetic_min(model, rho, tol=tol, return_certificate=True)
    else:
        b, cert, state = levy_lieb(model, pot, rho, tol=tol, cap=cap)
        E = b.exchange
        gamma = one_body_rdm(state) if return_rdm else None
    local = lda_functional(rho, e_lda_fn, None)
    lhs = abs(E - local)
    out = ResidualBudget(eps, p, theta, E, local, lhs, fb.mass, eps * (fb.mass + fb.l2),
                         fb.ho / eps, eps ** (1 - 5 / (2 * p)) * fb.grad_theta_p, cert.gap)
    return (out, gamma) if return_rdm else out
