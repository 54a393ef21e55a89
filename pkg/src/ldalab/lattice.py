"""Lattice models, grid densities and the scalar density functionals.

Densities are stored as continuum values ``rho_i`` at the sites; the site
occupation is ``n_i = rho_i h^d`` and must not exceed 1 for a fermionic
density. Integrals are ``h^d sum_i``. Pair sums such as the direct term use
occupations, ``D = (1/2) sum_ij n_i n_j W_ij``. At ``h = 1`` values and
occupations coincide.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import CapacityError, InputError

FOCK_CAP = 16


@dataclass(eq=False)
class LatticeModel:
    """A rectangular lattice with graph Laplacian ``K / h^2``.

    Attributes
    ----------
    dim : int
    shape : tuple of int
    h : float
    boundary : {"open", "periodic"}
    coords : ndarray, shape (n_sites, dim)
    laplacian : scipy.sparse.csr_matrix
        ``sum_edges (e_i - e_j)(e_i - e_j)^T / h^2`` over forward edges.
    pot : RadialPotential or None
        Attached interaction, used when ``interaction()`` is called without one.
    """

    dim: int
    shape: tuple
    h: float
    boundary: str
    coords: np.ndarray
    laplacian: sp.csr_matrix
    edges: np.ndarray
    pot: object = None
    _W: dict = field(default_factory=dict, repr=False)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def box(self) -> np.ndarray:
        per = self.boundary == "periodic"
        return np.array([n * self.h if per else np.inf for n in self.shape])

    def same_grid(self, other: "LatticeModel") -> bool:
        return (self.shape == other.shape and self.h == other.h
                and self.boundary == other.boundary
                and np.array_equal(self.coords, other.coords))

    def interaction(self, pot=None) -> np.ndarray:
        """Dense ``W_ij = w(|x_i - x_j|)`` (minimum image when periodic)."""
        from .potential import kernel_matrix

        pot = self.pot if pot is None else pot
        if pot is None:
            return np.zeros((self.n_sites, self.n_sites))
        key = id(pot)
        if key not in self._W:
            self._W[key] = (pot, kernel_matrix(self.coords, pot, self.box))
        return self._W[key][1]

    def dense_laplacian(self) -> np.ndarray:
        return self.laplacian.toarray()

    def check_fock(self, cap: int = FOCK_CAP, n_sites: Optional[int] = None) -> None:
        n = self.n_sites if n_sites is None else n_sites
        if n > cap:
            raise CapacityError(f"Fock space over {n} sites exceeds the cap of {cap} sites")


def _forward_edges(shape, periodic: bool):
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    out = []
    for a, n in enumerate(shape):
        src = idx
        dst = np.roll(idx, -1, axis=a)
        if not periodic:
            sl = [slice(None)] * len(shape)
            sl[a] = slice(0, n - 1)
            src, dst = src[tuple(sl)], dst[tuple(sl)]
        out.append(np.stack([src.ravel(), dst.ravel(), np.full(src.size, a)], axis=1))
    return np.concatenate(out)


def build_lattice(dim: int, shape, h: float = 1.0, boundary: str = "open", pot=None,
                  origin=None) -> LatticeModel:
    """Construct a lattice model.

    Parameters
    ----------
    dim : int
        1, 2 or 3.
    shape : int or sequence of int
        Sites per axis (at least 2).
    h : float
        Lattice spacing.
    boundary : {"open", "periodic"}
    pot : RadialPotential, optional
        Interaction attached to the model.
    origin : sequence of float, optional
        Coordinates of site 0 (default: zero).
    """
    if dim not in (1, 2, 3):
        raise InputError("dim must be 1, 2 or 3")
    shape = (int(shape),) * dim if np.isscalar(shape) else tuple(int(s) for s in shape)
    if len(shape) != dim or min(shape) < 2:
        raise InputError("shape needs one entry >= 2 per axis")
    if not h > 0:
        raise InputError("spacing must be positive")
    if boundary not in ("open", "periodic"):
        raise InputError("boundary must be 'open' or 'periodic'")
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
    axes = [origin[a] + h * np.arange(n) for a, n in enumerate(shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    edges = _forward_edges(shape, boundary == "periodic")
    n = int(np.prod(shape))
    i, j = edges[:, 0], edges[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([np.ones(len(i)), np.ones(len(i)), -np.ones(len(i)), -np.ones(len(i))])
    K = sp.csr_matrix((vals / h ** 2, (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    return LatticeModel(dim, shape, float(h), boundary, coords, K, edges, pot)


@dataclass
class GridDensity:
    """Nonnegative density on the sites of a lattice model."""

    model: LatticeModel
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.model.n_sites:
            raise InputError(f"density has {v.size} entries, model has {self.model.n_sites} sites")
        if not np.all(np.isfinite(v)):
            raise InputError("density has non-finite entries")
        if np.any(v < 0):
            raise InputError("density has negative entries")
        self.values = v

    @classmethod
    def from_occupations(cls, model: LatticeModel, n) -> "GridDensity":
        return cls(model, np.asarray(n, dtype=float) / model.cell_volume)

    @property
    def occupations(self) -> np.ndarray:
        return self.values * self.model.cell_volume

    def representable(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.occupations <= 1 + tol))

    def mass(self) -> float:
        return float(self.occupations.sum())

    def grid_values(self) -> np.ndarray:
        return self.values.reshape(self.model.shape)


@dataclass
class FunctionalBundle:
    mass: float
    l2: float
    l53: float
    ho: float
    grad_theta_p: float
    theta: float
    p: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def forward_gradients(model: LatticeModel, u: np.ndarray) -> np.ndarray:
    """Forward differences ``(u_{i+e_a} - u_i)/h`` per site and axis (0 past open ends)."""
    g = np.zeros((model.n_sites, model.dim))
    e = model.edges
    g[e[:, 0], e[:, 2]] = (u[e[:, 1]] - u[e[:, 0]]) / model.h
    return g


def density_functionals(rho: GridDensity, theta: float = 0.5, p: float = 4.0) -> FunctionalBundle:
    """Midpoint integrals and forward-difference gradient functionals of ``rho``.

    ``ho = int |grad sqrt(rho)|^2`` and ``grad_theta_p = int |grad rho^theta|^p``,
    with the gradient vector assembled from forward differences at each site.
    """
    if not (0 < theta < 1) or not p > 3:
        warnings.warn("theta or p outside the regime 0 < theta < 1, p > 3", stacklevel=2)
    m = rho.model
    v = rho.values
    w = m.cell_volume
    gs = forward_gradients(m, np.sqrt(v))
    gt = forward_gradients(m, v ** theta)
    return FunctionalBundle(
        mass=w * float(v.sum()), l2=w * float(np.sum(v * v)),
        l53=w * float(np.sum(v ** (5 / 3))), ho=w * float(np.sum(gs * gs)),
        grad_theta_p=w * float(np.sum(np.sum(gt * gt, axis=1) ** (p / 2))),
        theta=float(theta), p=float(p))


def kinetic_hoffmann_ostenhoff_gap(model: LatticeModel, gamma: np.ndarray) -> float:
    """``Tr(K gamma) - ho(rho_gamma)`` for a one-body density matrix ``gamma``.

    The gap is nonnegative for ``gamma >= 0`` since ``|gamma_ij|^2 <= gamma_ii gamma_jj``.
    """
    rho = GridDensity.from_occupations(model, np.clip(np.real(np.diag(gamma)), 0, None))
    T = float(np.real(np.sum(model.laplacian.multiply(gamma.T))))
    return T - density_functionals(rho, 0.5, 4.0).ho


# --------------------------------------------------------------------------
# density recipes

@dataclass
class SmearedProfile:
    """``amplitude * (1_region * eta_delta)`` sampled at the sites."""

    region: object
    delta: float
    amplitude: float
    n_r: int = 12
    n_ang: int = 96


@dataclass
class RandomSmooth:
    """Gaussian-filtered white noise rescaled to ``[0, amplitude]``."""

    seed: int
    corr_length: float
    amplitude: float = 0.5


@dataclass
class SlowlyVarying:
    """``base(N^{-1/d} (x - center))`` for a base profile ``base``."""

    base: Callable[[np.ndarray], np.ndarray]
    dilation: float = 1.0
    center: Optional[np.ndarray] = None


def sample_density(recipe, model: LatticeModel, representable: bool = True) -> GridDensity:
    """Build a grid density from a recipe; deterministic given the recipe."""
    from . import geometry

    x = model.coords
    if isinstance(recipe, SmearedProfile):
        if recipe.amplitude < 0:
            raise InputError("amplitude must be nonnegative")
        vals = recipe.amplitude * geometry.smeared_at(x, recipe.region, recipe.delta,
                                                      recipe.n_r, recipe.n_ang)
    elif isinstance(recipe, RandomSmooth):
        rng = np.random.default_rng(recipe.seed)
        noise = rng.standard_normal(model.shape)
        mode = "wrap" if model.boundary == "periodic" else "reflect"
        f = ndimage.gaussian_filter(noise, recipe.corr_length / model.h, mode=mode)
        span = f.max() - f.min()
        f = (f - f.min()) / span if span > 0 else np.zeros_like(f)
        vals = recipe.amplitude * f.ravel()
    elif isinstance(recipe, SlowlyVarying):
        c = x.mean(axis=0) if recipe.center is None else np.asarray(recipe.center, dtype=float)
        vals = np.asarray(recipe.base((x - c) / recipe.dilation ** (1 / model.dim)), dtype=float)
    elif isinstance(recipe, (np.ndarray, list, tuple)):
        vals = np.asarray(recipe, dtype=float)
    else:
        raise InputError(f"unknown density recipe {type(recipe).__name__}")
    rho = GridDensity(model, vals.reshape(-1))
    if representable and not rho.representable():
        raise InputError("density exceeds one particle per site")
    return rho
