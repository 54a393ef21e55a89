"""Radially symmetric interaction potentials and kernel-level quantities.

The Fourier convention is ``w_hat(k) = int w(x) exp(-i k.x) dx`` in three
dimensions, so that ``w_hat(k) = (4 pi / k) int_0^inf r sin(k r) w(r) dr`` and
the inversion carries a factor ``(2 pi)^-3``.
"""
from __future__ import annotations

import math
import threading
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import InputError, PreconditionError, QuadratureWarning

_CACHE_LOCK = threading.Lock()


@dataclass(eq=False)
class RadialPotential:
    """A radial profile ``r -> w(r)`` truncated at ``r_cut``.

    Parameters
    ----------
    family : str
        Family name (``gaussian``, ``bump``, ``exponential``, ``tabulated``,
        ``coulomb`` or ``custom``).
    params : dict
        Family parameters, echoed into reports.
    raw : callable
        Untruncated profile, vectorized over ``r``.
    r_cut : float
        Radius beyond which the profile is treated as zero.
    scale : float
        Characteristic length, used to size quadrature panels.
    tol : float
        Relative tolerance for quadratures.
    hat : callable, optional
        Known transform ``k -> w_hat(k)``. When absent the transform is
        computed by radial quadrature and cached.
    """

    family: str
    params: dict
    raw: Callable[[np.ndarray], np.ndarray]
    r_cut: float
    scale: float = 1.0
    tol: float = 1e-8
    hat: Optional[Callable[[np.ndarray], np.ndarray]] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(r <= self.r_cut, self.raw(r), 0.0)
        return out

    @property
    def omega_zero(self) -> float:
        with np.errstate(divide="ignore"):
            return float(self.raw(np.array([0.0]))[0])

    def transform(self, k) -> np.ndarray:
        return hankel_transform(self, k)

    def describe(self) -> dict:
        return {"family": self.family, "params": dict(self.params),
                "r_cut": self.r_cut, "tol": self.tol}


# --------------------------------------------------------------------------
# families

def gaussian(a: float = 1.0, b: float = 1.0, r_cut: float | None = None) -> RadialPotential:
    """``a exp(-(r/b)^2)``; truncated at 8b by default (tail below 1e-26)."""
    if a < 0 or b <= 0:
        raise InputError("gaussian needs a >= 0 and b > 0")
    return RadialPotential("gaussian", {"a": a, "b": b},
                           lambda r: a * np.exp(-(r / b) ** 2),
                           r_cut=8.0 * b if r_cut is None else r_cut, scale=b)


def bump(a: float = 1.0, R: float = 2.0) -> RadialPotential:
    """Compactly supported Wendland profile ``a (1-r/R)_+^4 (1 + 4r/R)``."""
    if a < 0 or R <= 0:
        raise InputError("bump needs a >= 0 and R > 0")

    def raw(r):
        s = np.clip(r / R, 0.0, 1.0)
        return a * (1 - s) ** 4 * (1 + 4 * s)

    return RadialPotential("bump", {"a": a, "R": R}, raw, r_cut=R, scale=R / 2)


def _smooth_step(t):
    # C-infinity step: 0 for t <= 0, 1 for t >= 1
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t, 1.0)), 0.0)
    return f / (f + g)


def exponential(a: float = 1.0, b: float = 1.0, r_cut: float | None = None) -> RadialPotential:
    """``a exp(-r/b)`` multiplied by a smooth cutoff on ``[0.75 r_cut, r_cut]``."""
    if a < 0 or b <= 0:
        raise InputError("exponential needs a >= 0 and b > 0")
    rc = 40.0 * b if r_cut is None else float(r_cut)

    def raw(r):
        return a * np.exp(-r / b) * (1.0 - _smooth_step((r - 0.75 * rc) / (0.25 * rc)))

    return RadialPotential("exponential", {"a": a, "b": b}, raw, r_cut=rc, scale=b)


def tabulated(r, omega, r_cut: float | None = None) -> RadialPotential:
    """Monotone cubic (PCHIP) interpolation of sampled ``(r, omega)`` pairs."""
    r = np.asarray(r, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if r.ndim != 1 or r.shape != omega.shape or r.size < 2:
        raise InputError("tabulated profile needs matching 1-D arrays of length >= 2")
    if np.any(r < 0):
        raise InputError("negative radius in tabulated profile")
    if np.any(np.diff(r) <= 0):
        raise InputError("tabulated radii must be strictly increasing")
    if not np.all(np.isfinite(omega)):
        raise InputError("non-finite tabulated profile value")
    interp = PchipInterpolator(r, omega, extrapolate=False)
    rmax = float(r[-1])

    def raw(x):
        x = np.asarray(x, dtype=float)
        out = np.nan_to_num(interp(np.clip(x, r[0], rmax)))
        return np.where(x <= rmax, out, 0.0)

    rc = rmax if r_cut is None else min(float(r_cut), rmax)
    return RadialPotential("tabulated", {"n_samples": int(r.size)}, raw, r_cut=rc,
                           scale=rc / 8)


def coulomb(r_cut: float = 50.0) -> RadialPotential:
    """``1/r``; provided only to demonstrate validation failure."""
    return RadialPotential("coulomb", {}, lambda r: 1.0 / r, r_cut=r_cut,
                           scale=r_cut / 8)


def with_transform(pot: RadialPotential, k, hat_values) -> RadialPotential:
    """Copy of ``pot`` whose transform is the PCHIP interpolant of given samples."""
    k = np.asarray(k, dtype=float)
    interp = PchipInterpolator(k, np.asarray(hat_values, dtype=float), extrapolate=False)
    kmax = float(k[-1])

    def hat(q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= kmax, np.nan_to_num(interp(np.clip(q, k[0], kmax))), 0.0)

    return RadialPotential(pot.family + "+table", dict(pot.params), pot.raw, pot.r_cut,
                           pot.scale, pot.tol, hat=hat)


FAMILIES = {"gaussian": gaussian, "bump": bump, "exponential": exponential,
            "coulomb": coulomb}


def from_spec(spec: dict) -> RadialPotential:
    """Build a potential from a key-value mapping.

    Recognized keys: ``family``, ``table`` (CSV path with ``r,omega`` rows),
    ``r_cut``, ``tol`` and any family parameter.
    """
    spec = {str(k).strip().lower(): v for k, v in spec.items()}
    fam = str(spec.pop("family", "gaussian")).strip().lower()
    tol = float(spec.pop("tol", 1e-8))
    r_cut = spec.pop("r_cut", None)
    if fam == "tabulated":
        path = spec.pop("table", None)
        if path is None:
            raise InputError("tabulated family needs a 'table' CSV path")
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        pot = tabulated(data[:, 0], data[:, 1], None if r_cut is None else float(r_cut))
    elif fam in FAMILIES:
        kwargs = {k: float(v) for k, v in spec.items() if k != "table"}
        if r_cut is not None and fam != "bump":
            kwargs["r_cut"] = float(r_cut)
        try:
            pot = FAMILIES[fam](**kwargs)
        except TypeError as exc:
            raise InputError(f"bad parameters for family {fam}: {exc}") from None
    else:
        raise InputError(f"unknown potential family {fam!r}")
    pot.tol = tol
    return pot


# --------------------------------------------------------------------------
# transforms

def _hankel_point(pot: RadialPotential, k: float) -> float:
    R = pot.r_cut
    # absolute floor relative to the transform scale keeps tiny tails quiet
    epsabs = 1e-3 * pot.tol * float(np.max(np.abs(np.nan_to_num(
        pot(np.linspace(1e-9, R, 64)))))) * pot.scale ** 3 * 4 * math.pi

    def f(r):
        with np.errstate(invalid="ignore"):
            return np.nan_to_num(r * pot(r), nan=0.0, posinf=0.0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if k == 0.0:
            val, err = integrate.quad(lambda r: r * f(r), 0.0, R, epsabs=epsabs,
                                      epsrel=pot.tol, limit=400)
            val, err = 4 * math.pi * val, 4 * math.pi * err
        else:
            val, err = integrate.quad(f, 0.0, R, weight="sin", wvar=k,
                                      epsabs=k * epsabs, epsrel=pot.tol, limit=400)
            val, err = 4 * math.pi * val / k, 4 * math.pi * err / k
    if not err <= 10 * max(4 * math.pi * epsabs, pot.tol * abs(val)):
        warnings.warn(f"radial transform at k={k:g} reached error estimate {err:.3g}",
                      QuadratureWarning, stacklevel=3)
    return val


def hankel_transform(pot: RadialPotential, k_grid) -> np.ndarray:
    """Radial Fourier transform of ``pot`` sampled on ``k_grid``.

    Values are cached on the potential (compute-if-absent, thread safe).

    Parameters
    ----------
    pot : RadialPotential
    k_grid : array_like
        Nonnegative wavenumbers.

    Returns
    -------
    ndarray
        ``w_hat(k)`` with the ``int w(x) exp(-ik.x) dx`` convention.
    """
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    if np.any(k < 0) or not np.all(np.isfinite(k)):
        raise InputError("wavenumbers must be finite and nonnegative")
    if pot.hat is not None:
        return np.asarray(pot.hat(k), dtype=float)
    out = np.empty_like(k)
    for i, ki in enumerate(k):
        key = float(ki)
        val = pot._cache.get(key)
        if val is None:
            val = _hankel_point(pot, key)
            with _CACHE_LOCK:
                val = pot._cache.setdefault(key, val)
        out[i] = val
    return out


# --------------------------------------------------------------------------
# validation

@dataclass
class KernelReport:
    l1_norm: float
    l1_norm_hat: float
    first_moment: float
    omega_zero: float
    min_profile: float
    min_hat: float
    monotone_violations_profile: int
    monotone_violations_hat: int
    inversion_residual: float
    coulomb_bound: float
    verdict: dict

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in d.items()}


def _radial_moment(f, a, b, power, tol):
    val, _ = integrate.quad(lambda r: r ** power * f(r), a, b, epsabs=0.0,
                            epsrel=tol, limit=400)
    return 4 * math.pi * val


_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


def _hat_integral(pot: RadialPotential, tol: float, max_doublings: int = 14):
    """Integrate ``4 pi k^2 w_hat(k)`` over doubling panels; returns nodes too.

    Convergence is declared when a panel contributes below ``tol`` relative,
    or when panel contributions decay geometrically, in which case the
    geometric tail is added.
    """
    width = 4.0 / pot.scale
    lo, hi = 0.0, width
    total = 0.0
    parts, nodes, vals = [], [], []
    converged = False
    for _ in range(max_doublings):
        x = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * _GL_W
        h = hankel_transform(pot, x)
        part = 4 * math.pi * float(np.sum(w * x * x * h))
        nodes.append(x)
        vals.append(h)
        parts.append(part)
        total += part
        if hi > 2 * width and abs(part) <= 1e-3 * tol * abs(total):
            converged = True
            break
        if len(parts) >= 5:
            ratios = [abs(parts[-i]) / max(abs(parts[-i - 1]), 1e-300) for i in (1, 2, 3)]
            if max(ratios) < 0.7 and min(parts[-4:]) * max(parts[-4:]) > 0:
                q = ratios[0]
                total += part * q / (1 - q)
                converged = True
                break
        lo, hi = hi, 2 * hi
    return total, converged, np.concatenate(nodes), np.concatenate(vals)


def validate_short_range(pot: RadialPotential, tol: float = 1e-6) -> KernelReport:
    """Evaluate the short-range axioms numerically.

    Checks nonnegativity and integrability of the profile and of its
    transform, finiteness of the first moment and radial monotonicity of both.
    Failures are reported in ``verdict``; nothing is raised for them.
    """
    R = pot.r_cut
    if not (R > 0 and math.isfinite(R)):
        raise InputError("r_cut must be positive and finite")
    r = np.linspace(0.0, R, 4001)[1:]
    with np.errstate(all="ignore"):
        prof = pot(r)
    if not np.all(np.isfinite(prof)):
        raise InputError("profile is not finite on (0, r_cut]")
    qtol = max(pot.tol, 1e-10)
    w0 = pot.omega_zero
    scale = max(np.max(np.abs(prof)), abs(w0) if math.isfinite(w0) else 0.0, 1e-300)

    l1 = _radial_moment(pot, 0.0, R, 2, qtol)
    fm = _radial_moment(pot, 0.0, R, 3, qtol)
    # tail over [R, 2R] of the untruncated family decides integrability
    with np.errstate(all="ignore"):
        tail_l1 = _radial_moment(lambda x: np.nan_to_num(pot.raw(x)), R, 2 * R, 2, qtol)
        tail_fm = _radial_moment(lambda x: np.nan_to_num(pot.raw(x)), R, 2 * R, 3, qtol)
    l1_ok = math.isfinite(l1) and abs(tail_l1) <= tol * max(abs(l1), 1e-300)
    fm_ok = math.isfinite(fm) and abs(tail_fm) <= tol * max(abs(fm), 1e-300)

    hat_int, hat_conv, knodes, hvals = _hat_integral(pot, tol)
    hat0 = float(hankel_transform(pot, [0.0])[0])
    hscale = max(abs(hat0), np.max(np.abs(hvals)), 1e-300)
    min_hat = float(min(np.min(hvals), hat0))
    order = np.argsort(knodes)
    hsorted = np.concatenate([[hat0], hvals[order]])
    mono_hat = int(np.sum(np.diff(hsorted) > tol * hscale))
    mono_prof = int(np.sum(np.diff(np.concatenate([[w0] if math.isfinite(w0) else [],
                                                   prof])) > tol * scale))
    min_prof = float(min(np.min(prof), w0))
    inversion = abs(w0 - hat_int / (2 * math.pi) ** 3) if math.isfinite(w0) else math.inf

    verdict = {
        "omega_nonnegative": bool(min_prof >= -tol * scale),
        "omega_integrable": bool(l1_ok),
        "hat_nonnegative": bool(min_hat >= -tol * hscale),
        "hat_integrable": bool(hat_conv and math.isfinite(hat_int)),
        "first_moment_finite": bool(fm_ok),
        "omega_decreasing": bool(mono_prof == 0),
        "hat_decreasing": bool(mono_hat == 0),
        "omega_zero_finite": bool(math.isfinite(w0)),
    }
    return KernelReport(
        l1_norm=float(l1), l1_norm_hat=float(hat_int), first_moment=float(fm),
        omega_zero=float(w0), min_profile=min_prof, min_hat=min_hat,
        monotone_violations_profile=mono_prof, monotone_violations_hat=mono_hat,
        inversion_residual=float(inversion),
        coulomb_bound=float(np.max(r * prof)), verdict=verdict)


# --------------------------------------------------------------------------
# kernels on point sets

def pair_distances(coords: np.ndarray, box: Optional[np.ndarray] = None) -> np.ndarray:
    """Pairwise distances, with minimum-image convention along periodic axes.

    ``box`` holds the period per axis, or ``inf`` for open axes.
    """
    diff = coords[:, None, :] - coords[None, :, :]
    if box is not None:
        box = np.asarray(box, dtype=float)
        per = np.isfinite(box)
        if np.any(per):
            L = box[per]
            diff[..., per] -= L * np.round(diff[..., per] / L)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def kernel_matrix(coords: np.ndarray, pot: RadialPotential,
                  box: Optional[np.ndarray] = None) -> np.ndarray:
    """``W_ij = w(|x_i - x_j|)`` on a point set."""
    W = pot(pair_distances(np.asarray(coords, dtype=float), box))
    return 0.5 * (W + W.T)


def direct_energy(rho1, rho2, pot: RadialPotential) -> float:
    """Direct term ``(1/2) sum_ij n1_i n2_j W_ij`` between two grid densities.

    Occupations ``n = rho h^d`` are used (see ``lattice``), so at ``h = 1`` this
    is the plain double sum over site values.
    """
    if rho1.model is not rho2.model and not rho1.model.same_grid(rho2.model):
        raise InputError("densities live on different grids")
    W = rho1.model.interaction(pot)
    return 0.5 * float(rho1.occupations @ W @ rho2.occupations)


def kernel_difference_transform(pot: RadialPotential, alpha: float, k_grid) -> float:
    """Minimum over ``k_grid`` of ``w_hat(alpha^{1/3} k) - w_hat(k)``.

    This is the transform of ``(1/alpha) w(alpha^{-1/3} x) - w(x)``.
    """
    if not (0.0 < alpha <= 1.0):
        raise InputError("alpha must lie in (0, 1]")
    k = np.asarray(k_grid, dtype=float)
    if alpha == 1.0:
        return 0.0
    return float(np.min(hankel_transform(pot, alpha ** (1 / 3) * k) - hankel_transform(pot, k)))


# --------------------------------------------------------------------------
# localization kernel

@dataclass
class GrafSchenkerKernel:
    scale_l: float
    smear_d: float
    radii: np.ndarray
    h_profile: np.ndarray
    rotation_samples: int
    seed: int
    integral_stderr: float

    def to_dict(self) -> dict:
        return {"scale_l": self.scale_l, "smear_d": self.smear_d,
                "radii": self.radii.tolist(), "h_profile": self.h_profile.tolist(),
                "rotation_samples": self.rotation_samples, "seed": self.seed,
                "integral_stderr": self.integral_stderr}


def gs_kernel(pot: RadialPotential, l: float, delta: float, n_rotations: int = 512,
              seed: int = 0, n_radial: int = 48, rel_stderr_tol: float = 0.05):
    """Rotation-averaged tile autocorrelation and the discarded kernel mass.

    Returns
    -------
    (GrafSchenkerKernel, float)
        The sampled profile ``r -> h(r)`` at radial Gauss nodes and
        ``int (1 - h) w dx``.
    """
    from . import geometry

    if not (0 < delta <= l / 2):
        raise PreconditionError("gs_kernel needs 0 < delta <= l/2")
    x, w = np.polynomial.legendre.leggauss(n_radial)
    R = pot.r_cut
    r = 0.5 * R * (x + 1)
    wr = 0.5 * R * w
    H = geometry.averaged_autocorrelation_samples(r, l, delta, n_rotations, seed)
    weight = 4 * math.pi * wr * r * r * pot(r)
    per_rot = (1.0 - H) @ weight                      # one estimate per rotation
    integral = float(np.mean(per_rot))
    stderr = float(np.std(per_rot, ddof=1) / math.sqrt(n_rotations)) if n_rotations > 1 else math.inf
    if integral > 0 and stderr > rel_stderr_tol * integral:
        warnings.warn(f"rotation average stderr {stderr:.3g} exceeds "
                      f"{rel_stderr_tol:.0%} of the estimate; increase n_rotations",
                      QuadratureWarning, stacklevel=2)
    ker = GrafSchenkerKernel(float(l), float(delta), r, H.mean(axis=0),
                             int(n_rotations), int(seed), stderr)
    return ker, integral
