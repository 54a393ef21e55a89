"""Inequality checks on exact desk-scale computations.

Every check is deterministic given its seed and arguments and returns a
``CheckReport``. Asserting checks pass when no instance has a margin below
``-tol``; reported checks collect finite diagnostics and always carry the
verdict ``"reported"`` unless their stability conditions fail.

Margins are ``rhs - lhs`` for an inequality ``lhs <= rhs`` (positive is good).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .errors import InputError, PreconditionError, QuadratureWarning
from .lattice import (GridDensity, LatticeModel, build_lattice, density_functionals,
                      forward_gradients, kinetic_hoffmann_ostenhoff_gap)
from .levylieb import levy_lieb, random_grand_state, state_observables
from .potential import (direct_energy, gs_kernel, kernel_difference_transform,
                        validate_short_range)


@dataclass
class CheckReport:
    check_id: str
    instances: int
    violations: int
    worst_margin: float
    margin_min: float
    margin_median: float
    seed: Optional[int]
    config: dict
    verdict: str
    asserting: bool = True
    notices: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    margins: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "reported")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("check_id", "instances", "violations", "worst_margin",
                                           "margin_min", "margin_median", "seed", "config",
                                           "verdict", "asserting", "notices", "values")}
        return json.loads(json.dumps(d, default=_jsonable))

    def margin_rows(self):
        """Rows ``(check_id, index, label, margin)`` for CSV output."""
        return [(self.check_id, i, lab, m) for i, (lab, m) in enumerate(self.margins)]


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    return str(o)


def _report(check_id, margins, tol, seed, config, notices=(), values=None, asserting=True,
            skipped=0):
    m = np.array([x for _, x in margins], dtype=float)
    if m.size:
        viol = int(np.sum(m < -tol))
        worst, med = float(m.min()), float(np.median(m))
    else:
        viol, worst, med = 0, math.nan, math.nan
    if asserting:
        verdict = "pass" if viol == 0 else "fail"
    else:
        verdict = "reported"
    vals = dict(values or {})
    if skipped:
        vals["skipped"] = skipped
    return CheckReport(check_id, len(margins), viol, worst, worst, med, seed, dict(config),
                       verdict, asserting, list(notices), vals, list(margins))


def _seeds(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


class _EnergyLog:
    """Exchange energies ``E = F_LL - D`` with the duality gaps of every solve."""

    def __init__(self, tol=1e-9):
        self.tol = tol
        self.gaps = []
        self.unconverged = 0

    def __call__(self, model, pot, rho):
        b, cert, _ = levy_lieb(model, pot, rho, tol=self.tol)
        self.gaps.append(cert.gap)
        if not cert.converged:
            self.unconverged += 1
        return b.exchange

    def summary(self) -> dict:
        g = np.abs(self.gaps) if self.gaps else np.zeros(1)
        return dict(solves=len(self.gaps), max_gap=float(g.max()), unconverged=self.unconverged)


def row_sum_bound(W: np.ndarray) -> float:
    """``S = max_i sum_j W_ij``, the lattice stand-in for ``int omega``."""
    return float(np.max(W.sum(axis=1)))


def is_psd(W: np.ndarray, rtol: float = 1e-12) -> bool:
    ev = np.linalg.eigvalsh(0.5 * (W + W.T))
    return bool(ev.min() >= -rtol * max(1.0, abs(ev).max()))


# --------------------------------------------------------------------------
# interaction bounds

def check_intomega(model: LatticeModel, pot, n_trials: int = 500, seed: int = 0,
                   tol: float = 1e-9, max_particles: int = 4) -> CheckReport:
    """Pair interaction minus direct term against the ``omega(0)`` and row-sum bounds.

    For random grand states ``Gamma``:
    i)  ``C(Gamma) - D(rho) >= -(omega(0)/2) sum_i n_i`` (needs a PSD kernel matrix)
    ii) ``C(Gamma) - D(rho) >= -(S/2) sum_i n_i^2`` with ``S = max_i sum_j W_ij``.
    """
    model.check_fock()
    rep = validate_short_range(pot)
    if not rep.passed:
        raise PreconditionError("potential fails the short-range checks")
    W = model.interaction(pot)
    notices = []
    psd = is_psd(W)
    if not psd:
        notices.append("kernel matrix is not PSD: bound i) skipped")
    w0, S = float(pot(0.0)), row_sum_bound(W)
    margins = []
    for k, rng in enumerate(_seeds(seed, n_trials)):
        state = random_grand_state(model.n_sites, rng, max_particles)
        _, C, rho = state_observables(state, model, pot)
        n = rho.occupations
        gap = C - direct_energy(rho, rho, pot)
        if psd:
            margins.append((f"i/{k}", gap + 0.5 * w0 * n.sum()))
        margins.append((f"ii/{k}", gap + 0.5 * S * float(n @ n)))
    cfg = dict(n_sites=model.n_sites, n_trials=n_trials, tol=tol, max_particles=max_particles)
    return _report("intomega", margins, tol, seed, cfg, notices, dict(S=S, omega0=w0, psd=psd))


def _random_chain_density(rng, n_sites, hi):
    return rng.uniform(0.0, 1.0, n_sites) * hi


def check_subadditivity(model, pot, n_trials: int = 100,
                        eps_list: Sequence[float] = (0.25, 0.5, 0.75), seed: int = 0,
                        tol: float = 1e-9, solver_tol: float = 1e-9) -> CheckReport:
    """``E(r1 + r2) <= (1-e) E(r1) + e E(r1 + r2/e) + ((1-e)/e) D(r2)``.

    ``model`` may be one lattice or a sequence; instances cycle through them.
    Pairs are drawn so that ``r1 + r2/e`` stays below one particle per site for
    every ``e`` in ``eps_list``; instances that are not representable are skipped.
    """
    models = [model] if isinstance(model, LatticeModel) else list(model)
    eps_list = [float(e) for e in eps_list]
    if any(not (0 < e <= 1) for e in eps_list):
        raise InputError("eps must lie in (0, 1]")
    e_min = min(eps_list)
    energy = _EnergyLog(solver_tol)
    margins, skipped = [], 0
    for k, rng in enumerate(_seeds(seed, n_trials)):
        m = models[k % len(models)]
        v = m.cell_volume
        n1 = _random_chain_density(rng, m.n_sites, 0.6)
        n2 = rng.uniform(0.0, 1.0, m.n_sites) * e_min * (1.0 - n1)
        r1 = GridDensity.from_occupations(m, n1)
        r2 = GridDensity.from_occupations(m, n2)
        if not all(GridDensity.from_occupations(m, n1 + n2 / e).representable() for e in eps_list):
            skipped += 1
            continue
        E1 = energy(m, pot, r1)
        E12 = energy(m, pot, GridDensity.from_occupations(m, n1 + n2))
        D2 = direct_energy(r2, r2, pot)
        for e in eps_list:
            Ee = E12 if e == 1.0 else energy(m, pot, GridDensity.from_occupations(m, n1 + n2 / e))
            rhs = (1 - e) * E1 + e * Ee + (1 - e) / e * D2
            margins.append((f"{k}/eps={e}", rhs - E12))
    cfg = dict(sizes=[m.n_sites for m in models], n_trials=n_trials, eps=eps_list, tol=tol)
    return _report("subadditivity", margins, tol, seed, cfg, values=energy.summary(),
                   skipped=skipped)


def scaled_model(model: LatticeModel, alpha: float) -> LatticeModel:
    """Same sites with spacing ``alpha^(-1/d) h``; occupations carry over unchanged."""
    f = alpha ** (-1.0 / model.dim)
    origin = model.coords[0] * f
    return build_lattice(model.dim, model.shape, model.h * f, model.boundary, model.pot, origin)


def check_scaling(model: LatticeModel, pot, n_trials: int = 50,
                  alpha_list: Sequence[float] = (0.3, 0.5, 0.8), seed: int = 0,
                  tol: float = 1e-8, solver_tol: float = 1e-9,
                  k_grid: Optional[np.ndarray] = None) -> CheckReport:
    """Energy under the dilation ``rho -> alpha rho(alpha^(1/d) .)``.

    Upper: ``E(scaled) <= E + (1-alpha)(S/2) sum n^2``, asserted when the
    lattice hypothesis ``max_i sum_j (W - W')_ij <= (1-alpha) S`` holds.
    Lower (d = 3): ``E(scaled)/alpha >= E - (omega(0)/2)(1/alpha - 1) sum n``,
    asserted when ``W'/alpha - W`` has a nonnegative transform and is PSD.
    In 1-D the kinetic energy scales as ``alpha^2`` and the lower bound has no
    analogue; it is skipped with a notice.
    """
    alphas = [float(a) for a in alpha_list]
    if any(not (0 < a <= 1) for a in alphas):
        raise InputError("alpha must lie in (0, 1]")
    model.check_fock()
    k_grid = np.linspace(0.0, 12.0, 121) if k_grid is None else np.asarray(k_grid, float)
    W = model.interaction(pot)
    S, w0 = row_sum_bound(W), float(pot(0.0))
    notices, hyp = [], {}
    for a in alphas:
        Wa = scaled_model(model, a).interaction(pot)
        upper_ok = row_sum_bound(W - Wa) <= (1 - a) * S + 1e-14
        if model.dim == 3:
            ft = kernel_difference_transform(pot, a, k_grid)
            lower_ok = ft >= -1e-12 and is_psd(Wa / a - W)
        else:
            ft, lower_ok = math.nan, False
        hyp[a] = dict(upper=upper_ok, lower=lower_ok, ft_min=ft)
        if not upper_ok:
            notices.append(f"alpha={a}: row-sum hypothesis fails, upper bound skipped")
        if model.dim == 3 and not lower_ok:
            notices.append(f"alpha={a}: transform positivity fails, lower bound skipped")
    if model.dim != 3:
        notices.append("lower bound needs d = 3 scaling; skipped")
    energy = _EnergyLog(solver_tol)
    margins = []
    for k, rng in enumerate(_seeds(seed, n_trials)):
        n = rng.uniform(0.0, 0.9, model.n_sites)
        rho = GridDensity.from_occupations(model, n)
        E = energy(model, pot, rho)
        for a in alphas:
            ms = scaled_model(model, a)
            Es = energy(ms, pot, GridDensity.from_occupations(ms, n))
            if hyp[a]["upper"]:
                margins.append((f"upper/{k}/a={a}", E + 0.5 * (1 - a) * S * float(n @ n) - Es))
            if hyp[a]["lower"]:
                margins.append((f"lower/{k}/a={a}",
                                Es / a - E + 0.5 * w0 * (1 / a - 1) * float(n.sum())))
    cfg = dict(n_sites=model.n_sites, dim=model.dim, n_trials=n_trials, alpha=alphas, tol=tol)
    vals = dict(energy.summary(), S=S, omega0=w0,
                hypotheses={str(a): h for a, h in hyp.items()})
    return _report("scaling", margins, tol, seed, cfg, notices, vals)


# --------------------------------------------------------------------------
# kinetic bounds

def check_kinetic_bounds(instances, tol: float = 1e-9, seed: Optional[int] = None) -> CheckReport:
    """Discrete Hoffmann-Ostenhoff on one-body density matrices, plus the LT ratio.

    Parameters
    ----------
    instances : iterable of (LatticeModel, ndarray)
        Models with one-body density matrices ``gamma`` on all their sites.

    Notes
    -----
    ``Tr(K gamma) >= int |grad sqrt(rho)|^2`` is asserted. The ratio
    ``Tr(K gamma) / int rho^(1 + 2/d)`` is reported (minimum over instances).
    """
    margins, notices, lt = [], [], []
    rejected = 0
    for k, (model, gamma) in enumerate(instances):
        g = np.asarray(gamma, dtype=float)
        ev = np.linalg.eigvalsh(0.5 * (g + g.T))
        if ev.min() < -1e-8 or ev.max() > 1 + 1e-8:
            rejected += 1
            notices.append(f"instance {k}: spectrum outside [0, 1], rejected")
            continue
        margins.append((f"ho/{k}", kinetic_hoffmann_ostenhoff_gap(model, g)))
        rho = GridDensity.from_occupations(model, np.clip(np.diag(g), 0.0, None))
        kin = float(np.sum(model.laplacian.multiply(g.T)))
        d = model.dim
        denom = model.cell_volume * float(np.sum(rho.values ** (1 + 2 / d)))
        if denom > 0:
            lt.append(kin / denom)
    vals = dict(rejected=rejected, lt_ratio_min=float(min(lt)) if lt else math.nan,
                lt_ratios=lt)
    return _report("kinetic_bounds", margins, tol, seed, dict(tol=tol), notices, vals)


# --------------------------------------------------------------------------
# localization kernel decay

def check_gs_decay(pot, l_list: Sequence[float] = (4, 8, 16, 32, 64), delta: float = 0.5,
                   n_rotations: int = 256, seed: int = 0,
                   slope_window=(-1.3, -0.7)) -> CheckReport:
    """Decay of the discarded kernel mass ``int omega_tilde`` with the tile scale.

    Asserts a log-log slope inside ``slope_window``, monotone decrease, and
    ``0 <= h <= 1`` for every sampled autocorrelation value.
    """
    ls = np.asarray(sorted(l_list), dtype=float)
    if len(ls) < 2:
        raise InputError("need at least two tile scales")
    vals, errs, margins, notices = [], [], [], []
    for l in ls:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", QuadratureWarning)
            ker, I = gs_kernel(pot, l, delta, n_rotations, seed)
        if any(issubclass(c.category, QuadratureWarning) for c in caught):
            notices.append(f"l={l:g}: rotation variance high; increase n_rotations")
        vals.append(I)
        errs.append(ker.integral_stderr)
        H = geometry.averaged_autocorrelation_samples(ker.radii, l, delta, n_rotations, seed)
        margins.append((f"h>=0/l={l:g}", float(H.min())))
        margins.append((f"h<=1/l={l:g}", float(1.0 - H.max())))
    vals = np.array(vals)
    slope = float(np.polyfit(np.log(ls), np.log(vals), 1)[0])
    lo, hi = slope_window
    margins.append(("slope>=lo", slope - lo))
    margins.append(("slope<=hi", hi - slope))
    for a, b, l in zip(vals[:-1], vals[1:], ls[1:]):
        margins.append((f"decrease/l={l:g}", float(a - b)))
    bound = float(validate_short_range(pot).l1_norm)
    for l, v in zip(ls, vals):
        margins.append((f"<=int omega/l={l:g}", bound - float(v)))
    cfg = dict(l=ls.tolist(), delta=delta, n_rotations=n_rotations)
    return _report("gs_decay", margins, 1e-12, seed, cfg, notices,
                   dict(slope=slope, integrals=vals.tolist(), stderr=errs))


# --------------------------------------------------------------------------
# pointwise inequalities

def theta_margins(theta: float, s, r):
    """``(1/theta)(r^theta - s^theta) r^(1-theta) - (r - s)`` for ``0 <= s <= r``."""
    return (r ** theta - s ** theta) * r ** (1 - theta) / theta - (r - s)


def check_theta_pointwise(theta_list: Sequence[float] = (0.25, 0.5, 0.75, 1.0), n: int = 200,
                          r_max: float = 4.0, tol: float = 1e-12) -> CheckReport:
    """``r - s <= (1/theta)(r^theta - s^theta) r^(1-theta)`` for ``0 <= s <= r``.

    The mirrored form ``rbar - r <= (1/theta)(rbar^theta - r^theta) rbar^(1-theta)``
    is the same inequality with the larger value as reference; both are scanned.
    """
    x = np.linspace(0.0, r_max, n)
    S, R = np.meshgrid(x, x, indexing="ij")
    keep = S <= R
    margins = []
    for th in theta_list:
        if not (0 < th <= 1):
            raise InputError("theta must lie in (0, 1]")
        m1 = theta_margins(th, S[keep], R[keep])
        # mirrored: rho below the maximum rbar
        rb, rr = R[keep], S[keep]
        m2 = (rb ** th - rr ** th) * rb ** (1 - th) / th - (rb - rr)
        margins.append((f"lower/theta={th}", float(m1.min())))
        margins.append((f"upper/theta={th}", float(m2.min())))
    cfg = dict(theta=list(theta_list), n=n, r_max=r_max, tol=tol)
    return _report("theta_pointwise", margins, tol, None, cfg,
                   values=dict(points=int(keep.sum()) * len(theta_list) * 2))


# --------------------------------------------------------------------------
# Morrey-type constant

def _bump_field(rng, n_bumps=4):
    c = rng.uniform(0, 1, (n_bumps, 3))
    a = rng.normal(size=n_bumps)
    w = rng.uniform(0.15, 0.4, n_bumps)

    def f(x):
        d2 = ((x[:, None, :] - c[None]) ** 2).sum(-1)
        return (a * np.exp(-d2 / (2 * w * w))).sum(-1)

    return f


def morrey_ratio(model: LatticeModel, u: np.ndarray, p: float) -> float:
    """``max |u| / (h^d sum |grad u|^p)^(1/p)`` with forward-difference gradients."""
    g = forward_gradients(model, u)
    norm = (model.cell_volume * np.sum(np.sum(g * g, axis=1) ** (p / 2))) ** (1 / p)
    if norm == 0:
        return math.nan
    return float(np.max(np.abs(u)) / norm)


def check_morrey(grids: Sequence[int] = (8, 16), p_list: Sequence[float] = (4.0,),
                 n_trials: int = 100, seed: int = 0, max_change: float = 0.5) -> CheckReport:
    """Empirical ``sup ||u||_inf / ||grad u||_p`` over smooth fields vanishing at a site.

    Fields live on the unit cube sampled with ``n + 1`` nodes per axis; each
    field vanishes at a node shared by all grids. Asserts finiteness and that
    the ratio changes by less than ``max_change`` between successive grids.
    """
    grids = sorted(int(g) for g in grids)
    if any(g % grids[0] for g in grids):
        raise InputError("grids must be multiples of the coarsest one")
    if any(p <= 3 for p in p_list):
        raise InputError("need p > 3 in three dimensions")
    models = [build_lattice(3, g + 1, 1.0 / g) for g in grids]
    margins, sups, skipped = [], {}, 0
    for p in p_list:
        sup = np.zeros(len(grids))
        for k, rng in enumerate(_seeds(seed, n_trials)):
            f = _bump_field(rng)
            anchor = rng.integers(0, grids[0] + 1, 3) / grids[0]
            f0 = f(anchor[None])[0]
            ratios = [morrey_ratio(m, f(m.coords) - f0, p) for m in models]
            if not np.all(np.isfinite(ratios)):
                skipped += 1
                continue
            sup = np.maximum(sup, ratios)
            for a, b, g in zip(ratios[:-1], ratios[1:], grids[1:]):
                margins.append((f"p={p}/{k}/n={g}", max_change - abs(b / a - 1)))
        sups[str(p)] = sup.tolist()
        margins.append((f"p={p}/finite", 1.0 if np.all(np.isfinite(sup)) else -1.0))
    cfg = dict(grids=grids, p=list(p_list), n_trials=n_trials, max_change=max_change)
    return _report("morrey", margins, 0.0, seed, cfg, values=dict(sup=sups), skipped=skipped)


# --------------------------------------------------------------------------
# localization sandwich (1-D interval tiling)

def interval_pieces(model: LatticeModel, l: float, delta: float, tau: float, kind: str):
    """Smeared interval partition on a 1-D lattice, translated by ``tau``.

    ``xi``: ``1_[kl+tau, (k+1)l+tau) * eta``, summing to one pointwise.
    ``chi``: intervals shrunk by ``1 - delta/l`` about their centres with
    amplitude ``(1 - delta/l)^-1``, summing to one after averaging over ``tau``.
    """
    if model.dim != 1:
        raise InputError("the interval tiling lives on 1-D lattices")
    x = model.coords[:, 0]
    reach = delta / 10
    k0 = int(math.floor((x.min() - reach - tau) / l)) - 1
    k1 = int(math.ceil((x.max() + reach - tau) / l)) + 1
    s = 1.0 - delta / l if kind == "chi" else 1.0
    out = []
    for k in range(k0, k1 + 1):
        c = (k + 0.5) * l + tau
        f = geometry.smeared_at(x[:, None], geometry.Interval(c - s * l / 2, c + s * l / 2), delta)
        if np.any(f > 0):
            out.append(f / s)
    return out


def check_localization_sandwich(rho: GridDensity, pot, l: float, delta: float,
                                n_isometries: int = 8, seed: int = 0,
                                solver_tol: float = 1e-9) -> CheckReport:
    """Localization gaps of the exchange energy over sampled translations.

    For each translation ``tau`` reports ``sum_k E(xi_k rho) - E(rho)`` (lower
    localization) and ``E(rho) - sum_k E(chi_k rho)`` (upper localization).
    The existence clause is checked against a fitted envelope
    ``c (int rho/(l delta) + (1 + delta)/l int rho^2)`` with ``c`` set by the
    mean gap: at least one translation must lie below it.
    """
    model = rho.model
    if not (0 < delta <= l / 2):
        raise PreconditionError("need 0 < delta <= l/2")
    energy = _EnergyLog(solver_tol)
    E = energy(model, pot, rho)
    taus = np.random.default_rng(seed).uniform(0.0, l, n_isometries)
    n = rho.occupations
    gaps = {"xi": [], "chi": []}
    for tau in taus:
        for kind in ("xi", "chi"):
            tot = 0.0
            for f in interval_pieces(model, l, delta, tau, kind):
                piece = GridDensity.from_occupations(model, f * n)
                if not piece.representable():
                    raise PreconditionError("localized piece exceeds one particle per site")
                tot += energy(model, pot, piece)
            gaps[kind].append(tot - E if kind == "xi" else E - tot)
    shape = n.sum() / (l * delta) + (1 + delta) / l * float(n @ n)
    margins, vals = [], dict(energy.summary(), E=E, taus=taus.tolist())
    for kind, g in gaps.items():
        g = np.array(g)
        env = max(float(g.mean()), 0.0)
        vals[f"{kind}_gaps"] = g.tolist()
        vals[f"{kind}_envelope_c"] = env / shape if shape > 0 else 0.0
        margins.append((f"{kind}/exists", env - float(g.min())))
    cfg = dict(l=l, delta=delta, n_isometries=n_isometries, n_sites=model.n_sites)
    return _report("localization_sandwich", margins, 1e-12, seed, cfg, values=vals,
                   asserting=False)


# --------------------------------------------------------------------------
# partitions of unity

def check_partitions(l_list=(2, 4, 8), ratios=(0.05, 0.1, 0.2), n_points: int = 1000,
                     seed: int = 0, quad_res: int = 32, chi_points: int = 4,
                     xi_tol: float = 1e-6, chi_tol: float = 1e-3) -> CheckReport:
    """Pointwise ``xi`` partition and translation-averaged ``chi`` partition residuals."""
    rng = np.random.default_rng(seed)
    margins = []
    for l in l_list:
        for r in ratios:
            d = r * l
            pts = rng.uniform(-l, l, (n_points, 3))
            res = geometry.partition_residual("xi", l, d, pts, n_r=4, n_ang=16)
            margins.append((f"xi/l={l}/d={d:g}", xi_tol - res))
            cp = rng.uniform(-l, l, (chi_points, 3))
            res = geometry.partition_residual("chi_averaged", l, d, cp, quad_res=quad_res,
                                              n_r=4, n_ang=16, seed=seed)
            margins.append((f"chi/l={l}/d={d:g}", chi_tol - res))
    cfg = dict(l=list(l_list), ratios=list(ratios), n_points=n_points, quad_res=quad_res)
    return _report("partitions", margins, 0.0, seed, cfg)


# --------------------------------------------------------------------------
# suites

SUITES = {
    "constant-exact": ("intomega", "subadditivity", "scaling", "kinetic_bounds", "theta_pointwise"),
    "reported": ("gs_decay", "morrey", "localization_sandwich"),
}
SUITES["all"] = SUITES["constant-exact"] + SUITES["reported"] + ("partitions",)


def _default_kinetic_corpus(seed):
    from .lattice import RandomSmooth, sample_density
    from .levylieb import kinetic_min

    out = []
    for k, rng in enumerate(_seeds(seed, 6)):
        m = build_lattice(1 + k % 2, (12,) if k % 2 == 0 else (4, 4), 1.0)
        rho = sample_density(RandomSmooth(int(rng.integers(1 << 30)), 1.5, 0.8), m)
        out.append((m, kinetic_min(m, rho)[1]))
    return out


def run_check(name: str, seed: int = 0, quick: bool = False, pot=None) -> CheckReport:
    """Run one named check with its standard desk-scale configuration."""
    from .potential import gaussian

    pot = gaussian() if pot is None else pot
    chain6 = build_lattice(1, 6, 1.0, pot=pot)
    if name == "intomega":
        return check_intomega(chain6, pot, 50 if quick else 500, seed)
    if name == "subadditivity":
        chains = [build_lattice(1, s, 1.0, pot=pot) for s in (6, 7, 8)]
        return check_subadditivity(chains, pot, 6 if quick else 100, seed=seed)
    if name == "scaling":
        cube = build_lattice(3, 2, 1.0, pot=pot)
        return check_scaling(cube, pot, 4 if quick else 50, seed=seed)
    if name == "kinetic_bounds":
        return check_kinetic_bounds(_default_kinetic_corpus(seed), seed=seed)
    if name == "theta_pointwise":
        return check_theta_pointwise()
    if name == "gs_decay":
        return check_gs_decay(pot, n_rotations=64 if quick else 256, seed=seed)
    if name == "morrey":
        return check_morrey(n_trials=10 if quick else 100, seed=seed)
    if name == "localization_sandwich":
        m = build_lattice(1, 15, 1.0, pot=pot)
        x = m.coords[:, 0]
        rho = GridDensity(m, 0.45 * np.sin(np.pi * (x + 0.5) / 15) ** 2)
        return check_localization_sandwich(rho, pot, 5.0, 1.0, 3 if quick else 8, seed)
    if name == "partitions":
        return check_partitions(n_points=50 if quick else 1000, chi_points=1 if quick else 4,
                                seed=seed)
    raise InputError(f"unknown check {name!r}")


def run_suite(suite: str = "constant-exact", seed: int = 0, quick: bool = False, pot=None,
              workers: int = 1):
    """Run a named suite; returns ``(reports, summary)``.

    Reports are ordered as in the suite definition regardless of ``workers``.
    """
    if suite not in SUITES:
        raise InputError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    names = SUITES[suite]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(run_check, n, seed, quick, pot) for n in names]
            reports = [f.result() for f in futs]
    else:
        reports = [run_check(n, seed, quick, pot) for n in names]
    failing = [r.check_id for r in reports if r.asserting and r.verdict != "pass"]
    summary = dict(suite=suite, seed=seed, checks=len(reports), failing=failing,
                   violations=int(sum(r.violations for r in reports if r.asserting)),
                   passed=not failing)
    return reports, summary
