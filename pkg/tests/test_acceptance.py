"""Acceptance criteria, one test each, at the stated tolerances and time budgets.

Each test prints a single ``criterion N: PASS|FAIL`` line with its key numbers.
"""
import math
import time
from functools import lru_cache

import numpy as np

from ldalab import lda, verify
from ldalab.lattice import RandomSmooth, build_lattice, sample_density
from ldalab.levylieb import kinetic_min, levy_lieb
from ldalab.potential import gaussian, validate_short_range


def _line(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@lru_cache(maxsize=None)
def _timed_check(name):
    t0 = time.time()
    rep = verify.run_check(name, seed=0)
    return rep, time.time() - t0


def test_criterion_01_kernel_axioms(capsys):
    t0 = time.time()
    rep = validate_short_range(gaussian(), tol=1e-6)
    dt = time.time() - t0
    errs = [abs(rep.l1_norm / math.pi ** 1.5 - 1), abs(rep.first_moment / (2 * math.pi) - 1),
            abs(rep.l1_norm_hat / (8 * math.pi ** 3) - 1)]
    ok = rep.passed and max(errs) <= 1e-6 and dt < 1.0
    _line(capsys, 1, ok, f"max rel err {max(errs):.2e}, {dt:.2f} s")
    assert ok


def test_criterion_02_partitions(capsys):
    t0 = time.time()
    rep = verify.check_partitions(l_list=(2, 4, 8), ratios=(0.05, 0.1, 0.2), n_points=1000,
                                  seed=0, quad_res=32)
    dt = time.time() - t0
    xi = max(1e-6 - m for lab, m in rep.margins if lab.startswith("xi"))
    chi = max(1e-3 - m for lab, m in rep.margins if lab.startswith("chi"))
    ok = rep.verdict == "pass" and dt < 120
    _line(capsys, 2, ok, f"xi residual {xi:.2e}, averaged chi residual {chi:.2e}, {dt:.0f} s")
    assert ok


def test_criterion_03_intomega(capsys):
    rep, dt = _timed_check("intomega")
    ok = (rep.verdict == "pass" and rep.violations == 0 and rep.config["n_trials"] == 500
          and rep.config["n_sites"] == 6 and rep.config["tol"] == 1e-9 and dt < 300)
    _line(capsys, 3, ok, f"{rep.instances} margins, worst {rep.worst_margin:.3g}, {dt:.0f} s")
    assert ok


def test_criterion_04_subadditivity(capsys):
    rep, dt = _timed_check("subadditivity")
    pairs = rep.config["n_trials"] - rep.values.get("skipped", 0)
    ok = (rep.verdict == "pass" and rep.violations == 0 and pairs == 100
          and rep.config["eps"] == [0.25, 0.5, 0.75] and rep.config["tol"] == 1e-9 and dt < 900)
    _line(capsys, 4, ok, f"{pairs} pairs x 3 eps, worst {rep.worst_margin:.3g}, {dt:.0f} s")
    assert ok


def test_criterion_05_scaling(capsys):
    rep, dt = _timed_check("scaling")
    hyp = rep.values["hypotheses"]
    pre = all(h["upper"] and h["lower"] and h["ft_min"] >= 0 for h in hyp.values())
    ok = (pre and rep.verdict == "pass" and rep.violations == 0
          and rep.instances == 50 * 3 * 2 and rep.config["tol"] == 1e-8 and dt < 900)
    _line(capsys, 5, ok, f"hypotheses verified {pre}, {rep.instances} margins, "
                         f"worst {rep.worst_margin:.3g}, {dt:.0f} s")
    assert ok


def test_criterion_06_duality(capsys):
    gaps = [_timed_check(n)[0].values for n in ("subadditivity", "scaling")]
    suite_gap = max(v["max_gap"] for v in gaps)
    unconverged = sum(v["unconverged"] for v in gaps)
    zero = gaussian(a=0.0)
    g = gaussian()
    worst_eq, worst_ge, worst_gap = 0.0, math.inf, 0.0
    for k in range(20):
        m = build_lattice(1, 8) if k % 2 == 0 else build_lattice(3, 2)
        rho = sample_density(RandomSmooth(k, 1.5, 0.9), m)
        T, _ = kinetic_min(m, rho, tol=1e-9)
        b0, c0, _ = levy_lieb(m, zero, rho)
        b, c, _ = levy_lieb(m, g, rho)
        worst_eq = max(worst_eq, abs(b0.f_ll - T))
        worst_ge = min(worst_ge, b.f_ll - T)
        worst_gap = max(worst_gap, abs(c0.gap), abs(c.gap))
        unconverged += (not c0.converged) + (not c.converged)
    ok = (suite_gap <= 1e-6 and worst_gap <= 1e-6 and unconverged == 0
          and worst_eq <= 1e-7 and worst_ge >= -1e-9)
    _line(capsys, 6, ok, f"max gap {max(suite_gap, worst_gap):.1e}, "
                         f"|F_LL(0)-T| {worst_eq:.1e}, min F_LL-T {worst_ge:.3g}")
    assert ok


def test_criterion_07_free_gas(capsys):
    t0 = time.time()
    sea3 = lda.torus_fermi_sea(3, 32, 0.5, 0.05)
    sea3_h1 = lda.torus_fermi_sea(3, 32, 1.0, 0.05)
    sea1 = lda.torus_fermi_sea(1, 4096, 1 / 64, 0.05 * 64)
    dt = time.time() - t0
    r3 = sea3.lt_ratio / lda.c_LT(3)
    r1 = sea1.lt_ratio / lda.c_LT(1)
    ok = abs(r3 - 1) <= 0.03 and abs(r1 - 1) <= 0.01 and dt < 60
    _line(capsys, 7, ok, f"3-D h=0.5 ratio {r3:.4f} (h=1: {sea3_h1.lt_ratio / lda.c_LT(3):.4f}), "
                         f"1-D ratio {r1:.5f}, {dt:.1f} s")
    assert ok


def test_criterion_08_thermodynamic_limit(capsys):
    t0 = time.time()
    rho0 = 0.05
    samples = [lda.e_delta(rho0, l, 4.0, dim=3) for l in (12.0, 16.0, 20.0, 24.0)]
    est = lda.extrapolate_elda(samples, threshold=math.inf)
    lattice_gas = lda.lattice_free_gas_elda(rho0, 3)
    continuum = lda.free_gas_elda(rho0, 3)
    r_lat = est.e_inf / lattice_gas
    pot = gaussian(a=0.05, b=1.0)
    one_d = [lda.e_delta(0.5, l, l / 4, dim=1, pot=pot) for l in (6.0, 8.0, 10.0, 12.0)]
    vals = [s.value for s in one_d]
    gaps = [abs(b - a) / abs(b) for a, b in zip(vals[:-1], vals[1:])]
    dt = time.time() - t0
    conv = all(s.meta["converged"] for s in samples + one_d)
    ok = conv and abs(r_lat - 1) <= 0.03 and gaps[-1] <= 0.10 and dt < 1800
    _line(capsys, 8, ok, f"3-D e_inf / lattice free gas {r_lat:.4f} "
                         f"(/ continuum {est.e_inf / continuum:.4f}); "
                         f"1-D gaps {', '.join(f'{g:.3f}' for g in gaps)}; {dt:.0f} s")
    assert ok


def test_criterion_09_gs_decay(capsys):
    t0 = time.time()
    rep = verify.check_gs_decay(gaussian(), l_list=(4, 8, 16, 32, 64), delta=0.5,
                                n_rotations=256, seed=0)
    dt = time.time() - t0
    slope = rep.values["slope"]
    hviol = sum(1 for lab, m in rep.margins if lab.startswith("h") and m < 0)
    ok = -1.3 <= slope <= -0.7 and hviol == 0 and dt < 600
    _line(capsys, 9, ok, f"slope {slope:.3f}, h-bound violations {hviol}, {dt:.1f} s")
    assert ok


def test_criterion_10_residual_trend(capsys):
    t0 = time.time()
    pot = gaussian(a=0.05, b=1.0)
    f = lda.lattice_elda_1d(pot)
    norm, inst, gaps = [], [], []
    for N in (1, 2, 4, 8):
        rho = lda.slowly_varying_chain(N, 0.6, pot=pot)
        b, gamma = lda.theorem2_residual(rho.model, pot, rho, 0.5, 4.0, 0.5, f, return_rdm=True)
        norm.append(b.normalized)
        gaps.append(abs(b.gap))
        inst.append((rho.model, gamma))
    ho = verify.check_kinetic_bounds(inst)
    dt = time.time() - t0
    dec = bool(np.all(np.diff(norm) < 0))
    ok = dec and ho.violations == 0 and ho.instances == 4 and max(gaps) <= 1e-6 and dt < 1800
    _line(capsys, 10, ok, f"lhs/mass {', '.join(f'{x:.4g}' for x in norm)}; "
                          f"HO violations {ho.violations}; {dt:.1f} s")
    assert ok


def test_criterion_11_theta_pointwise(capsys):
    t0 = time.time()
    rep = verify.check_theta_pointwise(theta_list=(0.25, 0.5, 0.75, 1.0), n=200, tol=1e-12)
    dt = time.time() - t0
    ok = rep.verdict == "pass" and rep.violations == 0 and dt < 10
    _line(capsys, 11, ok, f"{rep.values['points']} points, worst {rep.worst_margin:.2e}, {dt:.2f} s")
    assert ok
