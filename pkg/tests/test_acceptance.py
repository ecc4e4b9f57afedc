"""Acceptance gate: ten end-to-end criteria, each with a pinned tolerance.

Every test prints one ``criterion N ...: PASS/FAIL`` line so a verbose run
doubles as the acceptance report.  Random suites use fixed seeds; the
bifurcation-diagram criteria share one session-scoped sweep.
"""
import math
import time

import numpy as np
import pytest

from platoondyn import (
    IntegrationSettings,
    LeaderProfile,
    ModelExponents,
    PlatoonConfig,
    UncertainBeta,
    VehicleParams,
    equilibrium_coefficients,
    find_crossing,
    harmonic_history,
    hopf_point,
    integrate_neutral,
    integrate_retarded,
    non_oscillation_check,
    period_equivalence_check,
    perturbation_history,
    polish_root,
    robust_stability_bound,
    stability_chart,
    string_gain_sup,
    track_root,
    transversality_slope,
)
from conftest import (
    ONSET_PERIOD,
    reference_platoon,
    reference_sweep_settings,
    scalar_platoon,
)

HALF_PI = 1.5707963267948966


def verdict(num: str, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


def test_criterion_01_tracked_crossing_matches_closed_form():
    rng = np.random.default_rng(101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        beta = float(rng.uniform(0.1, 5.0))
        gamma = float(rng.uniform(0.0, 0.99))
        hp = hopf_point(beta, gamma)
        cr = find_crossing(beta, gamma)
        worst = max(worst,
                    abs(cr.tau - hp.tau_cr) / hp.tau_cr,
                    abs(cr.omega - hp.omega0) / hp.omega0)
    elapsed = time.perf_counter() - t0
    verdict("1", "numeric crossing vs closed form",
            worst <= 1e-8 and elapsed < 10.0,
            f"1000 cases, worst rel err {worst:.3e}, {elapsed:.2f}s")


def test_criterion_02_feedback_free_reduction():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(200):
        beta = float(rng.uniform(0.1, 5.0))
        got = hopf_point(beta, 0.0).tau_cr
        worst = max(worst, abs(got - math.pi / (2.0 * beta)) / (math.pi / (2.0 * beta)))
    identical = True
    for _ in range(20):
        n = int(rng.integers(1, 5))
        vehicles = tuple(
            VehicleParams(alpha=float(rng.uniform(0.1, 1.0)),
                          tau=float(rng.uniform(0.3, 1.0)),
                          b=float(rng.uniform(0.8, 2.0)))
            for _ in range(n))
        config = PlatoonConfig(
            vehicles=vehicles,
            exponents=ModelExponents(m=float(rng.choice([0.0, 1.0, 1.5])),
                                     l=float(rng.choice([0.0, 1.0]))),
            leader=LeaderProfile.settled(float(rng.uniform(0.8, 1.2))),
        )
        settings = IntegrationSettings(h=min(v.tau for v in vehicles) / 12.0,
                                       horizon=10.0)
        hist = perturbation_history(n, int(rng.integers(0, n)), 1e-4)
        a = integrate_retarded(config, settings, hist)
        b = integrate_neutral(config, settings, hist)
        for kind in ("v", "y", "l"):
            for i in range(n):
                if not np.array_equal(a.series(kind, i), b.series(kind, i)):
                    identical = False
    verdict("2", "gamma=0 reduction",
            worst <= 1e-12 and identical,
            f"tau_cr vs pi/(2 beta) worst rel {worst:.2e}; "
            f"20 configs bitwise identical: {identical}")


def test_criterion_03_critical_delay_chart():
    t0 = time.perf_counter()
    grid = np.linspace(1e-6, 1.0 - 1e-6, 200)
    rows = stability_chart(grid)
    elapsed = time.perf_counter() - t0
    products = rows[:, 2]
    decreasing = bool(np.all(np.diff(products) < 0.0))
    limit_gap = abs(hopf_point(1.0, 1e-8).tau_cr - HALF_PI)
    verdict("3", "chart shape and limit",
            decreasing and limit_gap < 1e-6 and elapsed < 1.0,
            f"strictly decreasing: {decreasing}; |product - pi/2| at gamma=1e-8: "
            f"{limit_gap:.2e}; {elapsed:.3f}s")


def test_criterion_04a_quiet_below_onset(reference_sweep_result):
    result, _ = reference_sweep_result
    statuses_ok = all(p.status == "ok" for c in result.curves for p in c.points)
    worst = 0.0
    for curve in result.curves:
        for p in curve.points:
            if p.param_value <= 0.98 + 1e-9:
                worst = max(worst, p.amplitude)
    verdict("4a", "amplitude below onset",
            statuses_ok and worst <= 1e-3,
            f"max amplitude for tau <= 0.98: {worst:.3e} across 3 curves")


def test_criterion_04b_sustained_above_onset(reference_sweep_result):
    result, _ = reference_sweep_result
    ok = True
    for curve in result.curves:
        for p in curve.points:
            if p.param_value >= 1.02 - 1e-9:
                ok = ok and p.sustained
    verdict("4b", "sustained oscillation past onset", ok,
            "every grid point with tau >= 1.02 sustained on all 3 curves")


def test_criterion_04c_amplitude_ordering(reference_sweep_result):
    result, _ = reference_sweep_result
    amp = {}
    for curve in result.curves:
        for p in curve.points:
            if abs(p.param_value - 1.10) < 1e-9:
                amp[curve.gamma] = p.amplitude
    ok = amp[0.0] > amp[0.5] > amp[0.9]
    verdict("4c", "feedback weight damps the cycle", ok,
            f"amplitudes at tau=1.1: {amp[0.0]:.4g} > {amp[0.5]:.4g} > {amp[0.9]:.4g}")


def test_criterion_04d_onset_period(reference_sweep_result):
    result, _ = reference_sweep_result
    details = []
    ok = True
    for curve in result.curves:
        first = next(p for p in curve.points if p.sustained)
        expected = ONSET_PERIOD[curve.gamma]
        rel = abs(first.raw_period - expected) / expected
        ok = ok and rel <= 0.05
        details.append(f"gamma={curve.gamma}: {first.raw_period:.4f} vs "
                       f"{expected:.4f} ({100 * rel:.2f}%)")
    verdict("4d", "onset period vs crossing frequency", ok, "; ".join(details))


def test_criterion_04e_runtime(reference_sweep_result):
    _, elapsed = reference_sweep_result
    verdict("4e", "sweep runtime", elapsed < 300.0,
            f"75-point sweep took {elapsed:.1f}s (< 300s)")


def test_criterion_05_integrator_oracle_and_order():
    config = scalar_platoon(HALF_PI)
    errs = []
    for h in (4e-3, 2e-3, 1e-3):
        settings = IntegrationSettings(h=h, horizon=10.0)
        traj = integrate_neutral(config, settings,
                                 harmonic_history(1, 0, amplitude=1.0, omega=HALF_PI))
        t = traj.times()
        errs.append(float(np.max(np.abs(traj.series("v", 0) - np.cos(HALF_PI * t)))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    verdict("5", "cosine oracle",
            errs[-1] <= 1e-6 and min(orders) >= 3.5,
            f"max err at h=1e-3: {errs[-1]:.2e}; orders under halving: "
            f"{orders[0]:.2f}, {orders[1]:.2f}")


def test_criterion_06_transversality_and_no_reentry():
    rng = np.random.default_rng(606)
    worst = 0.0
    all_positive = True
    no_reentry = True
    for _ in range(100):
        beta = float(rng.uniform(0.1, 5.0))
        gamma = float(rng.uniform(0.0, 0.99))
        hp = hopf_point(beta, gamma)
        slope = transversality_slope(beta, gamma)
        all_positive = all_positive and slope > 0.0
        eps = 1e-6 * hp.tau_cr
        hi = polish_root(beta, gamma, hp.tau_cr + eps, 1j * hp.omega0).lam.real
        lo = polish_root(beta, gamma, hp.tau_cr - eps, 1j * hp.omega0).lam.real
        fd = (hi - lo) / (2.0 * eps)
        worst = max(worst, abs(fd - slope) / slope)
        seed = polish_root(beta, gamma, 1.5 * hp.tau_cr, 1j * hp.omega0)
        branch = track_root(beta, gamma,
                            (hp.tau_cr * (1.0 + 1e-7), 2.0 * hp.tau_cr),
                            seed, step=0.01 * hp.tau_cr)
        if any(r.lam.real <= 0.0 for r in branch):
            no_reentry = False
    verdict("6", "crossing speed",
            worst <= 0.01 and all_positive and no_reentry,
            f"100 cases, worst fd-vs-closed-form rel {worst:.2e}; slope > 0: "
            f"{all_positive}; Re(lam) > 0 on (tau_cr, 2 tau_cr]: {no_reentry}")


def test_criterion_07_sufficient_condition_bounds_the_gain():
    rng = np.random.default_rng(707)
    worst = 0.0
    resonant_seen = False
    for _ in range(500):
        gamma = float(rng.uniform(0.0, 0.95))
        tau = float(rng.uniform(0.1, 2.0))
        beta = float(rng.uniform(0.05, 1.0)) * (1.0 - gamma) ** 2 / (2.0 * tau)
        beta_prev = float(rng.uniform(0.05, 1.0)) * beta
        sup, _, resonant = string_gain_sup(beta_prev, beta, gamma, tau)
        resonant_seen = resonant_seen or resonant
        worst = max(worst, sup)
    config = PlatoonConfig(
        vehicles=tuple(VehicleParams(alpha=a, tau=0.5, gamma=0.2)
                       for a in (0.2, 0.25, 0.3, 0.35, 0.4)),
        exponents=ModelExponents(m=0.0, l=0.0),
        leader=LeaderProfile.ramp(1.0, 1.1, 5.0, 6.0),
    )
    settings = IntegrationSettings(h=0.005, horizon=80.0)
    traj = integrate_neutral(config, settings)
    peaks = [float(np.max(np.abs(traj.series("v", i)))) for i in range(5)]
    monotone = all(peaks[i + 1] <= peaks[i] + 1e-6 for i in range(4))
    verdict("7", "string stability",
            worst <= 1.0 + 1e-9 and not resonant_seen and monotone,
            f"500 sufficient-condition cases, sup gain^2 {worst:.12f}; impulse "
            f"peaks {', '.join(f'{p:.4g}' for p in peaks)} non-increasing: {monotone}")


def test_criterion_08_non_oscillation_dichotomy():
    outcomes = []
    for shift, expect_crossings in ((-0.05, False), (0.3, True)):
        beta = math.exp(-1.0) + shift
        config = scalar_platoon(beta, tau=1.0)
        settings = IntegrationSettings(h=0.01, horizon=60.0, transient_cut=5.0)
        traj = integrate_neutral(config, settings, perturbation_history(1, 0, 0.01))
        t = traj.times()
        v = traj.series("v", 0)[t >= 5.0]
        v = v[np.abs(v) > 1e-12]
        signs = np.sign(v)
        changes = int(np.count_nonzero(signs[1:] != signs[:-1]))
        predicted = non_oscillation_check(beta, 1.0, 0.0).oscillatory
        outcomes.append((changes > 0) == expect_crossings
                        and predicted == expect_crossings)
    verdict("8", "sign-change dichotomy at 1/e",
            all(outcomes),
            "beta tau = 1/e - 0.05: monotone settle; 1/e + 0.3: ringing; "
            "both match the closed-form predicate")


def test_criterion_09_cycle_period_in_both_coordinates(reference_sweep_result):
    result, _ = reference_sweep_result
    settings = reference_sweep_settings()
    checked = 0
    worst = 0.0
    ok = True
    for curve in result.curves:
        for p in curve.points:
            if p.status != "ok" or not p.oscillatory:
                continue
            config = reference_platoon(gamma2=curve.gamma, tau2=p.param_value,
                                       leader_speed=curve.leader_speed)
            traj = integrate_neutral(config, settings,
                                     perturbation_history(4, 1, 5e-4))
            pe = period_equivalence_check(traj, 1)
            if not pe.applicable:
                continue
            checked += 1
            worst = max(worst, abs(pe.ratio - 1.0))
            ok = ok and 0.99 <= pe.ratio <= 1.01
    verdict("9", "auxiliary-coordinate period",
            ok and checked >= 5,
            f"{checked} oscillatory sweep points re-integrated, worst "
            f"|ratio - 1| = {worst:.2e}")


def test_criterion_10_robust_bound_ordering():
    rng = np.random.default_rng(1010)
    ordered = True
    for _ in range(1000):
        beta = float(rng.uniform(0.1, 5.0))
        gamma = float(rng.uniform(0.0, 0.99))
        bound = robust_stability_bound(gamma, UncertainBeta(lower=beta, upper=beta))
        tau_cr = hopf_point(beta, gamma).tau_cr
        if bound < tau_cr * (1.0 - 1e-12):
            ordered = False
    grid = np.linspace(0.0, 0.99, 199)
    bounds = np.array([robust_stability_bound(float(g), UncertainBeta(1.0, 2.0))
                       for g in grid])
    monotone = bool(np.all(np.diff(bounds) < 0.0))
    verdict("10", "robust delay bound",
            ordered and monotone,
            f"bound >= tau_cr on 1000 cases: {ordered}; strictly decreasing "
            f"in gamma: {monotone}")
