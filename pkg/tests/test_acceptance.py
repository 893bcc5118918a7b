"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts, so a failing criterion fails the run.
"""
import json
import math
import time
from pathlib import Path

import numpy as np

from cpwq import cli, config, fdlaplace
from cpwq.elliptic import single_cpw_closed_form
from cpwq.materials import Materials
from cpwq.netsolver import find_pole, s_matrix, sweep_s21
from cpwq.perturb import shift_and_q_matched
from cpwq.resfit import ResonanceModel, evaluate_s21, fit
from cpwq.xsection import CrossSection, extract_matrices, notch_cross_section

from conftest import UM, record

PAPER = Path(__file__).resolve().parent.parent / "configs" / "paper.json"
KAPPAS = (0.005, 0.01, 0.02, 0.05)


def paper_spec(case="a", **override):
    raw = json.loads(PAPER.read_text())
    raw["termination"] = case
    cfg = config.parse(raw)
    spec = cli._network(cfg)
    return spec.replace(**override) if override else spec


def q_consistency(case):
    """Worst closed-form vs pole deviation of 1/Q and the log-log slope."""
    base = paper_spec(case)
    numeric, devs = [], []
    for k in KAPPAS:
        spec = base.replace(kappa=k)
        pole = find_pole(spec)
        inv_q = abs(2 * pole.f_p.imag / pole.f_p.real)
        numeric.append(inv_q)
        devs.append(abs(shift_and_q_matched(spec).inv_Q_e / inv_q - 1))
    slope = np.polyfit(np.log(KAPPAS), np.log(numeric), 1)[0]
    return max(devs), slope


def test_criterion_1_impedances():
    mat = Materials.from_epsilon_eff(6.225)
    ok, parts = True, []
    for (w, s), target in (((16, 8), 48.33), ((7, 4), 50.22)):
        t0 = time.perf_counter()
        pul = extract_matrices(CrossSection.coplanar([w * UM], [s * UM, s * UM]), mat)
        Z = 1 / (pul.c_l * pul.C[0, 0])
        dt = time.perf_counter() - t0
        ok &= abs(Z / target - 1) <= 5e-3 and dt < 1.0
        parts.append(f"{w}/{s} um: {Z:.3f} ohm (target {target}, {dt * 1e3:.0f} ms)")
    assert record(1, ok, "; ".join(parts))


def test_criterion_2_oracle_equivalence():
    mat = Materials.from_epsilon_eff(6.225)
    t0 = time.perf_counter()
    worst = 0.0
    for k in np.linspace(0.05, 0.95, 20):
        w = 10 * UM
        s = w * (1 - k) / (2 * k)
        C = extract_matrices(CrossSection.coplanar([w], [s, s]), mat).C[0, 0]
        worst = max(worst, abs(C / single_cpw_closed_form(w, s, mat)[0] - 1))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 10
    assert record(2, ok, f"max relative deviation {worst:.2e} over 20 k values ({dt:.2f} s)")


def test_criterion_3_lc_identity():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n_total = int(rng.integers(3, 6))  # conductors including the two outer grounds
        inner = n_total - 2
        widths = rng.uniform(1, 30, inner) * UM
        gaps = rng.uniform(1, 30, inner + 1) * UM
        grounds = [bool(g) for g in rng.random(inner) < 0.3]
        if all(grounds):
            grounds[0] = False
        mat = Materials(epsilon_r=float(rng.uniform(1, 15)))
        pul = extract_matrices(CrossSection.coplanar(widths, gaps, grounds=grounds), mat)
        worst = max(worst, pul.lc_residual())
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 60
    assert record(3, ok, f"max |LC c_l^2 - 1| = {worst:.2e} over 50 geometries ({dt:.2f} s)")


def test_criterion_4_pole_perturbation_consistency():
    t0 = time.perf_counter()
    dev, slope = q_consistency("a")
    dt = time.perf_counter() - t0
    ok = dev <= 0.02 and abs(slope - 2) <= 1e-3 and dt < 10
    assert record(
        4, ok, f"case a: max 1/Q deviation {dev:.2%}, slope {slope:.5f} (2 +/- 1e-3), {dt:.2f} s"
    )


def _position_spread(base, kappa, Z2):
    total, l_c = base.total_length, base.coupler.l_c
    qs = [
        find_pole(base.replace(kappa=kappa, Z2=Z2, l_o=l_o, l_s=total - l_c - l_o)).Q_l
        for l_o in np.linspace(0, total - l_c, 9)
    ]
    return np.ptp(qs) / np.mean(qs)


def test_criterion_5_position_independence():
    # the bound concerns the kappa expansion, so the coupler's resonator line
    # is set to Z_r; the as-extracted Z2 adds a kappa-independent step
    t0 = time.perf_counter()
    base = paper_spec("a")
    checks = [(k, _position_spread(base, k, base.Z_r)) for k in (*KAPPAS, base.coupler.kappa)]
    dt = time.perf_counter() - t0
    ok = all(v < 5 * k**2 for k, v in checks) and dt < 10
    detail = ", ".join(f"kappa={k:.4f}: {v / k**2:.2f} kappa^2" for k, v in checks)
    extracted = _position_spread(base, base.coupler.kappa, base.coupler.Z2)
    assert record(
        5, ok,
        f"Z2=Z_r: {detail} (bound 5 kappa^2, {dt:.2f} s); as-extracted Z2: {extracted:.2e}",
    )


def test_criterion_6_case_coverage():
    ok, parts = True, []
    for case in "abc":
        dev, slope = q_consistency(case)
        passed = dev <= 0.02 and abs(slope - 2) <= 1e-3
        spec = paper_spec(case, kappa=0.01)
        quarter = spec.c_l / (4 * spec.total_length)
        for p in (1, 2):
            expected = quarter * ((2 * p - 1) if case == "a" else 2 * p)
            passed &= abs(find_pole(spec, p).f_r / expected - 1) < 0.01
        ok &= passed
        parts.append(f"{case}: dev {dev:.2%} slope {slope:.5f} {'ok' if passed else 'fail'}")
    assert record(6, ok, "; ".join(parts))


def test_criterion_7_fit_round_trip():
    t0 = time.perf_counter()
    truth = ResonanceModel(a=0.98, alpha=0.3, tau=40e-9, phi=0.1, Q_l=1e4, Q_e=2e4, f_r=6e9)
    half = 5 * truth.f_r / truth.Q_l
    f = np.linspace(truth.f_r - half, truth.f_r + half, 401)
    clean = evaluate_s21(truth, f)
    got = fit(f, clean).model
    worst = max(abs(getattr(got, k) / getattr(truth, k) - 1) for k in truth.as_dict())
    z = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        noise = 0.005 * truth.a * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
        res = fit(f, clean + noise)
        z.append((res.model.Q_l - truth.Q_l) / res.stderr["Q_l"])
    z = np.abs(z)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and np.all(z < 3) and dt < 30
    assert record(
        7, ok,
        f"noiseless max rel err {worst:.1e}; noisy max |z| {z.max():.2f} over 100 seeds ({dt:.2f} s)",
    )


def test_criterion_8_end_to_end():
    spec = paper_spec("a", kappa=0.02)
    pole = find_pole(spec)
    half = 5 * pole.f_r / pole.Q_l
    f = np.linspace(pole.f_r - half, pole.f_r + half, 401)
    res = fit(f, sweep_s21(spec, f), conjugate=True)
    dev = abs(res.model.Q_l / pole.Q_l - 1)
    energy = max(abs(abs(S[0, 0]) ** 2 + abs(S[1, 0]) ** 2 - 1) for S in (s_matrix(spec, x) for x in f))
    ok = dev < 0.01 and energy < 1e-6
    assert record(8, ok, f"fitted Q_l deviation {dev:.1e}; max energy error {energy:.1e}")


def test_criterion_9_w3_sweep_and_fd_oracle():
    cfg = config.load(PAPER)
    points = cli.run_sweep(cfg, parallel=1)["points"]
    w3 = [p["value"] for p in points]
    q = [p["Q_l"] for p in points]
    monotone = all(a < b for a, b in zip(q, q[1:]))
    decades = math.log10(q[-1] / q[0])

    mat = Materials.from_epsilon_eff(6.225)
    xs = notch_cross_section(16 * UM, 8 * UM, 4 * UM, 4 * UM, 7 * UM)
    cm = extract_matrices(xs, mat).C
    fd = fdlaplace.solve_capacitance(xs, mat, nx=4096, ny=2048).C
    fd_dev = float(np.max(np.abs(fd - cm) / np.abs(cm)))

    ok = monotone and decades >= 3 and fd_dev < 0.02
    assert record(
        9, ok,
        f"w3 {w3[0]:g}-{w3[-1]:g} um: Q {q[0]:.3g} -> {q[-1]:.3g} ({decades:.2f} decades, "
        f"{'monotone' if monotone else 'not monotone'}); FD 4096x2048 max deviation {fd_dev:.2%}",
    )
