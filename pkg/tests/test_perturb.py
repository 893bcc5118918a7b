import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpwq.errors import CaseUnsupported, DerivativeDegenerate, InputError, NotMatched
from cpwq.netsolver import NetworkSpec, find_pole
from cpwq.perturb import (
    closed_form_derivatives,
    determinant_derivatives,
    fd_derivatives,
    phase_variables,
    shift_and_q_matched,
    shift_general,
)

from conftest import UM, make_spec

TOTAL = 5000 * UM


def spec_at(case, l_o, l_c=400 * UM, **kw):
    return make_spec(case, l_c=l_c, l_o=l_o, l_s=TOTAL - l_c - l_o, **kw)


def explicit(t1, t2, **kw):
    b = make_spec("a", **kw)
    return NetworkSpec(b.coupler, b.Z_r, b.l_s, b.l_o, b.Z_i, b.Z_o, t1, t2)


# -- phase variables ---------------------------------------------------------

def test_paper_phase_variables():
    pv = phase_variables(make_spec("a"), 1)
    assert pv.f_r0 == pytest.approx(6.01e9, rel=2e-3)
    assert pv.theta == pytest.approx(2 * math.pi * 0.02, rel=1e-12)
    assert pv.psi == pytest.approx(2 * math.pi * 0.02 * (400 + 2000) / 400, rel=1e-12)


def test_psi_equals_theta_without_open_section():
    pv = phase_variables(make_spec("b", l_o=0.0), 2)
    assert pv.psi == pv.theta


def test_no_coupler_no_shift():
    spec = make_spec("a", l_c=0.0, kappa=0.1, Z2=55.0)
    for res in (shift_and_q_matched(spec), shift_general(spec)):
        assert res.delta_f == 0 and res.inv_Q_e == 0


@pytest.mark.parametrize("case", "abc")
def test_decoupled_unshifted(case):
    spec = make_spec(case, kappa=0.0)
    res = shift_and_q_matched(spec)
    assert res.delta_f == 0 and res.inv_Q_e == 0 and res.Q_e == math.inf
    assert res.orders == ()


def test_quarter_wave_coupler_maximises_q_inverse():
    kappa = 0.03
    spec = make_spec("a", kappa=kappa, l_c=TOTAL, l_s=0.0, l_o=0.0)
    assert phase_variables(spec).theta == pytest.approx(math.pi / 2, rel=1e-14)
    assert shift_and_q_matched(spec).inv_Q_e == pytest.approx(2 * kappa**2 / math.pi, rel=1e-14)
    for l_c in (1000 * UM, 3000 * UM):
        other = make_spec("a", kappa=kappa, l_c=l_c, l_s=TOTAL - l_c, l_o=0.0)
        assert shift_and_q_matched(other).inv_Q_e < 2 * kappa**2 / math.pi


# -- derivatives -------------------------------------------------------------

PORTS = [(None, None), (40.0, 60.0), (30.0 + 5j, 75.0), (90.0, 25.0)]


@pytest.mark.parametrize("case", "abc")
@pytest.mark.parametrize("ports", PORTS)
@pytest.mark.parametrize("l_o", [0.0, 1000 * UM, 2500 * UM])
def test_closed_form_matches_finite_differences(case, ports, l_o):
    spec = spec_at(case, l_o, Z_i=ports[0], Z_o=ports[1], Z1=45.0, Z2=52.0, Z_r=50.19)
    cf = closed_form_derivatives(spec)
    fd = fd_derivatives(spec)
    for a, b in zip(cf.ratios(), fd.ratios()):
        assert abs(a - b) <= 1e-4 * abs(b)


@pytest.mark.parametrize("case", "abc")
def test_first_kappa_derivative_vanishes(case):
    der = fd_derivatives(make_spec(case, Z_i=40.0, Z_o=60.0))
    assert abs(der.d_kappa) < 1e-6 * abs(der.d2_kappa)
    assert closed_form_derivatives(make_spec(case)).d_kappa == 0


def test_case_b_structure_relative_to_a():
    # same feedline factor; the kappa**2 term flips the sign of its constant
    a = closed_form_derivatives(make_spec("a"), case="a")
    b = closed_form_derivatives(make_spec("a"), case="b")
    Zr = make_spec("a").Z_r
    assert b.d_f == pytest.approx(1j * Zr * a.d_f, rel=1e-14)
    assert b.d_Z2 == pytest.approx(-1j * Zr * a.d_Z2, rel=1e-14)
    fd_b = fd_derivatives(make_spec("b"))
    closed_b = closed_form_derivatives(make_spec("b"))
    assert closed_b.ratios()[1] == pytest.approx(fd_b.ratios()[1], rel=1e-4)


def test_fd_step_halving_is_stable():
    spec = make_spec("a", Z_i=40.0, Z_o=60.0)
    coarse = fd_derivatives(spec).ratios()
    fine = fd_derivatives(spec, step_f=5e-7, step_kappa=5e-4, step_Z2=5e-4).ratios()
    for a, b in zip(coarse, fine):
        assert abs(a - b) <= 1e-6 * abs(b)


def test_unknown_method():
    with pytest.raises(InputError):
        determinant_derivatives(make_spec("a"), method="symbolic")


def test_closed_form_needs_standard_case():
    with pytest.raises(CaseUnsupported):
        closed_form_derivatives(explicit(10.0, 1e3))
    with pytest.raises(CaseUnsupported):
        shift_and_q_matched(explicit(10.0, 1e3))


# -- shifts ------------------------------------------------------------------

@pytest.mark.parametrize("case", "abc")
@settings(max_examples=10, deadline=None)
@given(kappa=st.floats(0.0, 0.1), dz=st.floats(-0.1, 0.1), l_o=st.floats(0.0, 4000.0))
def test_general_reduces_to_matched(case, kappa, dz, l_o):
    spec = spec_at(case, l_o * UM, kappa=kappa, Z2=50.19 * (1 + dz))
    m = shift_and_q_matched(spec)
    g = shift_general(spec)
    scale = abs(m.delta_f) + abs(m.inv_Q_e) * m.f_r0 + 1e-300
    assert abs(g.delta_f - m.delta_f) <= 1e-6 * scale
    assert abs(g.inv_Q_e - m.inv_Q_e) * m.f_r0 <= 1e-6 * scale


@pytest.mark.parametrize("case", "abc")
@pytest.mark.parametrize("kappa", [0.01, 0.02, 0.05])
def test_q_matches_numeric_pole(case, kappa):
    spec = make_spec(case, kappa=kappa)
    pole = find_pole(spec)
    inv_q = abs(2 * pole.f_p.imag / pole.f_p.real)
    assert shift_and_q_matched(spec).inv_Q_e == pytest.approx(inv_q, rel=0.02)


@pytest.mark.parametrize("case", "abc")
@pytest.mark.parametrize("kappa", [0.02, 0.05])
def test_kappa_shift_matches_numeric_pole(case, kappa):
    spec = make_spec(case, kappa=kappa, Z2=50.19, Z_r=50.19)
    numeric = find_pole(spec).f_r - spec.zeroth_order_frequency(1)
    assert shift_general(spec).delta_f == pytest.approx(numeric, rel=0.05)


@pytest.mark.parametrize("case", "abc")
def test_impedance_shift_error_is_second_order(case):
    errs = []
    for d in (0.02, 0.01, 0.005):
        spec = spec_at(case, 0.0, kappa=0.0, Z2=50.19 * (1 + d))
        numeric = find_pole(spec).f_r - spec.zeroth_order_frequency(1)
        errs.append(abs(numeric - shift_general(spec).delta_f))
    for coarse, fine in zip(errs, errs[1:]):
        assert fine / coarse == pytest.approx(0.25, abs=0.02)


@pytest.mark.parametrize("case", "abc")
def test_case_c_reference_impedance_reading(case):
    # kappa small so the impedance term dominates the shift
    spec = spec_at(case, 0.0, kappa=1e-3, Z2=50.19 * 1.02)
    numeric = find_pole(spec).f_r - spec.zeroth_order_frequency(1)
    z_r = shift_and_q_matched(spec).delta_f
    z_1 = shift_and_q_matched(spec, z_reference="Z1").delta_f
    assert z_r == pytest.approx(numeric, rel=0.03)
    assert abs(z_1 - numeric) > 0.5 * abs(numeric)


def test_reference_reading_validated():
    with pytest.raises(InputError):
        shift_and_q_matched(make_spec("c"), z_reference="Z2")


def test_not_matched():
    with pytest.raises(NotMatched):
        shift_and_q_matched(make_spec("a", Z_i=50.0))


def test_matched_q_independent_of_open_section():
    kappa = 0.05
    for case in "abc":
        qs = [find_pole(spec_at(case, l_o * UM, kappa=kappa)).Q_l for l_o in np.linspace(0, 4600, 7)]
        assert (max(qs) - min(qs)) / np.mean(qs) < 5 * kappa**2
        closed = [shift_and_q_matched(spec_at(case, l_o * UM, kappa=kappa)).Q_e
                  for l_o in np.linspace(0, 4600, 7)]
        assert max(closed) == pytest.approx(min(closed), rel=1e-12)


def test_mismatch_makes_q_depend_on_position():
    los = np.linspace(0, 4600, 7) * UM
    specs = [spec_at("a", l_o, kappa=0.02, Z_i=30.0, Z_o=70.0) for l_o in los]
    numeric = np.array([find_pole(s).Q_l for s in specs])
    closed = np.array([shift_general(s).Q_e for s in specs])
    assert np.ptp(numeric) / np.mean(numeric) > 0.05
    assert np.array_equal(np.sign(np.diff(closed)), np.sign(np.diff(numeric)))
    assert np.allclose(closed, numeric, rtol=5e-3)


@pytest.mark.parametrize("loads", [(5.0, 2e3), (1e-3, 1e6), (20.0, 20.0), (3e3, 4e3)])
def test_explicit_terminations_use_finite_differences(loads):
    spec = explicit(*loads, kappa=0.02)
    res = shift_general(spec)
    assert res.case == "explicit"
    pole = find_pole(spec)
    assert res.f_r == pytest.approx(pole.f_r, rel=1e-6)
    assert res.Q_e == pytest.approx(pole.Q_l, rel=1e-3)


def test_degenerate_feedline_pole():
    # shorted ports with a half-wave coupler put the seed on a feedline standing wave
    spec = make_spec("b", Z_i=1e-12, Z_o=1e-12, l_c=TOTAL, l_s=0.0, l_o=0.0)
    assert phase_variables(spec).theta == pytest.approx(math.pi, rel=1e-14)
    with pytest.raises(DerivativeDegenerate):
        shift_general(spec)


@pytest.mark.parametrize("case", "abc")
def test_numeric_q_scales_as_kappa_squared(case):
    kappas = np.array([1e-3, 2e-3, 5e-3, 1e-2])
    inv_q = []
    for k in kappas:
        pole = find_pole(make_spec(case, kappa=k))
        inv_q.append(abs(2 * pole.f_p.imag / pole.f_p.real))
    slope = np.polyfit(np.log(kappas), np.log(inv_q), 1)[0]
    assert slope == pytest.approx(2.0, abs=1e-3)
