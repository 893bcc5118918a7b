"""Leading-order pole shifts from the expansion of the network determinant.

With Delta(f, kappa, Z2) the determinant of the boundary-condition matrix and
``(f_r0, 0, Z_r)`` a zero of it, the pole moves to first non-vanishing order by

    delta_f = -(kappa**2/2 * d2Delta/dkappa2 + (Z2 - Z_r) dDelta/dZ2) / (dDelta/df).

The 1/2 is the Taylor factor of the second-order term; it is what makes the
imaginary part agree with the numerically located pole.  ``delta_f`` is
complex: its real part is the frequency shift and ``-2 Im(delta_f)/f_r0``
is 1/Q_e (poles lie in the lower half plane).

Two independent evaluations of the derivatives are provided: closed-form
expressions for the three standard terminations, valid for arbitrary port and
feedline impedances, and central finite differences of
:func:`cpwq.netsolver.determinant`.  Only ratios to dDelta/df are meaningful,
because the determinant's overall normalisation is arbitrary.
"""
from dataclasses import dataclass
import math

from .errors import CaseUnsupported, DerivativeDegenerate, InputError, NotMatched
from .netsolver import delta, feedline_pole_condition, find_pole

MATCH_TOL = 1e-9
DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class PhaseVariables:
    theta: float
    psi: float
    p: int
    f_r0: float


@dataclass(frozen=True)
class DeterminantDerivatives:
    d_f: complex
    d_Z2: complex
    d_kappa: complex
    d2_kappa: complex
    f0: complex
    method: str

    def ratios(self):
        """(dDelta/dZ2, d2Delta/dkappa2) divided by dDelta/df."""
        return self.d_Z2 / self.d_f, self.d2_kappa / self.d_f


@dataclass(frozen=True)
class PerturbationResult:
    delta_f: float
    inv_Q_e: float
    case: str
    orders: tuple  # expansion parameters that contributed
    f_r0: float

    @property
    def f_r(self):
        return self.f_r0 + self.delta_f

    @property
    def f_p(self):
        return complex(self.f_r0 + self.delta_f, -0.5 * self.inv_Q_e * self.f_r0)

    @property
    def Q_e(self):
        return math.inf if self.inv_Q_e == 0 else 1.0 / self.inv_Q_e


def phase_variables(spec, p=1):
    f0 = spec.zeroth_order_frequency(p)
    k = 2.0 * math.pi * f0 / spec.c_l
    l_c = spec.coupler.l_c
    return PhaseVariables(k * l_c, k * (l_c + 2.0 * spec.l_o), p, f0)


def _case(spec, case):
    case = case or spec.case
    if case not in ("a", "b", "c"):
        raise CaseUnsupported("closed-form derivatives exist only for terminations a, b, c")
    return case


def closed_form_derivatives(spec, p=1, case=None):
    """Closed-form derivatives of Delta at (f_r0, kappa=0, Z2=Z_r).

    The expressions share the feedline factor
    ``F = Z_f (Z_i + Z_o) cos(theta) - i (Z_f**2 + Z_i Z_o) sin(theta)``
    except for the second kappa derivative.  Signs are those that agree with
    finite differences of the assembled determinant.
    """
    case = _case(spec, case)
    pv = phase_variables(spec, p)
    th, ps = pv.theta, pv.psi
    st, ct, sp_, cp_ = math.sin(th), math.cos(th), math.sin(ps), math.cos(ps)
    Zf, Zi, Zo, Zr = spec.Z_f, complex(spec.Z_i), complex(spec.Z_o), spec.Z_r
    c_l, l, sgn = spec.c_l, spec.total_length, (-1) ** p
    F = feedline_pole_condition(spec, th)
    standing = Zf * (Zo - Zi) * sp_ * st
    radiative = 1j * (3 * Zf**2 + Zi * Zo) * st * cp_
    if case == "a":
        d_f = -32 * math.pi / c_l * sgn * Zr**3 * l * F
        d_Z2 = 16 * sgn * Zr**2 * st * cp_ * F
        X = standing - Zf * (Zi + Zo) * (2 * cp_ * ct + 1) + radiative
        d2 = 16 * sgn * Zr**3 * st * X
    elif case == "b":
        d_f = -32j * math.pi / c_l * sgn * Zr**4 * l * F
        d_Z2 = -16j * sgn * Zr**3 * st * cp_ * F
        X = standing - Zf * (Zi + Zo) * (2 * cp_ * ct - 1) + radiative
        d2 = -16j * sgn * Zr**4 * st * X
    else:
        d_f = -32j * math.pi / c_l * sgn * Zr**2 * l * F
        d_Z2 = 16j * sgn * Zr * st * cp_ * F
        X = -standing + Zf * (Zi + Zo) * (2 * cp_ * ct + 1) - radiative
        d2 = -16j * sgn * Zr**2 * st * X
    return DeterminantDerivatives(d_f, d_Z2, 0.0, d2, pv.f_r0, "closed-form")


def _base_frequency(spec, p):
    if spec.case is not None:
        return spec.zeroth_order_frequency(p)
    base = spec.replace(kappa=0.0, Z2=spec.Z_r)
    return find_pole(base, p).f_p


def _values(dets):
    e = max(d.exponent for d in dets)
    return [d.scaled_to(e) for d in dets]


def fd_derivatives(spec, p=1, step_f=1e-6, step_kappa=1e-3, step_Z2=1e-3):
    """Central differences of Delta at (f0, kappa=0, Z2=Z_r), one Richardson step.

    Steps are relative to f0 and Z_r (absolute for kappa).
    """
    f0 = _base_frequency(spec, p)
    base = spec.replace(kappa=0.0, Z2=spec.Z_r)
    hf, hk, hz = step_f * abs(f0), step_kappa, step_Z2 * spec.Z_r

    # every determinant must share one exponent, so evaluate all up front
    dets = {
        "f": [delta(base, f0 + s * hf) for s in (1, -1, 0.5, -0.5)],
        "z": [delta(base.replace(Z2=spec.Z_r + s * hz), f0) for s in (1, -1, 0.5, -0.5)],
        "k": [delta(base.replace(kappa=s * hk), f0) for s in (1, -1, 0.5, -0.5)],
        "0": [delta(base, f0)],
    }
    flat = _values([d for group in dets.values() for d in group])
    vf, vz, vk, (v0,) = flat[0:4], flat[4:8], flat[8:12], flat[12:13]

    def first(v, h):
        return (4 * (v[2] - v[3]) / h - (v[0] - v[1]) / (2 * h)) / 3

    def second(v, h):
        coarse = (v[0] - 2 * v0 + v[1]) / h**2
        fine = (v[2] - 2 * v0 + v[3]) / (h / 2) ** 2
        return (4 * fine - coarse) / 3

    return DeterminantDerivatives(
        first(vf, hf), first(vz, hz), first(vk, hk), second(vk, hk), f0, "finite-difference"
    )


def determinant_derivatives(spec, p=1, case=None, method="closed-form"):
    if method == "closed-form":
        return closed_form_derivatives(spec, p, case)
    if method == "finite-difference":
        return fd_derivatives(spec, p)
    raise InputError(f"unknown method {method!r}")


def _check_degenerate(spec, p):
    pv = phase_variables(spec, p)
    F = feedline_pole_condition(spec, pv.theta)
    Zf, Zi, Zo = spec.Z_f, complex(spec.Z_i), complex(spec.Z_o)
    scale = abs(Zf * (Zi + Zo)) + abs(Zf**2 + Zi * Zo)
    if abs(F) < DEGENERATE_TOL * scale:
        raise DerivativeDegenerate(
            "resonance coincides with a feedline standing-wave pole (dDelta/df = 0)"
        )


def _result(spec, der, case, p):
    kappa = spec.coupler.kappa
    dZ = spec.coupler.Z2 - spec.Z_r
    shift = -(0.5 * kappa**2 * der.d2_kappa + dZ * der.d_Z2) / der.d_f
    f0 = der.f0
    if isinstance(f0, complex):
        # lossy terminations: report relative to the uncoupled pole
        inv_q = -2.0 * (f0 + shift).imag / (f0 + shift).real
        f_r0 = f0.real
    else:
        inv_q = -2.0 * shift.imag / f0
        f_r0 = f0
    orders = tuple(name for name, v in (("kappa^2", kappa), ("Z2-Z_r", dZ)) if v != 0)
    return PerturbationResult(float(shift.real), float(inv_q), case, orders, float(f_r0))


def shift_general(spec, p=1, method=None):
    """Leading-order shift and 1/Q_e for arbitrary ports.

    Standard terminations use the closed-form derivatives unless ``method``
    says otherwise; explicit terminations always use finite differences,
    expanded about the numerically located uncoupled pole.
    """
    case = spec.case
    if method is None:
        method = "closed-form" if case else "finite-difference"
    if case:
        _check_degenerate(spec, p)
    der = determinant_derivatives(spec, p, case, method)
    if der.d_f == 0:
        raise DerivativeDegenerate("dDelta/df vanishes")
    return _result(spec, der, case or "explicit", p)


def shift_and_q_matched(spec, p=1, case=None, z_reference="Z_r"):
    """Closed-form shift and 1/Q_e for Z_i = Z_o = Z_f.

    ``z_reference`` selects the impedance subtracted from Z2 in the first-order
    impedance term; ``"Z1"`` gives the alternative reading for termination c
    (``Z2 - Z1``), kept for comparison.  ``"Z_r"`` is the one consistent with
    the determinant expansion.
    """
    case = _case(spec, case)
    Zf = spec.Z_f
    for name, z in (("Z_i", spec.Z_i), ("Z_o", spec.Z_o)):
        if abs(complex(z) - Zf) > MATCH_TOL * Zf:
            raise NotMatched(f"{name} = {z} differs from Z_f = {Zf}")
    if z_reference not in ("Z_r", "Z1"):
        raise InputError("z_reference must be 'Z_r' or 'Z1'")
    pv = phase_variables(spec, p)
    st, ct, cp_ = math.sin(pv.theta), math.cos(pv.theta), math.cos(pv.psi)
    kappa = spec.coupler.kappa
    ref = spec.coupler.Z1 if z_reference == "Z1" else spec.Z_r
    dZ = spec.coupler.Z2 - ref
    c_l, l = spec.c_l, spec.total_length
    z_term = c_l * dZ * st * cp_ / (2 * math.pi * spec.Z_r * l)
    if case == "a":
        df = -c_l * kappa**2 * st * (2 * cp_ + ct) / (4 * math.pi * l) + z_term
        inv_q = 2 * kappa**2 * st**2 / (math.pi * (2 * p - 1))
    elif case == "b":
        df = c_l * kappa**2 * st * (2 * cp_ - ct) / (4 * math.pi * l) - z_term
        inv_q = kappa**2 * st**2 / (math.pi * p)
    else:
        df = -c_l * kappa**2 * st * (2 * cp_ + ct) / (4 * math.pi * l) + z_term
        inv_q = kappa**2 * st**2 / (math.pi * p)
    orders = tuple(name for name, v in (("kappa^2", kappa), ("Z2-Z_r", dZ)) if v != 0)
    return PerturbationResult(float(df), float(inv_q), case, orders, pv.f_r0)
