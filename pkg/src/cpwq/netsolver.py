"""Boundary-condition matrix of a TL-coupled resonator, its determinant,
complex poles and scattering parameters.

Network
-------
A two-line coupler of length ``l_c`` joins nodes 1 (feedline, z=0), 3
(feedline, z=l_c), 2 (resonator, z=0) and 4 (resonator, z=l_c).  Port ``Z_i``
hangs on node 1 and port ``Z_o`` on node 3.  A resonator section of length
``l_s`` runs from node 2 to node 5 and one of length ``l_o`` from node 4 to
node 6; nodes 5 and 6 end in the terminations ``Z_t1`` and ``Z_t2``.  The
27 unknowns are the six nodal voltages, eleven branch currents and ten wave
amplitudes (four coupler modes, two per section, one outgoing wave per port).

Conventions: time dependence ``exp(-i w t)``; a forward wave picks up the
phasor ``Phi = exp(+i 2 pi f l / c_l)`` over length ``l`` and the backward
wave ``1/Phi``; every branch current is counted as flowing from the node into
the element.  Lossy resonances therefore have ``Im f_p < 0``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ExactSingular, InputError, NoConvergence, OnPole, WrongBasin
from .mtl import CouplerModel

OPEN = math.inf
SHORT = 0.0
TERMINATIONS = {"a": (SHORT, OPEN), "b": (SHORT, SHORT), "c": (OPEN, OPEN)}
# |Im f_p| / |f_p| below this is not resolved by the pole search (Q_l > 5e11)
IMAG_RESOLUTION = 1e-12

UNKNOWNS = (
    "V1", "V2", "V3", "V4", "V5", "V6",
    "I1(1)", "I1(2)", "I2(1)", "I2(2)", "I3(1)", "I3(2)", "I4(1)", "I4(2)",
    "I5(1)", "I5(2)", "I6",
    "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10",
)  # fmt: skip
_U = {name: k for k, name in enumerate(UNKNOWNS)}

# unknowns/equations that only involve the feedline when kappa = 0
FEEDLINE_UNKNOWNS = ("V1", "V3", "I1(1)", "I1(2)", "I3(1)", "I3(2)", "A1", "A3", "A9", "A10")
FEEDLINE_EQUATIONS = (
    "coupler V1", "coupler V3", "coupler I1", "coupler I3",
    "port i V", "port i I", "port o V", "port o I", "KCL 1", "KCL 3",
)  # fmt: skip


@dataclass(frozen=True)
class NetworkSpec:
    """Coupler plus resonator sections, terminations and port impedances.

    Terminations are impedances; ``0`` is a short, ``math.inf`` an open.
    """

    coupler: CouplerModel
    Z_r: float
    l_s: float
    l_o: float
    Z_i: complex
    Z_o: complex
    Z_t1: complex = SHORT
    Z_t2: complex = OPEN

    def __post_init__(self):
        if min(self.l_s, self.l_o, self.coupler.l_c) < 0:
            raise InputError("lengths must be non-negative")
        if self.total_length <= 0:
            raise InputError("total resonator length must be positive")
        if not (complex(self.Z_i).real > 0 and complex(self.Z_o).real > 0):
            raise InputError("port impedances need a positive real part")
        if not self.Z_r > 0:
            raise InputError("Z_r must be positive")

    @classmethod
    def for_case(cls, case, coupler, Z_r, l_s, l_o, Z_i, Z_o):
        try:
            t1, t2 = TERMINATIONS[case]
        except KeyError:
            raise InputError(f"unknown termination case {case!r}") from None
        return cls(coupler, Z_r, l_s, l_o, Z_i, Z_o, t1, t2)

    @property
    def Z_f(self):
        return self.coupler.Z1

    @property
    def c_l(self):
        return self.coupler.c_l

    @property
    def total_length(self):
        return self.coupler.l_c + self.l_s + self.l_o

    @property
    def case(self):
        for name, (t1, t2) in TERMINATIONS.items():
            if self.Z_t1 == t1 and self.Z_t2 == t2:
                return name
        return None

    @property
    def free_spectral_range(self):
        return self.c_l / (2.0 * self.total_length)

    def zeroth_order_frequency(self, p):
        """Uncoupled resonance: (2p-1) c_l/4l for short/open, 2p c_l/4l otherwise.

        Explicit loads count as open when |Z_t| > Z_r and as short otherwise,
        which makes this a seed rather than the exact uncoupled pole.
        """
        if p < 1:
            raise InputError("mode number starts at 1")
        quarter = self.c_l / (4.0 * self.total_length)
        if self._open_like(self.Z_t1) != self._open_like(self.Z_t2):
            return quarter * (2 * p - 1)
        return quarter * 2 * p

    def _open_like(self, z):
        return _is_open(z) or abs(z) > self.Z_r

    def replace(self, **kw):
        coupler_kw = {k: kw.pop(k) for k in ("Z1", "Z2", "kappa", "l_c") if k in kw}
        fields = dict(
            coupler=self.coupler.replace(**coupler_kw) if coupler_kw else self.coupler,
            Z_r=self.Z_r, l_s=self.l_s, l_o=self.l_o, Z_i=self.Z_i, Z_o=self.Z_o,
            Z_t1=self.Z_t1, Z_t2=self.Z_t2,
        )  # fmt: skip
        fields.update(kw)
        return NetworkSpec(**fields)


def _is_open(z):
    return isinstance(z, float) and math.isinf(z)


def _termination_row(z, v_name, i_name):
    """alpha V + beta I = 0 with I flowing into the termination."""
    if _is_open(z):
        return {i_name: 1.0}
    if z == 0:
        return {v_name: 1.0}
    return {v_name: 1.0, i_name: -complex(z)}


@dataclass
class BoundaryMatrix:
    M: np.ndarray
    unknowns: tuple
    equations: tuple
    phasors: dict
    row_scale: np.ndarray = field(repr=False, default=None)
    port_impedances: tuple = (None, None)

    @property
    def order(self):
        return self.M.shape[0]

    def rhs(self, in_port):
        """Inhomogeneity for a unit incoming wave at port 1 (node 1) or 2 (node 3)."""
        spec_z = self.port_impedances[in_port - 1]
        b = np.zeros(self.order, dtype=complex)
        tag = "i" if in_port == 1 else "o"
        b[self.equations.index(f"port {tag} V")] = spec_z
        b[self.equations.index(f"port {tag} I")] = -1.0
        return b * self.row_scale


def _rows(spec, f):
    cp = spec.coupler
    k = 2j * math.pi * f / spec.c_l
    ph_c = np.exp(k * cp.l_c)
    ph_s = np.exp(k * spec.l_s)
    ph_o = np.exp(k * spec.l_o)
    g = cp.gamma
    Z1, Z2 = cp.Z1, cp.Z2
    zm = cp.kappa * math.sqrt(Z1 * Z2)
    Zr = spec.Z_r
    Zi, Zo = complex(spec.Z_i), complex(spec.Z_o)
    rows = [
        # coupler: gamma^-1 V = M (forward + backward)
        ("coupler V1", {"V1": 1 / g, "A1": -Z1, "A2": -zm, "A3": -Z1, "A4": -zm}),
        ("coupler V2", {"V2": 1 / g, "A1": -zm, "A2": -Z2, "A3": -zm, "A4": -Z2}),
        ("coupler V3", {"V3": 1 / g, "A1": -Z1 * ph_c, "A2": -zm * ph_c,
                        "A3": -Z1 / ph_c, "A4": -zm / ph_c}),
        ("coupler V4", {"V4": 1 / g, "A1": -zm * ph_c, "A2": -Z2 * ph_c,
                        "A3": -zm / ph_c, "A4": -Z2 / ph_c}),
        ("coupler I1", {"I1(1)": 1.0, "A1": -1.0, "A3": 1.0}),
        ("coupler I3", {"I3(1)": 1.0, "A1": ph_c, "A3": -1 / ph_c}),
        ("coupler I2", {"I2(1)": 1.0, "A2": -1.0, "A4": 1.0}),
        ("coupler I4", {"I4(1)": 1.0, "A2": ph_c, "A4": -1 / ph_c}),
        # shorted-end section, node 2 -> node 5
        ("section s V2", {"V2": 1.0, "A5": -Zr, "A6": -Zr}),
        ("section s V5", {"V5": 1.0, "A5": -Zr * ph_s, "A6": -Zr / ph_s}),
        ("section s I2", {"I2(2)": 1.0, "A5": -1.0, "A6": 1.0}),
        ("section s I5", {"I5(1)": 1.0, "A5": ph_s, "A6": -1 / ph_s}),
        # open-end section, node 4 -> node 6
        ("section o V4", {"V4": 1.0, "A7": -Zr, "A8": -Zr}),
        ("section o V6", {"V6": 1.0, "A7": -Zr * ph_o, "A8": -Zr / ph_o}),
        ("section o I4", {"I4(2)": 1.0, "A7": -1.0, "A8": 1.0}),
        ("section o I6", {"I6": 1.0, "A7": ph_o, "A8": -1 / ph_o}),
        # ports: outgoing wave amplitude, current flowing into the port line
        ("port i V", {"V1": 1.0, "A9": -Zi}),
        ("port i I", {"I1(2)": 1.0, "A9": -1.0}),
        ("port o V", {"V3": 1.0, "A10": -Zo}),
        ("port o I", {"I3(2)": 1.0, "A10": -1.0}),
        ("KCL 1", {"I1(1)": 1.0, "I1(2)": 1.0}),
        ("KCL 2", {"I2(1)": 1.0, "I2(2)": 1.0}),
        ("KCL 3", {"I3(1)": 1.0, "I3(2)": 1.0}),
        ("KCL 4", {"I4(1)": 1.0, "I4(2)": 1.0}),
        ("KCL 5", {"I5(1)": 1.0, "I5(2)": 1.0}),
        ("termination 1", _termination_row(spec.Z_t1, "V5", "I5(2)")),
        # current into termination 2 is -I6
        ("termination 2", {k2: -v if k2 == "I6" else v
                           for k2, v in _termination_row(spec.Z_t2, "V6", "I6").items()}),
    ]  # fmt: skip
    return rows, {"c": ph_c, "s": ph_s, "o": ph_o}


def _raw(spec, f):
    rows, phasors = _rows(spec, f)
    M = np.zeros((len(rows), len(UNKNOWNS)), dtype=complex)
    for r, (_, entries) in enumerate(rows):
        for name, val in entries.items():
            M[r, _U[name]] += val
    return M, tuple(name for name, _ in rows), phasors


def assemble(spec, f):
    """Scaled boundary-condition matrix at complex frequency ``f``.

    Each row is divided by its largest coefficient magnitude with all phasors
    at unit modulus; the scaling is therefore frequency independent and the
    determinant stays analytic in ``f``.
    """
    if f == 0:
        raise InputError("frequency must be non-zero")
    M, eqs, phasors = _raw(spec, f)
    scale = 1.0 / np.max(np.abs(_raw(spec, 0.0)[0]), axis=1)
    ports = (complex(spec.Z_i), complex(spec.Z_o))
    return BoundaryMatrix(M * scale[:, None], UNKNOWNS, eqs, phasors, scale, ports)


@dataclass(frozen=True)
class Determinant:
    """``mantissa * 2**exponent``; ``0.5 <= |mantissa| < 1`` unless zero."""

    mantissa: complex
    exponent: int

    @property
    def value(self):
        return complex(
            math.ldexp(self.mantissa.real, self.exponent),
            math.ldexp(self.mantissa.imag, self.exponent),
        )

    def log(self):
        return np.log(self.mantissa) + self.exponent * math.log(2.0)

    def scaled_to(self, exponent):
        return complex(
            math.ldexp(self.mantissa.real, self.exponent - exponent),
            math.ldexp(self.mantissa.imag, self.exponent - exponent),
        )


def _det_from_lu(lu, piv):
    d = np.diag(lu)
    if np.any(d == 0):
        raise ExactSingular("zero pivot")
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    mant = -1.0 + 0j if swaps % 2 else 1.0 + 0j
    exp = 0
    for v in d:
        mant *= v
        m, e = math.frexp(abs(mant))
        mant = mant / abs(mant) * m
        exp += e
    return Determinant(complex(mant), exp)


def determinant(bm):
    """LU (partial pivoting) determinant in mantissa-exponent form."""
    M = bm.M if isinstance(bm, BoundaryMatrix) else np.asarray(bm, dtype=complex)
    lu, piv = lu_factor(M, check_finite=True)
    return _det_from_lu(lu, piv)


def delta(spec, f):
    return determinant(assemble(spec, f))


def _newton_step(spec, f):
    h = 1e-7 * abs(f)
    d0 = delta(spec, f)
    dp = delta(spec, f + h)
    dm = delta(spec, f - h)
    e = max(d0.exponent, dp.exponent, dm.exponent)
    deriv = (dp.scaled_to(e) - dm.scaled_to(e)) / (2 * h)
    if deriv == 0:
        raise NoConvergence("vanishing derivative of the determinant")
    return -d0.scaled_to(e) / deriv, abs(d0.scaled_to(e)) / abs(deriv)


@dataclass
class PoleResult:
    f_p: complex
    p: int
    converged: bool
    residual: float  # |Delta / Delta'| at f_p [Hz]
    iterations: int
    seed: float

    @property
    def f_r(self):
        return self.f_p.real

    @property
    def Q_l(self):
        if self.f_p.imag == 0:
            return math.inf
        return abs(self.f_p.real / (2.0 * self.f_p.imag))


def _newton(spec, f0, maxiter=100, tol=1e-12):
    f = complex(f0)
    best = None
    for it in range(1, maxiter + 1):
        try:
            step, _ = _newton_step(spec, f)
        except ExactSingular:
            return f, it, 0.0
        f = f + step
        size = abs(step)
        if size < tol * abs(f):
            _, res = _newton_step(spec, f)
            return f, it, res
        # roundoff floor: accept once steps stop shrinking at ~1e-11 relative
        if best is not None and size >= best and size < 1e-10 * abs(f):
            _, res = _newton_step(spec, f)
            return f, it, res
        best = size if best is None else min(best, size)
    raise NoConvergence(f"Newton did not converge from {f0:.6g} Hz in {maxiter} iterations")


def scan_seed(spec, center, points=2001):
    """Real frequency minimising |Delta| over one free spectral range around ``center``."""
    fsr = spec.free_spectral_range
    fs = np.linspace(center - 0.5 * fsr, center + 0.5 * fsr, points)
    fs = fs[fs > 0]
    logs = [delta(spec, f).log().real for f in fs]
    return float(fs[int(np.argmin(logs))])


def find_pole(spec, p=1, seed=None, scan=True):
    """Complex pole of mode ``p`` by Newton iteration on Delta(f)."""
    if p < 1:
        raise InputError("mode number starts at 1")
    f0 = spec.zeroth_order_frequency(p) if seed is None else seed
    half = 0.5 * spec.free_spectral_range
    attempts = [f0]
    last_err = None
    for k in range(2):
        try:
            f, it, res = _newton(spec, attempts[-1])
        except NoConvergence as exc:
            last_err = exc
        else:
            if abs(f - f0) <= half:
                if abs(f.imag) <= IMAG_RESOLUTION * abs(f):
                    # below what Newton resolves: a lossless pole
                    f = complex(f.real, 0.0)
                return PoleResult(f, p, True, float(res), it, float(f0))
            last_err = WrongBasin(
                f"pole {f:.9g} Hz is more than half a free spectral range from {f0:.9g} Hz",
                f_p=f,
            )
        if not scan or k == 1:
            break
        attempts.append(scan_seed(spec, f0))
    raise last_err


def feedline_pole_condition(spec, theta):
    """Z_f (Z_i + Z_o) cos(theta) - i (Z_f**2 + Z_i Z_o) sin(theta)."""
    Zf, Zi, Zo = spec.Z_f, complex(spec.Z_i), complex(spec.Z_o)
    return Zf * (Zi + Zo) * np.cos(theta) - 1j * (Zf**2 + Zi * Zo) * np.sin(theta)


def scattering(spec, f, in_port=1):
    """Scattering parameters for a unit wave incident on ``in_port`` (1 or 2).

    Returns ``(S_1l, S_2l)``; waves are power-normalised with the real parts
    of the port impedances.
    """
    if not f > 0:
        raise InputError("frequency must be positive")
    if in_port not in (1, 2):
        raise InputError("in_port must be 1 or 2")
    bm = assemble(spec, f)
    lu, piv = lu_factor(bm.M)
    if np.any(np.diag(lu) == 0):
        raise OnPole(f"boundary matrix singular at {f:.9g} Hz")
    a = lu_solve((lu, piv), bm.rhs(in_port))
    zi, zo = complex(spec.Z_i).real, complex(spec.Z_o).real
    out1, out2 = a[_U["A9"]], a[_U["A10"]]
    z_in = zi if in_port == 1 else zo
    return out1 * math.sqrt(zi / z_in), out2 * math.sqrt(zo / z_in)


def s_matrix(spec, f):
    s11, s21 = scattering(spec, f, 1)
    s12, s22 = scattering(spec, f, 2)
    return np.array([[s11, s12], [s21, s22]])


def sweep_s21(spec, freqs):
    return np.array([scattering(spec, f, 1)[1] for f in freqs])
