"""Single-resonance notch model for S21 and its least-squares fit.

    S21(f) = a e^{i alpha} e^{2 pi i f tau} [1 - e^{i phi} (Q_l/Q_e) / (1 + 2i Q_l (f/f_r - 1))]

The resonance factor has its pole at ``f_r (1 + i/(2 Q_l))``, i.e. in the
upper half plane.  Traces computed by :mod:`cpwq.netsolver` use the opposite
time convention (poles below the real axis); pass ``conjugate=True`` to
:func:`fit` for those.
"""
import csv
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .errors import Divergence, InputError, InsufficientSpan, NoDip

PARAMS = ("a", "alpha", "tau", "phi", "Q_l", "Q_e", "f_r")
UNITS = {"a": "1", "alpha": "rad", "tau": "s", "phi": "rad", "Q_l": "1", "Q_e": "1", "f_r": "Hz"}


@dataclass(frozen=True)
class ResonanceModel:
    a: float
    alpha: float
    tau: float
    phi: float
    Q_l: float
    Q_e: float
    f_r: float

    def __post_init__(self):
        if not (self.a > 0 and self.Q_l > 0 and self.Q_e > 0 and self.f_r > 0):
            raise InputError("a, Q_l, Q_e and f_r must be positive")

    @property
    def Q_i(self):
        """Internal Q with 1/Q_i = 1/Q_l - cos(phi)/Q_e."""
        return _inverse(1.0 / self.Q_l - math.cos(self.phi) / self.Q_e)

    @property
    def Q_i_uncorrected(self):
        """Internal Q with 1/Q_i = 1/Q_l - 1/Q_e (phi ignored)."""
        return _inverse(1.0 / self.Q_l - 1.0 / self.Q_e)

    def as_dict(self):
        return {k: getattr(self, k) for k in PARAMS}


def _inverse(x):
    return math.inf if x == 0 else 1.0 / x


@dataclass(frozen=True)
class PoleModel:
    """S21(f) ~ A + B/(f - f_p) near the resonance."""

    A: complex
    B: complex
    f_p: complex

    @property
    def Q_l(self):
        if self.f_p.imag == 0:
            return math.inf
        return abs(self.f_p.real / (2.0 * self.f_p.imag))

    def evaluate(self, f):
        return self.A + self.B / (np.asarray(f) - self.f_p)


def evaluate_s21(model, f):
    f = np.asarray(f, dtype=float)
    base = model.a * np.exp(1j * (model.alpha + 2 * np.pi * f * model.tau))
    res = np.exp(1j * model.phi) * (model.Q_l / model.Q_e)
    return base * (1 - res / (1 + 2j * model.Q_l * (f / model.f_r - 1)))


def pole_from_model(model):
    """Pole, residue and background equivalent to ``model`` at f = f_r.

    The background ``A`` is the baseline evaluated at ``f_r``; the delay's
    variation across the line is neglected, so the two forms agree to first
    order in (f - f_r)/f_r.
    """
    f_p = model.f_r * complex(1.0, 0.5 / model.Q_l)
    A = model.a * np.exp(1j * (model.alpha + 2 * np.pi * model.f_r * model.tau))
    B = A * 1j * np.exp(1j * model.phi) * model.f_r / (2.0 * model.Q_e)
    return PoleModel(complex(A), complex(B), f_p)


@dataclass
class FitResult:
    model: ResonanceModel
    covariance: np.ndarray  # order PARAMS
    residual_rms: float
    nfev: int
    conjugated: bool = False
    stderr: dict = field(init=False)

    def __post_init__(self):
        err = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        self.stderr = dict(zip(PARAMS, err.tolist()))


# internal parameters: a, alpha_c, tau, phi, Q_l, Q_e, delta, where
# alpha_c = alpha + 2 pi f_c tau and f_r = f_c (1 + delta)
def _unpack(x, fc):
    a, ac, tau, phi, ql, qe, d = x
    return a, ac, tau, phi, ql, qe, fc * (1 + d)


def _model_internal(x, f, fc):
    a, ac, tau, phi, ql, qe, fr = _unpack(x, fc)
    df = f - fc
    base = a * np.exp(1j * (ac + 2 * np.pi * df * tau))
    u = 2 * ql * (df - fc * x[6]) / fr
    den = 1 + 1j * u
    res = np.exp(1j * phi) * (ql / qe)
    return base, res, u, den, base * (1 - res / den)


def _jacobian_complex(x, f, fc):
    a, ac, tau, phi, ql, qe, fr = _unpack(x, fc)
    base, res, u, den, m = _model_internal(x, f, fc)
    eph = np.exp(1j * phi)
    d_u_dql = u / ql
    d_u_dd = -2 * ql * f * fc / fr**2
    J = np.empty((len(f), 7), dtype=complex)
    J[:, 0] = m / a
    J[:, 1] = 1j * m
    J[:, 2] = 2j * np.pi * (f - fc) * m
    J[:, 3] = -base * 1j * res / den
    J[:, 4] = -base * eph * (1 / qe / den - (ql / qe) * 1j * d_u_dql / den**2)
    J[:, 5] = base * eph * ql / qe**2 / den
    J[:, 6] = base * res * 1j * d_u_dd / den**2
    return J


def _initial(f, s, fc):
    n = len(f)
    edge = max(2, n // 10)
    idx = np.r_[0:edge, n - edge : n]
    phase = np.unwrap(np.angle(s))
    tau = np.polyfit(f[idx] - fc, phase[idx], 1)[0] / (2 * np.pi)
    flat = s * np.exp(-2j * np.pi * (f - fc) * tau)
    a = float(np.mean(np.abs(flat[idx])))
    ac = float(np.angle(np.mean(flat[idx])))
    z = flat / (a * np.exp(1j * ac))
    dev = np.abs(1 - z)
    noise = float(np.std(np.abs(z[idx]))) if n >= 4 else 0.0
    k = int(np.argmin(np.abs(s)))
    if dev[k] < max(5 * noise, 1e-9):
        k = int(np.argmax(dev))
    depth = 1 - z[k]
    if abs(depth) < max(5 * noise, 1e-9):
        raise NoDip("no resolvable resonance in the trace")
    # |1 - z|**2 falls to half its peak at f_r (1 +- 1/(2 Q_l))
    half = dev >= abs(depth) / math.sqrt(2)
    lo = k
    while lo > 0 and half[lo - 1]:
        lo -= 1
    hi = k
    while hi < n - 1 and half[hi + 1]:
        hi += 1
    if lo == 0 or hi == n - 1:
        raise InsufficientSpan("resonance line is wider than the trace")
    width = max(f[hi] - f[lo], f[1] - f[0])
    fr = f[k]
    ql = fr / width
    if f[-1] - f[0] < 3 * width:
        raise InsufficientSpan("trace spans fewer than 3 linewidths")
    qe = ql / abs(depth)
    return np.array([a, ac, tau, np.angle(depth), ql, qe, fr / fc - 1])


def _to_internal(model, fc):
    ac = model.alpha + 2 * np.pi * fc * model.tau
    return np.array(
        [model.a, ac, model.tau, model.phi, model.Q_l, model.Q_e, model.f_r / fc - 1]
    )


def _wrap(angle):
    return float((angle + np.pi) % (2 * np.pi) - np.pi)


def fit(f, s21, init=None, conjugate=False):
    """Fit the notch model to a complex trace.

    Returns a :class:`FitResult`; the covariance is ``s**2 (J^T J)^-1`` with
    ``s**2`` the residual variance per real degree of freedom.
    """
    f = np.asarray(f, dtype=float)
    s = np.asarray(s21, dtype=complex)
    if f.shape != s.shape or f.ndim != 1:
        raise InputError("frequency and S21 arrays must be 1-D and of equal length")
    if len(f) < 7:
        raise InsufficientSpan(f"need at least 7 points, got {len(f)}")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
        raise InputError("trace contains non-finite values")
    order = np.argsort(f, kind="stable")
    f, s = f[order], s[order]
    if conjugate:
        s = np.conj(s)
    fc = 0.5 * (f[0] + f[-1])
    x0 = _to_internal(init, fc) if init is not None else _initial(f, s, fc)

    def resid(x):
        r = _model_internal(x, f, fc)[-1] - s
        return np.concatenate([r.real, r.imag])

    def jac(x):
        J = _jacobian_complex(x, f, fc)
        return np.vstack([J.real, J.imag])

    try:
        sol = least_squares(
            resid, x0, jac=jac, method="lm", x_scale="jac",
            xtol=1e-10, ftol=1e-15, gtol=1e-15, max_nfev=2000,
        )  # fmt: skip
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise Divergence(f"least squares failed: {exc}") from exc
    x = sol.x
    if not sol.success or not np.all(np.isfinite(x)) or x[0] <= 0 or x[4] <= 0 or x[5] <= 0:
        raise Divergence(f"fit did not converge: {sol.message}")

    # sign ambiguity a -> -a is removed by a > 0; keep Q's positive
    tau = x[2]
    model = ResonanceModel(
        a=float(x[0]),
        alpha=_wrap(x[1] - 2 * np.pi * fc * tau),
        tau=float(tau),
        phi=_wrap(x[3]),
        Q_l=float(x[4]),
        Q_e=float(x[5]),
        f_r=float(fc * (1 + x[6])),
    )
    dof = max(1, 2 * len(f) - 7)
    s2 = 2 * sol.cost / dof
    Jr = jac(x)
    # equilibrate columns first: delta and tau are many decades below a
    d = np.linalg.norm(Jr, axis=0)
    d[d == 0] = 1.0
    Js = Jr / d
    try:
        cov_int = np.linalg.inv(Js.T @ Js) / np.outer(d, d) * s2
    except np.linalg.LinAlgError:
        cov_int = np.full((7, 7), np.nan)
    # internal -> external: alpha = alpha_c - 2 pi f_c tau, f_r = f_c (1 + delta)
    T = np.eye(7)
    T[1, 2] = -2 * np.pi * fc
    T[6, 6] = fc
    cov = T @ cov_int @ T.T
    rms = math.sqrt(2 * sol.cost / (2 * len(f)))
    return FitResult(model, cov, rms, int(sol.nfev), conjugate)


# ---------------------------------------------------------------- trace I/O


def _numeric_row(row):
    try:
        [float(v) for v in row]
    except ValueError:
        return False
    return True


def read_trace(path, fmt="reim", header=None):
    """Read ``f_Hz, re, im`` (``fmt="reim"``) or ``f_Hz, |S21|, phase_deg``
    (``fmt="magphase"``) rows; comma or whitespace separated.

    ``header=None`` skips a first line that is not numeric.
    """
    if fmt not in ("reim", "magphase"):
        raise InputError(f"unknown trace format {fmt!r}")
    path = Path(path)
    text = path.read_text()
    dialect = "excel" if "," in text else None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", "!")):
            continue
        cells = next(csv.reader([stripped])) if dialect else stripped.split()
        cells = [c.strip() for c in cells]
        if not rows and _is_header(cells, header):
            header = False
            continue
        if len(cells) != 3 or not _numeric_row(cells):
            raise InputError(f"{path}:{lineno}: expected 3 numeric columns, got {line!r}")
        rows.append([float(c) for c in cells])
        header = False
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows)
    f = data[:, 0]
    if fmt == "reim":
        s = data[:, 1] + 1j * data[:, 2]
    else:
        s = data[:, 1] * np.exp(1j * np.deg2rad(data[:, 2]))
    return f, s


def _is_header(cells, header):
    if header is None:
        return not _numeric_row(cells)
    return bool(header)


def write_trace(path, f, s21):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f_Hz", "re", "im"])
        for fi, si in zip(f, s21):
            w.writerow([repr(float(fi)), repr(float(si.real)), repr(float(si.imag))])


def model_from_dict(d):
    try:
        return ResonanceModel(**{k: float(d[k]) for k in PARAMS})
    except KeyError as exc:
        raise InputError(f"missing model parameter {exc.args[0]}") from None

