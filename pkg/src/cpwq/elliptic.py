"""Complete elliptic integral of the first kind and the classical two-conductor
closed forms built on it (single CPW, symmetric coplanar strips).

These serve as independent oracles for the hyperelliptic mapping in
:mod:`cpwq.xsection`.
"""
import math

from scipy.constants import epsilon_0

from .errors import InputError
from .materials import Materials


def agm(a, b, tol=1e-15, maxiter=60):
    """Arithmetic-geometric mean of two non-negative numbers."""
    if a < 0 or b < 0:
        raise InputError("agm requires non-negative arguments")
    for _ in range(maxiter):
        if abs(a - b) <= tol * max(a, b):
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def ellipk(k):
    """K(k) for modulus ``k`` (not parameter m = k**2), 0 <= k < 1."""
    if not 0.0 <= k < 1.0:
        raise InputError(f"modulus must lie in [0, 1), got {k}")
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    return math.pi / (2.0 * agm(1.0, kp))


def ellipk_complement(k):
    """K(k') for k' = sqrt(1 - k**2), without forming k' (exact for tiny k)."""
    if not 0.0 < k <= 1.0:
        raise InputError(f"modulus must lie in (0, 1], got {k}")
    return math.pi / (2.0 * agm(1.0, k))


def k_ratio(k):
    """K(k)/K(k') with k' the complementary modulus."""
    return ellipk(k) / ellipk_complement(k)


def single_cpw_closed_form(w, s, mat=None):
    """Capacitance per length [F/m] and impedance [Ohm] of a CPW with strip
    width ``w`` and gaps ``s`` to semi-infinite grounds.

    C = 4 eps0 eps_eff K(k)/K(k'), k = w/(w+2s); Z = 1/(c_l C).
    """
    if w <= 0 or s <= 0:
        raise InputError("w and s must be positive")
    mat = mat or Materials()
    k = w / (w + 2.0 * s)
    C = 4.0 * epsilon_0 * mat.epsilon_eff * k_ratio(k)
    return C, 1.0 / (mat.c_l * C)


def coplanar_strips_capacitance(a, b, mat=None):
    """Capacitance per length between strips (-b, -a) and (a, b) on the interface.

    C = eps0 eps_eff K(k')/K(k), k = a/b.
    """
    if not 0 < a < b:
        raise InputError("need 0 < a < b")
    mat = mat or Materials()
    return epsilon_0 * mat.epsilon_eff / k_ratio(a / b)
