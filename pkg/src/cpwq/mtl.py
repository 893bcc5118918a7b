"""Multiconductor transmission-line modes and the two-line coupler model.

For lines in an effectively homogeneous medium (L C = 1/c_l**2) the mode
problem  A b = lambda b,  A = [[0, L], [C, 0]],  has the closed-form
diagonalisation  A = P D P^-1  with

    P = [[L, L], [1/c_l, -1/c_l]],   D = diag(+1/c_l, ..., -1/c_l, ...).

Coupler parameterisation
------------------------
A two-line coupler is described by (Z1, Z2, kappa, c_l) with

    c_l L = gamma [[Z1, kappa sqrt(Z1 Z2)], [kappa sqrt(Z1 Z2), Z2]],
    gamma = sqrt(1 - kappa**2),

and C = (c_l**2 L)^-1, so that a forward wave with current amplitudes ``a``
carries voltages ``V = gamma M a`` (M the bracketed matrix).  Index 1 is the
feedline, index 2 the resonator.  ``kappa = -C12/sqrt(C11 C22)`` (positive for
coupled coplanar lines, whose mutual capacitance is negative).
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import IdentityViolated, InputError, KappaOutOfRange, SingularC
from .xsection import PULMatrices

IDENTITY_TOL = 1e-8


@dataclass
class ModeDecomposition:
    eigenvalues: np.ndarray
    P: np.ndarray
    D: np.ndarray
    A: np.ndarray

    def residual(self):
        """||A P - P D|| / (||A|| ||P||)."""
        r = self.A @ self.P - self.P @ self.D
        return float(np.linalg.norm(r) / (np.linalg.norm(self.A) * np.linalg.norm(self.P)))


@dataclass
class ImpedanceMatrix:
    Z: np.ndarray
    mode_impedances: np.ndarray
    mode_vectors: np.ndarray


@dataclass(frozen=True)
class CouplerModel:
    Z1: float
    Z2: float
    kappa: float
    l_c: float
    c_l: float

    def __post_init__(self):
        if not abs(self.kappa) < 1.0:
            raise KappaOutOfRange(f"|kappa| must be < 1, got {self.kappa}")
        if not (self.Z1 > 0 and self.Z2 > 0):
            raise InputError("Z1 and Z2 must be positive")
        if self.l_c < 0:
            raise InputError("coupler length must be non-negative")

    @property
    def gamma(self):
        return math.sqrt(1.0 - self.kappa**2)

    @property
    def Z_f(self):
        """Feedline impedance (conductor 1)."""
        return self.Z1

    def impedance_block(self):
        """gamma * [[Z1, k sqrt(Z1 Z2)], [k sqrt(Z1 Z2), Z2]] = c_l L."""
        zm = self.kappa * math.sqrt(self.Z1 * self.Z2)
        return self.gamma * np.array([[self.Z1, zm], [zm, self.Z2]])

    def matrices(self):
        L = self.impedance_block() / self.c_l
        C = np.linalg.inv(L) / self.c_l**2
        return PULMatrices(0.5 * (C + C.T), L, self.c_l)

    def replace(self, **kw):
        fields = dict(Z1=self.Z1, Z2=self.Z2, kappa=self.kappa, l_c=self.l_c, c_l=self.c_l)
        fields.update(kw)
        return CouplerModel(**fields)


def _check_identity(pul):
    if pul.lc_residual() > IDENTITY_TOL:
        raise IdentityViolated(
            f"L C c_l^2 deviates from identity by {pul.lc_residual():.2e}"
        )


def mode_decomposition(pul):
    _check_identity(pul)
    n = pul.size
    L = np.asarray(pul.L, dtype=float)
    C = np.asarray(pul.C, dtype=float)
    I = np.eye(n)
    Z0 = np.zeros((n, n))
    A = np.block([[Z0, L], [C, Z0]])
    P = np.block([[L, L], [I / pul.c_l, -I / pul.c_l]])
    lam = np.concatenate([np.full(n, 1.0 / pul.c_l), np.full(n, -1.0 / pul.c_l)])
    return ModeDecomposition(lam, P, np.diag(lam), A)


def characteristic_impedance(pul):
    """Characteristic impedance matrix ``c_l L`` (= C^-1/c_l) and its modes.

    ``c_l L`` is the symmetric matrix relating forward-wave voltages to
    currents; it is the principal square root of ``L C^-1``.
    """
    C = np.asarray(pul.C, dtype=float)
    if pul.size == 0 or abs(np.linalg.det(C)) < 1e-300 or np.linalg.cond(C) > 1e14:
        raise SingularC("capacitance matrix is singular")
    _check_identity(pul)
    Z = pul.c_l * np.asarray(pul.L, dtype=float)
    Z = 0.5 * (Z + Z.T)
    vals, vecs = np.linalg.eigh(Z)
    # deterministic eigenvector signs: largest component positive
    for k in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, k])), k] < 0:
            vecs[:, k] *= -1
    return ImpedanceMatrix(Z, vals, vecs)


def parameterize_coupler(pul2, l_c):
    if pul2.size != 2:
        raise InputError(f"coupler needs 2x2 matrices, got {pul2.size}x{pul2.size}")
    _check_identity(pul2)
    C = np.asarray(pul2.C, dtype=float)
    kappa = -C[0, 1] / math.sqrt(C[0, 0] * C[1, 1])
    if not abs(kappa) < 1.0:
        raise KappaOutOfRange(f"|kappa| = {abs(kappa):.6f} >= 1")
    gamma = math.sqrt(1.0 - kappa**2)
    # C = (c_l**2 L)^-1 with c_l L = gamma M  =>  C11 = 1/(gamma**3 c_l Z1)
    Z1 = 1.0 / (gamma**3 * pul2.c_l * C[0, 0])
    Z2 = 1.0 / (gamma**3 * pul2.c_l * C[1, 1])
    return CouplerModel(Z1=Z1, Z2=Z2, kappa=kappa, l_c=l_c, c_l=pul2.c_l)
