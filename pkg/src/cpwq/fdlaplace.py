"""Finite-difference Laplace solver for zero-thickness coplanar conductors.

An independent check on :mod:`cpwq.xsection`.  Only the vacuum half-plane is
discretised: conductors are Dirichlet nodes on ``y = 0``, gaps are natural
(Neumann) boundaries, and the far boundary is grounded.  The substrate half
contributes the same geometric factor scaled by epsilon, so

    C = (eps + 1) eps0 * (flux out of the conductor) / (drive potential).

The grid is a tensor product: uniform spacing over the structure, with every
conductor edge on a node line, then geometric growth out to ``far`` times the
structure width.  The stencil is the finite-volume 5-point one, and charges
are the discrete reactions at the Dirichlet nodes, which conserve flux exactly.
"""
from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal

from .materials import Materials


@dataclass
class FDResult:
    C: np.ndarray
    names: tuple
    x: np.ndarray
    surface_potential: dict  # driven conductor -> phi(x, 0) at unit drive
    grid_shape: tuple


def _graded(start, end, h, n_side):
    """``n_side`` cells from ``start`` outward to ``end`` (|end| > |start|),
    first cell ``h``, constant growth ratio."""
    length = abs(end - start)
    if n_side * h >= length:
        return start + np.sign(end - start) * h * np.arange(1, n_side + 1)
    def total(r):
        with np.errstate(over="ignore"):
            return h * np.expm1(n_side * np.log(r)) / (r - 1.0)

    lo, hi = 1.0 + 1e-12, 2.0
    while total(hi) < length:
        hi *= 2
    for _ in range(200):
        r = 0.5 * (lo + hi)
        if total(r) < length:
            lo = r
        else:
            hi = r
    steps = h * r ** np.arange(n_side)
    pos = np.cumsum(steps)
    pos *= length / pos[-1]
    return start + np.sign(end - start) * pos


def _x_grid(edges, nx, far, fine_fraction=0.75):
    lo, hi = edges[0], edges[-1]
    span = hi - lo
    pad = 0.25 * span
    breaks = [lo - pad, *edges, hi + pad]
    n_fine = int(fine_fraction * nx)
    h = (breaks[-1] - breaks[0]) / n_fine
    pts = [breaks[0]]
    for a, b in zip(breaks, breaks[1:]):
        k = max(2, int(round((b - a) / h)))
        pts.extend(np.linspace(a, b, k + 1)[1:])
    x = np.array(pts)
    n_side = max(2, (nx - len(x)) // 2)
    h_edge = x[1] - x[0]
    left = _graded(x[0], lo - far * span, h_edge, n_side)[::-1]
    right = _graded(x[-1], hi + far * span, h_edge, nx - len(x) - n_side)
    return np.concatenate([left, x, right]), h_edge


def _y_grid(h, ny, far_dist, fine_fraction=0.5):
    n_fine = int(fine_fraction * ny)
    y = h * np.arange(n_fine)
    rest = _graded(y[-1], far_dist, h, ny - n_fine)
    return np.concatenate([y, rest])


def _grid(xs, nx, ny, far):
    edges = [v for ab in xs.conductors for v in ab if math.isfinite(v)]
    x, h = _x_grid(edges, nx, far)
    y = _y_grid(h, ny, far * (edges[-1] - edges[0]))
    return x, y, h


def _face_coefficients(x, y):
    dx = np.diff(x)
    dy = np.diff(y)
    # dual cell widths (half cells at the boundary)
    wx = np.zeros(len(x))
    wx[:-1] += 0.5 * dx
    wx[1:] += 0.5 * dx
    wy = np.zeros(len(y))
    wy[:-1] += 0.5 * dy
    wy[1:] += 0.5 * dy
    # ce[i, j] couples (i, j)-(i+1, j); cn[i, j] couples (i, j)-(i, j+1)
    ce = wy[None, :] / dx[:, None]
    cn = wx[:, None] / dy[None, :]
    return ce, cn


def _laplacian(x, y):
    nx, ny = len(x), len(y)
    ce, cn = _face_coefficients(x, y)
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    diag = np.zeros((nx, ny))
    diag[:-1, :] += ce
    diag[1:, :] += ce
    diag[:, :-1] += cn
    diag[:, 1:] += cn
    for a, b, c in (
        (idx[:-1, :], idx[1:, :], ce),
        (idx[:, :-1], idx[:, 1:], cn),
    ):
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [-c.ravel(), -c.ravel()]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx * ny, nx * ny),
    )
    return A


def _interface_operator(x, y):
    """Discrete Dirichlet-to-Neumann map on the ``y = 0`` row.

    Returns ``P`` and ``s`` with ``S = P diag(s) P^T``, where ``S g`` is the
    flux leaving each interior ``y = 0`` node when the row is held at ``g`` and
    every other boundary is grounded.  The operator is ``Kx (x) My + Mx (x) Ky``;
    diagonalising the x part leaves one tridiagonal y problem per mode, whose
    Schur complement onto the first row is a continued fraction.
    """
    dx, dy = np.diff(x), np.diff(y)
    wx = np.zeros(len(x))
    wx[:-1] += 0.5 * dx
    wx[1:] += 0.5 * dx
    wy = np.zeros(len(y))
    wy[:-1] += 0.5 * dy
    wy[1:] += 0.5 * dy
    # x: interior nodes 1..nx-2 (lateral boundaries grounded)
    kd = 1.0 / dx[:-1] + 1.0 / dx[1:]
    ko = -1.0 / dx[1:-1]
    m = wx[1:-1]
    rm = 1.0 / np.sqrt(m)
    lam, U = eigh_tridiagonal(kd * rm * rm, ko * rm[:-1] * rm[1:], lapack_driver="stev")
    P = np.sqrt(m)[:, None] * U
    # y: rows 0..ny-2 (top grounded); continued fraction from the top down
    yd = np.empty(len(y) - 1)
    yd[0] = 1.0 / dy[0]
    yd[1:] = 1.0 / dy[:-1] + 1.0 / dy[1:]
    t = lam * wy[-2] + yd[-1]
    for j in range(len(y) - 3, -1, -1):
        t = lam * wy[j] + yd[j] - 1.0 / (dy[j] ** 2 * t)
    return P, t


def solve_capacitance(xs, mat=None, nx=1024, ny=512, far=1000.0):
    """Capacitance matrix over the signal conductors of ``xs`` by finite differences.

    Semi-infinite grounds extend to the lateral domain boundary.
    """
    mat = mat or Materials()
    x, y, h = _grid(xs, nx, ny, far)
    P, s = _interface_operator(x, y)
    xi = x[1:-1]

    owner = np.full(len(xi), -1)
    tol_x = 1e-9 * h
    for j, (a, b) in enumerate(xs.conductors):
        owner[(xi >= a - tol_x) & (xi <= b + tol_x)] = j
    sig = xs.signal_indices
    free = np.flatnonzero(owner < 0)
    live = np.flatnonzero(np.isin(owner, sig))
    sub = np.concatenate([free, live])
    Ps = P[sub]
    S = (Ps * s) @ Ps.T
    nf = len(free)
    S_ff, S_fl = S[:nf, :nf], S[:nf, nf:]
    S_lf, S_ll = S[nf:, :nf], S[nf:, nf:]
    owner_l = owner[live]

    G = np.zeros((len(sig), len(sig)))
    surface = {}
    for col, i in enumerate(sig):
        g_l = (owner_l == i).astype(float)
        g_f = -np.linalg.solve(S_ff, S_fl @ g_l)
        flux = S_ll @ g_l + S_lf @ g_f
        for row, j in enumerate(sig):
            G[row, col] = flux[owner_l == j].sum()
        phi = np.zeros(len(x))
        phi[1 + free] = g_f
        phi[1 + live] = g_l
        phi[1:-1][owner == i] = 1.0
        surface[i] = phi
    C = mat.capacitance_scale * 0.5 * (G + G.T)
    return FDResult(C, tuple(xs.names[j] for j in sig), x, surface, (len(x), len(y)))


def solve_capacitance_direct(xs, mat=None, nx=256, ny=128, far=1000.0):
    """Same discretisation as :func:`solve_capacitance`, assembled in full and
    solved with a sparse LU.  Only practical on small grids; used to validate
    the interface reduction."""
    mat = mat or Materials()
    x, y, h = _grid(xs, nx, ny, far)
    nxg, nyg = len(x), len(y)
    A = _laplacian(x, y)
    owner = np.full((nxg, nyg), -1)
    for j, (a, b) in enumerate(xs.conductors):
        owner[(x >= a - 1e-9 * h) & (x <= b + 1e-9 * h), 0] = j
    dirichlet = owner >= 0
    dirichlet[0, :] = dirichlet[-1, :] = dirichlet[:, -1] = True
    d_idx = np.flatnonzero(dirichlet.ravel())
    f_idx = np.flatnonzero(~dirichlet.ravel())
    lu = spla.splu(A[f_idx][:, f_idx].tocsc())
    A_fd = A[f_idx][:, d_idx]
    A_d = A[d_idx]
    owner_d = owner.ravel()[d_idx]
    sig = xs.signal_indices
    G = np.zeros((len(sig), len(sig)))
    for col, i in enumerate(sig):
        phi = np.zeros(nxg * nyg)
        phi[d_idx] = owner_d == i
        phi[f_idx] = lu.solve(-(A_fd @ phi[d_idx]))
        reaction = A_d @ phi
        for row, j in enumerate(sig):
            G[row, col] = reaction[owner_d == j].sum()
    return mat.capacitance_scale * G


def sign_change_points(result, xs, driven):
    """Abscissae in grounded-grounded gaps where E_x on the interface vanishes.

    Located as the extremum of phi(x, 0) inside each gap (parabolic refinement).
    """
    phi = result.surface_potential[driven]
    x = result.x
    out = {}
    for j in range(1, xs.n + 1):
        if j in (driven, driven + 1):
            continue
        lo, hi = xs.conductors[j - 1][1], xs.conductors[j][0]
        sel = np.flatnonzero((x > lo) & (x < hi))
        if len(sel) < 3:
            continue
        k = sel[np.argmax(np.abs(phi[sel]))]
        x0, x1, x2 = x[k - 1 : k + 2]
        f0, f1, f2 = phi[k - 1 : k + 2]
        # vertex of the parabola through three (possibly uneven) points
        num = (x1 - x0) ** 2 * (f1 - f2) - (x1 - x2) ** 2 * (f1 - f0)
        den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0)
        out[j] = x1 - 0.5 * num / den if den != 0 else x1
    return out
