"""Per-unit-length C and L matrices of planar multi-conductor lines.

The conductors are zero-thickness strips on the interface between vacuum
(upper half-plane) and a substrate (lower half-plane).  Because the normal
D-field vanishes on the gaps by symmetry, each half-plane is an independent
mixed Dirichlet/Neumann problem that is solved with the hyperelliptic map

    w(z) = int P(z) / prod_k sqrt(z - r_k) dz,

where ``r_k`` are the finite strip edges and ``P`` has one real root in every
gap separating two grounded conductors.  Conductors map to horizontal segments
(Im w constant = potential), gaps to vertical segments, and the charge on a
conductor is proportional to its horizontal extent in the w-plane.

Integration runs strictly along the real axis.  On a segment between two
adjacent edges the integrand is ``g(x)/sqrt((x - lo)(hi - x))`` with ``g``
smooth, so Gauss-Chebyshev (Gauss-Jacobi with alpha = beta = -1/2) quadrature
integrates the edge singularities exactly.  The branch of every square root is
the upper-half-plane limit: each edge to the right of ``x`` contributes a factor
``-i``.

Semi-infinite outer grounds (``-inf`` / ``+inf`` outer edges) are handled
exactly: the two outer planes meet at infinity, their edges drop out of the
product and nothing is ever integrated over an unbounded segment.  Finite outer
conductors are also supported; the gap "through infinity" between them then
carries its own sign-change root, parameterised by an angle so it can pass
through the point at infinity.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (
    AsymmetryTooLarge,
    DegenerateGeometry,
    DimensionMismatch,
    InputError,
    NonConvergence,
    QuadratureNotConverged,
)
from .materials import Materials

QUAD_TOL = 1e-12
QUAD_NMIN = 32
QUAD_NMAX = 2**17
ROOT_TOL = 1e-12
ASYMMETRY_TOL = 1e-6


@dataclass(frozen=True)
class CrossSection:
    """Ordered conductor intervals ``(a_j, b_j)`` in metres.

    The first conductor may start at ``-inf`` and the last may end at ``+inf``
    (both or neither); such semi-infinite planes must be grounds.
    """

    conductors: tuple
    grounds: tuple
    names: tuple = ()
    ground_extent: float = None

    def __post_init__(self):
        cond = tuple((float(a), float(b)) for a, b in self.conductors)
        object.__setattr__(self, "conductors", cond)
        object.__setattr__(self, "grounds", tuple(bool(g) for g in self.grounds))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"c{j}" for j in range(len(cond))))
        if len(cond) < 2:
            raise InputError("at least two conductors are required")
        if len(self.grounds) != len(cond) or len(self.names) != len(cond):
            raise InputError("grounds/names must have one entry per conductor")
        left_inf = math.isinf(cond[0][0])
        right_inf = math.isinf(cond[-1][1])
        if left_inf != right_inf:
            raise InputError("semi-infinite grounds must come in pairs")
        if left_inf and not (self.grounds[0] and self.grounds[-1]):
            raise InputError("semi-infinite conductors must be grounds")
        edges = [x for ab in cond for x in ab]
        finite = [x for x in edges if math.isfinite(x)]
        if any(math.isinf(x) for x in edges[1:-1]):
            raise InputError("only the outermost edges may be infinite")
        if any(not hi > lo for lo, hi in zip(edges, edges[1:])):
            raise InputError("conductor edges must be strictly interleaved a0<b0<a1<...")
        span = finite[-1] - finite[0]
        if min(hi - lo for lo, hi in zip(finite, finite[1:])) < 1e-9 * span:
            raise DegenerateGeometry("interval widths below numerical resolution")
        if all(self.grounds):
            raise InputError("no signal conductor")

    @classmethod
    def coplanar(cls, widths, gaps, names=None, grounds=None, ground_extent=None):
        """Signal strips of ``widths`` separated by ``gaps`` between two outer grounds.

        ``len(gaps) == len(widths) + 1``.  ``ground_extent=None`` gives
        semi-infinite grounds; otherwise each outer ground is that wide, and it
        must be at least 10x the inner structure width.
        """
        widths = [float(w) for w in widths]
        gaps = [float(g) for g in gaps]
        if len(gaps) != len(widths) + 1:
            raise InputError("need one more gap than inner conductor")
        if min(widths + gaps) <= 0:
            raise InputError("widths and gaps must be positive")
        inner = sum(widths) + sum(gaps)
        if ground_extent is not None and ground_extent < 10.0 * inner:
            raise InputError(
                f"ground_extent {ground_extent:g} below 10x structure width {inner:g}"
            )
        x = -0.5 * inner
        cond = [(-math.inf if ground_extent is None else x - ground_extent, x)]
        for w, g in zip(widths, gaps):
            x += g
            cond.append((x, x + w))
            x += w
        x += gaps[-1]
        cond.append((x, math.inf if ground_extent is None else x + ground_extent))
        if names is None:
            names = [f"s{j}" for j in range(1, len(widths) + 1)]
        names = ["ground_left", *names, "ground_right"]
        if grounds is None:
            grounds = [False] * len(widths)
        grounds = [True, *grounds, True]
        return cls(tuple(cond), tuple(grounds), tuple(names), ground_extent)

    @property
    def n(self):
        """Index of the last conductor."""
        return len(self.conductors) - 1

    @property
    def semi_infinite(self):
        return math.isinf(self.conductors[0][0])

    @property
    def signal_indices(self):
        return [j for j, g in enumerate(self.grounds) if not g]

    def scaled(self, factor):
        return CrossSection(
            tuple((a * factor, b * factor) for a, b in self.conductors),
            self.grounds,
            self.names,
            None if self.ground_extent is None else self.ground_extent * factor,
        )


@dataclass
class MappingSolution:
    """Conformal map of one column solve (conductor ``driven`` at unit drive)."""

    driven: int
    partition_points: dict  # gap index j (between conductors j-1, j) -> c_j [m]
    outer_root: float  # root in the gap through infinity [m]; inf or None
    w_values: dict  # ("a"|"b", j) -> complex image of the edge (finite edges)
    potentials: np.ndarray  # Im w on every conductor, grounds at 0
    image_widths: np.ndarray  # Re w(b_j) - Re w(a_j); nan for semi-infinite
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def drive(self):
        return self.potentials[self.driven]


@dataclass
class PULMatrices:
    """Per-unit-length matrices over signal conductors (grounds eliminated)."""

    C: np.ndarray
    L: np.ndarray
    c_l: float
    names: tuple = ()

    @classmethod
    def from_capacitance(cls, C, c_l, names=()):
        C = np.asarray(C, dtype=float)
        L = np.linalg.inv(C) / c_l**2
        return cls(C, 0.5 * (L + L.T), c_l, tuple(names))

    @property
    def size(self):
        return self.C.shape[0]

    def lc_residual(self):
        """max |L C c_l^2 - 1| elementwise."""
        return float(np.max(np.abs(self.L @ self.C * self.c_l**2 - np.eye(self.size))))

    def check(self, lc_tol=1e-8, sym_tol=1e-6):
        """Raise ``InputError`` if any PUL invariant fails."""
        C = self.C
        if np.linalg.norm(C - C.T) > sym_tol * np.linalg.norm(C):
            raise InputError("C not symmetric")
        if np.linalg.norm(self.L - self.L.T) > sym_tol * np.linalg.norm(self.L):
            raise InputError("L not symmetric")
        if np.min(np.linalg.eigvalsh(C)) <= 0:
            raise InputError("C not positive definite")
        off = C[~np.eye(self.size, dtype=bool)]
        if off.size and np.max(off) > 1e-12 * np.max(np.diag(C)):
            raise InputError("positive off-diagonal capacitance")
        if self.lc_residual() > lc_tol:
            raise InputError("L C != 1/c_l^2")


class _Map:
    """Numerics of the hyperelliptic map for one driven conductor.

    Coordinates are centred and normalised to the finite edge span; all
    returned geometric ratios are scale invariant.
    """

    def __init__(self, xs, driven):
        if not 0 <= driven <= xs.n:
            raise InputError(f"driven index {driven} outside 0..{xs.n}")
        if xs.semi_infinite and driven in (0, xs.n):
            raise InputError("cannot drive a semi-infinite ground plane")
        self.xs = xs
        self.i = driven
        edges = [x for ab in xs.conductors for x in ab]
        finite = [x for x in edges if math.isfinite(x)]
        self.center = 0.5 * (finite[0] + finite[-1])
        self.scale = 0.5 * (finite[-1] - finite[0])
        norm = lambda x: (x - self.center) / self.scale if math.isfinite(x) else x
        self.a = [norm(a) for a, _ in xs.conductors]
        self.b = [norm(b) for _, b in xs.conductors]
        self.roots = np.array([norm(x) for x in finite])
        n = xs.n
        self.finite_outer = not xs.semi_infinite

        # segments: ("cond", j, lo, hi) for finite conductors, ("gap", j, lo, hi)
        self.segments = []
        for j in range(n + 1):
            if math.isfinite(self.a[j]) and math.isfinite(self.b[j]):
                self.segments.append(("cond", j, self.a[j], self.b[j]))
            if j < n:
                self.segments.append(("gap", j + 1, self.b[j], self.a[j + 1]))
        self.segments.sort(key=lambda s: s[2])

        self.rooted_gaps = [j for j in range(1, n + 1) if j not in (driven, driven + 1)]
        self.outer_rooted = self.finite_outer and driven not in (0, n)
        if self.finite_outer:
            self.u_bounds = (math.atan(self.b[n]), math.atan(self.a[0]) + math.pi)

        cond_seg = next(s for s in self.segments if s[0] == "cond")
        c0 = 1.0 if self._n_right(cond_seg[3]) % 2 == 0 else 1j
        self.phase = {}
        for kind, j, lo, hi in self.segments:
            self.phase[(kind, j)] = c0 * (-1j) ** (self._n_right(hi) % 4)

    def _n_right(self, hi):
        return int(np.count_nonzero(self.roots >= hi))

    # unknown vector: c_j for rooted gaps (in order), then outer angle u
    def initial_guess(self):
        x = [0.5 * (self.b[j - 1] + self.a[j]) for j in self.rooted_gaps]
        if self.outer_rooted:
            x.append(0.5 * math.pi)
        return np.array(x, dtype=float)

    def bounds(self):
        lo = [self.b[j - 1] for j in self.rooted_gaps]
        hi = [self.a[j] for j in self.rooted_gaps]
        if self.outer_rooted:
            lo.append(self.u_bounds[0])
            hi.append(self.u_bounds[1])
        return np.array(lo), np.array(hi)

    def _poly(self, x, params):
        m = len(self.rooted_gaps)
        p = np.ones_like(x)
        for c in params[:m]:
            p = p * (x - c)
        if self.outer_rooted:
            u = params[m]
            p = p * (x * math.cos(u) - math.sin(u))
        return p

    def segment_integral(self, lo, hi, params, tol=QUAD_TOL):
        others = self.roots[(self.roots != lo) & (self.roots != hi)]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        prev = None
        nodes = QUAD_NMIN
        while nodes <= QUAD_NMAX:
            t = np.cos((2.0 * np.arange(1, nodes + 1) - 1.0) * math.pi / (2.0 * nodes))
            x = mid + half * t
            g = self._poly(x, params) / np.sqrt(np.prod(np.abs(x[:, None] - others), axis=1))
            val = math.pi / nodes * math.fsum(g)
            if prev is not None:
                scale = math.pi / nodes * float(np.sum(np.abs(g)))
                if abs(val - prev) <= tol * scale:
                    return val
            prev = val
            nodes *= 2
        raise QuadratureNotConverged(f"segment [{lo:g}, {hi:g}] not converged")

    def increments(self, params):
        """Complex w increment across every segment, keyed like ``phase``."""
        return {
            (kind, j): self.phase[(kind, j)] * self.segment_integral(lo, hi, params)
            for kind, j, lo, hi in self.segments
        }

    def potentials(self, inc):
        n = self.xs.n
        pot = np.zeros(n + 1)
        for j in range(1, n + 1):
            pot[j] = pot[j - 1] + inc[("gap", j)].imag
        ref = next(pot[j] for j in range(n + 1) if j != self.i)
        return pot - ref

    def residuals(self, params):
        inc = self.increments(params)
        pot = self.potentials(inc)
        drive = abs(pot[self.i])
        res = [inc[("gap", j)].imag for j in self.rooted_gaps]
        if self.outer_rooted:
            res.append(pot[-1] - pot[0])
        return np.array(res) / drive, inc, pot


def _newton(fmap, x0, maxiter=50):
    lo, hi = fmap.bounds()
    width = hi - lo
    x = x0.copy()
    F = fmap.residuals(x)[0]
    for _ in range(maxiter):
        if np.max(np.abs(F)) < ROOT_TOL:
            return x, F
        J = np.empty((len(x), len(x)))
        for k in range(len(x)):
            h = 1e-6 * width[k]
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            J[:, k] = (fmap.residuals(xp)[0] - fmap.residuals(xm)[0]) / (2 * h)
        try:
            dx = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        norm0 = np.linalg.norm(F)
        for _ in range(40):
            xn = x + lam * dx
            if np.all(xn > lo) and np.all(xn < hi):
                Fn = fmap.residuals(xn)[0]
                if np.linalg.norm(Fn) < norm0:
                    break
            lam *= 0.5
        else:
            break
        x, F = xn, Fn
    return x, F


def _coordinate_bisection(fmap, x0, sweeps=200):
    """Gauss-Seidel bisection: each unknown zeroes its own gap residual."""
    lo, hi = fmap.bounds()
    x = x0.copy()
    for _ in range(sweeps):
        for k in range(len(x)):
            left, right = lo[k] + 1e-12 * (hi[k] - lo[k]), hi[k] - 1e-12 * (hi[k] - lo[k])

            def fk(v):
                y = x.copy()
                y[k] = v
                return fmap.residuals(y)[0][k]

            fl, fr = fk(left), fk(right)
            if fl * fr > 0:
                continue
            for _ in range(60):
                mid = 0.5 * (left + right)
                fm = fk(mid)
                if fm * fl > 0:
                    left, fl = mid, fm
                else:
                    right = mid
            x[k] = 0.5 * (left + right)
        F = fmap.residuals(x)[0]
        if np.max(np.abs(F)) < ROOT_TOL:
            break
    return x, fmap.residuals(x)[0]


def solve_partition_points(xs, driven):
    """Locate the sign-change roots so every non-driven conductor is grounded."""
    fmap = _Map(xs, driven)
    x0 = fmap.initial_guess()
    if len(x0):
        x, F = _newton(fmap, x0)
        if np.max(np.abs(F)) > 1e-10:
            x, F = _coordinate_bisection(fmap, x)
        if np.max(np.abs(F)) > 1e-10:
            raise NonConvergence(
                f"partition points for driven conductor {driven} did not converge", F
            )
    else:
        x, F = x0, np.zeros(0)
    _, inc, pot = fmap.residuals(x)
    return _solution(fmap, x, inc, pot, F)


def _solution(fmap, x, inc, pot, F):
    xs, s, c = fmap.xs, fmap.scale, fmap.center
    m = len(fmap.rooted_gaps)
    cpts = {j: float(x[k] * s + c) for k, j in enumerate(fmap.rooted_gaps)}
    outer = None
    if fmap.outer_rooted:
        u = x[m]
        outer = math.inf if abs(math.cos(u)) < 1e-14 else math.tan(u) * s + c
    # walk the real axis accumulating w (reference: first finite edge)
    ref = fmap.potentials(inc)  # grounds at Im w = 0
    offset = None
    w = 0j
    w_values = {}
    for kind, j, lo, hi in fmap.segments:
        key_lo = ("a", j) if kind == "cond" else ("b", j - 1)
        key_hi = ("b", j) if kind == "cond" else ("a", j)
        w_values.setdefault(key_lo, w)
        w = w + inc[(kind, j)]
        w_values[key_hi] = w
    # shift so that grounds sit at Im w = 0
    first_cond = next(seg for seg in fmap.segments if seg[0] == "cond")
    k0 = ("a", first_cond[1])
    offset = w_values[k0].imag - ref[first_cond[1]]
    w_values = {k: (v - 1j * offset) * s for k, v in w_values.items()}
    widths = np.full(xs.n + 1, np.nan)
    for kind, j, lo, hi in fmap.segments:
        if kind == "cond":
            widths[j] = inc[("cond", j)].real
    return MappingSolution(
        driven=fmap.i,
        partition_points=cpts,
        outer_root=outer,
        w_values=w_values,
        potentials=ref * s,
        image_widths=widths * s,
        residuals=F,
    )


def hyperelliptic_integral(xs, c, z0, z1, driven=None):
    """Integral of the map derivative along the real axis from ``z0`` to ``z1``.

    ``c`` is a :class:`MappingSolution` (or ``None`` for a map without
    partition roots); ``z0`` and ``z1`` must be conductor edges.  The sum runs
    over the elementary edge-to-edge segments in between; reversing the
    endpoints negates the result.
    """
    if driven is None:
        driven = c.driven if c is not None else xs.signal_indices[0]
    fmap = _Map(xs, driven)
    params = fmap.initial_guess()
    if c is not None:
        m = len(fmap.rooted_gaps)
        params[:m] = [(c.partition_points[j] - fmap.center) / fmap.scale for j in fmap.rooted_gaps]
        if fmap.outer_rooted:
            r = c.outer_root
            params[m] = 0.5 * math.pi if math.isinf(r) else math.atan((r - fmap.center) / fmap.scale) % math.pi
            if params[m] < fmap.u_bounds[0]:
                params[m] += math.pi
    lo_z, hi_z = sorted((z0, z1))
    lo_n = (lo_z - fmap.center) / fmap.scale
    hi_n = (hi_z - fmap.center) / fmap.scale
    for z in (lo_n, hi_n):
        if not np.any(np.isclose(fmap.roots, z, rtol=0, atol=1e-12)):
            raise InputError("integration endpoints must be finite conductor edges")
    total = 0j
    for kind, j, lo, hi in fmap.segments:
        if lo >= lo_n - 1e-12 and hi <= hi_n + 1e-12:
            total += fmap.phase[(kind, j)] * fmap.segment_integral(lo, hi, params)
    total *= fmap.scale
    return total if z1 >= z0 else -total


def _column(xs, driven):
    sol = solve_partition_points(xs, driven)
    sig = xs.signal_indices
    return -sol.image_widths[sig] / sol.drive, sol


def extract_matrices(xs, mat=None):
    """C and L matrices over the signal conductors of ``xs``."""
    mat = mat or Materials()
    sig = xs.signal_indices
    G = np.empty((len(sig), len(sig)))
    for col, i in enumerate(sig):
        G[:, col] = _column(xs, i)[0]
    C = mat.capacitance_scale * G
    asym = np.linalg.norm(C - C.T) / np.linalg.norm(C)
    if asym > ASYMMETRY_TOL:
        raise AsymmetryTooLarge(f"relative asymmetry {asym:.2e} of the capacitance matrix")
    C = 0.5 * (C + C.T)
    Linv = mat.inverse_inductance_scale * 0.5 * (G + G.T)
    L = np.linalg.inv(Linv)
    L = 0.5 * (L + L.T)
    return PULMatrices(C, L, mat.c_l, tuple(xs.names[j] for j in sig))


def _three(pul):
    if pul.size != 3:
        raise DimensionMismatch(f"need 3 signal conductors, got {pul.size}")
    return np.asarray(pul.C, dtype=float)


def reduce_notch(pul):
    """Feedline/resonator 2x2 matrices with the middle strip grounded."""
    C = _three(pul)
    Cn = C[np.ix_([0, 2], [0, 2])]
    names = (pul.names[0], pul.names[2]) if len(pul.names) == 3 else ()
    return PULMatrices.from_capacitance(Cn, pul.c_l, names)


def reduce_butt(pul):
    """Butt-port 2x2 matrices: conductors 1 and 3 merged, 2 kept."""
    C = _three(pul)
    Cb = np.array(
        [
            [C[0, 0] + C[0, 2] + C[2, 0] + C[2, 2], C[0, 1] + C[2, 1]],
            [C[1, 0] + C[1, 2], C[1, 1]],
        ]
    )
    names = (f"{pul.names[0]}+{pul.names[2]}", pul.names[1]) if len(pul.names) == 3 else ()
    try:
        return PULMatrices.from_capacitance(Cb, pul.c_l, names)
    except np.linalg.LinAlgError as exc:
        raise InputError("reduced butt-port capacitance matrix is singular") from exc


def notch_cross_section(w_feed, s_feed, w_strip, s_res, w_res, ground_extent=None):
    """Paper-style notch coupler: ground | s1 | feedline | s1 | strip | s2 | resonator | s2 | ground."""
    return CrossSection.coplanar(
        [w_feed, w_strip, w_res],
        [s_feed, s_feed, s_res, s_res],
        names=["feedline", "strip", "resonator"],
        ground_extent=ground_extent,
    )
