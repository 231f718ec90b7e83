"""Periodic grids, balls/annuli, weighted averages and divergence-form assembly.

The domain is the unit torus with coordinates in [-1/2, 1/2)^n.  Cell centers
sit at -1/2 + (i + 1/2) h, so with N even no center coincides with the origin.
Fields are numpy arrays of shape ``(N,) * n``; vector fields carry a leading
axis of length n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exponents import Number, ext


class EllipticityError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only n = 1 or 2 is supported")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError("N must be a power of 2, at least 4")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 + (np.arange(self.N) + 0.5) * self.h

    @cached_property
    def centers(self) -> np.ndarray:
        """Array of shape (n, *shape) with cell-center coordinates."""
        return np.stack(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| at cell centers."""
        return np.sqrt(np.sum(self.centers**2, axis=0))

    def distance_to(self, point) -> np.ndarray:
        """Periodic Euclidean distance from every cell center to ``point``."""
        point = np.broadcast_to(np.asarray(point, dtype=float), (self.n,))
        d2 = np.zeros(self.shape)
        for k in range(self.n):
            diff = self.centers[k] - point[k]
            diff = diff - np.round(diff)
            d2 += diff**2
        return np.sqrt(d2)

    def integrate(self, f: np.ndarray, w: np.ndarray | None = None) -> complex | float:
        if w is None:
            return np.sum(f) * self.cell_volume
        return np.sum(f * w) * self.cell_volume

    def lp_norm(self, f: np.ndarray, p, w: np.ndarray | None = None) -> float:
        """L^p(w) norm; vector fields (leading axis n) use the Euclidean modulus."""
        a = np.abs(f) if f.shape == self.shape else np.sqrt(np.sum(np.abs(f) ** 2, axis=0))
        p = float(ext(p))
        ww = np.ones(self.shape) if w is None else w
        if math.isinf(p):
            return float(np.max(a[ww > 0])) if a.size else 0.0
        return float((np.sum(a**p * ww) * self.cell_volume) ** (1.0 / p))

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        return np.vdot(g, f) * self.cell_volume

    # difference operators -------------------------------------------------
    def shift(self, f: np.ndarray, axis: int, step: int) -> np.ndarray:
        """Return f(x + step * h e_axis)."""
        return np.roll(f, -step, axis=axis)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Forward-difference gradient, shape (n, *shape)."""
        return np.stack([(self.shift(f, d, 1) - f) / self.h for d in range(self.n)])

    def divergence(self, g: np.ndarray) -> np.ndarray:
        """Backward-difference divergence, the negative adjoint of :meth:`gradient`."""
        out = np.zeros(self.shape, dtype=np.result_type(g.dtype, float))
        for d in range(self.n):
            out = out + (g[d] - self.shift(g[d], d, -1)) / self.h
        return out

    @cached_property
    def difference_matrices(self) -> list[sp.csr_matrix]:
        N, h = self.N, self.h
        d1 = sp.diags([-np.ones(N), np.ones(N - 1), np.ones(1)], [0, 1, -(N - 1)], shape=(N, N))
        d1 = sp.csr_matrix(d1) / h
        eye = sp.identity(N, format="csr")
        if self.n == 1:
            return [d1]
        return [sp.kron(d1, eye, format="csr"), sp.kron(eye, d1, format="csr")]

    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the 3-point discrete -Laplacian in FFT ordering."""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N)
        s1 = 4.0 * np.sin(np.pi * k * self.h) ** 2 / self.h**2
        grids = np.meshgrid(*([s1] * self.n), indexing="ij")
        return np.sum(grids, axis=0)

    def gradient_symbol(self) -> np.ndarray:
        """Symbol of the forward gradient in FFT ordering, shape (n, *shape)."""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N)
        s1 = (np.exp(2j * np.pi * k * self.h) - 1.0) / self.h
        out = []
        for d in range(self.n):
            shape = [1] * self.n
            shape[d] = self.N
            out.append(np.broadcast_to(s1.reshape(shape), self.shape))
        return np.stack(out)

    def refine(self) -> "PeriodicGrid":
        return PeriodicGrid(self.n, 2 * self.N)


# ---------------------------------------------------------------------------
# balls and annuli


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def scaled(self, lam: float) -> "Ball":
        return Ball(self.center, self.radius * lam)

    def mask(self, grid: PeriodicGrid) -> np.ndarray:
        if self.radius < grid.h:
            raise ValueError(
                f"degenerate ball: radius {self.radius:g} is below one cell ({grid.h:g})"
            )
        return grid.distance_to(self.center) < self.radius


@dataclass(frozen=True)
class Annulus:
    """C_1(B) = 4B and C_j(B) = 2^{j+1}B minus 2^j B for j >= 2."""

    ball: Ball
    j: int

    def __post_init__(self):
        if self.j < 1:
            raise ValueError("annulus index starts at 1")

    def mask(self, grid: PeriodicGrid) -> np.ndarray:
        outer = self.ball.scaled(2.0 ** (self.j + 1)).mask(grid)
        if self.j == 1:
            return outer
        return outer & ~self.ball.scaled(2.0**self.j).mask(grid)

    def normalizer(self, grid: PeriodicGrid) -> np.ndarray:
        return self.ball.scaled(2.0 ** (self.j + 1)).mask(grid)


def max_annulus_index(ball: Ball) -> int:
    """Largest j with 2^{j+1} r <= 1/2, so the annulus does not wrap the torus."""
    return max(1, int(math.floor(math.log2(0.5 / ball.radius))) - 1)


@dataclass
class BallFamily:
    balls: list[Ball] = field(default_factory=list)

    def __iter__(self):
        return iter(self.balls)

    def __len__(self):
        return len(self.balls)

    def extended(self, more) -> "BallFamily":
        return BallFamily(list(self.balls) + list(more))

    @classmethod
    def standard(cls, grid: PeriodicGrid, max_centers: int = 16) -> "BallFamily":
        """Dyadic radii 2^{-k-1}, k = 0..log2(N/4), centers on a coarsened
        lattice, plus origin-centered balls at every radius."""
        balls = []
        kmax = int(math.log2(grid.N / 4))
        origin = (0.0,) * grid.n
        for k in range(kmax + 1):
            r = 2.0 ** (-k - 1)
            balls.append(Ball(origin, r))
            per_axis = max(1, min(int(round(1.0 / r)), int(round(max_centers ** (1 / grid.n)))))
            offs = -0.5 + (np.arange(per_axis) + 0.5) / per_axis
            for c in np.stack(np.meshgrid(*([offs] * grid.n), indexing="ij")).reshape(grid.n, -1).T:
                balls.append(Ball(tuple(float(x) for x in c), r))
        return cls(balls)

    @classmethod
    def origin_centered(cls, grid: PeriodicGrid, radii) -> "BallFamily":
        return cls([Ball((0.0,) * grid.n, float(r)) for r in radii])


# ---------------------------------------------------------------------------
# averages


def _mask_of(region, grid):
    return region.mask(grid) if hasattr(region, "mask") else np.asarray(region, dtype=bool)


def weighted_average(f: np.ndarray, region, w: np.ndarray | None, grid: PeriodicGrid):
    """Average of f over a ball or annulus with respect to w dx.

    Annulus averages normalize by w(2^{j+1}B), not by w(C_j(B)).
    """
    m = _mask_of(region, grid)
    norm_mask = region.normalizer(grid) if isinstance(region, Annulus) else m
    ww = np.ones(grid.shape) if w is None else w
    if not m.any():
        raise ValueError("empty region on this grid")
    denom = np.sum(ww[norm_mask])
    return np.sum(f[..., m] * ww[m], axis=-1) / denom


def measure(region, w: np.ndarray | None, grid: PeriodicGrid) -> float:
    m = _mask_of(region, grid)
    ww = np.ones(grid.shape) if w is None else w
    return float(np.sum(ww[m]) * grid.cell_volume)


def poincare_check(
    f: np.ndarray,
    ball: Ball,
    p: Number,
    w: np.ndarray | None,
    grid: PeriodicGrid,
    q: Number | None = None,
) -> float:
    """Ratio (avg_B |f - f_B|^q dw)^{1/q} / (r(B) (avg_B |grad f|^p dw)^{1/p})."""
    p = float(ext(p))
    q = p if q is None else float(ext(q))
    m = ball.mask(grid)
    ww = np.ones(grid.shape) if w is None else w
    wm = ww[m]
    grad = np.sqrt(np.sum(np.abs(grid.gradient(f)) ** 2, axis=0))[m]
    rhs = ball.radius * (np.sum(grad**p * wm) / np.sum(wm)) ** (1 / p)
    fm = f[m]
    mean = np.sum(fm * wm) / np.sum(wm)
    lhs = (np.sum(np.abs(fm - mean) ** q * wm) / np.sum(wm)) ** (1 / q)
    if rhs == 0.0:
        return 0.0
    return float(lhs / rhs)


# ---------------------------------------------------------------------------
# coefficients and operators


def _numerical_range_angle(A: np.ndarray) -> float:
    """Smallest psi with every numerical range W(A(x)) inside |arg z| <= psi."""
    H = lambda phi: 0.5 * (np.exp(1j * phi) * A + np.exp(-1j * phi) * np.conj(np.swapaxes(A, -1, -2)))
    worst = 0.0
    for sign in (1.0, -1.0):
        lo, hi = 0.0, math.pi / 2
        if np.min(np.linalg.eigvalsh(H(sign * hi))) >= 0:
            continue
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if np.min(np.linalg.eigvalsh(H(sign * mid))) >= -1e-14:
                lo = mid
            else:
                hi = mid
        worst = max(worst, math.pi / 2 - lo)
    return worst


@dataclass
class CoefficientField:
    """Per-cell n x n matrices with ellipticity constants."""

    A: np.ndarray
    lam: float = field(init=False)
    Lam: float = field(init=False)
    theta: float = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim < 3 or A.shape[-1] != A.shape[-2]:
            raise ValueError("A must have shape (*grid_shape, n, n)")
        if not np.iscomplexobj(A) or np.allclose(A.imag, 0):
            A = np.real(A).astype(float)
        self.A = A
        flat = A.reshape(-1, A.shape[-1], A.shape[-1])
        herm = 0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2)))
        low = np.linalg.eigvalsh(herm)[:, 0]
        i = int(np.argmin(low))
        if low[i] <= 0:
            cell = np.unravel_index(i, A.shape[:-2])
            raise EllipticityError(
                f"ellipticity fails at cell {tuple(int(c) for c in cell)}: "
                f"min eigenvalue of Re A is {low[i]:.6g}"
            )
        self.lam = float(low[i])
        self.Lam = float(np.max(np.linalg.norm(flat, ord=2, axis=(-2, -1))))
        self.theta = 0.0 if self.is_real_symmetric else _numerical_range_angle(flat)

    @property
    def n(self) -> int:
        return self.A.shape[-1]

    @property
    def is_real_symmetric(self) -> bool:
        return (not np.iscomplexobj(self.A)) and np.allclose(self.A, np.swapaxes(self.A, -1, -2))

    @property
    def is_hermitian(self) -> bool:
        return np.allclose(self.A, np.conj(np.swapaxes(self.A, -1, -2)))

    @property
    def is_constant(self) -> bool:
        flat = self.A.reshape(-1, self.n, self.n)
        return bool(np.all(flat == flat[0]))

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> "CoefficientField":
        return cls.constant(grid, np.eye(grid.n))

    @classmethod
    def constant(cls, grid: PeriodicGrid, M) -> "CoefficientField":
        M = np.asarray(M)
        return cls(np.broadcast_to(M, grid.shape + M.shape).copy())

    def sample_check(self, rng: np.random.Generator, samples: int = 64) -> tuple[float, float]:
        """Worst Re(A xi . conj xi)/|xi|^2 and |A xi . conj zeta|/(|xi||zeta|) over random vectors."""
        flat = self.A.reshape(-1, self.n, self.n)
        xi = rng.normal(size=(samples, self.n)) + 1j * rng.normal(size=(samples, self.n))
        ze = rng.normal(size=(samples, self.n)) + 1j * rng.normal(size=(samples, self.n))
        Axi = np.einsum("cij,sj->csi", flat, xi)
        lower = np.min(np.real(np.einsum("csi,si->cs", Axi, np.conj(xi))) / np.sum(np.abs(xi) ** 2, axis=1))
        upper = np.max(
            np.abs(np.einsum("csi,si->cs", Axi, np.conj(ze)))
            / (np.linalg.norm(xi, axis=1) * np.linalg.norm(ze, axis=1))
        )
        return float(lower), float(upper)


class EllipticOperator:
    """L f = -div_h(A grad_h f) on a periodic grid.

    ``grad_h`` is the forward difference and ``div_h`` its negative adjoint, so
    <L f, g> = <A grad_h f, grad_h g> in the discrete L^2 inner product.
    """

    def __init__(self, grid: PeriodicGrid, coeffs: CoefficientField):
        if coeffs.A.shape[:-2] != grid.shape or coeffs.n != grid.n:
            raise ValueError("coefficient field does not match the grid")
        self.grid = grid
        self.coeffs = coeffs
        D = grid.difference_matrices
        blocks = []
        for d in range(grid.n):
            row = None
            for e in range(grid.n):
                a = coeffs.A[..., d, e].reshape(-1)
                if not np.any(a):
                    continue
                term = D[d].T @ sp.diags(a) @ D[e]
                row = term if row is None else row + term
            if row is not None:
                blocks.append(row)
        self.matrix = sp.csr_matrix(sum(blocks[1:], blocks[0]))

    @property
    def is_hermitian(self) -> bool:
        return self.coeffs.is_hermitian

    @property
    def theta(self) -> float:
        return self.coeffs.theta

    def apply(self, f: np.ndarray) -> np.ndarray:
        return (self.matrix @ f.reshape(-1)).reshape(f.shape)

    def flux(self, f: np.ndarray) -> np.ndarray:
        return np.einsum("...de,e...->d...", self.coeffs.A, self.grid.gradient(f))

    def energy(self, u: np.ndarray) -> complex:
        """<A grad u, grad u> in the discrete L^2 pairing."""
        g = self.grid.gradient(u)
        return np.sum(np.einsum("...de,e...->d...", self.coeffs.A, g) * np.conj(g)) * self.grid.cell_volume

    def symbol(self) -> np.ndarray:
        """Fourier symbol conj(s)^T A s (constant coefficients only)."""
        if not self.coeffs.is_constant:
            raise ValueError("symbol requires constant coefficients")
        A0 = self.coeffs.A.reshape(-1, self.grid.n, self.grid.n)[0]
        s = self.grid.gradient_symbol()
        return np.einsum("d...,de,e...->...", np.conj(s), A0, s)

    def spectral_bounds(self) -> tuple[float, float]:
        """Lower bound on the smallest nonzero and upper bound on the largest
        eigenvalue modulus, from L >= lam(-Delta_h) and |grad_h|^2 <= 4n/h^2."""
        h = self.grid.h
        low = self.coeffs.lam * 4.0 * math.sin(math.pi * h) ** 2 / h**2
        high = self.coeffs.Lam * 4.0 * self.grid.n / h**2
        return low, high


def assemble(coeffs: CoefficientField, grid: PeriodicGrid) -> EllipticOperator:
    return EllipticOperator(grid, coeffs)


# ---------------------------------------------------------------------------
# Meyers-Kenig family


def smooth_cutoff(r: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """C^2 cutoff: 1 for r <= inner, 0 for r >= outer, quintic smoothstep between."""
    s = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


MK_INNER = 0.125
MK_OUTER = 0.25


def meyers_kenig_matrix(x: np.ndarray, q: float) -> np.ndarray:
    """Pulled-back matrix |det D phi| (D phi)^{-1} (D phi)^{-T} for phi(x) = |x|^beta x.

    ``x`` has shape (2, ...); returns shape (..., 2, 2).  With beta = -2/q it is
    (1+beta) I + (1/(1+beta) - (1+beta)) xhat xhat^T, independent of |x|.
    """
    beta = -2.0 / q
    r = np.sqrt(np.sum(x**2, axis=0))
    xhat = x / r
    outer = np.einsum("i...,j...->...ij", xhat, xhat)
    eye = np.eye(2)
    return (1 + beta) * eye + (1.0 / (1 + beta) - (1 + beta)) * outer


def meyers_kenig(q: float, grid: PeriodicGrid, inner: float = MK_INNER, outer: float = MK_OUTER) -> CoefficientField:
    """Real symmetric coefficients with q_+(L) = q, cut off to I beyond ``outer``."""
    if q <= 2:
        raise ValueError("Meyers-Kenig needs q > 2")
    if grid.n != 2:
        raise ValueError("Meyers-Kenig operator is two-dimensional")
    x = grid.centers
    # the closed form only depends on x/|x|; clamp keeps it defined near 0
    r = np.maximum(grid.radius, grid.h / 2)
    A_mk = meyers_kenig_matrix(x * (r / grid.radius), q)
    chi = smooth_cutoff(grid.radius, inner, outer)[..., None, None]
    A = chi * A_mk + (1.0 - chi) * np.eye(2)
    return CoefficientField(A)


def mk_map(x: np.ndarray, q: float) -> np.ndarray:
    """phi(x) = |x|^beta x, beta = -2/q."""
    r = np.sqrt(np.sum(x**2, axis=0))
    return x * r ** (-2.0 / q)
