"""Action of e^{-zL} for z in a sector.

Four evaluation paths:

``fourier``   constant coefficients only, exact diagonalization by FFT
``spectral``  dense eigendecomposition, cached (small grids; doubles as oracle)
``krylov``    shift-and-invert Arnoldi on (I + gamma L)^{-1}, no restarts
``expm``      dense scaling-and-squaring (tiny grids)

All paths accept a batch ``sum_j c_j e^{-z_j L} f`` so contour and time
quadratures cost one transform (or one Krylov basis) per field.
"""

from __future__ import annotations

import cmath
import math
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import EllipticOperator

METHODS = ("fourier", "spectral", "krylov", "expm")
SPECTRAL_LIMIT = 4096


class SectorError(ValueError):
    pass


class KrylovError(RuntimeError):
    pass


class SemigroupEvaluator:
    def __init__(
        self,
        op: EllipticOperator,
        method: str = "auto",
        mu: float | None = None,
        krylov_tol: float = 1e-10,
        krylov_maxdim: int = 200,
    ):
        self.op = op
        self.theta = op.theta
        if mu is None:
            mu = math.pi / 2 - self.theta - 1e-3
        if not (0 < mu < math.pi / 2 - self.theta):
            raise SectorError(f"sector angle {mu:.4f} must lie in (0, pi/2 - theta), theta = {self.theta:.4f}")
        self.mu = mu
        if method == "auto":
            if op.grid.size <= SPECTRAL_LIMIT:
                method = "spectral"
            elif op.coeffs.is_constant:
                method = "fourier"
            else:
                method = "krylov"
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if method == "fourier" and not op.coeffs.is_constant:
            raise ValueError("fourier method needs constant coefficients")
        self.method = method
        self.krylov_tol = krylov_tol
        self.krylov_maxdim = krylov_maxdim
        self._lu = {}

    @property
    def grid(self):
        return self.op.grid

    # sector ------------------------------------------------------------
    @property
    def max_angle(self) -> float:
        """Largest |arg z| accepted; strictly inside the analytic sector pi/2 - theta."""
        return self.mu

    def check_sector(self, z) -> None:
        for zz in np.atleast_1d(z):
            if zz == 0:
                continue
            if abs(cmath.phase(complex(zz))) >= self.max_angle:
                raise SectorError(
                    f"z = {complex(zz):.4g} lies outside the sector |arg z| < {self.mu:.4f} "
                    f"(analytic sector is pi/2 - theta, theta = {self.theta:.4f})"
                )

    # spectral data -------------------------------------------------------
    @cached_property
    def _eig(self):
        M = self.op.matrix.toarray()
        if self.op.is_hermitian:
            lam, V = np.linalg.eigh(M)
            lam = np.maximum(lam, 0.0)
            return lam, V, None
        lam, V = np.linalg.eig(M)
        return lam, V, np.linalg.inv(V)

    @cached_property
    def _symbol(self):
        return self.op.symbol()

    def eigenvalues(self) -> np.ndarray:
        if self.method == "fourier":
            return self._symbol.reshape(-1)
        return self._eig[0]

    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        if self.method == "fourier":
            return np.fft.fftn(f)
        lam, V, Vinv = self._eig
        fv = f.reshape(-1)
        return V.conj().T @ fv if Vinv is None else Vinv @ fv

    def from_spectral(self, c: np.ndarray, real_hint: bool) -> np.ndarray:
        if self.method == "fourier":
            out = np.fft.ifftn(c)
        else:
            out = (self._eig[1] @ c.reshape(-1)).reshape(self.grid.shape)
        if real_hint:
            return np.real(out)
        return out

    def apply_multiplier(self, mult, f: np.ndarray) -> np.ndarray:
        """m(L) f for a function m of the eigenvalue (fourier/spectral only)."""
        if self.method not in ("fourier", "spectral"):
            raise ValueError("multiplier action needs a diagonalizing method")
        lam = self.eigenvalues()
        m = mult(lam.reshape(self._spectral_shape))
        real_hint = (not np.iscomplexobj(f)) and self._real_op and np.allclose(np.imag(m), 0)
        return self.from_spectral(m * self.to_spectral(f), real_hint)

    @property
    def _spectral_shape(self):
        return self.grid.shape if self.method == "fourier" else (self.grid.size,)

    @property
    def _real_op(self) -> bool:
        return not np.iscomplexobj(self.op.coeffs.A)

    # main entry points -----------------------------------------------------
    def apply(self, z, f: np.ndarray) -> np.ndarray:
        """e^{-zL} f."""
        if z == 0:
            return f.copy()
        return self.apply_sum([z], [1.0], f)

    def apply_sum(self, zs, cs, f: np.ndarray) -> np.ndarray:
        """sum_j cs[j] e^{-zs[j] L} f."""
        zs = np.asarray(zs, dtype=complex)
        cs = np.asarray(cs, dtype=complex)
        self.check_sector(zs)
        real_hint = (not np.iscomplexobj(f)) and self._real_op and np.allclose(zs.imag, 0) and np.allclose(cs.imag, 0)
        if self.method in ("fourier", "spectral"):
            lam = self.eigenvalues()

            def mult(l):
                out = np.zeros(l.shape, dtype=complex)
                for z, c in zip(zs, cs):
                    out += c * np.exp(-z * l)
                return out

            m = mult(lam.reshape(self._spectral_shape))
            return self.from_spectral(m * self.to_spectral(f), real_hint)
        if self.method == "expm":
            M = self.op.matrix.toarray()
            fv = f.reshape(-1)
            out = np.zeros(fv.shape, dtype=complex)
            for z, c in zip(zs, cs):
                out += c * (sla.expm(-z * M) @ fv)
            out = out.reshape(self.grid.shape)
            return np.real(out) if real_hint else out
        out = self._krylov_sum(zs, cs, f)
        return np.real(out) if real_hint else out

    def apply_gradient(self, z, f: np.ndarray) -> np.ndarray:
        """grad_h e^{-zL} f, shape (n, *grid)."""
        return self.grid.gradient(self.apply(z, f))

    # shift-and-invert Arnoldi ------------------------------------------------
    def _factor(self, gamma: float):
        lu = self._lu.get(gamma)
        if lu is None:
            M = sp.identity(self.grid.size, format="csc") + gamma * self.op.matrix.tocsc()
            lu = spla.splu(M.astype(complex) if np.iscomplexobj(self.op.matrix.data) else M)
            self._lu[gamma] = lu
        return lu

    @staticmethod
    def _solve(lu, v):
        if lu.L.dtype.kind == "c":
            return lu.solve(v)
        return lu.solve(np.ascontiguousarray(v.real)) + 1j * lu.solve(np.ascontiguousarray(v.imag))

    def _krylov_sum(self, zs, cs, f):
        fv = f.reshape(-1).astype(complex)
        beta = np.linalg.norm(fv)
        if beta == 0:
            return np.zeros(self.grid.shape, dtype=complex)
        # one real shift for the whole batch, snapped to a power of 2 so
        # factorizations are reused across calls
        scale = float(np.exp(np.mean(np.log(np.abs(zs)))))
        gamma = 2.0 ** round(math.log2(max(scale, 1e-300) / 4.0))
        lu = self._factor(gamma)
        m_max = min(self.krylov_maxdim, self.grid.size)
        V = np.zeros((m_max + 1, fv.size), dtype=complex)
        H = np.zeros((m_max + 1, m_max), dtype=complex)
        V[0] = fv / beta
        prev = None
        for m in range(1, m_max + 1):
            w = self._solve(lu, V[m - 1])
            for i in range(m):  # modified Gram-Schmidt, twice
                hij = np.vdot(V[i], w)
                H[i, m - 1] += hij
                w -= hij * V[i]
            for i in range(m):
                hij = np.vdot(V[i], w)
                H[i, m - 1] += hij
                w -= hij * V[i]
            H[m, m - 1] = np.linalg.norm(w)
            breakdown = abs(H[m, m - 1]) < 1e-14 * np.linalg.norm(H[: m + 1, m - 1])
            if not breakdown:
                V[m] = w / H[m, m - 1]
            if m % 4 and not breakdown and m < m_max:
                continue
            coef = self._small_coeffs(H[:m, :m], zs, cs, gamma)
            if coef is None:
                continue
            if breakdown:
                return (beta * (coef @ V[:m])).reshape(self.grid.shape)
            if prev is not None:
                diff = np.linalg.norm(coef[: prev.size] - prev) + np.linalg.norm(coef[prev.size:])
                if diff <= self.krylov_tol * np.linalg.norm(coef):
                    return (beta * (coef @ V[:m])).reshape(self.grid.shape)
            prev = coef
        raise KrylovError(
            f"shift-invert Arnoldi did not reach tolerance {self.krylov_tol:g} "
            f"within dimension {m_max}"
        )

    @staticmethod
    def _small_coeffs(Hm, zs, cs, gamma):
        """First column of sum_j c_j exp(-z_j (H^{-1} - I)/gamma)."""
        try:
            Hinv = np.linalg.inv(Hm)
        except np.linalg.LinAlgError:
            return None
        G = (Hinv - np.eye(Hm.shape[0])) / gamma
        evals, W = np.linalg.eig(G)
        cond = np.linalg.cond(W)
        e1 = np.zeros(Hm.shape[0], dtype=complex)
        e1[0] = 1.0
        if cond < 1e6:
            a = np.linalg.solve(W, e1)
            out = np.zeros_like(e1)
            for z, c in zip(zs, cs):
                out += c * (W @ (np.exp(-z * evals) * a))
            return out
        out = np.zeros_like(e1)
        for z, c in zip(zs, cs):
            out += c * sla.expm(-z * G)[:, 0]
        return out


def apply_semigroup(sg: SemigroupEvaluator, z, f: np.ndarray) -> np.ndarray:
    return sg.apply(z, f)


def apply_gradient_semigroup(sg: SemigroupEvaluator, z, f: np.ndarray) -> np.ndarray:
    return sg.apply_gradient(z, f)


def gradient_semigroup_norm(sg: SemigroupEvaluator, t: float, iters: int = 30, seed: int = 0) -> float:
    """||sqrt(t) grad e^{-tL}||_{2->2} by power iteration on the normal operator."""
    rng = np.random.default_rng(seed)
    grid = sg.grid
    f = rng.standard_normal(grid.shape)
    f -= f.mean()
    f /= np.linalg.norm(f)
    val = 0.0
    for _ in range(iters):
        g = math.sqrt(t) * sg.apply_gradient(t, f)
        # adjoint of grad is -div; adjoint of e^{-tL} is e^{-tL*} (L real symmetric here)
        back = sg.apply(t, -grid.divergence(g)) * math.sqrt(t)
        nrm = np.linalg.norm(back)
        if nrm == 0:
            return 0.0
        val = math.sqrt(np.real(np.vdot(f, back)))
        f = back / nrm
    return val
