"""Riesz transform, square root, square functions, T_L and commutators.

Time integrals use the trapezoid rule in log t on [eps, T]:

    S f = (1/sqrt(pi)) int_0^inf e^{-tL} f dt/sqrt(t)  ~  L^{-1/2} f

The nodes are a uniform grid in u = log t with full weights, i.e. a piece of
the bi-infinite trapezoid rule, which is spectrally accurate for these
integrands.  For S the nodes below eps are not dropped: their sum is computed
from the first-order expansion e^{-t lam} ~ 1 - t lam, which leaves an error of
order (eps lam_max)^{5/2}.

For large self-adjoint operators without a diagonalizing path, L^{-1/2} is
computed by :class:`RootSolver`, a sum of shifted solves at nodes given by
Jacobi elliptic functions; its error decays like exp(-c N / log kappa) in the
number N of shifts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import comb, ellipj, ellipk

from .semigroup import SemigroupEvaluator

SQRT_PI = math.sqrt(math.pi)


class ConstantModeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TimeQuadrature:
    eps: float
    T: float = 16.0
    nodes_per_decade: int = 24

    def __post_init__(self):
        if not (0 < self.eps < self.T):
            raise ValueError("need 0 < eps < T")

    @classmethod
    def default(cls, grid, nodes_per_decade: int = 24) -> "TimeQuadrature":
        return cls(grid.h**2 * 1e-6, 16.0, nodes_per_decade)

    @property
    def step(self) -> float:
        return math.log(10.0) / self.nodes_per_decade

    def nodes(self):
        """t_k = eps e^{k du} up to T, with weights du."""
        du = self.step
        k = max(2, math.ceil(math.log(self.T / self.eps) / du))
        t = self.eps * np.exp(du * np.arange(k + 1))
        return t, np.full(t.size, du)

    def lower_tail(self, power: float) -> float:
        """du * sum_{j>=1} (eps e^{-j du})^power: the trapezoid nodes below eps."""
        q = math.exp(-power * self.step)
        return self.step * self.eps**power * q / (1.0 - q)

    @property
    def size(self) -> int:
        return self.nodes()[0].size

    def refined(self) -> "TimeQuadrature":
        return TimeQuadrature(self.eps, self.T, 2 * self.nodes_per_decade)

    def widened(self) -> "TimeQuadrature":
        return TimeQuadrature(self.eps / 2, self.T, self.nodes_per_decade)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "T": self.T, "nodes": self.size, "nodes_per_decade": self.nodes_per_decade}


def project_mean_zero(f: np.ndarray, warn: bool = True) -> tuple[np.ndarray, complex]:
    mean = f.mean()
    if warn and abs(mean) > 1e-12 * max(1.0, float(np.max(np.abs(f)))):
        warnings.warn(f"constant mode {mean:.3g} projected out", ConstantModeWarning, stacklevel=3)
    return f - mean, mean


# ---------------------------------------------------------------------------
# L^{-1/2} by shifted solves


class RootSolver:
    """L^{-1/2} on mean-zero fields for self-adjoint L via elliptic-node shifts.

    L^{-1/2} = (2/pi) int_0^inf (s^2 + L)^{-1} ds; the substitution
    s = sqrt(m) sc(u | 1 - m/M) and the midpoint rule on (0, K) give
    sum_j w_j (m sc_j^2 + L)^{-1} with w_j = 2 K sqrt(m) dn_j / (pi N cn_j^2).
    """

    def __init__(self, op, shifts: int = 16, bounds: tuple[float, float] | None = None):
        if not op.is_hermitian:
            raise ValueError("RootSolver needs a self-adjoint operator")
        self.op = op
        self.shifts = shifts
        lo, hi = bounds if bounds is not None else op.spectral_bounds()
        self.bounds = (lo, hi)
        kp2 = 1.0 - lo / hi
        K = ellipk(kp2)
        u = (np.arange(shifts) + 0.5) * K / shifts
        sn, cn, dn, _ = ellipj(u, kp2)
        self.sigma = lo * (sn / cn) ** 2
        self.weights = 2.0 * K * math.sqrt(lo) / (math.pi * shifts) * dn / cn**2
        self._lu = None

    def _factors(self):
        if self._lu is None:
            M = self.op.matrix.tocsc()
            eye = sp.identity(M.shape[0], format="csc")
            self._lu = [spla.splu((s * eye + M).tocsc(), permc_spec="MMD_AT_PLUS_A") for s in self.sigma]
        return self._lu

    def scalar(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.sum(self.weights / (self.sigma + lam[..., None]), axis=-1)

    def inv_sqrt(self, f: np.ndarray) -> np.ndarray:
        f0 = f - f.mean()
        v = f0.reshape(-1)
        out = np.zeros(v.shape, dtype=np.result_type(v.dtype, float))
        for w, lu in zip(self.weights, self._factors()):
            if np.iscomplexobj(v):
                out = out + w * (lu.solve(np.ascontiguousarray(v.real)) + 1j * lu.solve(np.ascontiguousarray(v.imag)))
            else:
                out = out + w * lu.solve(np.ascontiguousarray(v))
        out = out.reshape(f.shape)
        return out - out.mean()

    def sqrt(self, f: np.ndarray) -> np.ndarray:
        return self.op.apply(self.inv_sqrt(f))


# ---------------------------------------------------------------------------
# S_eps and friends


def _s_eps_spectral(sg: SemigroupEvaluator, tq: TimeQuadrature):
    t, w = tq.nodes()
    cs = w * np.sqrt(t) / SQRT_PI  # dt/sqrt(t) = sqrt(t) du
    a, b = tq.lower_tail(0.5) / SQRT_PI, tq.lower_tail(1.5) / SQRT_PI

    def mult(lam):
        out = np.zeros(lam.shape, dtype=complex)
        for tk, ck in zip(t, cs):
            out += ck * np.exp(-tk * lam)
        out += a - b * lam
        return out

    return mult


def s_eps(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature) -> np.ndarray:
    """Truncated resolution of L^{-1/2} with the small-t Taylor correction."""
    if sg.method in ("fourier", "spectral"):
        mult = _s_eps_spectral(sg, tq)
        return sg.apply_multiplier(mult, f) if np.iscomplexobj(f) else np.real(sg.apply_multiplier(mult, f))
    t, w = tq.nodes()
    out = sg.apply_sum(t, w * np.sqrt(t) / SQRT_PI, f)
    a, b = tq.lower_tail(0.5) / SQRT_PI, tq.lower_tail(1.5) / SQRT_PI
    return out + a * f - b * sg.op.apply(f)


@dataclass
class SingularResult:
    value: np.ndarray
    constant_mode: complex
    meta: dict


def _use_root(sg, method):
    if method == "root":
        return True
    if method == "time":
        return False
    return sg.method not in ("fourier", "spectral") and sg.op.is_hermitian


def inv_sqrt_apply(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature | None = None,
                   method: str = "auto", root: RootSolver | None = None) -> SingularResult:
    f0, mean = project_mean_zero(f)
    if _use_root(sg, method):
        root = root or RootSolver(sg.op)
        return SingularResult(root.inv_sqrt(f0), mean, {"method": "root", "shifts": root.shifts})
    tq = tq or TimeQuadrature.default(sg.grid)
    u = s_eps(sg, f0, tq)
    return SingularResult(u - u.mean(), mean, {"method": "time", **tq.to_dict()})


def riesz_apply(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature | None = None,
                method: str = "auto", root: RootSolver | None = None) -> SingularResult:
    """grad L^{-1/2} f (constant mode projected out)."""
    r = inv_sqrt_apply(sg, f, tq, method, root)
    return SingularResult(sg.grid.gradient(r.value), r.constant_mode, r.meta)


def sqrt_apply(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature | None = None,
               method: str = "auto", root: RootSolver | None = None) -> SingularResult:
    """L^{1/2} f = L S f."""
    r = inv_sqrt_apply(sg, f, tq, method, root)
    return SingularResult(sg.op.apply(r.value), r.constant_mode, r.meta)


def riesz_spectral(sg: SemigroupEvaluator, f: np.ndarray) -> np.ndarray:
    """Oracle: grad applied to lam^{-1/2} on each nonzero eigenmode."""
    def mult(lam):
        out = np.zeros(lam.shape, dtype=complex)
        nz = np.abs(lam) > 1e-9
        out[nz] = 1.0 / np.sqrt(lam[nz])
        return out

    u = sg.apply_multiplier(mult, f)
    if not np.iscomplexobj(f):
        u = np.real(u)
    return sg.grid.gradient(u)


def fourier_riesz_multiplier(grid, f: np.ndarray) -> np.ndarray:
    """(sym_grad(k)/sqrt(sym(k))) f_hat(k), the discrete Riesz multiplier of -Delta."""
    s = grid.gradient_symbol()
    lam = grid.laplacian_symbol()
    nz = lam > 0
    fh = np.fft.fftn(f)
    out = []
    for d in range(grid.n):
        m = np.zeros(grid.shape, dtype=complex)
        m[nz] = s[d][nz] / np.sqrt(lam[nz])
        v = np.fft.ifftn(m * fh)
        out.append(np.real(v) if not np.iscomplexobj(f) else v)
    return np.stack(out)


def kato_defect(sg: SemigroupEvaluator, f: np.ndarray, **kw) -> float:
    """|<A grad L^{-1/2} f, grad L^{-1/2} f> - ||f0||^2| / ||f0||^2."""
    r = inv_sqrt_apply(sg, f, **kw)
    f0 = f - f.mean()
    e = sg.op.energy(r.value)
    return float(abs(e - np.vdot(f0, f0) * sg.grid.cell_volume) / (np.vdot(f0, f0).real * sg.grid.cell_volume))


# ---------------------------------------------------------------------------
# square functions


@dataclass
class SquareFunctionResult:
    value: np.ndarray
    tail: np.ndarray
    flagged: bool
    meta: dict


def _vertical_terms(sg, f, tq):
    """Yield (t_k, du_k, (t_k L)^{1/2} e^{-t_k L} f)."""
    t, w = tq.nodes()
    if sg.method in ("fourier", "spectral"):
        fh = sg.to_spectral(f)
        lam = sg.eigenvalues().reshape(fh.shape)
        sq = np.sqrt(lam + 0j)
        for tk, wk in zip(t, w):
            v = sg.from_spectral(np.sqrt(tk) * sq * np.exp(-tk * lam) * fh, not np.iscomplexobj(f))
            yield tk, wk, v
        return
    half = sqrt_apply(sg, f, tq).value
    for tk, wk in zip(t, w):
        yield tk, wk, math.sqrt(tk) * sg.apply(tk, half)


def g_function(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature | None = None) -> SquareFunctionResult:
    """g_L f(x) = (int_0^inf |(tL)^{1/2} e^{-tL} f(x)|^2 dt/t)^{1/2}."""
    tq = tq or TimeQuadrature.default(sg.grid)
    acc = np.zeros(sg.grid.shape)
    first = last = None
    for tk, wk, v in _vertical_terms(sg, f, tq):
        a = np.abs(v) ** 2
        acc += wk * a
        if first is None:
            first = a
        last = a
    # integrand ~ t near 0 and decays exponentially past T: end values bound the tails
    tail = first + last
    val = np.sqrt(acc)
    flagged = bool(np.sum(tail) > 0.01 * max(np.sum(acc), 1e-300))
    return SquareFunctionResult(val, tail, flagged, tq.to_dict())


def big_g_function(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature | None = None) -> SquareFunctionResult:
    """G_L f(x) = (int_0^inf |grad e^{-tL} f(x)|^2 dt)^{1/2}."""
    tq = tq or TimeQuadrature.default(sg.grid)
    t, w = tq.nodes()
    acc = np.zeros(sg.grid.shape)
    if sg.method in ("fourier", "spectral"):
        fh = sg.to_spectral(f)
        lam = sg.eigenvalues().reshape(fh.shape)
        terms = ((tk, wk, sg.from_spectral(np.exp(-tk * lam) * fh, not np.iscomplexobj(f))) for tk, wk in zip(t, w))
    else:
        terms = ((tk, wk, sg.apply(tk, f)) for tk, wk in zip(t, w))
    first = last = None
    for tk, wk, u in terms:
        g = sg.grid.gradient(u)
        a = np.sum(np.abs(g) ** 2, axis=0)
        acc += wk * tk * a  # dt = t du
        if first is None:
            first = a * tq.eps
        last = a * tk
    tail = first + last
    flagged = bool(np.sum(tail) > 0.01 * max(np.sum(acc), 1e-300))
    return SquareFunctionResult(np.sqrt(acc), tail, flagged, tq.to_dict())


def vertical_family(sg: SemigroupEvaluator, f: np.ndarray, tq: TimeQuadrature) -> np.ndarray:
    """F(., t_k) = (t_k L)^{1/2} e^{-t_k L} f stacked on the tq nodes."""
    return np.stack([v for _, _, v in _vertical_terms(sg, f, tq)])


def h_norm(F: np.ndarray, tq: TimeQuadrature) -> np.ndarray:
    """Pointwise L^2((0, inf), dt/t) norm of a family given on the tq nodes."""
    _, w = tq.nodes()
    return np.sqrt(np.tensordot(w, np.abs(F) ** 2, axes=1))


def t_l_operator(sg: SemigroupEvaluator, F: np.ndarray, tq: TimeQuadrature | None = None) -> np.ndarray:
    """T_L F = int_0^inf (tL)^{1/2} e^{-tL} F(., t) dt/t."""
    tq = tq or TimeQuadrature.default(sg.grid)
    t, w = tq.nodes()
    if F.shape[0] != t.size:
        raise ValueError("F must be sampled on the quadrature nodes")
    real = not np.iscomplexobj(F)
    if sg.method in ("fourier", "spectral"):
        lam = None
        acc = None
        for tk, wk, Fk in zip(t, w, F):
            fh = sg.to_spectral(Fk)
            if lam is None:
                lam = sg.eigenvalues().reshape(fh.shape)
                sq = np.sqrt(lam + 0j)
                acc = np.zeros(fh.shape, dtype=complex)
            acc += wk * np.sqrt(tk) * sq * np.exp(-tk * lam) * fh
        return sg.from_spectral(acc, real)
    out = np.zeros(sg.grid.shape, dtype=complex)
    for tk, wk, Fk in zip(t, w, F):
        out += wk * math.sqrt(tk) * sqrt_apply(sg, sg.apply(tk, Fk), tq).value
    return np.real(out) if real else out


# ---------------------------------------------------------------------------
# commutators


def commutator(T: Callable[[np.ndarray], np.ndarray], b: np.ndarray, k: int, f: np.ndarray) -> np.ndarray:
    """T_b^k f(x) = T((b(x) - b)^k f)(x), expanded binomially."""
    if k < 0:
        raise ValueError("commutator order must be >= 0")
    if k == 0:
        return T(f)
    out = None
    bj_f = f
    for j in range(k + 1):
        term = comb(k, j, exact=True) * (-1) ** j * b ** (k - j) * T(bj_f)
        out = term if out is None else out + term
        bj_f = b * bj_f
    return out


def commutator_recursive(T: Callable[[np.ndarray], np.ndarray], b: np.ndarray, k: int, f: np.ndarray) -> np.ndarray:
    """T_b^k f = b T_b^{k-1} f - T_b^{k-1}(b f)."""
    if k < 0:
        raise ValueError("commutator order must be >= 0")
    if k == 0:
        return T(f)
    return b * commutator_recursive(T, b, k - 1, f) - commutator_recursive(T, b, k - 1, b * f)
