"""Holomorphic functional calculus by contour quadrature.

phi(L) = int_{Gamma+} e^{-zL} eta_+(z) dz + int_{Gamma-} e^{-zL} eta_-(z) dz

with Gamma+- the rays R+ e^{+-i(pi/2 - theta)} and

eta_+-(z) = +-(1/2 pi i) int_{gamma+-} e^{zeta z} phi(zeta) dzeta,

gamma+- the rays R+ e^{+-i nu} traversed outward from 0.  Both ray integrals
use the trapezoid rule in log-radius, which converges geometrically because
the integrands are analytic in a strip around each ray and decay at both ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import comb, erfcx

from .semigroup import SemigroupEvaluator


class DecayError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass
class HoloSymbol:
    """phi on the sector Sigma_mu with declared decay order s."""

    func: Callable[[np.ndarray], np.ndarray]
    decay_s: float
    mu: float = math.pi / 2 - 0.05
    name: str = ""
    real: bool = True  # phi(conj z) = conj phi(z)

    def __call__(self, z):
        return self.func(np.asarray(z, dtype=complex))

    def __add__(self, other: "HoloSymbol") -> "HoloSymbol":
        return HoloSymbol(lambda z: self.func(z) + other.func(z), min(self.decay_s, other.decay_s),
                          min(self.mu, other.mu), f"({self.name})+({other.name})", self.real and other.real)

    def __mul__(self, other: "HoloSymbol") -> "HoloSymbol":
        return HoloSymbol(lambda z: self.func(z) * other.func(z), self.decay_s + other.decay_s,
                          min(self.mu, other.mu), f"({self.name})*({other.name})", self.real and other.real)

    def sample_rays(self, radii=None, fractions=(0.0, 0.5, 0.999)):
        if radii is None:
            radii = np.logspace(-6, 6, 121)
        zs = np.concatenate([radii * np.exp(1j * s * f * self.mu) for f in fractions for s in (1, -1)])
        return zs

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self(self.sample_rays()))))

    def decay_constant(self) -> float:
        """max |phi(z)| / (|z|^s (1+|z|)^{-2s}) on sampled rays; raises if the
        ratio is still climbing at either end of the sweep."""
        radii = np.logspace(-6, 6, 121)
        worst = None
        for f in (0.0, 0.5, 0.999):
            for s in (1, -1):
                z = radii * np.exp(1j * s * f * self.mu)
                bound = radii**self.decay_s * (1 + radii) ** (-2 * self.decay_s)
                ratio = np.abs(self(z)) / bound
                if not np.all(np.isfinite(ratio)):
                    raise DecayError(f"{self.name or 'symbol'} is not finite on the sector")
                lo_climb = ratio[0] > 1.5 * ratio[30] and ratio[0] > 1e-12
                hi_climb = ratio[-1] > 1.5 * ratio[-31] and ratio[-1] > 1e-12
                if lo_climb or hi_climb:
                    raise DecayError(
                        f"{self.name or 'symbol'} violates |phi(z)| <= c|z|^s(1+|z|)^(-2s) "
                        f"with s = {self.decay_s} (ratio still growing at |z| = "
                        f"{'1e-6' if lo_climb else '1e6'})"
                    )
                worst = float(np.max(ratio)) if worst is None else max(worst, float(np.max(ratio)))
        return worst


def symbol_corpus() -> dict[str, HoloSymbol]:
    """Decay-class symbols used by the checks."""
    return {
        "z/(1+z)^2": HoloSymbol(lambda z: z / (1 + z) ** 2, 1.0, name="z/(1+z)^2"),
        "z exp(-z)": HoloSymbol(lambda z: z * np.exp(-z), 1.0, name="z exp(-z)"),
        "z^2/(1+z)^4": HoloSymbol(lambda z: z**2 / (1 + z) ** 4, 2.0, name="z^2/(1+z)^4"),
    }


def extended_corpus() -> dict[str, HoloSymbol]:
    out = symbol_corpus()
    more = {
        "z/(1+z^2)": HoloSymbol(lambda z: z / (1 + z**2), 1.0, name="z/(1+z^2)"),
        "4z/(1+z)^2 - ...": HoloSymbol(lambda z: 4 * z / (2 + z) ** 2, 1.0, name="4z/(2+z)^2"),
        "z exp(-2z)": HoloSymbol(lambda z: z * np.exp(-2 * z), 1.0, name="z exp(-2z)"),
        "sqrt(z)/(1+z)": HoloSymbol(lambda z: np.sqrt(z) / (1 + z), 0.5, name="sqrt(z)/(1+z)"),
        "z/(1+z)^3": HoloSymbol(lambda z: z / (1 + z) ** 3, 1.0, name="z/(1+z)^3"),
        "z^3/(1+z)^6": HoloSymbol(lambda z: z**3 / (1 + z) ** 6, 3.0, name="z^3/(1+z)^6"),
        "(z exp(-z))^2": HoloSymbol(lambda z: (z * np.exp(-z)) ** 2, 2.0, name="(z exp(-z))^2"),
    }
    out.update(more)
    return out


# ---------------------------------------------------------------------------
# contour


@dataclass(frozen=True)
class Contour:
    theta: float
    nu: float
    mu: float
    rho_min: float
    rho_max: float
    nodes_per_decade: int = 40
    sigma_min: float = 1e-10
    sigma_max: float | None = None

    def __post_init__(self):
        if not (0 <= self.theta < self.nu < self.mu < math.pi / 2):
            raise ValueError("need 0 <= theta < nu < mu < pi/2")
        if not (0 < self.rho_min < self.rho_max):
            raise ValueError("bad truncation")

    @property
    def sigma_hi(self) -> float:
        if self.sigma_max is not None:
            return self.sigma_max
        # beyond this |zeta| the factor e^{zeta z} is below e^{-50} at every z node
        return 50.0 / (self.rho_min * math.sin(self.nu - self.theta))

    @staticmethod
    def _log_nodes(lo: float, hi: float, per_decade: int):
        du = math.log(10.0) / per_decade
        k = math.ceil(math.log(hi / lo) / du)
        u = math.log(lo) + du * np.arange(k + 1)
        return np.exp(u), du

    def big_gamma(self, sign: int):
        """Nodes z and weights dz on Gamma_sign (outward)."""
        rho, du = self._log_nodes(self.rho_min, self.rho_max, self.nodes_per_decade)
        e = np.exp(1j * sign * (math.pi / 2 - self.theta))
        return rho * e, rho * e * du

    def small_gamma(self, sign: int):
        """Nodes zeta and weights dzeta on gamma_sign (outward)."""
        sig, du = self._log_nodes(self.sigma_min, self.sigma_hi, self.nodes_per_decade)
        e = np.exp(1j * sign * self.nu)
        return sig * e, sig * e * du

    def refined(self, factor: int = 2) -> "Contour":
        return Contour(self.theta, self.nu, self.mu, self.rho_min, self.rho_max,
                       self.nodes_per_decade * factor, self.sigma_min, self.sigma_max)

    def with_density(self, npd: int) -> "Contour":
        return Contour(self.theta, self.nu, self.mu, self.rho_min, self.rho_max, npd,
                       self.sigma_min, self.sigma_max)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta, "nu": self.nu, "mu": self.mu,
            "rho_min": self.rho_min, "rho_max": self.rho_max,
            "nodes_per_decade": self.nodes_per_decade,
        }


def default_contour(
    op_theta: float,
    spectrum: tuple[float, float],
    mu: float = math.pi / 2 - 0.05,
    nodes_per_decade: int = 40,
) -> Contour:
    """theta = (mu - vartheta)/4 + vartheta, nu = (theta + mu)/2.

    Truncation is set from the extreme eigenvalue moduli so the neglected
    pieces of the Gamma integral are below 1e-8: rho_min = 1e-8/lam_max and
    rho_max large enough that e^{-rho lam_min sin theta} < e^{-30}.
    """
    if not op_theta < mu:
        raise ValueError("symbol sector must be wider than the operator angle")
    lam_min, lam_max = spectrum
    theta = (mu - op_theta) / 4 + op_theta
    nu = (theta + mu) / 2
    rho_min = 1e-8 / lam_max
    rho_max = max(1e2 / lam_min, 30.0 / (lam_min * math.sin(theta)))
    return Contour(theta, nu, mu, rho_min, rho_max, nodes_per_decade)


def contour_for(sg: SemigroupEvaluator, phi: HoloSymbol, nodes_per_decade: int = 40) -> Contour:
    mu = min(phi.mu, sg.mu + sg.theta)  # keep Gamma inside the semigroup sector
    return default_contour(sg.theta, sg.op.spectral_bounds(), mu, nodes_per_decade)


# ---------------------------------------------------------------------------
# eta kernels


def _eta_raw(phi: HoloSymbol, ctr: Contour, z: np.ndarray, sign: int, stride: int = 1) -> np.ndarray:
    zeta, dzeta = ctr.small_gamma(sign)
    zeta, dzeta = zeta[::stride], dzeta[::stride] * stride
    vals = phi(zeta) * dzeta
    out = np.empty(z.shape, dtype=complex)
    chunk = max(1, 2_000_000 // max(1, zeta.size))
    for i in range(0, z.size, chunk):
        zz = z.reshape(-1)[i:i + chunk]
        E = np.exp(np.outer(zz, zeta))
        out.reshape(-1)[i:i + chunk] = E @ vals
    return sign * out / (2j * math.pi)


def eta_kernel(phi: HoloSymbol, ctr: Contour, z, sign: int | None = None, check: bool = True):
    """eta_+- at points z of Gamma_+- (sign inferred from Im z when omitted).

    With ``check`` the value is compared against the half-density rule; a
    disagreement beyond 1e-8 (relative to the kernel scale) raises.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if sign is None:
        signs = np.where(z.imag >= 0, 1, -1)
    else:
        signs = np.full(z.shape, sign)
    out = np.empty(z.shape, dtype=complex)
    for s in (1, -1):
        sel = signs == s
        if not np.any(sel):
            continue
        fine = _eta_raw(phi, ctr, z[sel], s)
        if check:
            coarse = _eta_raw(phi, ctr, z[sel], s, stride=2)
            tail = np.max(np.abs(fine - coarse))
            scale = max(np.max(np.abs(fine)), 1e-300)
            if tail > 1e-8 * scale:
                raise QuadratureError(
                    f"eta quadrature not converged: two-level difference {tail:.3g} "
                    f"(kernel scale {scale:.3g})"
                )
        out[sel] = fine
    return out


@dataclass
class EtaTable:
    """eta_+- tabulated on the Gamma_+- nodes of one contour."""

    phi: HoloSymbol
    ctr: Contour
    z: np.ndarray
    weights: np.ndarray  # eta(z) dz

    @classmethod
    def build(cls, phi: HoloSymbol, ctr: Contour) -> "EtaTable":
        zs, ws = [], []
        for s in (1, -1):
            z, dz = ctr.big_gamma(s)
            eta = _eta_raw(phi, ctr, z, s)
            zs.append(z)
            ws.append(eta * dz)
        return cls(phi, ctr, np.concatenate(zs), np.concatenate(ws))

    def scalar(self, lam) -> np.ndarray:
        """The scalar function the table realizes, evaluated at lam."""
        lam = np.asarray(lam, dtype=complex)
        return np.exp(-np.multiply.outer(lam, self.z)) @ self.weights


# ---------------------------------------------------------------------------
# operator actions


def holo_calc(sg: SemigroupEvaluator, phi: HoloSymbol, ctr: Contour | None = None, f=None,
              table: EtaTable | None = None, check_decay: bool = True) -> np.ndarray:
    """phi(L) f by contour quadrature of semigroup actions."""
    if check_decay:
        phi.decay_constant()
    if ctr is None:
        ctr = contour_for(sg, phi)
    if ctr.theta <= sg.theta:
        raise ValueError(f"contour angle theta={ctr.theta:.4f} must exceed operator angle {sg.theta:.4f}")
    if table is None or table.ctr != ctr:
        table = EtaTable.build(phi, ctr)
    mean = f.mean()
    f0 = f - mean  # L kills constants and phi(0) = 0 in the decay class
    out = sg.apply_sum(table.z, table.weights, f0)
    if phi.real and not np.iscomplexobj(f) and not np.iscomplexobj(sg.op.coeffs.A):
        out = np.real(out)
    return out


def holo_spectral(sg: SemigroupEvaluator, phi: HoloSymbol, f: np.ndarray) -> np.ndarray:
    """phi applied to the eigenvalues (oracle)."""
    out = sg.apply_multiplier(lambda lam: phi(lam), f)
    if phi.real and not np.iscomplexobj(f) and not np.iscomplexobj(sg.op.coeffs.A):
        out = np.real(out)
    return out


def approximation_family(sg: SemigroupEvaluator, r: float, m: int, f: np.ndarray) -> np.ndarray:
    """A_r f = (I - (I - e^{-r^2 L})^m) f = sum_{k=1}^m (-1)^{k+1} C(m,k) e^{-k r^2 L} f."""
    if r <= 0 or m < 1:
        raise ValueError("need r > 0 and m >= 1")
    zs = [k * r * r for k in range(1, m + 1)]
    cs = [(-1) ** (k + 1) * comb(m, k, exact=True) for k in range(1, m + 1)]
    return sg.apply_sum(zs, cs, f)


def approximation_multiplier(r: float, m: int):
    return lambda lam: 1 - (1 - np.exp(-r * r * lam)) ** m


# ---------------------------------------------------------------------------
# psi kernel

PSI_C = 1.0 / math.sqrt(math.pi)


def psi_kernel(z):
    """psi(z) = c int_1^inf z e^{-tz} dt/sqrt(t) with c = 1/sqrt(pi).

    Closed form sqrt(z) erfc(sqrt(z)), evaluated as sqrt(z) erfcx(sqrt(z)) e^{-z}
    to stay accurate for large |z|.
    """
    z = np.asarray(z, dtype=complex)
    w = np.sqrt(z)
    return w * erfcx(w) * np.exp(-z)


def psi_kernel_quadrature(z, nodes: int = 4000, t_max_factor: float = 60.0):
    """Direct quadrature of the defining integral (t = 1 + s^2 substitution)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape, dtype=complex)
    for i, zz in enumerate(z):
        smax = math.sqrt(t_max_factor / max(zz.real, 1e-12))
        s, ds = np.linspace(0.0, smax, nodes, retstep=True)
        t = 1.0 + s * s
        integrand = zz * np.exp(-t * zz) * 2 * s / np.sqrt(t)
        out[i] = PSI_C * (np.sum(integrand) - 0.5 * (integrand[0] + integrand[-1])) * ds
    return out


def psi_asymptotic(z):
    """c e^{-z} (1 - 1/(2z) + 3/(4z^2)) for large real z."""
    z = np.asarray(z, dtype=complex)
    return PSI_C * np.exp(-z) * (1 - 1 / (2 * z) + 3 / (4 * z * z))
