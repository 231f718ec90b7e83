"""Exact arithmetic on Lebesgue exponents and weight-class indices.

Finite exponents are stored as :class:`fractions.Fraction` so identities such
as ``(p_{w,*})_w^* == p`` hold exactly.  Infinity is the distinguished value
:data:`INF`, never a float overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Union

Number = Union[int, float, Fraction, str, "Ext"]


class Ext:
    """Extended rational: a Fraction or positive infinity."""

    __slots__ = ("_v",)

    def __init__(self, value: Number):
        if isinstance(value, Ext):
            self._v = value._v
            return
        if isinstance(value, str):
            s = value.strip().lower()
            if s in ("inf", "infinity", "+inf", "oo"):
                self._v = None
                return
            value = Fraction(s)
        if isinstance(value, float):
            if math.isnan(value):
                raise ValueError("NaN is not an exponent")
            if math.isinf(value):
                if value < 0:
                    raise ValueError("-inf is not representable")
                self._v = None
                return
        self._v = Fraction(value)

    @property
    def is_inf(self) -> bool:
        return self._v is None

    @property
    def fraction(self) -> Fraction:
        if self._v is None:
            raise ValueError("infinite value has no fraction")
        return self._v

    def __float__(self) -> float:
        return math.inf if self._v is None else float(self._v)

    def __repr__(self) -> str:
        return "Ext(inf)" if self._v is None else f"Ext({self._v})"

    def __str__(self) -> str:
        return "inf" if self._v is None else str(self._v)

    def __hash__(self) -> int:
        return hash(("Ext", self._v))

    # comparisons ---------------------------------------------------------
    def _cmp(self, other) -> int:
        o = ext(other)
        if self._v is None and o._v is None:
            return 0
        if self._v is None:
            return 1
        if o._v is None:
            return -1
        return (self._v > o._v) - (self._v < o._v)

    def __eq__(self, other) -> bool:
        try:
            return self._cmp(other) == 0
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other) -> bool:
        return self._cmp(other) < 0

    def __le__(self, other) -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other) -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other) -> bool:
        return self._cmp(other) >= 0

    # arithmetic ----------------------------------------------------------
    def __add__(self, other) -> "Ext":
        o = ext(other)
        if self._v is None or o._v is None:
            return INF
        return Ext(self._v + o._v)

    __radd__ = __add__

    def __sub__(self, other) -> "Ext":
        o = ext(other)
        if o._v is None:
            raise ValueError("subtracting infinity is undefined here")
        if self._v is None:
            return INF
        return Ext(self._v - o._v)

    def __rsub__(self, other) -> "Ext":
        return ext(other) - self

    def __mul__(self, other) -> "Ext":
        o = ext(other)
        if self._v is None or o._v is None:
            finite = o._v if self._v is None else self._v
            if finite is not None and finite <= 0:
                raise ValueError("inf times a non-positive value is undefined")
            return INF
        return Ext(self._v * o._v)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Ext":
        o = ext(other)
        if o._v is None:
            if self._v is None:
                raise ValueError("inf/inf is undefined")
            return Ext(0)
        if o._v == 0:
            raise ZeroDivisionError("division by zero exponent")
        if self._v is None:
            if o._v < 0:
                raise ValueError("inf divided by a negative value")
            return INF
        return Ext(self._v / o._v)

    def __rtruediv__(self, other) -> "Ext":
        return ext(other) / self


INF = Ext("inf")
ONE = Ext(1)


def ext(x: Number) -> Ext:
    return x if isinstance(x, Ext) else Ext(x)


def conjugate(p: Number) -> Ext:
    """Hölder conjugate with conjugate(1) = inf and conjugate(inf) = 1."""
    p = ext(p)
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if p.is_inf:
        return ONE
    if p == 1:
        return INF
    return p / (p - 1)


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class WeightIndices:
    r_w: Ext
    s_w: Ext
    doubling_order: float
    source: str = "analytic"
    r_bracket: tuple[Ext, Ext] | None = None
    s_bracket: tuple[Ext, Ext] | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "r_w", ext(self.r_w))
        object.__setattr__(self, "s_w", ext(self.s_w))
        if self.r_w < 1:
            raise ValueError("r_w must be >= 1")
        if self.s_w <= 1:
            raise ValueError("s_w must be > 1")
        if self.doubling_order < 0:
            raise ValueError("doubling order must be >= 0")
        if self.source not in ("analytic", "estimated"):
            raise ValueError(f"unknown source {self.source!r}")

    def to_dict(self) -> dict:
        out = {
            "r_w": str(self.r_w),
            "s_w": str(self.s_w),
            "doubling_order": self.doubling_order,
            "source": self.source,
        }
        if self.r_bracket is not None:
            out["r_w_bracket"] = [str(v) for v in self.r_bracket]
        if self.s_bracket is not None:
            out["s_w_bracket"] = [str(v) for v in self.s_bracket]
        if self.flags:
            out["flags"] = list(self.flags)
        return out


def unit_weight_indices(n: int) -> WeightIndices:
    return WeightIndices(ONE, INF, float(n), "analytic")


def power_weight_indices(alpha: Number, n: int) -> WeightIndices:
    """Indices of |x|^alpha on R^n (requires alpha > -n)."""
    a = alpha.fraction if isinstance(alpha, Ext) else Fraction(str(alpha))
    if a <= -n:
        raise ValueError("|x|^alpha is not locally integrable for alpha <= -n")
    r_w = Ext(1 + max(a, 0) / n)
    s_w = INF if a >= 0 else Ext(Fraction(n) / (-a))
    return WeightIndices(r_w, s_w, float(n + max(a, 0)), "analytic")


@dataclass(frozen=True)
class ExponentRange:
    lo: Ext
    hi: Ext
    open_ends: tuple[bool, bool] = (True, True)
    provenance: str = "certified"
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lo", ext(self.lo))
        object.__setattr__(self, "hi", ext(self.hi))
        if self.provenance not in ("certified", "probed", "declared"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "certified" and self.open_ends != (True, True):
            raise ValueError("certified ranges are open intervals")

    @property
    def empty(self) -> bool:
        return self.lo >= self.hi

    def __contains__(self, p) -> bool:
        if self.empty:
            return False
        p = ext(p)
        lo_ok = p > self.lo if self.open_ends[0] else p >= self.lo
        hi_ok = p < self.hi if self.open_ends[1] else p <= self.hi
        return lo_ok and hi_ok

    def to_dict(self) -> dict:
        return {
            "lo": str(self.lo),
            "hi": str(self.hi),
            "open": list(self.open_ends),
            "empty": self.empty,
            "provenance": self.provenance,
            "note": self.note,
        }


@dataclass(frozen=True)
class CriticalExponents:
    p_minus: Ext
    p_plus: Ext
    q_minus: Ext
    q_plus: Ext
    n: int | None = None

    def __post_init__(self):
        for name in ("p_minus", "p_plus", "q_minus", "q_plus"):
            v = ext(getattr(self, name))
            if v < 1:
                raise ValueError(f"{name} must be >= 1")
            object.__setattr__(self, name, v)
        if self.p_minus != self.q_minus:
            raise ValueError("p_minus must equal q_minus")
        if self.q_plus > self.p_plus:
            raise ValueError("q_plus must not exceed p_plus")
        if self.n is not None and self.n >= 2:
            if not (self.p_minus < 2 < self.q_plus):
                raise ValueError("for n >= 2 need p_minus < 2 < q_plus")

    @classmethod
    def real_coefficients(cls, n: int, q_plus: Number = INF) -> "CriticalExponents":
        """Real operators: J(L) = [1, inf]; in 1-D also K(L) = [1, inf]."""
        if n == 1:
            return cls(ONE, INF, ONE, INF, n)
        return cls(ONE, INF, ONE, ext(q_plus), n)

    def to_dict(self) -> dict:
        return {k: str(getattr(self, k)) for k in ("p_minus", "p_plus", "q_minus", "q_plus")}


# ---------------------------------------------------------------------------
# operations


def ww_interval(idx: WeightIndices, p0: Number, q0: Number) -> ExponentRange:
    """The open interval (p0 r_w, q0 / (s_w)') of admissible exponents."""
    p0, q0 = ext(p0), ext(q0)
    if not p0 < q0:
        raise ValueError("need p0 < q0")
    lo = p0 * idx.r_w
    hi = q0 / conjugate(idx.s_w)
    return ExponentRange(lo, hi, (True, True), "certified")


def compatibility(idx: WeightIndices, ce: CriticalExponents, kind: str) -> bool:
    """p+/p- (kind 'J') or q+/q- (kind 'K') must exceed r_w (s_w)'."""
    if kind == "J":
        lo, hi = ce.p_minus, ce.p_plus
    elif kind == "K":
        lo, hi = ce.q_minus, ce.q_plus
    else:
        raise ValueError("kind must be 'J' or 'K'")
    threshold = idx.r_w * conjugate(idx.s_w)
    if hi.is_inf:
        return not threshold.is_inf
    return hi / lo > threshold


def sobolev_exponents(p: Number, idx: WeightIndices, n: int) -> tuple[Ext, Ext]:
    """Return (p_{w,*}, p_w^*); the upper one is inf once p >= n r_w."""
    p = ext(p)
    if p.is_inf or p <= 0:
        raise ValueError("p must be finite and positive")
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if idx.r_w.is_inf:
        raise ValueError("r_w must be finite")
    nr = idx.r_w * n
    lower = nr * p / (nr + p)
    upper = INF if p >= nr else nr * p / (nr - p)
    return lower, upper


@dataclass
class RangeReport:
    ranges: dict[str, ExponentRange] = field(default_factory=dict)
    violations: dict[str, str] = field(default_factory=dict)
    label: str = "certified subset"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "ranges": {k: v.to_dict() for k, v in self.ranges.items()},
            "violations": dict(self.violations),
        }


def _maybe_ww(idx, lo, hi, ok, why) -> tuple[ExponentRange, str | None]:
    if not ok:
        return ExponentRange(ONE, ONE, (True, True), "certified", note=why), why
    return ww_interval(idx, lo, hi), None


def predicted_ranges(ce: CriticalExponents, idx: WeightIndices, n: int) -> RangeReport:
    """Certified inner ranges for each boundedness result.

    The maximal intervals Int J_w(L), Int K_w(L) are unknown, so their
    endpoints are replaced by those of W_w(p-, p+) and W_w(q-, q+).  That
    substitution can only shrink a range.
    """
    rep = RangeReport()
    j_ok = compatibility(idx, ce, "J")
    k_ok = compatibility(idx, ce, "K")
    why_j = "p+/p- <= r_w (s_w)'" if not j_ok else ""
    why_k = "q+/q- <= r_w (s_w)'" if not k_ok else ""
    wj, vj = _maybe_ww(idx, ce.p_minus, ce.p_plus, j_ok, why_j)
    wk, vk = _maybe_ww(idx, ce.q_minus, ce.q_plus, k_ok, why_k)

    rep.ranges["functional_calculus"] = wj
    rep.ranges["riesz"] = wk
    rep.ranges["g_function"] = wj
    rep.ranges["G_function"] = wk
    rep.ranges["reverse_g_function"] = wj
    rep.ranges["reverse_G_function"] = ExponentRange(idx.r_w, INF, (True, True), "certified")
    if j_ok:
        lower_star, _ = sobolev_exponents(wj.lo, idx, n) if not wj.lo.is_inf else (INF, INF)
        lo = max(idx.r_w, lower_star)
        rep.ranges["reverse_square_root"] = ExponentRange(lo, wj.hi, (True, True), "certified")
    else:
        rep.ranges["reverse_square_root"] = ExponentRange(ONE, ONE, note=why_j)
    rep.ranges["commutator_functional_calculus"] = wj
    rep.ranges["commutator_riesz"] = wk
    for key in ("functional_calculus", "g_function", "reverse_g_function",
                "reverse_square_root", "commutator_functional_calculus"):
        if vj:
            rep.violations[key] = vj
    for key in ("riesz", "G_function", "commutator_riesz"):
        if vk:
            rep.violations[key] = vk
    return rep


def power_weight_riesz_condition(p: Number, alpha: Number, q_plus: Number, n: int) -> bool:
    """1 < p < q+ and n(p/q+ - 1) < alpha < n(p - 1)."""
    p, qp = ext(p), ext(q_plus)
    a = Fraction(str(alpha))
    if not (1 < p < qp):
        return False
    upper = n * (p.fraction - 1)
    lower = Fraction(-n) if qp.is_inf else n * (p.fraction / qp.fraction - 1)
    return lower < a < upper


def exponent_grid(lo: Number, hi: Number, step: Number) -> Iterable[Ext]:
    v, hi, step = ext(lo), ext(hi), ext(step)
    while v <= hi:
        yield v
        v = v + step
