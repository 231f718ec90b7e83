"""Lower bounds for weighted operator norms, refinement sweeps, persistence.

Norms are estimated on L^p(w) by conjugating with w^{1/p}: the weighted
problem for T is the unweighted one for w^{1/p} T w^{-1/p}.  Values are
lower bounds only; "bounded" always means "stable under refinement".
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .exponents import INF, CriticalExponents, Number, ext, power_weight_indices, predicted_ranges
from .grid import (
    MK_INNER,
    CoefficientField,
    EllipticOperator,
    PeriodicGrid,
    meyers_kenig,
    mk_map,
    smooth_cutoff,
)
from .semigroup import SemigroupEvaluator
from .singular import RootSolver
from .weights import WeightField

DEFAULT_SEED = 20240611
GROWING = 1.5
STABLE = 1.1


# ---------------------------------------------------------------------------
# operator handles


@dataclass
class LinearOp:
    """A linear map on grid fields with its adjoint for the sum pairing."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "T"
    meta: dict = field(default_factory=dict)

    def __call__(self, f):
        return self.apply(f)


def scaled_identity(c: float) -> LinearOp:
    return LinearOp(lambda f: c * f, lambda g: np.conj(c) * g, f"{c}*I")


def multiplier_op(grid: PeriodicGrid, m: np.ndarray) -> LinearOp:
    """Fourier multiplier m(k) (real input fields, Hermitian-symmetric m assumed)."""
    m = np.asarray(m)

    def ap(f, mm=m):
        out = np.fft.ifftn(mm * np.fft.fftn(f))
        return out if np.iscomplexobj(f) else np.real(out)

    return LinearOp(ap, lambda g: ap(g, np.conj(m)), "multiplier")


def _inv_sqrt_for(op: EllipticOperator, shifts: int = 16):
    if op.coeffs.is_constant:
        lam = op.symbol()
        mult = np.zeros(lam.shape)
        nz = np.abs(lam) > 1e-12
        mult[nz] = 1.0 / np.sqrt(np.real(lam[nz]))

        def inv(f):
            out = np.fft.ifftn(mult * np.fft.fftn(f))
            return out if np.iscomplexobj(f) else np.real(out)

        return inv, {"inv_sqrt": "fourier"}
    root = RootSolver(op, shifts=shifts)
    return root.inv_sqrt, {"inv_sqrt": "root", "shifts": shifts}


def riesz_op(op: EllipticOperator, shifts: int = 16) -> LinearOp:
    """grad L^{-1/2} (self-adjoint L); adjoint is L^{-1/2}(-div)."""
    inv, meta = _inv_sqrt_for(op, shifts)
    grid = op.grid
    return LinearOp(lambda f: grid.gradient(inv(f)), lambda G: inv(-grid.divergence(G)), "riesz", meta)


def semigroup_op(sg: SemigroupEvaluator, t: float) -> LinearOp:
    if not sg.op.is_hermitian:
        raise ValueError("adjoint available for self-adjoint L only")
    return LinearOp(lambda f: sg.apply(t, f), lambda g: sg.apply(t, g), f"exp(-{t}L)")


# ---------------------------------------------------------------------------
# norm estimation


@dataclass
class NormBudget:
    iterations: int = 50
    tol: float = 1e-4
    window: int = 5
    random_probes: int = 4


@dataclass
class NormEstimate:
    value: float
    method: str
    iterations: int
    converged: bool
    probe_value: float = 0.0
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "probe_value": self.probe_value,
        }


def _modulus(v: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    if v.shape == grid.shape:
        return np.abs(v)
    return np.sqrt(np.sum(np.abs(v) ** 2, axis=0))


def _pnorm(v, p, grid):
    return float(np.sum(_modulus(v, grid) ** p) ** (1.0 / p))


def _duality(v, p, grid):
    """|v|^{p-2} v, the L^p -> L^{p'} duality map (unnormalized)."""
    a = _modulus(v, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(a > 0, a ** (p - 2), 0.0)
    return s * v


def norm_probes(grid: PeriodicGrid, w: np.ndarray | None = None, count: int = 4, seed: int = DEFAULT_SEED) -> list[np.ndarray]:
    """Ball indicators and bumps at several scales and places, plus random fields.

    One set of centers sits at the weight's most singular cell.
    """
    h = grid.h
    centers = [np.zeros(grid.n), np.full(grid.n, 0.25), np.full(grid.n, h / 2)]
    if w is not None:
        k = np.unravel_index(np.argmax(np.abs(np.log(np.maximum(w, 1e-300)))), grid.shape)
        centers.append(np.array([grid.axis[i] for i in k]))
    out = []
    for c in centers:
        d = grid.distance_to(c)
        for r in (2 * h, 1 / 32, 1 / 8):
            if r < 2 * h:
                continue
            out.append((d < r).astype(float))
            out.append(np.exp(-0.5 * (d / r) ** 2))
            x0 = grid.centers[0] - c[0]
            x0 = x0 - np.round(x0)
            out.append(x0 / r * np.exp(-0.5 * (d / r) ** 2))
    rng = np.random.default_rng(seed)
    for _ in range(count):
        out.append(rng.standard_normal(grid.shape))
    return out


def estimate_norm(T: LinearOp, p: Number, w=None, grid: PeriodicGrid | None = None,
                  budget: NormBudget | None = None, seed: int = DEFAULT_SEED,
                  probes: list[np.ndarray] | None = None) -> NormEstimate:
    budget = budget or NormBudget()
    p = float(ext(p))
    if not 1 < p < math.inf:
        raise ValueError("need 1 < p < inf")
    if grid is None:
        grid = getattr(w, "grid", None)
    if grid is None:
        raise ValueError("grid required")
    wv = np.ones(grid.shape) if w is None else np.asarray(getattr(w, "values", w), dtype=float)
    up = wv ** (1.0 / p)
    dn = 1.0 / up

    def Tw(u):
        return up * T.apply(dn * u)

    if probes is None:
        probes = norm_probes(grid, wv if w is not None else None, budget.random_probes, seed)
    best, best_x, hist = 0.0, None, []
    for x in probes:
        x = up * x  # probe in the weighted space, pulled to the flat one
        nx = _pnorm(x, p, grid)
        if nx == 0:
            continue
        x = x / nx
        v = _pnorm(Tw(x), p, grid)
        hist.append(v)
        if v > best:
            best, best_x = v, x
    probe_value = best
    if T.adjoint is None or best_x is None:
        return NormEstimate(best, "probe-corpus", 0, False, probe_value, hist)

    def Twa(v):
        return dn * T.adjoint(up * v)

    pc = p / (p - 1)
    x = best_x
    vals = []
    converged = False
    it = 0
    y = Tw(x)
    for it in range(1, budget.iterations + 1):
        z = Twa(_duality(y, p, grid))
        x = _duality(z, pc, grid)
        nx = _pnorm(x, p, grid)
        if nx == 0:
            break
        x = x / nx
        y = Tw(x)
        v = _pnorm(y, p, grid)
        vals.append(v)
        best = max(best, v)
        if len(vals) > budget.window:
            ref = vals[-1 - budget.window]
            if abs(v - ref) <= budget.tol * max(v, 1e-300):
                converged = True
                break
    return NormEstimate(best, "duality-ascent", it, converged, probe_value, hist + vals)


# ---------------------------------------------------------------------------
# sweeps


def classify_growth(values: list[float]) -> str:
    """growing / stable / boundary from successive refinement ratios (last two steps)."""
    vals = [v for v in values if v is not None]
    if len(vals) < 2:
        return "boundary"
    ratios = [b / a for a, b in zip(vals[:-1], vals[1:]) if a > 0]
    last = ratios[-2:]
    if last and all(r >= GROWING for r in last):
        return "growing"
    if last and all(r <= STABLE for r in last):
        return "stable"
    return "boundary"


VERDICT_LABEL = {"growing": "outside-growing", "stable": "inside-stable", "boundary": "boundary"}


@dataclass
class SweepResult:
    p_list: list
    alpha_list: list
    N_list: list
    cells: dict  # (p, alpha, N) -> NormEstimate | str (error)
    predicted: dict  # (p, alpha) -> bool, p inside the certified range for w_alpha
    verdicts: dict  # (p, alpha) -> label
    range_key: str = "riesz"
    meta: dict = field(default_factory=dict)

    def values(self, p, alpha) -> list:
        out = []
        for N in self.N_list:
            c = self.cells.get((p, alpha, N))
            out.append(c.value if isinstance(c, NormEstimate) else None)
        return out

    def inconsistencies(self) -> list:
        """Growing cells strictly inside the certified range."""
        return [k for k, v in self.verdicts.items() if v == "outside-growing" and self.predicted.get(k)]

    def rows(self) -> list[dict]:
        out = []
        for p in self.p_list:
            for a in self.alpha_list:
                row = {"p": float(ext(p)), "alpha": float(a), "certified": bool(self.predicted[(p, a)]),
                       "verdict": self.verdicts[(p, a)]}
                for N, v in zip(self.N_list, self.values(p, a)):
                    row[f"N{N}"] = v
                out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "p_list": [str(ext(p)) for p in self.p_list],
            "alpha_list": [str(a) for a in self.alpha_list],
            "N_list": list(self.N_list),
            "rows": self.rows(),
            "errors": {f"{k}": v for k, v in self.cells.items() if isinstance(v, str)},
            "inconsistencies": [list(map(str, k)) for k in self.inconsistencies()],
            "range_key": self.range_key,
            "meta": self.meta,
        }


def sweep_from_dict(d: dict) -> SweepResult:
    """Rebuild a SweepResult from its JSON form (values only)."""
    p_list = [ext(p) for p in d["p_list"]]
    alpha_list = [float(a) for a in d["alpha_list"]]
    N_list = [int(N) for N in d["N_list"]]
    cells, predicted, verdicts = {}, {}, {}
    rows = iter(d["rows"])
    for p in p_list:
        for a in alpha_list:
            row = next(rows)
            predicted[(p, a)] = bool(row["certified"])
            verdicts[(p, a)] = row["verdict"]
            for N in N_list:
                v = row.get(f"N{N}")
                cells[(p, a, N)] = NormEstimate(v, "loaded", 0, True) if v is not None else "missing"
    return SweepResult(p_list, alpha_list, N_list, cells, predicted, verdicts, d.get("range_key", "riesz"),
                       d.get("meta", {}))


def _certified(p, alpha, ce: CriticalExponents, n: int, key: str) -> bool:
    idx = power_weight_indices(alpha, n)
    rng = predicted_ranges(ce, idx, n).ranges[key]
    return (not rng.empty) and ext(p) in rng


def sweep(builder: Callable[[int], tuple[LinearOp, PeriodicGrid]], p_list, alpha_list, N_list,
          ce: CriticalExponents, budget: NormBudget | None = None, seed: int = DEFAULT_SEED,
          workers: int = 1, range_key: str = "riesz") -> SweepResult:
    if not (p_list and alpha_list and N_list):
        raise ValueError("sweep axes must be nonempty")
    ops = {}
    for N in N_list:
        try:
            ops[N] = builder(N)
        except Exception as e:  # recorded per cell
            ops[N] = f"{type(e).__name__}: {e}"
    jobs = [(p, a, N) for N in N_list for p in p_list for a in alpha_list]

    def run(job):
        p, a, N = job
        built = ops[N]
        if isinstance(built, str):
            return built
        T, grid = built
        try:
            w = WeightField.power(grid, a) if a != 0 else None
            return estimate_norm(T, p, w, grid, budget, seed)
        except Exception as e:
            return f"{type(e).__name__}: {e}"

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    cells = dict(zip(jobs, results))
    n = next(g.n for b in ops.values() if not isinstance(b, str) for g in [b[1]])
    predicted, verdicts = {}, {}
    res = SweepResult(list(p_list), list(alpha_list), list(N_list), cells, predicted, verdicts, range_key,
                      {"seed": seed})
    for p in p_list:
        for a in alpha_list:
            predicted[(p, a)] = _certified(p, a, ce, n, range_key)
            verdicts[(p, a)] = VERDICT_LABEL[classify_growth(res.values(p, a))]
    return res


# ---------------------------------------------------------------------------
# the unboundedness witness


@dataclass
class WitnessReport:
    q: float
    N_list: list
    p_list: list
    grad_norms: dict  # p -> [||grad v||_p per N]
    sqrt_norms: dict  # p -> [||L^{1/2} v||_p per N]

    @staticmethod
    def _ratios(vals):
        return [b / a for a, b in zip(vals[:-1], vals[1:])]

    def grad_ratios(self, p):
        return self._ratios(self.grad_norms[p])

    def sqrt_ratios(self, p):
        return self._ratios(self.sqrt_norms[p])

    def splits(self, p) -> bool:
        """grad v grows monotonically while L^{1/2} v stays within [0.9, 1.1] per step."""
        g = self.grad_ratios(p)
        s = self.sqrt_ratios(p)
        return all(r > 1.0 for r in g) and all(0.9 <= r <= 1.1 for r in s)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "N_list": self.N_list,
            "p_list": self.p_list,
            "grad_norms": {str(p): v for p, v in self.grad_norms.items()},
            "sqrt_norms": {str(p): v for p, v in self.sqrt_norms.items()},
            "grad_ratios": {str(p): self.grad_ratios(p) for p in self.p_list},
            "sqrt_ratios": {str(p): self.sqrt_ratios(p) for p in self.p_list},
            "predicted_grad_ratio": {str(p): 2.0 ** max(0.0, (2.0 * p / self.q - 2.0) / p) for p in self.p_list},
            "splits": {str(p): self.splits(p) for p in self.p_list},
        }


def witness_field(grid: PeriodicGrid, q: float) -> np.ndarray:
    """Cut-off first component of |x|^beta x, L-harmonic where the coefficients are exact."""
    return smooth_cutoff(grid.radius, MK_INNER / 2, MK_INNER) * mk_map(grid.centers, q)[0]


def witness_check(q: float, N_list=(64, 128, 256), p_list=(2.0, 6.0), shifts: int = 16) -> WitnessReport:
    if q <= 2:
        raise ValueError("witness needs q > 2")
    gn = {p: [] for p in p_list}
    sn = {p: [] for p in p_list}
    for N in N_list:
        grid = PeriodicGrid(2, N)
        op = EllipticOperator(grid, meyers_kenig(q, grid))
        v = witness_field(grid, q)
        gv = grid.gradient(v)
        sv = RootSolver(op, shifts=shifts).sqrt(v)
        for p in p_list:
            gn[p].append(grid.lp_norm(gv, p))
            sn[p].append(grid.lp_norm(sv, p))
    return WitnessReport(q, list(N_list), list(p_list), gn, sn)


# ---------------------------------------------------------------------------
# config and persistence

CONFIG_SCHEMA = {
    # key: (type, default)
    "operator": (str, "laplacian"),  # laplacian | meyers-kenig
    "q": (float, 4.0),  # Meyers-Kenig exponent
    "n": (int, 2),
    "transform": (str, "riesz"),  # riesz | semigroup
    "t": (float, 0.01),  # semigroup time
    "p_list": (list, [2.0]),
    "alpha_list": (list, [0.0]),
    "N_list": (list, [32, 64]),
    "seed": (int, DEFAULT_SEED),
    "iterations": (int, 50),
    "tol": (float, 1e-4),
    "random_probes": (int, 4),
    "shifts": (int, 16),
    "workers": (int, 1),
}


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma-separated."""
    cfg = {k: d for k, (_, d) in CONFIG_SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        typ, _ = CONFIG_SCHEMA[key]
        if typ is list:
            conv = int if key == "N_list" else float
            cfg[key] = [conv(x) for x in val.split(",") if x.strip()]
        else:
            cfg[key] = typ(val)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def builder_from_config(cfg: dict) -> Callable[[int], tuple[LinearOp, PeriodicGrid]]:
    def build(N):
        if cfg["operator"] == "meyers-kenig":
            grid = PeriodicGrid(2, N)
            coeffs = meyers_kenig(cfg["q"], grid)
        elif cfg["operator"] == "laplacian":
            grid = PeriodicGrid(cfg["n"], N)
            coeffs = CoefficientField.identity(grid)
        else:
            raise ValueError(f"unknown operator {cfg['operator']!r}")
        op = EllipticOperator(grid, coeffs)
        if cfg["transform"] == "riesz":
            return riesz_op(op, cfg["shifts"]), grid
        if cfg["transform"] == "semigroup":
            return semigroup_op(SemigroupEvaluator(op), cfg["t"]), grid
        raise ValueError(f"unknown transform {cfg['transform']!r}")

    return build


def critical_exponents_from_config(cfg: dict) -> CriticalExponents:
    n = 2 if cfg["operator"] == "meyers-kenig" else cfg["n"]
    qp = ext(str(cfg["q"])) if cfg["operator"] == "meyers-kenig" else INF
    return CriticalExponents.real_coefficients(n, qp)


def run_sweep_config(cfg: dict) -> SweepResult:
    budget = NormBudget(cfg["iterations"], cfg["tol"], 5, cfg["random_probes"])
    p_list = [ext(str(p)) for p in cfg["p_list"]]
    res = sweep(builder_from_config(cfg), p_list, cfg["alpha_list"], cfg["N_list"],
                critical_exponents_from_config(cfg), budget, cfg["seed"], cfg["workers"])
    res.meta.update(report_header(cfg))
    return res


def report_header(cfg: dict | None = None, seed: int | None = None) -> dict:
    out = {"version": __version__}
    if cfg is not None:
        out["seed"] = cfg.get("seed", DEFAULT_SEED)
        out["config_hash"] = config_hash(cfg)
    else:
        out["seed"] = DEFAULT_SEED if seed is None else seed
        out["config_hash"] = None
    return out


def write_json(path, payload: dict, cfg: dict | None = None, seed: int | None = None) -> None:
    body = dict(report_header(cfg, seed))
    body.update(payload)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def write_csv(path, rows: list[dict]) -> None:
    import csv

    if not rows:
        open(path, "w").close()
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
