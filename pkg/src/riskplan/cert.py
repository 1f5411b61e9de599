"""Sum-of-squares certificates of continuous-time safety.

Segments: for each constraint g(x) >= 0 of the safe set and a trajectory piece
x(t), t in [t1, t2], find SOS polynomials with

    g(x(t)) = s0(t) + s1(t) (t - t1) + s2(t) (t2 - t)

Tubes: with the tube slice {x : h(x, t) >= 0},

    g(x, t) = s0 + s1 (t - t1) + s2 (t2 - t) + s3 h(x, t)

Each identity is a semidefinite feasibility problem over Gram matrices. Time is
mapped affinely onto [0, 1] before assembly. The SDP maximizes the smallest
Gram eigenvalue (capped at 1), so the optimum doubles as the feasibility margin.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import clarabel
import numpy as np
from scipy import sparse

from .contour import Constraint, FreeSpace
from .poly import T, Kind, Polynomial, Var, x

RESIDUAL_TOL = 1e-7
PSD_TOL = 1e-8
SOLVER_TOL = 1e-9


class DegreeMismatch(ValueError):
    pass


class Status(str, Enum):
    VERIFIED = "Verified"
    NOT_VERIFIED = "NotVerified"
    SOLVER_ERROR = "SolverError"


@dataclass(frozen=True)
class SolverConfig:
    tol: float = SOLVER_TOL
    residual_tol: float = RESIDUAL_TOL
    psd_tol: float = PSD_TOL
    deg_cap: int | None = None  # total degree of the representation; None = policy default
    extra_degree: int = 0  # added on top of the default policy (monotone strengthening)
    max_iter: int = 200
    prefilter: bool = True  # reject by dense sampling before any SDP
    prefilter_points: int = 129


DEFAULT_CONFIG = SolverConfig()


@dataclass
class GramBasis:
    """Monomial exponent vectors (over the program variables) for one multiplier."""

    exponents: list[tuple[int, ...]]
    degree: int

    @property
    def size(self) -> int:
        return len(self.exponents)


def monomials_upto(nvars: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def _dense_terms(p: Polynomial, variables: Sequence[Var]) -> dict[tuple[int, ...], float]:
    index = {v: i for i, v in enumerate(variables)}
    out = {}
    for m, c in p.items():
        e = [0] * len(variables)
        for v, k in m:
            if v not in index:
                raise DegreeMismatch(f"{v.name} is not a program variable")
            e[index[v]] = k
        out[tuple(e)] = c
    return out


@dataclass
class SosProgram:
    """Coefficient-matching identity target == sum_k weight_k * z_k^T G_k z_k."""

    variables: list[Var]
    target: Polynomial  # already normalized: time on [0, 1], unit max coefficient
    scale: float  # original target = scale * target
    weights: list[tuple[str, Polynomial]]
    bases: list[GramBasis]
    interval: tuple[float, float]
    degree: int
    name: str = ""
    # filled by _build
    monomials: dict = field(default_factory=dict)
    A_eq: sparse.csc_matrix | None = None
    b_eq: np.ndarray | None = None
    offsets: list[int] = field(default_factory=list)

    @property
    def block_sizes(self) -> list[int]:
        return [b.size for b in self.bases]

    def _build(self):
        rows, cols, vals = [], [], []
        mono_index: dict = {}

        def row_of(e):
            if e not in mono_index:
                mono_index[e] = len(mono_index)
            return mono_index[e]

        target = _dense_terms(self.target, self.variables)
        for e in target:
            row_of(e)
        offset = 0
        self.offsets = []
        for (_, wpoly), basis in zip(self.weights, self.bases):
            self.offsets.append(offset)
            wterms = _dense_terms(wpoly, self.variables)
            n = basis.size
            col = offset
            for j in range(n):
                for i in range(j + 1):
                    zij = tuple(a + b for a, b in zip(basis.exponents[i], basis.exponents[j]))
                    mult = 1.0 if i == j else 2.0
                    for we, wc in wterms.items():
                        e = tuple(a + b for a, b in zip(zij, we))
                        rows.append(row_of(e))
                        cols.append(col)
                        vals.append(mult * wc)
                    col += 1
            offset = col
        self.nvar_gram = offset
        m = len(mono_index)
        A = sparse.coo_matrix((vals, (rows, cols)), shape=(m, offset + 1)).tocsc()
        A.sum_duplicates()
        b = np.zeros(m)
        for e, c in target.items():
            b[mono_index[e]] = c
        self.monomials = mono_index
        self.A_eq, self.b_eq = A, b
        covered = np.asarray(abs(A).sum(axis=1)).ravel() > 0
        missing = [e for e, r in mono_index.items() if not covered[r] and b[r] != 0]
        if missing:
            raise DegreeMismatch(
                f"target monomials {missing[:3]} are outside the multiplier span at degree "
                f"{self.degree}")


@dataclass
class ConstraintResult:
    name: str
    status: Status
    margin: float
    residual: float
    solve_time: float
    grams: list[np.ndarray] = field(default_factory=list)
    multipliers: list[str] = field(default_factory=list)
    block_sizes: list[int] = field(default_factory=list)
    solver_status: str = ""
    note: str = ""

    def to_json(self, timing: bool = True) -> dict:
        out = {
            "name": self.name, "status": self.status.value, "margin": _finite(self.margin),
            "residual": _finite(self.residual), "gram_dims": self.block_sizes,
            "multipliers": self.multipliers, "solver_status": self.solver_status,
            "note": self.note,
        }
        if timing:
            out["solve_time"] = self.solve_time
        return out


@dataclass
class Certificate:
    status: Status
    results: list[ConstraintResult]
    interval: tuple[float, float]
    solve_time: float
    kind: str = "segment"

    @property
    def verified(self) -> bool:
        return self.status is Status.VERIFIED

    @property
    def margin(self) -> float:
        return min((r.margin for r in self.results), default=math.inf)

    @property
    def residual(self) -> float:
        return max((r.residual for r in self.results), default=0.0)

    def to_json(self, timing: bool = True) -> dict:
        """Summary without Gram matrices; ``timing=False`` keeps the output reproducible."""
        out = {
            "status": self.status.value, "kind": self.kind, "interval": list(self.interval),
            "margin": _finite(self.margin),
            "constraints": [r.to_json(timing) for r in self.results],
        }
        if timing:
            out["solve_time"] = self.solve_time
        return out


def _finite(v: float):
    return v if math.isfinite(v) else None


def _combine(results: list[ConstraintResult], interval, kind) -> Certificate:
    if any(r.status is Status.SOLVER_ERROR for r in results):
        status = Status.SOLVER_ERROR
    elif all(r.status is Status.VERIFIED for r in results):
        status = Status.VERIFIED
    else:
        status = Status.NOT_VERIFIED
    return Certificate(status, results, tuple(interval), sum(r.solve_time for r in results), kind)


# -- assembly ----------------------------------------------------------------

def _normalize_time(p: Polynomial, t1: float, t2: float) -> Polynomial:
    if not t1 < t2:
        raise ValueError(f"interval needs t1 < t2, got [{t1}, {t2}]")
    if T not in p.free_variables() or (t1 == 0.0 and t2 == 1.0):
        return p
    return p.substitute({T: Polynomial({(): t1, ((T, 1),): t2 - t1})})


def _even_up(d: int) -> int:
    return d + (d % 2)


def _normalized_target(g: Polynomial) -> tuple[Polynomial, float]:
    scale = max((abs(c) for _, c in g.items()), default=0.0)
    if scale == 0.0:
        return g, 1.0
    return g.scale(1.0 / scale), scale


def _program(name, variables, g, weights, degree, interval) -> SosProgram:
    target, scale = _normalized_target(g)
    bases = []
    for _, wpoly in weights:
        bdeg = max(0, math.ceil((degree - max(wpoly.degree(), 0)) / 2))
        bases.append(GramBasis(monomials_upto(len(variables), bdeg), bdeg))
    prog = SosProgram(variables, target, scale, weights, bases, tuple(interval), degree, name)
    prog._build()
    return prog


def assemble_interval(g: Polynomial, t1: float, t2: float,
                      config: SolverConfig = DEFAULT_CONFIG, name: str = "") -> SosProgram:
    """Program for g(t) >= 0 on [t1, t2] with g univariate in t."""
    extra = g.free_variables() - {T}
    if extra:
        raise DegreeMismatch(f"interval programs need g in t only; found "
                             f"{', '.join(sorted(v.name for v in extra))}")
    gs = _normalize_time(g, t1, t2)
    d = max(gs.degree(), 0)
    degree = config.deg_cap if config.deg_cap is not None else _even_up(d)
    degree += config.extra_degree
    if degree < d:
        raise DegreeMismatch(f"degree cap {degree} below target degree {d}")
    s = Polynomial.var(T)
    weights = [("sigma0", Polynomial.const(1.0)), ("sigma1", s), ("sigma2", 1.0 - s)]
    return _program(name, [T], gs, weights, degree, (t1, t2))


def assemble_tube(g: Polynomial, h: Polynomial, t1: float, t2: float,
                  config: SolverConfig = DEFAULT_CONFIG, name: str = "",
                  center: Sequence[float] | None = None) -> SosProgram:
    """Program for g(x, t) >= 0 on {(x, t): h(x, t) >= 0, t in [t1, t2]}.

    ``center`` optionally shifts the state variables (x = center + y) to improve
    conditioning; the certificate is then expressed in the shifted variables.
    """
    gs, hs = _normalize_time(g, t1, t2), _normalize_time(h, t1, t2)
    state = sorted({v for p in (gs, hs) for v in p.free_variables() if v.kind is Kind.STATE})
    if any(v.kind is Kind.UNCERTAIN for p in (gs, hs) for v in p.free_variables()):
        raise DegreeMismatch("tube programs cannot contain uncertain variables")
    if center is not None:
        shift = {v: Polynomial({(): float(center[v.index]), ((v, 1),): 1.0}) for v in state}
        gs, hs = gs.substitute(shift), hs.substitute(shift)
    variables = state + [T]
    d = max(gs.degree(), hs.degree(), 0)
    degree = config.deg_cap if config.deg_cap is not None else _even_up(max(gs.degree(), 0)) + 2
    degree = max(degree, _even_up(hs.degree())) + config.extra_degree
    if degree < d:
        raise DegreeMismatch(f"degree cap {degree} below target degree {d}")
    s = Polynomial.var(T)
    weights = [("sigma0", Polynomial.const(1.0)), ("sigma1", s), ("sigma2", 1.0 - s),
               ("sigma3", hs)]
    return _program(name, variables, gs, weights, degree, (t1, t2))


# -- solve -------------------------------------------------------------------

def solver_threads() -> int:
    """Thread cap for each conic solve, from RISKPLAN_THREADS (default 1)."""
    raw = os.environ.get("RISKPLAN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1

_ISQ2 = 1.0 / math.sqrt(2.0)


def solve(prog: SosProgram, config: SolverConfig = DEFAULT_CONFIG) -> ConstraintResult:
    """Maximize the smallest Gram eigenvalue subject to the coefficient identity."""
    start = time.perf_counter()
    names = [n for n, _ in prog.weights]
    if prog.target.is_zero():
        return ConstraintResult(prog.name, Status.VERIFIED, 0.0, 0.0, 0.0, [], names,
                                prog.block_sizes, "trivial", "zero target")
    nv = prog.nvar_gram + 1
    lam = nv - 1
    # PSD rows: s = svec(G - lam I), scaled off-diagonals
    prow, pcol, pval = [], [], []
    r = 0
    for off, basis in zip(prog.offsets, prog.bases):
        n = basis.size
        col = off
        for j in range(n):
            for i in range(j + 1):
                if i == j:
                    prow += [r, r]
                    pcol += [col, lam]
                    pval += [-1.0, 1.0]
                else:
                    prow.append(r)
                    pcol.append(col)
                    pval.append(-math.sqrt(2.0))
                r += 1
                col += 1
    A_psd = sparse.csc_matrix((pval, (prow, pcol)), shape=(r, nv))
    A_cap = sparse.csc_matrix(([1.0], ([0], [lam])), shape=(1, nv))
    A = sparse.vstack([prog.A_eq, A_cap, A_psd]).tocsc()
    b = np.concatenate([prog.b_eq, [1.0], np.zeros(r)])
    q = np.zeros(nv)
    q[lam] = -1.0
    P = sparse.csc_matrix((nv, nv))
    cones = [clarabel.ZeroConeT(prog.A_eq.shape[0]), clarabel.NonnegativeConeT(1)]
    cones += [clarabel.PSDTriangleConeT(bs.size) for bs in prog.bases]

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = config.tol
    settings.tol_gap_rel = config.tol
    settings.tol_feas = config.tol
    settings.max_iter = config.max_iter
    settings.max_threads = solver_threads()
    try:
        solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
        sol = solver.solve()
    except Exception as exc:  # clarabel raises plain exceptions on bad data
        return ConstraintResult(prog.name, Status.SOLVER_ERROR, -math.inf, math.inf,
                                time.perf_counter() - start, [], names, prog.block_sizes,
                                "exception", str(exc))
    status = str(sol.status)
    elapsed = time.perf_counter() - start
    if "Solved" not in status:
        if "Infeasible" in status:
            return ConstraintResult(prog.name, Status.NOT_VERIFIED, -math.inf, math.inf, elapsed,
                                    [], names, prog.block_sizes, status, "infeasible identity")
        return ConstraintResult(prog.name, Status.SOLVER_ERROR, -math.inf, math.inf, elapsed,
                                [], names, prog.block_sizes, status, "solver did not converge")
    v = np.asarray(sol.x)
    grams = _unpack(prog, v)
    margin = min(float(np.linalg.eigvalsh(G)[0]) for G in grams)
    projected = [_psd_project(G) for G in grams]
    residual = _residual(prog, projected)
    ok = residual <= config.residual_tol and margin >= -config.psd_tol
    st = Status.VERIFIED if ok else Status.NOT_VERIFIED
    note = "" if ok else ("negative margin" if margin < -config.psd_tol else "residual too large")
    return ConstraintResult(prog.name, st, margin, residual, elapsed, projected, names,
                            prog.block_sizes, status, note)


def _unpack(prog: SosProgram, v: np.ndarray) -> list[np.ndarray]:
    out = []
    for off, basis in zip(prog.offsets, prog.bases):
        n = basis.size
        G = np.zeros((n, n))
        col = off
        for j in range(n):
            for i in range(j + 1):
                G[i, j] = G[j, i] = v[col]
                col += 1
        out.append(G)
    return out


def _pack(prog: SosProgram, grams: list[np.ndarray]) -> np.ndarray:
    v = np.zeros(prog.nvar_gram + 1)
    for off, G in zip(prog.offsets, grams):
        n = G.shape[0]
        col = off
        for j in range(n):
            for i in range(j + 1):
                v[col] = G[i, j]
                col += 1
    return v


def _psd_project(G: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(G)
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def _residual(prog: SosProgram, grams: list[np.ndarray]) -> float:
    v = _pack(prog, grams)
    return float(np.max(np.abs(prog.A_eq @ v - prog.b_eq), initial=0.0))


def reconstruct(prog: SosProgram, result: ConstraintResult) -> Polynomial:
    """Expand sum_k weight_k * z^T G_k z back into a polynomial (original scale)."""
    total = Polynomial()
    for (_, wpoly), basis, G in zip(prog.weights, prog.bases, result.grams):
        zs = [Polynomial({tuple((v, k) for v, k in zip(prog.variables, e) if k): 1.0})
              for e in basis.exponents]
        sig = Polynomial()
        for i in range(len(zs)):
            for j in range(len(zs)):
                if G[i, j] != 0.0:
                    sig = sig + zs[i] * zs[j] * float(G[i, j])
        total = total + wpoly * sig
    return total.scale(prog.scale)


def solve_program(prog: SosProgram, config: SolverConfig = DEFAULT_CONFIG) -> Certificate:
    res = solve(prog, config)
    return _combine([res], prog.interval, "program")


# -- segment and tube verification --------------------------------------------

def _sampled_min(g: Polynomial, n: int) -> float:
    s = np.linspace(0.0, 1.0, n)
    vals = g.eval({T: s}) if g.free_variables() else np.full(n, g.constant)
    return float(np.min(vals))


def compose_segment(g: Polynomial, segment: Sequence[Polynomial]) -> Polynomial:
    """g(x(t), t) for a trajectory given as one polynomial in t per state dimension."""
    return g.substitute({x(i + 1): p for i, p in enumerate(segment)})


def verify_constraints_on_segment(constraints: Sequence[Constraint], segment: Sequence[Polynomial],
                                  interval, config: SolverConfig = DEFAULT_CONFIG) -> Certificate:
    t1, t2 = map(float, interval)
    if not t1 < t2:
        raise ValueError(f"degenerate interval [{t1}, {t2}]")
    results = []
    for c in constraints:
        gt = compose_segment(c.poly, segment)
        gs = _normalize_time(gt, t1, t2)
        if config.prefilter and gs.free_variables():
            lo = _sampled_min(gs, config.prefilter_points)
            if lo < -config.residual_tol:
                results.append(ConstraintResult(c.name, Status.NOT_VERIFIED, -math.inf, math.inf,
                                                0.0, note=f"sampled violation {lo:.3g}"))
                break
        if not gs.free_variables():
            st = Status.VERIFIED if gs.constant >= -config.residual_tol else Status.NOT_VERIFIED
            results.append(ConstraintResult(c.name, st, gs.constant, 0.0, 0.0, note="constant"))
            if st is not Status.VERIFIED:
                break
            continue
        prog = assemble_interval(gs, 0.0, 1.0, config, c.name)
        prog.interval = (t1, t2)
        res = solve(prog, config)
        results.append(res)
        if res.status is not Status.VERIFIED:
            break
    return _combine(results, (t1, t2), "segment")


def verify_segment(segment, interval, free: FreeSpace,
                   config: SolverConfig = DEFAULT_CONFIG) -> Certificate:
    """Certify x(t) stays in every contour (and the workspace box) on ``interval``.

    ``segment`` is either a sequence of per-dimension polynomials in t or an
    object with a ``polys`` attribute (e.g. a trajectory piece). Verification
    stops at the first constraint that fails.
    """
    polys = getattr(segment, "polys", segment)
    return verify_constraints_on_segment(free.constraints(), polys, interval, config)


def tube_slice_poly(center: Sequence[Polynomial], radius: Polynomial) -> Polynomial:
    """h(x, t) = r(t)^2 - |x - center(t)|^2."""
    h = radius * radius
    for i, ci in enumerate(center):
        d = Polynomial.var(x(i + 1)) - ci
        h = h - d * d
    return h


def _tube_sample_min(g: Polynomial, center, radius, t1, t2, n_t=33, n_dir=24) -> float:
    ts = np.linspace(t1, t2, n_t)
    cen = np.stack([np.broadcast_to(np.asarray(c.eval({T: ts}), float), ts.shape) for c in center],
                   axis=-1)
    rad = np.broadcast_to(np.asarray(radius.eval({T: ts}), float), ts.shape)
    dim = len(center)
    if dim == 2:
        ang = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(n_dir * 2, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.concatenate([np.zeros((1, dim)), dirs, 0.5 * dirs])
    pts = cen[:, None, :] + rad[:, None, None] * dirs[None, :, :]
    asg = {x(i + 1): pts[..., i] for i in range(dim)}
    asg[T] = np.broadcast_to(ts[:, None], pts.shape[:2])
    return float(np.min(g.eval(asg))) if g.free_variables() else g.constant


def verify_tube(center: Sequence[Polynomial], radius: Polynomial, interval, free: FreeSpace,
                config: SolverConfig = DEFAULT_CONFIG) -> Certificate:
    """Certify the ball tube {|x - center(t)| <= radius(t)} stays in the safe set."""
    t1, t2 = map(float, interval)
    if not t1 < t2:
        raise ValueError(f"degenerate interval [{t1}, {t2}]")
    h = tube_slice_poly(center, radius)
    mid = 0.5 * (t1 + t2)
    shift = [float(np.asarray(c.eval({T: mid}))) if c.free_variables() else c.constant
             for c in center]
    results = []
    for c in free.constraints():
        if config.prefilter:
            lo = _tube_sample_min(c.poly, center, radius, t1, t2)
            if lo < -config.residual_tol:
                results.append(ConstraintResult(c.name, Status.NOT_VERIFIED, -math.inf, math.inf,
                                                0.0, note=f"sampled violation {lo:.3g}"))
                break
        prog = assemble_tube(c.poly, h, t1, t2, config, c.name, center=shift)
        res = solve(prog, config)
        results.append(res)
        if res.status is not Status.VERIFIED:
            break
    return _combine(results, (t1, t2), "tube")
