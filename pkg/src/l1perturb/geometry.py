"""Lower l1 constants of finite families, tail schedules and James blocking.

The lower constant of normalized ``x_1..x_n`` is the minimum of
``f(a) = ||sum a_k x_k||_1`` over the complex l1 sphere.  It is found by search
(grid, then coordinate descent), so every reported value is attained by the
returned witness and is an upper bound for the true constant.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .algebra import norm1
from .predual import Functional

log = logging.getLogger(__name__)

CHUNK = 1 << 21  # complex entries per evaluation batch


@dataclass(frozen=True)
class Budget:
    phases: int = 24
    simplex: int = 32
    refine_steps: int = 200
    grid_max_n: int = 3
    pair_phases: int = 12
    pair_ratios: int = 17
    seeds: int = 4


@dataclass
class L1Certificate:
    r: float
    delta: list = field(default_factory=list)
    witness_alpha: np.ndarray | None = None
    budget: Budget = field(default_factory=Budget)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        w = [] if self.witness_alpha is None else [[float(a.real), float(a.imag)] for a in self.witness_alpha]
        return {"r": float(self.r), "delta": [float(d) for d in self.delta], "witness_alpha": w,
                "budget": asdict(self.budget), "meta": _jsonable(self.meta)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _density(x):
    return x.density if isinstance(x, Functional) else x


class Family:
    """Stacked densities supporting batched evaluation of ``||sum a_k x_k||_1``."""

    def __init__(self, xs, normalize: bool = True, _parts=None):
        if _parts is not None:
            self.parts, self.n = _parts, _parts[0][0].shape[0]
            return
        ds = [_density(x) for x in xs]
        if not ds:
            raise ValueError("empty family")
        norms = np.array([norm1(d) for d in ds])
        if np.any(norms <= 0):
            raise ValueError(f"zero-norm member at index {int(np.argmin(norms))}")
        scale = 1.0 / norms if normalize else np.ones_like(norms)
        shape = ds[0].shape
        self.n = len(ds)
        self.norms = norms
        parts = []
        for gi, (d, a, b) in enumerate(shape.groups):
            stack = np.stack([x.parts[gi] for x in ds]) * scale[:, None, None, None]
            w = shape.group_weights[gi]
            if d == 1:
                # atoms on which every member takes the same values merge exactly
                X = stack.reshape(self.n, -1)
                w = np.broadcast_to(np.asarray(w, float), (X.shape[1],))
                # collapse runs of equal neighbours first (cheap), then dedupe the rest
                starts = np.flatnonzero(np.concatenate([[True], np.any(X[:, 1:] != X[:, :-1], axis=0)]))
                if len(starts) < X.shape[1]:
                    X = np.ascontiguousarray(X[:, starts])
                    w = np.add.reduceat(w, starts)
                uniq, inv = np.unique(X.T, axis=0, return_inverse=True)
                if len(uniq) < X.shape[1]:
                    X = np.ascontiguousarray(uniq.T)
                    w = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
                parts.append((X, w, 1))
            else:
                parts.append((stack.reshape(self.n, -1), w, d))
        self.parts = parts

    def sub(self, idx) -> "Family":
        idx = np.asarray(idx, dtype=int)
        return Family(None, _parts=[(X[idx], w, d) for X, w, d in self.parts])

    @property
    def width(self) -> int:
        return sum(X.shape[1] for X, _, _ in self.parts)

    def norms_of(self, A) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        out = np.empty(A.shape[0])
        step = max(1, CHUNK // max(1, self.width))
        for s in range(0, A.shape[0], step):
            out[s:s + step] = self._norms(A[s:s + step])
        return out

    def _norms(self, A):
        total = np.zeros(A.shape[0])
        for X, w, d in self.parts:
            Y = A @ X
            if d == 1:
                total += np.abs(Y) @ w
                continue
            Y = Y.reshape(A.shape[0], -1, d, d)
            if d == 2:
                fro = np.sum(np.abs(Y) ** 2, axis=(-2, -1))
                det = Y[..., 0, 0] * Y[..., 1, 1] - Y[..., 0, 1] * Y[..., 1, 0]
                nuc = np.sqrt(np.maximum(fro + 2 * np.abs(det), 0.0))
            else:
                nuc = np.linalg.svd(Y, compute_uv=False).sum(-1)
            total += nuc @ w
        return total


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for i in range(total + 1):
        for rest in _compositions(total - i, parts - 1):
            yield (i,) + rest


def _phase_set(count, real):
    if real:
        return np.array([1.0, -1.0], dtype=complex)
    return np.exp(2j * np.pi * np.arange(count) / count)


def _grid_search(fam: Family, budget: Budget, real: bool):
    n = fam.n
    mags = np.array(list(_compositions(budget.simplex, n)), dtype=float) / budget.simplex
    ph = _phase_set(budget.phases, real)
    combos = np.array(list(itertools.product(range(len(ph)), repeat=n - 1)), dtype=int).reshape(-1, n - 1)
    phases = np.concatenate([np.ones((len(combos), 1), complex), ph[combos]], axis=1)
    best = []
    for pc in np.array_split(phases, max(1, len(phases) * len(mags) // 200000 + 1)):
        A = (pc[:, None, :] * mags[None, :, :]).reshape(-1, n)
        vals = fam.norms_of(A)
        k = min(budget.seeds, len(vals))
        idx = np.argpartition(vals, k - 1)[:k]
        best.extend((float(vals[i]), A[i]) for i in idx)
    best.sort(key=lambda t: t[0])
    return best[: budget.seeds]


def _pair_scan(fam: Family, budget: Budget, real: bool, skip_orthogonal=True):
    n = fam.n
    ph = _phase_set(budget.pair_phases, real)
    t = np.linspace(0, 1, budget.pair_ratios)
    coeff = np.stack([np.repeat(1 - t, len(ph)), np.tile(ph, len(t)) * np.repeat(t, len(ph))], axis=1)
    best = []
    for i in range(n):
        for j in range(i + 1, n):
            sub = fam.sub([i, j])
            vals = sub.norms_of(coeff)
            k = int(np.argmin(vals))
            if skip_orthogonal and vals[k] >= 1 - 1e-13:
                continue
            a = np.zeros(n, complex)
            a[[i, j]] = coeff[k]
            best.append((float(vals[k]), a))
    best.sort(key=lambda tup: tup[0])
    return best[: budget.seeds]


ROUND_STEPS = 25


def _refine(fam: Family, alpha, budget: Budget, real: bool, max_steps=None):
    n = fam.n
    alpha = np.asarray(alpha, dtype=complex).copy()
    alpha /= np.abs(alpha).sum()
    fval = float(fam.norms_of(alpha)[0])
    ph = _phase_set(budget.pair_phases, real)
    grid = np.linspace(0, 1, budget.pair_ratios)
    steps = 0
    for steps in range(1, (max_steps or budget.refine_steps) + 1):
        improved = False
        f_start = fval
        mags = np.abs(alpha)
        units = np.where(mags > 0, alpha / np.where(mags > 0, mags, 1), 1)
        for i in np.flatnonzero(mags > 0):
            # move a fraction of |a_i| onto every other coordinate j, with j's phase
            # either its current one or, if a_j = 0, any of the sampled phases
            js = [j for j in range(n) if j != i]
            if not js:
                continue
            cand_dirs = []
            for j in js:
                if mags[j] > 0:
                    cand_dirs.append((j, units[j]))
                else:
                    cand_dirs.extend((j, p) for p in ph)
            rows = []
            for j, p in cand_dirs:
                for g in grid[1:]:
                    a = alpha.copy()
                    a[i] = units[i] * mags[i] * (1 - g)
                    a[j] = p * (mags[j] + mags[i] * g)
                    rows.append(a)
            # and the reverse direction along the current support
            for j in js:
                if mags[j] > 0:
                    for g in grid[1:]:
                        a = alpha.copy()
                        a[j] = units[j] * mags[j] * (1 - g)
                        a[i] = units[i] * (mags[i] + mags[j] * g)
                        rows.append(a)
            rows = np.array(rows)
            vals = fam.norms_of(rows)
            k = int(np.argmin(vals))
            if vals[k] < fval - 1e-15:
                a_new, f_new = _polish_segment(fam, alpha, rows[k], float(vals[k]))
                alpha, fval, improved = a_new, f_new, True
                mags = np.abs(alpha)
                units = np.where(mags > 0, alpha / np.where(mags > 0, mags, 1), 1)
        if not real:
            for k in np.flatnonzero(mags > 0)[1:] if n > 1 else []:
                a_new, f_new = _phase_move(fam, alpha, int(k), fval, budget)
                if f_new < fval - 1e-15:
                    alpha, fval, improved = a_new, f_new, True
        # sweeps gaining less than 1e-12 are not worth another pass
        if not improved or f_start - fval < 1e-12:
            break
    return fval, alpha, steps


def _joint_polish(fam: Family, alpha, fval, real: bool):
    """Simplex polish over magnitudes and phases jointly.

    Coordinate moves stall on ridges of the nonsmooth objective; a joint
    derivative-free step gets past them.  Only the support of ``alpha`` moves.
    """
    supp = np.flatnonzero(np.abs(alpha) > 0)
    if len(supp) < 2:
        return alpha, fval
    m = len(supp)
    signs = np.sign(alpha[supp].real) if real else None

    def unpack(v):
        mags = np.abs(v[:m])
        s = mags.sum()
        if s == 0:
            return None
        a = np.zeros(fam.n, complex)
        if real:
            a[supp] = signs * mags / s
        else:
            a[supp] = mags / s * np.exp(1j * np.concatenate([[np.angle(alpha[supp[0]])], v[m:]]))
        return a

    def f(v):
        a = unpack(v)
        return np.inf if a is None else float(fam.norms_of(a)[0])

    v0 = np.abs(alpha[supp])
    if not real:
        v0 = np.concatenate([v0, np.angle(alpha[supp[1:]])])
    res = minimize(f, v0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400 * len(v0)})
    if res.fun < fval - 1e-15:
        return unpack(res.x), float(res.fun)
    return alpha, fval


def _polish_segment(fam, a0, a1, f1):
    # the objective is convex along the segment between two points of the same face
    d = a1 - a0

    def g(t):
        return float(fam.norms_of(a0 + t * d)[0])

    res = minimize_scalar(g, bounds=(0.0, 2.0), method="bounded", options={"xatol": 1e-10})
    a = a0 + min(max(res.x, 0.0), 2.0) * d
    s = np.abs(a).sum()
    if s <= 0:
        return a1, f1
    a = a / s
    fa = float(fam.norms_of(a)[0])
    return (a, fa) if fa < f1 else (a1, f1)


def _phase_move(fam, alpha, k, fval, budget):
    base = np.angle(alpha[k])
    thetas = base + 2 * np.pi * np.arange(budget.phases) / budget.phases
    rows = np.repeat(alpha[None, :], len(thetas), axis=0)
    rows[:, k] = np.abs(alpha[k]) * np.exp(1j * thetas)
    vals = fam.norms_of(rows)
    j = int(np.argmin(vals))
    h = np.pi / budget.phases

    def g(th):
        a = alpha.copy()
        a[k] = np.abs(alpha[k]) * np.exp(1j * th)
        return float(fam.norms_of(a)[0])

    res = minimize_scalar(g, bounds=(thetas[j] - h, thetas[j] + h), method="bounded", options={"xatol": 1e-10})
    best_t, best_f = (res.x, res.fun) if res.fun < vals[j] else (thetas[j], vals[j])
    a = alpha.copy()
    a[k] = np.abs(alpha[k]) * np.exp(1j * best_t)
    return a, float(best_f)


def _search(fam: Family, budget: Budget, real: bool, warm=()):
    n = fam.n
    e = np.zeros(n, complex)
    e[0] = 1
    seeds = [(float(fam.norms_of(e)[0]), e)]
    if n > 1:
        if n <= budget.grid_max_n:
            seeds += _grid_search(fam, budget, real)
        else:
            seeds += _pair_scan(fam, budget, real)
    for w in warm:
        w = np.asarray(w, dtype=complex)
        if np.abs(w).sum() > 0:
            w = w / np.abs(w).sum()
            seeds.append((float(fam.norms_of(w)[0]), w))
    seeds.sort(key=lambda t: t[0])
    best_f, best_a, total_steps = np.inf, None, 0
    for f0, a0 in seeds[: budget.seeds + len(warm)]:
        f, a, steps = f0, a0, 0
        if n > 1:
            # coordinate rounds alternate with joint polishing until the step budget is spent
            while steps < budget.refine_steps:
                f_round = f
                f, a, used = _refine(fam, a, budget, real, min(ROUND_STEPS, budget.refine_steps - steps))
                steps += used
                a, f = _joint_polish(fam, a, f, real)
                if f_round - f < 1e-13:
                    break
        total_steps += steps
        if f < best_f - 1e-15 or (abs(f - best_f) <= 1e-15 and _lex_less(a, best_a)):
            best_f, best_a = f, a
    return best_f, best_a, total_steps


def _lex_less(a, b):
    if b is None:
        return True
    for x, y in zip(a, b):
        if (x.real, x.imag) != (y.real, y.imag):
            return (x.real, x.imag) < (y.real, y.imag)
    return False


def l1_lower_constant(xs, budget: Budget | None = None, real: bool = False, warm=(), normalize=True) -> L1Certificate:
    """Best-found minimum of ``||sum a_k x_k / ||x_k|| ||_1`` over ``sum |a_k| = 1``.

    ``real=True`` restricts coefficients to real numbers (sign patterns).  With
    ``normalize=False`` members are used as given.
    """
    budget = budget or Budget()
    fam = xs if isinstance(xs, Family) else Family(xs, normalize=normalize)
    r, alpha, steps = _search(fam, budget, real, warm)
    return L1Certificate(min(r, 1.0) if normalize else r, [], alpha, budget,
                         {"n": fam.n, "real": real, "refine_steps_used": steps})


def tail_delta_schedule(xs, budget: Budget | None = None, real=False, normalize=True,
                        trend_threshold: float = 0.05) -> L1Certificate:
    """``delta_m = 1 - (lower constant of x_m, x_{m+1}, ...)`` for every ``m``.

    Tails are processed from the back; each tail warm-starts from the previous
    witness, so the constants are non-increasing in the tail length by construction.
    """
    budget = budget or Budget()
    fam = xs if isinstance(xs, Family) else Family(xs, normalize=normalize)
    n = fam.n
    if n < 2:
        raise ValueError("tail schedule needs at least two members")
    consts = [0.0] * n
    witness = [None] * n
    prev = None
    for m in range(n - 1, -1, -1):
        sub = fam.sub(range(m, n))
        warm = () if prev is None else (np.concatenate([[0], prev]),)
        r, a, _ = _search(sub, budget, real, warm)
        consts[m], witness[m], prev = r, a, a
    delta = [max(0.0, 1.0 - c) for c in consts]
    half = delta[n // 2:]
    meta = {"constants": consts, "trend_threshold": trend_threshold,
            "supports_almost_isometric": bool(max(half) <= trend_threshold)}
    return L1Certificate(consts[0], delta, witness[0], budget, meta)


@dataclass
class BlockSpec:
    blocks: list                      # [(indices, coefficients)]
    r: float
    requested_delta: list
    tail_constants: list = field(default_factory=list)
    pool_constants: list = field(default_factory=list)
    partial: bool = False
    diagnostic: str = ""

    @property
    def coefficient_sums(self):
        return [float(np.abs(c).sum()) for _, c in self.blocks]

    def elements(self, xs):
        out = []
        for F, lam in self.blocks:
            acc = None
            for i, c in zip(F, lam):
                term = _density(xs[i]) * (c / norm1(_density(xs[i])))
                acc = term if acc is None else acc + term
            out.append(acc)
        return out

    def to_json(self):
        return {"blocks": [{"F": [int(i) for i in F], "lambda": [[float(c.real), float(c.imag)] for c in lam]}
                           for F, lam in self.blocks],
                "r": self.r, "requested_delta": list(map(float, self.requested_delta)),
                "tail_constants": list(map(float, self.tail_constants)),
                "partial": self.partial, "diagnostic": self.diagnostic}


class PreconditionError(ValueError):
    def __init__(self, message, measured=None):
        super().__init__(message)
        self.measured = measured


def james_blocks(xs, r: float, deltas, budget: Budget | None = None, real=False,
                 check=True, tol=1e-9) -> BlockSpec:
    """Greedy James blocking of an r-isomorphic family into an almost isometric one.

    Block ``n`` is the shortest run ``P`` of unused indices whose constant ``c_P``
    satisfies ``c_P <= c_{R_m} / (1 - delta_m)`` for every earlier pool ``R_m``;
    its coefficients are ``alpha / c_P`` for the witness ``alpha`` of ``c_P``.
    Any later combination of blocks is then bounded below by ``(1 - delta_m)``
    times its coefficient mass.
    """
    budget = budget or Budget()
    fam = Family(xs)
    n = fam.n
    deltas = list(deltas)
    if check:
        c_all = l1_lower_constant(fam, budget, real).r
        if c_all < r - tol:
            raise PreconditionError(f"family constant {c_all:.6g} is below r = {r}", c_all)
    blocks, pools, caps = [], [], []
    start = 0
    diagnostic, partial = "", False
    for m, dm in enumerate(deltas):
        if start >= n:
            partial, diagnostic = True, f"ran out of indices after {m} of {len(deltas)} blocks"
            break
        c_pool = l1_lower_constant(fam.sub(range(start, n)), budget, real).r
        pools.append(c_pool)
        caps.append(c_pool / (1 - dm))
        cap = min(caps)
        found = None
        for end in range(start + 1, n + 1):
            cert = l1_lower_constant(fam.sub(range(start, end)), budget, real)
            if cert.r <= cap + 1e-12:
                found = (end, cert)
                break
        if found is None:
            partial = True
            diagnostic = f"no run of unused indices meets the cap {cap:.6g} for block {m + 1}"
            break
        end, cert = found
        lam = cert.witness_alpha / cert.r
        if np.abs(lam).sum() > 1 / r + tol:
            log.warning("block %d coefficient mass %.6g exceeds 1/r", m + 1, np.abs(lam).sum())
        blocks.append((list(range(start, end)), lam))
        start = end
    spec = BlockSpec(blocks, r, deltas[: len(blocks)], pool_constants=pools, partial=partial, diagnostic=diagnostic)
    if len(blocks) >= 2:
        ys = spec.elements(xs)
        sched = tail_delta_schedule(ys, budget, real, normalize=False)
        spec.tail_constants = sched.meta["constants"]
    elif blocks:
        spec.tail_constants = [norm1(spec.elements(xs)[0])]
    return spec


def perturbation_certificate(x_cert: L1Certificate, xs, ys, budget: Budget | None = None,
                             real=False, tol=1e-9) -> L1Certificate:
    """Tail schedule for ``x_n + y_n`` from one for ``x_n``.

    ``delta'_m = delta_m + sup_{n>=m} |1 - ||x_n||/||x_n+y_n||| + sup_{n>=m} ||y_n||/||x_n+y_n||``;
    the result is then checked against directly measured tail constants.
    """
    xs = [_density(x) for x in xs]
    ys = [_density(y) for y in ys]
    if len(xs) != len(ys) or len(x_cert.delta) != len(xs):
        raise ValueError("certificate, xs and ys must have equal length")
    nx = np.array([norm1(x) for x in xs])
    ny = np.array([norm1(y) for y in ys])
    sums = [x + y for x, y in zip(xs, ys)]
    ns = np.array([norm1(s) for s in sums])
    if np.any(ns <= 0):
        raise ValueError(f"x_n + y_n vanishes at n = {int(np.argmin(ns)) + 1}")
    a = np.abs(1 - nx / ns)
    b = ny / ns
    sup_a = np.maximum.accumulate(a[::-1])[::-1]
    sup_b = np.maximum.accumulate(b[::-1])[::-1]
    new_delta = [float(d + sa + sb) for d, sa, sb in zip(x_cert.delta, sup_a, sup_b)]
    measured = tail_delta_schedule(sums, budget, real) if len(sums) >= 2 else None
    consts = measured.meta["constants"] if measured else [1.0]
    valid = all(c >= 1 - d - tol for c, d in zip(consts, new_delta))
    return L1Certificate(measured.r if measured else 1.0, new_delta,
                         measured.witness_alpha if measured else None, budget or Budget(),
                         {"measured_constants": consts, "valid": valid})
