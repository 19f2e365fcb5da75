"""Perturbation inequalities, orthogonal extraction and positive witnesses."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .algebra import (
    Element,
    Projection,
    eigenvalues,
    norm1,
    op_norm,
    sign,
    support,
    trace,
)
from .geometry import Budget, PreconditionError, james_blocks, l1_lower_constant
from .predual import Functional, are_orthogonal, compress, support_mass

log = logging.getLogger(__name__)

TOL = 1e-9


class DegenerateError(ValueError):
    pass


def _digest(*xs) -> str:
    h = hashlib.sha256()
    for x in xs:
        d = x.density if isinstance(x, Functional) else x
        for p in d.parts:
            h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    digest: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_json(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "digest": self.digest}


def _check_ball(*xs, tol=TOL):
    for x in xs:
        if op_norm(x) > 1 + tol:
            raise ValueError(f"element outside the unit ball (norm {op_norm(x):.6g})")


def _check_positive(omega: Functional, tol=TOL):
    D = omega.density
    scale = max(1.0, op_norm(D))
    if op_norm(D - D.H) > tol * scale:
        raise ValueError("functional is not selfadjoint")
    ev, _ = eigenvalues(D)
    if ev.size and ev.min() < -tol * scale:
        raise ValueError(f"functional is not positive (eigenvalue {ev.min():.3e})")


def bound_A4(omega: Functional, a: Element, b: Element, tol=TOL) -> tuple:
    """Reports for ``||a w - w||``, ``||w a - w||`` and ``||b w a - w||`` (w positive)."""
    _check_positive(omega, tol)
    _check_ball(a, b, tol=tol)
    D, n = omega.density, omega.norm
    ga = abs(n - trace(D @ a))
    gb = abs(n - trace(D @ b))
    c = np.sqrt(2 * n)
    dig = _digest(omega, a, b)
    return (
        BoundReport(norm1(a @ D - D), c * np.sqrt(ga), dig),
        BoundReport(norm1(D @ a - D), c * np.sqrt(ga), dig),
        BoundReport(norm1(b @ D @ a - D), c * (np.sqrt(ga) + np.sqrt(gb)), dig),
    )


def bound_A3(phi: Functional, a: Element, b: Element, tol=TOL) -> tuple:
    """Reports for ``||phi - a|phi| ||``, ``|| |phi| - a phi||`` and ``||b phi a - phi||``.

    The third right-hand side is ``(2||phi||)^{1/2} (|n - |phi|(a)| + |n - |phi*|(b)|)^{1/2}``,
    a square root of the sum, as stated for this inequality.
    """
    _check_ball(a, b, tol=tol)
    D, n = phi.density, phi.norm
    absD = phi.abs_density
    absDs = Functional(D.H).abs_density
    c = np.sqrt(2 * n)
    dig = _digest(phi, a, b)
    r1 = BoundReport(norm1(D - a @ absD), c * np.sqrt(abs(n - trace(D.H @ a))), dig)
    r2 = BoundReport(norm1(absD - a @ D), c * np.sqrt(abs(n - trace(D @ a))), dig)
    r3 = BoundReport(norm1(b @ D @ a - D),
                     c * np.sqrt(abs(n - trace(absD @ a)) + abs(n - trace(absDs @ b))), dig)
    return r1, r2, r3


@dataclass
class CompressReport:
    distance: float
    bound: float
    beta: float
    right_mass: float
    left_mass: float

    @property
    def certified(self) -> bool:
        return self.distance < self.bound + TOL


def compress_normalize(sigma: Functional, l: Element, r: Element, beta: float, tol=TOL):
    """``l sigma r / ||l sigma r||`` together with its distance to ``sigma``."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if sigma.norm > 1 + tol:
        raise ValueError(f"functional outside the unit ball (norm {sigma.norm:.6g})")
    rm = support_mass(sigma, r)
    lm = float(np.real(trace(Functional(sigma.density.H).abs_density @ l)))
    if rm < 1 - beta - tol or lm < 1 - beta - tol:
        raise PreconditionError(f"support masses {rm:.6g}, {lm:.6g} below 1 - beta = {1 - beta:.6g}",
                                {"right_mass": rm, "left_mass": lm})
    comp = compress(l, sigma, r)
    if comp.norm <= tol:
        raise DegenerateError("compressed functional vanishes")
    out = comp.normalized()
    rep = CompressReport(sigma.distance(out), 5 * np.sqrt(beta), beta, rm, lm)
    return out, rep


def delta_schedule(n: int, eps: float, exact: bool = False) -> list:
    """``delta_1 = eps`` and ``delta_{k+1}`` the largest ``2^-j`` with
    ``delta_{k+1} + (32 k delta_{k+1})^{1/2} < delta_k``.

    Values shrink roughly like squares, so they are computed as exact fractions;
    pass ``exact=True`` to get them (floats underflow to 0 from about ``n = 8``).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    out = [Fraction(eps)]
    for k in range(1, n):
        prev = out[-1]
        # a power of two just below prev, then walk down until the recursion holds
        d = Fraction(1, 1 << max(1, prev.denominator.bit_length() - prev.numerator.bit_length()))
        while d >= prev:
            d /= 2
        while not (d < prev and 32 * k * d < (prev - d) ** 2):
            d /= 2
        out.append(d)
    return out if exact else [float(d) for d in out]


def check_delta_recursion(deltas) -> bool:
    ds = [Fraction(d) for d in deltas]
    return all(b > 0 and b < a and 32 * k * b < (a - b) ** 2 for k, (a, b) in enumerate(zip(ds, ds[1:]), start=1))


# ---------------------------------------------------------------------------
# orthogonal extraction


def positive_split(densities, corner: Element, order=None) -> list:
    """Pairwise orthogonal projections under ``corner``, one per positive density.

    Splits off the last member against the mean of the others with the exact
    norming element ``sign(c (D_mean - D_last) c)``, then recurses in the positive
    eigenspace.  ``order`` permutes which member is split off first.
    """
    n = len(densities)
    order = list(range(n)) if order is None else list(order)
    out = [None] * n

    def rec(idx, c):
        comp = [c @ densities[i] @ c for i in idx]
        if len(idx) == 1:
            out[idx[0]] = support(comp[0])
            return
        mean = comp[0]
        for x in comp[1:-1]:
            mean = mean + x
        mean = mean / (len(idx) - 1)
        x = sign(mean - comp[-1])
        pos = Projection.of((x @ x + x) * 0.5)
        neg = Projection.of((x @ x - x) * 0.5)
        out[idx[-1]] = support(neg @ comp[-1] @ neg) if norm1(neg @ comp[-1] @ neg) > 0 else neg
        rec(idx[:-1], pos)

    rec(order, corner)
    return out


@dataclass
class ExtractionResult:
    indices: list
    left_projections: list
    right_projections: list
    outputs: list
    distances: list
    eps: float
    certified: bool
    search_log: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def to_json(self):
        return {"indices": list(map(int, self.indices)),
                "left_projections": [p.to_json() for p in self.left_projections],
                "right_projections": [p.to_json() for p in self.right_projections],
                "outputs": [f.to_json() for f in self.outputs],
                "distances": list(map(float, self.distances)), "eps": self.eps,
                "certified": self.certified, "search_log": self.search_log,
                "diagnostics": self.diagnostics}


def _verify_extraction(phis, ps, qs, psis, eps, tol):
    problems = []
    n = len(phis)
    for i in range(n):
        for j in range(i + 1, n):
            if op_norm(ps[i] @ ps[j]) > tol:
                problems.append(f"right projections {i},{j} overlap")
            if op_norm(qs[i] @ qs[j]) > tol:
                problems.append(f"left projections {i},{j} overlap")
            if psis[i] is not None and psis[j] is not None and not are_orthogonal(psis[i], psis[j], tol):
                problems.append(f"outputs {i},{j} not orthogonal")
    dists = []
    for k, (phi, psi) in enumerate(zip(phis, psis)):
        if psi is None:
            dists.append(float("inf"))
            problems.append(f"output {k} degenerate")
            continue
        if abs(psi.norm - 1) > tol:
            problems.append(f"output {k} not normalized")
        d = phi.distance(psi)
        dists.append(d)
        if not d < eps:
            problems.append(f"distance {k} = {d:.3e} not below {eps:.3e}")
    return dists, problems


def finite_orthogonal_extraction(phis, s: Element | None = None, t: Element | None = None,
                                 eps: float = 0.1, strict: bool = False, budget: Budget | None = None,
                                 tol: float = 1e-8, max_orders: int | None = None,
                                 measure: bool = True) -> ExtractionResult:
    """Pairwise orthogonal ``psi_k = q_k phi_k p_k / ||q_k phi_k p_k||`` close to ``phi_k``.

    The right projections come from the positive split of ``|t phi_k s|`` inside
    ``s``, the left ones from ``|s phi_k^* t|`` inside ``t``.  The constant
    ``delta(n, eps)`` is compared with the measured span constant of the
    compressed family; with ``strict`` a shortfall raises, otherwise it is
    logged and the outputs are judged by post-verification alone.
    """
    phis = list(phis)
    n = len(phis)
    if n == 0:
        raise ValueError("empty family")
    shape = phis[0].shape
    one = shape.identity()
    s = one if s is None else s
    t = one if t is None else t
    comp = [compress(t, f, s) for f in phis]
    delta = float(delta_schedule(n, min(eps, 0.5), exact=True)[-1])
    norms = [c.norm for c in comp]
    log_entries = []
    if not measure:
        measured = float("nan")
    elif n > 1 and min(norms) > 0:
        measured = l1_lower_constant(comp, budget, normalize=False).r
    else:
        measured = min(norms)
    entry = {"delta_required": delta, "measured_constant": measured, "compressed_norms": norms}
    log_entries.append(entry)
    ok = (not measure or measured >= 1 - delta - tol) and all(1 - delta - tol < x <= 1 + tol for x in norms)
    if not ok:
        msg = f"compressed family constant {measured:.6g} below 1 - delta = {1 - delta:.6g}"
        if strict:
            raise PreconditionError(msg, measured)
        log.info("%s; continuing with post-verification", msg)
    right = [c.abs_density for c in comp]
    left = [Functional(c.density.H).abs_density for c in comp]
    orders = [list(range(k, n)) + list(range(k)) for k in range(n)]
    orders += [o[::-1] for o in orders]
    if max_orders is not None:
        orders = orders[:max_orders]
    best = None
    for order in orders:
        ps = positive_split(right, s, order)
        qs = positive_split(left, t, order)
        psis = []
        for f, p, q in zip(phis, ps, qs):
            c = compress(q, f, p)
            psis.append(c.normalized() if c.norm > tol else None)
        dists, problems = _verify_extraction(phis, ps, qs, psis, eps, tol)
        log_entries.append({"order": order, "max_distance": max(dists), "problems": problems})
        score = (len(problems) > 0, max(dists))
        if best is None or score < best[0]:
            best = (score, ps, qs, psis, dists, problems)
        if not problems:
            break
    _, ps, qs, psis, dists, problems = best
    return ExtractionResult(list(range(n)), qs, ps, psis, dists, eps, not problems, log_entries, problems)


# ---------------------------------------------------------------------------
# positive witnesses


@dataclass
class WitnessResult:
    indices: list
    a: list
    b: list
    values_a: list
    values_b: list
    threshold: float
    certified: bool
    log: list = field(default_factory=list)

    def to_json(self):
        return {"indices": self.indices, "values_a": self.values_a, "values_b": self.values_b,
                "threshold": self.threshold, "certified": self.certified, "log": self.log}


def _selfadjoint_witness(block: Functional, p: Element) -> Element:
    x = sign(p @ block.density @ p)
    return support(x @ x)


def positive_witnesses(phis, r: float, eps: float, selfadjoint_mode: bool = False, depth: int | None = None,
                       max_blocks: int = 4, budget: Budget | None = None, tol: float = 1e-9,
                       s: Element | None = None, t: Element | None = None) -> WitnessResult:
    """Indices ``m_n`` with pairwise orthogonal positive ``a_n``, ``b_n`` of norm one such that
    ``|phi_{m_n}|(a_n)`` and ``|phi*_{m_n}|(b_n)`` exceed ``(1 - eps) r^2``.

    Each round blocks the surviving indices (James), extracts orthogonal
    projections for up to ``max_blocks`` blocks inside the unused corner, keeps
    the block whose projections leak least onto the other survivors, and drops
    survivors that leak more than ``r^2 eps_n^4 / 72``.  In ``selfadjoint_mode``
    the blocks are real combinations, ``b_n = a_n`` and the target is ``(1 - eps) r``.
    """
    phis = list(phis)
    N = len(phis)
    if not 0 < r <= 1 or not 0 < eps < 1:
        raise ValueError("need 0 < r <= 1 and 0 < eps < 1")
    budget = budget or Budget()
    measured = l1_lower_constant(phis, budget, real=selfadjoint_mode).r
    if measured < r - tol:
        raise PreconditionError(f"measured constant {measured:.6g} below r = {r}", measured)
    threshold = (1 - eps) * (r if selfadjoint_mode else r * r)
    one = phis[0].shape.identity()
    s_cur = one if s is None else s
    t_cur = one if t is None else t
    stars = [Functional(f.density.H) for f in phis]
    avail = list(range(N))
    idx, A, B, va, vb, logs = [], [], [], [], [], []
    n = 0
    while avail and (depth is None or n < depth):
        n += 1
        eps_n = eps * 2.0 ** -n
        fam = [compress(t_cur, phis[m], s_cur) for m in avail]
        live = [k for k, f in enumerate(fam) if f.norm > tol]
        if not live:
            break
        fam_live = [fam[k] for k in live]
        dl = float(delta_schedule(max_blocks, eps_n / 4, exact=True)[-1])
        if len(fam_live) >= 2:
            spec = james_blocks(fam_live, r, [min(eps_n / 4, 0.5)] * max_blocks, budget,
                                real=selfadjoint_mode, check=False)
            blocks = spec.blocks
        else:
            blocks = [([0], np.array([1.0]))]
        if not blocks:
            logs.append({"round": n, "stop": "no block"})
            break
        elems = []
        for F, lam in blocks:
            acc = None
            for i, c in zip(F, lam):
                term = fam_live[i].density * (c / fam_live[i].norm)
                acc = term if acc is None else acc + term
            elems.append(Functional(acc))
        ext = finite_orthogonal_extraction(elems, s_cur, t_cur, eps_n / 4, budget=budget, max_orders=2,
                                           measure=False)
        cands = []
        for k, (F, _) in enumerate(blocks):
            if selfadjoint_mode:
                a = _selfadjoint_witness(elems[k], ext.right_projections[k])
                b = a
            else:
                a, b = ext.right_projections[k], ext.left_projections[k]
            if norm1(a) == 0 or norm1(b) == 0:
                continue
            members = {avail[live[i]] for i in F}
            others = [m for m in avail if m not in members]
            leak = max([max(support_mass(phis[m], a), support_mass(stars[m], b)) for m in others], default=0.0)
            cands.append((leak, k, a, b, members))
        if not cands:
            logs.append({"round": n, "stop": "no usable projection"})
            break
        cands.sort(key=lambda c: (c[0], c[1]))
        leak, k, a, b, members = cands[0]
        score = {m: min(support_mass(phis[m], a), support_mass(stars[m], b)) for m in members}
        m_n = max(sorted(score), key=lambda m: score[m])
        idx.append(m_n)
        A.append(a)
        B.append(b)
        va.append(support_mass(phis[m_n], a))
        vb.append(support_mass(stars[m_n], b))
        thr = r * r * eps_n ** 4 / 72
        dropped = [m for m in avail if m not in members
                   and (support_mass(phis[m], a) > thr or support_mass(stars[m], b) > thr)]
        avail = [m for m in avail if m not in members and m not in dropped]
        s_cur = s_cur - a
        t_cur = t_cur - b
        logs.append({"round": n, "block": sorted(members), "index": m_n, "leak": leak,
                     "dropped": dropped, "value_a": va[-1], "value_b": vb[-1],
                     "delta_block": dl, "extraction_certified": ext.certified})
    ok = bool(idx) and all(v > threshold - tol for v in va + vb)
    for i in range(len(A)):
        for j in range(i + 1, len(A)):
            if op_norm(A[i] @ A[j]) > 1e-8 or op_norm(B[i] @ B[j]) > 1e-8:
                ok = False
    return WitnessResult(idx, A, B, va, vb, threshold, ok, logs)
