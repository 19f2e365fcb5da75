"""Drivers turning tau-null or almost isometric prefixes into orthogonal ones."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    Projection,
    abs_polar,
    is_orthogonal_elements,
    norm1,
    op_norm,
    proj_meet_join,
    spectral_projection,
    trace,
)
from .geometry import Budget, PreconditionError, l1_lower_constant, tail_delta_schedule
from .measure import exceedance, gauge, tau_null_evidence
from .perturbation import finite_orthogonal_extraction
from .predual import Functional, are_orthogonal, compress, support_mass

log = logging.getLogger(__name__)


@dataclass
class OrthogonalizationLedger:
    indices: list
    outputs: list
    bounds: list
    distances: list
    gauges: list
    schedules: dict
    stages: list
    requested_depth: int
    certified: bool = True
    diagnostics: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.indices)

    @property
    def partial(self) -> bool:
        return self.depth < self.requested_depth

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["l", "index", "bound", "measured_distance", "gauge"])
        for l, (i, b, d, g) in enumerate(zip(self.indices, self.bounds, self.distances, self.gauges), start=1):
            wr.writerow([l, i, repr(float(b)), repr(float(d)), repr(float(g))])
        return buf.getvalue()

    def to_json(self):
        return {"indices": [int(i) for i in self.indices], "bounds": list(map(float, self.bounds)),
                "distances": list(map(float, self.distances)), "gauges": list(map(float, self.gauges)),
                "schedules": self.schedules, "stages": self.stages, "requested_depth": self.requested_depth,
                "depth": self.depth, "partial": self.partial, "certified": self.certified,
                "diagnostics": self.diagnostics}


def _label(xs, i):
    labels = getattr(xs, "labels", None)
    return labels[i] if labels is not None else i + 1


def _select(xs, depth, tau1):
    """Gated left-to-right scan; returns (positions, p_l, delta_l, eps_l)."""
    pos, ps, deltas, epss, sups = [], [], [], [], []
    start = 0
    n = len(xs)
    for l in range(1, depth + 1):
        eps_l = 2.0 ** -l / tau1
        found = None
        for i in range(start, n):
            x = xs[i]
            sup = op_norm(x)
            if sup == 0:
                continue
            mass = exceedance(x, eps_l)
            if l == 1:
                delta_l = 2 * mass + 2.0 ** -l
                found = (i, x, sup, delta_l)
                break
            delta_l = 2.0 ** -l / max(sups)
            if mass < delta_l:
                found = (i, x, sup, delta_l)
                break
        if found is None:
            break
        i, x, sup, delta_l = found
        _, absx = abs_polar(x)
        pos.append(i)
        ps.append(spectral_projection(absx, eps_l, "strict_above"))
        deltas.append(delta_l)
        epss.append(eps_l)
        sups.append(sup)
        start = i + 1
    return pos, ps, deltas, epss, sups


def _right_stage(xs_sel, ps, epss, sups, tau1):
    """``y_l = x_l (p_l ^ q_l)`` with ``q_l = 1 - sup_{m>l} p_m`` and the chain bound."""
    L = len(xs_sel)
    shape = xs_sel[0].shape
    one = shape.identity()
    outs, chain = [], []
    tail = Projection.of(shape.zeros())
    tails = [None] * L
    for l in range(L - 1, -1, -1):
        tails[l] = tail
        tail = proj_meet_join(tail, ps[l])[1]
    for l in range(L):
        q = Projection.of(one - tails[l])
        meet, _ = proj_meet_join(ps[l], q)
        outs.append(xs_sel[l] @ meet)
        later = sum(float(np.real(trace(ps[m]))) for m in range(l + 1, L))
        chain.append(epss[l] * tau1 + sups[l] * later)
    return outs, chain


def _left_orthogonal(ys, tol=1e-9):
    lefts = []
    for y in ys:
        u, _ = abs_polar(y)
        lefts.append(u @ u.H)
    return all(op_norm(lefts[i] @ lefts[j]) <= tol
               for i in range(len(ys)) for j in range(i + 1, len(ys)))


def tau_null_orthogonalize(xs, depth: int = 10, tol: float = 1e-9) -> OrthogonalizationLedger:
    """Pairwise orthogonal ``y_l`` close to a gated subsequence of a tau-null prefix.

    Index ``l`` is the first later element whose mass above ``2^-l / tau(1)`` is
    below ``2^-l / max_{m<l} ||x_m||_inf``; zero elements are skipped.  Right
    supports are separated first; if left supports still overlap, the same
    procedure runs on the adjoints and its bounds are added.
    """
    if len(xs) == 0:
        raise ValueError("empty prefix")
    shape = xs[0].shape
    tau1 = shape.tau_unit
    if all(op_norm(xs[i]) == 0 for i in range(len(xs))):
        L = min(depth, len(xs))
        z = shape.zeros()
        return OrthogonalizationLedger([_label(xs, i) for i in range(L)], [z] * L, [0.0] * L,
                                       [0.0] * L, [0.0] * L, {}, ["zero"] * L, depth)
    pos, ps, deltas, epss, sups = _select(xs, depth, tau1)
    sel = [xs[i] for i in pos]
    ys, chain = _right_stage(sel, ps, epss, sups, tau1)
    stages = ["right"] * len(ys)
    bounds = [max(c, 0.0) for c in chain]
    indices = [_label(xs, i) for i in pos]
    diagnostics = []
    if ys and not _left_orthogonal(ys):
        # adjoint pass: the y_l* are again tau-null, so gate and cut once more
        adj = [y.H for y in ys]
        pos2, ps2, _, epss2, sups2 = _select(adj, len(adj), tau1)
        ys2, chain2 = _right_stage([adj[i] for i in pos2], ps2, epss2, sups2, tau1)
        ys = [y.H for y in ys2]
        bounds = [bounds[i] + c for i, c in zip(pos2, chain2)]
        indices = [indices[i] for i in pos2]
        sel = [sel[i] for i in pos2]
        stages = ["right+adjoint"] * len(ys)
        diagnostics.append(f"adjoint pass kept {len(ys)} of {len(pos)} rows")
    dists = [norm1(x - y) for x, y in zip(sel, ys)]
    gauges = [gauge(y) for y in ys]
    certified = all(d <= b + tol for d, b in zip(dists, bounds))
    certified &= all(d <= 2.0 ** -l + tol for l, d in enumerate(dists, start=1)) if stages[:1] == ["right"] else True
    for i in range(len(ys)):
        for j in range(i + 1, len(ys)):
            if not is_orthogonal_elements(ys[i], ys[j], tol):
                certified = False
                diagnostics.append(f"outputs {i + 1},{j + 1} not orthogonal")
    if len(ys) < depth:
        diagnostics.append(f"prefix exhausted at depth {len(ys)} of {depth}")
    sched = {"epsilon": epss, "delta": deltas}
    return OrthogonalizationLedger(indices, ys, bounds, dists, gauges, sched, stages, depth, certified, diagnostics)


def default_eta(eps: float = 0.1):
    return lambda n: eps * 2.0 ** -n


def almost_isometric_orthogonalize(phis, eta=None, depth: int | None = None, window: int = 4,
                                   budget: Budget | None = None, check: bool = True,
                                   tol: float = 1e-9) -> OrthogonalizationLedger:
    """Finite-depth orthogonalization of a family spanning l1 almost isometrically.

    Step ``n + 1`` tries the next ``window`` unused indices ``m``; for each it
    extracts projections ``p, q`` for ``phi_m`` against the current outputs,
    compresses the outputs into ``1 - q`` / ``1 - p`` and re-orthogonalizes them at
    accuracy ``eta_{n+1}``.  The leftmost candidate that certifies is kept; its
    overlap with the current outputs is logged.  Each output then satisfies
    ``||phi_{m_k} - psi_k|| <= eta_k + sum_{l>k} eta_l``.
    """
    phis = list(phis)
    eta = eta or default_eta()
    etas_fn = eta if callable(eta) else (lambda n, e=list(eta): e[n - 1])
    depth = depth or len(phis)
    if depth > len(phis):
        raise ValueError("depth exceeds the prefix length")
    etas = [float(etas_fn(n)) for n in range(1, depth + 1)]
    sched = {"eta": etas, "eta_sum": float(sum(etas))}
    if check and len(phis) > 1:
        measured = l1_lower_constant(phis, budget).r
        sched["measured_constant"] = measured
        if measured < 1 - etas[-1] - tol:
            raise PreconditionError(f"measured constant {measured:.6g} below 1 - eta_N = {1 - etas[-1]:.6g}",
                                    measured)
    one = phis[0].shape.identity()
    psis = [phis[0]]
    chosen = [0]
    first = [0.0]                   # distance at creation
    drifts = [[]]
    overlaps = []
    diagnostics, certified = [], True
    for n in range(1, depth):
        e = etas[n]
        room = len(phis) - (depth - n) + 1   # leave enough indices for the later steps
        cands = list(range(chosen[-1] + 1, room))[:window]
        if not cands:
            diagnostics.append(f"no candidates left at step {n + 1}")
            certified = False
            break
        trials = []
        for m in cands:
            ext = finite_orthogonal_extraction(psis + [phis[m]], eps=e, budget=budget, measure=False)
            p, q = ext.right_projections[-1], ext.left_projections[-1]
            overlap = sum(support_mass(f, p) + support_mass(Functional(f.density.H), q) for f in psis)
            s, t = one - p, one - q
            re = finite_orthogonal_extraction(psis, s, t, e / 2, budget=budget, measure=False)
            new_psis = list(re.outputs)
            new = compress(q, phis[m], p)
            new = new.normalized() if new.norm > tol else None
            drift = [f.distance(g) if g is not None else np.inf for f, g in zip(psis, new_psis)]
            dist_new = phis[m].distance(new) if new is not None else np.inf
            ok = new is not None and all(d < e for d in drift) and dist_new < e and None not in new_psis
            trials.append((not ok, overlap, m, new_psis, new, drift, dist_new))
            if ok:
                break
        trials.sort(key=lambda tr: (tr[0], tr[2]))
        bad, overlap, m, new_psis, new, drift, dist_new = trials[0]
        overlaps.append(overlap)
        if bad:
            certified = False
            diagnostics.append(f"step {n + 1}: no candidate certified (best index {m + 1})")
            if new is None or None in new_psis:
                break
        psis = new_psis + [new]
        for k, d in enumerate(drift):
            drifts[k].append(d)
        drifts.append([])
        chosen.append(m)
        first.append(dist_new)
    N = len(psis)
    dists = [phis[m].distance(psi) for m, psi in zip(chosen, psis)]
    bounds = [etas[k] + sum(etas[k + 1:N]) for k in range(N)]
    for k in range(N):
        if not dists[k] <= bounds[k] + tol:
            certified = False
            diagnostics.append(f"row {k + 1}: distance {dists[k]:.3e} exceeds bound {bounds[k]:.3e}")
        for j in range(k + 1, N):
            if not are_orthogonal(psis[k], psis[j], 1e-8):
                certified = False
                diagnostics.append(f"outputs {k + 1},{j + 1} not orthogonal")
    sched["creation_distance"] = first
    sched["drift"] = drifts
    sched["overlap"] = overlaps
    gauges = [gauge(p.density) for p in psis]
    labels = [_label(phis, m) if hasattr(phis, "labels") else m + 1 for m in chosen]
    return OrthogonalizationLedger(labels, psis, bounds, dists, gauges, sched, ["extract"] * N, depth,
                                   certified, diagnostics)


@dataclass
class ProbeReport:
    verdict: str
    norms: list
    gauges: list
    subsequence: list
    tail_delta: list
    thresholds: dict
    gauge_decreasing: bool
    tau_null_evidence: bool
    norm_floor: float

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


VERDICTS = ("norm-null-evidence", "l1-evidence", "mixed/inconclusive")


def trichotomy_probe(xs, budget: Budget | None = None, norm_null: float = 1e-2, delta_max: float = 0.05,
                     min_subsequence: int = 3, max_subsequence: int = 6) -> ProbeReport:
    """Descriptive classification of a prefix: norm-null or spanning l1 almost isometrically.

    The probe greedily picks a subsequence, accepting an element when its pair
    constant with the last accepted one is at least ``1 - 2^-k`` (``k`` the
    number accepted so far), and reports the tail schedule of that subsequence.
    Almost isometric and asymptotic spans cannot be told apart on a finite
    prefix, so both fall under ``l1-evidence``.
    """
    xs_list = [xs[i] for i in range(len(xs))]
    if not xs_list:
        raise ValueError("empty prefix")
    dens = [x.density if isinstance(x, Functional) else x for x in xs_list]
    norms = [norm1(x) for x in dens]
    gauges = [gauge(x) for x in dens]
    ev = tau_null_evidence(dens, threshold=0.5 * gauges[0] if gauges[0] > 0 else 1e-2)
    gauge_dec = bool(gauges[-1] < 0.5 * gauges[0])
    labels = [_label(xs, i) for i in range(len(dens))]
    nz = [i for i, v in enumerate(norms) if v > 0]
    sub = []
    if nz:
        sub = [nz[0]]
        for i in nz[1:]:
            if len(sub) >= max_subsequence:
                break
            c = l1_lower_constant([dens[sub[-1]], dens[i]], budget).r
            if c >= 1 - 2.0 ** -len(sub):
                sub.append(i)
    tail = []
    if len(sub) >= 2:
        tail = tail_delta_schedule([dens[i] for i in sub], budget).delta
    norm_floor = min(norms)
    if norms[-1] <= norm_null * max(norms[0], 1e-300) and norms[-1] <= norms[0]:
        verdict = VERDICTS[0]
    elif len(sub) >= min_subsequence and max(tail[len(tail) // 2:]) <= delta_max and norm_floor > 0:
        verdict = VERDICTS[1]
    else:
        verdict = VERDICTS[2]
    thresholds = {"norm_null_ratio": norm_null, "delta_max": delta_max, "min_subsequence": min_subsequence,
                  "pair_acceptance": "1 - 2^-k", "gauge_decrease_factor": 0.5}
    return ProbeReport(verdict, norms, gauges, [labels[i] for i in sub], tail, thresholds,
                       gauge_dec, bool(ev.final_below), norm_floor)
