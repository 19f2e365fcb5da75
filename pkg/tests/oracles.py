"""Independent reference computations used by the tests.

Nothing here imports the search or inequality code under test; densities are turned
into dense block-diagonal matrices and measured with plain SVDs.
"""

import itertools

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import minimize


def dense(x):
    return block_diag(*x.blocks)


def weight_matrix(shape):
    return np.concatenate([np.full(d, w) for d, w in zip(shape.dims, shape.weights)])


def trace_norm(x):
    total = 0.0
    for m, w in zip(x.blocks, x.shape.weights):
        total += w * np.linalg.svd(m, compute_uv=False).sum()
    return total


def naive_matmul(a, b):
    n = a.shape[0]
    out = np.zeros((n, b.shape[1]), complex)
    for i in range(n):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def combo_norm(blocks_per_member, weights, alpha):
    total = 0.0
    for j, w in enumerate(weights):
        m = sum(a * blocks[j] for a, blocks in zip(alpha, blocks_per_member))
        total += w * np.linalg.svd(m, compute_uv=False).sum()
    return total


def l1_constant_oracle(xs, phases=36, simplex=40, polish=8):
    """Dense grid over phase and simplex, then Nelder-Mead polish of the best points."""
    bl = []
    for x in xs:
        nrm = trace_norm(x)
        bl.append([m / nrm for m in x.blocks])
    weights = xs[0].shape.weights
    n = len(xs)

    def f_param(v):
        mags = np.abs(v[:n])
        if mags.sum() == 0:
            return np.inf
        mags = mags / mags.sum()
        th = np.concatenate([[0.0], v[n:]])
        return combo_norm(bl, weights, mags * np.exp(1j * th))

    pts = []
    for c in itertools.product(range(simplex + 1), repeat=n - 1):
        if sum(c) <= simplex:
            pts.append(np.array(list(c) + [simplex - sum(c)], float) / simplex)
    pts = np.array(pts)
    angles = 2 * np.pi * np.arange(phases) / phases
    ths = np.array(list(itertools.product(angles, repeat=n - 1)))
    V = np.concatenate([np.repeat(pts, len(ths), axis=0), np.tile(ths, (len(pts), 1))], axis=1)
    coef = V[:, :n] * np.exp(1j * np.concatenate([np.zeros((len(V), 1)), V[:, n:]], axis=1))
    vals = np.zeros(len(V))
    for j, w in enumerate(weights):
        stack = np.stack([b[j] for b in bl])          # (n, d, d)
        mats = np.einsum("bk,kij->bij", coef, stack)
        vals += w * np.linalg.svd(mats, compute_uv=False).sum(-1)
    order = np.argsort(vals)
    best = vals[order[0]]
    for v in V[order[:polish]]:
        res = minimize(f_param, v, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = min(best, res.fun)
    return best


def intersection_dim(p, q):
    """Dimension of range(p) and range(q) intersection from ranks: dim(P)+dim(Q)-dim(P+Q)."""
    rp = np.linalg.matrix_rank(p, tol=1e-8)
    rq = np.linalg.matrix_rank(q, tol=1e-8)
    rpq = np.linalg.matrix_rank(np.hstack([p, q]), tol=1e-8)
    return rp + rq - rpq


def eigen_count_above(x, eps):
    """tau-mass of |x| strictly above eps by direct eigenvalue enumeration."""
    total = 0.0
    for m, w in zip(x.blocks, x.shape.weights):
        ev = np.linalg.eigvalsh(m.conj().T @ m)
        sv = np.sqrt(np.clip(ev, 0, None))
        total += w * np.count_nonzero(sv > eps)
    return total
