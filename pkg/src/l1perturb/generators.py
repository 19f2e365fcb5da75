"""Sequence generators for the experiments.

Commutative models live on ``N`` atoms of weight ``1/N`` (a discretized unit
interval, each atom carrying the cell average of the continuous function, so
L1 norms are exact).  Elements are produced on demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algebra import AlgebraShape, build_algebra, norm1, random_suite
from .predual import Functional

GENERATORS = ("remark1", "remark2", "remark2_unbounded", "disjoint_supports",
              "orthogonal_plus_noise", "matrix_corner", "random_density")

DEFAULT_ATOMS = 1 << 20


class UnknownGenerator(ValueError):
    pass


@dataclass
class LazySequence:
    """Indexable prefix whose elements are built on access; ``labels`` are the original indices."""

    shape: AlgebraShape
    labels: list
    make: Callable

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return self.make(self.labels[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


_SHAPES: dict = {}


def interval_shape(N: int) -> AlgebraShape:
    if N not in _SHAPES:
        _SHAPES[N] = build_algebra([1] * N, [1.0 / N] * N)
    return _SHAPES[N]


def _cell_overlap(N, a, b):
    """Length of each cell ``[i/N, (i+1)/N)`` inside ``[a, b)``, times ``N``."""
    edges = np.arange(N + 1) / N
    lo = np.maximum(edges[:-1], a)
    hi = np.minimum(edges[1:], b)
    return np.clip(hi - lo, 0, None) * N


def remark1_values(n, N):
    return n * _cell_overlap(N, 0.0, 1.0 / n)


def remark2_values(n, N):
    return n * n * _cell_overlap(N, 1.0 / (n + 1), 1.0 / n) + 1.0 / n


def _check_positive_int(name, v, low=1):
    if not isinstance(v, (int, np.integer)) or v < low:
        raise ValueError(f"{name} must be an integer >= {low}")


def _labels(params, N, default_length):
    if "indices" in params:
        labels = [int(i) for i in params["indices"]]
    elif params.get("dyadic"):
        labels = [1 << j for j in range(N.bit_length()) if (1 << j) <= N]
    else:
        labels = list(range(1, params.get("length", default_length) + 1))
    if any(i < 1 for i in labels):
        raise ValueError("indices start at 1")
    return labels


def generate_sequence(name: str, params: dict | None = None, shape: AlgebraShape | None = None, seed: int = 0):
    """Build a named prefix.  See ``GENERATORS`` for the accepted names."""
    params = dict(params or {})
    if name not in GENERATORS:
        raise UnknownGenerator(f"unknown generator {name!r}; choose from {GENERATORS}")
    if name in ("remark1", "remark2", "remark2_unbounded"):
        N = params.get("N", DEFAULT_ATOMS)
        _check_positive_int("N", N, 2)
        sh = interval_shape(N)
        labels = _labels(params, N, 16)
        if name == "remark1":
            if max(labels) > N:
                raise ValueError("remark1 indices are capped at N")
            return LazySequence(sh, labels, lambda n: sh.diagonal(remark1_values(n, N)))
        if name == "remark2":
            return LazySequence(sh, labels, lambda n: sh.diagonal(remark2_values(n, N)))
        return LazySequence(sh, labels, lambda n: sh.diagonal(n * n * remark2_values(n, N)))
    if name == "disjoint_supports":
        return _disjoint(params, shape, seed)
    if name == "orthogonal_plus_noise":
        return _orthogonal_plus_noise(params, seed)
    if name == "matrix_corner":
        return _matrix_corner(params, seed)
    return _random_density(params, shape, seed)


def _disjoint(params, shape, seed):
    n = params.get("length", 8)
    _check_positive_int("length", n)
    sh = shape or build_algebra([1] * n, [1.0 / n] * n)
    slots = [(j, i) for j, d in enumerate(sh.dims) for i in range(d)]
    if n > len(slots):
        raise ValueError("not enough diagonal positions for disjoint supports")
    phases = np.exp(2j * np.pi * np.random.default_rng(seed).random(n))

    def make(k):
        j, i = slots[k - 1]
        blocks = [np.zeros((d, d), complex) for d in sh.dims]
        blocks[j][i, i] = phases[k - 1] / sh.weights[j]
        return sh.from_blocks(blocks)

    return LazySequence(sh, list(range(1, n + 1)), make)


def _orthogonal_plus_noise(params, seed):
    n = params.get("length", 8)
    d = params.get("d", n)
    noise = float(params.get("noise", 1e-3))
    _check_positive_int("length", n)
    if d < n:
        raise ValueError("need d >= length for orthogonal frames")
    if not 0 <= noise < 1:
        raise ValueError("noise must lie in [0, 1)")
    sh = build_algebra([d], [1.0])
    rng = np.random.default_rng(seed)
    v = random_suite(sh, "unitary", int(rng.integers(2**63))).blocks[0]
    w = random_suite(sh, "unitary", int(rng.integers(2**63))).blocks[0]
    G = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))

    def make(k):
        E = np.outer(v[:, k - 1], w[:, k - 1].conj())
        g = G[k - 1] / np.linalg.svd(G[k - 1], compute_uv=False).sum()
        return Functional(sh.from_blocks([E + noise * g])).normalized()

    return LazySequence(sh, list(range(1, n + 1)), make)


def _matrix_corner(params, seed):
    d = params.get("d", 16)
    n = params.get("length", 5)
    rotate = params.get("rotate", True)
    _check_positive_int("d", d, 2)
    sh = build_algebra([d], [1.0 / d])
    rng = np.random.default_rng(seed)
    us = [random_suite(sh, "unitary", int(rng.integers(2**63))).blocks[0] if rotate else np.eye(d)
          for _ in range(2 * n)]

    def make(k):
        size = max(1, d >> k)
        P = np.zeros((d, d))
        P[:size, :size] = np.eye(size)
        m = us[2 * k - 2] @ P @ us[2 * k - 1].conj().T / (size / d)
        return sh.from_blocks([m])

    return LazySequence(sh, list(range(1, n + 1)), make)


def _random_density(params, shape, seed):
    n = params.get("length", 4)
    sh = shape or build_algebra([2, 2], [1.0, 1.0])
    base = np.random.default_rng(seed).integers(2**63, size=n)

    def make(k):
        x = random_suite(sh, "generic", int(base[k - 1]))
        return Functional(x / norm1(x))

    return LazySequence(sh, list(range(1, n + 1)), make)


def duplicated_orthogonal_family(pairs: int, signed: bool = False, functional: bool = True):
    """Planted family with lower constant exactly 1/2.

    Member ``2k-1`` is an atom ``a_k``, member ``2k`` is ``(a_k + 2 b_k)/3`` (or
    ``(a_k - 2 b_k)/3`` when ``signed``) with ``b_k`` a second atom, all atoms
    disjoint and normalized.  The best combination of a pair cancels ``a_k``.
    """
    N = 2 * pairs
    sh = interval_shape(N)
    out = []
    for k in range(pairs):
        a = np.zeros(N)
        b = np.zeros(N)
        a[2 * k] = N
        b[2 * k + 1] = N
        out.append(sh.diagonal(a))
        out.append(sh.diagonal((a + (-2 if signed else 2) * b) / 3))
    return [Functional(x) for x in out] if functional else out
