"""Finite-dimensional von Neumann algebras with a weighted faithful trace.

An algebra is a direct sum of full matrix blocks ``M_{n_1} + ... + M_{n_k}``
with trace ``tau(x) = sum_j w_j tr(x_j)``.  Elements are stored grouped: runs of
consecutive blocks of equal size are stacked into one ``(count, d, d)`` array,
so that a commutative algebra with a million atoms costs a single vectorized
array instead of a million tiny matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPECTRAL_REL_TOL = 1e-12
BASE_TOL = 1e-9

KINDS = ("generic", "selfadjoint", "positive", "projection", "unitary")


class ShapeMismatch(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class AlgebraShape:
    dims: tuple
    weights: tuple
    groups: tuple = field(init=False, repr=False, compare=False)
    group_weights: tuple = field(init=False, repr=False, compare=False)
    tau_unit: float = field(init=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        weights = tuple(float(w) for w in self.weights)
        if not dims or len(dims) != len(weights):
            raise ValueError("dims and weights must be non-empty and of equal length")
        if min(dims) < 1:
            raise ValueError("block dimensions must be positive")
        w = np.asarray(weights)
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("trace weights must be finite and positive")
        d = np.asarray(dims)
        cuts = np.flatnonzero(np.diff(d)) + 1
        starts = np.concatenate([[0], cuts])
        stops = np.concatenate([cuts, [len(d)]])
        groups = tuple((int(d[a]), int(a), int(b)) for a, b in zip(starts, stops))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "groups", groups)
        gw = []
        for _, a, b in groups:
            arr = w[a:b].copy()
            arr.setflags(write=False)
            gw.append(arr)
        object.__setattr__(self, "group_weights", tuple(gw))
        object.__setattr__(self, "tau_unit", float(np.dot(w, d)))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, AlgebraShape):
            return NotImplemented
        return self.dims == other.dims and self.weights == other.weights

    def __hash__(self):
        return hash((len(self.dims), self.dims[:8], self.weights[:8]))

    @property
    def max_block(self) -> int:
        return max(g[0] for g in self.groups)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def zeros(self) -> "Element":
        return Element(self, tuple(np.zeros((b - a, d, d), complex) for d, a, b in self.groups))

    def identity(self) -> "Element":
        parts = []
        for d, a, b in self.groups:
            parts.append(np.broadcast_to(np.eye(d, dtype=complex), (b - a, d, d)).copy())
        return Element(self, tuple(parts))

    def from_blocks(self, blocks) -> "Element":
        blocks = [np.asarray(m, dtype=complex) for m in blocks]
        if len(blocks) != len(self.dims):
            raise ShapeMismatch(f"expected {len(self.dims)} blocks, got {len(blocks)}")
        for j, (m, n) in enumerate(zip(blocks, self.dims)):
            if m.shape != (n, n):
                raise ShapeMismatch(f"block {j} has shape {m.shape}, expected {(n, n)}")
        return Element(self, tuple(np.stack(blocks[a:b]) for _, a, b in self.groups))

    def diagonal(self, values) -> "Element":
        """Element of a commutative algebra (all blocks 1x1) from its atom values."""
        if self.max_block != 1:
            raise ShapeMismatch("diagonal() needs an algebra of 1x1 blocks")
        v = np.asarray(values, dtype=complex).reshape(-1, 1, 1)
        if v.shape[0] != len(self.dims):
            raise ShapeMismatch("wrong number of atom values")
        return Element(self, (v,))

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "weights": list(self.weights)}


def build_algebra(dims, weights) -> AlgebraShape:
    return AlgebraShape(tuple(dims), tuple(weights))


def _check_same(x: "Element", y: "Element"):
    if not (x.shape is y.shape or x.shape == y.shape):
        raise ShapeMismatch("elements live in different algebras")


@dataclass(frozen=True, eq=False)
class Element:
    """Block-diagonal matrix; read as an operator or as a trace-class density."""

    shape: AlgebraShape
    parts: tuple

    def __post_init__(self):
        if len(self.parts) != len(self.shape.groups):
            raise ShapeMismatch("part count does not match the algebra")
        for p, (d, a, b) in zip(self.parts, self.shape.groups):
            if p.shape != (b - a, d, d):
                raise ShapeMismatch(f"part of shape {p.shape}, expected {(b - a, d, d)}")
            if p.flags.writeable:
                p.setflags(write=False)

    @property
    def blocks(self) -> list:
        return [m for p in self.parts for m in p]

    def _map(self, fn) -> "Element":
        return Element(self.shape, tuple(fn(p) for p in self.parts))

    def _zip(self, other, fn) -> "Element":
        _check_same(self, other)
        return Element(self.shape, tuple(fn(p, q) for p, q in zip(self.parts, other.parts)))

    def __add__(self, other):
        return self._zip(other, np.add)

    def __sub__(self, other):
        return self._zip(other, np.subtract)

    def __neg__(self):
        return self._map(np.negative)

    def __matmul__(self, other):
        return self._zip(other, _matmul)

    def __mul__(self, c):
        if isinstance(c, Element):
            return NotImplemented
        return self._map(lambda p: p * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._map(lambda p: p / c)

    @property
    def H(self) -> "Element":
        return self._map(lambda p: np.conj(np.swapaxes(p, -1, -2)))

    def trace(self) -> complex:
        return trace(self)

    def norm(self, p=1) -> float:
        return schatten_norm(self, p)

    def is_selfadjoint(self, tol=None) -> bool:
        scale = op_norm(self)
        if tol is None:
            tol = default_tol(self)
        return op_norm(self - self.H) <= tol * max(scale, 1.0)

    def allclose(self, other, atol=1e-12) -> bool:
        _check_same(self, other)
        return all(np.allclose(p, q, rtol=0, atol=atol) for p, q in zip(self.parts, other.parts))

    def to_json(self) -> dict:
        out = self.shape.to_json()
        out["blocks"] = [np.stack([m.real.ravel(), m.imag.ravel()], axis=1).tolist() for m in self.blocks]
        return out

    @classmethod
    def from_json(cls, doc: dict, shape: AlgebraShape | None = None) -> "Element":
        if shape is None:
            shape = build_algebra(doc["dims"], doc["weights"])
        blocks = []
        for n, flat in zip(shape.dims, doc["blocks"]):
            arr = np.asarray(flat, dtype=float)
            if arr.shape != (n * n, 2):
                raise ShapeMismatch(f"serialized block has shape {arr.shape}, expected {(n * n, 2)}")
            blocks.append((arr[:, 0] + 1j * arr[:, 1]).reshape(n, n))
        return shape.from_blocks(blocks)


class Projection(Element):
    """An element with p = p* = p^2.  Use :meth:`verified` to construct from data."""

    @classmethod
    def of(cls, x: Element) -> "Projection":
        return cls(x.shape, x.parts)

    @classmethod
    def verified(cls, x: Element, tol=None) -> "Projection":
        problems = projection_defects(x, tol)
        if problems:
            raise ValueError("not a projection: " + "; ".join(problems))
        return cls.of(x)

    def complement(self) -> "Projection":
        return Projection.of(self.shape.identity() - self)

    def closure(self) -> "Projection":
        # every projection of a finite-dimensional algebra is open and closed
        return self


def projection_defects(x: Element, tol=None) -> list:
    if tol is None:
        tol = default_tol(x)
    out = []
    if op_norm(x @ x - x) > tol:
        out.append("p^2 != p")
    if op_norm(x - x.H) > tol:
        out.append("p* != p")
    else:
        ev = np.concatenate([np.ravel(v) for v in _eigvalsh_parts(x)])
        if ev.size and np.max(np.minimum(np.abs(ev), np.abs(ev - 1))) > tol:
            out.append("spectrum not in {0, 1}")
    return out


def _matmul(p, q):
    if p.shape[-1] == 1:
        return p * q
    return np.matmul(p, q)


def default_tol(*xs, base=BASE_TOL) -> float:
    """Absolute tolerance ``base * max(1, ||x||_inf) * largest block size``."""
    scale = max([1.0] + [op_norm(x) for x in xs])
    dim = max([1] + [x.shape.max_block for x in xs])
    return base * scale * dim


def trace(x: Element) -> complex:
    total = 0j
    for p, w in zip(x.parts, x.shape.group_weights):
        total += np.dot(w, np.trace(p, axis1=-2, axis2=-1))
    return complex(total)


def arithmetic(x: Element, y: Element | complex | None, op: str) -> Element:
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x @ y
    if op == "scale":
        return x * y
    if op == "adjoint":
        return x.H
    raise ValueError(f"unknown operation {op!r}")


def _singular_values(p):
    if p.shape[-1] == 1:
        return np.abs(p[..., 0])
    try:
        return np.linalg.svd(p, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular value decomposition failed: {exc}") from exc


def singular_values(x: Element) -> list:
    """Per group: array ``(count, d)`` of singular values, descending within a block."""
    return [_singular_values(p) for p in x.parts]


def op_norm(x: Element) -> float:
    m = 0.0
    for p in x.parts:
        if p.size:
            m = max(m, float(np.max(_singular_values(p))))
    return m


def schatten_norm(x: Element, p=1) -> float:
    if p != np.inf and not p >= 1:
        raise ValueError("Schatten exponent must be >= 1 or inf")
    if p == np.inf:
        return op_norm(x)
    total = 0.0
    for s, w in zip(singular_values(x), x.shape.group_weights):
        if p == 1:
            total += float(np.dot(w, s.sum(axis=-1)))
        else:
            total += float(np.dot(w, (s ** p).sum(axis=-1)))
    return total if p == 1 else total ** (1.0 / p)


def norm1(x: Element) -> float:
    return schatten_norm(x, 1)


def abs_polar(x: Element) -> tuple:
    """Return ``(u, |x|)`` with ``x = u |x|`` and ``u`` vanishing on ``ker |x|``.

    For ``x = 0`` both outputs are zero.
    """
    thr = SPECTRAL_REL_TOL * op_norm(x)
    us, absx = [], []
    for gi, p in enumerate(x.parts):
        if p.shape[-1] == 1:
            a = np.abs(p)
            keep = a > thr
            us.append(np.where(keep, p / np.where(keep, a, 1.0), 0))
            absx.append(a.astype(complex))
            continue
        try:
            w, s, vh = np.linalg.svd(p)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"polar decomposition failed in block group {gi}: {exc}") from exc
        keep = (s > thr).astype(float)
        v = np.conj(np.swapaxes(vh, -1, -2))
        absx.append(np.matmul(v * s[..., None, :], vh))
        us.append(np.matmul(w * keep[..., None, :], vh))
    return Element(x.shape, tuple(us)), Element(x.shape, tuple(absx))


def _eigh_parts(x: Element):
    out = []
    for gi, p in enumerate(x.parts):
        if p.shape[-1] == 1:
            out.append((p[..., 0].real, np.ones_like(p)))
            continue
        try:
            h = 0.5 * (p + np.conj(np.swapaxes(p, -1, -2)))
            out.append(np.linalg.eigh(h))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigensolver failed in block group {gi}: {exc}") from exc
    return out


def _eigvalsh_parts(x: Element):
    out = []
    for p in x.parts:
        if p.shape[-1] == 1:
            out.append(p[..., 0].real)
        else:
            out.append(np.linalg.eigvalsh(0.5 * (p + np.conj(np.swapaxes(p, -1, -2)))))
    return out


def eigenvalues(x: Element) -> np.ndarray:
    """Eigenvalues of a selfadjoint element with their trace weights, as ``(values, weights)``."""
    vals, wts = [], []
    for ev, w in zip(_eigvalsh_parts(x), x.shape.group_weights):
        vals.append(ev.ravel())
        wts.append(np.repeat(w, ev.shape[-1]))
    return np.concatenate(vals), np.concatenate(wts)


def functional_calculus(x: Element, fn) -> Element:
    """Apply a real function to the spectrum of a selfadjoint element."""
    parts = []
    for (ev, vec), p in zip(_eigh_parts(x), x.parts):
        fv = np.asarray(fn(ev), dtype=float)
        if p.shape[-1] == 1:
            parts.append(fv[..., None].astype(complex))
        else:
            parts.append(np.matmul(vec * fv[..., None, :], np.conj(np.swapaxes(vec, -1, -2))))
    return Element(x.shape, tuple(parts))


def spectral_projection(x: Element, eps: float, mode: str = "strict_above", tol=None) -> Projection:
    """``chi_{]eps, inf[}(x)`` (``strict_above``) or ``chi_{[eps, inf[}(x)`` (``at_or_above``).

    Ties are resolved with a margin of ``1e-12 * ||x||_inf``: strict mode needs
    ``lambda > eps + margin``, inclusive mode accepts ``lambda >= eps - margin``.
    """
    if mode not in ("strict_above", "at_or_above"):
        raise ValueError(f"unknown mode {mode!r}")
    if not x.is_selfadjoint(tol):
        raise ValueError("spectral projection needs a selfadjoint element")
    margin = SPECTRAL_REL_TOL * op_norm(x)
    if mode == "strict_above":
        return Projection.of(functional_calculus(x, lambda ev: ev > eps + margin))
    return Projection.of(functional_calculus(x, lambda ev: ev >= eps - margin))


def positive_part(x: Element) -> Element:
    return functional_calculus(x, lambda ev: np.maximum(ev, 0.0))


def sign(x: Element) -> Element:
    """Selfadjoint unitary-on-support ``chi_{>0}(x) - chi_{<0}(x)``, with ties at 0 sent to 0."""
    margin = SPECTRAL_REL_TOL * op_norm(x)
    return functional_calculus(x, lambda ev: (ev > margin).astype(float) - (ev < -margin))


def support(x: Element) -> Projection:
    """Range projection of a positive element (strictly-above-zero spectral projection)."""
    margin = SPECTRAL_REL_TOL * op_norm(x)
    return Projection.of(functional_calculus(x, lambda ev: ev > margin))


def left_support(x: Element) -> Projection:
    u, _ = abs_polar(x)
    return Projection.of(u @ u.H)


def right_support(x: Element) -> Projection:
    u, _ = abs_polar(x)
    return Projection.of(u.H @ u)


def _range_basis(m: np.ndarray) -> np.ndarray:
    ev, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
    return vec[:, ev > 0.5]


def _meet_block(p: np.ndarray, q: np.ndarray, tol: float) -> np.ndarray:
    d = p.shape[0]
    bp = _range_basis(p)
    if bp.shape[1] == 0:
        return np.zeros((d, d), complex)
    leak = (np.eye(d) - q) @ bp
    _, s, vh = np.linalg.svd(leak)
    s_full = np.zeros(bp.shape[1])
    s_full[: s.size] = s
    null = vh.conj().T[:, s_full <= tol]
    basis = bp @ null
    # re-orthonormalize to keep the output an exact projection
    if basis.shape[1]:
        basis, _ = np.linalg.qr(basis)
    return basis @ basis.conj().T


def proj_meet_join(p: Element, q: Element, tol=None) -> tuple:
    """Return ``(p ^ q, p v q)`` via a rank-revealing intersection of ranges."""
    _check_same(p, q)
    if tol is None:
        tol = default_tol(p, q)
    one = p.shape.identity()
    meet = Projection.of(_meet(p, q, tol))
    join = Projection.of(one - _meet(one - p, one - q, tol))
    return meet, join


def _meet(p: Element, q: Element, tol) -> Element:
    meets = []
    for pp, qq in zip(p.parts, q.parts):
        if pp.shape[-1] == 1:
            meets.append((np.round(pp.real) * np.round(qq.real)).astype(complex))
        else:
            meets.append(np.stack([_meet_block(a, b, tol) for a, b in zip(pp, qq)]))
    return Element(p.shape, tuple(meets))


def proj_sup(projections, shape: AlgebraShape | None = None, tol=None) -> Projection:
    """Supremum of a finite list of projections (the identity-free join)."""
    if not projections:
        if shape is None:
            raise ValueError("empty supremum needs a shape")
        return Projection.of(shape.zeros())
    acc = projections[0]
    for q in projections[1:]:
        acc = proj_meet_join(acc, q, tol)[1]
    return Projection.of(acc)


def is_orthogonal_elements(a: Element, b: Element, tol=None) -> bool:
    """``a b* = 0 = a* b`` up to ``tol * ||a|| ||b||``."""
    _check_same(a, b)
    if tol is None:
        tol = default_tol(a, b)
    scale = op_norm(a) * op_norm(b)
    return op_norm(a @ b.H) <= tol * scale and op_norm(a.H @ b) <= tol * scale


def random_suite(shape: AlgebraShape, kind: str = "generic", seed=0) -> Element:
    """Random element of a given kind; bit-identical for a fixed seed.

    generic: complex Gaussian entries; unitary: QR of a generic block; projection:
    range projection of a generic ``d x k`` matrix with ``k`` uniform in ``0..d``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; choose from {KINDS}")
    rng = np.random.default_rng(seed)
    parts = []
    for d, a, b in shape.groups:
        k = b - a
        g = (rng.standard_normal((k, d, d)) + 1j * rng.standard_normal((k, d, d))) / np.sqrt(2)
        if kind == "generic":
            parts.append(g)
        elif kind == "selfadjoint":
            parts.append(0.5 * (g + np.conj(np.swapaxes(g, -1, -2))))
        elif kind == "positive":
            parts.append(np.matmul(g, np.conj(np.swapaxes(g, -1, -2))) / d)
        elif kind == "unitary":
            q, r = np.linalg.qr(g)
            ph = np.diagonal(r, axis1=-2, axis2=-1)
            ph = ph / np.abs(ph)
            parts.append(q * ph[..., None, :])
        else:
            ranks = rng.integers(0, d + 1, size=k)
            blocks = []
            for gi, rk in zip(g, ranks):
                if rk == 0:
                    blocks.append(np.zeros((d, d), complex))
                    continue
                q, _ = np.linalg.qr(gi[:, :rk])
                blocks.append(q @ q.conj().T)
            parts.append(np.stack(blocks))
    x = Element(shape, tuple(parts))
    _verify_kind(x, kind)
    return x


def _verify_kind(x: Element, kind: str):
    tol = default_tol(x)
    if kind == "selfadjoint" and not x.is_selfadjoint(tol):
        raise NumericError("generated element is not selfadjoint")
    if kind == "positive":
        ev, _ = eigenvalues(x)
        if ev.size and ev.min() < -tol:
            raise NumericError("generated element is not positive")
    if kind == "projection" and projection_defects(x, tol):
        raise NumericError("generated element is not a projection")
    if kind == "unitary" and op_norm(x.H @ x - x.shape.identity()) > tol:
        raise NumericError("generated element is not unitary")
