"""Normal functionals represented by trace densities, ``phi(y) = tau(D y)``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    Element,
    Projection,
    abs_polar,
    default_tol,
    norm1,
    op_norm,
    trace,
    _check_same,
)

NEAR_ZERO_REL = 1e-12


class DegenerateFunctional(ValueError):
    pass


@dataclass(frozen=True)
class SupportPair:
    left: Projection
    right: Projection


@dataclass(frozen=True, eq=False)
class Functional:
    density: Element
    norm: float = field(init=False)
    phase: Element = field(init=False, repr=False)
    abs_density: Element = field(init=False, repr=False)

    def __post_init__(self):
        u, a = abs_polar(self.density)
        object.__setattr__(self, "phase", u)
        object.__setattr__(self, "abs_density", a)
        object.__setattr__(self, "norm", float(np.real(trace(a))))

    @property
    def shape(self):
        return self.density.shape

    @property
    def right_support(self) -> Projection:
        return Projection.of(self.phase.H @ self.phase)

    @property
    def left_support(self) -> Projection:
        return Projection.of(self.phase @ self.phase.H)

    def __call__(self, y: Element) -> complex:
        return evaluate(self, y)

    def __add__(self, other):
        return Functional(self.density + other.density)

    def __sub__(self, other):
        return Functional(self.density - other.density)

    def __mul__(self, c):
        return Functional(self.density * c)

    __rmul__ = __mul__

    def normalized(self) -> "Functional":
        if self.norm < NEAR_ZERO_REL * self.shape.tau_unit:
            raise DegenerateFunctional(f"cannot normalize a functional of norm {self.norm:.3e}")
        return Functional(self.density / self.norm)

    def distance(self, other: "Functional") -> float:
        return norm1(self.density - other.density)

    def to_json(self) -> dict:
        doc = self.density.to_json()
        doc["norm"] = self.norm
        return doc

    @classmethod
    def from_json(cls, doc: dict, shape=None) -> "Functional":
        return cls(Element.from_json(doc, shape))


def from_density(D: Element) -> Functional:
    return Functional(D)


def evaluate(phi: Functional, y: Element) -> complex:
    return trace(phi.density @ y)


def act(a: Element, phi: Functional, side: str = "left") -> Functional:
    """Module action: ``a phi`` (density ``aD``) or ``phi a`` (density ``Da``)."""
    _check_same(a, phi.density)
    if side == "left":
        return Functional(a @ phi.density)
    if side == "right":
        return Functional(phi.density @ a)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def compress(t: Element, phi: Functional, s: Element) -> Functional:
    """``t phi s`` with density ``t D s``."""
    return Functional(t @ phi.density @ s)


def abs_and_adjoint(phi: Functional) -> tuple:
    absphi = Functional(phi.abs_density)
    star = Functional(phi.density.H)
    return absphi, star, Functional(star.abs_density)


def supports(phi: Functional) -> SupportPair:
    return SupportPair(phi.left_support, phi.right_support)


def are_orthogonal(phi: Functional, psi: Functional, tol=None) -> bool:
    """Both left supports and both right supports are mutually orthogonal.

    Equivalent to ``is_orthogonal_elements`` on the densities; tests use that as
    a cross-check.
    """
    _check_same(phi.density, psi.density)
    if tol is None:
        tol = default_tol(phi.density, psi.density)
    if phi.norm == 0 or psi.norm == 0:
        return True
    right = op_norm(phi.right_support @ psi.right_support) <= tol
    left = op_norm(phi.left_support @ psi.left_support) <= tol
    return left and right


def combination(phis, alphas) -> Functional:
    alphas = list(alphas)
    if len(alphas) != len(phis):
        raise ValueError("coefficient count does not match family size")
    D = phis[0].density * alphas[0]
    for f, a in zip(phis[1:], alphas[1:]):
        D = D + f.density * a
    return Functional(D)


def support_mass(phi: Functional, p: Element) -> float:
    """``p(|phi|) = tau(|D| p)``."""
    return float(np.real(trace(phi.abs_density @ p)))


def adjoint_support_mass(phi: Functional, p: Element) -> float:
    """``p(|phi*|) = tau(|D*| p)``."""
    return float(np.real(trace(Functional(phi.density.H).abs_density @ p)))
