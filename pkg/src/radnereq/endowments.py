"""Bounded endowment functions ``g(x, n)`` addressable from configuration.

Each jump state gets its own finite sum of library terms::

    Endowment.from_config({"n0": [{"kind": "tanh", "c": 1.0}],
                           "n1": [{"kind": "constant", "c": 0.5}]})

``{"both": [...]}`` uses the same sum on both slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Term",
    "Constant",
    "Tanh",
    "GaussianBump",
    "DampedCos",
    "TermSum",
    "Endowment",
    "term_from_config",
]


class Term:
    """A bounded, smooth function of ``x``; terms add into a :class:`TermSum`."""

    def __call__(self, x):
        raise NotImplementedError

    def bound(self) -> float:
        """An upper bound for ``sup |term|``."""
        raise NotImplementedError

    def support_scale(self) -> float:
        """Distance from the origin beyond which the term is essentially flat."""
        return 0.0

    def __add__(self, other: "Term") -> "TermSum":
        return TermSum(tuple(_flatten(self)) + tuple(_flatten(other)))


def _flatten(term):
    return term.terms if isinstance(term, TermSum) else (term,)


@dataclass(frozen=True)
class Constant(Term):
    c: float = 0.0

    def __call__(self, x):
        return np.full(np.shape(x), float(self.c)) if np.ndim(x) else float(self.c)

    def bound(self):
        return abs(self.c)


@dataclass(frozen=True)
class Tanh(Term):
    """``c * tanh(s * (x - x0))``."""

    c: float = 1.0
    s: float = 1.0
    x0: float = 0.0

    def __call__(self, x):
        return self.c * np.tanh(self.s * (np.asarray(x, dtype=float) - self.x0))

    def bound(self):
        return abs(self.c)

    def support_scale(self):
        return abs(self.x0) + 3.0 / abs(self.s) if self.s else 0.0


@dataclass(frozen=True)
class GaussianBump(Term):
    """``c * exp(-s * (x - x0)**2)`` with ``s > 0``."""

    c: float = 1.0
    s: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("gaussian_bump needs s > 0")

    def __call__(self, x):
        return self.c * np.exp(-self.s * (np.asarray(x, dtype=float) - self.x0) ** 2)

    def bound(self):
        return abs(self.c)

    def support_scale(self):
        return abs(self.x0) + math.sqrt(4.0 / self.s)


@dataclass(frozen=True)
class DampedCos(Term):
    """``c * cos(k x) * exp(-s x**2)``; ``s = 0`` gives a plain cosine."""

    c: float = 1.0
    k: float = 1.0
    s: float = 0.0

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("damped_cos needs s >= 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.c * np.cos(self.k * x) * np.exp(-self.s * x**2)

    def bound(self):
        return abs(self.c)

    def support_scale(self):
        return math.sqrt(4.0 / self.s) if self.s > 0 else 0.0


@dataclass(frozen=True)
class TermSum(Term):
    terms: tuple = ()

    def __call__(self, x):
        out = np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        for term in self.terms:
            out = out + term(x)
        return out

    def bound(self):
        return sum(t.bound() for t in self.terms)

    def support_scale(self):
        return max((t.support_scale() for t in self.terms), default=0.0)


_KINDS = {
    "constant": Constant,
    "tanh": Tanh,
    "gaussian_bump": GaussianBump,
    "damped_cos": DampedCos,
}


def term_from_config(spec) -> Term:
    """Build a term (or a sum of terms) from a mapping, a list or a bare number."""
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if isinstance(spec, (list, tuple)):
        if not spec:
            return Constant(0.0)
        return TermSum(tuple(term_from_config(s) for s in spec))
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown endowment kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return _KINDS[kind](**{k: float(v) for k, v in spec.items()})
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind!r}: {exc}") from None


@dataclass(frozen=True)
class Endowment:
    """Endowment ``g(x, n)``: one term per jump state."""

    slice0: Term = field(default_factory=Constant)
    slice1: Term = field(default_factory=Constant)

    @classmethod
    def same(cls, term: Term) -> "Endowment":
        return cls(term, term)

    @classmethod
    def from_config(cls, spec) -> "Endowment":
        if isinstance(spec, dict) and "both" in spec:
            return cls.same(term_from_config(spec["both"]))
        if isinstance(spec, dict) and ("n0" in spec or "n1" in spec):
            return cls(term_from_config(spec.get("n0", [])), term_from_config(spec.get("n1", [])))
        return cls.same(term_from_config(spec))

    def __call__(self, x, n):
        n = np.asarray(n)
        if n.ndim == 0:
            return (self.slice1 if int(n) == 1 else self.slice0)(x)
        return np.where(n == 1, self.slice1(x), self.slice0(x))

    def bound(self) -> float:
        return max(self.slice0.bound(), self.slice1.bound())

    def support_scale(self) -> float:
        return max(self.slice0.support_scale(), self.slice1.support_scale())
