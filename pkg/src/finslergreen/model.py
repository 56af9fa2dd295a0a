"""Quadratic data of the lattice spin model at the zero configuration.

The model is given by the on-site curvature ``dpp(x)`` (second theta
derivative of the single-site potential at 0) and, for every offset
``l`` with ``0 < |l| <= R``, the pair curvature ``wpp[l](x)``.  Offsets
are stored once per +/- pair, so ``V(x, l) = V(x, -l)`` holds by
construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from .fieldexpr import Field, constant, evaluate


class ModelError(ValueError):
    pass


def offsets(d: int, R: float) -> list[tuple[int, ...]]:
    """All l in Z^d with 0 < |l| <= R (Euclidean norm), sorted."""
    r = int(math.floor(R))
    out = []
    for ell in itertools.product(range(-r, r + 1), repeat=d):
        n2 = sum(c * c for c in ell)
        if 0 < n2 <= R * R + 1e-12:
            out.append(ell)
    return sorted(out)


def representative(ell) -> tuple[int, ...]:
    """Canonical member of {l, -l}: first non-zero component positive."""
    ell = tuple(int(c) for c in ell)
    for c in ell:
        if c != 0:
            return ell if c > 0 else tuple(-e for e in ell)
    raise ModelError("zero offset")


@dataclass(frozen=True)
class ModelSpec:
    d: int
    R: float
    J: float
    dpp: Field
    wpp: dict = field(default_factory=dict)  # representative offset -> Field
    name: str = ""

    def __post_init__(self):
        if self.d < 2:
            raise ModelError("dimension must be at least 2")
        if self.R < 1:
            raise ModelError("interaction radius must be at least 1")
        if not self.J > 0:
            raise ModelError("coupling J must be positive")
        if self.dpp.dim != self.d:
            raise ModelError("dpp field has the wrong dimension")
        allowed = {representative(e) for e in offsets(self.d, self.R)}
        full = {}
        for ell, fld in self.wpp.items():
            rep = representative(ell)
            if rep not in allowed:
                raise ModelError(f"offset {ell} outside interaction radius {self.R}")
            if rep in full:
                raise ModelError(f"offset {ell} given twice (as {rep} and its negative)")
            if fld.dim != self.d:
                raise ModelError(f"field for offset {ell} has the wrong dimension")
            full[rep] = fld
        for rep in allowed:
            full.setdefault(rep, constant(0.0, self.d))
        object.__setattr__(self, "wpp", dict(sorted(full.items())))
        object.__setattr__(
            self, "_pairs", [(np.array(k, dtype=float), v) for k, v in self.wpp.items()]
        )

    @property
    def pairs(self) -> list[tuple[np.ndarray, Field]]:
        """(representative offset, wpp field), one entry per +/- pair."""
        return self._pairs

    @property
    def structurally_constant(self) -> bool:
        return self.dpp.is_constant() and all(f.is_constant() for f in self.wpp.values())


@dataclass(frozen=True)
class LatticeSite:
    """Point h*k of the lattice Z^d_h."""

    k: tuple
    h: float

    @property
    def point(self) -> np.ndarray:
        return self.h * np.asarray(self.k, dtype=float)

    @classmethod
    def from_point(cls, x, h: float, tol: float = 1e-9) -> "LatticeSite":
        k = np.rint(np.asarray(x, dtype=float) / h)
        if np.max(np.abs(k * h - np.asarray(x, dtype=float))) > tol * max(1.0, h):
            raise ModelError(f"point {list(x)} is not on the lattice of spacing {h}")
        return cls(tuple(int(c) for c in k), h)


def dyadic_site(numerators, N: int) -> LatticeSite:
    """Site with coordinates numerators / 2^N."""
    return LatticeSite(tuple(int(c) for c in numerators), float(Fraction(1, 2**N)))


def pair_v(m: ModelSpec, x, ell) -> float:
    """V(x, l) = J * wpp[l](x)."""
    ell = tuple(int(c) for c in ell)
    if not 0 < sum(c * c for c in ell) <= m.R * m.R + 1e-12:
        raise ModelError(f"offset {ell} out of range")
    return m.J * m.wpp[representative(ell)](x)


def onsite_u(m: ModelSpec, x) -> float:
    """U(x) = dpp(x) + sum over all offsets of V(x, l)."""
    x = np.asarray(x, dtype=float)
    return m.dpp(x) + 2.0 * m.J * sum(f(x) for _, f in m.pairs)


def onsite_uh(m: ModelSpec, x, h: float) -> float:
    """Diagonal of E''(0): dpp(x) + J * sum_l wpp[l](x + h l / 2)."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for ell, f in m.pairs:
        total += f(x + 0.5 * h * ell) + f(x - 0.5 * h * ell)
    return m.dpp(x) + m.J * total


def onsite_uh_many(m: ModelSpec, X: np.ndarray, h: float) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    total = np.zeros(X.shape[:-1])
    for ell, f in m.pairs:
        total += evaluate(f, X + 0.5 * h * ell) + evaluate(f, X - 0.5 * h * ell)
    return evaluate(m.dpp, X) + m.J * total


def matrix_entry(m: ModelSpec, x: LatticeSite, y: LatticeSite) -> float:
    """Entry (x, y) of the lattice Hessian E''(0)."""
    if x.h != y.h:
        raise ModelError("sites live on lattices with different spacings")
    diff = tuple(a - b for a, b in zip(x.k, y.k))
    n2 = sum(c * c for c in diff)
    if n2 == 0:
        return onsite_uh(m, x.point, x.h)
    if n2 > m.R * m.R + 1e-12:
        return 0.0
    mid = 0.5 * (x.point + y.point)
    return -pair_v(m, mid, diff)


def is_translation_invariant(m: ModelSpec, box=None, n_samples: int = 64, tol: float = 1e-12) -> bool:
    """Structural check first, then sampled vanishing of the field gradients."""
    if m.structurally_constant:
        return True
    lo, hi = _box(m, box)
    pts = qmc.Halton(d=m.d, scramble=False).random(n_samples + 1)[1:]
    pts = lo + (hi - lo) * pts
    for p in pts:
        grads = [m.dpp.eval2(p).gradient] + [f.eval2(p).gradient for f in m.wpp.values()]
        if max(float(np.max(np.abs(g))) for g in grads) > tol:
            return False
    return True


def _box(m: ModelSpec, box):
    if box is None:
        lo, hi = -np.pi * np.ones(m.d), np.pi * np.ones(m.d)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    return lo, hi


@dataclass
class HypothesisReport:
    n_samples: int
    inf_dpp: float
    sup_dpp: float
    min_wpp: float
    min_unit_wpp: float
    max_h0: float
    min_F_unit: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [
            f"samples = {self.n_samples}",
            f"inf_dpp = {self.inf_dpp!r}",
            f"sup_dpp = {self.sup_dpp!r}",
            f"min_wpp = {self.min_wpp!r}",
            f"min_unit_wpp = {self.min_unit_wpp!r}",
            f"max_H_at_zero_momentum = {self.max_h0!r}",
            f"min_F_unit_direction = {self.min_F_unit!r}",
            f"status = {'pass' if self.ok else 'fail'}",
        ]
        out += [f"violation = {v}" for v in self.violations]
        return out


def check_hypotheses(
    m: ModelSpec, box=None, n_samples: int = 10_000, seed: int = 0, n_finsler: int = 64
) -> HypothesisReport:
    """Sampled verification of the model hypotheses at theta = 0.

    Checks ``wpp >= 0``, ``wpp >= 1`` on unit offsets, ``2 inf dpp > sup dpp``,
    ``H(x, 0) < 0`` and a positive lower bound for ``F(x, v)`` on unit
    directions.  Points are scrambled Sobol samples of ``box``; the support
    function is checked on the first ``n_finsler`` of them.
    """
    from .finsler import support_function  # late import: finsler depends on model

    lo, hi = _box(m, box)
    sampler = qmc.Sobol(d=m.d, scramble=True, seed=seed)
    # Sobol balance needs a power of two; round the request up
    n_samples = 1 << max(0, int(n_samples - 1).bit_length())
    pts = lo + (hi - lo) * sampler.random_base2(n_samples.bit_length() - 1)
    dpp = evaluate(m.dpp, pts)
    violations = []

    min_w, min_unit = np.inf, np.inf
    for ell, f in m.pairs:
        w = evaluate(f, pts)
        min_w = min(min_w, float(w.min()))
        if np.dot(ell, ell) == 1.0:
            min_unit = min(min_unit, float(w.min()))
    if min_w < 0:
        violations.append(f"wpp >= 0 fails (min {min_w!r})")
    if min_unit < 1:
        violations.append(f"wpp >= 1 on unit offsets fails (min {min_unit!r})")
    inf_d, sup_d = float(dpp.min()), float(dpp.max())
    if not 2 * inf_d > sup_d:
        violations.append(f"2 inf dpp > sup dpp fails ({2 * inf_d!r} <= {sup_d!r})")
    # H(x, 0) = -dpp(x)
    max_h0 = float((-dpp).max())
    if not max_h0 < 0:
        violations.append(f"H(x,0) < 0 fails (max {max_h0!r})")

    min_F = np.inf
    if max_h0 < 0:
        rng = np.random.default_rng(seed)
        for p in pts[:n_finsler]:
            u = rng.normal(size=m.d)
            u /= np.linalg.norm(u)
            try:
                min_F = min(min_F, support_function(m, p, u))
            except ArithmeticError as exc:
                violations.append(f"support function failed at {p.tolist()}: {exc}")
                break
        if not min_F > 0:
            violations.append(f"inf F(x, unit v) > 0 fails ({min_F!r})")
    return HypothesisReport(n_samples, inf_d, sup_d, min_w, min_unit, max_h0, float(min_F), violations)
