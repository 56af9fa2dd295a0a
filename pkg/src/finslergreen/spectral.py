"""Green function of translation-invariant models by torus quadrature.

    G(z) = exp(-<p, z>/h) (2 pi)^-d  int_T e^{i<xi, z/h>} / (U - V~(xi + i p)) dxi

The integrand is analytic and periodic, so the equispaced trapezoid rule
converges exponentially; shifting the contour to a momentum p strictly
inside the polar body removes most of the oscillation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .finsler import dual_point
from .hamiltonian import LocalHamiltonian
from .model import ModelSpec, is_translation_invariant


class SpectralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SpectralValue:
    value: float
    imag_residual: float
    n: int
    pbar: np.ndarray
    margin: float  # min Re of the shifted denominator
    condition: float  # sum |terms| / |sum terms|, bounds the rounding amplification


def default_shift(m: ModelSpec, z, shrink: float = 0.9) -> np.ndarray:
    z = np.asarray(z, float)
    if not np.any(z):
        return np.zeros(m.d)
    return shrink * dual_point(m, np.zeros(m.d), z).p


def green_spectral(m: ModelSpec, z, h: float, pbar=None, n: int = 256, chunk: int = 1 << 20) -> SpectralValue:
    """(E''(0)^{-1})_{x, x - z} for a translation-invariant model."""
    if not is_translation_invariant(m):
        raise SpectralError("spectral oracle needs a translation-invariant model")
    d = m.d
    z = np.asarray(z, float)
    k = np.rint(z / h)
    if np.max(np.abs(k * h - z)) > 1e-9 * max(1.0, h):
        raise SpectralError("z is not a lattice vector")
    pbar = default_shift(m, z) if pbar is None else np.asarray(pbar, float)
    loc = LocalHamiltonian(m, np.zeros(d))
    ells, coef = loc.offsets, loc.coef
    ch = coef * np.cosh(ells @ pbar)
    sh = coef * np.sinh(ells @ pbar)
    margin = loc.U - float(ch.sum())
    if margin < 1e-10:
        raise SpectralError(f"shifted denominator margin {margin:.3e} too small (pbar outside the polar body?)")
    t = 2.0 * np.pi * np.arange(n) / n
    # tensor grid, processed in slabs along the first axis
    rest = np.stack(np.meshgrid(*([t] * (d - 1)), indexing="ij"), axis=-1).reshape(-1, d - 1)
    slab = max(1, chunk // max(len(rest), 1))
    total = 0.0 + 0.0j
    mass = 0.0
    for i0 in range(0, n, slab):
        first = t[i0 : i0 + slab]
        xi = np.concatenate(
            [np.repeat(first, len(rest))[:, None], np.tile(rest, (len(first), 1))], axis=1
        )
        phase = xi @ ells.T
        den = loc.U - (np.cos(phase) @ ch) + 1j * (np.sin(phase) @ sh)
        terms = np.exp(1j * (xi @ k)) / den
        total += np.sum(terms)
        mass += float(np.sum(np.abs(terms)))
    val = np.exp(-(pbar @ k)) * total / n**d
    cond = mass / max(abs(total), 1e-300)
    return SpectralValue(float(val.real), float(abs(val.imag)), n, pbar, margin, cond)


def quadrature_refine(m: ModelSpec, z, h: float, pbar=None, n0: int = 16, rel_tol: float = 1e-12, cap: int | None = None,
                      max_floor: float = 1e-8):
    """Double the node count until successive values agree to ``rel_tol``.

    The tolerance is floored at the rounding level of the sum, 64 eps times its
    condition number; deep-decay values with a loose shift cannot do better.
    """
    if cap is None:
        cap = 4096 if m.d == 2 else 256
    # below 2 max|k| nodes the phase e^{i<xi,k>} aliases and refinement can stall on a wrong value
    kmax = int(np.max(np.abs(np.rint(np.asarray(z, float) / h))))
    n = max(n0, 2 * int(np.floor(m.R)) + 3, 2 * kmax + 2)
    n = 1 << (n - 1).bit_length()
    if n > cap:
        raise SpectralError(f"|z|/h needs at least {n} nodes per dimension, above the cap {cap}")
    prev = green_spectral(m, z, h, pbar, n)
    while n < cap:
        n *= 2
        cur = green_spectral(m, z, h, pbar, n)
        floor = 64 * np.finfo(float).eps * cur.condition
        if floor > max_floor:
            raise SpectralError(
                f"cancellation floor {floor:.1e} above {max_floor:.0e} at n={n}; shift the contour closer to p(z)"
            )
        tol = max(rel_tol, floor)
        if abs(cur.value - prev.value) <= tol * abs(cur.value):
            return cur
        prev = cur
    raise SpectralError(f"quadrature did not converge with {cap} nodes per dimension; shift the contour")
