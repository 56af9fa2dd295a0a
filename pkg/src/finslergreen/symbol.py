"""The trigonometric symbol of E''(0) and its exponentially conjugated principal part."""

from __future__ import annotations

import itertools

import numpy as np

from .model import LatticeSite, ModelSpec, matrix_entry, onsite_u, onsite_uh


def v_tilde(m: ModelSpec, x, xi, p=None) -> complex:
    """sum_l V(x, l) exp(i <l, xi + i p>), assembled from the cosh/sinh split.

    Re = sum_l V cosh<l,p> cos<l,xi>,  Im = -sum_l V sinh<l,p> sin<l,xi>.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p = np.zeros(m.d) if p is None else np.asarray(p, dtype=float)
    re = im = 0.0
    for ell, f in m.pairs:
        v2 = 2.0 * m.J * f(x)
        a, b = ell @ xi, ell @ p
        re += v2 * np.cosh(b) * np.cos(a)
        im -= v2 * np.sinh(b) * np.sin(a)
    return complex(re, im)


def principal_symbol_a(m: ModelSpec, x, xi, phi_grad) -> complex:
    """Principal symbol i V~(x, xi + i phi') - i U(x) of the conjugated operator."""
    return 1j * v_tilde(m, x, xi, phi_grad) - 1j * onsite_u(m, x)


def _torus_grid(d: int, n: int) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(n) / n
    return np.stack(np.meshgrid(*([t] * d), indexing="ij"), axis=-1).reshape(-1, d)


def fourier_coefficient(m: ModelSpec, h: float, x, k, n: int) -> complex:
    """Fourier coefficient of the symbol U_h - V~ at the lattice vector z = h k.

    Trapezoid rule with ``n`` nodes per dimension over [0, 2 pi)^d; exact for
    the trigonometric polynomial once ``n > max|k_i| + R``.
    """
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=float)
    xi = _torus_grid(m.d, n)
    sym = np.full(len(xi), onsite_uh(m, x, h), dtype=complex)
    for ell, f in m.pairs:
        sym -= 2.0 * m.J * f(x) * np.cos(xi @ ell)
    return complex(np.mean(np.exp(-1j * (xi @ k)) * sym)) / h**m.d


def weyl_action(m: ModelSpec, h: float, x: LatticeSite, f: dict, n: int | None = None) -> complex:
    """h^d sum_y a^((x+y)/2, y-x) f(y) for a finitely supported lattice function f."""
    kmax = max(max(abs(a - b) for a, b in zip(y, x.k)) for y in f)
    if n is None:
        n = max(2 * int(np.floor(m.R)) + 3, kmax + int(np.floor(m.R)) + 2)
    total = 0.0 + 0.0j
    for y, val in f.items():
        z = np.subtract(y, x.k)
        mid = 0.5 * h * (np.add(y, x.k))
        total += fourier_coefficient(m, h, mid, z, n) * val
    return h**m.d * total


def matrix_action(m: ModelSpec, x: LatticeSite, f: dict) -> float:
    """(E''(0) f)(x) for a finitely supported lattice function f."""
    return sum(matrix_entry(m, x, LatticeSite(tuple(y), x.h)) * val for y, val in f.items())


def verify_matrix_symbol_identity(m: ModelSpec, h: float, x: LatticeSite, f: dict, n: int | None = None) -> float:
    """|E''(0) f (x) - Op(U_h - V~) f (x)|, the Weyl side computed by quadrature."""
    return abs(matrix_action(m, x, f) - weyl_action(m, h, x, f, n))


def patch(center, radius: int) -> list[tuple[int, ...]]:
    """Integer points of the cube of half-width ``radius`` around ``center``."""
    rng = range(-radius, radius + 1)
    return [tuple(c + o for c, o in zip(center, off)) for off in itertools.product(rng, repeat=len(center))]
