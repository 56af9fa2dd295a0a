"""The Hamiltonian H(x, p) = sum_l V(x, l) exp(-<l, p>) - U(x) and its derivatives.

Offsets are summed in +/- pairs, which turns the exponentials into
``2 V cosh<l, p>``; subtracting ``U = dpp + sum_l V`` pair by pair gives

    H(x, p) = sum_pairs 2 J wpp_l(x) (cosh<l, p> - 1) - dpp(x),

which is even in ``p`` bit for bit and satisfies ``H(x, 0) = -dpp(x)``.
Momentum derivatives are closed form; position derivatives come from the
forward-mode jets of the fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fieldexpr import eval1
from .model import ModelSpec


@dataclass(frozen=True)
class PhaseDerivs:
    H: float
    dHdx: np.ndarray
    dHdp: np.ndarray
    Hpp: np.ndarray
    Hpx: np.ndarray  # Hpx[i, j] = d^2 H / dp_i dx_j
    Hxx: np.ndarray


def hamiltonian(m: ModelSpec, x, p) -> float:
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    total = 0.0
    for ell, f in m.pairs:
        total += 2.0 * m.J * f(x) * (np.cosh(ell @ p) - 1.0)
    return float(total - m.dpp(x))


def momentum_derivs(m: ModelSpec, x, p):
    """(H, grad_p H, Hess_pp H) at fixed x; only field values are needed."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    d = m.d
    H = -m.dpp(x)
    g = np.zeros(d)
    Hpp = np.zeros((d, d))
    for ell, f in m.pairs:
        v2 = 2.0 * m.J * f(x)
        s = ell @ p
        ch, sh = np.cosh(s), np.sinh(s)
        H += v2 * (ch - 1.0)
        g += v2 * sh * ell
        Hpp += v2 * ch * np.outer(ell, ell)
    return float(H), g, Hpp


def flow_field(m: ModelSpec, x, p):
    """(grad_p H, grad_x H): the Hamiltonian vector field is (grad_p H, -grad_x H)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    d = m.d
    gp = np.zeros(d)
    gx = -eval1(m.dpp, x)[1]
    for ell, f in m.pairs:
        val, grad = eval1(f, x)
        s = ell @ p
        gp += 2.0 * m.J * val * np.sinh(s) * ell
        gx += 2.0 * m.J * (np.cosh(s) - 1.0) * grad
    return gp, gx


def phase_derivs(m: ModelSpec, x, p) -> PhaseDerivs:
    """H together with all first and second phase-space derivatives."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    d = m.d
    de = m.dpp.eval2(x)
    H = -de.value
    dHdx = -de.gradient.copy()
    Hxx = -de.hessian.copy()
    dHdp = np.zeros(d)
    Hpp = np.zeros((d, d))
    Hpx = np.zeros((d, d))
    for ell, f in m.pairs:
        fe = f.eval2(x)
        s = ell @ p
        ch1 = np.cosh(s) - 1.0
        sh = np.sinh(s)
        c = 2.0 * m.J
        H += c * fe.value * ch1
        dHdx += c * ch1 * fe.gradient
        Hxx += c * ch1 * fe.hessian
        dHdp += c * fe.value * sh * ell
        Hpp += c * fe.value * (ch1 + 1.0) * np.outer(ell, ell)
        Hpx += c * sh * np.outer(ell, fe.gradient)
    return PhaseDerivs(float(H), dHdx, dHdp, Hpp, Hpx, Hxx)


class LocalHamiltonian:
    """H(x, .) with the position frozen; cheap closed-form momentum derivatives."""

    def __init__(self, m: ModelSpec, x):
        x = np.asarray(x, dtype=float)
        self.x = x
        self.offsets = np.array([ell for ell, _ in m.pairs])
        self.coef = np.array([2.0 * m.J * f(x) for _, f in m.pairs])
        self.dpp = m.dpp(x)
        # U(x) = dpp + sum over all offsets of V
        self.U = self.dpp + float(self.coef.sum())

    def value(self, p) -> float:
        s = self.offsets @ np.asarray(p, dtype=float)
        return float(self.coef @ (np.cosh(s) - 1.0) - self.dpp)

    def derivs(self, p):
        s = self.offsets @ np.asarray(p, dtype=float)
        H = float(self.coef @ (np.cosh(s) - 1.0) - self.dpp)
        g = self.offsets.T @ (self.coef * np.sinh(s))
        Hpp = (self.offsets.T * (self.coef * np.cosh(s))) @ self.offsets
        return H, g, Hpp
