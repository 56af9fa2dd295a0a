"""Finsler structure generated by H: figuratrix, support function, dual point, tensor G."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .hamiltonian import LocalHamiltonian
from .model import ModelSpec


class FinslerError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DualPoint:
    p: np.ndarray
    lam: float  # grad_p H(x, p) = lam * v
    F: float


@dataclass(frozen=True)
class FinslerTensor:
    F: float
    Fv: np.ndarray
    Fvv: np.ndarray
    G: np.ndarray
    p: np.ndarray
    lam: float


def _local(m, x):
    return m if isinstance(m, LocalHamiltonian) else LocalHamiltonian(m, x)


def _root_tol(loc: LocalHamiltonian) -> float:
    return 1e-12 * max(1.0, abs(loc.U))


def figuratrix_radius(m: ModelSpec, x, u, max_iter: int = 100) -> float:
    """The r > 0 with H(x, r u) = 0 for a unit momentum direction u."""
    loc = _local(m, x)
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    if not loc.value(np.zeros(loc.x.size)) < 0:
        raise FinslerError("H(x, 0) must be negative")
    lo, hi = 0.0, 1.0
    while loc.value(hi * u) <= 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise FinslerError("figuratrix is unbounded along this direction")
    r = hi
    tol = _root_tol(loc)
    for _ in range(max_iter):
        H, g, _ = loc.derivs(r * u)
        if abs(H) <= tol:
            return r
        if H > 0:
            hi = r
        else:
            lo = r
        slope = g @ u
        step = r - H / slope if slope > 0 else 0.5 * (lo + hi)
        r = step if lo < step < hi else 0.5 * (lo + hi)
    raise FinslerError("figuratrix root did not converge (H not strictly convex along the ray?)")


def dual_point(m: ModelSpec, x, v, max_iter: int = 50, restarts: int = 3) -> DualPoint:
    """Point p of the figuratrix whose outward normal grad_p H(x, p) is parallel to v."""
    loc = _local(m, x)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise FinslerError("dual point undefined for v = 0")
    e = v / nv
    d = e.size
    tol = _root_tol(loc)

    def residual(z):
        H, g, Hpp = loc.derivs(z[:d])
        return np.concatenate([g - z[d] * e, [H]]), g, Hpp

    p0 = figuratrix_radius(loc, loc.x, e) * e
    for attempt in range(restarts + 1):
        if attempt:
            # restart from a radially shrunk guess on the ray of the last iterate
            p0 = figuratrix_radius(loc, loc.x, z[:d]) * z[:d] / np.linalg.norm(z[:d])
        _, g0, _ = loc.derivs(p0)
        z = np.concatenate([p0, [max(g0 @ e, 1e-300)]])
        res, g, Hpp = residual(z)
        for _ in range(max_iter):
            scale = max(np.linalg.norm(g), 1.0)
            if abs(res[d]) <= tol and np.linalg.norm(res[:d]) <= 1e-13 * scale:
                if z[d] > 0 and z[:d] @ e > 0:
                    return DualPoint(z[:d].copy(), z[d] / nv, float(z[:d] @ v))
                break
            jac = np.zeros((d + 1, d + 1))
            jac[:d, :d] = Hpp
            jac[:d, d] = -e
            jac[d, :d] = g
            try:
                step = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                break
            t, n0 = 1.0, np.linalg.norm(res)
            while t > 1e-6:
                trial = z + t * step
                rt, gt, Ht = residual(trial)
                if np.linalg.norm(rt) < (1 - 1e-4 * t) * n0 or n0 < 1e-12 * scale:
                    break
                t *= 0.5
            z, res, g, Hpp = trial, rt, gt, Ht
    raise FinslerError("dual point Newton iteration diverged (ill-conditioned figuratrix)")


def support_function(m: ModelSpec, x, v) -> float:
    """F(x, v) = sup{<p, v> : H(x, p) <= 0}."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 0.0
    return dual_point(m, x, v).F


def finsler_tensor(m: ModelSpec, x, v) -> FinslerTensor:
    """F, its first two v-derivatives and G = F F'' + F' F'^T.

    F'' is the derivative of the dual point p(v), obtained by implicit
    differentiation of grad_p H(p) - lam v = 0, H(p) = 0.
    """
    loc = _local(m, x)
    v = np.asarray(v, dtype=float)
    dp = dual_point(loc, loc.x, v)
    d = v.size
    _, g, Hpp = loc.derivs(dp.p)
    jac = np.zeros((d + 1, d + 1))
    jac[:d, :d] = Hpp
    jac[:d, d] = -v
    jac[d, :d] = g
    rhs = np.zeros((d + 1, d))
    rhs[:d] = dp.lam * np.eye(d)
    try:
        sol = np.linalg.solve(jac, rhs)
    except np.linalg.LinAlgError as exc:
        raise FinslerError("singular implicit-function Jacobian") from exc
    Fvv = sol[:d]
    Fvv = 0.5 * (Fvv + Fvv.T)
    F = dp.F
    G = F * Fvv + np.outer(dp.p, dp.p)
    return FinslerTensor(F, dp.p.copy(), Fvv, G, dp.p.copy(), dp.lam)


def fundamental_tensor(m: ModelSpec, x, v) -> np.ndarray:
    return finsler_tensor(m, x, v).G


def restricted_det(A: np.ndarray, normal: np.ndarray) -> float:
    """Determinant of the quadratic form A on the orthogonal complement of ``normal``."""
    Q = null_space(np.atleast_2d(normal))
    return float(np.linalg.det(Q.T @ A @ Q))


@dataclass(frozen=True)
class AppendixBResiduals:
    bordered: float  # det [[0, v^T], [v, F'']]
    maria2_rhs: float  # -det G |v|^4 / F^(d+1)
    inv_hpp_perp: float  # 1 / det H''_pp restricted to grad_p H^perp
    maria1_middle: float  # |v|^(d-1) / |H_p|^(d-1) * det F''^perp
    maria1_right: float  # -|v|^(d-3) / |H_p|^(d-1) * bordered
    res_maria1_middle: float
    res_maria1_right: float
    res_maria2: float

    @property
    def max_residual(self) -> float:
        return max(self.res_maria1_middle, self.res_maria1_right, self.res_maria2)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def verify_appendix_b(m: ModelSpec, x, v) -> AppendixBResiduals:
    """Relative residuals of the two determinant identities linking F'', G and H''_pp."""
    loc = _local(m, x)
    v = np.asarray(v, dtype=float)
    d = v.size
    ft = finsler_tensor(loc, loc.x, v)
    bmat = np.zeros((d + 1, d + 1))
    bmat[0, 1:] = v
    bmat[1:, 0] = v
    bmat[1:, 1:] = ft.Fvv
    bordered = float(np.linalg.det(bmat))
    nv = np.linalg.norm(v)
    rhs2 = -np.linalg.det(ft.G) * nv**4 / ft.F ** (d + 1)

    _, g, Hpp = loc.derivs(ft.p)
    ng = np.linalg.norm(g)
    inv_hperp = 1.0 / restricted_det(Hpp, g)
    middle = nv ** (d - 1) / ng ** (d - 1) * restricted_det(ft.Fvv, v)
    right = -(nv ** (d - 3)) / ng ** (d - 1) * bordered
    return AppendixBResiduals(
        bordered,
        float(rhs2),
        inv_hperp,
        middle,
        right,
        _rel(inv_hperp, middle),
        _rel(inv_hperp, right),
        _rel(bordered, rhs2),
    )


def direction_grid(d: int, n: int) -> np.ndarray:
    """n unit directions: equally spaced angles (d = 2) or a Fibonacci sphere (d = 3)."""
    if d == 2:
        t = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if d == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5**0.5) * i
        return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    rng = np.random.default_rng(0)
    u = rng.normal(size=(n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)
