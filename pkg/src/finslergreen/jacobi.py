"""Linearized Hamiltonian flow along a geodesic and the exponential-map Jacobi fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .finsler import dual_point, finsler_tensor
from .geodesics import RTOL, ATOL, GeodesicError, GeodesicSolution, endpoint, _tangent_frame, _direction
from .hamiltonian import flow_field, phase_derivs
from .model import ModelSpec


@dataclass
class JacobiPath:
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    X: np.ndarray  # (K, d, d)
    P: np.ndarray  # (K, d, d)

    def symplectic_defect(self) -> np.ndarray:
        """max |X^T P - P^T X| at every sample."""
        W = np.einsum("kji,kjl->kil", self.X, self.P)
        return np.abs(W - np.transpose(W, (0, 2, 1))).max(axis=(1, 2))


def _jacobi_rhs(m: ModelSpec):
    d = m.d

    def rhs(t, z):
        x, p = z[:d], z[d : 2 * d]
        X = z[2 * d : 2 * d + d * d].reshape(d, d)
        P = z[2 * d + d * d :].reshape(d, d)
        pd = phase_derivs(m, x, p)
        dX = pd.Hpx @ X + pd.Hpp @ P
        dP = -pd.Hxx @ X - pd.Hpx.T @ P
        return np.concatenate([pd.dHdp, -pd.dHdx, dX.ravel(), dP.ravel()])

    return rhs


def propagate_jacobi(
    m: ModelSpec, y, p_y, tau: float, t_eval=None, rtol: float = RTOL, atol: float = ATOL
) -> JacobiPath:
    """Integrate the base trajectory jointly with (X, P), X(0) = 0, P(0) = I."""
    d = m.d
    z0 = np.concatenate([np.asarray(y, float), np.asarray(p_y, float), np.zeros(d * d), np.eye(d).ravel()])
    if t_eval is None:
        t_eval = np.linspace(0.0, tau, 101)
    sol = solve_ivp(_jacobi_rhs(m), (0.0, tau), z0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)
    if sol.status != 0:
        raise GeodesicError(f"Jacobi integration failed: {sol.message}")
    K = sol.y.shape[1]
    return JacobiPath(
        sol.t,
        sol.y[:d].T,
        sol.y[d : 2 * d].T,
        sol.y[2 * d : 2 * d + d * d].T.reshape(K, d, d),
        sol.y[2 * d + d * d :].T.reshape(K, d, d),
    )


def jacobi_along(m: ModelSpec, sol: GeodesicSolution, rtol: float = RTOL, atol: float = ATOL) -> JacobiPath:
    return propagate_jacobi(m, sol.y, sol.p_y, sol.tau, sol.trajectory.t, rtol, atol)


def bordered_matrix(v_y, v_x, X) -> np.ndarray:
    d = len(v_y)
    M = np.zeros((d + 1, d + 1))
    M[0, 1:] = -np.asarray(v_y)
    M[1:, 0] = np.asarray(v_x)
    M[1:, 1:] = X
    return M


def bordered_det(sol: GeodesicSolution, X) -> float:
    """det [[0, -v_y^T], [v_x, X]]."""
    return float(np.linalg.det(bordered_matrix(sol.v_y, sol.v_x, X)))


def momentum_fd_jacobian(m: ModelSpec, y, p_y, tau, eps: float = 1e-5, rtol=1e-12, atol=1e-14) -> np.ndarray:
    """Central differences of p -> x(tau) (momentum not constrained to the figuratrix)."""
    d = m.d
    J = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        xp = endpoint(m, y, p_y + e, tau, rtol, atol)[0]
        xm = endpoint(m, y, p_y - e, tau, rtol, atol)[0]
        J[:, j] = (xp - xm) / (2 * eps)
    return J


@dataclass
class ConjugateReport:
    conjugate_free: bool
    first_zero_time: float | None
    t: np.ndarray
    B: np.ndarray
    min_singular_fd: float
    fd_nondegenerate: bool


def endpoint_map_fd(m: ModelSpec, sol: GeodesicSolution, eps: float = 1e-5) -> np.ndarray:
    """Central differences of (angles on the figuratrix at y, tau) -> x(tau)."""
    from .finsler import figuratrix_radius

    d = m.d
    e0 = sol.p_y / np.linalg.norm(sol.p_y)
    frame = _tangent_frame(e0)

    def shot(a, tau):
        u = _direction(e0, frame, a)
        p0 = figuratrix_radius(m, sol.y, u) * u
        return endpoint(m, sol.y, p0, tau, 1e-12, 1e-14)[0]

    J = np.zeros((d, d))
    for j in range(d - 1):
        da = np.zeros(d - 1)
        da[j] = eps
        J[:, j] = (shot(da, sol.tau) - shot(-da, sol.tau)) / (2 * eps)
    z = np.zeros(d - 1)
    J[:, d - 1] = (shot(z, sol.tau + eps) - shot(z, sol.tau - eps)) / (2 * eps)
    return J


def conjugate_check(m: ModelSpec, sol: GeodesicSolution, fd_threshold: float = 1e-6) -> ConjugateReport:
    """Monitor B(t) = det [[0, -v_y^T], [v(t), X(t)]] along the flight.

    Conjugate-free means B(t) > 0 on (0, tau].  The FD singular values of the
    endpoint map at tau give an independent verdict on B(tau) != 0.
    """
    path = jacobi_along(m, sol)
    B = np.empty(len(path.t))
    for k in range(len(path.t)):
        v = flow_field(m, path.x[k], path.p[k])[0]
        B[k] = np.linalg.det(bordered_matrix(sol.v_y, v, path.X[k]))
    bad = np.nonzero(B[1:] <= 0)[0]
    first = float(path.t[1:][bad[0]]) if bad.size else None
    s = np.linalg.svd(endpoint_map_fd(m, sol), compute_uv=False)
    smin = float(s[-1] / s[0])
    return ConjugateReport(first is None, first, path.t, B, smin, smin > fd_threshold)


# --------------------------------------------------------------------------
# exponential map and the Jacobi Gram determinant


def expmap(m: ModelSpec, y, w, rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """exp_y(w): follow the geodesic with initial direction w for Finsler length F(y, w).

    The flow is reparametrized by arclength, ds/dt = <p, grad_p H>.
    """
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    if not np.any(w):
        return y.copy()
    d = m.d
    dp = dual_point(m, y, w)

    def rhs(s, z):
        gp, gx = flow_field(m, z[:d], z[d:])
        rate = z[d:] @ gp
        return np.concatenate([gp, -gx]) / rate

    sol = solve_ivp(rhs, (0.0, dp.F), np.concatenate([y, dp.p]), method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise GeodesicError(f"exponential map integration failed: {sol.message}")
    return sol.y[:d, -1]


def g_orthonormal_frame(G: np.ndarray, first: np.ndarray, skip: float = 1e-6) -> np.ndarray:
    """Columns b_1..b_d orthonormal for the form G, with b_d parallel to ``first``.

    Modified Gram-Schmidt seeded with ``first``, then the coordinate axes in
    index order; axes nearly in the span of the accepted vectors are skipped.
    """
    d = G.shape[0]
    basis = [first / np.sqrt(first @ G @ first)]
    for i in range(d):
        if len(basis) == d:
            break
        w = np.zeros(d)
        w[i] = 1.0
        n0 = np.sqrt(w @ G @ w)
        for b in basis:
            w = w - (b @ G @ w) * b
        n = np.sqrt(max(w @ G @ w, 0.0))
        if n <= skip * n0:
            continue
        basis.append(w / n)
    return np.column_stack(basis[1:] + basis[:1])


@dataclass
class JacobiGram:
    r: float
    frame: np.ndarray  # b_1..b_d (columns), g_y-orthonormal, b_d = v_y / F
    dexp: np.ndarray  # d x (d-1): (exp_y)'(r b_d) b_i
    J: np.ndarray  # d x (d-1): J_i(r) = r (exp_y)'(r b_d) b_i
    gram: np.ndarray
    det: float


def expmap_jacobian_fd(m: ModelSpec, sol: GeodesicSolution, rel_eps: float = 1e-4) -> JacobiGram:
    """Central-difference derivative of exp_y at r b_d along the transversal frame vectors."""
    d = m.d
    ty = finsler_tensor(m, sol.y, sol.v_y)
    frame = g_orthonormal_frame(ty.G, sol.v_y)
    bd = frame[:, -1]
    r = sol.dF
    eps = rel_eps * r
    D = np.zeros((d, d - 1))
    for i in range(d - 1):
        bi = frame[:, i]
        D[:, i] = (expmap(m, sol.y, r * bd + eps * bi) - expmap(m, sol.y, r * bd - eps * bi)) / (2 * eps)
    Jf = r * D
    Gx = finsler_tensor(m, sol.x, sol.v_x).G
    gram = Jf.T @ Gx @ Jf
    return JacobiGram(r, frame, D, Jf, gram, float(np.linalg.det(gram)))
