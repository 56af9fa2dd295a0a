"""Hamiltonian flow on {H = 0}, geodesic shooting and the Finsler distance.

Projections of Hamiltonian trajectories in the zero level set are the
Finsler geodesics, and along such a trajectory F(q, q') = <p, q'>.  A
geodesic from y to x is found by shooting over momentum directions on the
figuratrix at y and the flight time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import roots_legendre

from .finsler import direction_grid, dual_point, figuratrix_radius, support_function
from .hamiltonian import LocalHamiltonian, flow_field, hamiltonian, momentum_derivs
from .model import ModelSpec, onsite_u

log = logging.getLogger(__name__)

RTOL = 1e-10
ATOL = 1e-12


class GeodesicError(ArithmeticError):
    pass


class NoGeodesicFound(GeodesicError):
    pass


class UniquenessViolated(GeodesicError):
    def __init__(self, message, solutions):
        super().__init__(message)
        self.solutions = solutions


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # (K, d)
    p: np.ndarray  # (K, d)
    H: np.ndarray  # H residual at the samples
    nfev: int = 0
    nsteps: int = 0
    arclength: float = 0.0  # integral of <p, dx/dt>

    @property
    def tau(self) -> float:
        return float(self.t[-1])


@dataclass
class GeodesicSolution:
    y: np.ndarray
    x: np.ndarray
    tau: float
    p_y: np.ndarray
    v_y: np.ndarray
    p_x: np.ndarray
    v_x: np.ndarray
    dF: float
    dF_lagrangian: float  # integral of F(q, q') along the path, independent route
    trajectory: Trajectory
    residual: float
    unique: bool = True
    conjugate_free: bool | None = None
    others: list = field(default_factory=list)


def _augmented_rhs(m: ModelSpec):
    def rhs(t, z):
        d = m.d
        gp, gx = flow_field(m, z[:d], z[d : 2 * d])
        return np.concatenate([gp, -gx, [z[d : 2 * d] @ gp]])

    return rhs


def _integrate(m, y, p0, tau, rtol, atol, t_eval=None, dense=False):
    d = m.d
    z0 = np.concatenate([np.asarray(y, float), np.asarray(p0, float), [0.0]])
    sol = solve_ivp(
        _augmented_rhs(m), (0.0, tau), z0, method="DOP853", rtol=rtol, atol=atol,
        t_eval=t_eval, dense_output=dense,
    )
    if sol.status != 0:
        raise GeodesicError(f"integration failed: {sol.message}")
    return sol


def _scale(m: ModelSpec, y) -> float:
    return max(1.0, abs(onsite_u(m, y)))


def flow(
    m: ModelSpec, y, p0, tau: float, n_samples: int = 101, rtol: float = RTOL, atol: float = ATOL,
    project: bool = False,
) -> Trajectory:
    """Integrate Hamilton's equations from (y, p0) over [0, tau].

    With ``project=True`` the flight is split into ``n_samples - 1`` segments
    and the momentum is rescaled radially back onto the figuratrix after each.
    """
    y = np.asarray(y, float)
    p0 = np.asarray(p0, float)
    d = m.d
    scale = _scale(m, y)
    if abs(hamiltonian(m, y, p0)) > 1e-8 * scale:
        raise GeodesicError("initial momentum is not on the figuratrix")
    ts = np.linspace(0.0, tau, n_samples)
    if not project:
        sol = _integrate(m, y, p0, tau, rtol, atol, t_eval=ts)
        xs, ps, arc = sol.y[:d].T, sol.y[d : 2 * d].T, sol.y[2 * d, -1]
        nfev, nsteps = sol.nfev, len(sol.t)
    else:
        xs, ps = [y], [p0]
        arc, nfev, nsteps = 0.0, 0, 0
        for a, b in zip(ts[:-1], ts[1:]):
            sol = _integrate(m, xs[-1], ps[-1], b - a, rtol, atol)
            xe, pe = sol.y[:d, -1], sol.y[d : 2 * d, -1]
            pe = figuratrix_radius(m, xe, pe) * pe / np.linalg.norm(pe)
            xs.append(xe)
            ps.append(pe)
            arc += sol.y[2 * d, -1]
            nfev += sol.nfev
        xs, ps = np.array(xs), np.array(ps)
    Hs = np.array([hamiltonian(m, a, b) for a, b in zip(xs, ps)])
    return Trajectory(ts, np.asarray(xs), np.asarray(ps), Hs, nfev, nsteps, float(arc))


def endpoint(m: ModelSpec, y, p0, tau: float, rtol: float = RTOL, atol: float = ATOL):
    """(x(tau), p(tau), arclength) of the flow from (y, p0)."""
    d = m.d
    sol = _integrate(m, y, p0, tau, rtol, atol)
    return sol.y[:d, -1], sol.y[d : 2 * d, -1], sol.y[2 * d, -1]


# --------------------------------------------------------------------------
# charts of the figuratrix at y


def _tangent_frame(e0: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the complement of the unit vector e0."""
    q, _ = np.linalg.qr(np.column_stack([e0, np.eye(e0.size)]))
    return q[:, 1 : e0.size].T


def _direction(e0: np.ndarray, frame: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Exponential map of the unit sphere at e0 applied to the tangent vector a."""
    w = a @ frame
    n = np.linalg.norm(w)
    if n == 0:
        return e0.copy()
    return np.cos(n) * e0 + np.sin(n) * w / n


class _Shooter:
    def __init__(self, m: ModelSpec, y, x, rtol=RTOL, atol=ATOL):
        self.m = m
        self.y = np.asarray(y, float)
        self.x = np.asarray(x, float)
        self.loc = LocalHamiltonian(m, self.y)
        self.rtol, self.atol = rtol, atol

    def momentum(self, e0, frame, a):
        u = _direction(e0, frame, a)
        return figuratrix_radius(self.loc, self.y, u) * u

    def solve(self, e0, tau0, max_iter=40):
        """Newton on (angles, tau) -> x(tau) - x; Jacobian by central differences in angles."""
        m, d = self.m, self.m.d
        frame = _tangent_frame(e0)
        a = np.zeros(d - 1)
        tau = tau0
        tol = 1e-10 * (1.0 + np.linalg.norm(self.x - self.y))
        eps = 1e-5

        def resid(a, tau):
            p0 = self.momentum(e0, frame, a)
            xe, pe, _ = endpoint(m, self.y, p0, tau, self.rtol, self.atol)
            return xe - self.x, xe, pe

        r, xe, pe = resid(a, tau)
        for _ in range(max_iter):
            nr = np.linalg.norm(r)
            if nr <= tol:
                return self.momentum(e0, frame, a), tau
            jac = np.zeros((d, d))
            for j in range(d - 1):
                da = np.zeros(d - 1)
                da[j] = eps
                jac[:, j] = (resid(a + da, tau)[0] - resid(a - da, tau)[0]) / (2 * eps)
            jac[:, d - 1] = flow_field(m, xe, pe)[0]
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                return None
            # keep angle steps below ~0.5 rad and tau positive
            t = min(1.0, 0.5 / max(np.linalg.norm(step[:-1]), 1e-300))
            while t > 1e-4:
                an, taun = a + t * step[:-1], tau + t * step[-1]
                if taun > 0:
                    try:
                        rn, xn, pn = resid(an, taun)
                    except GeodesicError:
                        rn = None
                    if rn is not None and np.linalg.norm(rn) < (1 - 1e-4 * t) * nr:
                        break
                t *= 0.5
            else:
                return None
            a, tau, r, xe, pe = an, taun, rn, xn, pn
        return None


def _finish(m, y, x, p_y, tau, rtol=RTOL, atol=ATOL, n_samples=101) -> GeodesicSolution:
    traj = flow(m, y, p_y, tau, n_samples=n_samples, rtol=rtol, atol=atol)
    p_x = traj.p[-1]
    v_y = momentum_derivs(m, y, p_y)[1]
    v_x = momentum_derivs(m, traj.x[-1], p_x)[1]
    return GeodesicSolution(
        y=np.asarray(y, float), x=np.asarray(x, float), tau=float(tau), p_y=np.asarray(p_y, float),
        v_y=v_y, p_x=p_x, v_x=v_x, dF=traj.arclength,
        dF_lagrangian=lagrangian_length(m, y, p_y, tau, rtol, atol),
        trajectory=traj, residual=float(np.linalg.norm(traj.x[-1] - x)),
    )


def lagrangian_length(m, y, p0, tau, rtol=RTOL, atol=ATOL, n_nodes: int = 40) -> float:
    """Gauss-Legendre quadrature of F(q, q') along the projected trajectory."""
    d = m.d
    nodes, weights = roots_legendre(n_nodes)
    ts = 0.5 * tau * (nodes + 1.0)
    sol = _integrate(m, y, p0, tau, rtol, atol, t_eval=ts)
    total = 0.0
    for k in range(n_nodes):
        q, p = sol.y[:d, k], sol.y[d : 2 * d, k]
        qdot = flow_field(m, q, p)[0]
        total += weights[k] * support_function(m, q, qdot)
    return 0.5 * tau * total


def _seed_guess(m, y, x, e0=None):
    """Momentum direction e0 and flight-time guess for a shot from y towards x."""
    loc = LocalHamiltonian(m, y)
    if e0 is None:
        dp = dual_point(loc, y, x - y)
        e0 = dp.p / np.linalg.norm(dp.p)
    p0 = figuratrix_radius(loc, y, e0) * e0
    v0 = loc.derivs(p0)[1]
    along = v0 @ (x - y) / np.linalg.norm(x - y)
    speed = along if along > 0.1 * np.linalg.norm(v0) else np.linalg.norm(v0)
    return e0, np.linalg.norm(x - y) / speed


def _shoot_from(m, y, x, e0=None, rtol=RTOL, atol=ATOL):
    e0, tau0 = _seed_guess(m, y, x, e0)
    out = _Shooter(m, y, x, rtol, atol).solve(e0, tau0)
    return out


def uniqueness_scan(m: ModelSpec, y, x, n_seeds: int = 16, rtol=RTOL, atol=ATOL, cluster_tol: float = 1e-6):
    """Distinct geodesics from y to x found from ``n_seeds`` figuratrix directions, by dF."""
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    found = []
    seeds = [None] + list(direction_grid(m.d, n_seeds))
    for e0 in seeds:
        try:
            res = _shoot_from(m, y, x, e0, rtol, atol)
        except (GeodesicError, ArithmeticError) as exc:
            log.debug("seed %s failed: %s", e0, exc)
            continue
        if res is None:
            continue
        p_y, tau = res
        if any(
            np.linalg.norm(p_y - q) <= cluster_tol * max(1.0, np.linalg.norm(q)) and abs(tau - t) <= cluster_tol * max(1.0, t)
            for q, t in found
        ):
            continue
        found.append((p_y, tau))
    sols = [_finish(m, y, x, p, t, rtol, atol) for p, t in found]
    return sorted(sols, key=lambda s: s.dF)


def shoot(
    m: ModelSpec, y, x, n_seeds: int = 0, rtol: float = RTOL, atol: float = ATOL,
    tie_tol: float = 1e-8, check_conjugacy: bool = True,
) -> GeodesicSolution:
    """Minimizing geodesic from y to x.

    The primary shot starts from the dual point of x - y.  With ``n_seeds > 0``
    a uniqueness scan over that many extra directions runs as well; distinct
    minimizers whose lengths agree within ``tie_tol`` raise
    :class:`UniquenessViolated`.
    """
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    if np.array_equal(x, y):
        raise GeodesicError("x = y: distance is zero and there is no geodesic to shoot")
    if n_seeds > 0:
        sols = uniqueness_scan(m, y, x, n_seeds, rtol, atol)
    else:
        res = _shoot_from(m, y, x, None, rtol, atol)
        sols = [] if res is None else [_finish(m, y, x, res[0], res[1], rtol, atol)]
        if not sols:
            sols = uniqueness_scan(m, y, x, 16, rtol, atol)
    if not sols:
        raise NoGeodesicFound(f"no geodesic found from {y.tolist()} to {x.tolist()}")
    best = sols[0]
    ties = [s for s in sols[1:] if s.dF - best.dF <= tie_tol * max(1.0, best.dF)]
    best.others = sols[1:]
    if ties:
        best.unique = False
        raise UniquenessViolated(
            f"{len(ties) + 1} distinct minimizing geodesics of length {best.dF!r}", [best] + ties
        )
    if check_conjugacy:
        from .jacobi import conjugate_check

        best.conjugate_free = conjugate_check(m, best).conjugate_free
    return best


def finsler_distance(m: ModelSpec, y, x, **kw) -> float:
    if np.array_equal(np.asarray(x, float), np.asarray(y, float)):
        return 0.0
    return shoot(m, y, x, check_conjugacy=False, **kw).dF
