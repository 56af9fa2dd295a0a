"""Finite-box assembly of E''(0) and brute-force Green columns.

The box is a product of integer coordinate ranges on Z^d_h with Dirichlet
truncation.  An optional linear tilt p_bar conjugates the operator by
exp(<p_bar, x>/h), which keeps deep-decay columns at unit scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fieldexpr import evaluate
from .finsler import dual_point, figuratrix_radius, support_function
from .hamiltonian import LocalHamiltonian
from .model import LatticeSite, ModelSpec, offsets, onsite_uh_many, representative

log = logging.getLogger(__name__)

MAX_SITES = 4_000_000


class OracleError(ArithmeticError):
    pass


@dataclass
class BoxOperator:
    lo: np.ndarray  # inclusive integer bounds per axis
    hi: np.ndarray
    h: float
    matrix: sp.csr_matrix
    tilt: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return tuple(int(c) for c in self.hi - self.lo + 1)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    def index(self, k) -> int:
        k = np.asarray(k) - self.lo
        if np.any(k < 0) or np.any(k >= self.shape):
            raise OracleError(f"site {tuple(np.asarray(k) + self.lo)} outside the box")
        return int(np.ravel_multi_index(tuple(k), self.shape))

    def site(self, i: int) -> tuple:
        return tuple(int(c) for c in np.unravel_index(i, self.shape) + self.lo)

    def coords(self) -> np.ndarray:
        """Integer coordinates of all sites in row order, shape (n, d)."""
        grids = np.indices(self.shape).reshape(len(self.shape), -1).T
        return grids + self.lo


def assemble(m: ModelSpec, box, h: float, tilt=None, max_sites: int = MAX_SITES) -> BoxOperator:
    """Sparse E''(0) restricted to ``box = (lo, hi)`` (integer, inclusive).

    With ``tilt`` the entry (x, y) is multiplied by exp(<tilt, x - y>/h); the
    diagonal is unchanged.
    """
    lo = np.asarray(box[0], dtype=int)
    hi = np.asarray(box[1], dtype=int)
    shape = tuple(int(c) for c in hi - lo + 1)
    n = int(np.prod(shape))
    if n > max_sites:
        raise OracleError(f"box has {n} sites, above the cap {max_sites}")
    op = BoxOperator(lo, hi, h, None, None if tilt is None else np.asarray(tilt, float))
    K = op.coords()
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [onsite_uh_many(m, h * K.astype(float), h)]
    fields = m.wpp
    for ell in offsets(m.d, m.R):
        ell_a = np.asarray(ell)
        Kn = K - ell_a  # y = x - h l, so (x - y)/h = l
        inside = np.all((Kn >= lo) & (Kn <= hi), axis=1)
        src = np.nonzero(inside)[0]
        dst = np.ravel_multi_index(tuple((Kn[inside] - lo).T), shape)
        mid = 0.5 * h * (K[inside] + Kn[inside]).astype(float)
        v = -m.J * evaluate(fields[representative(ell)], mid)
        if tilt is not None:
            v = v * np.exp(float(np.dot(tilt, ell_a)))
        rows.append(src)
        cols.append(dst)
        vals.append(v)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    op.matrix = A
    return op


def diagonal_dominance_margin(op: BoxOperator) -> float:
    """min over rows of (diagonal - sum |off-diagonal|)."""
    A = op.matrix
    diag = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


@dataclass
class GreenColumn:
    op: BoxOperator
    y: tuple
    values: np.ndarray  # untilted Green values, row order of op
    residual: float
    method: str

    def at(self, k) -> float:
        return float(self.values[self.op.index(k)])


def green_column(op: BoxOperator, y, method: str = "direct", tol: float = 1e-13) -> GreenColumn:
    """Column y of the inverse of the box operator, untilted back to E''(0)^{-1}."""
    yk = tuple(y.k) if isinstance(y, LatticeSite) else tuple(y)
    iy = op.index(yk)
    rhs = np.zeros(op.n_sites)
    rhs[iy] = 1.0
    A = op.matrix
    if method == "direct":
        sol = spla.spsolve(A.tocsc(), rhs, permc_spec="COLAMD")
    elif method == "cg":
        if op.tilt is not None:
            raise OracleError("conjugate gradients need the symmetric (untilted) operator")
        M = sp.diags(1.0 / A.diagonal())
        sol, info = spla.cg(A, rhs, rtol=1e-14, atol=0.0, M=M, maxiter=10 * op.n_sites)
        if info != 0:
            raise OracleError(f"conjugate gradient breakdown (info={info})")
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(sol)):
        raise OracleError("solver breakdown: non-finite solution")
    res = float(np.linalg.norm(A @ sol - rhs) / np.linalg.norm(rhs))
    if res > tol:
        raise OracleError(f"relative residual {res:.3e} above tolerance {tol:.1e}")
    if op.tilt is not None:
        K = op.coords() - np.asarray(yk)
        sol = sol * np.exp(-(K @ op.tilt))
    return GreenColumn(op, yk, sol, res, method)


def default_tilt(m: ModelSpec, x, y, box, h: float, shrink: float = 0.9, n_check: int = 256) -> np.ndarray:
    """Dual point of the x - y direction at y, shrunk into every sampled polar body of the box."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    p = dual_point(m, y, x - y).p
    if m.structurally_constant:
        return shrink * p
    lo = h * np.asarray(box[0], float)
    hi = h * np.asarray(box[1], float)
    from scipy.stats import qmc

    pts = lo + (hi - lo) * qmc.Halton(d=m.d, seed=0).random(n_check)
    u = p / np.linalg.norm(p)
    rmin = min(figuratrix_radius(LocalHamiltonian(m, q), q, u) for q in pts)
    rmin = min(rmin, figuratrix_radius(m, y, u), figuratrix_radius(m, x, u))
    return shrink * min(1.0, rmin / np.linalg.norm(p)) * p


def choose_box(m: ModelSpec, x, y, h: float, target_rel_err: float = 1e-10, max_sites: int = MAX_SITES, n_face: int = 24):
    """Integer box around x and y whose Dirichlet truncation error is below the target.

    The margin M is grown until every sampled boundary point z satisfies
    F(x - z) + F(z - y) - F(x - y) >= h ln(1/target) for the metric frozen at
    the midpoint; the floor is 2 R h.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = m.d
    loc = LocalHamiltonian(m, 0.5 * (x + y))
    F = lambda v: support_function(loc, loc.x, v)
    need = h * np.log(1.0 / target_rel_err)
    base = F(x - y)
    a, b = np.minimum(x, y), np.maximum(x, y)

    def excess(M):
        lo, hi = a - M, b + M
        worst = np.inf
        s = np.linspace(0.0, 1.0, n_face)
        for axis in range(d):
            for side in (lo[axis], hi[axis]):
                others = [i for i in range(d) if i != axis]
                grids = np.meshgrid(*[lo[i] + (hi[i] - lo[i]) * s for i in others], indexing="ij")
                pts = np.zeros((grids[0].size, d))
                pts[:, axis] = side
                for j, i in enumerate(others):
                    pts[:, i] = grids[j].ravel()
                for z in pts:
                    worst = min(worst, F(x - z) + F(z - y) - base)
        return worst

    M = 2 * m.R * h
    while excess(M) < need:
        M *= 1.25
    lo = np.floor((a - M) / h + 1e-9).astype(int)
    hi = np.ceil((b + M) / h - 1e-9).astype(int)
    n = int(np.prod(hi - lo + 1))
    if n > max_sites:
        raise OracleError(f"box for target {target_rel_err:g} needs {n} sites, above the cap {max_sites}")
    return lo, hi


def green_entry(
    m: ModelSpec, x, y, h: float, target_rel_err: float = 1e-10, tilt="auto", method: str = "direct"
) -> float:
    """(E''(0)^{-1})_{xy} from a finite-box solve, box chosen by :func:`choose_box`."""
    xs = LatticeSite.from_point(x, h)
    ys = LatticeSite.from_point(y, h)
    box = choose_box(m, xs.point, ys.point, h, target_rel_err)
    if isinstance(tilt, str) and tilt == "auto":
        tilt = None if np.array_equal(xs.k, ys.k) else default_tilt(m, xs.point, ys.point, box, h)
    op = assemble(m, box, h, tilt)
    return green_column(op, ys, method).at(xs.k)
