"""Laplacian, killed transition operator, and the iterated Dirichlet form.

The order-m form is the quadratic form of A_m = M (I - P)^m (M = diag(mu)),
applied matrix-free as m sparse Laplacian passes; with a killing region the
operators act on the region with Dirichlet (absorbing) boundary.  A_m is
symmetric PSD; on the whole graph its kernel is exactly the constants.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError

DEFAULT_TOL = 1e-10


def apply_laplacian(g, f):
    """(P - I) f on the whole graph."""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise DomainError("function length does not match vertex count")
    return g.W.dot(f) / g.mu - f


def apply_killed(g, region, f):
    """(P^A f) for f supported on the region; zero off the region."""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise DomainError("function length does not match vertex count")
    outside = ~region.mask()
    if np.any(f[outside] != 0.0):
        raise DomainError("f must vanish off the killing region")
    out = g.W.dot(f) / g.mu
    out[outside] = 0.0
    return out


class FormOperator:
    """Matrix-free A_m = M (I - P)^m, optionally killed on a region.

    Vectors are region-length when a region is given, full-length otherwise.
    """

    def __init__(self, g, m, region=None):
        if int(m) != m or m < 1:
            raise DomainError("order m must be an integer >= 1")
        self.g = g
        self.m = int(m)
        self.region = region
        if region is None:
            self.dim = g.n
            self._W = g.W
            self._mu = g.mu
        else:
            if len(region) == 0:
                raise DomainError("killing region is empty")
            idx = region.ids
            self.dim = len(idx)
            self._W = g.W[idx][:, idx].tocsr()
            self._mu = g.mu[idx]

    def _check(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape != (self.dim,):
            raise DomainError(f"expected vector of length {self.dim}, got {f.shape}")
        return f

    def apply_one_minus_p(self, f):
        return f - self._W.dot(f) / self._mu

    def apply(self, f):
        """A_m f."""
        y = self._check(f)
        for _ in range(self.m):
            y = self.apply_one_minus_p(y)
        return self._mu * y

    def energy(self, f, h):
        """Bilinear form value: h . (A_m f)."""
        h = self._check(h)
        return float(np.dot(h, self.apply(f)))

    def laplacian_matrix(self):
        """Sparse M - W for this domain (killed when a region is set)."""
        return sp.diags(self._mu) - self._W

    @property
    def mu(self):
        return self._mu


def energy(g, m, f, h, region=None):
    """E_m(f, h); for region None this is the whole-graph form."""
    return FormOperator(g, m, region).energy(f, h)


def energy_edge_sum(g, f, h):
    """Order-1 form as the explicit edge-difference sum (cross-check route)."""
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    du = f[g.edge_u] - f[g.edge_v]
    dv = h[g.edge_u] - h[g.edge_v]
    return float(np.sum(du * dv * g.edge_w))


def _project_constants(v):
    return v - v.mean()


def solve_psd(op, rhs, tol=DEFAULT_TOL, maxiter=None):
    """Conjugate gradients for A_m w = rhs.

    Whole-graph operators have kernel = constants: the rhs must be orthogonal
    to them and both rhs and iterates are projected each step.  Returns w with
    ||A w - rhs|| <= tol * ||rhs||.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.dim,):
        raise DomainError("rhs length mismatch")
    has_kernel = op.region is None
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(op.dim)
    if has_kernel:
        resid = abs(rhs.sum()) / rhs_norm
        if resid > 1e-8:
            raise DomainError(f"rhs not in operator range (projection residual {resid:.3e})")
        rhs = _project_constants(rhs)
    if maxiter is None:
        maxiter = 20 * op.dim
    x = np.zeros(op.dim)
    r = rhs.copy()
    p = r.copy()
    rs = float(np.dot(r, r))
    target = tol * rhs_norm
    for it in range(maxiter):
        if np.sqrt(rs) <= target:
            return x
        ap = op.apply(p)
        if has_kernel:
            ap = _project_constants(ap)
        alpha = rs / float(np.dot(p, ap))
        x += alpha * p
        r -= alpha * ap
        if has_kernel:
            r = _project_constants(r)
        rs_new = float(np.dot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= target:
        return x
    raise SolverError("conjugate gradients did not converge",
                      residual=float(np.sqrt(rs) / rhs_norm), iterations=maxiter)


class LinearSolver:
    """Cached sparse LU for repeated solves against the (killed) Laplacian.

    Whole-graph mode grounds vertex 0 (kernel = constants); rhs must sum to
    zero, which holds for all uses here.  solve_form applies A_m^{-1} by m
    nested Laplacian solves with the measure-weighted mean removed between
    stages (the representative for which the next stage stays solvable).
    """

    def __init__(self, g, region=None):
        self.g = g
        self.region = region
        if region is None:
            self.dim = g.n
            self.mu = g.mu
            L = (sp.diags(g.mu) - g.W).tocsc()
            self._lu = spla.splu(L[1:, 1:])
            self._grounded = True
        else:
            idx = region.ids
            if len(idx) == g.n:
                raise DomainError("killed solver needs a strict subregion")
            self.dim = len(idx)
            self.mu = g.mu[idx]
            W_aa = g.W[idx][:, idx]
            L = (sp.diags(self.mu) - W_aa).tocsc()
            self._lu = spla.splu(L)
            self._grounded = False
        self._mu_total = float(self.mu.sum())

    def solve_lap(self, b):
        """u with L u = b (whole-graph: b must be orthogonal to constants)."""
        b = np.asarray(b, dtype=float)
        if not self._grounded:
            return self._lu.solve(b)
        scale = float(np.abs(b).max()) or 1.0
        if abs(b.sum()) > 1e-8 * scale * self.dim:
            raise DomainError("rhs not orthogonal to the constant kernel")
        u = np.empty(self.dim)
        u[0] = 0.0
        u[1:] = self._lu.solve(b[1:])
        return u

    def solve_form(self, rhs, m):
        """u with A_m u = rhs; whole-graph result is mu-mean-free."""
        u = np.asarray(rhs, dtype=float)
        for k in range(m):
            b = u if k == 0 else self.mu * u
            u = self.solve_lap(b)
            if self._grounded:
                u = u - np.dot(self.mu, u) / self._mu_total
        return u


def pinv_quadratic(g, m, x, y, solver=None):
    """R-style quadratic form (e_x - e_y) . A_m^+ (e_x - e_y) and its extremizer."""
    if x == y:
        return 0.0, np.zeros(g.n)
    if solver is None:
        solver = LinearSolver(g)
    c = np.zeros(g.n)
    c[x] = 1.0
    c[y] = -1.0
    u = solver.solve_form(c, m)
    return float(u[x] - u[y]), u
