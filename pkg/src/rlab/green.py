"""m-resolvent Green kernels on finite regions and resolvent distances.

The order-m Green kernel on a strict subregion A is the inverse of the
symmetric killed form matrix: its row at x solves
M_A (I - P^A)^m row = e_x, equivalently (I - P^A)^m row = e_x / mu(x).
Rows are computed by m nested killed Laplacian solves; the weighted series
sum over the killed kernel is kept as an independent oracle.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SolverError
from .forms import FormOperator, LinearSolver
from .graphs import Region


def qm(m, n):
    """Weight binom(n+m-1, m-1) of the order-m resolvent series, exact integer."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if m == 0:
        return 1 if n == 0 else 0
    if m < 0:
        raise DomainError("m must be >= 0")
    return math.comb(n + m - 1, m - 1)


@dataclass
class GreenTable:
    """One Green-kernel row g_m^A(x, .) over a region (region-local order)."""

    region: Region
    m: int
    x: int
    row: np.ndarray = field(repr=False)

    @property
    def g_xx(self):
        return float(self.row[self.region.local_index(self.x)])

    def value(self, y):
        return float(self.row[self.region.local_index(y)])

    def row_sum_weighted(self):
        """Sum over the region of G_m^A(x, y) = g row against mu."""
        return float(np.dot(self.row, self.region.g.mu[self.region.ids]))


def _check_region(g, region, x):
    if region.is_whole_graph():
        raise DomainError("Green kernels need a strict subregion (Dirichlet boundary)")
    if x not in region:
        raise DomainError("source vertex must lie in the region")


def green_row(g, region, m, x, solver=None):
    """Row of g_m^A(x, .) via m nested killed solves."""
    _check_region(g, region, x)
    if solver is None:
        solver = LinearSolver(g, region)
    rhs = np.zeros(len(region))
    rhs[region.local_index(x)] = 1.0
    row = solver.solve_form(rhs, m)
    lo = float(row.min())
    if lo < -1e-12 * max(1.0, float(row.max())):
        raise SolverError(f"Green row has a negative entry {lo:.3e}")
    return GreenTable(region, m, x, row)


def green_series_oracle(g, region, m, x, horizon, discount=1.0):
    """Truncated series sum_{n<=N} w^n Q_m(n) P_n^A(x, .) / mu, with tail bound.

    Only meant as a cross-check against green_row; reports (row, info) where
    info carries the estimated killed spectral radius and a geometric tail
    bound on the truncation error (per entry, in g units).
    """
    _check_region(g, region, x)
    if discount <= 0 or discount > 1:
        raise DomainError("discount must be in (0, 1]")
    idx = region.ids
    W_aa = g.W[idx][:, idx].tocsr()
    mu_a = g.mu[idx]
    v = np.zeros(len(idx))
    v[region.local_index(x)] = 1.0  # row of P_n^A(x, .), starts at P_0 = I
    acc = np.zeros(len(idx))
    masses = []
    term_mass = 0.0
    for n in range(horizon + 1):
        coeff = float(qm(m, n)) * discount**n
        acc += coeff * v
        term_mass = coeff * float(v.sum())
        masses.append(float(v.sum()))
        v = W_aa.dot(v / mu_a)
    # spectral-radius estimate from late mass ratios
    tail = np.inf
    converged = False
    if len(masses) > 4 and masses[-2] > 0:
        lam = masses[-1] / masses[-2]
        ratio = lam * discount * (horizon + m) / (horizon + 1)
        if ratio < 1:
            tail = term_mass * ratio / (1 - ratio)
            converged = True
    info = {
        "spectral_radius_estimate": masses[-1] / masses[-2] if masses[-2] > 0 else 0.0,
        "tail_bound": tail,
        "converged": converged,
    }
    return acc / mu_a, info


def reproducing_check(g, region, m, x, u, table=None):
    """Residual |E_m^A(g row, u) - u(x)| plus the self-energy residual.

    u is a full-length function vanishing off the region.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n,):
        raise DomainError("u must be a full-length vertex function")
    outside = ~region.mask()
    if np.any(u[outside] != 0.0):
        raise DomainError("u must vanish off the region")
    if table is None:
        table = green_row(g, region, m, x)
    op = FormOperator(g, m, region)
    u_loc = u[region.ids]
    residual = abs(op.energy(table.row, u_loc) - u[x])
    self_residual = abs(op.energy(table.row, table.row) - table.g_xx)
    return residual, self_residual


def rm_to_complement(g, region, m, x, solver=None):
    """Resolvent distance from x to the region complement: g_m^A(x, x).

    Also returns the extremal unit-at-x profile g_m^A(x, .) / g_m^A(x, x).
    """
    table = green_row(g, region, m, x, solver=solver)
    value = table.g_xx
    if value <= 0:
        raise SolverError("degenerate Green diagonal")
    return value, table.row / value


def rm_set_to_set(g, m, a_region, b_region, tol=1e-12):
    """Resolvent distance between disjoint sets via constrained minimization.

    Minimizes the whole-graph form over f with f = 1 on A, f = 0 on B and
    free values elsewhere; returns 1 / (minimal energy).
    """
    if set(a_region.ids) & set(b_region.ids):
        raise DomainError("sets must be disjoint")
    op = FormOperator(g, m)
    pinned = np.zeros(g.n)
    pinned[a_region.ids] = 1.0
    free = np.ones(g.n, dtype=bool)
    free[a_region.ids] = False
    free[b_region.ids] = False
    f = pinned.copy()
    n_free = int(free.sum())
    if n_free:
        # CG on the free block of A_m: A_FF f_F = -(A_m pinned)_F
        rhs = -op.apply(pinned)[free]

        def apply_ff(v):
            z = np.zeros(g.n)
            z[free] = v
            return op.apply(z)[free]

        xv = np.zeros(n_free)
        r = rhs.copy()
        p = r.copy()
        rs = float(np.dot(r, r))
        rhs_norm = float(np.linalg.norm(rhs)) or 1.0
        for _ in range(20 * n_free + 10):
            if np.sqrt(rs) <= tol * rhs_norm:
                break
            ap = apply_ff(p)
            denom = float(np.dot(p, ap))
            if denom <= 0:
                raise SolverError("free block lost positive definiteness")
            alpha = rs / denom
            xv += alpha * p
            r -= alpha * ap
            rs_new = float(np.dot(r, r))
            p = r + (rs_new / rs) * p
            rs = rs_new
        else:
            raise SolverError("constrained solve did not converge",
                              residual=float(np.sqrt(rs) / rhs_norm))
        f[free] = xv
    e = op.energy(f, f)
    if e <= 0:
        raise SolverError("constrained minimum has nonpositive energy")
    return 1.0 / e
