"""Exact heat kernels, time-difference checks, and exit-time functionals.

Kernel rows are the mass distributions P_n(x, .) of the walk; the normalized
kernel is p_n(x, y) = P_n(x, y) / mu(y), which is symmetric in (x, y).  Exit
times count the first step landing outside the region, so T >= 1 always.
Exit moments come in two exact forms: the Green row sum equals
E[binom(T+m-1, m)] (one nested solve), and the series over the survival
function gives the same value from the exit-time distribution; the classical
moment E[binom(T+m, m)] is exposed separately.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapError, DomainError
from .forms import FormOperator, LinearSolver
from .graphs import exterior_boundary
from .green import qm
from .util import loglog_slope, rng_stream

KERNEL_BUDGET = 2_000_000_000  # steps * nonzeros


class KernelSeries:
    """Rows P_n(x, .) for 0 <= n <= N plus the parity-smoothing accessor."""

    def __init__(self, g, x, rows, boundary_survival=None):
        self.g = g
        self.x = int(x)
        self.rows = rows
        self.N = rows.shape[0] - 1
        self.boundary_survival = boundary_survival

    def p(self, n):
        """Normalized kernel row p_n(x, .)."""
        self._check(n)
        return self.rows[n] / self.g.mu

    def p_tilde(self, n):
        """p_n + p_{n+1} (parity smoothing)."""
        self._check(n + 1)
        return (self.rows[n] + self.rows[n + 1]) / self.g.mu

    def diagonal(self):
        """Sequence p_n(x, x) for n = 0..N."""
        return self.rows[:, self.x] / self.g.mu[self.x]

    def mass(self, n):
        self._check(n)
        return float(self.rows[n].sum())

    def safe_horizon(self, tol=1e-10):
        """Largest n with boundary-contamination mass <= tol (N if no boundary)."""
        if self.boundary_survival is None:
            return self.N
        leaked = 1.0 - self.boundary_survival
        ok = np.nonzero(leaked <= tol)[0]
        return int(ok[-1]) if len(ok) else -1

    def _check(self, n):
        if n < 0 or n > self.N:
            raise DomainError(f"time {n} outside computed horizon {self.N}")


def heat_kernel(g, x, N, budget=KERNEL_BUDGET, track_boundary=True):
    """Iterate the transition operator from the point mass at x for N steps."""
    nnz = g.W.nnz
    if N * nnz > budget:
        raise CapError(f"kernel budget exceeded: {N} steps x {nnz} nonzeros")
    rows = np.zeros((N + 1, g.n))
    rows[0, x] = 1.0
    bd = sorted(g.boundary) if (track_boundary and g.boundary) else None
    surv = None
    if bd is not None:
        vb = rows[0].copy()
        vb[bd] = 0.0
        surv = np.empty(N + 1)
        surv[0] = float(vb.sum())
    v = rows[0]
    for n in range(1, N + 1):
        v = g.W.dot(v / g.mu)
        rows[n] = v
        if bd is not None:
            vb = g.W.dot(vb / g.mu)
            vb[bd] = 0.0
            surv[n] = float(vb.sum())
    return KernelSeries(g, x, rows, boundary_survival=surv)


def time_diff(series, k, n, step=2):
    """k-fold time difference of the diagonal at n (step 2 by default)."""
    d = series.diagonal() if isinstance(series, KernelSeries) else np.asarray(series, float)
    top = n + step * k
    if n < 0 or top >= len(d):
        raise DomainError(f"difference needs horizon {top}, have {len(d) - 1}")
    return float(sum((-1) ** (k - j) * math.comb(k, j) * d[n + step * j] for j in range(k + 1)))


def pdiff_check(series, k_max, n_values):
    """Alternating-difference decay and spectral positivity of the diagonal.

    Checks (-1)^k (D^k p)_{4n}(x,x) <= (2n)^{-k} p_{2n}(x,x) on the requested
    grid and (-1)^k (D^k p)_{2t}(x,x) >= -1e-12 wherever the horizon allows.
    """
    d = series.diagonal()
    worst_margin = np.inf
    min_signed = np.inf
    violations = []
    for k in range(0, k_max + 1):
        for n in n_values:
            if 4 * n + 2 * k > series.N or n < 1:
                continue
            lhs = (-1) ** k * time_diff(d, k, 4 * n)
            rhs = d[2 * n] / (2 * n) ** k
            margin = rhs - lhs
            worst_margin = min(worst_margin, margin)
            if margin < -1e-12 * max(1.0, abs(rhs)):
                violations.append(("decay", k, n, margin))
        for t in range(0, series.N - 2 * k + 1, 2):
            signed = (-1) ** k * time_diff(d, k, t)
            min_signed = min(min_signed, signed)
            if signed < -1e-12:
                violations.append(("positivity", k, t, signed))
    return {
        "worst_margin": float(worst_margin),
        "min_signed_difference": float(min_signed),
        "violations": violations,
    }


def ledif_check(g, series, m, n):
    """Energy of a kernel row against its two candidate difference formulas.

    Returns (lhs, step2_value, step1_value): lhs is the quadratic form
    E_m(p_n(x,.), p_n(x,.)), step1 is sum_i (-1)^i binom(m,i) p_{2n+i}(x,x)
    which matches lhs exactly, and step2 is the same sum with stride-2 times,
    reported for comparison (it differs, e.g. on a single edge).
    """
    if 2 * n + 2 * m > series.N:
        raise DomainError("horizon too short for the requested (m, n)")
    d = series.diagonal()
    f = series.p(n)
    lhs = FormOperator(g, m).energy(f, f)
    step1 = float(sum((-1) ** i * math.comb(m, i) * d[2 * n + i] for i in range(m + 1)))
    step2 = float(sum((-1) ** i * math.comb(m, i) * d[2 * n + 2 * i] for i in range(m + 1)))
    return lhs, step2, step1


# -- exit times ---------------------------------------------------------------


def mean_exit(g, region, x, solver=None):
    """E_x[T] solving the killed system (I - P^A) h = 1."""
    if region.is_whole_graph():
        raise DomainError("exit time needs a strict subregion")
    if x not in region:
        raise DomainError("start vertex must lie in the region")
    if solver is None:
        solver = LinearSolver(g, region)
    h = solver.solve_lap(g.mu[region.ids])
    return float(h[region.local_index(x)])


def exit_moment_exact(g, region, m, x, solver=None):
    """Green row-sum moment: sum_y G_m^A(x,y) = E[binom(T+m-1, m)]."""
    if region.is_whole_graph():
        raise DomainError("exit moment needs a strict subregion")
    if x not in region:
        raise DomainError("start vertex must lie in the region")
    if solver is None:
        solver = LinearSolver(g, region)
    h = np.ones(len(region))
    for _ in range(m):
        h = solver.solve_lap(g.mu[region.ids] * h)
    return float(h[region.local_index(x)])


def exit_distribution(g, region, x, tail_tol=1e-16, max_steps=5_000_000):
    """Exact survival and absorbed-mass sequences of the exit time.

    Returns (survival, absorbed): survival[j] = P(T > j), absorbed[j] = P(T = j)
    (absorbed[0] = 0).  Iterates the killed kernel until the surviving mass
    drops below tail_tol; mass conservation is asserted along the way.
    """
    if region.is_whole_graph():
        raise DomainError("exit time needs a strict subregion")
    idx = region.ids
    W_aa = g.W[idx][:, idx].tocsr()
    mu_a = g.mu[idx]
    v = np.zeros(len(idx))
    v[region.local_index(x)] = 1.0
    survival = [1.0]
    absorbed = [0.0]
    total_out = 0.0
    budget = max_steps // max(1, len(idx))
    for _ in range(budget):
        v = W_aa.dot(v / mu_a)
        s = float(v.sum())
        out = survival[-1] - s
        absorbed.append(out)
        survival.append(s)
        total_out += out
        if abs(s + total_out - 1.0) > 1e-12:
            raise DomainError("exit-time mass conservation violated beyond 1e-12")
        if s <= tail_tol:
            return np.asarray(survival), np.asarray(absorbed)
    raise CapError("exit-time distribution did not decay within the step budget")


def exit_moment_series(g, region, m, x, survival=None):
    """Row-sum moment from the distribution: sum_n Q_m(n) P(T > n)."""
    if survival is None:
        survival, _ = exit_distribution(g, region, x)
    weights = np.array([qm(m, n) for n in range(len(survival))], dtype=float)
    return float(np.dot(weights, survival))


def exit_qmoment(g, region, m, x, survival=None):
    """Classical resolvent moment E[binom(T+m, m)] from the distribution."""
    if survival is None:
        survival, _ = exit_distribution(g, region, x)
    pmf = survival[:-1] - survival[1:]  # pmf[j] = P(T = j+1)
    return float(sum(math.comb(j + 1 + m, m) * p for j, p in enumerate(pmf)))


def exit_power_moment(g, region, power, x, survival=None):
    """E[T^power] from the exact distribution."""
    if survival is None:
        survival, _ = exit_distribution(g, region, x)
    pmf = survival[:-1] - survival[1:]  # pmf[j] = P(T = j+1)
    ts = np.arange(1, len(survival), dtype=float)
    return float(np.dot(ts**power, pmf))


@dataclass
class ExitStats:
    """Monte Carlo exit-time sample with its provenance."""

    region_ids: np.ndarray = field(repr=False)
    x: int
    seed: int
    samples: np.ndarray = field(repr=False)

    @property
    def trials(self):
        return len(self.samples)

    @property
    def mean(self):
        return float(self.samples.mean())

    @property
    def variance(self):
        return float(self.samples.var(ddof=1)) if self.trials > 1 else 0.0

    def standard_error(self):
        return float(np.sqrt(self.variance / self.trials))

    def tail(self, n):
        """Empirical P(T < n)."""
        return float(np.mean(self.samples < n))

    def moment(self, fn):
        return float(np.mean([fn(int(t)) for t in self.samples]))


def _alias_tables(g):
    """Walker alias tables per vertex over the flattened CSR neighbor lists."""
    indptr, indices, data = g.W.indptr, g.W.indices, g.W.data
    prob = np.empty(len(data))
    alias = np.empty(len(data), dtype=np.int64)
    for v in range(g.n):
        lo, hi = indptr[v], indptr[v + 1]
        p = data[lo:hi] / g.mu[v]
        k = hi - lo
        scaled = p * k
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        pr = np.ones(k)
        al = np.arange(k)
        scaled = scaled.copy()
        while small and large:
            s = small.pop()
            l = large.pop()
            pr[s] = scaled[s]
            al[s] = l
            scaled[l] = scaled[l] - (1.0 - scaled[s])
            (small if scaled[l] < 1.0 else large).append(l)
        prob[lo:hi] = pr
        alias[lo:hi] = indices[lo + al]
    return prob, alias


def simulate_exit(g, region, x, trials, seed, max_steps=10_000_000):
    """Seeded vectorized walks until every trial leaves the region.

    Randomness is counter-based from (seed, stream=1): per-step draws are made
    for every trial slot, so results are bitwise reproducible for a fixed
    (seed, trials) regardless of which walks have already exited.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    if x not in region:
        raise DomainError("start vertex must lie in the region")
    rng = rng_stream(seed, 1)
    prob, alias = _alias_tables(g)
    indptr, indices = g.W.indptr, g.W.indices
    deg = np.diff(indptr)
    inside = region.mask()
    pos = np.full(trials, x, dtype=np.int64)
    exit_time = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)
    for step in range(1, max_steps + 1):
        if not active.any():
            break
        r0 = rng.random(trials)
        r1 = rng.random(trials)
        cur = pos[active]
        slot = indptr[cur] + np.minimum((r0[active] * deg[cur]).astype(np.int64), deg[cur] - 1)
        take = r1[active] < prob[slot]
        nxt = np.where(take, indices[slot], alias[slot])
        pos[active] = nxt
        leaving = ~inside[nxt]
        ids = np.nonzero(active)[0][leaving]
        exit_time[ids] = step
        active[ids] = False
    if active.any():
        raise CapError("simulation step budget exhausted before all walks exited")
    return ExitStats(region_ids=region.ids, x=int(x), seed=int(seed), samples=exit_time)


# -- exit-tail machinery -------------------------------------------------------


@dataclass
class TailBoundConfig:
    """Constants of the exit-tail scans; q enters the block-count condition."""

    q: float = 0.25
    C0: float | None = None
    c0: float | None = None

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise DomainError("q must lie in (0, 1)")


def kdef_scan(em_of_ball, m, q, r, n, k_cap=64):
    """Largest k >= 1 with n^m / k <= q * min-over-ball of E_m at radius r/k.

    em_of_ball(k) must return that minimum; None when no k qualifies.
    """
    best = None
    for k in range(1, k_cap + 1):
        bound = em_of_ball(k)
        if bound is None:
            break
        if n**m / k <= q * bound:
            best = k
    return best


def tail_and_kdef(g, rows_for, m, x, r, n_grid, cfg, beta_m=float("nan")):
    """Exit-tail bundle at one (center, radius): block counts, exact tails,
    the additive tail bound, the lower-tail constant, and envelope fits.

    rows_for(y) must return the metric distance row of y (used for the
    sub-balls centered at interior points).
    """
    from .metrics import ball

    b = ball(g, rows_for(x), x, r)
    if b.is_whole_graph():
        raise DomainError("tail scan ball swallowed the whole graph")
    survival, _ = exit_distribution(g, b, x)
    em_center = exit_moment_series(g, b, m, x, survival=survival)
    em_cache = {}

    def min_em_at(k):
        rr = r / k
        vals = []
        for y in b.ids:
            key = (int(y), k)
            if key not in em_cache:
                try:
                    sub = ball(g, rows_for(int(y)), int(y), rr)
                except DomainError:
                    return None
                if sub.is_whole_graph():
                    return None
                em_cache[key] = exit_moment_exact(g, sub, m, int(y))
            vals.append(em_cache[key])
        return min(vals) if vals else None

    # per-start exit moments over the ball, for the additive bound
    em_by_start = {int(y): exit_moment_exact(g, b, m, int(y)) for y in b.ids}
    em_bar = max(em_by_start.values())

    points = []
    c0_fit_terms = []
    for n in n_grid:
        n = int(n)
        if n < 1:
            continue
        k = kdef_scan(min_em_at, m, cfg.q, r, n)
        p_below = 1.0 - (survival[n - 1] if n - 1 < len(survival) else 0.0)
        # smallest C >= 1 making the additive bound hold at this point
        disc = (p_below - 1.0) * em_bar
        c_fit = (disc + math.sqrt(disc * disc + 4.0 * n**m * em_center)) / (2.0 * n**m)
        c0_fit_terms.append(max(1.0, c_fit))
        points.append({"n": n, "k": k, "p_exit_before": p_below})

    C0 = cfg.C0 if cfg.C0 is not None else (max(c0_fit_terms) if c0_fit_terms else float("nan"))
    # lower-tail constant at the prescribed time scale
    n_star = (0.5 * C0**-2 * em_center) ** (1.0 / m) if np.isfinite(C0) else float("nan")
    if np.isfinite(n_star) and n_star >= 1:
        j = int(math.ceil(n_star)) - 1
        c0_meas = float(survival[j]) if j < len(survival) else 0.0
    else:
        c0_meas = float("nan")

    # envelope fits ln P <= ln C - c * k  (and the volume-scaled variant)
    ks = [p["k"] for p in points if p["k"] is not None and 0 < p["p_exit_before"] < 1]
    ps = [p["p_exit_before"] for p in points if p["k"] is not None and 0 < p["p_exit_before"] < 1]
    env_c = float("nan")
    if len(ks) >= 2 and max(ks) > min(ks):
        slope = loglog_slope(np.exp(np.asarray(ks, float)), ps)  # ln p vs k
        env_c = -slope
    return {
        "x": int(x),
        "r": float(r),
        "ball_size": len(b),
        "E_m_center": em_center,
        "E_m_max": em_bar,
        "C0": float(C0),
        "n_star": float(n_star),
        "c0_measured": c0_meas,
        "envelope_c": env_c,
        "beta_m": float(beta_m),
        "points": points,
    }


# -- auxiliary identities -------------------------------------------------------


def fk_check(g, region, m, x, lam, horizon=None):
    """Discounted resolvent identity report for an eigen-profile f.

    Builds f with (P - (1+lam)) f = 0 inside the region and prescribed
    positive boundary values, then compares the truncated weighted series
    against the stopped expectation; the first-identity residual
    |f(x) - E[w^T f(X_T)]| is near zero while the order-m series identity is
    reported with its measured discrepancy.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    if lam < 0:
        raise DomainError("lambda must be >= 0")
    omega = 1.0 / (1.0 + lam)
    bd = exterior_boundary(g, region)
    if len(bd) == 0:
        raise DomainError("region has no exterior boundary")
    f_bd = 1.0 + (bd.ids % 3) / 3.0  # deterministic positive boundary data
    idx = region.ids
    W_aa = g.W[idx][:, idx].tocsr()
    W_ab = g.W[idx][:, bd.ids].tocsr()
    mu_a = g.mu[idx]
    A = sp.diags((1.0 + lam) * mu_a) - W_aa
    f_in = spla.splu(A.tocsc()).solve(W_ab.dot(f_bd))

    # absorbed mass per (step, boundary atom)
    v = np.zeros(len(idx))
    v[region.local_index(x)] = 1.0
    stopped_first = 0.0
    stopped_series = 0.0
    survival = 1.0
    step = 0
    while survival > 1e-16 and step < 1_000_000:
        step += 1
        out = W_ab.T.dot(v / mu_a)
        v = W_aa.dot(v / mu_a)
        survival = float(v.sum())
        hit = float(np.dot(out, f_bd))
        stopped_first += omega**step * hit
        stopped_series += float(qm(m + 1, step)) * omega ** (step + m) * hit
    if horizon is None:
        horizon = max(64, 4 * step)
    u = np.zeros(len(idx))
    u[:] = f_in
    series = 0.0
    xi = region.local_index(x)
    for n in range(horizon + 1):
        series += omega ** (n + m) * float(qm(m, n)) * u[xi]
        u = W_aa.dot(u / mu_a)
    return {
        "lambda": lam,
        "omega": omega,
        "first_identity_residual": abs(f_in[xi] - stopped_first),
        "series_lhs": series,
        "series_rhs": stopped_series,
        "series_discrepancy": abs(series - stopped_series),
    }


def spectral_dimension(g, x, horizon=512):
    """Return-probability decay exponent estimate d_s from a log-log fit."""
    series = heat_kernel(g, x, horizon, track_boundary=True)
    top = series.safe_horizon(1e-8)
    d = series.diagonal()
    ns, vals = [], []
    n = max(4, horizon // 64)
    while 2 * n <= top:
        if d[2 * n] > 0:
            ns.append(2 * n)
            vals.append(d[2 * n])
        n *= 2
    if len(ns) < 2:
        raise DomainError("horizon too short for a spectral-dimension fit")
    return -2.0 * loglog_slope(ns, vals)


def choose_order(g, x=None, horizon=512, cap=4):
    """Smallest integer m with m >= d_s/2, capped; the scan default."""
    if x is None:
        dist = g.graph_distances(0)
        far = int(np.argmax(dist))
        dist2 = g.graph_distances(far)
        x = int(np.argmin(np.maximum(dist, dist2)))  # rough BFS center
    ds = spectral_dimension(g, x, horizon)
    m = max(1, math.ceil(ds / 2 - 1e-9))
    return min(m, cap), ds
