"""Point-to-point resolvent quasi-metric, its metrization, balls and scaling.

The quasi-metric is R_m(x,y) = (e_x - e_y) . A_m^+ (e_x - e_y), the value of
the variational supremum sup |f(x)-f(y)|^2 / E_m(f,f); its extremizer is the
pseudoinverse image of e_x - e_y.  The metrization is the all-pairs chain
infimum of R_m^p; with the guaranteed quasi-triangle constant K <= 2, p = 1/2
makes the chain infimum an exact metric with rho^2 comparable to R_m.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapError, DomainError
from .forms import LinearSolver
from .graphs import Region
from .util import loglog_slope, parallel_map

DENSE_CAP = 4000
METRIZE_CAP = 1500
_MAGIC = b"RLMT"
_VERSION = 1


@dataclass
class QuasiMetricTable:
    """Symmetric R_m matrix over all vertices or a landmark subset."""

    R: np.ndarray = field(repr=False)
    m: int
    ids: np.ndarray | None = None  # None means the full vertex set, in order

    def row(self, x):
        return self.R[self._pos(x)]

    def _pos(self, x):
        if self.ids is None:
            return int(x)
        i = int(np.searchsorted(self.ids, x))
        if i >= len(self.ids) or self.ids[i] != x:
            raise DomainError(f"vertex {x} not covered by this table")
        return i

    @property
    def size(self):
        return self.R.shape[0]


@dataclass
class MetricTable:
    """Exact metric rho with its exponent and measured sandwich constants."""

    rho: np.ndarray = field(repr=False)
    p: float
    sandwich_c: float
    sandwich_C: float
    ids: np.ndarray | None = None

    def row(self, x):
        if self.ids is None:
            return self.rho[int(x)]
        i = int(np.searchsorted(self.ids, x))
        if i >= len(self.ids) or self.ids[i] != x:
            raise DomainError(f"vertex {x} not covered by this table")
        return self.rho[i]

    @property
    def size(self):
        return self.rho.shape[0]


def rm_matrix(g, m, subset=None, solver=None):
    """Dense R_m table (full mode needs n <= DENSE_CAP; subset mode is
    restricted to landmark-landmark pairs)."""
    if solver is None:
        solver = LinearSolver(g)
    if subset is None:
        if g.n > DENSE_CAP:
            raise CapError(
                f"full quasi-metric table capped at {DENSE_CAP} vertices; use landmark mode"
            )
        sources = np.arange(g.n)
        ids = None
    else:
        sources = np.asarray(sorted(int(s) for s in subset), dtype=np.int64)
        ids = sources

    def column(x):
        rhs = np.full(g.n, -1.0 / g.n)
        rhs[x] += 1.0
        return solver.solve_form(rhs, m)

    cols = parallel_map(column, sources.tolist())
    U = np.stack(cols, axis=1)  # U[:, j] solves A_m u = e_{s_j} - 1/n
    U = U[sources] if ids is not None else U
    d = np.diag(U).copy()
    R = d[:, None] + d[None, :] - U - U.T
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 0.0)
    return QuasiMetricTable(R=R, m=int(m), ids=ids)


def quasi_constant(table):
    """K = max over distinct triples of R(x,y) / (R(x,z) + R(z,y)).

    Returns 1.0 when there are fewer than 3 points (no genuine triple).
    """
    R = table.R if isinstance(table, QuasiMetricTable) else np.asarray(table)
    n = R.shape[0]
    if n < 3:
        return 1.0
    best = 0.0
    for z in range(n):
        denom = R[:, z][:, None] + R[z, :][None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = R / denom
        ratio[z, :] = 0.0
        ratio[:, z] = 0.0
        np.fill_diagonal(ratio, 0.0)
        best = max(best, float(np.nanmax(ratio)))
    return best


def key_inequality_check(table, g, m, trials, rng):
    """Worst signed violation of |f(x)-f(y)|^2 <= R_m(x,y) E_m(f,f).

    Positive values mean a violation; the scale of comparison is returned too.
    """
    from .forms import FormOperator

    if table.ids is not None:
        raise DomainError("key inequality check needs a full table")
    op = FormOperator(g, m)
    worst = -np.inf
    scale = 0.0
    for _ in range(trials):
        f = rng.standard_normal(g.n)
        e = op.energy(f, f)
        diff2 = (f[:, None] - f[None, :]) ** 2
        viol = diff2 - table.R * e
        np.fill_diagonal(viol, -np.inf)
        worst = max(worst, float(viol.max()))
        scale = max(scale, abs(e) * float(table.R.max()))
    return worst, scale


def metrize(table, p=0.5):
    """All-pairs chain infimum of R^p; exact metric by construction.

    Also measures the sandwich constants c, C with
    c * rho(x,y)^(1/p) <= R_m(x,y) <= C * rho(x,y)^(1/p).
    """
    if not 0 < p <= 1:
        raise DomainError("exponent p must lie in (0, 1]")
    if table.ids is not None:
        raise DomainError("metrize needs a full table; use metric_rows for landmarks")
    n = table.size
    if n > METRIZE_CAP:
        raise CapError(
            f"exact all-pairs metrization capped at {METRIZE_CAP} vertices; "
            "use landmark/single-source mode"
        )
    D = table.R**p
    for k in range(n):
        np.minimum(D, np.add.outer(D[:, k], D[k, :]), out=D)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = table.R[off] / D[off] ** (1.0 / p)
    return MetricTable(
        rho=D,
        p=float(p),
        sandwich_c=float(ratio.min()),
        sandwich_C=float(ratio.max()),
        ids=None,
    )


def metric_rows(table, sources, p=0.5):
    """Single-source chain-infimum rows of R^p from each source.

    Dijkstra over the implicit complete graph with edge costs R^p; identical
    to the corresponding rows of metrize() on full tables.
    """
    if not 0 < p <= 1:
        raise DomainError("exponent p must lie in (0, 1]")
    if table.ids is not None:
        raise DomainError("metric rows need a full quasi-metric table")
    W = table.R**p
    n = table.size
    rows = {}
    for s in sources:
        dist = np.full(n, np.inf)
        dist[s] = 0.0
        done = np.zeros(n, dtype=bool)
        for _ in range(n):
            u = int(np.argmin(np.where(done, np.inf, dist)))
            if not np.isfinite(dist[u]):
                break
            done[u] = True
            np.minimum(dist, dist[u] + W[u], out=dist)
        rows[int(s)] = dist
    return rows


def save_metric(mt, path):
    """Binary metric file: magic, version, size, exponent, strict lower triangle."""
    n = mt.size
    tri = mt.rho[np.tril_indices(n, k=-1)].astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQd", _VERSION, n, mt.p))
        fh.write(tri.tobytes())


def load_metric(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise DomainError("not a metric table file (bad magic)")
        version, n, p = struct.unpack("<IQd", fh.read(4 + 8 + 8))
        if version != _VERSION:
            raise DomainError(f"unsupported metric file version {version}")
        tri = np.frombuffer(fh.read(), dtype="<f8")
    if len(tri) != n * (n - 1) // 2:
        raise DomainError("truncated metric table file")
    rho = np.zeros((n, n))
    rho[np.tril_indices(n, k=-1)] = tri
    rho = rho + rho.T
    off = ~np.eye(n, dtype=bool)
    return MetricTable(rho=rho, p=float(p), sandwich_c=float("nan"),
                       sandwich_C=float("nan"), ids=None)


# -- balls, volumes, safety ---------------------------------------------------


def ball(g, dist_row, x, r):
    """Connected component of {dist < r} containing x, as a Region."""
    if r <= 0:
        raise DomainError("ball radius must be positive")
    inside = np.asarray(dist_row) < r
    if not inside[x]:
        raise DomainError("center is not inside its own ball")
    seen = np.zeros(g.n, dtype=bool)
    seen[x] = True
    stack = [int(x)]
    indptr, indices = g.W.indptr, g.W.indices
    while stack:
        u = stack.pop()
        for y in indices[indptr[u]:indptr[u + 1]]:
            if inside[y] and not seen[y]:
                seen[y] = True
                stack.append(int(y))
    return Region(g, np.nonzero(seen)[0])


def volume(g, region):
    return float(g.mu[region.ids].sum())


def safe_radius(g, dist_row, x, r, factor=4.0):
    """True when the factor-inflated ball avoids the generator boundary."""
    if not g.boundary:
        return True
    b = ball(g, dist_row, x, factor * r)
    return not any(v in g.boundary for v in b.ids)


def covering_number(g, mt, x, r):
    """Greedy count of r-balls covering the 2r-ball around x (upper bound)."""
    if mt.ids is not None:
        raise DomainError("covering scan needs a full metric table")
    target = np.nonzero(mt.row(x) < 2 * r)[0]
    uncovered = np.ones(mt.size, dtype=bool)
    mask = np.zeros(mt.size, dtype=bool)
    mask[target] = True
    count = 0
    while True:
        cand = np.nonzero(mask & uncovered)[0]
        if len(cand) == 0:
            return count
        y = int(cand[0])
        uncovered &= ~(mt.row(y) < r)
        count += 1


# -- scaling profiles ---------------------------------------------------------


@dataclass
class ScalingProfile:
    """Per-center ball volumes and the space-time scaling functions.

    F(x,r) = (r^2 V(x,r))^(1/m) and H(x,r) = r^2 V(x,r) tabulated on the safe
    radius grid of each center, with the fitted doubling and exponent data.
    """

    m: int
    centers: list
    radii: dict = field(repr=False)
    vol: dict = field(repr=False)
    doubling_constant: float = float("nan")
    beta_m: float = float("nan")
    w0_constant: float = float("nan")
    beta: float = float("nan")
    beta_prime: float = float("nan")
    notes: list = field(default_factory=list)

    def F(self, x, r):
        return self.H(x, r) ** (1.0 / self.m)

    def H(self, x, r):
        return r * r * self._interp_volume(x, r)

    def _interp_volume(self, x, r):
        rs = self.radii[x]
        vs = self.vol[x]
        if r <= rs[0]:
            return float(vs[0])
        if r >= rs[-1]:
            return float(vs[-1])
        return float(np.exp(np.interp(np.log(r), np.log(rs), np.log(vs))))

    def grid_F(self, x):
        return (self.radii[x] ** 2 * self.vol[x]) ** (1.0 / self.m)

    def inverse_f(self, x, value):
        """Radius with F(x, radius) = value; clamps outside the grid range.

        Returns (radius, clamped flag).
        """
        rs = self.radii[x]
        fs = self.grid_F(x)
        if value <= fs[0]:
            return float(rs[0]), value < fs[0] * (1 - 1e-12)
        if value >= fs[-1]:
            return float(rs[-1]), value > fs[-1] * (1 + 1e-12)
        # F is strictly increasing on the grid; log-log interpolation inverse
        r = np.exp(np.interp(np.log(value), np.log(fs), np.log(rs)))
        return float(r), False


def vd_scan(g, rows, centers, radii, m, safety_factor=4.0):
    """Volume/doubling/exponent scan over (center, dyadic radius) pairs.

    rows maps each center to its metric distance row.  A pair enters the scan
    only when the safety_factor-inflated ball avoids the generator boundary.
    """
    prof = ScalingProfile(m=int(m), centers=[], radii={}, vol={})
    for x in centers:
        row = rows[x]
        ok_r, ok_v = [], []
        for r in radii:
            if not safe_radius(g, row, x, r, factor=safety_factor):
                continue
            b = ball(g, row, x, r)
            ok_r.append(float(r))
            ok_v.append(volume(g, b))
        if len(ok_r) >= 2:
            prof.centers.append(int(x))
            prof.radii[int(x)] = np.asarray(ok_r)
            prof.vol[int(x)] = np.asarray(ok_v)
    if not prof.centers:
        raise DomainError("no (center, radius) pair lies in the safe range")

    doubling = []
    w0 = []
    slopes = []
    for x in prof.centers:
        rs, vs = prof.radii[x], prof.vol[x]
        fs = prof.grid_F(x)
        for i, r in enumerate(rs):
            j = np.nonzero(np.isclose(rs, 2 * r, rtol=1e-9))[0]
            if len(j):
                doubling.append(vs[j[0]] / vs[i])
                w0.append(fs[j[0]] / fs[i])
        if len(rs) >= 2:
            slopes.append(loglog_slope(rs, rs**2 * vs))
    if doubling:
        prof.doubling_constant = float(max(doubling))
        prof.w0_constant = float(max(w0))
    if slopes:
        prof.beta_m = float(max(slopes))

    # pairwise scaling-window exponents across centers (octave-separated pairs)
    exps = []
    for x in prof.centers:
        for rx in prof.radii[x]:
            fx = prof.F(x, rx)
            bx = ball(g, rows[x], x, rx)
            for y in prof.centers:
                if y not in bx:
                    continue
                for ry in prof.radii[y]:
                    if rx >= 2 * ry:
                        exps.append(np.log(fx / prof.F(y, ry)) / np.log(rx / ry))
    if exps:
        prof.beta = float(max(exps))
        prof.beta_prime = float(min(exps))
        if prof.beta_prime <= 1:
            prof.notes.append(f"scaling window lower exponent {prof.beta_prime:.3f} <= 1")
    return prof


def select_landmarks(g, budget):
    """Deterministic farthest-point landmark set in hop distance."""
    budget = min(int(budget), g.n)
    chosen = [0]
    dist = g.graph_distances(0)
    while len(chosen) < budget:
        nxt = int(np.argmax(dist))
        if dist[nxt] <= 0:
            break
        chosen.append(nxt)
        dist = np.minimum(dist, g.graph_distances(nxt))
    return sorted(chosen)
