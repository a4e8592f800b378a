"""Weighted graphs, standing-assumption validation, and example-family generators.

Vertices are dense integer ids 0..n-1.  Edges are stored once with u < v and
strictly positive symmetric weight; the vertex measure is mu(x) = sum of
incident weights.  Graphs are immutable after construction and safe to share.
"""

import io

import numpy as np
import scipy.sparse as sp

from .errors import CapError, DomainError, GraphFormatError
from .util import sha256_hex

MAX_VERTICES = 50_000


class WeightedGraph:
    """Connected weighted graph with symmetric positive edge weights."""

    def __init__(self, n, eu, ev, ew, boundary=(), meta=None):
        if n < 2:
            raise DomainError("graph needs at least 2 vertices (mu(x) > 0 required)")
        if n > MAX_VERTICES:
            raise CapError(f"vertex count {n} exceeds cap {MAX_VERTICES}")
        eu = np.asarray(eu, dtype=np.int64)
        ev = np.asarray(ev, dtype=np.int64)
        ew = np.asarray(ew, dtype=np.float64)
        if not (len(eu) == len(ev) == len(ew)):
            raise DomainError("edge arrays must have equal length")
        if len(eu) == 0:
            raise DomainError("graph has no edges")
        if eu.min() < 0 or max(eu.max(), ev.max()) >= n:
            raise DomainError("edge endpoint out of range")
        if np.any(eu == ev):
            raise DomainError("self-loops are not allowed")
        if np.any(ew <= 0) or not np.all(np.isfinite(ew)):
            raise DomainError("edge weights must be positive and finite")
        # canonical orientation u < v, then lexicographic order
        lo = np.minimum(eu, ev)
        hi = np.maximum(eu, ev)
        order = np.lexsort((hi, lo))
        lo, hi, ew = lo[order], hi[order], ew[order]
        key = lo * n + hi
        if len(np.unique(key)) != len(key):
            raise DomainError("duplicate edge (weights are stored once per pair)")
        self.n = int(n)
        self.edge_u = lo
        self.edge_v = hi
        self.edge_w = ew
        self.boundary = frozenset(int(b) for b in boundary)
        self.meta = dict(meta or {})

        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        vals = np.concatenate([ew, ew])
        self.W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.mu = np.asarray(self.W.sum(axis=1)).ravel()
        if np.any(self.mu <= 0):
            raise DomainError("isolated vertex: mu(x) = 0")
        self.total_mass = float(self.mu.sum())
        if not self._connected():
            raise DomainError("graph is not connected")

    # -- structure ---------------------------------------------------------

    def _connected(self):
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        indptr, indices = self.W.indptr, self.W.indices
        while stack:
            x = stack.pop()
            for y in indices[indptr[x]:indptr[x + 1]]:
                if not seen[y]:
                    seen[y] = True
                    stack.append(int(y))
        return bool(seen.all())

    @property
    def m_edges(self):
        return len(self.edge_w)

    def neighbors(self, x):
        return self.W.indices[self.W.indptr[x]:self.W.indptr[x + 1]]

    def transition(self):
        """Row-stochastic transition matrix P = diag(1/mu) W."""
        return sp.diags(1.0 / self.mu) @ self.W

    def laplacian(self):
        """L = diag(mu) - W, symmetric PSD with kernel = constants."""
        return sp.diags(self.mu) - self.W

    def graph_distances(self, x):
        """BFS hop distances from x (unweighted)."""
        return self.hop_distances([x])

    def hop_distances(self, sources):
        """Multi-source BFS hop distances."""
        dist = np.full(self.n, -1, dtype=np.int64)
        frontier = []
        for s in sources:
            dist[s] = 0
            frontier.append(int(s))
        indptr, indices = self.W.indptr, self.W.indices
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for y in indices[indptr[u]:indptr[u + 1]]:
                    if dist[y] < 0:
                        dist[y] = d
                        nxt.append(int(y))
            frontier = nxt
        return dist

    # -- serialization -----------------------------------------------------

    def to_text(self):
        buf = io.StringIO()
        buf.write(f"{self.n} {self.m_edges}\n")
        if self.boundary:
            buf.write("# boundary: " + " ".join(str(b) for b in sorted(self.boundary)) + "\n")
        for u, v, w in zip(self.edge_u, self.edge_v, self.edge_w):
            buf.write(f"{u} {v} {w!r}\n")
        return buf.getvalue()

    def graph_hash(self):
        return sha256_hex(self.to_text())

    def __repr__(self):
        fam = self.meta.get("family", "graph")
        return f"WeightedGraph({fam}, n={self.n}, m={self.m_edges})"


class Region:
    """Finite vertex subset.  Most operations require it nonempty."""

    def __init__(self, g, ids, allow_empty=False):
        ids = np.unique(np.asarray(list(ids), dtype=np.int64))
        if len(ids) == 0 and not allow_empty:
            raise DomainError("region is empty")
        if len(ids) and (ids.min() < 0 or ids.max() >= g.n):
            raise DomainError("region contains invalid vertex ids")
        self.g = g
        self.ids = ids
        self._set = frozenset(int(i) for i in ids)

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, x):
        return int(x) in self._set

    def local_index(self, x):
        i = int(np.searchsorted(self.ids, x))
        if i >= len(self.ids) or self.ids[i] != x:
            raise DomainError(f"vertex {x} not in region")
        return i

    def mask(self):
        m = np.zeros(self.g.n, dtype=bool)
        m[self.ids] = True
        return m

    def is_whole_graph(self):
        return len(self.ids) == self.g.n


def validate_p0(g):
    """Uniform one-step probability lower bound: min over directed edges of w/mu."""
    a = g.edge_w / g.mu[g.edge_u]
    b = g.edge_w / g.mu[g.edge_v]
    return float(min(a.min(), b.min()))


def exterior_boundary(g, region):
    """Vertices outside the region adjacent to it (may be empty)."""
    inside = region.mask()
    touched = np.zeros(g.n, dtype=bool)
    indptr, indices = g.W.indptr, g.W.indices
    for x in region.ids:
        touched[indices[indptr[x]:indptr[x + 1]]] = True
    return Region(g, np.nonzero(touched & ~inside)[0], allow_empty=True)


def graph_ball(g, x, radius):
    """BFS ball of hop radius `radius` around x, as a Region."""
    dist = g.graph_distances(x)
    return Region(g, np.nonzero((dist >= 0) & (dist <= radius))[0])


# -- generators -------------------------------------------------------------


def gen_lattice(dim, side, weight_exponent=0.0):
    """Box {0..side-1}^dim with nearest-neighbor edges.

    side must be odd and >= 3 so the box has a central vertex.  With
    weight_exponent a != 0 (dim=1 only) edge k..k+1 gets weight (1+k)**a;
    that models a weighted half-line rooted at 0, so only the far end is
    marked as generator boundary.
    """
    if dim not in (1, 2, 3):
        raise DomainError("dim must be 1, 2, or 3")
    if side < 3 or side % 2 == 0:
        raise DomainError("side must be odd and >= 3")
    if weight_exponent != 0.0 and dim != 1:
        raise DomainError("weight profile is only supported for dim=1")
    n = side**dim
    if n > MAX_VERTICES:
        raise CapError(f"lattice with {n} vertices exceeds cap {MAX_VERTICES}")
    shape = (side,) * dim
    coords = np.indices(shape).reshape(dim, -1)
    ids = np.arange(n).reshape(shape)
    eu, ev, ew = [], [], []
    for axis in range(dim):
        sl_lo = [slice(None)] * dim
        sl_hi = [slice(None)] * dim
        sl_lo[axis] = slice(0, side - 1)
        sl_hi[axis] = slice(1, side)
        a = ids[tuple(sl_lo)].ravel()
        b = ids[tuple(sl_hi)].ravel()
        eu.append(a)
        ev.append(b)
        if dim == 1 and weight_exponent != 0.0:
            k = np.arange(side - 1, dtype=float)
            ew.append((1.0 + k) ** weight_exponent)
        else:
            ew.append(np.ones(len(a)))
    eu = np.concatenate(eu)
    ev = np.concatenate(ev)
    ew = np.concatenate(ew)
    on_face = np.zeros(n, dtype=bool)
    for axis in range(dim):
        on_face |= (coords[axis] == 0) | (coords[axis] == side - 1)
    if dim == 1 and weight_exponent != 0.0:
        boundary = [side - 1]
        family = "halfline"
    else:
        boundary = np.nonzero(on_face)[0].tolist()
        family = "lattice"
    meta = {"family": family, "dim": dim, "side": side}
    if weight_exponent != 0.0:
        meta["weight_exponent"] = weight_exponent
    return WeightedGraph(n, eu, ev, ew, boundary=boundary, meta=meta)


def gen_gasket(level):
    """Pre-fractal triangular gasket graph of the given subdivision level.

    Unit weights; (3**(level+1)+3)/2 vertices and 3**(level+1) edges.  The
    three extreme corners are the generator boundary.
    """
    if level < 0:
        raise DomainError("level must be >= 0")
    if level > 8:
        raise CapError("gasket level capped at 8")
    size = 2**level
    edges = set()

    def subdivide(a, b, s):
        # triangle with corner (a, b) in the oblique lattice basis, side s
        if s == 1:
            p, q, r = (a, b), (a + 1, b), (a, b + 1)
            edges.add((p, q))
            edges.add((p, r))
            edges.add((q, r))
            return
        h = s // 2
        subdivide(a, b, h)
        subdivide(a + h, b, h)
        subdivide(a, b + h, h)

    subdivide(0, 0, size)
    verts = sorted({p for e in edges for p in e})
    index = {p: i for i, p in enumerate(verts)}
    eu = [index[p] for p, q in edges]
    ev = [index[q] for p, q in edges]
    corners = [(0, 0), (size, 0), (0, size)]
    g = WeightedGraph(
        len(verts),
        eu,
        ev,
        np.ones(len(edges)),
        boundary=[index[c] for c in corners],
        meta={"family": "gasket", "level": level},
    )
    assert g.n == (3 ** (level + 1) + 3) // 2
    assert g.m_edges == 3 ** (level + 1)
    return g


def gen_tree(branching, weights=1.0):
    """Spherically symmetric rooted tree.

    branching[k] children per generation-k vertex (>= 1); weights is a scalar
    or one positive weight per generation.  Leaves of the last generation are
    the generator boundary.
    """
    branching = list(branching)
    if not branching:
        raise DomainError("branching profile is empty")
    if any(int(b) < 1 for b in branching):
        raise DomainError("branching factors must be >= 1")
    depth = len(branching)
    if np.isscalar(weights):
        weights = [float(weights)] * depth
    weights = [float(w) for w in weights]
    if len(weights) != depth:
        raise DomainError("weight profile length must match branching profile")
    if any(w <= 0 for w in weights):
        raise DomainError("weights must be positive")
    eu, ev, ew = [], [], []
    current = [0]
    next_id = 1
    for gen in range(depth):
        nxt = []
        for parent in current:
            for _ in range(int(branching[gen])):
                eu.append(parent)
                ev.append(next_id)
                ew.append(weights[gen])
                nxt.append(next_id)
                next_id += 1
        current = nxt
    if next_id > MAX_VERTICES:
        raise CapError(f"tree with {next_id} vertices exceeds cap {MAX_VERTICES}")
    return WeightedGraph(
        next_id, eu, ev, ew, boundary=current, meta={"family": "tree", "branching": branching}
    )


# -- file round trip ---------------------------------------------------------

_BOUNDARY_TAG = "# boundary:"


def save_graph(g, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(g.to_text())


def load_graph(path):
    """Parse the text format: `N M` then M lines `u v w`; `#` lines ignored.

    A `# boundary: ...` comment, when present, restores generator-boundary
    marks (plain comments to any other reader).
    """
    boundary = []
    header = None
    eu, ev, ew = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith(_BOUNDARY_TAG):
                    try:
                        boundary = [int(t) for t in line[len(_BOUNDARY_TAG):].split()]
                    except ValueError:
                        raise GraphFormatError("malformed boundary comment", lineno)
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 2:
                    raise GraphFormatError("expected header `N M`", lineno)
                try:
                    header = (int(parts[0]), int(parts[1]))
                except ValueError:
                    raise GraphFormatError("non-integer header", lineno)
                continue
            if len(parts) != 3:
                raise GraphFormatError("expected `u v w`", lineno)
            try:
                u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise GraphFormatError("malformed edge line", lineno)
            if u >= v:
                raise GraphFormatError("edges must be stored once with u < v", lineno)
            if w <= 0:
                raise GraphFormatError("edge weight must be positive", lineno)
            eu.append(u)
            ev.append(v)
            ew.append(w)
    if header is None:
        raise GraphFormatError("empty graph file")
    n, m = header
    if len(eu) != m:
        raise GraphFormatError(f"header promises {m} edges, found {len(eu)}")
    try:
        return WeightedGraph(n, eu, ev, ew, boundary=boundary)
    except DomainError as exc:
        raise GraphFormatError(str(exc))
