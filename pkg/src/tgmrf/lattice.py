"""Spatial graphs and the proper CAR precision matrix.

The precision used throughout the package is

    Q(rho) = diag(n_i) - rho * A,

where ``A`` is the 0/1 adjacency matrix and ``n_i`` the neighbour count of
site ``i``.  It is symmetric positive definite for ``0 <= rho < 1`` on any
graph without isolated sites.

Factorisations are banded Cholesky factors computed after a reverse
Cuthill-McKee reordering.  The ordering (the symbolic part) depends only on
the graph and is cached per graph; each ``rho`` costs one numeric
refactorisation.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import connected_components, reverse_cuthill_mckee
from scipy.spatial import cKDTree

from .errors import IsolatedSite, NotPositiveDefinite

__all__ = [
    "SpatialGraph",
    "BandedCholesky",
    "CarPrecision",
    "CarStructure",
    "CopulaCorrelation",
    "build_lfdp_lattice",
    "build_grid_graph",
    "car_structure",
    "car_precision",
    "copula_correlation",
    "color_classes",
    "read_graph",
    "write_graph",
    "load_graph",
]

LFDP_MAJOR_ROWS = 8
LFDP_MAJOR_COLS = 5
LFDP_MAJOR_SPACING = 60.0
LFDP_SUPPLEMENTARY_SPACING = 20.0
LFDP_RADIUS = 60.0

# distance comparisons on metre grids; guards against 60.000000001
_DIST_EPS = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    """Undirected neighbourhood graph over a finite set of sites.

    Attributes
    ----------
    coords : (n, 2) array
        Site coordinates (metres for the LFDP lattice, grid units otherwise).
    neighbors : tuple of tuple of int
        Sorted neighbour indices of every site.
    labels : tuple of str
        Optional per-site tag (``"major"``/``"supplementary"`` for LFDP).
    """

    coords: np.ndarray
    neighbors: tuple
    labels: tuple = ()

    def __post_init__(self):
        n = len(self.neighbors)
        coords = _frozen(self.coords).reshape(n, 2) if len(self.coords) else _frozen(np.zeros((n, 2)))
        object.__setattr__(self, "coords", coords)
        nbrs = tuple(tuple(sorted(int(j) for j in row)) for row in self.neighbors)
        object.__setattr__(self, "neighbors", nbrs)
        for i, row in enumerate(nbrs):
            if not row:
                raise IsolatedSite(f"site {i} has no neighbours")
            if i in row:
                raise ValueError(f"site {i} lists itself as a neighbour")
            if len(set(row)) != len(row):
                raise ValueError(f"site {i} has duplicate neighbours")
            for j in row:
                if not 0 <= j < n:
                    raise ValueError(f"neighbour index {j} out of range")
                if i not in nbrs[j]:
                    raise ValueError(f"asymmetric neighbourhood: {i}->{j} without {j}->{i}")
        if self.labels and len(self.labels) != n:
            raise ValueError("labels must have one entry per site")

    @classmethod
    def from_edges(cls, n_sites, edges, coords=None, labels=()):
        rows = [[] for _ in range(n_sites)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at site {i}")
            if j not in rows[i]:
                rows[i].append(j)
                rows[j].append(i)
        if coords is None:
            coords = np.zeros((n_sites, 2))
        return cls(coords=coords, neighbors=tuple(rows), labels=tuple(labels))

    @classmethod
    def from_coords(cls, coords, radius, labels=()):
        """Sites are neighbours when their Euclidean distance is <= ``radius``."""
        coords = np.asarray(coords, dtype=float)
        if radius <= 0:
            raise ValueError("radius must be positive")
        tree = cKDTree(coords)
        pairs = tree.query_pairs(radius + _DIST_EPS * max(1.0, radius))
        return cls.from_edges(len(coords), sorted(pairs), coords=coords, labels=labels)

    @property
    def n_sites(self):
        return len(self.neighbors)

    @functools.cached_property
    def n_neighbors(self):
        return _frozen([len(r) for r in self.neighbors], dtype=np.int64)

    def edges(self):
        """Each undirected edge once, as ``(i, j)`` with ``i < j``."""
        return [(i, j) for i, row in enumerate(self.neighbors) for j in row if i < j]

    @functools.cached_property
    def adjacency(self):
        """0/1 adjacency as a CSR matrix."""
        n = self.n_sites
        rows = np.repeat(np.arange(n), self.n_neighbors)
        cols = np.fromiter((j for r in self.neighbors for j in r), dtype=np.int64, count=rows.size)
        A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        A.sort_indices()
        return A

    def is_connected(self):
        ncomp, _ = connected_components(self.adjacency, directed=False)
        return ncomp == 1

    def permuted(self, perm):
        """Relabel sites so that new site ``k`` is old site ``perm[k]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        rows = [[int(inv[j]) for j in self.neighbors[p]] for p in perm]
        labels = tuple(self.labels[p] for p in perm) if self.labels else ()
        return SpatialGraph(coords=self.coords[perm], neighbors=tuple(rows), labels=labels)


def build_grid_graph(rows, cols, radius):
    """Unit-spaced ``rows x cols`` grid with a distance-``radius`` neighbour rule.

    Raises :class:`IsolatedSite` when the radius leaves a site without
    neighbours (e.g. a 1x1 grid, or ``radius < 1``).
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    yy, xx = np.mgrid[0:rows, 0:cols]
    coords = np.column_stack([xx.ravel(), yy.ravel()]).astype(float)
    return SpatialGraph.from_coords(coords, radius)


def build_lfdp_lattice():
    """The 160-site snail sampling lattice of the Luquillo Forest Dynamics Plot.

    40 major sites sit on an 8 x 5 grid with 60 m spacing.  Each of the 28
    squares formed by the major sites holds its four interior 20 m grid
    points (112 supplementary sites); the remaining 8 supplementary sites
    form a 20 m row just outside the southern short edge.  Neighbours are
    all sites within 60 m.

    Every internal major site ends up with 20 neighbours and every
    supplementary site in an internal square with 16; both counts are
    checked here.
    """
    s = LFDP_MAJOR_SPACING
    d = LFDP_SUPPLEMENTARY_SPACING
    major = [(c * s, r * s) for r in range(LFDP_MAJOR_ROWS) for c in range(LFDP_MAJOR_COLS)]
    supp = []
    for r in range(LFDP_MAJOR_ROWS - 1):
        for c in range(LFDP_MAJOR_COLS - 1):
            for dy in (d, 2 * d):
                for dx in (d, 2 * d):
                    supp.append((c * s + dx, r * s + dy))
    for c in range(LFDP_MAJOR_COLS - 1):
        for dx in (d, 2 * d):
            supp.append((c * s + dx, -d))
    coords = np.array(major + supp)
    labels = ("major",) * len(major) + ("supplementary",) * len(supp)
    graph = SpatialGraph.from_coords(coords, LFDP_RADIUS, labels=labels)

    counts = graph.n_neighbors
    x, y = coords[:, 0], coords[:, 1]
    xmax = (LFDP_MAJOR_COLS - 1) * s
    ymax = (LFDP_MAJOR_ROWS - 1) * s
    is_major = np.array([lab == "major" for lab in labels])
    internal_major = is_major & (x > 0) & (x < xmax) & (y > 0) & (y < ymax)
    internal_supp = ~is_major & (x > s) & (x < xmax - s) & (y > s) & (y < ymax - s)
    if graph.n_sites != 160 or not np.all(counts[internal_major] == 20) or not np.all(counts[internal_supp] == 16):
        raise AssertionError("LFDP lattice does not reproduce the expected neighbour counts")
    return graph


# --------------------------------------------------------------------------
# graph IO


def write_graph(graph, path):
    """Plain-text edge list: ``n``, then ``i j`` lines, then ``# coords``."""
    lines = [str(graph.n_sites)]
    lines += [f"{i} {j}" for i, j in graph.edges()]
    lines.append("# coords")
    lines += [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(graph.coords)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path):
    text = Path(path).read_text().splitlines()
    lines = [ln.strip() for ln in text if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    n = int(lines[0])
    edges, coords = [], np.zeros((n, 2))
    in_coords = False
    for ln in lines[1:]:
        if ln.startswith("#"):
            in_coords = ln.lstrip("#").strip().lower().startswith("coords")
            continue
        parts = ln.split()
        if in_coords:
            coords[int(parts[0])] = float(parts[1]), float(parts[2])
        else:
            edges.append((int(parts[0]), int(parts[1])))
    return SpatialGraph.from_edges(n, edges, coords=coords)


def load_graph(spec):
    """``"lfdp"`` gives the built-in lattice, anything else is a file path."""
    if str(spec).lower() == "lfdp":
        return build_lfdp_lattice()
    return read_graph(spec)


def color_classes(graph):
    """Greedy colouring; sites sharing a colour are pairwise non-adjacent."""
    n = graph.n_sites
    color = np.full(n, -1)
    order = np.argsort(-graph.n_neighbors, kind="stable")
    for i in order:
        taken = {color[j] for j in graph.neighbors[i]}
        c = 0
        while c in taken:
            c += 1
        color[i] = c
    return [np.flatnonzero(color == c) for c in range(color.max() + 1)]


# --------------------------------------------------------------------------
# factorisation


@dataclass(frozen=True)
class BandedCholesky:
    """Lower Cholesky factor of ``P Q P'`` stored in LAPACK lower-band form.

    ``perm[k]`` is the original index of permuted row ``k``.
    """

    perm: np.ndarray
    band: np.ndarray

    @property
    def n(self):
        return self.band.shape[1]

    def logdet(self):
        """log |Q|."""
        return 2.0 * np.sum(np.log(self.band[0]))

    def solve(self, b):
        """Return ``Q^{-1} b`` (``b`` may be a vector or an ``(n, k)`` array)."""
        b = np.asarray(b, dtype=float)
        x = sla.cho_solve_banded((self.band, True), b[self.perm], check_finite=False)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def solve_lt(self, z):
        """Return ``w`` with ``w ~ N(0, Q^{-1})`` when ``z`` is iid N(0, 1).

        Solves ``L' v = z`` and undoes the permutation.
        """
        z = np.asarray(z, dtype=float)
        vec = z.ndim == 1
        zz = z.reshape(self.n, -1)
        v, info = lapack.dtbtrs(self.band, zz, uplo="L", trans="T")
        if info != 0:
            raise NotPositiveDefinite(f"triangular solve failed (info={info})")
        w = np.empty_like(v)
        w[self.perm] = v
        return w.ravel() if vec else w

    def to_sparse(self):
        """``L`` as a CSR matrix in permuted order, ``L L' = P Q P'``."""
        n = self.n
        diags = [self.band[k, : n - k] for k in range(self.band.shape[0])]
        return sp.diags(diags, [-k for k in range(len(diags))], shape=(n, n), format="csr")

    def reconstruct(self):
        """``Q`` rebuilt from the factor, in the original site order."""
        L = self.to_sparse()
        PQP = (L @ L.T).tocsr()
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return PQP[inv][:, inv]

    def inverse_diagonal(self):
        """diag(Q^{-1}) by ``n`` banded solves."""
        n = self.n
        Xp = sla.cho_solve_banded((self.band, True), np.eye(n), check_finite=False)
        d = np.empty(n)
        d[self.perm] = np.diag(Xp)
        return d


class CarStructure:
    """Per-graph cache: fill-reducing ordering, band layout and spectrum.

    The spectral part diagonalises ``B = D^{-1/2} A D^{-1/2}`` once, so that
    for any ``rho``

        log|Q| = sum(log n_i) + sum(log(1 - rho * lam_k))
        sigma2 = (U**2 / n_i) @ (1 / (1 - rho * lam))

    at O(n^2) cost.  The MCMC uses this in its rho updates.
    """

    def __init__(self, graph):
        self.graph = graph
        A = graph.adjacency
        self.perm = reverse_cuthill_mckee(A, symmetric_mode=True).astype(np.int64)
        Ap = A[self.perm][:, self.perm].tocoo()
        self.bandwidth = int(np.max(np.abs(Ap.row - Ap.col))) if Ap.nnz else 0
        self._Ap = Ap
        self._nn_perm = graph.n_neighbors[self.perm].astype(float)
        self._spectrum = None

    def band_matrix(self, rho):
        """``P Q(rho) P'`` in lower-band storage."""
        n = self.graph.n_sites
        band = np.zeros((self.bandwidth + 1, n))
        band[0] = self._nn_perm
        lower = self._Ap.row > self._Ap.col
        r, c = self._Ap.row[lower], self._Ap.col[lower]
        band[r - c, c] = -rho
        return band

    def factor(self, rho):
        try:
            L = sla.cholesky_banded(self.band_matrix(rho), lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"Cholesky of Q(rho={rho}) failed: {exc}") from exc
        return BandedCholesky(perm=self.perm, band=L)

    @property
    def spectrum(self):
        if self._spectrum is None:
            nn = self.graph.n_neighbors.astype(float)
            s = 1.0 / np.sqrt(nn)
            B = (self.graph.adjacency.toarray() * s[:, None]) * s[None, :]
            lam, U = np.linalg.eigh(B)
            lam = np.clip(lam, -1.0, 1.0)
            self._spectrum = (lam, (U * U) / nn[:, None], float(np.sum(np.log(nn))))
        return self._spectrum

    def sigma2(self, rho):
        lam, W, _ = self.spectrum
        return W @ (1.0 / (1.0 - rho * lam))

    def logdet(self, rho):
        lam, _, base = self.spectrum
        return base + float(np.sum(np.log1p(-rho * lam)))


@functools.lru_cache(maxsize=64)
def car_structure(graph):
    """Cached :class:`CarStructure` for ``graph`` (graphs hash by identity)."""
    return CarStructure(graph)


@dataclass(frozen=True, eq=False)
class CarPrecision:
    """Q(rho) with its Cholesky factor and marginal variances diag(Q^{-1})."""

    graph: SpatialGraph
    rho: float
    Q: sp.csr_matrix
    chol: BandedCholesky
    sigma2: np.ndarray = field(repr=False)

    @property
    def n_sites(self):
        return self.graph.n_sites

    def logdet(self):
        return self.chol.logdet()


def _check_rho(rho):
    rho = float(rho)
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    return rho


def car_precision(graph, rho):
    """Assemble and factor ``Q = diag(n_i) - rho * A``."""
    rho = _check_rho(rho)
    Q = (sp.diags(graph.n_neighbors.astype(float)) - rho * graph.adjacency).tocsr()
    Q.sort_indices()
    chol = car_structure(graph).factor(rho)
    sigma2 = _frozen(chol.inverse_diagonal())
    if not np.all(np.isfinite(sigma2)) or np.any(sigma2 <= 0):
        raise NotPositiveDefinite("non-positive marginal variance")
    return CarPrecision(graph=graph, rho=rho, Q=Q, chol=chol, sigma2=sigma2)


class CopulaCorrelation:
    """Implicit unit-diagonal correlation ``Psi = S^{-1} Q^{-1} S^{-1}``.

    ``S = diag(sqrt(sigma2))``.  Nothing dense is formed unless
    :meth:`dense` is called.
    """

    def __init__(self, prec):
        self.prec = prec
        self.sigma = np.sqrt(prec.sigma2)

    @property
    def n(self):
        return self.sigma.size

    def apply(self, x):
        """``Psi @ x``."""
        x = np.asarray(x, dtype=float)
        s = self.sigma if x.ndim == 1 else self.sigma[:, None]
        return self.prec.chol.solve(x / s) / s

    def solve(self, x):
        """``Psi^{-1} @ x = S Q S x``."""
        x = np.asarray(x, dtype=float)
        s = self.sigma if x.ndim == 1 else self.sigma[:, None]
        return s * (self.prec.Q @ (s * x))

    def quad_form(self, eps):
        """``eps' Psi^{-1} eps``."""
        w = self.sigma * np.asarray(eps, dtype=float)
        return float(w @ (self.prec.Q @ w))

    def logdet(self):
        """log |Psi| = -log|Q| - sum(log sigma2)."""
        return -self.prec.logdet() - float(np.sum(np.log(self.prec.sigma2)))

    def dense(self):
        return self.apply(np.eye(self.n))


def copula_correlation(prec):
    return CopulaCorrelation(prec)
