"""Undirected simple graphs: CSR storage, edge-list I/O, generators, and the
largest-eigenvalue solver used throughout the package."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_EIG_MAX_N = 512
EIG_TOL = 1e-10
EIG_MAX_ITER = 100_000

_NODES_DIRECTIVE = re.compile(r"#\s*nodes\s*[:=]\s*(\d+)\s*$")


class EdgeListError(ValueError):
    """Malformed edge-list input. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class EigenConvergenceError(RuntimeError):
    """The iterative eigensolver hit its iteration cap.

    The best available estimate is attached as ``best`` (an EigenReport whose
    residual exceeds the requested tolerance).
    """

    def __init__(self, message: str, best: "EigenReport | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph in CSR form.

    Both orientations of every edge are stored; column indices within a row
    are strictly increasing. Build instances with :meth:`from_edges`,
    :func:`load_edge_list` or :func:`generate` rather than by hand.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        if indptr.shape != (self.n + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
            raise ValueError("inconsistent CSR arrays")
        degrees = np.diff(indptr)
        for arr in (indptr, indices, degrees):
            arr.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "degrees", degrees)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        """Build from unordered pairs; duplicates collapse, self-loops raise."""
        pairs = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            pairs.add((min(i, j), max(i, j)))
        if pairs:
            e = np.array(sorted(pairs), dtype=np.int64)
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(n, np.cumsum(indptr), cols)

    @property
    def m(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with i < j, sorted lexicographically."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def adjacency(self) -> np.ndarray:
        """Dense float adjacency matrix."""
        a = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), self.degrees)
        a[rows, self.indices] = 1.0
        return a

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        ncomp = sp.csgraph.connected_components(self.to_scipy(), directed=False)[0]
        return ncomp == 1

    def to_edge_list(self) -> str:
        """Canonical text form; ``load_edge_list`` of the output is this graph.

        The ``# nodes: N`` header is written only when the highest node id
        is isolated, since the node count is otherwise implied by the edges.
        """
        edges = self.edges()
        implied = int(edges.max()) + 1 if edges.size else 0
        lines = [] if implied == self.n else [f"# nodes: {self.n}"]
        lines.extend(f"{i} {j}" for i, j in edges)
        return "".join(line + "\n" for line in lines)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.n, self.indices.tobytes(), self.indptr.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def load_edge_list(source: Union[str, bytes, TextIO, io.BufferedIOBase]) -> Graph:
    """Parse whitespace-separated ``i j`` lines into a :class:`Graph`.

    Lines starting with ``#`` are comments. The comment ``# nodes: N`` (as
    written by :meth:`Graph.to_edge_list`) fixes the node count so trailing
    isolated nodes survive a round trip; otherwise ``n = 1 + max id``.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")

    edges = []
    declared_n = None
    max_id = -1
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _NODES_DIRECTIVE.match(line)
            if match:
                declared_n = int(match.group(1))
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise EdgeListError(f"expected 2 node ids, got {len(tokens)} tokens", lineno)
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise EdgeListError(f"non-integer node id in {line!r}", lineno) from None
        if i < 0 or j < 0:
            raise EdgeListError("negative node id", lineno)
        if i == j:
            raise EdgeListError(f"self-loop at node {i}", lineno)
        edges.append((i, j))
        max_id = max(max_id, i, j)

    n = max_id + 1
    if declared_n is not None:
        if declared_n < n:
            raise EdgeListError(f"declared {declared_n} nodes but saw id {max_id}", 1)
        n = declared_n
    return Graph.from_edges(n, edges)


def generate(kind: str, n: int, seed: int = 0, *, p: float = 0.1, m0: int = 2) -> Graph:
    """Synthetic graph of the given ``kind``.

    ``kind`` is one of complete, star, cycle, path, erdos_renyi (uses ``p``)
    or preferential_attachment (Barabasi-Albert with ``m0`` edges per new
    node). The random kinds depend only on ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "star":
        edges = [(0, j) for j in range(1, n)]
    elif kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        if n < 3:
            # C1 and C2 would need a self-loop or a multi-edge
            edges = [(i, i + 1) for i in range(n - 1)]
        else:
            edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "erdos_renyi":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"edge probability must lie in [0, 1], got {p}")
        edges = nx.gnp_random_graph(n, p, seed=seed).edges()
    elif kind == "preferential_attachment":
        if m0 < 1:
            raise ValueError(f"m0 must be >= 1, got {m0}")
        if m0 >= n:
            raise ValueError(f"preferential attachment needs m0 < n (m0={m0}, n={n})")
        edges = nx.barabasi_albert_graph(n, m0, seed=seed).edges()
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    return Graph.from_edges(n, edges)


@dataclass(frozen=True)
class EigenReport:
    lambda1: float
    eigvec: np.ndarray
    iterations: int
    residual: float


def _orient(v: np.ndarray) -> np.ndarray:
    # Perron vectors come back with arbitrary sign; make the mass positive
    return -v if v.sum() < 0 else v


def largest_eigenvalue(M, tol: float = EIG_TOL, *, method: str = "auto",
                       max_iter: int = EIG_MAX_ITER) -> EigenReport:
    """Algebraically largest eigenpair of a symmetric matrix or operator.

    ``method="dense"`` runs LAPACK's symmetric tridiagonal solver and is the
    default up to ``DENSE_EIG_MAX_N`` rows; ``"lanczos"`` uses implicitly
    restarted Lanczos (ARPACK) and also accepts a
    :class:`scipy.sparse.linalg.LinearOperator`. The eigenvector is unit norm
    and oriented to have nonnegative sum, so for the adjacency matrix of a
    connected graph it is the entrywise positive Perron vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = M.shape[0]
    if n == 0:
        raise ValueError("empty matrix has no eigenvalues")
    if method == "auto":
        dense_ok = n <= DENSE_EIG_MAX_N and not isinstance(M, spla.LinearOperator)
        method = "dense" if dense_ok else "lanczos"

    if method == "dense":
        dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
        vals, vecs = np.linalg.eigh(dense)
        lam, vec, iters = float(vals[-1]), _orient(vecs[:, -1]), 1
    elif method == "lanczos":
        if n < 3:
            return largest_eigenvalue(_materialize(M), tol, method="dense")
        # shift so the wanted eigenvalue is also the largest in magnitude
        op = spla.aslinearoperator(M)
        shift = _gershgorin_bound(M)
        shifted = spla.LinearOperator((n, n), matvec=lambda x: op.matvec(x) + shift * x,
                                      dtype=float)
        v0 = np.ones(n) / np.sqrt(n)
        try:
            vals, vecs = spla.eigsh(shifted, k=1, which="LA", tol=tol * 1e-2,
                                    maxiter=max_iter, v0=v0)
        except spla.ArpackNoConvergence as exc:
            best = None
            if len(exc.eigenvalues):
                v = _orient(exc.eigenvectors[:, 0])
                lam = float(exc.eigenvalues[0]) - shift
                best = EigenReport(lam, v, max_iter, _residual(op, lam, v))
            raise EigenConvergenceError(
                f"Lanczos did not converge within {max_iter} iterations", best) from None
        lam, vec, iters = float(vals[0]) - shift, _orient(vecs[:, 0]), max_iter
        vec = vec / np.linalg.norm(vec)
    else:
        raise ValueError(f"unknown method {method!r}")

    res = _residual(spla.aslinearoperator(M), lam, vec)
    report = EigenReport(lam, vec, iters, res)
    if res > tol:
        raise EigenConvergenceError(f"residual {res:.3e} exceeds tolerance {tol:.1e}", report)
    return report


def _residual(op, lam: float, v: np.ndarray) -> float:
    return float(np.linalg.norm(op.matvec(v) - lam * v))


def _gershgorin_bound(M) -> float:
    if isinstance(M, spla.LinearOperator):
        # onenormest may undershoot slightly; the margin keeps the shift safe
        return 1.1 * float(spla.onenormest(M))
    if sp.issparse(M):
        return float(abs(M).sum(axis=1).max())
    return float(np.abs(np.asarray(M)).sum(axis=1).max())


def _materialize(M) -> np.ndarray:
    if isinstance(M, spla.LinearOperator):
        return M @ np.eye(M.shape[0])
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
