import io

import networkx as nx
import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from sais_awareness.graph import (EdgeListError, EigenConvergenceError, Graph, generate,
                                  largest_eigenvalue, load_edge_list)


@st.composite
def graphs(draw, max_n=30):
    n = draw(st.integers(1, max_n))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1])
    edges = draw(st.lists(pairs, max_size=3 * n))
    return Graph.from_edges(n, edges)


# -- ingestion ----------------------------------------------------------------

def test_load_path():
    g = load_edge_list("0 1\n1 2")
    assert (g.n, g.m) == (3, 2)
    assert g.degrees.tolist() == [1, 2, 1]


def test_duplicate_collapses():
    g = load_edge_list("0 1\n1 0\n")
    assert (g.n, g.m) == (2, 1)


def test_self_loop_reports_line():
    with pytest.raises(EdgeListError, match="line 1") as exc:
        load_edge_list("0 0")
    assert exc.value.lineno == 1


def test_non_integer_reports_line():
    with pytest.raises(EdgeListError) as exc:
        load_edge_list("# header\n0 1\n1 x\n")
    assert exc.value.lineno == 3


@pytest.mark.parametrize("text", ["0 1 2\n", "3\n", "-1 2\n"])
def test_malformed_lines(text):
    with pytest.raises(EdgeListError):
        load_edge_list(text)


def test_comments_blank_lines_and_streams():
    text = "# comment\n\n0 1\n  # indented comment\n2 1\n"
    assert load_edge_list(text) == load_edge_list(io.StringIO(text)) \
        == load_edge_list(text.encode()) == load_edge_list(io.BytesIO(text.encode()))


def test_nodes_directive_keeps_isolated_tail():
    g = Graph.from_edges(5, [(0, 1)])
    assert g.to_edge_list() == "# nodes: 5\n0 1\n"
    assert load_edge_list(g.to_edge_list()) == g


def test_nodes_directive_too_small():
    with pytest.raises(EdgeListError):
        load_edge_list("# nodes: 2\n0 4\n")


def test_empty_input_is_empty_graph():
    g = load_edge_list("")
    assert (g.n, g.m) == (0, 0)


@given(graphs())
def test_export_round_trip(g):
    text = g.to_edge_list()
    assert load_edge_list(text) == g
    assert load_edge_list(text).to_edge_list() == text


# -- structure invariants -----------------------------------------------------

@given(graphs())
def test_csr_invariants(g):
    a = g.adjacency()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert g.degrees.sum() == 2 * g.m
    for i in range(g.n):
        assert np.all(np.diff(g.neighbors(i)) > 0)


def test_graph_is_immutable():
    g = generate("cycle", 4)
    with pytest.raises(ValueError):
        g.indices[0] = 3
    with pytest.raises(AttributeError):
        g.n = 7


def test_from_edges_rejects_bad_edges():
    with pytest.raises(ValueError):
        Graph.from_edges(3, [(1, 1)])
    with pytest.raises(ValueError):
        Graph.from_edges(3, [(0, 3)])


def test_hash_and_equality():
    assert generate("path", 4) == load_edge_list("2 3\n0 1\n1 2\n")
    assert len({generate("path", 4), load_edge_list("0 1\n1 2\n2 3")}) == 1
    assert generate("path", 4) != generate("cycle", 4)


# -- generators ---------------------------------------------------------------

def test_star():
    g = generate("star", 5)
    assert g.degrees.tolist() == [4, 1, 1, 1, 1]


def test_complete():
    g = generate("complete", 3)
    assert g.m == 3


@pytest.mark.parametrize("kind,n,m", [("cycle", 5, 5), ("path", 5, 4), ("cycle", 2, 1),
                                      ("complete", 1, 0), ("star", 1, 0)])
def test_deterministic_kinds(kind, n, m):
    assert generate(kind, n).m == m


def test_erdos_renyi_determinism():
    a = generate("erdos_renyi", 20, 7, p=0.5)
    b = generate("erdos_renyi", 20, 7, p=0.5)
    assert np.array_equal(a.edges(), b.edges())
    assert not np.array_equal(a.edges(), generate("erdos_renyi", 20, 8, p=0.5).edges())


def test_preferential_attachment():
    g = generate("preferential_attachment", 50, 3, m0=2)
    assert g.m == 2 * (50 - 2)
    assert g == generate("preferential_attachment", 50, 3, m0=2)


@pytest.mark.parametrize("kwargs", [{"kind": "erdos_renyi", "p": 1.5},
                                    {"kind": "erdos_renyi", "p": -0.1},
                                    {"kind": "preferential_attachment", "m0": 0},
                                    {"kind": "preferential_attachment", "m0": 10},
                                    {"kind": "hypercube"}])
def test_generator_errors(kwargs):
    with pytest.raises(ValueError):
        generate(n=10, **kwargs)


def test_generate_needs_a_node():
    with pytest.raises(ValueError):
        generate("path", 0)


def test_is_connected():
    assert generate("path", 6).is_connected()
    assert not Graph.from_edges(3, [(0, 1)]).is_connected()


# -- eigenvalues --------------------------------------------------------------

@pytest.mark.parametrize("kind,n,lam", [("complete", 2, 1.0), ("star", 5, 2.0), ("cycle", 4, 2.0)])
def test_known_spectra(kind, n, lam):
    report = largest_eigenvalue(generate(kind, n).adjacency())
    assert report.lambda1 == pytest.approx(lam, abs=1e-12)


def test_star_matches_dense_oracle():
    a = generate("star", 5).adjacency()
    assert largest_eigenvalue(a).lambda1 == pytest.approx(np.linalg.eigvalsh(a).max(), abs=1e-12)
    assert largest_eigenvalue(a).lambda1 == pytest.approx(np.sqrt(4), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(graphs(max_n=50))
def test_eigen_report_contract(g):
    report = largest_eigenvalue(g.adjacency(), 1e-10)
    a = g.adjacency()
    assert np.linalg.norm(a @ report.eigvec - report.lambda1 * report.eigvec) <= report.residual + 1e-15
    assert report.residual <= 1e-10
    assert np.linalg.norm(report.eigvec) == pytest.approx(1.0, abs=1e-12)
    # independent full-spectrum oracle
    assert report.lambda1 == pytest.approx(np.linalg.eigvals(a).real.max(), abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(graphs(max_n=40))
def test_classical_bounds(g):
    lam = largest_eigenvalue(g.adjacency()).lambda1
    d = g.degrees
    lower = max(d.mean(), np.sqrt(d.max()))
    assert lower - 1e-9 <= lam <= d.max() + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_perron_vector_positive(seed):
    g = generate("erdos_renyi", 40, seed, p=0.2)
    if not g.is_connected():
        pytest.skip("disconnected draw")
    v = largest_eigenvalue(g.adjacency()).eigvec
    assert np.all(v > 0)


@pytest.mark.parametrize("seed", range(3))
def test_lanczos_agrees_with_dense(seed):
    g = generate("preferential_attachment", 300, seed, m0=3)
    dense = largest_eigenvalue(g.adjacency(), method="dense")
    lanczos = largest_eigenvalue(g.to_scipy(), method="lanczos")
    assert lanczos.lambda1 == pytest.approx(dense.lambda1, abs=1e-9)
    assert abs(lanczos.eigvec @ dense.eigvec) == pytest.approx(1.0, abs=1e-8)
    assert np.all(lanczos.eigvec > 0)


def test_lanczos_on_operator_and_negative_spectrum():
    g = generate("cycle", 600)
    m = (g.to_scipy() - 5.0 * sp.identity(600)).tocsr()
    report = largest_eigenvalue(spla.aslinearoperator(m), method="lanczos")
    assert report.lambda1 == pytest.approx(-3.0, abs=1e-9)


def test_large_graph_uses_lanczos():
    g = generate("preferential_attachment", 800, 1, m0=2)
    ref = nx.adjacency_spectrum(nx.Graph(g.edges().tolist())).real.max()
    assert largest_eigenvalue(g.to_scipy()).lambda1 == pytest.approx(ref, abs=1e-8)


def test_iteration_cap_carries_best():
    g = generate("erdos_renyi", 400, 0, p=0.05)
    with pytest.raises(EigenConvergenceError) as exc:
        largest_eigenvalue(g.to_scipy(), 1e-14, method="lanczos", max_iter=2)
    best = exc.value.best
    assert best is None or np.isfinite(best.lambda1)


def test_eigen_arguments():
    with pytest.raises(ValueError):
        largest_eigenvalue(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        largest_eigenvalue(np.zeros((0, 0)))
    with pytest.raises(ValueError):
        largest_eigenvalue(np.eye(2), method="qr")
