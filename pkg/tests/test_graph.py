import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dufs.graph import (
    DirectedGraph,
    GenerationError,
    GraphError,
    ParseError,
    degree_threshold_top_fraction,
    from_edge_pairs,
    generate_powerlaw_digraph,
    ground_truth,
    largest_scc,
    load_attributes,
    load_snap_edgelist,
    save_attributes,
    save_edgelist,
    save_remap,
    top_degree_nodes,
    truncated_powerlaw_pmf,
)

from oracles import brute_force_sccs, reachable


def _write(tmp_path, text, name="g.txt"):
    p = tmp_path / name
    p.write_bytes(text.encode())
    return p


# --- loading ---------------------------------------------------------------


def test_load_small_directed(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "0 1\n1 2\n"))
    assert g.node_count == 3
    assert g.edge_count == 2
    assert list(g.degree) == [1, 2, 1]


def test_duplicates_collapse_and_comments_skip(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "# comment\n0 1\n0 1\n"))
    assert g.edge_count == 1


def test_crlf_and_tabs(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "0\t1\r\n1\t0\r\n"))
    assert g.edge_count == 2 and g.is_symmetric()


def test_remap_roundtrip(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "10 42\n42 7\n7 10\n10 7\n"))
    assert g.node_count == 3
    # oracle: map every internal edge back through the table and compare with the file
    back = {(g.original_ids[u], g.original_ids[v]) for u, v in g.edges}
    assert back == {(10, 42), (42, 7), (7, 10), (10, 7)}
    save_remap(g, tmp_path / "remap.tsv")
    rows = [line.split("\t") for line in (tmp_path / "remap.tsv").read_text().splitlines()[1:]]
    assert {int(a): int(b) for a, b in rows} == dict(enumerate(g.original_ids))


def test_save_edgelist_reloads_identically(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "5 9\n9 3\n3 5\n"))
    save_edgelist(g, tmp_path / "out.tsv")
    h = load_snap_edgelist(tmp_path / "out.tsv")
    assert h.digest() == g.digest()


def test_symmetrize(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "0 1\n1 2\n"), symmetrize=True)
    assert g.is_symmetric() and g.edge_count == 4


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ParseError) as info:
        load_snap_edgelist(_write(tmp_path, "0 1\n1 x\n"))
    assert info.value.lineno == 2


def test_empty_file_rejected(tmp_path):
    with pytest.raises(GraphError):
        load_snap_edgelist(_write(tmp_path, "# nothing\n"))


def test_isolated_node_rejected():
    with pytest.raises(GraphError):
        DirectedGraph(3, [(0, 1)])


def test_self_loop_counts_once():
    g = DirectedGraph(2, [(0, 0), (0, 1)])
    assert g.degree[0] == 2 and g.degree[1] == 1
    assert g.out_degree[0] == 2


def test_attributes_roundtrip(tmp_path):
    g = load_snap_edgelist(_write(tmp_path, "1 2\n2 3\n3 1\n"))
    attr = _write(tmp_path, "1 a,b\n3 c\n", "attr.txt")
    g = load_attributes(g, attr)
    assert g.node_labels[0] == {"a", "b"} and g.node_labels[1] == set() and g.node_labels[2] == {"c"}
    save_attributes(g, tmp_path / "a2.txt")
    h = load_attributes(load_snap_edgelist(tmp_path / "g.txt"), tmp_path / "a2.txt")
    assert h.node_labels == g.node_labels


# --- largest SCC --------------------------------------------------------------


def test_scc_cycle_with_pendant():
    g = from_edge_pairs([(0, 1), (1, 2), (2, 0), (2, 3)])
    h = largest_scc(g)
    assert sorted(h.original_ids) == [0, 1, 2]
    assert h.edge_count == 3


def test_scc_dag_tie_break():
    g = from_edge_pairs([(4, 3), (3, 2), (2, 1), (1, 0)])
    h = largest_scc(g)
    assert h.original_ids == (0,)


def test_scc_matches_reachability_oracle():
    rng = random.Random(5)
    pairs = [(u, v) for u in range(50) for v in range(50) if u != v and rng.random() < 0.1]
    g = from_edge_pairs(pairs)
    comps = brute_force_sccs(g.node_count, g.edges)
    best = max(comps, key=lambda c: (len(c), -min(g.original_ids[v] for v in c)))
    h = largest_scc(g)
    assert set(h.original_ids) == {g.original_ids[v] for v in best}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), min_size=1, max_size=40))
def test_scc_output_strongly_connected(pairs):
    g = from_edge_pairs(pairs)
    h = largest_scc(g)
    comps = brute_force_sccs(g.node_count, g.edges)
    assert h.node_count == max(len(c) for c in comps)
    fwd = h.out_adj
    bwd = h.in_adj
    for v in range(h.node_count):
        assert len(reachable(fwd, v)) == h.node_count
        assert len(reachable(bwd, v)) == h.node_count


# --- ground truth -------------------------------------------------------------


def test_star_degree_mass(star):
    gt = ground_truth(star, "degree")
    assert gt.label_mass == {1: 0.8, 4: 0.2}
    assert gt.mean_undirected_degree == pytest.approx(8 / 5)


def test_constant_out_degree():
    pairs = [(i, (i + 1) % 6) for i in range(6)] + [(i, (i + 2) % 6) for i in range(6)]
    gt = ground_truth(from_edge_pairs(pairs), "out-degree")
    assert gt.label_mass == {2: 1.0}


def test_ground_truth_matches_second_scan():
    g = generate_powerlaw_digraph(100, 2.0, 20, seed=3)
    gt = ground_truth(g, "joint-degree")
    # independent enumeration from the raw edge list
    outd = Counter(u for u, _ in g.edges)
    ind = Counter(v for _, v in g.edges)
    hist = Counter((ind[v], outd[v]) for v in range(g.node_count))
    assert gt.joint_mass == {k: c / g.node_count for k, c in hist.items()}
    assert gt.label_mass == gt.joint_mass
    for kind in ("out-degree", "in-degree", "degree", "joint-degree"):
        assert sum(ground_truth(g, kind).label_mass.values()) == pytest.approx(1.0, abs=1e-12)
    assert gt.mean_undirected_degree == sum(g.degree) / g.node_count


def test_attribute_truth_can_exceed_one():
    g = from_edge_pairs([(0, 1), (1, 0)]).with_labels([{"a", "b"}, {"a"}])
    gt = ground_truth(g, "attribute")
    assert gt.label_mass == {"a": 1.0, "b": 0.5}


def test_attribute_truth_needs_labels(star):
    with pytest.raises(GraphError):
        ground_truth(star, "attribute")


# --- generator ----------------------------------------------------------------


def test_generator_degenerate_cap():
    g = generate_powerlaw_digraph(10, 1.0, 1, seed=0)
    assert max(g.out_degree) <= 1


def test_generator_matches_target_law():
    g = generate_powerlaw_digraph(1000, 2.0, 100, seed=1)
    pmf = truncated_powerlaw_pmf(2.0, 100)
    # oracle: truncated zeta mass computed directly
    d = np.arange(1, 101)
    target = d ** -2.0 / np.sum(d ** -2.0)
    assert np.allclose(pmf, target)
    emp = np.zeros(101)
    for k in g.out_degree:
        if k <= 100:
            emp[k] += 1
    emp /= g.node_count
    ks = np.max(np.abs(np.cumsum(emp[1:]) - np.cumsum(target)))
    assert ks < 0.05


def test_generator_deterministic():
    a = generate_powerlaw_digraph(300, 2.2, 50, seed=9)
    b = generate_powerlaw_digraph(300, 2.2, 50, seed=9)
    assert a.edges == b.edges
    assert a.edges != generate_powerlaw_digraph(300, 2.2, 50, seed=10).edges


def test_generator_graph_is_simple():
    g = generate_powerlaw_digraph(500, 2.0, 60, seed=4)
    assert all(u != v for u, v in g.edges)
    assert min(g.degree) >= 1


def test_generator_infeasible():
    # two nodes admit at most two simple edges; a heavy-tailed draw needs more
    with pytest.raises(GenerationError):
        generate_powerlaw_digraph(2, 1.0, 50, seed=0)


@pytest.mark.parametrize("bad", [dict(n=1, beta=2.0, max_degree=5), dict(n=10, beta=0.5, max_degree=5),
                                 dict(n=10, beta=2.0, max_degree=0)])
def test_generator_preconditions(bad):
    with pytest.raises(GraphError):
        generate_powerlaw_digraph(seed=0, **bad)


# --- degree threshold ---------------------------------------------------------


def test_threshold_single_hub():
    # degrees [1 x 9, 9]: a star with nine leaves
    g = from_edge_pairs([(0, k) for k in range(1, 10)])
    assert degree_threshold_top_fraction(g, 0.1) == 9


def test_threshold_all_equal():
    g = from_edge_pairs([(i, (i + 1) % 10) for i in range(10)])
    t = degree_threshold_top_fraction(g, 0.1)
    assert t == 2
    assert len(top_degree_nodes(g, t)) == 10


def test_threshold_matches_sort_oracle():
    g = generate_powerlaw_digraph(200, 2.0, 40, seed=2)
    degs = sorted(g.degree, reverse=True)
    t = degree_threshold_top_fraction(g, 0.1)
    # oracle: scan candidate thresholds in increasing order
    cands = sorted(set(degs))
    expect = next((c for c in cands if sum(d >= c for d in degs) <= 0.1 * len(degs)), max(degs))
    assert t == expect
