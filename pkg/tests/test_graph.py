import numpy as np
import pytest
from hypothesis import given, settings

from conftest import DATA, MUTAG_DIR, graphs, make_graph, star, triangle
from topogcl.graph import (
    DatasetBundle,
    Graph,
    IngestionError,
    degree,
    load_tudataset,
    save_tudataset,
    validate,
)


def write_dataset(d, name, edges, indicator, graph_labels, node_labels=None):
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}_A.txt").write_text("".join(f"{u}, {v}\n" for u, v in edges))
    (d / f"{name}_graph_indicator.txt").write_text("".join(f"{i}\n" for i in indicator))
    (d / f"{name}_graph_labels.txt").write_text("".join(f"{y}\n" for y in graph_labels))
    if node_labels is not None:
        (d / f"{name}_node_labels.txt").write_text("".join(f"{x}\n" for x in node_labels))
    return d


def test_triangle_directory(tmp_path):
    d = write_dataset(
        tmp_path / "TRI", "TRI", [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)], [1, 1, 1], [1]
    )
    bundle = load_tudataset(d)
    (g,) = bundle.graphs
    assert g.num_nodes == 3
    assert g.edges == {(0, 1), (1, 2), (0, 2)}
    assert g.node_labels == (0, 0, 0)
    assert not bundle.has_node_labels
    assert bundle.class_mapping == {1: 0}


def test_class_labels_remapped_densely(tmp_path):
    d = write_dataset(tmp_path / "X", "X", [(1, 2), (3, 4)], [1, 1, 2, 2], [-1, 1], [0, 1, 2, 0])
    bundle = load_tudataset(d)
    assert bundle.class_mapping == {-1: 0, 1: 1}
    assert [g.graph_label for g in bundle] == [0, 1]
    assert bundle.label_vocab_size == 3
    assert bundle[1].node_features.tolist() == [[0, 0, 1], [1, 0, 0]]


def test_missing_file_is_named(tmp_path):
    d = write_dataset(tmp_path / "X", "X", [(1, 2)], [1, 1], [0])
    (d / "X_A.txt").unlink()
    with pytest.raises(IngestionError, match="_A.txt"):
        load_tudataset(d)


def test_empty_directory(tmp_path):
    with pytest.raises(IngestionError):
        load_tudataset(tmp_path)


def test_parse_error_has_line_number(tmp_path):
    d = write_dataset(tmp_path / "X", "X", [(1, 2)], [1, 1], [0])
    (d / "X_A.txt").write_text("1, 2\n2, x\n")
    with pytest.raises(IngestionError, match=r"X_A.txt:2"):
        load_tudataset(d)


def test_cross_graph_edge_is_consistency_error(tmp_path):
    d = write_dataset(tmp_path / "X", "X", [(1, 2), (2, 3)], [1, 1, 2], [0, 1])
    with pytest.raises(IngestionError, match=r"X_A.txt:2"):
        load_tudataset(d)


def test_round_trip(tmp_path, mutag):
    save_tudataset(mutag, tmp_path / "copy", "MUTAG")
    again = load_tudataset(tmp_path / "copy")
    assert again.graphs == mutag.graphs
    assert again.class_mapping == mutag.class_mapping


def test_mutag_statistics(mutag):
    assert len(mutag) == 188
    assert mutag.class_count == 2
    assert np.mean([g.num_nodes for g in mutag]) == pytest.approx(17.93, abs=0.01)
    for g in mutag:
        assert validate(g) == []
        assert sum(degree(g, v) for v in range(g.num_nodes)) == 2 * g.num_edges


def test_loading_is_deterministic(mutag):
    assert load_tudataset(MUTAG_DIR).graphs == mutag.graphs


def test_proteins_statistics():
    if not (DATA / "PROTEINS").exists():
        pytest.skip("PROTEINS data not present")
    bundle = load_tudataset(DATA / "PROTEINS")
    assert len(bundle) == 1113
    assert np.mean([g.num_nodes for g in bundle]) == pytest.approx(39.06, abs=0.01)


def test_validate_reports_violations():
    assert validate(triangle()) == []
    loop = Graph(3, {(2, 2)}, [0, 0, 0])
    assert any("self-loop" in p for p in validate(loop))
    out = Graph(3, {(0, 9)}, [0, 0, 0])
    assert any("endpoint 9" in p for p in validate(out))
    both = Graph(3, {(1, 1), (0, 9)}, [0, 0, 0])
    assert len(validate(both)) == 2


def test_degree():
    assert [degree(triangle(), v) for v in range(3)] == [2, 2, 2]
    assert degree(make_graph(1, []), 0) == 0
    assert degree(star(4), 0) == 4
    with pytest.raises(IndexError):
        degree(triangle(), 3)


def test_edges_are_unordered_and_deduplicated():
    g = Graph(2, [(0, 1), (1, 0)], [0, 0])
    assert g.num_edges == 1


@given(graphs())
@settings(max_examples=60, deadline=None)
def test_permute_preserves_degree_sequence(g):
    perm = np.random.default_rng(g.num_nodes).permutation(g.num_nodes)
    h = g.permute(perm)
    assert validate(h) == []
    assert sorted(degree(g, v) for v in range(g.num_nodes)) == sorted(degree(h, v) for v in range(h.num_nodes))
    for i, p in enumerate(perm):
        assert h.node_labels[p] == g.node_labels[i]


def test_bundle_labels():
    b = DatasetBundle((triangle().replace(graph_label=1),), 1, 2)
    assert b.labels.tolist() == [1]
