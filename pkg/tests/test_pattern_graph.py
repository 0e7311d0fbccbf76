import pytest

from errors import EmptyInput
from pattern_graph import (
    MISSING_EDGE,
    NOT_END,
    NOT_START,
    PatternGraph,
    SymbolSequence,
    check_sequence,
    export_dot,
    learn_pattern_graph,
    parse_phrases,
)


@pytest.fixture
def repeated_ten():
    return learn_pattern_graph([[10, 10, 7]])


def test_learn_repeated_symbol(repeated_ten):
    assert repeated_ten.edges == {(10, 7, "T"): 1}
    assert repeated_ten.nodes[10].start and not repeated_ten.nodes[10].end
    assert repeated_ten.nodes[7].end and not repeated_ten.nodes[7].start


def test_check_accepts_longer_run(repeated_ten):
    assert check_sequence(repeated_ten, [10, 10, 10, 7]).accepted


def test_check_rejects_single_occurrence(repeated_ten):
    result = check_sequence(repeated_ten, [10, 7])
    assert not result.accepted
    assert (result.reason, result.word, result.run_index) == (MISSING_EDGE, "F", 0)
    assert result.describe() == "rejected: MissingEdge(F) at run 0"


def test_check_rejects_wrong_start_and_end(repeated_ten):
    assert check_sequence(repeated_ten, [7]).reason == NOT_START
    assert check_sequence(repeated_ten, [3, 7]).reason == NOT_START
    result = check_sequence(repeated_ten, [10, 10])
    assert (result.reason, result.run_index) == (NOT_END, 0)


def test_single_symbol_graph():
    graph = learn_pattern_graph([["a"]])
    assert not graph.edges
    assert graph.nodes["a"].start and graph.nodes["a"].end
    assert check_sequence(graph, ["a", "a", "a"]).accepted


def test_alternating_sequence_counts():
    graph = learn_pattern_graph([["a", "b", "a", "b"]])
    assert graph.edges == {("a", "b", "F"): 2, ("b", "a", "F"): 1}
    assert graph.nodes["a"].start and graph.nodes["b"].end


def test_learning_ignores_sequence_order():
    sequences = [[1, 1, 2, 3], [2, 2, 3], ["x", 1, 1]]
    assert learn_pattern_graph(sequences).to_json() == learn_pattern_graph(sequences[::-1]).to_json()


def test_learned_graph_accepts_its_training_data(rng):
    sequences = [list(rng.integers(0, 4, size=rng.integers(1, 12))) for _ in range(25)]
    sequences = [[int(s) for s in seq] for seq in sequences]
    graph = learn_pattern_graph(sequences)
    for seq in sequences:
        assert check_sequence(graph, seq).accepted

    boundaries = sum(len(SymbolSequence(seq).runs()) - 1 for seq in sequences)
    assert sum(graph.edges.values()) == boundaries


def test_dot_export(repeated_ten):
    source = export_dot(repeated_ten)
    assert source.startswith("digraph pattern_graph {")
    assert '10 -> 7 [label="T, 1"]' in source
    assert "7 [shape=doublecircle]" in source
    assert "10 [shape=circle]" in source
    assert "-> 10" in source
    assert export_dot(repeated_ten) == source


def test_dot_single_node():
    source = export_dot(learn_pattern_graph([["a"]]))
    assert "a [shape=doublecircle]" in source
    assert "start_0 -> a" in source
    assert source.count("->") == 1


def test_json_round_trip_keeps_symbol_types():
    graph = learn_pattern_graph([[1, "x", "x", 2], [2]])
    restored = PatternGraph.from_json(graph.to_json())
    assert restored.edges == graph.edges
    assert set(restored.nodes) == {1, "x", 2}
    assert restored.nodes[2].start and restored.nodes[2].end


def test_parse_phrases():
    phrases = parse_phrases("# phrases\n10 10 7\n\nintro 3 3\n")
    assert [p.symbols for p in phrases] == [[10, 10, 7], ["intro", 3, 3]]


def test_empty_inputs():
    with pytest.raises(EmptyInput):
        SymbolSequence([])
    with pytest.raises(EmptyInput):
        learn_pattern_graph([])
    with pytest.raises(EmptyInput):
        check_sequence(learn_pattern_graph([[1]]), [])
