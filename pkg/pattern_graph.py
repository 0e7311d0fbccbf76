"""
Pattern graphs: labelled directed multigraphs learned from symbol sequences.

A sequence is run-length encoded; each boundary between runs (a, length) ->
(b, ...) becomes an edge a -> b labelled F when the run of a has length 1
and T when a repeated two or more times. Edge labels carry occurrence counts.
"""

from __future__ import annotations

import itertools
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import graphviz

from errors import EmptyInput, MirvizError

logger = logging.getLogger(__name__)

Symbol = Union[int, str]
WORDS = ("F", "T")

NOT_START = "NotStart"
NOT_END = "NotEnd"
MISSING_EDGE = "MissingEdge"


def symbol_key(symbol: Symbol) -> Tuple[int, Symbol]:
    """Sort integers before text, each in natural order."""
    return (0, symbol) if isinstance(symbol, int) else (1, str(symbol))


# ----------------------------- Sequences -----------------------------

@dataclass
class SymbolSequence:
    symbols: List[Symbol]

    def __post_init__(self):
        self.symbols = list(self.symbols)
        if not self.symbols:
            raise EmptyInput("A symbol sequence must contain at least one symbol")

    def runs(self) -> List[Tuple[Symbol, int]]:
        return [(symbol, len(list(group))) for symbol, group in itertools.groupby(self.symbols)]


def _as_sequence(seq) -> SymbolSequence:
    return seq if isinstance(seq, SymbolSequence) else SymbolSequence(seq)


def _word(run_length: int) -> str:
    return "T" if run_length >= 2 else "F"


def parse_phrases(text: str) -> List[SymbolSequence]:
    """One whitespace-separated phrase per line; integer tokens become ints. Blank and '#' lines are skipped."""
    phrases = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        phrases.append(SymbolSequence([int(tok) if re.fullmatch(r"-?\d+", tok) else tok for tok in line.split()]))
    return phrases


# ----------------------------- Graph -----------------------------

@dataclass
class NodeFlags:
    start: bool = False
    end: bool = False


@dataclass
class PatternGraph:
    nodes: Dict[Symbol, NodeFlags] = field(default_factory=dict)
    edges: Counter = field(default_factory=Counter)

    def validate(self):
        for (src, dst, word), count in self.edges.items():
            if src not in self.nodes or dst not in self.nodes:
                raise MirvizError(f"Edge {src!r} -> {dst!r} references a missing node")
            if word not in WORDS:
                raise MirvizError(f"Unknown pattern word {word!r}")
            if count < 1:
                raise MirvizError(f"Edge {src!r} -> {dst!r} has count {count}")
        if not any(f.start for f in self.nodes.values()) or not any(f.end for f in self.nodes.values()):
            raise MirvizError("A pattern graph needs at least one start node and one end node")

    def sorted_nodes(self) -> List[Symbol]:
        return sorted(self.nodes, key=symbol_key)

    def sorted_edges(self) -> List[Tuple[Symbol, Symbol, str]]:
        return sorted(self.edges, key=lambda e: (symbol_key(e[0]), symbol_key(e[1]), e[2]))

    def to_dict(self) -> Dict:
        return {
            "nodes": [
                {"symbol": s, "start": self.nodes[s].start, "end": self.nodes[s].end} for s in self.sorted_nodes()
            ],
            "edges": [
                {"src": src, "dst": dst, "word": word, "count": self.edges[(src, dst, word)]}
                for src, dst, word in self.sorted_edges()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PatternGraph":
        doc = json.loads(text)
        graph = cls(
            nodes={n["symbol"]: NodeFlags(start=bool(n["start"]), end=bool(n["end"])) for n in doc["nodes"]},
            edges=Counter({(e["src"], e["dst"], e["word"]): int(e["count"]) for e in doc["edges"]}),
        )
        graph.validate()
        return graph


@dataclass
class ConformanceResult:
    accepted: bool
    run_index: Optional[int] = None
    reason: Optional[str] = None
    word: Optional[str] = None

    def describe(self) -> str:
        if self.accepted:
            return "accepted"
        reason = f"{self.reason}({self.word})" if self.word else self.reason
        return f"rejected: {reason} at run {self.run_index}"


# ----------------------------- Learning / checking -----------------------------

def learn_pattern_graph(sequences: Iterable) -> PatternGraph:
    """Accumulate run boundaries of every sequence into one graph."""
    sequences = [_as_sequence(s) for s in sequences]
    if not sequences:
        raise EmptyInput("learn_pattern_graph needs at least one sequence")

    graph = PatternGraph()
    for seq in sequences:
        runs = seq.runs()
        for symbol, _ in runs:
            graph.nodes.setdefault(symbol, NodeFlags())
        graph.nodes[runs[0][0]].start = True
        graph.nodes[runs[-1][0]].end = True
        for (a, length), (b, _) in zip(runs, runs[1:]):
            graph.edges[(a, b, _word(length))] += 1

    graph.validate()
    logger.info(f"Learned pattern graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges from {len(sequences)} sequence(s)")
    return graph


def check_sequence(graph: PatternGraph, seq) -> ConformanceResult:
    """Accept seq iff it starts on a start node, every run boundary has a matching edge and it ends on an end node."""
    runs = _as_sequence(seq).runs()
    first = graph.nodes.get(runs[0][0])
    if first is None or not first.start:
        return ConformanceResult(accepted=False, run_index=0, reason=NOT_START)
    for index, ((a, length), (b, _)) in enumerate(zip(runs, runs[1:])):
        word = _word(length)
        if (a, b, word) not in graph.edges:
            return ConformanceResult(accepted=False, run_index=index, reason=MISSING_EDGE, word=word)
    last = graph.nodes.get(runs[-1][0])
    if last is None or not last.end:
        return ConformanceResult(accepted=False, run_index=len(runs) - 1, reason=NOT_END)
    return ConformanceResult(accepted=True)


# ----------------------------- DOT -----------------------------

def export_dot(graph: PatternGraph) -> str:
    """DOT digraph: start nodes get an unlabelled arrow from an invisible node, end nodes are double circles."""
    dot = graphviz.Digraph("pattern_graph", graph_attr={"rankdir": "LR"})
    for index, symbol in enumerate(graph.sorted_nodes()):
        flags = graph.nodes[symbol]
        dot.node(str(symbol), shape="doublecircle" if flags.end else "circle")
        if flags.start:
            source = f"start_{index}"
            dot.node(source, label="", shape="point", style="invis")
            dot.edge(source, str(symbol))
    for src, dst, word in graph.sorted_edges():
        dot.edge(str(src), str(dst), label=f"{word}, {graph.edges[(src, dst, word)]}")
    return dot.source
