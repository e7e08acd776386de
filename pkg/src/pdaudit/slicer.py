"""Forward slices rooted at labelled personal-data sources."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .graph import DepEdge, DepGraph
from .ir import Loc, Program, call_parts
from .registry import SinkRegistry, SourceLabel


@dataclass(frozen=True)
class Slice:
    root: SourceLabel
    nodes: frozenset[Loc]
    edges: frozenset[DepEdge]


@dataclass(frozen=True)
class SliceStats:
    node_count: int
    methods_touched: int
    sink_nodes: frozenset[Loc]


def forward_slice(g: DepGraph, label: SourceLabel) -> Slice:
    """Everything reachable from the label over any edge kind, with the
    induced edge set."""
    root = label.location
    if root not in g.nodes:
        raise ValueError(f"label location {root} is not a graph node")
    seen: set[Loc] = {root}
    work = deque([root])
    while work:
        n = work.popleft()
        for e in g.succs(n):
            if e.dst not in seen:
                seen.add(e.dst)
                work.append(e.dst)
    edges = frozenset(e for n in seen for e in g.succs(n) if e.dst in seen)
    return Slice(label, frozenset(seen), edges)


def slice_stats(s: Slice, p: Program, sinks: SinkRegistry) -> SliceStats:
    methods = {(n.cls, n.method) for n in s.nodes}
    sink_nodes: set[Loc] = set()
    for n in s.nodes:
        stmt = p.stmt_at(n)
        if stmt is None:
            continue
        parts = call_parts(stmt)
        if parts is not None and sinks.match(parts[0]) is not None:
            sink_nodes.add(n)
    return SliceStats(len(s.nodes), len(methods), frozenset(sink_nodes))
