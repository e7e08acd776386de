"""Risk scoring, the deterministic audit report, DOT rendering, and the
data-safety-section draft.

Risk formula (multipliers overridable via ReportConfig):

    risk = category_weight x status_mult x sink_mult

    status_mult   Raw 2.0, Pseudonymized 1.0
    sink_mult     Analytics 3.0, ThirdParty 3.0, Network 2.0,
                  Storage 1.5, Log 1.0, no egress 0.5

The report is JSON with a fixed top-level key order (version, input_digest,
assumptions, findings, slices, data_safety, statements) and byte-identical
output for identical inputs; the human-readable summary is rendered from
the JSON dict, never computed independently.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import __version__
from .dpv import ComplianceStatement, DpvMap, map_flow
from .ir import Loc, Program, call_parts, print_stmt
from .registry import SanitizerRegistry, SinkKind, SinkRegistry, SourceLabel
from .slicer import Slice, slice_stats
from .taint import Flow, SinkRef, Status, TaintResult


class InconsistentInputsError(Exception):
    pass


class FindingKind(Enum):
    RAW_FLOW = "RawFlow"
    PSEUDONYMIZED_FLOW = "PseudonymizedFlow"
    COLLECTED_NO_EGRESS = "CollectedNoEgress"


_KIND_ORDER = {k: i for i, k in enumerate(FindingKind)}

ASSUMPTIONS = (
    "call graph: class-hierarchy analysis, context-insensitive",
    "fields: one abstract cell per (class, field); any store may reach any load",
    "implicit flows through branch conditions are not tracked as data taint",
    "client-side analysis only; server backends are out of scope",
    "opaque callees: result depends on all arguments, no field side effects",
    "sanitizer output is pseudonymized regardless of input status",
)


@dataclass(frozen=True)
class ReportConfig:
    status_mult: dict = field(
        default_factory=lambda: {Status.RAW: 2.0, Status.PSEUDONYMIZED: 1.0}
    )
    sink_mult: dict = field(
        default_factory=lambda: {
            SinkKind.ANALYTICS: 3.0,
            SinkKind.THIRD_PARTY: 3.0,
            SinkKind.NETWORK: 2.0,
            SinkKind.STORAGE: 1.5,
            SinkKind.LOG: 1.0,
        }
    )
    no_egress_mult: float = 0.5


@dataclass(frozen=True)
class Finding:
    id: str
    kind: FindingKind
    risk: float
    source: SourceLabel
    sink: Optional[SinkRef]
    flow: Optional[Flow]
    statement: ComplianceStatement


@dataclass
class AuditReport:
    tool_version: str
    input_digest: str
    assumptions: tuple[str, ...]
    findings: list[Finding]
    slices: list[dict]
    data_safety: dict
    statements: list[ComplianceStatement]


def risk_score(
    weight: float,
    status: Status,
    sink_kind: Optional[SinkKind],
    config: ReportConfig = ReportConfig(),
) -> float:
    mult = config.sink_mult[sink_kind] if sink_kind is not None else config.no_egress_mult
    return weight * config.status_mult[status] * mult


def input_digest(*canonical_texts: str) -> str:
    h = hashlib.sha256()
    for t in canonical_texts:
        h.update(t.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def build_report(
    p: Program,
    labels: list[SourceLabel],
    slices: list[Slice],
    taint: TaintResult,
    dpv_map: DpvMap,
    sinks: SinkRegistry,
    digest: str,
    config: ReportConfig = ReportConfig(),
) -> AuditReport:
    """Assemble the deterministic audit report from one program's outputs."""
    node_ok = lambda loc: p.stmt_at(loc) is not None
    for label in labels:
        if not node_ok(label.location):
            raise InconsistentInputsError(f"label {label.id} points outside the program")
    for f in taint.flows:
        if not node_ok(f.sink.location) or not node_ok(f.source.location):
            raise InconsistentInputsError("flow endpoints point outside the program")
    if {s.root.id for s in slices} != {l.id for l in labels}:
        raise InconsistentInputsError("slices do not cover the label set")

    raw_findings: list[tuple[float, FindingKind, int, Loc, object]] = []
    for f in taint.flows:
        kind = (
            FindingKind.PSEUDONYMIZED_FLOW
            if f.status is Status.PSEUDONYMIZED
            else FindingKind.RAW_FLOW
        )
        risk = risk_score(f.source.category.weight, f.status, f.sink.kind, config)
        raw_findings.append((risk, kind, f.source.id, f.sink.location, f))
    for label in taint.unsunk:
        risk = risk_score(label.category.weight, Status.RAW, None, config)
        raw_findings.append(
            (risk, FindingKind.COLLECTED_NO_EGRESS, label.id, label.location, label)
        )

    raw_findings.sort(key=lambda t: (-t[0], _KIND_ORDER[t[1]], t[2], t[3]))
    findings: list[Finding] = []
    statements: list[ComplianceStatement] = []
    for n, (risk, kind, _, _, ref) in enumerate(raw_findings):
        if isinstance(ref, Flow):
            stmt = map_flow(ref, dpv_map)
            finding = Finding(f"F{n}", kind, risk, ref.source, ref.sink, ref, stmt)
        else:
            stmt = map_flow(ref, dpv_map)
            finding = Finding(f"F{n}", kind, risk, ref, None, None, stmt)
        findings.append(finding)
        statements.append(stmt)

    slice_entries = []
    for s in sorted(slices, key=lambda s: s.root.id):
        st = slice_stats(s, p, sinks)
        slice_entries.append(
            {
                "label": s.root.id,
                "root": _loc_json(s.root.location),
                "node_count": st.node_count,
                "methods_touched": st.methods_touched,
                "sink_nodes": [_loc_json(n) for n in sorted(st.sink_nodes)],
            }
        )

    report = AuditReport(
        tool_version=__version__,
        input_digest=digest,
        assumptions=ASSUMPTIONS,
        findings=findings,
        slices=slice_entries,
        data_safety={},
        statements=statements,
    )
    report.data_safety = draft_data_safety(report)
    return report


def draft_data_safety(r: AuditReport) -> dict:
    """Per-category collection/sharing/security summary.

    A category counts as secured by pseudonymisation only when it has at
    least one flow and every flow is pseudonymized; data that never leaves
    the app gets no security claim."""
    by_cat: dict[str, dict] = {}
    for f in r.findings:
        cat = f.source.category.name
        entry = by_cat.setdefault(
            cat, {"collected": True, "shared_with": set(), "flows": [], "network": False}
        )
        if f.flow is not None:
            entry["flows"].append(f)
            if f.sink.kind in (SinkKind.THIRD_PARTY, SinkKind.ANALYTICS) and f.sink.name:
                entry["shared_with"].add(f.sink.name)
            if f.sink.kind is SinkKind.NETWORK:
                entry["network"] = True
    draft = {}
    for cat in sorted(by_cat):
        entry = by_cat[cat]
        shared = sorted(entry["shared_with"])
        if entry["network"]:
            shared.append("network")
        flows = entry["flows"]
        secured = bool(flows) and all(
            f.kind is FindingKind.PSEUDONYMIZED_FLOW for f in flows
        )
        draft[cat] = {
            "collected": True,
            "shared_with": shared,
            "security": "pseudonymised" if secured else None,
        }
    return draft


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _loc_json(loc: Loc) -> dict:
    return {"class": loc.cls, "method": loc.method, "index": loc.index}


def _label_json(label: SourceLabel) -> dict:
    origin: dict = {"kind": label.origin.kind}
    if label.origin.kind == "UserInput":
        origin["widget"] = label.origin.widget
        origin["keyword"] = label.origin.keyword
    return {
        "id": label.id,
        "location": _loc_json(label.location),
        "category": label.category.name,
        "origin": origin,
    }


def _statement_json(st: ComplianceStatement) -> dict:
    if st.provenance[0] == "flow":
        prov = {
            "kind": "flow",
            "source": st.provenance[1],
            "sink": _loc_json(st.provenance[2]),
        }
    else:
        prov = {"kind": "collection", "label": st.provenance[1]}
    return {
        "personal_data": st.personal_data,
        "processing": st.processing,
        "recipient": st.recipient,
        "measures": list(st.measures),
        "status": "Pseudonymized" if st.status is Status.PSEUDONYMIZED else "Raw",
        "provenance": prov,
    }


def _finding_json(f: Finding) -> dict:
    out: dict = {
        "id": f.id,
        "kind": f.kind.value,
        "risk": f.risk,
        "source": _label_json(f.source),
    }
    if f.flow is not None and f.sink is not None:
        out["sink"] = {
            "location": _loc_json(f.sink.location),
            "kind": f.sink.kind.value,
            "name": f.sink.name,
        }
        out["witness"] = [_loc_json(w) for w in f.flow.witness]
        out["manipulations"] = list(f.flow.manipulations)
    else:
        out["sink"] = None
        out["witness"] = None
        out["manipulations"] = None
    out["statement"] = _statement_json(f.statement)
    return out


def report_json(r: AuditReport) -> dict:
    return {
        "version": {"schema": 1, "tool": r.tool_version},
        "input_digest": r.input_digest,
        "assumptions": list(r.assumptions),
        "findings": [_finding_json(f) for f in r.findings],
        "slices": r.slices,
        "data_safety": r.data_safety,
        "statements": [_statement_json(s) for s in r.statements],
    }


def serialize_report(r: AuditReport) -> str:
    return json.dumps(report_json(r), indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# DOT rendering
# ---------------------------------------------------------------------------


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_dot(
    s: Slice,
    p: Program,
    labels: list[SourceLabel],
    sinks: SinkRegistry,
    sanitizers: SanitizerRegistry,
) -> str:
    """A byte-stable DOT digraph of one slice. Node kinds: source (labelled
    statement), sink (registry match), sanitizer, normal; precedence in
    that order when one statement qualifies twice."""
    label_locs = {l.location for l in labels}

    def node_kind(loc: Loc) -> str:
        if loc in label_locs:
            return "source"
        stmt = p.stmt_at(loc)
        parts = call_parts(stmt) if stmt is not None else None
        if parts is not None:
            if sinks.match(parts[0]) is not None:
                return "sink"
            if parts[0] in sanitizers:
                return "sanitizer"
        return "normal"

    def node_id(loc: Loc) -> str:
        return f"{loc.cls}.{loc.method}:{loc.index}"

    def node_label(loc: Loc) -> str:
        stmt = p.stmt_at(loc)
        text = print_stmt(stmt) if stmt is not None else "?"
        short_method = loc.method.split("/")[0]
        return f"{loc.cls}.{short_method}:{loc.index}: {text}"

    lines = [f'digraph "slice_{s.root.id}" {{', "  node [shape=box];"]
    for loc in sorted(s.nodes):
        lines.append(
            f'  "{_dot_escape(node_id(loc))}" '
            f'[label="{_dot_escape(node_label(loc))}", kind="{node_kind(loc)}"];'
        )
    for e in sorted(s.edges, key=lambda e: e.sort_key()):
        lines.append(
            f'  "{_dot_escape(node_id(e.src))}" -> "{_dot_escape(node_id(e.dst))}" '
            f'[label="{e.kind.value}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Text summary (rendered from the JSON dict only)
# ---------------------------------------------------------------------------

_RED = "\x1b[31m"
_YELLOW = "\x1b[33m"
_GREEN = "\x1b[32m"
_RESET = "\x1b[0m"


def summarize(report: dict, color: bool = False) -> str:
    """Human-readable summary of a serialized report dict."""

    def paint(text: str, code: str) -> str:
        return f"{code}{text}{_RESET}" if color else text

    lines = [f"pdaudit report (digest {report['input_digest'][:12]})"]
    findings = report["findings"]
    if not findings:
        lines.append("no findings: no personal data sources detected")
    for f in findings:
        src = f["source"]
        where = f"{src['location']['class']}.{src['location']['method']}:{src['location']['index']}"
        if f["kind"] == "CollectedNoEgress":
            desc = f"{src['category']} collected at {where}, never reaches a sink"
            code = _GREEN
        else:
            sink = f["sink"]
            sink_where = (
                f"{sink['location']['class']}.{sink['location']['method']}"
                f":{sink['location']['index']}"
            )
            target = sink["name"] or sink["kind"]
            desc = f"{src['category']} -> {target} ({sink['kind']}) at {sink_where}"
            if f["kind"] == "PseudonymizedFlow":
                desc += ", pseudonymized on all paths"
                code = _YELLOW
            else:
                desc += ", RAW on some path"
                code = _RED
        lines.append(paint(f"  [{f['id']}] risk {f['risk']:g}: {desc}", code))
    lines.append(f"{len(findings)} finding(s)")
    return "\n".join(lines) + "\n"
