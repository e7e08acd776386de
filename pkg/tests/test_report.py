import json
import re

import pytest

from conftest import FIXTURE_A, FIXTURE_B, FIXTURE_B_PRIME, fixture_registries
from pdaudit.dpv import DpvMap
from pdaudit.graph import build_call_graph, build_pdg
from pdaudit.ir import Loc, parse_program, print_program
from pdaudit.registry import Origin, PersonalDataCategory, SinkKind, SourceLabel, label_sources
from pdaudit.report import (
    FindingKind,
    InconsistentInputsError,
    ReportConfig,
    build_report,
    draft_data_safety,
    input_digest,
    render_dot,
    report_json,
    risk_score,
    serialize_report,
    summarize,
)
from pdaudit.slicer import forward_slice
from pdaudit.taint import Status, build_taint_result, propagate

DPV = DpvMap(
    category_iri={"EmailAddress": "iri:pd/email", "Location": "iri:pd/location"},
    sinkkind_iri={
        "ThirdParty": "iri:proc/disclose",
        "Analytics": "iri:proc/transfer",
        "Network": "iri:proc/transmit",
        "Storage": "iri:proc/store",
        "Log": "iri:proc/record",
    },
    collection_iri="iri:proc/collect",
    pseudonymisation_iri="iri:measure/pseudonymisation",
)


def pipeline(text):
    sources, sinks, sanitizers, lexicon = fixture_registries()
    p = parse_program(text)
    cg = build_call_graph(p)
    g = build_pdg(p, cg)
    labels = label_sources(p, sources, lexicon)
    pr = propagate(p, cg, labels, sanitizers)
    taint = build_taint_result(pr, p, sinks, g)
    slices = [forward_slice(g, l) for l in labels]
    digest = input_digest(print_program(p))
    report = build_report(p, labels, slices, taint, DPV, sinks, digest)
    return p, labels, g, slices, taint, report, sinks, sanitizers


# ---------------------------------------------------------------------------
# Risk
# ---------------------------------------------------------------------------


def test_risk_formula_values():
    assert risk_score(1.0, Status.RAW, SinkKind.ANALYTICS) == 6.0
    assert risk_score(1.0, Status.PSEUDONYMIZED, SinkKind.NETWORK) == 2.0
    assert risk_score(1.0, Status.RAW, None) == 1.0


def test_risk_multipliers_overridable():
    config = ReportConfig(
        status_mult={Status.RAW: 10.0, Status.PSEUDONYMIZED: 1.0},
        sink_mult={SinkKind.ANALYTICS: 1.0, SinkKind.THIRD_PARTY: 1.0,
                   SinkKind.NETWORK: 1.0, SinkKind.STORAGE: 1.0, SinkKind.LOG: 1.0},
        no_egress_mult=0.1,
    )
    assert risk_score(2.0, Status.RAW, SinkKind.ANALYTICS, config) == 20.0
    assert risk_score(2.0, Status.RAW, None, config) == pytest.approx(2.0)


def test_risk_monotonicity():
    assert risk_score(1.0, Status.RAW, SinkKind.NETWORK) >= risk_score(
        1.0, Status.PSEUDONYMIZED, SinkKind.NETWORK
    )
    assert risk_score(1.0, Status.RAW, SinkKind.ANALYTICS) >= risk_score(
        1.0, Status.RAW, SinkKind.LOG
    )


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


def test_fixture_a_report():
    *_, report, _, _ = pipeline(FIXTURE_A)
    assert len(report.findings) == 1
    f = report.findings[0]
    assert f.kind is FindingKind.RAW_FLOW
    assert f.risk == 6.0
    assert f.id == "F0"
    assert len(report.statements) == 1


def test_fixture_b_prime_report():
    *_, report, _, _ = pipeline(FIXTURE_B_PRIME)
    assert len(report.findings) == 1
    f = report.findings[0]
    assert f.kind is FindingKind.PSEUDONYMIZED_FLOW
    assert f.risk == 2.0


def test_empty_program_report():
    *_, report, _, _ = pipeline("")
    assert report.findings == []
    assert report.statements == []
    assert report.data_safety == {}
    text = serialize_report(report)
    assert json.loads(text)["findings"] == []


def test_unsunk_becomes_collected_no_egress():
    src = """\
class C extends D {
  method void f() {
    0: $l = call android.location.LocationManager.getLastKnownLocation()
    1: return
  }
}
"""
    *_, report, _, _ = pipeline(src)
    assert len(report.findings) == 1
    f = report.findings[0]
    assert f.kind is FindingKind.COLLECTED_NO_EGRESS
    assert f.risk == 1.0
    assert f.sink is None
    assert f.statement.processing == "iri:proc/collect"


def test_findings_sorted_by_risk_then_kind():
    src = """\
class C extends D {
  method void f() {
    0: $l = call android.location.LocationManager.getLastKnownLocation()
    1: call com.analytics.Tracker.log($l)
    2: $u = call android.location.LocationManager.getLastKnownLocation()
    3: return
  }
}
"""
    *_, report, _, _ = pipeline(src)
    assert [f.kind for f in report.findings] == [
        FindingKind.RAW_FLOW,
        FindingKind.COLLECTED_NO_EGRESS,
    ]
    assert [f.id for f in report.findings] == ["F0", "F1"]
    assert report.findings[0].risk > report.findings[1].risk


def test_statement_count_partition():
    *_, report, _, _ = pipeline(FIXTURE_B)
    assert len(report.statements) == len(report.findings) == 1


def test_inconsistent_inputs_rejected():
    p, labels, g, slices, taint, report, sinks, _ = pipeline(FIXTURE_A)
    ghost = SourceLabel(
        7, Loc("Nowhere", "f/0", 0), PersonalDataCategory("Location"), Origin("SystemApi")
    )
    with pytest.raises(InconsistentInputsError):
        build_report(p, labels + [ghost], slices, taint, DPV, sinks, "d")


# ---------------------------------------------------------------------------
# Data safety draft
# ---------------------------------------------------------------------------


def test_data_safety_fixture_a():
    *_, report, _, _ = pipeline(FIXTURE_A)
    assert report.data_safety == {
        "EmailAddress": {"collected": True, "shared_with": ["Tracker"], "security": None}
    }


def test_data_safety_fixture_b_prime():
    *_, report, _, _ = pipeline(FIXTURE_B_PRIME)
    assert report.data_safety == {
        "Location": {"collected": True, "shared_with": ["network"], "security": "pseudonymised"}
    }


def test_data_safety_unsunk_category_makes_no_security_claim():
    src = """\
class C extends D {
  method void f() {
    0: $l = call android.location.LocationManager.getLastKnownLocation()
    1: return
  }
}
"""
    *_, report, _, _ = pipeline(src)
    assert report.data_safety == {
        "Location": {"collected": True, "shared_with": [], "security": None}
    }


def test_data_safety_matches_draft_function():
    *_, report, _, _ = pipeline(FIXTURE_B)
    assert report.data_safety == draft_data_safety(report)


# ---------------------------------------------------------------------------
# DOT rendering
# ---------------------------------------------------------------------------

_QSTR = r'"(?:[^"\\]|\\.)*"'
_NODE_RE = re.compile(rf'  {_QSTR} \[label={_QSTR}, kind="(source|sink|sanitizer|normal)"\];')
_EDGE_RE = re.compile(rf'  {_QSTR} -> {_QSTR} \[label="(Data|Control|Call|ParamIn|ReturnOut)"\];')


def assert_valid_dot(text):
    lines = text.rstrip("\n").splitlines()
    assert re.fullmatch(r'digraph "[^"]*" \{', lines[0]), lines[0]
    assert lines[-1] == "}"
    for ln in lines[1:-1]:
        assert (
            ln == "  node [shape=box];" or _NODE_RE.fullmatch(ln) or _EDGE_RE.fullmatch(ln)
        ), ln


def test_dot_singleton_slice():
    src = "class C extends D { method void f() { 0: $a = call e.S.r() 1: return } }"
    p = parse_program(src)
    g = build_pdg(p, build_call_graph(p))
    label = SourceLabel(0, Loc("C", "f/0", 0), PersonalDataCategory("Location"), Origin("SystemApi"))
    sources, sinks, sanitizers, lexicon = fixture_registries()
    s = forward_slice(g, label)
    dot = render_dot(s, p, [label], sinks, sanitizers)
    assert_valid_dot(dot)
    assert dot.count("->") == 0
    assert 'kind="source"' in dot


def test_dot_fixture_a():
    p, labels, g, slices, *_ , sinks, sanitizers = pipeline(FIXTURE_A)
    dot = render_dot(slices[0], p, labels, sinks, sanitizers)
    assert_valid_dot(dot)
    assert dot.count('kind="source"') == 1
    assert dot.count('kind="sink"') == 1
    assert dot.count('[label="Data"]') == 1


def test_dot_fixture_b_marks_sanitizer():
    p, labels, g, slices, *_, sinks, sanitizers = pipeline(FIXTURE_B)
    dot = render_dot(slices[0], p, labels, sinks, sanitizers)
    assert_valid_dot(dot)
    assert len([ln for ln in dot.splitlines() if 'kind="' in ln and "->" not in ln]) == 4
    assert dot.count('kind="sanitizer"') == 1


def test_dot_escapes_quotes_in_literals():
    src = 'class C extends D { method void f() { 0: $a = "say \\"hi\\"" 1: call com.net.H.p($a) 2: return } }'
    p = parse_program(src)
    g = build_pdg(p, build_call_graph(p))
    label = SourceLabel(0, Loc("C", "f/0", 0), PersonalDataCategory("Location"), Origin("SystemApi"))
    sources, sinks, sanitizers, _ = fixture_registries()
    s = forward_slice(g, label)
    assert_valid_dot(render_dot(s, p, [label], sinks, sanitizers))


def test_dot_byte_stable():
    p, labels, g, slices, *_, sinks, sanitizers = pipeline(FIXTURE_B)
    a = render_dot(slices[0], p, labels, sinks, sanitizers)
    b = render_dot(slices[0], p, labels, sinks, sanitizers)
    assert a == b


# ---------------------------------------------------------------------------
# Serialization and summary
# ---------------------------------------------------------------------------


def test_report_key_order_fixed():
    *_, report, _, _ = pipeline(FIXTURE_A)
    assert list(report_json(report)) == [
        "version",
        "input_digest",
        "assumptions",
        "findings",
        "slices",
        "data_safety",
        "statements",
    ]


def test_serialization_deterministic():
    a = serialize_report(pipeline(FIXTURE_B)[5])
    b = serialize_report(pipeline(FIXTURE_B)[5])
    assert a == b


def test_digest_changes_with_input():
    assert input_digest("x") != input_digest("y")
    assert input_digest("ab", "c") != input_digest("a", "bc")


def test_summary_derived_from_json():
    *_, report, _, _ = pipeline(FIXTURE_A)
    d = report_json(report)
    text = summarize(d)
    assert "EmailAddress -> Tracker (Analytics)" in text
    assert "risk 6" in text
    assert "\x1b[" not in text
    colored = summarize(d, color=True)
    assert "\x1b[31m" in colored


def test_summary_mentions_no_egress():
    src = """\
class C extends D {
  method void f() {
    0: $l = call android.location.LocationManager.getLastKnownLocation()
    1: return
  }
}
"""
    *_, report, _, _ = pipeline(src)
    text = summarize(report_json(report))
    assert "never reaches a sink" in text
