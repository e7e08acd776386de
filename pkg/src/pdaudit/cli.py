"""pdaudit command line: parse -> label -> graph -> slice -> taint -> dpv -> report.

Subcommands:
  analyze   full pipeline; writes <out>/report.json and <out>/slice_<id>.dot
  validate  parse the IR and registries, print diagnostics, no analysis
  print     canonical PIR to stdout

Exit codes (analyze):
  0  no finding with risk >= --fail-threshold
  1  at least one finding at or above the threshold (report still written)
  2  usage, parse or registry error

Registry flags default to the bundled seed files. A --config file (JSON, or
TOML on installs with tomli/tomllib) may supply the same keys; explicit
flags win. PDAUDIT_NO_COLOR=1 disables ANSI color in the text summary.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .dpv import MissingMappingError, load_dpv_map
from .graph import build_call_graph, build_pdg
from .ir import (
    ParseError,
    PirError,
    Program,
    Severity,
    parse_program,
    print_program,
    validate,
)
from .registry import RegistryError, SinkKind, label_sources, load_registries
from .report import (
    AuditReport,
    ReportConfig,
    build_report,
    input_digest,
    render_dot,
    report_json,
    serialize_report,
    summarize,
)
from .slicer import forward_slice
from .taint import Status, build_taint_result, propagate


def _bundled(name: str) -> Path:
    return Path(str(resources.files("pdaudit") / "data" / name))


@dataclass
class Config:
    sources: Path = field(default_factory=lambda: _bundled("sources.json"))
    sinks: Path = field(default_factory=lambda: _bundled("sinks.json"))
    sanitizers: Path = field(default_factory=lambda: _bundled("sanitizers.json"))
    lexicon: Path = field(default_factory=lambda: _bundled("lexicon.json"))
    dpv: Path = field(default_factory=lambda: _bundled("dpv.json"))
    out: Path = Path("pdaudit-out")
    fail_threshold: float = 0.0
    risk: ReportConfig = field(default_factory=ReportConfig)


class UsageError(Exception):
    pass


def _load_config_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".toml", ".tml"):
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            try:
                import tomli as tomllib  # type: ignore[no-redef]
            except ModuleNotFoundError:
                raise UsageError("TOML config needs Python 3.11+ or the tomli package") from None
        return tomllib.loads(text)
    return json.loads(text)


def _risk_config(raw: dict) -> ReportConfig:
    base = ReportConfig()
    status = dict(base.status_mult)
    for name, value in raw.get("status_mult", {}).items():
        key = {"Raw": Status.RAW, "Pseudonymized": Status.PSEUDONYMIZED}.get(name)
        if key is None:
            raise UsageError(f"unknown status multiplier {name!r}")
        status[key] = float(value)
    sink = dict(base.sink_mult)
    for name, value in raw.get("sink_mult", {}).items():
        try:
            sink[SinkKind(name)] = float(value)
        except ValueError:
            raise UsageError(f"unknown sink kind {name!r}") from None
    return ReportConfig(
        status_mult=status,
        sink_mult=sink,
        no_egress_mult=float(raw.get("no_egress_mult", base.no_egress_mult)),
    )


def build_config(args: argparse.Namespace) -> Config:
    cfg = Config()
    if args.config is not None:
        raw = _load_config_file(Path(args.config))
        for key in ("sources", "sinks", "sanitizers", "lexicon", "dpv", "out"):
            if key in raw:
                setattr(cfg, key, Path(raw[key]))
        if "fail_threshold" in raw:
            cfg.fail_threshold = float(raw["fail_threshold"])
        if "risk" in raw:
            cfg.risk = _risk_config(raw["risk"])
    for key in ("sources", "sinks", "sanitizers", "lexicon", "dpv", "out"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, Path(value))
    if getattr(args, "fail_threshold", None) is not None:
        cfg.fail_threshold = args.fail_threshold
    if cfg.fail_threshold < 0:
        raise UsageError("--fail-threshold must be >= 0")
    return cfg


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class AnalysisArtifacts:
    program: Program
    report: AuditReport
    dots: dict[int, str]  # label id -> DOT text


def run_analysis(pir_text: str, cfg: Config) -> AnalysisArtifacts:
    program = parse_program(pir_text)
    diags = validate(program)
    errors = [d for d in diags if d.severity is Severity.ERROR]
    if errors:
        raise PirError("; ".join(str(d) for d in errors))

    sources, sinks, sanitizers, lexicon = load_registries(
        cfg.sources, cfg.sinks, cfg.sanitizers, cfg.lexicon
    )
    categories = {c.name for c in sources.entries.values()} | {
        c.name for c in lexicon.entries.values()
    }
    dpv_map = load_dpv_map(cfg.dpv, categories, [k.value for k in SinkKind])

    cg = build_call_graph(program)
    g = build_pdg(program, cg)
    labels = label_sources(program, sources, lexicon)
    pr = propagate(program, cg, labels, sanitizers)
    taint = build_taint_result(pr, program, sinks, g)
    slices = [forward_slice(g, label) for label in labels]

    digest = input_digest(
        print_program(program),
        *(
            json.dumps(json.loads(Path(p).read_text(encoding="utf-8")), sort_keys=True)
            for p in (cfg.sources, cfg.sinks, cfg.sanitizers, cfg.lexicon, cfg.dpv)
        ),
    )
    report = build_report(program, labels, slices, taint, dpv_map, sinks, digest, cfg.risk)
    dots = {
        s.root.id: render_dot(s, program, labels, sinks, sanitizers)
        for s in sorted(slices, key=lambda s: s.root.id)
    }
    return AnalysisArtifacts(program, report, dots)


def write_outputs(artifacts: AnalysisArtifacts, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(serialize_report(artifacts.report), encoding="utf-8")
    for label_id, dot in artifacts.dots.items():
        (out_dir / f"slice_{label_id}.dot").write_text(dot, encoding="utf-8")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _emit_error(exc: Exception, source_file: str, json_errors: bool) -> None:
    if json_errors:
        payload: dict = {"error": type(exc).__name__, "message": str(exc), "file": source_file}
        if isinstance(exc, ParseError):
            payload["line"] = exc.line
            payload["col"] = exc.col
            payload["expected"] = exc.expected
        print(json.dumps(payload), file=sys.stderr)
    elif isinstance(exc, ParseError):
        print(f"{source_file}:{exc.line}:{exc.col}: expected {exc.expected}", file=sys.stderr)
    else:
        print(f"{source_file}: {exc}", file=sys.stderr)


def _use_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("PDAUDIT_NO_COLOR")


def _add_registry_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--sources", help="source registry JSON (default: bundled)")
    sp.add_argument("--sinks", help="sink registry JSON (default: bundled)")
    sp.add_argument("--sanitizers", help="sanitizer registry JSON (default: bundled)")
    sp.add_argument("--lexicon", help="keyword lexicon JSON (default: bundled)")
    sp.add_argument("--config", help="JSON/TOML config with the same keys; flags win")
    sp.add_argument("--json-errors", action="store_true", help="machine-readable errors")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdaudit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="run the full audit pipeline")
    an.add_argument("pir", help="PIR source file")
    _add_registry_flags(an)
    an.add_argument("--dpv", help="DPV map JSON (default: bundled)")
    an.add_argument("--out", help="output directory (default: pdaudit-out)")
    an.add_argument("--fail-threshold", type=float, default=None,
                    help="exit 1 when any finding's risk reaches this (default 0)")

    va = sub.add_parser("validate", help="check the IR and registries only")
    va.add_argument("pir", help="PIR source file")
    _add_registry_flags(va)

    pr = sub.add_parser("print", help="canonical PIR to stdout")
    pr.add_argument("pir", help="PIR source file")
    pr.add_argument("--json-errors", action="store_true", help="machine-readable errors")
    return parser


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        cfg = build_config(args)
        pir_text = Path(args.pir).read_text(encoding="utf-8")
        artifacts = run_analysis(pir_text, cfg)
        write_outputs(artifacts, cfg.out)
    except (PirError, RegistryError, MissingMappingError, UsageError, OSError,
            json.JSONDecodeError) as exc:
        _emit_error(exc, args.pir, args.json_errors)
        return 2
    data = report_json(artifacts.report)
    print(summarize(data, color=_use_color()), end="")
    over = [f for f in artifacts.report.findings if f.risk >= cfg.fail_threshold]
    return 1 if over else 0


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        cfg = build_config(args)
        pir_text = Path(args.pir).read_text(encoding="utf-8")
        program = parse_program(pir_text)
        load_registries(cfg.sources, cfg.sinks, cfg.sanitizers, cfg.lexicon)
    except (PirError, RegistryError, UsageError, OSError, json.JSONDecodeError) as exc:
        _emit_error(exc, args.pir, args.json_errors)
        return 2
    diags = validate(program)
    for d in diags:
        print(str(d))
    return 1 if any(d.severity is Severity.ERROR for d in diags) else 0


def cmd_print(args: argparse.Namespace) -> int:
    try:
        pir_text = Path(args.pir).read_text(encoding="utf-8")
        program = parse_program(pir_text)
    except (PirError, OSError) as exc:
        _emit_error(exc, args.pir, args.json_errors)
        return 2
    print(print_program(program), end="")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "analyze":
        return cmd_analyze(args)
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_print(args)


if __name__ == "__main__":
    sys.exit(main())
