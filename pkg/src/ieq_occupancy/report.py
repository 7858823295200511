"""Rendering and parsing of evaluation reports.

Two formats are produced. The json document keeps every accuracy to one
decimal. The text document shows the accuracy grid with integer cells in
the ``a / b / c`` layout (``-`` for absent combinations), followed by a
tab-separated detail block that carries the same one-decimal values, so a
text report can be parsed back into the exact json it came from.
"""

from __future__ import annotations

import json
from decimal import ROUND_HALF_UP, Decimal

from .evaluation import EvalReport, GlobalCell, LocalCell

REPORT_SCHEMA_VERSION = 1
DETAIL_MARKER = "[detail]"
ABSENT = "-"

_LOCAL_FIELDS = ("zone", "model", "feature_set", "channels", "mean_acc", "std",
                 "precision", "recall", "fold_accs")
_GLOBAL_FIELDS = ("train_zone", "test_zone", "model", "feature_set", "channels", "acc",
                  "local_mean_acc", "drop")


class ReportFormatError(ValueError):
    pass


def _r1(x: float | None) -> float | None:
    # Adding 0.0 turns a rounded -0.0 into 0.0.
    return None if x is None else round(float(x), 1) + 0.0


def integer_cell(x: float | None) -> str:
    """Half-up integer rounding of a one-decimal accuracy, or '-'."""
    if x is None:
        return ABSENT
    return str(int(Decimal(repr(_r1(x))).quantize(Decimal(1), rounding=ROUND_HALF_UP)))


def format_cell(values) -> str:
    """Table cell for one model and feature set across zones, e.g. '84 / 88 / -'."""
    return " / ".join(integer_cell(v) for v in values)


# ---------------------------------------------------------------------------
# json


def report_to_dict(report: EvalReport) -> dict:
    local = []
    for c in report.local:
        local.append({
            "zone": c.zone,
            "model": c.model,
            "feature_set": c.feature_set,
            "channels": None if c.channels is None else list(c.channels),
            "mean_acc": _r1(c.mean_acc),
            "fold_accs": [_r1(a) for a in c.fold_accs],
            "std": _r1(c.std),
            "precision": _r1(c.precision),
            "recall": _r1(c.recall),
        })
    global_ = []
    for g in report.global_:
        global_.append({
            "train_zone": g.train_zone,
            "test_zone": g.test_zone,
            "model": g.model,
            "feature_set": g.feature_set,
            "channels": list(g.channels),
            "acc": _r1(g.acc),
            "local_mean_acc": _r1(g.local_mean_acc),
            "drop": _r1(g.drop),
        })
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "zones": list(report.zones),
        "models": list(report.models),
        "feature_sets": list(report.feature_sets),
        "local": local,
        "global": global_,
        "selected_features": {z: list(f) for z, f in report.selected_features.items()},
    }


def report_from_dict(doc: dict) -> EvalReport:
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ReportFormatError(f"unsupported report schema_version {doc.get('schema_version')!r}")
    local = [
        LocalCell(
            c["zone"], c["model"], c["feature_set"],
            None if c.get("channels") is None else tuple(c["channels"]),
            c.get("mean_acc"), list(c.get("fold_accs", [])), c.get("std"),
            c.get("precision"), c.get("recall"),
        )
        for c in doc.get("local", [])
    ]
    global_ = [
        GlobalCell(
            g["train_zone"], g["test_zone"], g["model"], g["feature_set"],
            tuple(g.get("channels", [])), g["acc"], g.get("local_mean_acc"), g.get("drop"),
        )
        for g in doc.get("global", [])
    ]
    return EvalReport(
        zones=list(doc.get("zones", [])),
        models=list(doc.get("models", [])),
        feature_sets=list(doc.get("feature_sets", [])),
        local=local,
        global_=global_,
        selected_features={z: list(f) for z, f in doc.get("selected_features", {}).items()},
    )


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=1) + "\n"


def report_from_json(text: str) -> EvalReport:
    return report_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# text


def _table(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]


def _field(value) -> str:
    if value is None:
        return ABSENT
    if isinstance(value, (list, tuple)):
        return ",".join(_field(v) for v in value)
    text = repr(value) if isinstance(value, float) else str(value)
    if "\t" in text or "\n" in text or "," in text or text == ABSENT:
        raise ReportFormatError(f"cannot write {text!r} into a text report")
    return text


def render_text(report: EvalReport) -> str:
    doc = report_to_dict(report)
    zones, models = doc["zones"], doc["models"]
    lines = [f"Local model accuracy (%); each cell lists {' / '.join(zones) or 'no zones'}", ""]
    grid = {(c["zone"], c["model"], c["feature_set"]): c["mean_acc"] for c in doc["local"]}
    rows = [["Feature set", *models]]
    for fs in doc["feature_sets"]:
        rows.append([fs, *(format_cell(grid.get((z, m, fs)) for z in zones) for m in models)])
    lines += _table(rows)

    if doc["selected_features"]:
        lines += ["", "Features retained by random-forest selection"]
        lines += [f"{z}: {', '.join(f)}" for z, f in doc["selected_features"].items()]

    if doc["global"]:
        lines += ["", "Global models (%)", ""]
        rows = [["Train", "Test", "Model", "Feature set", "Global", "Local", "Drop"]]
        for g in doc["global"]:
            rows.append([g["train_zone"], g["test_zone"], g["model"], g["feature_set"],
                         integer_cell(g["acc"]), integer_cell(g["local_mean_acc"]),
                         ABSENT if g["drop"] is None else f"{g['drop']:.1f}"])
        lines += _table(rows)

    lines += ["", DETAIL_MARKER]
    lines.append("\t".join(["schema_version", str(doc["schema_version"])]))
    for key in ("zones", "models", "feature_sets"):
        lines.append("\t".join([key, *(_field(v) for v in doc[key])]))
    for c in doc["local"]:
        lines.append("\t".join(["local", *(_field(c[k]) for k in _LOCAL_FIELDS)]))
    for g in doc["global"]:
        lines.append("\t".join(["global", *(_field(g[k]) for k in _GLOBAL_FIELDS)]))
    for z, f in doc["selected_features"].items():
        lines.append("\t".join(["selected", _field(z), *(_field(v) for v in f)]))
    return "\n".join(lines) + "\n"


def _num(text: str) -> float | None:
    return None if text == ABSENT else float(text)


def _names(text: str) -> list[str] | None:
    return None if text == ABSENT else ([] if text == "" else text.split(","))


def parse_text_report(text: str) -> dict:
    """Recover the json document from a text report's detail block."""
    lines = text.splitlines()
    try:
        start = lines.index(DETAIL_MARKER) + 1
    except ValueError:
        raise ReportFormatError("text report has no detail block") from None
    doc = {"schema_version": None, "zones": [], "models": [], "feature_sets": [],
           "local": [], "global": [], "selected_features": {}}
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line:
            continue
        tag, *parts = line.split("\t")
        try:
            if tag == "schema_version":
                doc["schema_version"] = int(parts[0])
            elif tag in ("zones", "models", "feature_sets"):
                doc[tag] = parts
            elif tag == "local":
                zone, model, fs, channels, mean, std, prec, rec, folds = parts
                doc["local"].append({
                    "zone": zone, "model": model, "feature_set": fs,
                    "channels": _names(channels), "mean_acc": _num(mean),
                    "fold_accs": [float(v) for v in _names(folds) or []],
                    "std": _num(std), "precision": _num(prec), "recall": _num(rec),
                })
            elif tag == "global":
                train, test, model, fs, channels, acc, local_acc, drop = parts
                doc["global"].append({
                    "train_zone": train, "test_zone": test, "model": model, "feature_set": fs,
                    "channels": _names(channels), "acc": float(acc),
                    "local_mean_acc": _num(local_acc), "drop": _num(drop),
                })
            elif tag == "selected":
                doc["selected_features"][parts[0]] = parts[1:]
            else:
                raise ReportFormatError(f"line {lineno}: unknown record {tag!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ReportFormatError):
                raise
            raise ReportFormatError(f"line {lineno}: malformed {tag!r} record") from exc
    return doc


def render_report(report: EvalReport, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(report)
    if fmt == "json":
        return report_to_json(report)
    raise ValueError(f"unknown report format {fmt!r}; expected 'text' or 'json'")
