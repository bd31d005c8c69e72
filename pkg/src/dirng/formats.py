"""Plain-text formats for transcripts and count tables, and JSON documents.

Transcript::

    #dirng-transcript v1 inputs=2,2 outputs=2,2 n=3
    3 0
    1 2
    0 1

with one ``<flat input> <flat output>`` pair per round.  Count table::

    #dirng-counts v1 inputs=2,2 outputs=2,2
    pi 0 0 0.25
    ...
    count 0 0 0 0 1234
    ...

where ``pi`` lines give ``x1 x2 weight`` and ``count`` lines ``a1 a2 x1 x2 #``.
Bell expressions and behaviors share one table layout::

    #dirng-expression v1 inputs=2,2 outputs=2,2
    label CHSH
    0 0 0 0 1.0
    ...

with ``a1 a2 x1 x2 value`` rows (``#dirng-behavior`` has no label line).
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .quantum import Transcript
from .scenario import Behavior, BellExpression, FrequencyTable, InputDistribution, Scenario


class FormatError(ValueError):
    """Malformed input file; the message carries ``path:line:column``."""


def _where(path, line: int, col: int = 1) -> str:
    return f"{path}:{line}:{col}"


_HEADER = re.compile(r"^#dirng-(?P<kind>transcript|counts|expression|behavior) v1 (?P<fields>.*)$")


def _parse_header(text: str, kind: str, path) -> tuple[Scenario, dict]:
    m = _HEADER.match(text.rstrip("\n"))
    if not m or m.group("kind") != kind:
        raise FormatError(f"{_where(path, 1)}: expected '#dirng-{kind} v1' header")
    fields = {}
    for tok in m.group("fields").split():
        if "=" not in tok:
            col = text.index(tok) + 1
            raise FormatError(f"{_where(path, 1, col)}: header field {tok!r} is not key=value")
        k, v = tok.split("=", 1)
        fields[k] = v
    try:
        inputs = tuple(int(v) for v in fields["inputs"].split(","))
        outputs = tuple(int(v) for v in fields["outputs"].split(","))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{_where(path, 1)}: header needs inputs= and outputs=") from exc
    return Scenario(inputs, outputs), fields


def _header_fields(scenario: Scenario) -> str:
    return (f"inputs={','.join(map(str, scenario.inputs))} "
            f"outputs={','.join(map(str, scenario.outputs))}")


def dump_transcript(t: Transcript) -> str:
    head = f"#dirng-transcript v1 {_header_fields(t.scenario)} n={t.n}\n"
    body = "\n".join(f"{x} {a}" for x, a in zip(t.inputs.tolist(), t.outputs.tolist()))
    return head + body + ("\n" if t.n else "")


def parse_transcript(text: str, path="<string>") -> Transcript:
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{_where(path, 1)}: empty file")
    scenario, fields = _parse_header(lines[0], "transcript", path)
    xs, as_ = [], []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{_where(path, no)}: expected '<input> <output>'")
        try:
            x, a = int(parts[0]), int(parts[1])
        except ValueError:
            bad = next(p for p in parts if not re.fullmatch(r"-?\d+", p))
            raise FormatError(f"{_where(path, no, line.index(bad) + 1)}: "
                              f"{bad!r} is not an integer") from None
        if not 0 <= x < scenario.n_inputs:
            raise FormatError(f"{_where(path, no, 1)}: input {x} out of range")
        if not 0 <= a < scenario.n_outputs:
            raise FormatError(f"{_where(path, no, line.index(parts[1]) + 1)}: "
                              f"output {a} out of range")
        xs.append(x)
        as_.append(a)
    if "n" in fields and int(fields["n"]) != len(xs):
        raise FormatError(f"{_where(path, 1)}: header says n={fields['n']} "
                          f"but {len(xs)} rounds follow")
    return Transcript(scenario, np.array(xs, dtype=np.int64), np.array(as_, dtype=np.int64))


def dump_counts(freq: FrequencyTable) -> str:
    s = freq.scenario
    lines = [f"#dirng-counts v1 {_header_fields(s)}"]
    for xi, x in enumerate(s.input_tuples()):
        lines.append("pi " + " ".join(map(str, x)) + f" {float(freq.pi.weights[xi])!r}")
    for ai, a in enumerate(s.output_tuples()):
        for xi, x in enumerate(s.input_tuples()):
            lines.append("count " + " ".join(map(str, a + x)) + f" {int(freq.counts[ai, xi])}")
    return "\n".join(lines) + "\n"


def parse_counts(text: str, path="<string>") -> FrequencyTable:
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{_where(path, 1)}: empty file")
    s, _ = _parse_header(lines[0], "counts", path)
    k = s.parties
    weights = np.full(s.n_inputs, np.nan)
    counts = np.zeros(s.shape, dtype=np.int64)
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "pi" and len(parts) == k + 2:
                weights[s.input_index(tuple(int(v) for v in parts[1:k + 1]))] = float(parts[-1])
            elif parts[0] == "count" and len(parts) == 2 * k + 2:
                a = tuple(int(v) for v in parts[1:k + 1])
                x = tuple(int(v) for v in parts[k + 1:2 * k + 1])
                counts[s.output_index(a), s.input_index(x)] = int(parts[-1])
            else:
                raise FormatError(f"{_where(path, no)}: unrecognized line {line!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{_where(path, no)}: {exc}") from None
    if np.any(np.isnan(weights)):
        raise FormatError(f"{_where(path, 1)}: missing pi lines")
    return FrequencyTable(s, counts, InputDistribution(s, weights))


def _dump_table(kind: str, scenario: Scenario, table: np.ndarray, label: str | None) -> str:
    lines = [f"#dirng-{kind} v1 {_header_fields(scenario)}"]
    if label is not None:
        lines.append(f"label {label}")
    for ai, a in enumerate(scenario.output_tuples()):
        for xi, x in enumerate(scenario.input_tuples()):
            lines.append(" ".join(map(str, a + x)) + f" {float(table[ai, xi])!r}")
    return "\n".join(lines) + "\n"


def _parse_table(text: str, kind: str, path) -> tuple[Scenario, np.ndarray, str | None]:
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{_where(path, 1)}: empty file")
    s, _ = _parse_header(lines[0], kind, path)
    k = s.parties
    table = np.full(s.shape, np.nan)
    label = None
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("label ") and kind == "expression":
            label = line[len("label "):]
            continue
        parts = line.split()
        if len(parts) != 2 * k + 1:
            raise FormatError(f"{_where(path, no)}: expected {2 * k} labels and a value")
        try:
            a = tuple(int(v) for v in parts[:k])
            x = tuple(int(v) for v in parts[k:2 * k])
            table[s.output_index(a), s.input_index(x)] = float(parts[-1])
        except ValueError as exc:
            raise FormatError(f"{_where(path, no)}: {exc}") from None
    if np.any(np.isnan(table)):
        raise FormatError(f"{_where(path, 1)}: table is missing entries")
    return s, table, label


def dump_expression(f: BellExpression) -> str:
    return _dump_table("expression", f.scenario, f.coeffs, f.label)


def parse_expression_table(text: str, path="<string>") -> BellExpression:
    s, table, label = _parse_table(text, "expression", path)
    return BellExpression(s, table, label or "")


def dump_behavior(p: Behavior) -> str:
    return _dump_table("behavior", p.scenario, p.table, None)


def parse_behavior(text: str, path="<string>") -> Behavior:
    s, table, _ = _parse_table(text, "behavior", path)
    try:
        return Behavior(s, table)
    except ValueError as exc:
        raise FormatError(f"{_where(path, 1)}: {exc}") from None


def load_data(path) -> Transcript | FrequencyTable:
    """Read a transcript or count table, deciding by the header."""
    text = Path(path).read_text()
    if text.startswith("#dirng-transcript"):
        return parse_transcript(text, path)
    if text.startswith("#dirng-counts"):
        return parse_counts(text, path)
    raise FormatError(f"{_where(path, 1)}: unknown data file header")


def dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
