import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirng.config import ConfigError, ExperimentDocument
from dirng.formats import (FormatError, dump_behavior, dump_counts, dump_expression,
                           dump_transcript, load_data, parse_behavior, parse_counts,
                           parse_expression_table, parse_transcript)
from dirng.quantum import biased_input_distribution, reference_device, sample_counts, sample_transcript
from dirng.scenario import CHSH_SCENARIO, BellExpression, InputDistribution, chsh, tilted_chsh

PI = InputDistribution.uniform(CHSH_SCENARIO)


@given(st.integers(0, 2**32), st.integers(0, 50))
def test_transcript_round_trip(seed, n):
    t = sample_transcript(reference_device(), PI, n, seed)
    back = parse_transcript(dump_transcript(t))
    assert np.array_equal(back.inputs, t.inputs) and np.array_equal(back.outputs, t.outputs)


def test_counts_round_trip(tmp_path):
    freq = sample_counts(reference_device(), biased_input_distribution(10**6), 3 * 10**18, seed=1)
    text = dump_counts(freq)
    back = parse_counts(text)
    assert np.array_equal(back.counts, freq.counts)
    assert np.array_equal(back.pi.weights, freq.pi.weights)
    assert dump_counts(back) == text
    path = tmp_path / "c.txt"
    path.write_text(text)
    assert np.array_equal(load_data(path).counts, freq.counts)


def test_expression_and_behavior_round_trip():
    f = tilted_chsh(0.37, PI)
    g = parse_expression_table(dump_expression(f))
    assert np.array_equal(g.coeffs, f.coeffs) and g.label == f.label
    p = reference_device()
    assert np.array_equal(parse_behavior(dump_behavior(p)).table, p.table)


def test_transcript_errors_have_positions():
    head = "#dirng-transcript v1 inputs=2,2 outputs=2,2 n=2\n"
    with pytest.raises(FormatError, match=r"<string>:3:3: 'x' is not an integer"):
        parse_transcript(head + "0 1\n2 x\n")
    with pytest.raises(FormatError, match=r"<string>:2:1: input 4 out of range"):
        parse_transcript(head + "4 1\n2 1\n")
    with pytest.raises(FormatError, match=r"<string>:2:3: output 9"):
        parse_transcript(head + "0 9\n2 1\n")
    with pytest.raises(FormatError, match="n=2 but 1 rounds"):
        parse_transcript(head + "0 1\n")
    with pytest.raises(FormatError, match=r"<string>:1:1: expected '#dirng-transcript"):
        parse_transcript("#dirng-counts v1 inputs=2,2 outputs=2,2\n")
    with pytest.raises(FormatError, match=r":1:"):
        parse_transcript("#dirng-transcript v1 inputs=2,2 bogus\n")


def test_counts_errors():
    base = dump_counts(sample_counts(reference_device(), PI, 100, seed=0)).splitlines()
    with pytest.raises(FormatError, match="missing pi"):
        parse_counts("\n".join(l for l in base if not l.startswith("pi 0 0")))
    with pytest.raises(FormatError, match=r"<string>:3:"):
        parse_counts("\n".join(base[:2] + ["pi 0 1 zero"] + base[3:]))
    with pytest.raises(FormatError, match="unrecognized"):
        parse_counts("\n".join(base + ["hello"]))
    with pytest.raises(FormatError):
        parse_behavior(dump_behavior(reference_device()).replace("0.4", "0.9", 1))


MINIMAL = {"n": 100000, "expressions": {"set": "chsh"}, "gen_inputs": "all", "thresholds": [10.0]}


def test_document_round_trip():
    doc = ExperimentDocument.from_dict(MINIMAL)
    again = ExperimentDocument.from_dict(json.loads(doc.dumps()))
    assert again == doc and again.dumps() == doc.dumps()
    full = dict(MINIMAL, gen_inputs=[[1, 0]], input_distribution={"kind": "biased"},
                expressions={"list": [{"label": "c", "coeffs": chsh().coeffs.tolist()}]},
                split_policy="one_sided", directions=["lower"], gammas=[6.0], figures=[5])
    doc = ExperimentDocument.from_dict(full)
    assert ExperimentDocument.from_dict(json.loads(doc.dumps())) == doc
    cfg = doc.protocol_config()
    assert cfg.gen_inputs == ((1, 0),) and cfg.gammas == (6.0,)
    assert np.array_equal(cfg.expressions[0].coeffs, chsh().coeffs)


@pytest.mark.parametrize("patch, message", [
    ({"colour": 1}, "unknown field"),
    ({"n": 0}, "positive integer"),
    ({"n": 2**63}, "64-bit"),
    ({"n": 1.5}, "positive integer"),
    ({"thresholds": [2.0, 1.0]}, "increasing"),
    ({"thresholds": 3.0}, "must be a list"),
    ({"gen_inputs": "01"}, "gen_inputs"),
    ({"gen_inputs": [[2, 0]]}, "not an input"),
    ({"device": {"visibility": 1, "angle": 2}}, "device accepts"),
    ({"expressions": {"set": "chsh", "list": []}}, "exactly one"),
    ({"expressions": {"set": "zzz"}}, "unknown expression set"),
    ({"input_distribution": {"kind": "weird"}}, "unknown input distribution"),
    ({"extractor": {"m": 3, "salt": 1}}, "extractor accepts"),
    ({"figures": [3]}, "figures"),
    ({"epsilon": 2.0}, "security"),
])
def test_document_rejects(patch, message):
    with pytest.raises(ConfigError, match=message):
        ExperimentDocument.from_dict(dict(MINIMAL, **patch))


def test_document_missing_and_json_error(tmp_path):
    with pytest.raises(ConfigError, match="missing required field 'thresholds'"):
        ExperimentDocument.from_dict({"n": 5, "expressions": {"set": "chsh"}})
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 5,\n  "thresholds": [1.0,]}')
    with pytest.raises(ConfigError, match=r"bad.json:2:"):
        ExperimentDocument.load(bad)


def test_expression_list_rejects_extra_keys():
    doc = dict(MINIMAL, expressions={"list": [{"coeffs": chsh().coeffs.tolist(), "x": 1}]})
    with pytest.raises(ConfigError, match="only 'label' and 'coeffs'"):
        ExperimentDocument.from_dict(doc)
    doc = dict(MINIMAL, expressions={"list": [{"coeffs": [[1.0]]}]})
    with pytest.raises(ConfigError):
        ExperimentDocument.from_dict(doc)
