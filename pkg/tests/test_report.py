"""Probability-to-text binning, prompt assembly, and report parsing."""

import base64
import json

import numpy as np
import pytest

from screendx.errors import MissingSection, OutOfRangeProbability
from screendx.imaging import ImageBuffer, encode_png
from screendx.protocol import InProcessClient
from screendx.report import (DEFAULT_INSTRUCTION, DEFAULT_MAX_TOKENS,
                             DEFAULT_TEMPERATURE, PROMPT_SCAFFOLD,
                             build_prompt, findings_block, generate_report,
                             parse_report, prob_to_text, render_report,
                             report_sidecar)
from screendx.routing import DiagnosticResult
from screendx.stubs import stub_suite

EPS = 1e-12


def test_bins_boundaries_exhaustive():
    cases = {
        0.0: "No sign of pneumonia",
        0.2 - EPS: "No sign of pneumonia",
        0.2: "Small possibilty of pneumonia",
        0.5 - EPS: "Small possibilty of pneumonia",
        0.5: "Likely to have pneumonia",
        0.9 - EPS: "Likely to have pneumonia",
        0.9: "Definitely have pneumonia",
        1.0: "Definitely have pneumonia",
    }
    for p, text in cases.items():
        stmt = prob_to_text("pneumonia", p)
        assert stmt.text == text, f"p={p}"
        assert stmt.disease == "pneumonia"
        assert stmt.probability == p


def test_corrected_spelling_variant():
    assert prob_to_text("edema", 0.3).text == "Small possibilty of edema"
    assert (prob_to_text("edema", 0.3, corrected_spelling=True).text
            == "Small possibility of edema")


def test_prob_out_of_range():
    for p in (-0.1, 1.1):
        with pytest.raises(OutOfRangeProbability):
            prob_to_text("x", p)


def test_scaffold_and_defaults():
    assert PROMPT_SCAFFOLD == "Findings: {} Impression: {}"
    assert PROMPT_SCAFFOLD in DEFAULT_INSTRUCTION
    assert DEFAULT_TEMPERATURE == 0.2
    assert DEFAULT_MAX_TOKENS == 1024


def test_findings_block_preserves_label_order():
    result = DiagnosticResult(
        model_id="m", probabilities={"zeta": 0.1, "alpha": 0.95})
    block = findings_block(result)
    assert block.split("\n") == ["No sign of zeta",
                                 "Definitely have alpha"]


def test_build_prompt_requires_scaffold():
    with pytest.raises(ValueError):
        build_prompt(image_ref="x", block="", instruction="no scaffold here")
    bundle = build_prompt(image_ref="x", block="line")
    assert bundle.prompt_text == "line\n" + DEFAULT_INSTRUCTION
    empty = build_prompt(image_ref="x", block="")
    assert empty.prompt_text == DEFAULT_INSTRUCTION


def test_parse_and_render_round_trip():
    raw = "Findings: all clear today Impression: nothing acute"
    rep = parse_report(raw)
    assert rep.findings == "all clear today"
    assert rep.impression == "nothing acute"
    assert render_report(rep) == raw


def test_parse_report_case_insensitive_and_errors():
    rep = parse_report("FINDINGS: a IMPRESSION: b")
    assert (rep.findings, rep.impression) == ("a", "b")
    with pytest.raises(MissingSection):
        parse_report("Impression: only")
    with pytest.raises(MissingSection):
        parse_report("Findings: only")
    with pytest.raises(MissingSection):
        parse_report("Findings: Impression: b")  # empty findings


def test_generate_report_with_stub_vlm():
    client = InProcessClient(stub_suite())
    img = encode_png(ImageBuffer(np.full((4, 4, 1), 0.5)), bits=8)
    bundle = build_prompt(image_ref=img, block="No sign of pneumonia")
    rep = generate_report(bundle, client)
    assert rep.findings == "No sign of pneumonia"
    assert "1 finding statement(s)" in rep.impression


def test_generate_report_empty_block():
    client = InProcessClient(stub_suite())
    img = encode_png(ImageBuffer(np.full((4, 4, 1), 0.5)), bits=8)
    bundle = build_prompt(image_ref=img, block="")
    rep = generate_report(bundle, client)
    assert rep.findings == "No diagnostic priors were provided for this study."


def test_report_sidecar_fields():
    bundle = build_prompt(image_ref="aGk=", block="x")
    side = json.loads(report_sidecar("0001", "model-z", bundle))
    assert side["study_id"] == "0001"
    assert side["model_id"] == "model-z"
    assert side["temperature"] == DEFAULT_TEMPERATURE
    assert side["max_tokens"] == DEFAULT_MAX_TOKENS
    assert side["prompt_hash"] == bundle.prompt_hash()
    assert len(side["prompt_hash"]) == 64


def test_prompt_hash_depends_on_block_only_through_text():
    a = build_prompt(image_ref="x", block="one")
    b = build_prompt(image_ref="totally-different-image", block="one")
    assert a.prompt_hash() == b.prompt_hash()
    c = build_prompt(image_ref="x", block="two")
    assert a.prompt_hash() != c.prompt_hash()
