"""Report assistant: probability-to-text statements, structured prompt
assembly, and sectioned-report parsing around a vision-language backend."""

import hashlib
import json
import re
from dataclasses import dataclass

from .errors import MissingSection, OutOfRangeProbability
from .protocol import InferenceRequest

# probability bins are left-closed/right-open except the last, which is
# closed on both ends. The misspelling in the second template is carried
# deliberately for fidelity with the deployed text; pass
# corrected_spelling=True for the fixed wording.
_BINS = (
    (0.0, 0.2, "No sign of {disease}"),
    (0.2, 0.5, "Small possibilty of {disease}"),
    (0.5, 0.9, "Likely to have {disease}"),
    (0.9, 1.0, "Definitely have {disease}"),
)
_CORRECTED = {"Small possibilty of {disease}": "Small possibility of "
                                               "{disease}"}

PROMPT_SCAFFOLD = "Findings: {} Impression: {}"
DEFAULT_INSTRUCTION = (
    "You are given a medical image and, above this line, a list of "
    "standardized diagnostic statements (possibly empty). Return a "
    "radiology report with \"Findings\" and \"Impression\" sections in "
    "the format \"" + PROMPT_SCAFFOLD + "\".")
DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 1024


@dataclass(frozen=True)
class FindingStatement:
    disease: str
    probability: float
    text: str


@dataclass(frozen=True)
class PromptBundle:
    image_ref: str           # attachment handle (base64 PNG or path)
    statement_block: str
    instruction: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    @property
    def prompt_text(self):
        if self.statement_block:
            return self.statement_block + "\n" + self.instruction
        return self.instruction

    def prompt_hash(self):
        return hashlib.sha256(self.prompt_text.encode()).hexdigest()


@dataclass(frozen=True)
class Report:
    findings: str
    impression: str
    raw: str

    def __post_init__(self):
        if not self.findings or not self.impression:
            raise ValueError("findings and impression must be non-empty")


def prob_to_text(disease, p, corrected_spelling=False):
    if not 0.0 <= p <= 1.0:
        raise OutOfRangeProbability(f"p={p}")
    for lo, hi, template in _BINS:
        last = hi == 1.0
        if lo <= p < hi or (last and p == hi):
            if corrected_spelling:
                template = _CORRECTED.get(template, template)
            return FindingStatement(disease=disease, probability=p,
                                    text=template.format(disease=disease))
    raise AssertionError("unreachable: bins cover [0, 1]")


def findings_block(result, corrected_spelling=False):
    """One statement per disease, in label order, newline-separated."""
    lines = [prob_to_text(d, p, corrected_spelling).text
             for d, p in result.probabilities.items()]
    return "\n".join(lines)


def build_prompt(image_ref, block, instruction=DEFAULT_INSTRUCTION,
                 temperature=DEFAULT_TEMPERATURE,
                 max_tokens=DEFAULT_MAX_TOKENS):
    if PROMPT_SCAFFOLD not in instruction:
        raise ValueError("instruction must contain the report scaffold "
                         f"{PROMPT_SCAFFOLD!r}")
    return PromptBundle(image_ref=image_ref, statement_block=block,
                        instruction=instruction, temperature=temperature,
                        max_tokens=max_tokens)


def parse_report(raw):
    """Case-insensitive split on the Findings:/Impression: markers."""
    fm = re.search(r"findings\s*:", raw, re.IGNORECASE)
    if fm is None:
        raise MissingSection("findings")
    im = re.search(r"impression\s*:", raw[fm.end():], re.IGNORECASE)
    if im is None:
        raise MissingSection("impression")
    findings = raw[fm.end():fm.end() + im.start()].strip()
    impression = raw[fm.end() + im.end():].strip()
    if not findings:
        raise MissingSection("findings")
    if not impression:
        raise MissingSection("impression")
    return Report(findings=findings, impression=impression, raw=raw)


def render_report(report):
    return f"Findings: {report.findings} Impression: {report.impression}"


def generate_report(bundle, vlm_client, model_id="stub-template-vlm"):
    """One generate call; the response must parse into both sections."""
    resp = vlm_client.infer(InferenceRequest(
        task="generate", model_id=model_id,
        image_b64=bundle.image_ref, text=bundle.prompt_text,
        params={"temperature": bundle.temperature,
                "max_tokens": bundle.max_tokens}))
    return parse_report(resp.text or "")


def report_sidecar(study_id, model_id, bundle):
    """Metadata record persisted next to each report artifact."""
    return json.dumps({
        "study_id": study_id,
        "model_id": model_id,
        "temperature": bundle.temperature,
        "max_tokens": bundle.max_tokens,
        "prompt_hash": bundle.prompt_hash(),
    }, sort_keys=True)
