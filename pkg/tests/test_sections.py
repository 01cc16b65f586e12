import json
import random
from pathlib import Path

import pytest

from radeval.core import MalformedResponse, Source
from radeval.sections import (
    DEFAULT_HEADER_MAP,
    DEFAULT_STRUCTURING_EXAMPLES,
    HeaderMap,
    NoSectionsFound,
    build_structuring_prompt,
    extract_sections,
    normalize,
    parse_structuring_response,
    reassemble,
    strip_code_fence,
)

from oracles import random_sentence

FIXTURES = Path(__file__).parent / "fixtures"


def test_normalize_collapses_whitespace():
    raw = "EXAM:\tchest   xr\r\nsecond  line\r\n\r\nIMPRESSION:  clear\n"
    out = normalize(raw)
    assert out == "EXAM: chest xr second line\nIMPRESSION: clear"


def test_normalize_keeps_banner_and_underscores():
    raw = "                 FINAL REPORT\n INDICATION:  ___ with cough\n"
    assert normalize(raw) == "FINAL REPORT\nINDICATION: ___ with cough"


def test_normalize_breaks_only_before_headers():
    raw = "INDICATION: cough\nand fever\nFINDINGS: lungs are\nclear\n"
    out = normalize(raw)
    assert out.count("\n") == 1
    assert out.splitlines() == [
        "INDICATION: cough and fever",
        "FINDINGS: lungs are clear",
    ]


def test_extract_ileus_fixture():
    # A report with a duplicated indication phrase, no findings section, and
    # hard-wrapped impression text.
    raw = (FIXTURES / "ileus_report.txt").read_text(encoding="utf-8")
    rep = extract_sections(normalize(raw), report_id="ileus")
    assert rep.source is Source.RULE_EXTRACTED
    assert rep.examination is None
    assert rep.findings is None
    assert rep.indication == (
        "___ year old woman with likely ileus after cystectomy // "
        "NGT placement confirmation NGT placement confirmation"
    )
    assert rep.impression == (
        "No previous images. Nasogastric tube extends to the mid body of the "
        "stomach, be for coiling on itself so that the tip lies close to the "
        "esophagogastric junction. For more optimal positioning, the to would "
        "have to be pulled back almost 10 cm and then hopefully redirected "
        "toward the lower stomach. Cardiac silhouette is within normal limits "
        "and there is no vascular congestion, pleural effusion, or acute focal "
        "pneumonia."
    )


def test_extract_alias_headers():
    text = normalize("STUDY: PA chest.\nHISTORY: Fever.\nCONCLUSION: Normal.")
    rep = extract_sections(text)
    assert rep.examination == "PA chest."
    assert rep.indication == "Fever."
    assert rep.impression == "Normal."


def test_extract_case_insensitive_and_first_wins():
    text = normalize("Findings: first body.\nFINDINGS: second body.")
    rep = extract_sections(text)
    assert rep.findings == "first body."


def test_extract_strips_list_prefixes():
    rep = extract_sections("IMPRESSION: 1. No pneumothorax.")
    assert rep.impression == "No pneumothorax."
    rep = extract_sections("IMPRESSION: - 2) No effusion.")
    assert rep.impression == "No effusion."


def test_extract_nan_and_empty_become_absent():
    rep = extract_sections("FINDINGS: nan\nIMPRESSION: ok")
    assert rep.findings is None
    assert rep.impression == "ok"
    rep = extract_sections("FINDINGS:\nIMPRESSION: ok")
    assert rep.findings is None


def test_extract_requires_some_header():
    with pytest.raises(NoSectionsFound):
        extract_sections("The lungs are clear. No header here.")


def test_prose_mention_without_colon_is_not_a_header():
    rep = extract_sections("FINDINGS: history of smoking is noted.")
    assert rep.findings == "history of smoking is noted."
    assert rep.indication is None


def test_header_map_validation():
    with pytest.raises(ValueError):
        HeaderMap({"findings": ("FINDINGS",)})
    base = {s: tuple(a) for s, a in DEFAULT_HEADER_MAP.aliases.items()}
    clash = dict(base)
    clash["impression"] = clash["impression"] + ("FINDINGS",)
    with pytest.raises(ValueError):
        HeaderMap(clash)
    lower = dict(base)
    lower["findings"] = ("findings",)
    with pytest.raises(ValueError):
        HeaderMap(lower)


def test_header_map_longest_alias_wins():
    rep = extract_sections("REASON FOR EXAMINATION: chest pain\nFINDINGS: clear")
    assert rep.indication == "chest pain"


def test_header_map_from_json(tmp_path):
    path = tmp_path / "headers.json"
    path.write_text(json.dumps({
        "examination": ["EXAM"],
        "indication": ["WHY"],
        "findings": ["SEEN"],
        "impression": ["VERDICT"],
    }), encoding="utf-8")
    headers = HeaderMap.from_json(path)
    rep = extract_sections("WHY: cough\nVERDICT: clear", headers)
    assert rep.indication == "cough"
    assert rep.impression == "clear"
    with pytest.raises(NoSectionsFound):
        extract_sections("INDICATION: cough", headers)


def test_reassemble_round_trip_random():
    rng = random.Random(77)
    sections = ("examination", "indication", "findings", "impression")
    for _ in range(200):
        present = [s for s in sections if rng.random() < 0.6]
        if not present:
            present = ["findings"]
        bodies = {s: random_sentence(rng, 1, 8) + "." for s in present}
        lines = []
        for s in present:
            alias = rng.choice(DEFAULT_HEADER_MAP.aliases[s])
            lines.append(f"{alias}: {bodies[s]}")
        rep = extract_sections(normalize("\n".join(lines)))
        assert rep.present_sections() == bodies
        again = extract_sections(normalize(reassemble(rep)))
        assert again.present_sections() == bodies


def test_structuring_prompt_shape():
    payload = build_structuring_prompt("INDICATION: cough\nFINDINGS: clear")
    assert "never add information" in payload.system
    assert payload.user.rstrip().endswith("OUTPUT:")
    assert payload.user.count("INPUT:") == len(DEFAULT_STRUCTURING_EXAMPLES) + 1
    assert "Remember to remove any numbering or bullets." in payload.user
    assert set(payload.expected_schema) == {
        "EXAMINATION", "INDICATION", "FINDINGS", "IMPRESSION",
    }
    with pytest.raises(ValueError):
        build_structuring_prompt("   ")
    with pytest.raises(ValueError):
        build_structuring_prompt("x", examples=[])


def test_default_example_parses_as_valid_response():
    # The worked example embedded in the prompt must satisfy the parser.
    _, example_output = DEFAULT_STRUCTURING_EXAMPLES[0]
    rep = parse_structuring_response(example_output)
    assert rep.examination == "XR CHEST AP PORTABLE."
    assert rep.impression is None
    assert "10mm" in rep.findings


def test_parse_structuring_response():
    reply = json.dumps({
        "EXAMINATION": None,
        "INDICATION": "Cough.",
        "FINDINGS": "Lungs clear.",
        "IMPRESSION": "nan",
    })
    rep = parse_structuring_response(reply, report_id="r9")
    assert rep.id == "r9"
    assert rep.source is Source.GPT_STRUCTURED
    assert rep.examination is None
    assert rep.impression is None
    assert rep.findings == "Lungs clear."


def test_parse_structuring_response_fenced():
    inner = json.dumps({k: None for k in ("EXAMINATION", "INDICATION", "FINDINGS", "IMPRESSION")})
    rep = parse_structuring_response(f"```json\n{inner}\n```")
    assert rep.present_sections() == {}
    assert strip_code_fence("```\nplain\n```") == "plain"
    assert strip_code_fence("no fence") == "no fence"


def test_parse_structuring_response_rejects_malformed():
    with pytest.raises(MalformedResponse):
        parse_structuring_response("not json at all")
    with pytest.raises(MalformedResponse):
        parse_structuring_response(json.dumps(["EXAMINATION"]))
    with pytest.raises(MalformedResponse):
        parse_structuring_response(json.dumps({"EXAMINATION": None}))
    with pytest.raises(MalformedResponse):
        parse_structuring_response(json.dumps({
            "EXAMINATION": 3,
            "INDICATION": None,
            "FINDINGS": None,
            "IMPRESSION": None,
        }))
