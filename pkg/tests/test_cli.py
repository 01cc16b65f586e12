import json
import struct
from pathlib import Path

import numpy as np
import pytest

from radeval.cli import build_parser, main

FIXTURES = Path(__file__).parent / "fixtures"

# Frozen per-subcommand option surface; additions here are deliberate API changes.
EXPECTED_FLAGS = {
    "parse": {"--manifest", "--headers", "--out", "--pretty", "-h", "--help"},
    "synth": {"--labels", "--seed", "--templates", "--out", "--pretty", "-h", "--help"},
    "lexical": {"--manifest", "--out", "--pretty", "-h", "--help"},
    "labels": {"--manifest", "--lexicon", "--out", "--pretty", "-h", "--help"},
    "judge": {
        "--manifest", "--transcript", "--model", "--endpoint", "--few-shot",
        "--cache-dir", "--jobs", "--max-retries", "--temperature", "--timeout",
        "--out", "--pretty", "-h", "--help",
    },
    "agree": {"--panel", "--scores", "--statistic", "--out", "--pretty", "-h", "--help"},
    "retrieve": {
        "--images", "--texts", "--image-ids", "--text-ids", "--ks", "--direction",
        "--out", "--pretty", "-h", "--help",
    },
    "attend": {
        "--tensor", "--word", "--layer-mode", "--head-mode", "--skip-leading-tokens",
        "--png", "--background", "--out", "--pretty", "-h", "--help",
    },
}


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def run_json(argv, capsys):
    code, out = run(argv, capsys)
    return code, json.loads(out)


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


def test_subcommand_flag_surface():
    parser = build_parser()
    actions = {
        a for a in parser._actions if hasattr(a, "choices") and isinstance(a.choices, dict)
    }
    sub = actions.pop()
    assert set(sub.choices) == set(EXPECTED_FLAGS)
    for name, sp in sub.choices.items():
        flags = {s for a in sp._actions for s in a.option_strings}
        assert flags == EXPECTED_FLAGS[name], name


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    capsys.readouterr()
    for name in EXPECTED_FLAGS:
        assert main([name, "--help"]) == 0
        capsys.readouterr()


def test_usage_errors_exit_two(capsys):
    assert main([]) == 2
    assert main(["not-a-command"]) == 2
    assert main(["parse"]) == 2  # missing --manifest
    capsys.readouterr()


def test_parse_command(tmp_path, capsys):
    manifest = tmp_path / "reports.jsonl"
    write_jsonl(manifest, [
        {"report_id": "r1", "raw_text": "INDICATION: cough\nFINDINGS: clear lungs"},
    ])
    code, payload = run_json(["parse", "--manifest", str(manifest)], capsys)
    assert code == 0
    assert payload["failures"] == []
    rep = payload["reports"][0]
    assert rep["report_id"] == "r1"
    assert rep["indication"] == "cough"
    assert rep["findings"] == "clear lungs"


def test_parse_command_reports_failures(tmp_path, capsys):
    manifest = tmp_path / "reports.jsonl"
    write_jsonl(manifest, [
        {"report_id": "good", "raw_text": "IMPRESSION: fine"},
        {"report_id": "bad", "raw_text": "no headers in here"},
        {"raw_text": "missing id"},
    ])
    code, payload = run_json(["parse", "--manifest", str(manifest)], capsys)
    assert code == 1
    assert len(payload["reports"]) == 1
    assert len(payload["failures"]) == 2
    assert payload["failures"][0]["report_id"] == "bad"


def test_synth_command_deterministic(tmp_path, capsys):
    labels = tmp_path / "labels.jsonl"
    write_jsonl(labels, [
        {"report_id": "a", "labels": {"Edema": "Positive"}},
        {"report_id": "b", "labels": {"No Finding": "Positive"}},
    ])
    out1 = tmp_path / "one.json"
    out2 = tmp_path / "two.json"
    assert main(["synth", "--labels", str(labels), "--seed", "3", "--out", str(out1)]) == 0
    assert main(["synth", "--labels", str(labels), "--seed", "3", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["seed"] == 3
    assert [r["report_id"] for r in payload["reports"]] == ["a", "b"]
    assert "edema" in payload["reports"][0]["findings"]
    # nothing went to stdout with --out
    assert capsys.readouterr().out == ""


def test_synth_command_bad_condition(tmp_path, capsys):
    labels = tmp_path / "labels.jsonl"
    write_jsonl(labels, [{"report_id": "a", "labels": {"Bogus": "Positive"}}])
    code, payload = run_json(["synth", "--labels", str(labels)], capsys)
    assert code == 1
    assert payload["reports"] == []
    assert "Bogus" in payload["failures"][0]["error"]


def test_lexical_command(tmp_path, capsys):
    manifest = tmp_path / "pairs.jsonl"
    write_jsonl(manifest, [
        {"report_id": "p1", "candidate": "no effusion", "reference": "no pleural effusion"},
        {"report_id": "p2", "candidate": "clear", "reference": "clear"},
    ])
    code, payload = run_json(["lexical", "--manifest", str(manifest)], capsys)
    assert code == 0
    rows = {r["report_id"]: r for r in payload["rows"]}
    assert rows["p1"]["bleu_1"] == pytest.approx(0.6065306597126334)
    assert rows["p1"]["rouge_l_f"] == pytest.approx(0.8)
    assert rows["p2"]["rouge_l_f"] == 1.0
    assert payload["summary"]["bleu_1"] == pytest.approx((0.6065306597126334 + 1.0) / 2)


def test_lexical_command_missing_field(tmp_path, capsys):
    manifest = tmp_path / "pairs.jsonl"
    write_jsonl(manifest, [{"report_id": "p1", "candidate": "x"}])
    code, payload = run_json(["lexical", "--manifest", str(manifest)], capsys)
    assert code == 1
    assert payload["rows"] == []


def test_labels_command_with_label_dicts(tmp_path, capsys):
    from radeval.core import CONDITIONS

    blank = {name: "Blank" for name in CONDITIONS}
    manifest = tmp_path / "labels.jsonl"
    write_jsonl(manifest, [
        {
            "report_id": "r1",
            "pred_labels": {**blank, "Edema": "Positive"},
            "ref_labels": {**blank, "Edema": "Positive"},
        },
    ])
    code, payload = run_json(["labels", "--manifest", str(manifest)], capsys)
    assert code == 0
    f1 = payload["f1"]["uncertain_as_negative"]["all_14"]
    assert f1["micro_f1"] == 1.0
    assert payload["labels"][0]["pred"]["Edema"] == "Positive"


def test_labels_command_surrogate_path(tmp_path, capsys):
    manifest = tmp_path / "texts.jsonl"
    write_jsonl(manifest, [
        {
            "report_id": "r1",
            "candidate": "There is evidence of cardiomegaly.",
            "reference": "Cardiomegaly is present.",
        },
    ])
    code, payload = run_json(["labels", "--manifest", str(manifest)], capsys)
    assert code == 0
    assert payload["labels"][0]["pred"]["Cardiomegaly"] == "Positive"
    assert payload["f1"]["uncertain_as_positive"]["top_5"]["micro_f1"] == 1.0


def test_judge_transcript_replay(capsys):
    code, payload = run_json(
        ["judge", "--transcript", str(FIXTURES / "verdicts.jsonl")], capsys
    )
    assert code == 0
    assert payload["aggregate"]["n"] == 4
    assert payload["aggregate"]["mean_total"] == pytest.approx(1.75)
    assert payload["aggregate"]["pct_error_free_significant"] == pytest.approx(50.0)
    assert len(payload["verdicts"]) == 4


def test_judge_live_requires_endpoint(tmp_path, capsys):
    manifest = tmp_path / "pairs.jsonl"
    write_jsonl(manifest, [{"report_id": "p", "candidate": "c", "reference": "r"}])
    assert main(["judge", "--manifest", str(manifest)]) == 2
    assert main(["judge"]) == 2
    capsys.readouterr()


def test_judge_transport_failure_exits_three(tmp_path, capsys):
    manifest = tmp_path / "pairs.jsonl"
    write_jsonl(manifest, [{"report_id": "p", "candidate": "c", "reference": "r"}])
    code = main([
        "judge", "--manifest", str(manifest),
        "--endpoint", "http://127.0.0.1:1/chat",
        "--max-retries", "0",
    ])
    assert code == 3
    capsys.readouterr()


def test_agree_command(capsys):
    code, payload = run_json([
        "agree",
        "--panel", str(FIXTURES / "rater_panel.jsonl"),
        "--scores", str(FIXTURES / "judge_scores.json"),
    ], capsys)
    assert code == 0
    assert payload["statistic"] == "total"
    assert payload["n_reports"] == 2 and payload["n_raters"] == 3
    rows = {r["rater_id"]: r for r in payload["loo"]}
    assert rows["rater-1"]["mad_rater"] == pytest.approx(1.5)
    assert rows["rater-1"]["mad_judge"] == pytest.approx(0.5)
    # infinite t statistics serialize as null in strict JSON
    assert rows["rater-1"]["t"] is None
    assert rows["rater-1"]["p_two_sided"] == 0.0
    assert rows["rater-3"]["t"] == 0.0
    assert payload["tau_b"]["judge_vs_rater_mean"] == pytest.approx(1.0)
    assert payload["tau_b"]["judge_vs_raters"]["rater-2"] == pytest.approx(1.0)


def test_agree_significant_statistic(capsys):
    code, payload = run_json([
        "agree",
        "--panel", str(FIXTURES / "rater_panel.jsonl"),
        "--scores", str(FIXTURES / "judge_scores.json"),
        "--statistic", "significant",
    ], capsys)
    assert code == 0
    assert payload["statistic"] == "significant"


def test_retrieve_command(tmp_path, capsys):
    imgs = tmp_path / "imgs.jsonl"
    txts = tmp_path / "txts.jsonl"
    write_jsonl(imgs, [
        {"id": f"i{k}", "vector": v}
        for k, v in enumerate([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]])
    ])
    write_jsonl(txts, [
        {"id": f"t{k}", "vector": v}
        for k, v in enumerate([[0.9, 0.1], [0.1, 0.9], [0.6, 0.6]])
    ])
    code, payload = run_json([
        "retrieve", "--images", str(imgs), "--texts", str(txts), "--ks", "1,3",
    ], capsys)
    assert code == 0
    assert payload["n"] == 3
    assert payload["recall"]["image_to_text"]["3"] == 1.0
    assert payload["recall"]["text_to_image"]["1"] == 1.0
    code, payload = run_json([
        "retrieve", "--images", str(imgs), "--texts", str(txts),
        "--ks", "1", "--direction", "image_to_text",
    ], capsys)
    assert code == 0
    assert list(payload["recall"]) == ["image_to_text"]


def test_retrieve_binary_needs_ids(tmp_path, capsys):
    bin_path = tmp_path / "emb.bin"
    bin_path.write_bytes(struct.pack("<4sIII", b"ATTN", 1, 1, 2) + b"\x00" * 8)
    code = main(["retrieve", "--images", str(bin_path), "--texts", str(bin_path)])
    assert code == 1
    capsys.readouterr()


def test_attend_command(tmp_path, capsys):
    from radeval.alignment import GRID_TOKENS

    layers, heads = 2, 2
    data = np.zeros((layers, heads, GRID_TOKENS), dtype="<f4")
    data[:, :, 38] = 1.0
    tensor_path = tmp_path / "attn.bin"
    tensor_path.write_bytes(
        struct.pack("<4sIII", b"ATTN", layers, heads, GRID_TOKENS) + data.tobytes()
    )
    png = tmp_path / "heat.png"
    code, payload = run_json([
        "attend", "--tensor", str(tensor_path), "--word", "effusion",
        "--png", str(png),
    ], capsys)
    assert code == 0
    assert payload["word"] == "effusion"
    assert payload["layers"] == 2 and payload["heads"] == 2
    assert payload["argmax"] == [1, 1]
    assert png.exists()
    assert (tmp_path / "heat.json").exists()
    assert len(payload["grid"]) == 37


def test_attend_rejects_bad_mode(tmp_path, capsys):
    from radeval.alignment import GRID_TOKENS

    data = np.zeros((1, 1, GRID_TOKENS), dtype="<f4")
    tensor_path = tmp_path / "attn.bin"
    tensor_path.write_bytes(
        struct.pack("<4sIII", b"ATTN", 1, 1, GRID_TOKENS) + data.tobytes()
    )
    assert main(["attend", "--tensor", str(tensor_path), "--layer-mode", "median"]) == 1
    capsys.readouterr()


def test_pretty_output_is_text_not_json(tmp_path, capsys):
    labels = tmp_path / "labels.jsonl"
    write_jsonl(labels, [{"report_id": "a", "labels": {"Edema": "Positive"}}])
    code, out = run(["synth", "--labels", str(labels), "--pretty"], capsys)
    assert code == 0
    with pytest.raises(json.JSONDecodeError):
        json.loads(out)
    assert "report_id" in out or "reports" in out


def test_missing_input_file_exits_one(capsys):
    assert main(["parse", "--manifest", "/nonexistent/reports.jsonl"]) == 1
    capsys.readouterr()
