"""Command-line front end.

Every subcommand reads JSON/JSONL inputs, emits a JSON payload to stdout or
``--out``, and optionally prints a human-readable table with ``--pretty``.
Exit codes: 0 success, 1 data or validation error, 2 usage error, 3 transport
failure or judge retry exhaustion.  Reruns with identical inputs, seed, and a
warm cache produce byte-identical output files; secrets travel only through
the environment.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import agreement, alignment, judge as judge_mod, labels as labels_mod
from .core import LabelVector, read_jsonl
from .lexical import bleu, rouge_l, tokenize
from .sections import DEFAULT_HEADER_MAP, HeaderMap, NoSectionsFound, extract_sections, normalize
from .synthesis import DEFAULT_TEMPLATE_BANK, TemplateBank, synthesize_report

__all__ = ["main", "entrypoint", "build_parser"]

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3


class _DataError(Exception):
    """Internal: wraps failures that should exit with code 1."""


# ---------------------------------------------------------------------------
# Output plumbing


def _finite(value: Any) -> Any:
    # Strict JSON has no inf/nan; degenerate statistics serialize as null.
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Mapping):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def _dump(payload: Mapping[str, Any]) -> str:
    return json.dumps(_finite(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _pretty_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _pretty_table(rows: Sequence[Mapping[str, Any]]) -> list[str]:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    cells = [[_pretty_value(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return lines


def _pretty_lines(payload: Any, indent: str = "") -> list[str]:
    lines: list[str] = []
    if isinstance(payload, Mapping):
        for key, value in payload.items():
            if isinstance(value, Mapping) or (
                isinstance(value, list) and value and isinstance(value[0], Mapping)
            ):
                lines.append(f"{indent}{key}:")
                lines.extend(_pretty_lines(value, indent + "  "))
            else:
                lines.append(f"{indent}{key}: {_pretty_value(value)}")
    elif isinstance(payload, list) and payload and isinstance(payload[0], Mapping):
        flat = all(
            not isinstance(v, (Mapping, list)) for row in payload for v in row.values()
        )
        if flat:
            lines.extend(indent + line for line in _pretty_table(payload))
        else:
            for i, row in enumerate(payload):
                lines.append(f"{indent}- [{i}]")
                lines.extend(_pretty_lines(row, indent + "  "))
    else:
        lines.append(f"{indent}{_pretty_value(payload)}")
    return lines


def _emit(payload: Mapping[str, Any], args: argparse.Namespace) -> None:
    text = _dump(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.pretty:
        print("\n".join(_pretty_lines(payload)))
    elif not args.out:
        sys.stdout.write(text)


def _add_io_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--out", help="write the JSON payload to this file instead of stdout")
    sp.add_argument("--pretty", action="store_true", help="print a human-readable table")


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_parse(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    headers = HeaderMap.from_json(args.headers) if args.headers else DEFAULT_HEADER_MAP
    reports = []
    failures = []
    for i, rec in enumerate(read_jsonl(args.manifest)):
        rid = rec.get("report_id")
        if not isinstance(rid, str) or not rid.strip():
            failures.append({"index": i, "report_id": None, "error": "missing report_id"})
            continue
        raw = rec.get("raw_text")
        if not isinstance(raw, str) or not raw.strip():
            failures.append({"index": i, "report_id": rid, "error": "missing raw_text"})
            continue
        try:
            report = extract_sections(normalize(raw, headers), headers, report_id=rid)
        except NoSectionsFound as exc:
            failures.append({"index": i, "report_id": rid, "error": str(exc)})
            continue
        reports.append(report.to_dict())
    payload = {"reports": reports, "failures": failures}
    return payload, EXIT_DATA if failures else EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    bank = TemplateBank.from_json(args.templates) if args.templates else DEFAULT_TEMPLATE_BANK
    reports = []
    failures = []
    for i, rec in enumerate(read_jsonl(args.labels)):
        rid = rec.get("report_id")
        if not isinstance(rid, str) or not rid.strip():
            failures.append({"index": i, "report_id": None, "error": "missing report_id"})
            continue
        try:
            vector = LabelVector.from_partial(rec.get("labels") or {})
            report = synthesize_report(vector, seed=args.seed, bank=bank, report_id=rid)
        except ValueError as exc:
            failures.append({"index": i, "report_id": rid, "error": str(exc)})
            continue
        reports.append(report.to_dict())
    payload = {"seed": args.seed, "reports": reports, "failures": failures}
    return payload, EXIT_DATA if failures else EXIT_OK


def _require_pair(rec: Mapping[str, Any]) -> tuple[str, str]:
    cand = rec.get("candidate")
    ref = rec.get("reference")
    if not isinstance(cand, str) or not cand.strip():
        raise _DataError("missing candidate text")
    if not isinstance(ref, str) or not ref.strip():
        raise _DataError("missing reference text")
    return cand, ref


def _cmd_lexical(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    rows = []
    failures = []
    for i, rec in enumerate(read_jsonl(args.manifest)):
        rid = rec.get("report_id") or f"record-{i}"
        try:
            cand, ref = _require_pair(rec)
            cand_tokens = tokenize(cand)
            ref_tokens = tokenize(ref)
            if not ref_tokens:
                raise _DataError("reference tokenizes to nothing")
            rouge = (
                rouge_l(cand_tokens, ref_tokens)
                if cand_tokens
                else {"precision": 0.0, "recall": 0.0, "f": 0.0}
            )
            rows.append(
                {
                    "report_id": rid,
                    "bleu_1": bleu(cand_tokens, ref_tokens, max_n=1),
                    "bleu_4": bleu(cand_tokens, ref_tokens, max_n=4),
                    "rouge_l_precision": rouge["precision"],
                    "rouge_l_recall": rouge["recall"],
                    "rouge_l_f": rouge["f"],
                }
            )
        except _DataError as exc:
            failures.append({"index": i, "report_id": rid, "error": str(exc)})
    payload: dict[str, Any] = {"rows": rows, "failures": failures}
    if rows:
        payload["summary"] = {
            key: sum(r[key] for r in rows) / len(rows)
            for key in ("bleu_1", "bleu_4", "rouge_l_f")
        }
    return payload, EXIT_DATA if failures else EXIT_OK


def _cmd_labels(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    lexicon = labels_mod.load_lexicon(args.lexicon) if args.lexicon else None
    preds: list[LabelVector] = []
    refs: list[LabelVector] = []
    per_report = []
    failures = []
    for i, rec in enumerate(read_jsonl(args.manifest)):
        rid = rec.get("report_id") or f"record-{i}"
        try:
            if rec.get("pred_labels") is not None and rec.get("ref_labels") is not None:
                pred = LabelVector.from_dict(rec["pred_labels"])
                ref = LabelVector.from_dict(rec["ref_labels"])
            else:
                cand, reference = _require_pair(rec)
                pred = labels_mod.surrogate_label(cand, lexicon)
                ref = labels_mod.surrogate_label(reference, lexicon)
        except (_DataError, ValueError) as exc:
            failures.append({"index": i, "report_id": rid, "error": str(exc)})
            continue
        preds.append(pred)
        refs.append(ref)
        per_report.append({"report_id": rid, "pred": pred.to_dict(), "ref": ref.to_dict()})
    if not preds:
        raise _DataError("no usable records in manifest")
    f1: dict[str, Any] = {}
    for policy in (labels_mod.UNCERTAIN_AS_NEGATIVE, labels_mod.UNCERTAIN_AS_POSITIVE):
        f1[policy] = {
            "all_14": labels_mod.f1_scores(preds, refs, policy, labels_mod.ALL_14),
            "top_5": labels_mod.f1_scores(preds, refs, policy, labels_mod.TOP_5),
        }
    payload = {"f1": f1, "labels": per_report, "failures": failures}
    return payload, EXIT_DATA if failures else EXIT_OK


def _cmd_judge(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    if args.transcript:
        verdicts = judge_mod.read_transcript(args.transcript)
    else:
        few_shot = (
            judge_mod.load_few_shot(args.few_shot)
            if args.few_shot
            else judge_mod.default_few_shot()
        )
        config = judge_mod.JudgeConfig(
            model_name=args.model,
            few_shot=few_shot,
            temperature=args.temperature,
            max_retries=args.max_retries,
            endpoint_url=args.endpoint,
            timeout=args.timeout,
            cache_dir=args.cache_dir,
        )
        client = judge_mod.HttpJudgeClient(args.endpoint, timeout=args.timeout)
        pairs = []
        for i, rec in enumerate(read_jsonl(args.manifest)):
            rid = rec.get("report_id") or f"record-{i}"
            cand, ref = _require_pair(rec)
            pairs.append((str(rid), cand, ref))
        verdicts = judge_mod.judge_many(client, pairs, config, jobs=args.jobs)
    payload = {
        "aggregate": judge_mod.aggregate(verdicts),
        "verdicts": [v.to_dict() for v in verdicts],
    }
    return payload, EXIT_OK


def _cmd_agree(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    from .core import RaterPanel

    panel = RaterPanel.read_jsonl(args.panel)
    with open(args.scores, encoding="utf-8") as fh:
        raw = json.load(fh)
    judge_scores = agreement.ScoreVector(
        values=tuple(float(v) for v in raw["values"]),
        report_ids=tuple(raw["report_ids"]) if raw.get("report_ids") else None,
    )
    loo = agreement.loo_mad(panel, judge_scores, statistic=args.statistic)
    tests = {row["rater_id"]: row for row in agreement.loo_significance(panel, judge_scores, args.statistic)}
    for row in loo:
        t = tests[row["rater_id"]]
        row.update({"t": t["t"], "p_two_sided": t["p_two_sided"], "df": t["df"]})
    matrix = agreement._stat_matrix(panel, args.statistic)

    def _tau(x, y):
        try:
            return agreement.kendall_tau_b(x, y)
        except agreement.DegenerateInput:
            return None

    taus = {
        rater_id: _tau(judge_scores.values, matrix[r])
        for r, rater_id in enumerate(panel.rater_ids)
    }
    payload = {
        "statistic": args.statistic,
        "n_reports": len(panel.report_ids),
        "n_raters": len(panel.rater_ids),
        "loo": loo,
        "tau_b": {
            "judge_vs_raters": taus,
            "judge_vs_rater_mean": _tau(judge_scores.values, matrix.mean(axis=0)),
        },
    }
    return payload, EXIT_OK


def _load_embeddings(path: str, ids_path: str | None) -> alignment.EmbeddingSet:
    if path.endswith(".jsonl"):
        return alignment.load_embeddings_jsonl(path)
    if not ids_path:
        raise _DataError(f"binary embeddings {path} need an ids sidecar file")
    return alignment.read_embeddings_binary(path, ids_path)


def _cmd_retrieve(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    images = _load_embeddings(args.images, args.image_ids)
    texts = _load_embeddings(args.texts, args.text_ids)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    directions = (
        [alignment.IMAGE_TO_TEXT, alignment.TEXT_TO_IMAGE]
        if args.direction == "both"
        else [args.direction]
    )
    recalls = {
        d: alignment.recall_at_k(images, texts, ks, direction=d) for d in directions
    }
    payload = {"n": len(images), "ks": ks, "recall": recalls}
    return payload, EXIT_OK


def _parse_mode(text: str) -> "int | str":
    if text in ("mean", "max"):
        return text
    try:
        return int(text)
    except ValueError:
        raise _DataError(f"mode must be 'mean', 'max', or an integer, got {text!r}") from None


def _cmd_attend(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    tensor = alignment.read_attention(
        args.tensor, word=args.word, skip_leading_tokens=args.skip_leading_tokens
    )
    grid = alignment.aggregate_attention(
        tensor, layer_mode=_parse_mode(args.layer_mode), head_mode=_parse_mode(args.head_mode)
    )
    r, c = divmod(int(grid.argmax()), alignment.GRID_SIDE)
    payload: dict[str, Any] = {
        "word": tensor.word,
        "layers": tensor.layers,
        "heads": tensor.heads,
        "layer_mode": args.layer_mode,
        "head_mode": args.head_mode,
        "argmax": [r, c],
        "grid": grid.tolist(),
    }
    if args.png:
        png_path, json_path = alignment.render_heatmap(grid, args.png, background=args.background)
        payload["png"] = str(png_path)
        payload["grid_json"] = str(json_path)
    return payload, EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radeval",
        description="Evaluation toolkit for chest X-ray report generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="split raw reports into canonical sections")
    p.add_argument("--manifest", required=True, help="JSONL of {report_id, raw_text}")
    p.add_argument("--headers", help="JSON file overriding the header alias map")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("synth", help="render label vectors into synthetic findings")
    p.add_argument("--labels", required=True, help="JSONL of {report_id, labels}")
    p.add_argument("--seed", type=int, default=0, help="template choice seed")
    p.add_argument("--templates", help="JSON file overriding the template bank")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("lexical", help="BLEU and ROUGE-L per candidate/reference pair")
    p.add_argument("--manifest", required=True, help="JSONL of {report_id, candidate, reference}")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_lexical)

    p = sub.add_parser("labels", help="label vectors and micro/macro F1")
    p.add_argument("--manifest", required=True, help="JSONL with label dicts or report texts")
    p.add_argument("--lexicon", help="JSON file overriding the surrogate keyword lexicon")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_labels)

    p = sub.add_parser("judge", help="LLM error judging, live or from a transcript")
    p.add_argument("--manifest", help="JSONL of {report_id, candidate, reference}")
    p.add_argument("--transcript", help="replay verdicts from this JSONL instead of the network")
    p.add_argument("--model", default="gpt-4", help="model name sent to the endpoint")
    p.add_argument("--endpoint", default="", help="chat-completion endpoint URL")
    p.add_argument("--few-shot", help="JSON file with the five worked examples")
    p.add_argument("--cache-dir", help="directory for the on-disk verdict cache")
    p.add_argument("--jobs", type=int, default=1, help="maximum in-flight judge requests")
    p.add_argument("--max-retries", type=int, default=2, help="retries after the first attempt")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--timeout", type=float, default=60.0, help="per-request timeout in seconds")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_judge)

    p = sub.add_parser("agree", help="judge vs rater panel agreement statistics")
    p.add_argument("--panel", required=True, help="JSONL of {report_id, rater_id, errors}")
    p.add_argument("--scores", required=True, help="JSON file of {report_ids, values}")
    p.add_argument(
        "--statistic",
        choices=list(agreement.STATISTICS),
        default="total",
        help="error-report summary to correlate",
    )
    _add_io_flags(p)
    p.set_defaults(func=_cmd_agree)

    p = sub.add_parser("retrieve", help="cross-modal recall at K")
    p.add_argument("--images", required=True, help="image embeddings (.jsonl or binary)")
    p.add_argument("--texts", required=True, help="text embeddings (.jsonl or binary)")
    p.add_argument("--image-ids", help="id sidecar for binary image embeddings")
    p.add_argument("--text-ids", help="id sidecar for binary text embeddings")
    p.add_argument("--ks", default="1,5,10", help="comma-separated K values")
    p.add_argument(
        "--direction",
        choices=[alignment.IMAGE_TO_TEXT, alignment.TEXT_TO_IMAGE, "both"],
        default="both",
    )
    _add_io_flags(p)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("attend", help="aggregate attention into a 37x37 grid")
    p.add_argument("--tensor", required=True, help="binary attention container")
    p.add_argument("--word", default="", help="label for the query word")
    p.add_argument("--layer-mode", default="mean", help="'mean', 'max', or a layer index")
    p.add_argument("--head-mode", default="mean", help="'mean', 'max', or a head index")
    p.add_argument(
        "--skip-leading-tokens",
        type=int,
        default=0,
        help="drop this many prepended special tokens before gridding",
    )
    p.add_argument("--png", help="also render an upscaled grayscale heatmap PNG here")
    p.add_argument("--background", help="blend the heatmap 50/50 over this image")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_attend)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.func is _cmd_judge and not args.transcript:
            if not args.manifest:
                parser.error("judge requires --manifest or --transcript")
            if not args.endpoint:
                parser.error("live judging requires --endpoint")
        payload, code = args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (judge_mod.TransportError, judge_mod.ExhaustedRetries) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (_DataError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    _emit(payload, args)
    return code


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
