"""Structured error judging of candidate reports against references.

An LLM is asked to count errors in six fixed categories, each split into
clinically significant and insignificant, and must answer in strict JSON.
This module owns the whole loop: prompt construction with five worked
examples, response parsing, retry with exponential backoff, an on-disk
verdict cache, a recorded-transcript replay mode, and panel-level
aggregation.  Nothing here ever talks to the network in tests; the client is
a plain callable that can be swapped for a fake.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .core import (
    ERROR_CATEGORIES,
    SIGNIFICANCE_LEVELS,
    ErrorReport,
    MalformedResponse,
    read_jsonl,
    write_jsonl,
)
from .sections import PromptPayload, strip_code_fence

__all__ = [
    "API_KEY_ENV_VAR",
    "PROMPT_VERSION",
    "TransportError",
    "ExhaustedRetries",
    "FewShotExample",
    "JudgeConfig",
    "JudgeVerdict",
    "HttpJudgeClient",
    "build_judge_prompt",
    "parse_judge_response",
    "judge_pair",
    "judge_many",
    "aggregate",
    "read_transcript",
    "write_transcript",
    "load_few_shot",
    "default_few_shot",
]

API_KEY_ENV_VAR = "RADEVAL_API_KEY"
PROMPT_VERSION = "error-judge-v1"


class TransportError(RuntimeError):
    """A request failed at the HTTP layer (network, timeout, bad status)."""


class ExhaustedRetries(RuntimeError):
    """All judge attempts failed; carries the last raw response, if any."""

    def __init__(self, message: str, last_response: str | None = None):
        super().__init__(message)
        self.last_response = last_response


_CATEGORY_DESCRIPTIONS = {
    "FalseFinding": "the candidate states a finding that is not supported by the reference",
    "OmittedFinding": "the candidate omits a finding that the reference states",
    "WrongLocation": "a finding is reported with an incorrect location or position",
    "WrongSeverity": "a finding is reported with an incorrect severity",
    "SpuriousComparison": (
        "the candidate mentions a comparison to a prior study that is not present "
        "in the reference"
    ),
    "OmittedComparison": (
        "the candidate omits a comparison describing a change from a previous study "
        "that the reference states"
    ),
}


@dataclass(frozen=True)
class FewShotExample:
    """One worked scoring example: a report pair and the panel-mean counts."""

    candidate: str
    reference: str
    mean_errors: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        if not self.candidate.strip() or not self.reference.strip():
            raise ValueError("few-shot candidate and reference must be nonempty")
        unknown = set(self.mean_errors) - set(ERROR_CATEGORIES)
        if unknown:
            raise ValueError(f"unknown error categories: {sorted(unknown)!r}")
        counts = {}
        for cat in ERROR_CATEGORIES:
            cell = dict(self.mean_errors.get(cat, {}))
            parsed = {}
            for lvl in SIGNIFICANCE_LEVELS:
                v = float(cell.get(lvl, 0.0))
                if v < 0:
                    raise ValueError(f"mean count {cat}.{lvl} must be >= 0")
                parsed[lvl] = v
            counts[cat] = parsed
        object.__setattr__(self, "mean_errors", counts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate": self.candidate,
            "reference": self.reference,
            "mean_errors": {cat: dict(cell) for cat, cell in self.mean_errors.items()},
        }


def load_few_shot(path: str | Path) -> tuple[FewShotExample, ...]:
    """Read few-shot examples from a JSON list of {candidate, reference, mean_errors}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("few-shot file must be a JSON list")
    return tuple(
        FewShotExample(
            candidate=str(item["candidate"]),
            reference=str(item["reference"]),
            mean_errors=item.get("mean_errors", {}),
        )
        for item in raw
    )


def default_few_shot() -> tuple[FewShotExample, ...]:
    """The five bundled placeholder examples."""
    ref = resources.files("radeval").joinpath("data/judge_few_shot.json")
    with resources.as_file(ref) as path:
        return load_few_shot(path)


@dataclass(frozen=True)
class JudgeConfig:
    """Everything a judging run needs besides the transport itself."""

    model_name: str
    few_shot: tuple[FewShotExample, ...]
    temperature: float = 0.0
    max_retries: int = 2
    max_tokens: int = 512
    endpoint_url: str = ""
    timeout: float = 60.0
    cache_dir: str | None = None
    backoff_base: float = 0.5

    def __post_init__(self):
        if len(self.few_shot) != 5:
            raise ValueError(f"exactly 5 few-shot examples required, got {len(self.few_shot)}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be >= 0")


@dataclass(frozen=True)
class JudgeVerdict:
    """One judged report pair."""

    report_id: str
    errors: ErrorReport
    raw_response: str
    attempts: int
    from_cache: bool = False
    prompt_version: str = PROMPT_VERSION

    def __post_init__(self):
        if not self.from_cache and self.attempts < 1:
            raise ValueError("attempts must be >= 1 for a live verdict")

    def to_dict(self) -> dict[str, Any]:
        return {
            "report_id": self.report_id,
            "errors": self.errors.to_dict(),
            "raw_response": self.raw_response,
            "attempts": self.attempts,
            "from_cache": self.from_cache,
            "prompt_version": self.prompt_version,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "JudgeVerdict":
        return cls(
            report_id=str(d["report_id"]),
            errors=ErrorReport.from_dict(d["errors"]),
            raw_response=str(d.get("raw_response", "")),
            attempts=int(d.get("attempts", 1)),
            from_cache=bool(d.get("from_cache", False)),
            prompt_version=str(d.get("prompt_version", PROMPT_VERSION)),
        )


# ---------------------------------------------------------------------------
# Prompt construction and response parsing


def _schema_template() -> dict[str, dict[str, str]]:
    return {cat: {"significant": "int", "insignificant": "int"} for cat in ERROR_CATEGORIES}


def build_judge_prompt(candidate: str, reference: str, config: JudgeConfig) -> PromptPayload:
    """Deterministically assemble the judging exchange for one report pair."""
    if not candidate.strip():
        raise ValueError("candidate must be nonempty")
    if not reference.strip():
        raise ValueError("reference must be nonempty")
    shape = json.dumps(
        {cat: {"significant": 0, "insignificant": 0} for cat in ERROR_CATEGORIES},
        sort_keys=False,
    )
    system_lines = [
        "You are a board-certified radiologist comparing a candidate chest X-ray "
        "report against a reference report written by the attending radiologist. "
        "Count the errors in the candidate report in each of the following six "
        "categories:",
    ]
    for i, cat in enumerate(ERROR_CATEGORIES, start=1):
        system_lines.append(f"{i}. {cat}: {_CATEGORY_DESCRIPTIONS[cat]}.")
    system_lines.append(
        "For every category keep two separate counts: clinically significant errors "
        "(errors that could plausibly change patient management) and clinically "
        "insignificant errors. Respond with a single JSON object of the form "
        f"{shape} and no other text."
    )
    user_parts = [
        "Count the errors in the candidate report against the reference report. "
        "The examples below show report pairs with the mean error counts assigned "
        "by a panel of radiologists.",
    ]
    for i, example in enumerate(config.few_shot, start=1):
        user_parts += [
            "",
            f"Example {i}",
            f"Candidate report: {example.candidate}",
            f"Reference report: {example.reference}",
            "Mean error counts: "
            + json.dumps(example.mean_errors, sort_keys=False),
        ]
    user_parts += [
        "",
        "Now count the errors in the following pair.",
        f"Candidate report: {candidate}",
        f"Reference report: {reference}",
    ]
    return PromptPayload(
        system="\n".join(system_lines),
        user="\n".join(user_parts),
        expected_schema=_schema_template(),
    )


def parse_judge_response(text: str) -> ErrorReport:
    """Strict-parse a judge reply; one surrounding code fence is tolerated."""
    body = strip_code_fence(text)
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"judge response is not valid JSON: {exc.msg}") from exc
    try:
        return ErrorReport.from_dict(obj)
    except ValueError as exc:
        raise MalformedResponse(str(exc)) from exc


# ---------------------------------------------------------------------------
# Transport


class HttpJudgeClient:
    """Minimal chat-completion POST client; the bearer token comes from the
    environment, never from code or config files."""

    def __init__(self, endpoint_url: str, timeout: float = 60.0):
        if not endpoint_url:
            raise ValueError("endpoint_url is required")
        self.endpoint_url = endpoint_url
        self.timeout = timeout

    def __call__(self, payload: Mapping[str, Any]) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(API_KEY_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.endpoint_url, json=dict(payload), headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"endpoint returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"unexpected response envelope: {exc}") from exc


def _request_payload(prompt: PromptPayload, config: JudgeConfig) -> dict[str, Any]:
    return {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }


# ---------------------------------------------------------------------------
# Judging loop with cache


def cache_key(model_name: str, prompt: PromptPayload) -> str:
    """SHA-256 over the model name and the full prompt text."""
    h = hashlib.sha256()
    h.update(model_name.encode("utf-8"))
    h.update(b"\x00")
    h.update(prompt.system.encode("utf-8"))
    h.update(b"\x00")
    h.update(prompt.user.encode("utf-8"))
    return h.hexdigest()


def _cache_path(cache_dir: str, key: str) -> Path:
    return Path(cache_dir) / f"{key}.json"


def _cache_read(cache_dir: str, key: str) -> JudgeVerdict | None:
    path = _cache_path(cache_dir, key)
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        stored = json.load(fh)
    return replace(JudgeVerdict.from_dict(stored), from_cache=True)


def _cache_write(cache_dir: str, key: str, verdict: JudgeVerdict) -> None:
    # Write-then-rename so readers never observe a torn file.
    path = _cache_path(cache_dir, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(verdict.to_dict(), fh, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def judge_pair(
    client: Callable[[Mapping[str, Any]], str],
    candidate: str,
    reference: str,
    config: JudgeConfig,
    report_id: str | None = None,
) -> JudgeVerdict:
    """Judge one report pair, retrying transport and parse failures.

    With a cache directory configured, a warm key short-circuits the network
    entirely and the verdict comes back flagged ``from_cache``.
    """
    prompt = build_judge_prompt(candidate, reference, config)
    key = cache_key(config.model_name, prompt)
    rid = report_id if report_id is not None else key[:12]
    if config.cache_dir:
        cached = _cache_read(config.cache_dir, key)
        if cached is not None:
            return replace(cached, report_id=rid)
    payload = _request_payload(prompt, config)
    last_response: str | None = None
    last_error: Exception | None = None
    for attempt in range(1, config.max_retries + 2):
        if attempt > 1 and config.backoff_base > 0:
            time.sleep(config.backoff_base * 2 ** (attempt - 2))
        try:
            text = client(payload)
        except TransportError as exc:
            last_error = exc
            continue
        last_response = text
        try:
            errors = parse_judge_response(text)
        except MalformedResponse as exc:
            last_error = exc
            continue
        verdict = JudgeVerdict(
            report_id=rid,
            errors=errors,
            raw_response=text,
            attempts=attempt,
        )
        if config.cache_dir:
            _cache_write(config.cache_dir, key, verdict)
        return verdict
    raise ExhaustedRetries(
        f"judge failed after {config.max_retries + 1} attempts: {last_error}",
        last_response=last_response,
    )


def judge_many(
    client: Callable[[Mapping[str, Any]], str],
    pairs: Sequence[tuple[str, str, str]],
    config: JudgeConfig,
    jobs: int = 1,
) -> list[JudgeVerdict]:
    """Judge (report_id, candidate, reference) triples, optionally in parallel.

    Results come back in input order regardless of completion order.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if jobs == 1 or len(pairs) <= 1:
        return [judge_pair(client, c, r, config, report_id=rid) for rid, c, r in pairs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(judge_pair, client, c, r, config, rid) for rid, c, r in pairs
        ]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Transcript replay and aggregation


def read_transcript(path: str | Path) -> list[JudgeVerdict]:
    """Load verdicts from a recorded JSONL transcript instead of the network."""
    return [JudgeVerdict.from_dict(rec) for rec in read_jsonl(path)]


def write_transcript(path: str | Path, verdicts: Iterable[JudgeVerdict]) -> None:
    write_jsonl(path, (v.to_dict() for v in verdicts))


def aggregate(verdicts: Sequence[JudgeVerdict]) -> dict[str, Any]:
    """Panel-level summary of judged verdicts.

    Percentages are 0-100.  Error-free-by-significant-errors can only exceed
    or match error-free-overall, since significant errors are a subset.
    """
    if not verdicts:
        raise ValueError("at least one verdict is required")
    n = len(verdicts)
    totals = [v.errors.total for v in verdicts]
    significant = [v.errors.significant_total for v in verdicts]
    per_category = {
        cat: {
            lvl: sum(v.errors.counts[cat][lvl] for v in verdicts) / n
            for lvl in SIGNIFICANCE_LEVELS
        }
        for cat in ERROR_CATEGORIES
    }
    return {
        "n": n,
        "mean_total": sum(totals) / n,
        "mean_significant": sum(significant) / n,
        "pct_error_free_total": 100.0 * sum(1 for t in totals if t == 0) / n,
        "pct_error_free_significant": 100.0 * sum(1 for s in significant if s == 0) / n,
        "per_category_means": per_category,
    }
