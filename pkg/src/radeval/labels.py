"""Condition-label metrics: binarization policies, micro/macro F1 over label
vectors, a keyword surrogate labeler, and entity-overlap F1.

The surrogate labeler is a small and transparent keyword matcher, NOT a
trained clinical labeler.  Its one guarantee is that it inverts the bundled
synthesis templates: text generated from a label vector labels back to the
same vector.  Treat scores on free-form clinical text as rough.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import CONDITIONS, TOP_5_CONDITIONS, LabelVector, Status, canonical_condition

__all__ = [
    "UNCERTAIN_AS_NEGATIVE",
    "UNCERTAIN_AS_POSITIVE",
    "ALL_14",
    "TOP_5",
    "binarize",
    "f1_scores",
    "surrogate_label",
    "entity_f1",
    "normalize_entities",
    "DEFAULT_LEXICON",
]

# Uncertain-handling policies for binarization.
UNCERTAIN_AS_NEGATIVE = "uncertain_as_negative"
UNCERTAIN_AS_POSITIVE = "uncertain_as_positive"
_POLICIES = (UNCERTAIN_AS_NEGATIVE, UNCERTAIN_AS_POSITIVE)

# Class-set views.
ALL_14: tuple[str, ...] = CONDITIONS
TOP_5: tuple[str, ...] = TOP_5_CONDITIONS


def binarize(labels: LabelVector, policy: str) -> np.ndarray:
    """Collapse statuses to a 0/1 vector in canonical condition order.

    Positive maps to 1 and Negative/Blank to 0 under both policies; the policy
    only decides Uncertain.
    """
    if policy not in _POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    uncertain = 1 if policy == UNCERTAIN_AS_POSITIVE else 0
    out = np.zeros(len(CONDITIONS), dtype=np.int64)
    for i, name in enumerate(CONDITIONS):
        status = labels[name]
        if status is Status.POSITIVE:
            out[i] = 1
        elif status is Status.UNCERTAIN:
            out[i] = uncertain
    return out


def _class_indices(classes: Sequence[str]) -> list[int]:
    indices = []
    for name in classes:
        canonical = canonical_condition(name)
        indices.append(CONDITIONS.index(canonical))
    if not indices:
        raise ValueError("class set must be nonempty")
    if len(set(indices)) != len(indices):
        raise ValueError("class set contains duplicates")
    return indices


def f1_scores(
    preds: Sequence[LabelVector],
    refs: Sequence[LabelVector],
    policy: str = UNCERTAIN_AS_NEGATIVE,
    classes: Sequence[str] = ALL_14,
) -> dict[str, float]:
    """Micro and macro F1 of predicted vs reference label vectors.

    Macro averages per-class F1 with the convention that a class with no
    true positives, false positives, or false negatives contributes 0.
    """
    if len(preds) != len(refs):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(refs)} references")
    if not preds:
        raise ValueError("at least one report pair is required")
    cols = _class_indices(classes)
    p = np.stack([binarize(v, policy) for v in preds])[:, cols]
    r = np.stack([binarize(v, policy) for v in refs])[:, cols]
    tp = ((p == 1) & (r == 1)).sum(axis=0)
    fp = ((p == 1) & (r == 0)).sum(axis=0)
    fn = ((p == 0) & (r == 1)).sum(axis=0)
    denom = 2 * tp + fp + fn
    per_class = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    micro_denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 0.0 if micro_denom == 0 else 2 * tp.sum() / micro_denom
    return {"micro_f1": float(micro), "macro_f1": float(per_class.mean())}


# ---------------------------------------------------------------------------
# Surrogate labeler


def _default_lexicon() -> dict[str, tuple[str, ...]]:
    lex = {name: (name.lower(),) for name in CONDITIONS}
    lex.update(
        {
            "Atelectasis": ("atelectasis", "atelectatic"),
            "Cardiomegaly": ("cardiomegaly", "enlarged cardiac silhouette"),
            "Enlarged Cardiomediastinum": (
                "enlarged cardiomediastinum",
                "cardiomediastinal enlargement",
                "widened mediastinum",
            ),
            "Fracture": ("fracture", "fractures"),
            "Lung Lesion": ("lung lesion", "pulmonary nodule", "pulmonary mass"),
            "Lung Opacity": ("lung opacity", "pulmonary opacity", "opacity", "opacities"),
            "No Finding": (
                "no significant abnormalities",
                "no significant abnormal findings",
                "not reveal any significant abnormal findings",
                "no acute cardiopulmonary process",
            ),
            "Pleural Effusion": ("pleural effusion", "pleural effusions"),
            "Pleural Other": (
                "pleural other",
                "pleural abnormalities",
                "pleural abnormality",
                "pleural thickening",
                "pleura",
            ),
            "Pneumothorax": ("pneumothorax", "pneumothoraces"),
            "Support Devices": (
                "support devices",
                "support device",
                "nasogastric tube",
                "endotracheal tube",
                "central line",
                "pacemaker",
            ),
        }
    )
    return lex


DEFAULT_LEXICON: Mapping[str, tuple[str, ...]] = _default_lexicon()

# Cues that negate a keyword occurring after them in the sentence.
PRE_NEGATION_TOKENS = ("no", "not", "without")
PRE_NEGATION_PHRASES = ("negative for", "free of")
# Trailing-negation triggers ("X is not identified"), anywhere after the hit.
POST_NEGATION_PHRASES = (
    "not identified",
    "not seen",
    "not observed",
    "not visualized",
    "is excluded",
    "are excluded",
)
# Hedging cues anywhere in the sentence outrank negation.
UNCERTAINTY_TOKENS = ("may", "possible", "possibly", "uncertain", "uncertainty", "ambiguous", "equivocal")
UNCERTAINTY_PHRASES = ("cannot exclude", "cannot be excluded", "not completely exclude")

_WORD_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _find_phrase(tokens: Sequence[str], phrase_tokens: Sequence[str]) -> int:
    """Index of the first occurrence of a token phrase, or -1."""
    n, m = len(tokens), len(phrase_tokens)
    for i in range(n - m + 1):
        if list(tokens[i : i + m]) == list(phrase_tokens):
            return i
    return -1


def _sentence_status(tokens: list[str], keyword_start: int) -> Status:
    for tok in UNCERTAINTY_TOKENS:
        if tok in tokens:
            return Status.UNCERTAIN
    for phrase in UNCERTAINTY_PHRASES:
        if _find_phrase(tokens, phrase.split()) >= 0:
            return Status.UNCERTAIN
    before = tokens[:keyword_start]
    for tok in PRE_NEGATION_TOKENS:
        if tok in before:
            return Status.NEGATIVE
    for phrase in PRE_NEGATION_PHRASES:
        if _find_phrase(before, phrase.split()) >= 0:
            return Status.NEGATIVE
    for phrase in POST_NEGATION_PHRASES:
        if _find_phrase(tokens, phrase.split()) >= keyword_start:
            return Status.NEGATIVE
    return Status.POSITIVE


def surrogate_label(
    findings: str,
    lexicon: Mapping[str, Sequence[str]] | None = None,
) -> LabelVector:
    """Keyword-label findings text into a 14-condition vector.

    Sentence by sentence: a keyword hit is Positive unless the sentence hedges
    (Uncertain) or negates it (Negative); unmentioned conditions stay Blank.
    Across sentences Positive outranks Uncertain outranks Negative.
    """
    lex = {canonical_condition(k): tuple(v) for k, v in (lexicon or DEFAULT_LEXICON).items()}
    rank = {Status.POSITIVE: 3, Status.UNCERTAIN: 2, Status.NEGATIVE: 1, Status.BLANK: 0}
    statuses = {name: Status.BLANK for name in CONDITIONS}
    for sentence in _SENTENCE_SPLIT.split(findings):
        tokens = _words(sentence)
        if not tokens:
            continue
        for condition, keywords in lex.items():
            best = -1
            for keyword in keywords:
                start = _find_phrase(tokens, _words(keyword))
                if start >= 0 and (best < 0 or start < best):
                    best = start
            if best < 0:
                continue
            status = _sentence_status(tokens, best)
            if rank[status] > rank[statuses[condition]]:
                statuses[condition] = status
    return LabelVector(statuses)


def load_lexicon(path: str | Path) -> dict[str, tuple[str, ...]]:
    """Read a condition -> keyword list mapping from JSON."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("lexicon file must be a JSON object")
    return {canonical_condition(k): tuple(str(s) for s in v) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# Entity overlap

ENTITY_TYPES = ("Anatomy", "Observation")


def normalize_entities(pairs: Iterable[tuple[str, str]]) -> frozenset[tuple[str, str]]:
    """Lowercase entity texts and validate entity types."""
    out = set()
    for text, etype in pairs:
        if etype not in ENTITY_TYPES:
            raise ValueError(f"unknown entity type {etype!r}")
        out.add((text.lower(), etype))
    return frozenset(out)


def entity_f1(
    candidate: Iterable[tuple[str, str]],
    reference: Iterable[tuple[str, str]],
) -> float:
    """F1 over exact (text, type) entity matches; two empty sets score 1.0."""
    c = normalize_entities(candidate)
    r = normalize_entities(reference)
    if not c and not r:
        return 1.0
    tp = len(c & r)
    return 2 * tp / (len(c) + len(r))
