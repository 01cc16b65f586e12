"""Surface-overlap metrics for report text: corpus-free BLEU and ROUGE-L.

BLEU here is the strict geometric-mean form with no smoothing: any missing
n-gram order zeroes the score.  Scores are computed per candidate/reference
pair; callers average over a corpus themselves if they want corpus numbers.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Sequence

__all__ = ["tokenize", "bleu", "rouge_l"]

# Punctuation marks split into their own tokens; everything else is
# whitespace-delimited.
_TOKEN_RE = re.compile(r"[.,:;!?()/]|[^\s.,:;!?()/]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split text into word and punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU with clipped n-gram precision and brevity penalty.

    Returns 0.0 whenever any order 1..max_n has zero clipped matches, which
    includes candidates shorter than max_n tokens.
    """
    if not reference:
        raise ValueError("reference must be nonempty")
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    if not candidate:
        return 0.0
    log_precisions = []
    for n in range(1, max_n + 1):
        cand = _ngram_counts(candidate, n)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        ref = _ngram_counts(reference, n)
        clipped = sum(min(count, ref[gram]) for gram, count in cand.items())
        if clipped == 0:
            return 0.0
        log_precisions.append(math.log(clipped / total))
    brevity = min(1.0, math.exp(1.0 - len(reference) / len(candidate)))
    return brevity * math.exp(sum(log_precisions) / max_n)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Classic DP over token sequences; rows rolled to keep memory linear.
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> dict[str, float]:
    """ROUGE-L precision/recall/F over the token LCS, with beta = 1."""
    if not candidate or not reference:
        raise ValueError("candidate and reference must both be nonempty")
    lcs = _lcs_length(candidate, reference)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return {"precision": precision, "recall": recall, "f": f}
