"""Evaluation toolkit for chest X-ray report generation.

Parses free-text radiology reports into canonical sections, synthesizes
reports from label vectors, scores candidates against references with lexical
overlap, label F1, LLM error judging, and retrieval/attention alignment, and
compares judge scores against human rater panels.
"""

from .core import (
    CONDITIONS,
    ERROR_CATEGORIES,
    SECTION_NAMES,
    SIGNIFICANCE_LEVELS,
    TOP_5_CONDITIONS,
    ErrorReport,
    LabelVector,
    MalformedResponse,
    RaterPanel,
    Report,
    Source,
    Status,
    canonical_condition,
    read_jsonl,
    validate_manifest,
    validate_record,
    write_jsonl,
)
from .sections import (
    DEFAULT_HEADER_MAP,
    DEFAULT_STRUCTURING_EXAMPLES,
    HeaderMap,
    NoSectionsFound,
    build_structuring_prompt,
    extract_sections,
    normalize,
    parse_structuring_response,
    reassemble,
)
from .synthesis import (
    DEFAULT_TEMPLATE_BANK,
    TemplateBank,
    render_finding,
    synthesize_report,
    template_index,
)
from .lexical import bleu, rouge_l, tokenize
from .labels import (
    ALL_14,
    DEFAULT_LEXICON,
    TOP_5,
    UNCERTAIN_AS_NEGATIVE,
    UNCERTAIN_AS_POSITIVE,
    binarize,
    entity_f1,
    f1_scores,
    surrogate_label,
)
from .judge import (
    API_KEY_ENV_VAR,
    ExhaustedRetries,
    FewShotExample,
    HttpJudgeClient,
    JudgeConfig,
    JudgeVerdict,
    TransportError,
    aggregate,
    build_judge_prompt,
    default_few_shot,
    judge_many,
    judge_pair,
    parse_judge_response,
    read_transcript,
    write_transcript,
)
from .agreement import (
    DegenerateInput,
    ScoreVector,
    kendall_tau_b,
    loo_mad,
    loo_significance,
    paired_t_test,
)
from .alignment import (
    IMAGE_TO_TEXT,
    TEXT_TO_IMAGE,
    AttentionTensor,
    EmbeddingSet,
    aggregate_attention,
    load_embeddings_jsonl,
    read_attention,
    read_grid_json,
    recall_at_k,
    render_heatmap,
    write_attention,
)

__version__ = "0.1.0"
