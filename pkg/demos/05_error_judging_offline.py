"""
Structured error judging with a scripted model client
=====================================================

"""

import json

from radeval import (
    ErrorReport,
    JudgeConfig,
    aggregate,
    build_judge_prompt,
    default_few_shot,
    judge_pair,
)

# The judge asks a chat model to count six error types in a candidate report,
# each split into clinically significant and insignificant. Any callable that
# maps a request payload to a response string can stand in for the HTTP
# client, so this demo runs entirely offline.
config = JudgeConfig(model_name="demo-model", few_shot=default_few_shot())

prompt = build_judge_prompt(
    candidate="Cardiomegaly is present. There is a left effusion.",
    reference="The heart is enlarged.",
    config=config,
)
print("system prompt starts:", prompt.system[:72], "...")
print("few-shot examples in user prompt:", prompt.user.count("Example"))
print()


class CannedClient:
    """Replays fixed model responses; indexes by call count."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def __call__(self, payload):
        text = self.responses[self.calls % len(self.responses)]
        self.calls += 1
        return text


# Two scripted verdicts: one false finding (the invented effusion), one clean.
with_error = ErrorReport.zeros().to_dict()
with_error["FalseFinding"]["significant"] = 1
clean = ErrorReport.zeros().to_dict()

client = CannedClient([json.dumps(with_error), json.dumps(clean)])
verdicts = [
    judge_pair(client, "Cardiomegaly. Left effusion.", "The heart is enlarged.", config, report_id="pair-1"),
    judge_pair(client, "The heart is enlarged.", "The heart is enlarged.", config, report_id="pair-2"),
]
for v in verdicts:
    print(f"{v.report_id}: total={v.errors.total} significant={v.errors.significant_total}")
print()

# aggregate() summarizes a panel of verdicts; error-free-by-significant can
# only exceed or match error-free-overall since significant errors are a
# subset of all errors.
summary = aggregate(verdicts)
for key in ("n", "mean_total", "mean_significant", "pct_error_free_total", "pct_error_free_significant"):
    print(f"{key}: {summary[key]}")
