"""
Clinical-label F1 between generated and reference reports
=========================================================

"""

from radeval import (
    ALL_14,
    TOP_5,
    UNCERTAIN_AS_NEGATIVE,
    UNCERTAIN_AS_POSITIVE,
    f1_scores,
    surrogate_label,
)

# Three generated/reference pairs. The rule-based labeler turns each text into
# a 14-condition status vector; F1 then compares the binarized vectors.
pairs = [
    (
        "Moderate cardiomegaly. Small left pleural effusion.",
        "The heart is enlarged. Pleural effusion is present on the left.",
    ),
    (
        "No pneumothorax. Lungs are clear.",
        "There is a small apical pneumothorax.",
    ),
    (
        "Possible right lower lobe pneumonia.",
        "Right basilar consolidation may represent pneumonia.",
    ),
]

preds = [surrogate_label(cand) for cand, _ in pairs]
refs = [surrogate_label(ref) for _, ref in pairs]

for (cand, ref), p, r in zip(pairs, preds, refs):
    print(f"candidate: {cand}")
    print(f"reference: {ref}")
    print(f"  pred positives: {p.positives()}")
    print(f"  ref  positives: {r.positives()}")
    print()

# Uncertain mentions can count as negative or positive; micro pools counts
# over all classes while macro averages per-class scores (empty classes
# contribute 0, which is why macro over all 14 looks low here).
for policy in (UNCERTAIN_AS_NEGATIVE, UNCERTAIN_AS_POSITIVE):
    for name, classes in (("all 14", ALL_14), ("top 5", TOP_5)):
        scores = f1_scores(preds, refs, policy, classes)
        print(
            f"{policy:<22} {name}: micro={scores['micro_f1']:.3f} "
            f"macro={scores['macro_f1']:.3f}"
        )
