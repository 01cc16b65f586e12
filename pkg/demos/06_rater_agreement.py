"""
Benchmarking a judge against a human rater panel
================================================

"""

from radeval import RaterPanel, ScoreVector, kendall_tau_b, loo_mad, loo_significance

# A small panel: three raters annotated the same four reports; each cell is
# the rater's error counts for that report. Here only totals matter, so the
# counts are packed into one category for brevity.
def cell(total):
    errors = {
        cat: {"significant": 0, "insignificant": 0}
        for cat in (
            "FalseFinding", "OmittedFinding", "WrongLocation",
            "WrongSeverity", "SpuriousComparison", "OmittedComparison",
        )
    }
    errors["FalseFinding"]["significant"] = total
    return errors


totals = {
    "rater-1": [2, 0, 1, 3],
    "rater-2": [1, 0, 2, 2],
    "rater-3": [2, 1, 1, 3],
}
records = [
    {"report_id": f"rpt-{i}", "rater_id": rater, "errors": cell(t)}
    for rater, row in totals.items()
    for i, t in enumerate(row, start=1)
]
panel = RaterPanel.from_records(records)

# The judge scored the same four reports.
judge = ScoreVector(values=(2.0, 0.0, 1.0, 3.0), report_ids=tuple(panel.report_ids))

# Leave one rater out; the remaining raters' mean is the anchor. mad_rater is
# the held-out rater's mean absolute difference from it, mad_judge the
# judge's. A judge that tracks the panel as well as a human shows
# mad_judge <= mad_rater.
print(f"{'rater':<10} {'mad_rater':>10} {'mad_judge':>10}")
for row in loo_mad(panel, judge):
    print(f"{row['rater_id']:<10} {row['mad_rater']:>10.3f} {row['mad_judge']:>10.3f}")
print()

# The paired t-test asks whether the judge's disagreement differs from the
# held-out rater's; a large p means the judge is indistinguishable from a
# human panel member.
for row in loo_significance(panel, judge):
    print(f"{row['rater_id']}: t={row['t']:+.3f} df={row['df']} p={row['p_two_sided']:.3f}")
print()

# Kendall tau-b checks rank agreement directly, ties handled in the
# denominator.
for rater, row in totals.items():
    tau = kendall_tau_b(judge, [float(t) for t in row])
    print(f"tau-b vs {rater}: {tau:+.3f}")
