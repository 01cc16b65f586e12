"""
BLEU and ROUGE-L on generated vs reference reports
==================================================

"""

from radeval import bleu, rouge_l, tokenize

reference = "The heart size is normal. No pleural effusion or pneumothorax."
candidates = [
    "The heart size is normal. No pleural effusion or pneumothorax.",
    "Heart size is normal. There is no pleural effusion.",
    "Severe cardiomegaly with bilateral effusions.",
]

ref_tokens = tokenize(reference)
print(f"reference: {reference}")
print(f"tokens:    {ref_tokens}")
print()

# BLEU-4 multiplies clipped 1..4-gram precisions under a brevity penalty and
# is deliberately unsmoothed: any empty n-gram order zeroes the score, so
# short or disjoint candidates drop to 0 rather than limping along.
print(f"{'candidate':<62} {'bleu1':>6} {'bleu4':>6} {'rougeL':>6}")
for cand in candidates:
    cand_tokens = tokenize(cand)
    b1 = bleu(cand_tokens, ref_tokens, max_n=1)
    b4 = bleu(cand_tokens, ref_tokens, max_n=4)
    rl = rouge_l(cand_tokens, ref_tokens)["f"]
    print(f"{cand:<62} {b1:6.3f} {b4:6.3f} {rl:6.3f}")

# ROUGE-L scores the longest common subsequence, so reordering hurts it less
# than it hurts BLEU; the identity pair scores exactly 1.0 on both.
assert bleu(ref_tokens, ref_tokens, max_n=4) == 1.0
assert rouge_l(ref_tokens, ref_tokens)["f"] == 1.0
