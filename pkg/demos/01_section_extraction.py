"""
Splitting a raw radiology report into sections
===============================================

"""

from radeval import extract_sections, normalize

# A raw report as it might arrive from an archive: banner line, hard-wrapped
# bodies, stray multi-spaces. The indication even repeats a phrase.
raw = """\
                                 FINAL REPORT
 EXAMINATION:  CHEST (PORTABLE AP)

 INDICATION:  ___ year old woman with central line placement  //  line position
      line position

 IMPRESSION:
 Right internal jugular catheter tip projects over the cavoatrial
 junction.  No pneumothorax.  Heart size is within normal
 limits.
"""

# normalize() joins the wrapped lines and collapses whitespace, producing one
# line per section; headers are recognized by alias and a trailing colon.
flat = normalize(raw)
print("normalized text:")
print(flat)
print()

# extract_sections() returns a Report whose fields hold the section bodies.
# Absent sections stay None; here there is no FINDINGS block.
report = extract_sections(flat, report_id="demo-1")
for name, body in report.sections().items():
    print(f"{name:>12}: {body}")

# Every extracted body is a contiguous substring of the normalized text, so
# nothing was paraphrased or reordered on the way out.
assert report.impression in flat
