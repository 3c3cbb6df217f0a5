"""
Composite scores
================

DC and CC combine a content score with text alignment as products of
shifted similarities; the ArtFID form does the same for FID and LPIPS.
The bundled table holds the published component columns.
"""

import io
from importlib import resources

from hamstyle import artfid_form, read_scores, score_report

text = resources.files("hamstyle").joinpath("data/table1.csv").read_text()
rows = read_scores(io.StringIO(text))
print(score_report(rows))

# the two published ArtFID values the form can be checked against
print("HAM     %.4f (reported 15.151)" % artfid_form(9.244, 0.479))
print("StyleID %.4f (reported 15.161)" % artfid_form(8.273, 0.635))
