"""
Switching modules on and off
============================

The eight (gar, lat, sini) rows share one pair of teacher traces, so the whole
matrix costs eight student passes plus two teacher passes.
"""

from pathlib import Path

from hamstyle import (ABLATION_ROWS, Denoiser, ToyDataset, TransferRequest, ablation_matrix, channel_stat_distance,
                      fixture_pairs, prepare_teachers, train)

OUT = Path(__file__).with_name("_out")
if not (OUT / "ckpt" / "manifest.txt").is_file():
    train(ToyDataset(), steps=400, seed=0).model.save(OUT / "ckpt")
model = Denoiser.load(OUT / "ckpt")

content, style, _ = fixture_pairs(3)[1]
req = TransferRequest(content, style, model)
teachers = prepare_teachers(req)
target = teachers.style.latents[-1]

print("row  gar  lat  sini  distance")
for (row, flags), res in zip(ABLATION_ROWS.items(), ablation_matrix(req, teachers=teachers)):
    d = channel_stat_distance(res.stylized_latent, target)
    print("%s    %d    %d    %d     %.4f" % (row, *flags, d))
