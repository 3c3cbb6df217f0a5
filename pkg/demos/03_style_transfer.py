"""
Style transfer with attention modulation
========================================

Two teacher passes are recorded first, one per image.  The student then starts
from a blend of the two inverted noises and, at every step, mixes the
teachers' attention projections into its own.
"""

from pathlib import Path

from hamstyle import (Denoiser, ModulationConfig, ToyDataset, TransferRequest, channel_stat_distance, fixture_pairs,
                      prepare_teachers, save_png, train, transfer)

OUT = Path(__file__).with_name("_out")
if not (OUT / "ckpt" / "manifest.txt").is_file():
    train(ToyDataset(), steps=400, seed=0).model.save(OUT / "ckpt")
model = Denoiser.load(OUT / "ckpt")

content, style, name = fixture_pairs(3)[0]
req = TransferRequest(content, style, model, ModulationConfig(alpha=0.75, beta=0.25, gamma=0.5))
teachers = prepare_teachers(req)
result = transfer(req, teachers)
save_png(OUT / "stylized.png", result.stylized_image)

# how close are the channel statistics to the style reconstruction?
target = teachers.style.latents[-1]
print("style:", name)
print("plain reconstruction  distance %.4f" % channel_stat_distance(teachers.content.latents[-1], target))
print("stylized output       distance %.4f" % channel_stat_distance(result.stylized_latent, target))

# text-guided mode: the style teacher is sampled under a condition id instead
text = transfer(TransferRequest(content, 3, model, seed=1))
save_png(OUT / "stylized_text.png", text.stylized_image)
print("wrote", OUT / "stylized.png", "and", OUT / "stylized_text.png")
