"""
Training the toy denoiser
=========================

The diffusion stack is small enough to train on one CPU core in under a
minute.  Latents are 3x32x32 procedural images: shapes for the content class
and three parametric textures, each with its own condition id.
"""

from pathlib import Path

import numpy as np

from hamstyle import ToyDataset, train

OUT = Path(__file__).with_name("_out")

# a few samples from each class
rng = np.random.default_rng(0)
images, cond = ToyDataset().sample(rng, 8)
print("batch", images.shape, "condition ids", cond.tolist())
print("value range", float(images.min()), float(images.max()))

# 400 Adam steps on the noise-prediction loss
result = train(ToyDataset(), steps=400, seed=0, log_every=100)
losses = np.asarray(result.losses)
print("loss, first 40 steps: %.4f   last 40 steps: %.4f" % (losses[:40].mean(), losses[-40:].mean()))

result.model.save(OUT / "ckpt")
print("checkpoint written to", OUT / "ckpt")
