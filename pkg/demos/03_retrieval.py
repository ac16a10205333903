"""Train the music-motion retrieval model and query it.

Shows the shared latent space, recall table on the test split, and the
matching score between a dance and its (and another) track.  A couple of
minutes on CPU.
"""

import numpy as np

from dancegen.metrics import mmr_matching_score
from dancegen.retrieval import (
    RetrievalConfig,
    encode_motion,
    encode_music,
    median_rank,
    recall_at_k,
    retrieval_ranks,
    segment_latents,
    train_retrieval,
)
from dancegen.synth import CorpusConfig, make_corpus, split_of

samples = make_corpus(CorpusConfig(n_samples=96, seed=11, duration_s=4.0, genres=tuple(range(6))))
train = split_of(samples, "train")
test = split_of(samples, "test")

cfg = RetrievalConfig(variant="whole", hidden=48, steps=300, batch=32,
                      crop_frames=64, lr=1.5e-3, warmup_steps=20, seed=2)
print(f"training dual encoder on {len(train)} pairs ...")
model = train_retrieval([s.motion.data for s in train],
                        [s.track.features for s in train], cfg)

print("\nlatents are unit-norm 256-vectors:")
z = encode_motion(model, test[0].motion)
c = encode_music(model, test[0].track)
print(f"  |z| = {np.linalg.norm(z):.6f}, |c| = {np.linalg.norm(c):.6f}, "
      f"cos(z, c) = {float(z @ c):.3f}")

print(f"\nretrieval on the {len(test)}-item test gallery:")
for direction in ("music->motion", "motion->music"):
    ranks = retrieval_ranks(model, [s.motion for s in test], [s.track for s in test], direction)
    print(f"  {direction}: R@1 {recall_at_k(ranks, 1):.2f}  R@5 {recall_at_k(ranks, 5):.2f} "
          f" MedR {median_rank(ranks):.1f}  (chance R@1 {1 / len(test):.3f})")

print("\nmatching score (lower = better aligned):")
own = mmr_matching_score(z, c, segment_latents(model, test[0].motion),
                         segment_latents(model, test[0].track))
other = mmr_matching_score(z, encode_music(model, test[1].track),
                           segment_latents(model, test[0].motion),
                           segment_latents(model, test[1].track))
print(f"  dance vs its own track: {own:.3f}")
print(f"  dance vs another track: {other:.3f}")
