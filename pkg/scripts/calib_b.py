"""EXP-B: criterion 9 calibration — retrieval at the 51-gallery scale."""
import numpy as np, time, sys
sys.path.insert(0, "/root/pkg/src")
from dancegen.synth import make_corpus, CorpusConfig
from dancegen.retrieval import RetrievalConfig, train_retrieval, retrieval_ranks, recall_at_k, median_rank

cfg = CorpusConfig(n_samples=512, seed=101, duration_s=4.0, genres=tuple(range(8)), bpm_range=(100,140))
samples = make_corpus(cfg)
train = [s for s in samples if s.split=="train"]
test = [s for s in samples if s.split=="test"]
mot = [s.motion.data for s in train]
feat = [s.track.features for s in train]
tm = [s.motion for s in test]; tt = [s.track for s in test]

for variant, steps, bs in (("body", 400, 48), ("whole", 350, 32)):
    rc = RetrievalConfig(variant=variant, hidden=48, steps=steps, batch=bs, lr=1.5e-3,
                         warmup_steps=20, seed=11, crop_frames=64)
    t0=time.time()
    m = train_retrieval(mot, feat, rc)
    r1 = retrieval_ranks(m, tm, tt, "music->motion")
    r2 = retrieval_ranks(m, tm, tt, "motion->music")
    print(f"{variant} ({time.time()-t0:.0f}s): R@1 {recall_at_k(r1,1):.3f}/{recall_at_k(r2,1):.3f} "
          f"R@5 {recall_at_k(r1,5):.3f}/{recall_at_k(r2,5):.3f} MedR {median_rank(r1)}/{median_rank(r2)} "
          f"(chance {1/51:.4f}, 3x = {3/51:.4f})", flush=True)
