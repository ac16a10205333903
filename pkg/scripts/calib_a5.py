"""EXP-A5: criteria 3+4 with reverted encoder, H=2 corpus, full precision."""
import numpy as np, time, sys
sys.path.insert(0, "/root/pkg/src")
from dancegen.synth import make_corpus, CorpusConfig
from dancegen.tokenizer import TokenizerConfig, train_tokenizer, encode, decode
from dancegen.motion import pose_positions
from dancegen.metrics import mpjpe

cfg = CorpusConfig(n_samples=512, seed=101, duration_s=4.0, genres=tuple(range(8)), bpm_range=(100,140))
samples = make_corpus(cfg)
train = [s for s in samples if s.split=="train"]
test = [s for s in samples if s.split=="test"]
frames = np.stack([s.motion.data for s in train])
gt_pos = {s.sample_id: pose_positions(s.motion) for s in test}

def eval_model(model, max_layers=None):
    errs=[]
    for s in test:
        rec = decode(model, encode(model, s.motion).grid, max_layers=max_layers)
        errs.append(mpjpe(gt_pos[s.sample_id], pose_positions(rec)))
    return float(np.median(errs))

results = {}
models = {}
for label, cond, layers in (("HRVQ","chain",5), ("RVQ","none",5), ("VQ","none",0)):
    tcfg = TokenizerConfig(codebook_size=512, code_dim=128, layers=layers, hidden=32,
                           steps=250, batch=8, crop_frames=64, lr=1e-3, warmup_steps=20,
                           conditioning=cond, enc_lr_scale=0.2, seed=202,
                           anchor_seqs=32, final_seqs=128)
    t0=time.time()
    model = train_tokenizer(frames, tcfg)
    models[label]=model
    per = [eval_model(model, j) for j in range(1, layers+2)]
    results[label] = per[-1]
    strict = all(per[i] > per[i+1] for i in range(len(per)-1))
    print(f"{label}: {time.time()-t0:.0f}s; strict-decreasing={strict}; "
          + " ".join(f"{v:.4f}" for v in per), flush=True)
print("ordering:", results["HRVQ"]<=results["RVQ"]<=results["VQ"],
      "| HRVQ beats VQ by", round(100*(1-results["HRVQ"]/results["VQ"]),2), "%", flush=True)
# HRVQ==RVQ check (frozen identity mixers should tie exactly)
import numpy as np
a = models["HRVQ"].state(); b = models["RVQ"].state()
diffs = [k for k in a if k in b and not np.array_equal(a[k], b[k])]
print("state diffs HRVQ vs RVQ:", diffs[:8], flush=True)
