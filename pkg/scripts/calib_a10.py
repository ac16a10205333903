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
    errs, l1s = [], []
    for s in test:
        rec = decode(model, encode(model, s.motion).grid, max_layers=max_layers)
        errs.append(mpjpe(gt_pos[s.sample_id], pose_positions(rec)))
        l1s.append(np.abs((rec.data - s.motion.data) / model.norm_std).mean())
    return float(np.median(errs)), float(np.median(l1s))

res = {}
for label, cond, layers in (("HRVQ","chain",5), ("RVQ","none",5), ("VQ","none",0)):
    tcfg = TokenizerConfig(codebook_size=512, code_dim=128, layers=layers, hidden=32,
                           steps=250, batch=8, crop_frames=64, lr=1e-3, warmup_steps=20,
                           conditioning=cond, enc_lr_scale=0.2, seed=202, latent_norm="const",
                           anchor_seqs=32, final_seqs=128)
    t0=time.time()
    model = train_tokenizer(frames, tcfg)
    per = [eval_model(model, j) for j in range(1, layers+2)]
    res[label] = per[-1]
    strict = all(per[i][0] > per[i+1][0] for i in range(len(per)-1))
    print(f"{label}: {time.time()-t0:.0f}s strict={strict}; mpjpe "
          + " ".join(f"{v[0]:.4f}" for v in per) + " | L1 " + " ".join(f"{v[1]:.4f}" for v in per), flush=True)
print("mpjpe margin %:", round(100*(1-res['HRVQ'][0]/res['VQ'][0]),2),
      "| L1 margin %:", round(100*(1-res['HRVQ'][1]/res['VQ'][1]),2), flush=True)
