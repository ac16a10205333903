import numpy as np, time, sys
sys.path.insert(0, "/root/pkg/src")
from dancegen.synth import make_corpus, CorpusConfig
from dancegen.tokenizer import TokenizerConfig, train_tokenizer, encode, decode
from dancegen.motion import pose_positions
from dancegen.metrics import mpjpe

def tcfg(cond, layers):
    return TokenizerConfig(codebook_size=512, code_dim=128, layers=layers, hidden=32,
                           steps=250, batch=8, crop_frames=64, lr=1e-3, warmup_steps=20,
                           conditioning=cond, enc_lr_scale=0.2, seed=202,
                           anchor_seqs=32, final_seqs=128)

c4 = make_corpus(CorpusConfig(n_samples=512, seed=101, duration_s=4.0,
                              genres=tuple(range(15)), bpm_range=(100,140),
                              drift_scale=0.0, harmonics=1))
train4 = np.stack([s.motion.data for s in c4 if s.split=="train"])
test4 = [s for s in c4 if s.split=="test"]
gts4 = [pose_positions(s.motion) for s in test4]
res={}
for label, cond, layers in (("HRVQ","chain",5), ("VQ","none",0)):
    t0=time.time()
    m = train_tokenizer(train4, tcfg(cond, layers))
    errs=[]; l1s=[]
    for s,g in zip(test4,gts4):
        rec = decode(m, encode(m, s.motion).grid)
        errs.append(mpjpe(g, pose_positions(rec)))
        l1s.append(np.abs((rec.data - s.motion.data)/m.norm_std).mean())
    res[label]=(float(np.median(errs)), float(np.median(l1s)))
    print(f"{label}: mpjpe {res[label][0]:.4f} L1 {res[label][1]:.4f} ({time.time()-t0:.0f}s)", flush=True)
print(f"margins: mpjpe {1-res['HRVQ'][0]/res['VQ'][0]:.2%}  L1 {1-res['HRVQ'][1]/res['VQ'][1]:.2%}", flush=True)
