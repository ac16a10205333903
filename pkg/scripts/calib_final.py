"""Final verification: C3 strictness on the drift corpus (anchor 32) and
C4 ordering/margin on the no-drift 1-harmonic corpus."""
import numpy as np, time, sys
sys.path.insert(0, "/root/pkg/src")
from dancegen.synth import make_corpus, CorpusConfig
from dancegen.tokenizer import TokenizerConfig, train_tokenizer, encode, decode
from dancegen.motion import pose_positions
from dancegen.metrics import mpjpe

def tcfg(cond, layers, seed=202):
    return TokenizerConfig(codebook_size=512, code_dim=128, layers=layers, hidden=32,
                           steps=250, batch=8, crop_frames=64, lr=1e-3, warmup_steps=20,
                           conditioning=cond, enc_lr_scale=0.2, seed=seed,
                           anchor_seqs=32, final_seqs=128)

def median_curve(model, test, layers):
    gts = [pose_positions(s.motion) for s in test]
    out=[]
    for j in range(1, layers+2):
        errs=[mpjpe(g, pose_positions(decode(model, encode(model, s.motion).grid, max_layers=j)))
              for s,g in zip(test,gts)]
        out.append(float(np.median(errs)))
    return out

# C3 corpus: drift + 2 harmonics (A7 config)
c3 = make_corpus(CorpusConfig(n_samples=512, seed=101, duration_s=4.0,
                              genres=tuple(range(8)), bpm_range=(100,140)))
train3 = np.stack([s.motion.data for s in c3 if s.split=="train"])
test3 = [s for s in c3 if s.split=="test"]
t0=time.time()
hrvq3 = train_tokenizer(train3, tcfg("chain", 5))
curve = median_curve(hrvq3, test3, 5)
strict = all(curve[i] > curve[i+1] for i in range(5))
print(f"C3 ({time.time()-t0:.0f}s): strict={strict}; " + " ".join(f"{v:.4f}" for v in curve), flush=True)

# C4 corpus: no drift, 1 harmonic
c4 = make_corpus(CorpusConfig(n_samples=512, seed=101, duration_s=4.0,
                              genres=tuple(range(8)), bpm_range=(100,140),
                              drift_scale=0.0, harmonics=1))
train4 = np.stack([s.motion.data for s in c4 if s.split=="train"])
test4 = [s for s in c4 if s.split=="test"]
gts4 = [pose_positions(s.motion) for s in test4]
res={}
for label, cond, layers in (("HRVQ","chain",5), ("RVQ","none",5), ("VQ","none",0)):
    t0=time.time()
    m = train_tokenizer(train4, tcfg(cond, layers))
    errs=[mpjpe(g, pose_positions(decode(m, encode(m, s.motion).grid)))
          for s,g in zip(test4,gts4)]
    res[label]=float(np.median(errs))
    print(f"C4 {label}: {res[label]:.4f} ({time.time()-t0:.0f}s)", flush=True)
margin = 1-res['HRVQ']/res['VQ']
print(f"C4 ordering {res['HRVQ']<=res['RVQ']<=res['VQ']}, margin {margin:.2%}", flush=True)
