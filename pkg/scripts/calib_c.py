"""EXP-C: criteria 10 + 11 calibration — alignment ablation and BAS."""
import numpy as np, time, sys
sys.path.insert(0, "/root/pkg/src")
from dancegen.synth import make_corpus, CorpusConfig
from dancegen.tokenizer import TokenizerConfig, train_tokenizer
from dancegen.retrieval import (RetrievalConfig, train_retrieval, encode_motion, encode_music,
                                segment_latents)
from dancegen.generator import (GeneratorConfig, GenerationConfig, train_generator, generate,
                                masked_accuracy)
from dancegen.metrics import mmr_matching_score, beat_alignment_score, BeatSet
import dataclasses

cfg = CorpusConfig(n_samples=512, seed=101, duration_s=4.0, genres=tuple(range(8)), bpm_range=(100,140))
samples = make_corpus(cfg)
train = [s for s in samples if s.split=="train"]
test = [s for s in samples if s.split=="test"][:20]

t0=time.time()
tok = train_tokenizer(np.stack([s.motion.data for s in train]),
                      TokenizerConfig(codebook_size=512, code_dim=128, layers=5, hidden=32,
                                      steps=250, batch=8, crop_frames=64, lr=1e-3, warmup_steps=20,
                                      conditioning="chain", enc_lr_scale=0.2, seed=202,
                                      anchor_seqs=32, final_seqs=128))
print(f"tokenizer {time.time()-t0:.0f}s", flush=True)
mot = [s.motion.data for s in train]; feat = [s.track.features for s in train]
t0=time.time()
mmr_body = train_retrieval(mot, feat, RetrievalConfig(variant="body", hidden=48, steps=400, batch=48,
                                                      lr=1.5e-3, warmup_steps=20, seed=11, crop_frames=64))
mmr_whole = train_retrieval(mot, feat, RetrievalConfig(variant="whole", hidden=48, steps=350, batch=32,
                                                       lr=1.5e-3, warmup_steps=20, seed=12, crop_frames=64))
print(f"mmrs {time.time()-t0:.0f}s", flush=True)

def eval_gen(gen, label):
    run = GenerationConfig(seed=900)
    mms, bas_own, bas_shift = [], [], []
    for s in test:
        d = generate(gen, tok, s.track, dataclasses.replace(run, seed=hash(s.sample_id) % 2**32))
        z = encode_motion(mmr_whole, d); c = encode_music(mmr_whole, s.track)
        zs = segment_latents(mmr_whole, d); cs = segment_latents(mmr_whole, s.track)
        mms.append(mmr_matching_score(z, c, zs, cs))
        bas_own.append(beat_alignment_score(BeatSet(s.track.beat_times), d))
        bas_shift.append(beat_alignment_score(BeatSet(np.clip(s.track.beat_times + 0.25, 0,
                                                              s.track.duration - 1e-6)), d))
    win = float(np.mean(np.array(bas_own) > np.array(bas_shift)))
    print(f"{label}: MMR-MS med {np.median(mms):.4f}  BAS med {np.median(bas_own):.3f} "
          f"shifted {np.median(bas_shift):.3f} win {win:.2f}", flush=True)
    return float(np.median(mms)), win

for seed in (1, 2):
    for lam, label in ((0.5, "align"), (0.0, "noalign")):
        gcfg = GeneratorConfig(codebook_size=512, code_dim=128, layers_v=5, width=128, depth=2,
                               res_depth=2, heads=4, steps=250, batch=8, lr=1e-3, warmup_steps=25,
                               lambda_body=lam, lambda_whole=lam, seed=seed)
        t0=time.time()
        gen = train_generator(train, tok, mmr_body, mmr_whole, gcfg)
        acc = masked_accuracy(gen, tok, test[:10], ratio=0.5, seed=5)
        print(f"seed {seed} {label}: train {time.time()-t0:.0f}s, masked acc {acc:.3f} "
              f"({acc*512:.0f}x uniform)", flush=True)
        eval_gen(gen, f"seed {seed} {label}")
