"""Cross-modal retrieval: music and motion encoders into one unit-norm
256-dim space, trained with symmetric InfoNCE plus a motion reconstruction
decoder.  Frozen encoders later serve as alignment supervision for the token
generator and as the basis of the matching-score metric.

Two variants exist: "body" encodes the 263 body channels, "whole" the full
723-channel frames.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .errors import (
    ParameterError,
    ShapeError,
    TrainingFailureError,
    VariantError,
)
from .motion import DEFAULT_FPS, FRAME_WIDTH, MotionSequence, default_spans
from .nn import Tensor
from .nn.rng import generator
from .synth import MusicTrack, TRACK_FEATURE_DIM

VARIANT_WIDTHS = {"body": 263, "whole": FRAME_WIDTH}


@dataclass
class RetrievalConfig:
    variant: str = "whole"
    latent_dim: int = 256
    temperature: float = 0.1
    lambda_nce: float = 0.1
    negative_threshold: float = 0.8
    hidden: int = 64
    decoder_layers: int = 4
    heads: int = 4
    steps: int = 300
    batch: int = 128            # per the retrieval training protocol
    crop_frames: int = 0
    lr: float = 1e-4
    warmup_steps: int = 50
    filter_warmup_frac: float = 0.5  # negative filtering only after this point
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANT_WIDTHS:
            raise ParameterError(f"unknown variant {self.variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class _SeqEncoder(nn.Module):
    """Strided temporal convs, mean pool, projection to the sphere.

    The pooled features carry a large clip-independent component (gelu
    activations have positive mean), which after unit-normalization would
    start every latent in one tight cluster, a saddle for the contrastive
    loss.  A fixed pool-center measured on the training set is subtracted
    before projection so latents start spread out.
    """

    def __init__(self, c_in: int, hidden: int, out_dim: int, rng):
        super().__init__()
        self.conv0 = nn.Conv1d(c_in, hidden, 3, rng, padding=1)
        self.down1 = nn.Conv1d(hidden, hidden, 4, rng, stride=2, padding=1)
        self.down2 = nn.Conv1d(hidden, hidden, 4, rng, stride=2, padding=1)
        self.conv1 = nn.Conv1d(hidden, hidden, 3, rng, padding=1)
        self.proj = nn.Linear(hidden, out_dim, rng)
        self.pool_center = np.zeros(hidden)

    def pooled(self, x: Tensor) -> Tensor:
        h = self.conv0(x).gelu()
        h = self.down1(h).gelu()
        h = self.down2(h).gelu()
        h = self.conv1(h).gelu()
        return h.mean(axis=2)

    def __call__(self, x: Tensor) -> Tensor:
        z = self.proj(self.pooled(x) - Tensor(self.pool_center[None, :]))
        norm = ((z * z).sum(axis=-1, keepdims=True) + 1e-12).sqrt()
        return z / norm


class _MotionDecoder(nn.Module):
    """Transformer over token-rate queries conditioned on concat(z, c)."""

    def __init__(self, d_motion: int, latent_dim: int, width: int, layers: int,
                 heads: int, rng, max_tokens: int = 256):
        super().__init__()
        self.d_motion = d_motion
        self.cond = nn.Linear(2 * latent_dim, width, rng)
        self.pos = nn.Embedding(max_tokens, width, rng, scale=0.05)
        self.blocks = [nn.TransformerBlock(width, heads, rng) for _ in range(layers)]
        self.head = nn.Linear(width, 4 * d_motion, rng)
        self.head.weight.data[:] = 0.0  # reconstruction starts at zero, so the
        # early loss cannot swamp the contrastive term

    def __call__(self, z: Tensor, c: Tensor, n_frames: int) -> Tensor:
        n = n_frames // 4
        B = z.shape[0]
        cond = self.cond(nn.concat([z, c], axis=-1))  # (B, width)
        pos = self.pos(np.tile(np.arange(n), (B, 1)))  # (B, n, width)
        h = pos + cond.reshape(B, 1, -1)
        for block in self.blocks:
            h = block(h)
        out = self.head(h)  # (B, n, 4*D)
        return out.reshape(B, n_frames, self.d_motion)


class DualEncoder(nn.Module):
    def __init__(self, config: RetrievalConfig):
        super().__init__()
        self.config = config
        self.motion_width = VARIANT_WIDTHS[config.variant]
        rng = generator(config.seed, "retrieval-init")
        self.motion_enc = _SeqEncoder(self.motion_width, config.hidden, config.latent_dim, rng)
        self.music_enc = _SeqEncoder(TRACK_FEATURE_DIM, config.hidden, config.latent_dim, rng)
        self.decoder = _MotionDecoder(self.motion_width, config.latent_dim, config.hidden,
                                      config.decoder_layers, config.heads, rng)
        self.motion_mean = np.zeros(self.motion_width)
        self.motion_std = np.ones(self.motion_width)
        self.music_mean = np.zeros(TRACK_FEATURE_DIM)
        self.music_std = np.ones(TRACK_FEATURE_DIM)

    def set_normalizers(self, motions: np.ndarray, feats: np.ndarray) -> None:
        self.motion_mean = motions.mean(axis=0)
        std = motions.std(axis=0)
        self.motion_std = np.where(std < 1e-4, 1.0, std)
        self.music_mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        self.music_std = np.where(std < 1e-4, 1.0, std)

    def set_pool_centers(self, motion_batch: np.ndarray, feat_batch: np.ndarray) -> None:
        """Measure the mean pooled features of training clips (constants)."""
        x = (self.motion_slice(motion_batch) - self.motion_mean) / self.motion_std
        pooled = self.motion_enc.pooled(Tensor(x.transpose(0, 2, 1))).data
        self.motion_enc.pool_center = pooled.mean(axis=0)
        x = (feat_batch - self.music_mean) / self.music_std
        pooled = self.music_enc.pooled(Tensor(x.transpose(0, 2, 1))).data
        self.music_enc.pool_center = pooled.mean(axis=0)

    def motion_slice(self, frames: np.ndarray) -> np.ndarray:
        """Full 723-wide frames -> this variant's channel slice."""
        if frames.shape[-1] == self.motion_width:
            return frames
        if frames.shape[-1] == FRAME_WIDTH and self.config.variant == "body":
            return frames[..., default_spans().indices("body")]
        raise VariantError(
            f"motion width {frames.shape[-1]} does not fit variant {self.config.variant!r}"
        )

    def encode_motion_batch(self, frames: np.ndarray) -> Tensor:
        sliced = self.motion_slice(frames)
        x = (sliced - self.motion_mean) / self.motion_std
        return self.motion_enc(Tensor(x.transpose(0, 2, 1)))

    def encode_music_batch(self, feats: np.ndarray) -> Tensor:
        x = (feats - self.music_mean) / self.music_std
        return self.music_enc(Tensor(x.transpose(0, 2, 1)))

    def state(self) -> dict[str, np.ndarray]:
        arrays = dict(self.state_arrays())
        arrays["norm.motion_mean"] = self.motion_mean
        arrays["norm.motion_std"] = self.motion_std
        arrays["norm.music_mean"] = self.music_mean
        arrays["norm.music_std"] = self.music_std
        arrays["norm.motion_pool_center"] = self.motion_enc.pool_center
        arrays["norm.music_pool_center"] = self.music_enc.pool_center
        return arrays

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("norm.")})
        self.motion_mean = arrays["norm.motion_mean"].astype(np.float64)
        self.motion_std = arrays["norm.motion_std"].astype(np.float64)
        self.music_mean = arrays["norm.music_mean"].astype(np.float64)
        self.music_std = arrays["norm.music_std"].astype(np.float64)
        self.motion_enc.pool_center = arrays["norm.motion_pool_center"].astype(np.float64)
        self.music_enc.pool_center = arrays["norm.music_pool_center"].astype(np.float64)


# -- public operations ---------------------------------------------------------


def encode_motion(model: DualEncoder, seq: MotionSequence | np.ndarray) -> np.ndarray:
    frames = seq.data if isinstance(seq, MotionSequence) else np.asarray(seq)
    return encode_motion_many(model, frames[None])[0]


def encode_motion_many(model: DualEncoder, frames: np.ndarray) -> np.ndarray:
    return model.encode_motion_batch(frames).data


def encode_music(model: DualEncoder, track: MusicTrack | np.ndarray) -> np.ndarray:
    feats = track.features if isinstance(track, MusicTrack) else np.asarray(track)
    return encode_music_many(model, feats[None])[0]


def encode_music_many(model: DualEncoder, feats: np.ndarray) -> np.ndarray:
    return model.encode_music_batch(feats).data


def segment_latents(model: DualEncoder, item, seconds: float = 1.0) -> np.ndarray:
    """Latents of non-overlapping 1-second windows, (T_segments, 256)."""
    if isinstance(item, MotionSequence):
        frames, rate, enc = item.data, item.fps, encode_motion_many
    elif isinstance(item, MusicTrack):
        frames, rate, enc = item.features, item.feature_rate, encode_music_many
    else:
        raise ParameterError("segment_latents expects a MotionSequence or MusicTrack")
    win = int(round(seconds * rate))
    count = frames.shape[0] // win
    if count < 1:
        raise ParameterError("clip shorter than one segment")
    segs = np.stack([frames[i * win:(i + 1) * win] for i in range(count)])
    return enc(model, segs)


def info_nce(S, keep_mask: np.ndarray | None = None) -> Tensor:
    """Symmetric InfoNCE over a similarity matrix (temperature already applied).

    keep_mask marks which entries may serve as negatives (diagonal positives
    are always kept); None keeps everything.  Stabilized with detached row or
    column maxima, so the value is exact for any scale of S.
    """
    t = S if isinstance(S, Tensor) else Tensor(np.asarray(S, dtype=np.float64))
    n, m = t.shape
    if n != m:
        raise ShapeError(f"similarity matrix must be square, got {t.shape}")
    if not np.all(np.isfinite(t.data)):
        raise ShapeError("similarity matrix must be finite")
    if keep_mask is None:
        pen_rows = pen_cols = None
    else:
        keep = np.asarray(keep_mask, dtype=bool).copy()
        np.fill_diagonal(keep, True)
        pen_rows = Tensor(np.where(keep, 0.0, -np.inf))
        pen_cols = Tensor(np.where(keep.T, 0.0, -np.inf))
    diag = nn.gather_last(t, np.arange(n))

    def direction(mat: Tensor, penalty) -> Tensor:
        masked = mat if penalty is None else mat + penalty
        shift = Tensor(np.max(masked.data, axis=1, keepdims=True))
        logz = (masked - shift).exp().sum(axis=1, keepdims=True).log() + shift
        return (diag - logz.reshape(n)).mean()

    rows = direction(t, pen_rows)
    cols = direction(t.transpose(1, 0), pen_cols)
    return (rows + cols) * -0.5


def false_negative_mask(motion_latents: np.ndarray, music_latents: np.ndarray,
                        threshold: float = 0.8) -> np.ndarray:
    """Negatives to keep: drop pair (i, j) when either modality's latents for
    i and j are closer than the threshold (the pair is likely a false
    negative)."""
    zm = np.asarray(motion_latents)
    cm = np.asarray(music_latents)
    sim = np.maximum(zm @ zm.T, cm @ cm.T)
    keep = sim <= threshold
    np.fill_diagonal(keep, True)
    return keep


def similarity_matrix(z: Tensor, c: Tensor, temperature: float) -> Tensor:
    return (z @ c.transpose(1, 0)) * (1.0 / temperature)


# -- training ---------------------------------------------------------------------


def train_retrieval(motions: np.ndarray | list, features: np.ndarray | list,
                    config: RetrievalConfig, log: list | None = None) -> DualEncoder:
    """Fit the dual encoder on paired (motion frames, music features)."""
    motions = list(motions)
    features = list(features)
    if len(motions) != len(features) or not motions:
        raise ParameterError("need equal nonempty motion and feature lists")
    model = DualEncoder(config)
    model.set_normalizers(
        np.concatenate([model.motion_slice(m) for m in motions], axis=0),
        np.concatenate(features, axis=0),
    )
    center_count = min(len(motions), 64)
    model.set_pool_centers(np.stack(motions[:center_count]), np.stack(features[:center_count]))
    opt = nn.AdamW(model.parameters(), lr=config.lr)
    batch_rng = generator(config.seed, "retrieval-batches")
    n = len(motions)
    batch_size = min(config.batch, n)
    motions = np.stack([model.motion_slice(m) for m in motions])
    features = np.stack(features)

    for step in range(config.steps):
        idx = batch_rng.choice(n, size=batch_size, replace=False)
        mot = motions[idx]
        feat = features[idx]
        if config.crop_frames and config.crop_frames < mot.shape[1]:
            crop = config.crop_frames
            start = int(batch_rng.integers(0, mot.shape[1] - crop + 1))
            mot = mot[:, start:start + crop]
            row = int(round(start * feat.shape[1] / motions.shape[1]))
            feat = feat[:, row:row + crop]
        z = model.encode_motion_batch(mot)
        c = model.encode_music_batch(feat)
        S = similarity_matrix(z, c, config.temperature)
        # fresh encoders put every latent in one tight cluster, so the
        # false-negative filter would mask all negatives; hold it back until
        # the space has spread out
        if step >= config.filter_warmup_frac * config.steps:
            keep = false_negative_mask(z.data, c.data, config.negative_threshold)
        else:
            keep = None
        nce = info_nce(S, keep)
        rec = model.decoder(z, c, mot.shape[1] - mot.shape[1] % 4)
        target = (mot[:, :rec.shape[1]] - model.motion_mean) / model.motion_std
        rec_loss = ((rec - Tensor(target)) ** 2.0).mean()
        total = rec_loss + config.lambda_nce * nce
        if not np.isfinite(total.data):
            raise TrainingFailureError("retrieval loss diverged", step)
        model.zero_grad()
        total.backward()
        opt.step(lr=nn.warmup_lr(step, config.lr, config.warmup_steps))
        if log is not None:
            log.append({"step": step, "total": float(total.data),
                        "nce": float(nce.data), "recon": float(rec_loss.data)})
    return model


# -- retrieval evaluation ------------------------------------------------------------


def rank_by_cosine(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Indices of gallery rows by descending cosine similarity to the query."""
    sims = gallery @ query
    return np.argsort(-sims, kind="stable")


def retrieve(model: DualEncoder, query_track: MusicTrack, gallery: list, k: int):
    """Top-k gallery motions for a music query; returns (indices, similarities).

    Gallery items may be MotionSequence objects, (T, D) frame arrays, or
    already-encoded latent vectors.
    """
    if not gallery:
        raise ParameterError("gallery is empty")
    if k > len(gallery):
        raise ParameterError(f"k={k} exceeds gallery size {len(gallery)}")
    c = encode_music(model, query_track)
    latents = np.stack([
        g if isinstance(g, np.ndarray) and g.ndim == 1 else encode_motion(model, g)
        for g in gallery
    ])
    order = rank_by_cosine(c, latents)[:k]
    return order, latents[order] @ c


def recall_at_k(ranks: np.ndarray, k: int) -> float:
    """ranks are 1-based ranks of the true pair per query."""
    return float(np.mean(ranks <= k))


def median_rank(ranks: np.ndarray) -> float:
    return float(np.median(ranks))


def retrieval_ranks(model: DualEncoder, motions: list, tracks: list,
                    direction: str = "music->motion") -> np.ndarray:
    """1-based rank of each query's true pair over the full gallery."""
    z = np.stack([encode_motion(model, m) for m in motions])
    c = np.stack([encode_music(model, t) for t in tracks])
    sims = c @ z.T if direction == "music->motion" else z @ c.T
    n = sims.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        order = np.argsort(-sims[i], kind="stable")
        ranks[i] = int(np.where(order == i)[0][0]) + 1
    return ranks


# -- checkpoints ------------------------------------------------------------------


def save_retrieval(path, model: DualEncoder) -> None:
    from .io import save_checkpoint

    save_checkpoint(path, "retrieval", model.config.to_dict(), model.config.seed, model.state())


def load_retrieval(path) -> DualEncoder:
    from .io import load_checkpoint

    kind, config, _seed, arrays = load_checkpoint(path)
    if kind != "retrieval":
        raise ParameterError(f"{path}: expected a retrieval checkpoint, got {kind!r}")
    model = DualEncoder(RetrievalConfig(**config))
    model.load_state(arrays)
    return model
