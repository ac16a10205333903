"""Motion tokenizer: per-part temporal encoders, stacked residual quantizers
with a body->hands->face conditioning chain, and a whole-body decoder.

Layer v of the hand stack quantizes a mix of the hand residual with the
quantized body vector of the same layer (and the face stack with the hand
vector), so the cheaper parts are encoded relative to what the body already
says.  Setting conditioning="none" turns the model into independent residual
stacks; layers=0 turns it into plain single-layer quantization.

Training uses a Gumbel-softmax relaxation of the code choice (temperature
annealed), codebooks follow exponential moving averages of their assigned
latents with a dead-code reset at epoch boundaries, and with probability
`dropout_q` a random suffix of layers is disabled for the step so that every
prefix of the stack remains a usable decode path.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from . import nn
from .errors import (
    InvalidTokenError,
    NumericInputError,
    ParameterError,
    TooShortError,
    TrainingFailureError,
)
from .motion import FRAME_WIDTH, MotionSequence, default_spans
from .nn import Tensor
from .nn.rng import generator

DOWNSCALE = 4  # two stride-2 stages


@dataclass
class TokenizerConfig:
    codebook_size: int = 512
    code_dim: int = 512
    layers: int = 5                  # residual layers; layers+1 quantizers total
    hidden: int = 128
    dropout_q: float = 0.2
    alpha: float = 0.02              # body commitment weight
    beta: float = 0.02               # hands
    gamma: float = 0.02              # face
    ema_decay: float = 0.99
    conditioning: str = "chain"      # "chain" or "none"
    latent_norm: str = "rms"         # "rms" or "const" (see _Encoder)
    estimator: str = "st"            # "st" or "gumbel"
    gumbel_start: float = 1.0
    gumbel_end: float = 0.1
    steps: int = 300
    batch: int = 256
    crop_frames: int = 0             # 0 trains on full sequences
    lr: float = 1e-3
    enc_lr_scale: float = 0.2        # encoders move slower than the base lr
    dec_lr_scale: float = 0.0        # conv-trunk refinement; 0 keeps the decoder
    # linear (bypass refits only), the stable regime at desk step budgets
    mixer_lr_scale: float = 0.0      # 0 freezes the conditioning transforms at
    # identity (the chain then matches plain residual stacks exactly); paper
    # -scale schedules can afford to train them
    refit_every: int = 25            # closed-form bypass refits (0 disables)
    anchor_seqs: int = 32            # sequences used for refits
    final_passes: int = 2            # EMA-only epochs before the last refit
    final_seqs: int = 128            # cap on sequences per finalization epoch
    warmup_steps: int = 100
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TokenGrid:
    """Token indices shaped (layers+1, parts=3, timesteps)."""

    indices: np.ndarray
    n_frames: int
    fps: int = 30

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.ndim != 3 or self.indices.shape[1] != 3:
            raise ParameterError(f"token grid must be (layers, 3, n), got {self.indices.shape}")

    @property
    def n(self) -> int:
        return self.indices.shape[2]

    @property
    def layer_count(self) -> int:
        return self.indices.shape[0]


class Codebook:
    """K code vectors maintained by EMA over assigned latents."""

    def __init__(self, size: int, dim: int):
        self.codes = np.zeros((size, dim))
        self.ema_count = np.zeros(size)
        self.ema_sum = np.zeros((size, dim))
        self.usage = np.zeros(size, dtype=np.int64)
        self.initialized = False

    @property
    def size(self) -> int:
        return self.codes.shape[0]

    def init_from(self, latents: np.ndarray, rng: np.random.Generator) -> None:
        k, d = self.codes.shape
        pool = latents
        if pool.shape[0] < k:
            reps = -(-k // pool.shape[0])
            pool = np.tile(pool, (reps, 1)) + 0.01 * rng.normal(size=(reps * pool.shape[0], d))
        pick = rng.permutation(pool.shape[0])[:k]
        self.codes = pool[pick].copy()
        self.ema_count = np.full(k, 0.1)
        self.ema_sum = self.codes * self.ema_count[:, None]
        self.initialized = True

    def assign(self, latents: np.ndarray) -> np.ndarray:
        """Nearest-code index per row (expanded-form distances, fast path)."""
        d2 = (
            (latents * latents).sum(axis=1, keepdims=True)
            - 2.0 * latents @ self.codes.T
            + (self.codes * self.codes).sum(axis=1)[None, :]
        )
        return np.argmin(d2, axis=1)

    def ema_update(self, latents: np.ndarray, idx: np.ndarray, decay: float) -> None:
        k = self.size
        counts = np.bincount(idx, minlength=k).astype(np.float64)
        sums = np.zeros_like(self.ema_sum)
        np.add.at(sums, idx, latents)
        self.ema_count = decay * self.ema_count + (1 - decay) * counts
        self.ema_sum = decay * self.ema_sum + (1 - decay) * sums
        alive = self.ema_count > 0
        self.codes[alive] = self.ema_sum[alive] / self.ema_count[alive, None]
        self.usage += np.bincount(idx, minlength=k)

    def reset_dead(self, latents: np.ndarray, rng: np.random.Generator) -> int:
        """Reinitialize codes unused since the last reset; returns how many."""
        dead = np.flatnonzero(self.usage == 0)
        if dead.size and latents.shape[0]:
            pick = rng.integers(0, latents.shape[0], size=dead.size)
            self.codes[dead] = latents[pick]
            self.ema_count[dead] = 0.1
            self.ema_sum[dead] = self.codes[dead] * 0.1
        self.usage[:] = 0
        return int(dead.size)


def quantize_vector(codebook: Codebook, v: np.ndarray) -> tuple[int, np.ndarray]:
    """Exact nearest code: argmin over full Euclidean distances, first index wins ties."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericInputError("query vector contains NaN or inf")
    d2 = ((codebook.codes - v[None, :]) ** 2).sum(axis=1)
    idx = int(np.argmin(d2))
    return idx, codebook.codes[idx].copy()


class _Encoder(nn.Module):
    """Two stride-2 stages with residual blocks plus a strided linear bypass.

    The output scale must stay anchored so the EMA codebooks and the
    straight-through loop cannot drift apart.  Two modes: "rms" divides each
    timestep by its own RMS (hard anchor, but additive motion content becomes
    nonlinearly entangled and a linear readout cannot undo it); "const"
    divides by one dataset constant measured at train start (keeps the latent
    linear in the input, relies on the slow encoder schedule for stability).
    """

    def __init__(self, c_in: int, hidden: int, d: int, rng, norm: str = "rms"):
        super().__init__()
        self.norm = norm
        self.scale = 1.0
        self.conv0 = nn.Conv1d(c_in, hidden, 3, rng, padding=1)
        self.down1 = nn.Conv1d(hidden, hidden, 4, rng, stride=2, padding=1)
        self.res1 = nn.ResConv1d(hidden, rng)
        self.down2 = nn.Conv1d(hidden, hidden, 4, rng, stride=2, padding=1)
        self.res2 = nn.ResConv1d(hidden, rng)
        self.head = nn.Conv1d(hidden, d, 3, rng, padding=1)
        self.skip = nn.Conv1d(c_in, d, 4, rng, stride=4)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv0(x).gelu()
        h = self.res1(self.down1(h).gelu())
        h = self.res2(self.down2(h).gelu())
        out = self.head(h) + self.skip(x)
        if self.norm == "const":
            return out * (1.0 / self.scale)
        rms = ((out * out).mean(axis=1, keepdims=True) + 1e-6).sqrt()
        return out / rms


class _Decoder(nn.Module):
    """Token-rate convs, two x2 upsamplings, and a phase-resolved linear bypass.

    The bypass maps each code-sum vector to all four frames of its token
    stride at once (a stride-4 transposed convolution written as a 1x1 conv
    with 4x output channels), so the best linear decode is reachable in
    closed form; the conv head refines nonlinearly on top and sees one-hot
    phase channels for sub-token detail.
    """

    def __init__(self, d: int, hidden: int, c_out: int, rng):
        super().__init__()
        self.c_out = c_out
        self.conv0 = nn.Conv1d(3 * d, hidden, 3, rng, padding=1)
        self.res1 = nn.ResConv1d(hidden, rng)
        self.up1 = nn.Conv1d(hidden, hidden, 3, rng, padding=1)
        self.res2 = nn.ResConv1d(hidden, rng)
        self.up2 = nn.Conv1d(hidden, hidden, 3, rng, padding=1)
        self.head = nn.Conv1d(hidden + 4, c_out, 3, rng, padding=1)
        self.skip = nn.Conv1d(3 * d, DOWNSCALE * c_out, 1, rng)
        self.head.weight.data[:] = 0.0  # start at zero output, no init spike
        self.skip.weight.data *= 0.1

    def __call__(self, x: Tensor) -> Tensor:
        h = self.res1(self.conv0(x).gelu())
        h = self.up1(h.upsample_repeat(2)).gelu()
        h = self.res2(h)
        h = self.up2(h.upsample_repeat(2)).gelu()
        B, _, T = h.shape
        phase = np.tile(np.eye(DOWNSCALE), (B, 1, T // DOWNSCALE)).reshape(B, DOWNSCALE, T)
        h = nn.concat([h, Tensor(phase)], axis=1)
        n = x.shape[2]
        lin = self.skip(x).reshape(B, DOWNSCALE, self.c_out, n)
        lin = lin.transpose(0, 2, 3, 1).reshape(B, self.c_out, DOWNSCALE * n)
        return self.head(h) + lin


class _Mixer(nn.Module):
    """Channel concat -> two per-timestep layers -> window-3 temporal conv.

    The output is the residual plus a bounded correction.  The residual
    recursion subtracts transformed codes from untransformed residuals, so an
    unbounded transform compounds its own drift layer after layer; starting
    at identity (zero-init last conv) and clamping the correction with a
    scaled tanh keeps the ladder contractive while still letting the hint
    steer code selection.
    """

    BOUND = 0.5

    def __init__(self, d: int, rng):
        super().__init__()
        self.fc1 = nn.Conv1d(2 * d, d, 1, rng)
        self.fc2 = nn.Conv1d(d, d, 1, rng)
        self.conv = nn.Conv1d(d, d, 3, rng, padding=1)
        self.conv.weight.data[:] = 0.0

    def __call__(self, residual: Tensor, hint: Tensor) -> Tensor:
        h = nn.concat([residual, hint], axis=1)
        corr = self.conv(self.fc2(self.fc1(h).gelu()))
        return residual + (corr * (1.0 / self.BOUND)).tanh() * self.BOUND


PARTS = ("body", "hand", "face")


class MotionTokenizer(nn.Module):
    def __init__(self, config: TokenizerConfig):
        super().__init__()
        self.config = config
        self.spans = default_spans()
        rng = generator(config.seed, "tokenizer-init")
        d, hid = config.code_dim, config.hidden
        widths = {p: self.spans.indices(p).size for p in PARTS}
        self.encoders = [ _Encoder(widths[p], hid, d, rng, norm=config.latent_norm)
                          for p in PARTS ]
        self.decoder = _Decoder(d, hid, FRAME_WIDTH, rng)
        v1 = config.layers + 1
        if config.conditioning == "chain":
            # one input mixer plus one mixer per layer, for hands and face
            self.hand_mixers = [ _Mixer(d, rng) for _ in range(v1 + 1) ]
            self.face_mixers = [ _Mixer(d, rng) for _ in range(v1 + 1) ]
        elif config.conditioning != "none":
            raise ParameterError(f"unknown conditioning {config.conditioning!r}")
        self.codebooks = {p: [Codebook(config.codebook_size, d) for _ in range(v1)] for p in PARTS}
        # channel statistics of the training corpus; identity until fitted
        self.norm_mean = np.zeros(FRAME_WIDTH)
        self.norm_std = np.ones(FRAME_WIDTH)

    # -- helpers ----------------------------------------------------------

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.norm_mean) / self.norm_std

    def set_normalizer(self, frames: np.ndarray) -> None:
        self.norm_mean = frames.mean(axis=0)
        std = frames.std(axis=0)
        self.norm_std = np.where(std < 1e-4, 1.0, std)

    def part_slices(self, batch: np.ndarray) -> dict[str, np.ndarray]:
        """(B, T, 723) normalized -> per-part (B, C_part, T)."""
        return {p: batch[:, :, self.spans.indices(p)].transpose(0, 2, 1) for p in PARTS}

    def encode_latents(self, batch: np.ndarray) -> dict[str, Tensor]:
        """Per-part encoder outputs (B, d, n); T must be a multiple of 4."""
        parts = self.part_slices(self.normalize(batch))
        return {p: enc(Tensor(parts[p])) for p, enc in zip(PARTS, self.encoders)}

    def _mixer(self, part: str, slot: int) -> _Mixer:
        mixers = self.hand_mixers if part == "hand" else self.face_mixers
        return mixers[slot]  # slot 0 is the input mixer, slot v+1 is layer v

    # -- quantizer ladders --------------------------------------------------

    def ladder(self, latents: dict[str, Tensor], active_layers: int | None = None,
               soft_tau: float | None = None, gumbel_rng: np.random.Generator | None = None):
        """Run the residual stacks.

        With soft_tau=None the code choice is hard: each part's decoder input
        gets a straight-through estimator (stack-level for the body, per-layer
        through the mixers for the chained parts) and the commitment residuals
        subtract detached codes.  With a temperature the code choice becomes a
        softmax mixture over the codebook (optionally Gumbel-perturbed), which
        makes the whole ladder differentiable end to end.

        Returns per part: token indices, quantizer inputs (for EMA updates),
        the initial residual tensor, per-layer code values, per-layer
        commitment residual tensors, the summed decoder input tensor and the
        final residual.
        """
        v1 = self.config.layers + 1 if active_layers is None else active_layers
        chain = self.config.conditioning == "chain"
        hard = soft_tau is None
        # per-layer straight-through exists to feed gradient into the mixers;
        # with frozen mixers it would only overcount the encoder gradient
        # (V+1 estimator copies), so fall back to stack-level ST then
        chain_st = chain and self.config.mixer_lr_scale > 0
        out = {}
        for part in PARTS:
            z = latents[part]
            if chain and part != "body":
                prev = out[PARTS[PARTS.index(part) - 1]]
                hints = prev["code_tensors"]
                r = self._mixer(part, 0)(z, hints[0])
            else:
                hints = None
            if not (chain and part != "body"):
                r = z
            initial = r
            indices, q_inputs, code_values, code_tensors, commit_residuals = [], [], [], [], []
            stack_terms = []
            for v in range(v1):
                q_in = self._mixer(part, v + 1)(r, hints[v]) if hints is not None else r
                idx, code = self._quantize(part, v, q_in, soft_tau, gumbel_rng)
                indices.append(idx)
                q_inputs.append(np.ascontiguousarray(
                    q_in.data.transpose(0, 2, 1).reshape(-1, q_in.shape[1])))
                commit_residuals.append(r)
                code_values.append(code.data)
                if hard and hints is not None and chain_st:
                    st = q_in + Tensor(code.data - q_in.data)  # train the mixer
                    stack_terms.append(st)
                    code_tensors.append(st)
                else:
                    stack_terms.append(code)
                    code_tensors.append(code)
                r = r - (Tensor(code.data) if hard else code)
            if hard and (hints is None or not chain_st):
                # stack-level straight-through: identity gradient to the encoder
                hard_sum = np.sum([c for c in code_values], axis=0)
                stack = initial + Tensor(hard_sum - initial.data)
            else:
                stack = _sum_tensors(stack_terms)
            out[part] = {
                "indices": indices,
                "q_inputs": q_inputs,
                "initial": initial,
                "code_values": code_values,
                "code_tensors": code_tensors,
                "commit_residuals": commit_residuals,
                "stack": stack,
                "final_residual": r,
            }
        return out

    def _quantize(self, part, v, q_in: Tensor, soft_tau, gumbel_rng):
        """One codebook lookup; returns (indices (B, n), code Tensor (B, d, n))."""
        B, d, n = q_in.shape
        flat = q_in.transpose(0, 2, 1).reshape(B * n, d)
        cb = self.codebooks[part][v]
        idx = cb.assign(flat.data)
        if soft_tau is None:
            code = Tensor(cb.codes[idx])
        else:
            codes = Tensor(cb.codes)
            d2 = (
                (flat * flat).sum(axis=1, keepdims=True)
                - 2.0 * (flat @ codes.transpose(1, 0))
                + Tensor((cb.codes * cb.codes).sum(axis=1)[None, :])
            )
            # scale the temperature by the current nearest-distance level so a
            # given tau means the same softness whatever the latent scale; the
            # scale stays in the graph, keeping the relaxation exactly
            # differentiable end to end
            scale = nn.gather_last(d2, idx).mean() + 1e-6
            logits = d2 / (scale * (-soft_tau))
            if gumbel_rng is not None:
                u = gumbel_rng.uniform(1e-12, 1.0, size=(B * n, cb.size))
                logits = logits + Tensor(-np.log(-np.log(u)))
            code = nn.softmax(logits, axis=-1) @ codes
        return idx.reshape(B, n), code.reshape(B, n, d).transpose(0, 2, 1)

    # -- persistence --------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        arrays = dict(self.state_arrays())
        for p in PARTS:
            for v, cb in enumerate(self.codebooks[p]):
                arrays[f"codebook.{p}.{v}.codes"] = cb.codes
                arrays[f"codebook.{p}.{v}.ema_count"] = cb.ema_count
                arrays[f"codebook.{p}.{v}.ema_sum"] = cb.ema_sum
                arrays[f"codebook.{p}.{v}.usage"] = cb.usage
        arrays["norm.mean"] = self.norm_mean
        arrays["norm.std"] = self.norm_std
        arrays["norm.enc_scales"] = np.array([e.scale for e in self.encoders])
        return arrays

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.load_state_arrays({k: v for k, v in arrays.items() if "." in k and not k.startswith(("codebook.", "norm."))})
        for p in PARTS:
            for v, cb in enumerate(self.codebooks[p]):
                cb.codes = arrays[f"codebook.{p}.{v}.codes"].astype(np.float64)
                cb.ema_count = arrays[f"codebook.{p}.{v}.ema_count"].astype(np.float64)
                cb.ema_sum = arrays[f"codebook.{p}.{v}.ema_sum"].astype(np.float64)
                cb.usage = arrays[f"codebook.{p}.{v}.usage"].astype(np.int64)
                cb.initialized = True
        self.norm_mean = arrays["norm.mean"].astype(np.float64)
        self.norm_std = arrays["norm.std"].astype(np.float64)
        for enc, s in zip(self.encoders, arrays.get("norm.enc_scales", np.ones(3))):
            enc.scale = float(s)


# -- public operations ----------------------------------------------------------


@dataclass
class EncodeResult:
    grid: TokenGrid
    quantized: dict[str, list[np.ndarray]]       # per part, per layer (n, d)
    initial: dict[str, np.ndarray]               # pre-quantization latent (n, d)
    final_residual: dict[str, np.ndarray]        # what the stack left over (n, d)


def _pad_frames(data: np.ndarray) -> np.ndarray:
    n = data.shape[0]
    pad = (-n) % DOWNSCALE
    if pad:
        data = np.concatenate([data, np.repeat(data[-1:], pad, axis=0)], axis=0)
    return data


def encode(model: MotionTokenizer, seq: MotionSequence) -> EncodeResult:
    if seq.frames < DOWNSCALE:
        raise TooShortError(f"need at least {DOWNSCALE} frames, got {seq.frames}")
    data = _pad_frames(seq.data)
    latents = model.encode_latents(data[None])
    ladder = model.ladder(latents)
    v1 = model.config.layers + 1
    n = latents["body"].shape[2]
    indices = np.zeros((v1, 3, n), dtype=np.int64)
    quantized, initial, final = {}, {}, {}
    for pi, part in enumerate(PARTS):
        res = ladder[part]
        for v in range(v1):
            indices[v, pi] = res["indices"][v][0]
        quantized[part] = [c[0].T.copy() for c in res["code_values"]]
        initial[part] = res["initial"].data[0].T.copy()
        final[part] = res["final_residual"].data[0].T.copy()
    return EncodeResult(TokenGrid(indices, seq.frames, seq.fps), quantized, initial, final)


def code_sums(model: MotionTokenizer, grid: TokenGrid, max_layers: int | None = None) -> np.ndarray:
    """Sum the code vectors of layers 0..max_layers-1 -> (3d, n) decoder input."""
    k = model.config.codebook_size
    layers = grid.layer_count if max_layers is None else max_layers
    if not 1 <= layers <= grid.layer_count:
        raise ParameterError(f"max_layers {max_layers} outside [1, {grid.layer_count}]")
    if grid.indices.min() < 0 or grid.indices.max() >= k:
        raise InvalidTokenError(f"token index outside [0, {k})")
    sums = []
    for pi, part in enumerate(PARTS):
        total = np.zeros((grid.n, model.config.code_dim))
        for v in range(layers):
            total += model.codebooks[part][v].codes[grid.indices[v, pi]]
        sums.append(total.T)
    return np.concatenate(sums, axis=0)


def decoder_apply(model: MotionTokenizer, sums: Tensor, denormalize: bool = True) -> Tensor:
    """Decoder over (B, 3d, n) code sums -> (B, T, 723) frames."""
    out = model.decoder(sums).transpose(0, 2, 1)
    if denormalize:
        out = out * Tensor(model.norm_std[None, None, :]) + Tensor(model.norm_mean[None, None, :])
    return out


def decode(model: MotionTokenizer, grid: TokenGrid, max_layers: int | None = None) -> MotionSequence:
    sums = code_sums(model, grid, max_layers)
    frames = decoder_apply(model, Tensor(sums[None])).data[0]
    return MotionSequence(frames[:grid.n_frames], fps=grid.fps)


@dataclass
class TokenizerLoss:
    total: Tensor
    recon: Tensor
    embed_body: Tensor
    embed_hand: Tensor
    embed_face: Tensor
    ladder: dict


def tokenizer_loss(model: MotionTokenizer, batch: np.ndarray,
                   active_layers: int | None = None,
                   soft_tau: float | None = None,
                   gumbel_rng: np.random.Generator | None = None,
                   commit_targets: dict | None = None) -> TokenizerLoss:
    """Reconstruction L1 plus per-part commitment terms.

    `batch` is (B, T, 723) raw frames.  The default is the hard forward with
    straight-through gradients; a soft temperature switches to the fully
    differentiable Gumbel-softmax relaxation of the same loss.  The
    commitment terms stop the gradient at the quantized vectors; for
    finite-difference checks pass `commit_targets` (per part, per layer) so
    those frozen constants stay fixed while parameters are perturbed.
    """
    if batch.ndim != 3 or batch.shape[0] == 0:
        raise ParameterError("batch must be nonempty (B, T, 723)")
    batch = _pad_batch(batch)
    latents = model.encode_latents(batch)
    ladder = model.ladder(latents, active_layers=active_layers,
                          soft_tau=soft_tau, gumbel_rng=gumbel_rng)
    sums = nn.concat([ladder[p]["stack"] for p in PARTS], axis=1)
    recon = decoder_apply(model, sums, denormalize=False)
    target = Tensor(model.normalize(batch))
    recon_loss = (recon - target).abs().mean()

    # commitment over the residual layers (v >= 1), stop-gradient on the codes
    embeds = {}
    for part in PARTS:
        res = ladder[part]
        total = Tensor(np.zeros(()))
        for v in range(1, len(res["commit_residuals"])):
            sg = (commit_targets[part][v] if commit_targets is not None
                  else res["code_values"][v])
            diff = res["commit_residuals"][v] - Tensor(sg)
            total = total + (diff * diff).sum(axis=(1, 2)).sqrt().mean()
        embeds[part] = total
    cfg = model.config
    total = (recon_loss
             + cfg.alpha * embeds["body"]
             + cfg.beta * embeds["hand"]
             + cfg.gamma * embeds["face"])
    return TokenizerLoss(total, recon_loss, embeds["body"], embeds["hand"], embeds["face"], ladder)


def _sum_tensors(tensors: list[Tensor]) -> Tensor:
    out = tensors[0]
    for t in tensors[1:]:
        out = out + t
    return out


def _pad_batch(batch: np.ndarray) -> np.ndarray:
    pad = (-batch.shape[1]) % DOWNSCALE
    if pad:
        batch = np.concatenate([batch, np.repeat(batch[:, -1:], pad, axis=1)], axis=1)
    return batch


# -- training ---------------------------------------------------------------------


def train_tokenizer(train_frames: np.ndarray, config: TokenizerConfig,
                    log: list | None = None) -> MotionTokenizer:
    """Fit the tokenizer on (N_seqs, T, 723) raw frames; fully seed-driven.

    Codebooks follow EMA k-means over assignments, the phase-resolved decoder
    bypass is refit in closed form every `refit_every` steps, and the
    remaining parameters take gradient steps (decoder at `lr`, encoders and
    mixers at `lr * enc_lr_scale`).
    """
    if train_frames.shape[0] == 0:
        raise ParameterError("empty training set")
    model = MotionTokenizer(config)
    model.set_normalizer(train_frames.reshape(-1, FRAME_WIDTH))
    skip_params = {id(p) for _, p in model.decoder.skip.named_parameters()}
    enc_params = [p for m in model.encoders for p in m.parameters()]
    mixer_params = []
    if config.conditioning == "chain":
        mixer_params = [p for m in model.hand_mixers + model.face_mixers for p in m.parameters()]
    dec_params = [p for p in model.decoder.parameters() if id(p) not in skip_params]
    opt_dec = nn.AdamW(dec_params, lr=config.lr)
    opt_enc = nn.AdamW(enc_params, lr=config.lr * config.enc_lr_scale)
    opt_mix = nn.AdamW(mixer_params, lr=config.lr) if mixer_params else None
    batch_rng = generator(config.seed, "tokenizer-batches")
    drop_rng = generator(config.seed, "tokenizer-dropout")
    gumbel_rng = generator(config.seed, "tokenizer-gumbel")
    reset_rng = generator(config.seed, "tokenizer-reset")

    n_seqs = train_frames.shape[0]
    anchor = train_frames[:min(config.anchor_seqs, n_seqs)]
    batch_size = min(config.batch, n_seqs)
    steps_per_epoch = max(1, n_seqs // batch_size)
    order = batch_rng.permutation(n_seqs)
    cursor = 0
    v1 = config.layers + 1
    crop = config.crop_frames
    if crop and crop % DOWNSCALE:
        raise ParameterError(f"crop_frames must be a multiple of {DOWNSCALE}")

    for step in range(config.steps):
        if cursor + batch_size > n_seqs:
            order = batch_rng.permutation(n_seqs)
            cursor = 0
        batch = train_frames[order[cursor:cursor + batch_size]]
        cursor += batch_size
        if crop and crop < batch.shape[1]:
            # crops stay aligned to the token stride so phase is consistent
            slots = (batch.shape[1] - crop) // DOWNSCALE + 1
            starts = DOWNSCALE * batch_rng.integers(0, slots, size=batch.shape[0])
            batch = np.stack([b[s:s + crop] for b, s in zip(batch, starts)])

        active = v1
        if config.layers > 0 and drop_rng.uniform() < config.dropout_q:
            active = int(drop_rng.integers(1, v1))  # keep layers 0..active-1

        if not model.codebooks["body"][0].initialized:
            if log is not None:
                virgin = tokenizer_loss(model, batch)
                log.append({"step": -1, "total": float(virgin.total.data),
                            "recon": float(virgin.recon.data), "active": v1})
            _init_codebooks(model, batch, reset_rng)
            refit_decoder_bypass(model, anchor)

        if config.estimator == "gumbel":
            frac = step / max(1, config.steps - 1)
            tau = config.gumbel_start + (config.gumbel_end - config.gumbel_start) * frac
            loss = tokenizer_loss(model, batch, active_layers=active,
                                  soft_tau=tau, gumbel_rng=gumbel_rng)
        else:
            loss = tokenizer_loss(model, batch, active_layers=active)
        if not np.isfinite(loss.total.data):
            raise TrainingFailureError("tokenizer loss diverged", step)
        model.zero_grad()
        loss.total.backward()
        lr_frac = nn.warmup_lr(step, 1.0, config.warmup_steps)
        if config.dec_lr_scale:
            opt_dec.step(lr=config.lr * config.dec_lr_scale * lr_frac)
        opt_enc.step(lr=config.lr * config.enc_lr_scale * lr_frac)
        if opt_mix is not None and config.mixer_lr_scale:
            opt_mix.step(lr=config.lr * config.mixer_lr_scale * lr_frac)

        for part in PARTS:
            res = loss.ladder[part]
            for v in range(active):
                cb = model.codebooks[part][v]
                cb.ema_update(res["q_inputs"][v], res["indices"][v].reshape(-1), config.ema_decay)
        if (step + 1) % steps_per_epoch == 0:
            for part in PARTS:
                latents = loss.ladder[part]["q_inputs"][0]
                for cb in model.codebooks[part]:
                    cb.reset_dead(latents, reset_rng)
        if config.refit_every and (step + 1) % config.refit_every == 0:
            refit_decoder_bypass(model, anchor)
        if log is not None:
            log.append({"step": step, "total": float(loss.total.data),
                        "recon": float(loss.recon.data), "active": active})

    # finalize: freeze the nets, re-run EMA so the codes match the final
    # encoder exactly, then solve the readout one last time
    final_count = min(config.final_seqs, n_seqs) if config.final_seqs else n_seqs
    for _ in range(config.final_passes):
        for part in PARTS:
            for cb in model.codebooks[part]:
                cb.usage[:] = 0
        start = 0
        while start < final_count:
            chunk = train_frames[start:start + batch_size]
            start += batch_size
            ladder = model.ladder(model.encode_latents(_pad_batch(chunk)))
            for part in PARTS:
                res = ladder[part]
                for v in range(v1):
                    cb = model.codebooks[part][v]
                    cb.ema_update(res["q_inputs"][v], res["indices"][v].reshape(-1), 0.5)
        for part in PARTS:
            latents = ladder[part]["q_inputs"][0]
            for cb in model.codebooks[part]:
                cb.reset_dead(latents, reset_rng)
    refit_decoder_bypass(model, anchor)
    return model


def _init_codebooks(model: MotionTokenizer, batch: np.ndarray, rng: np.random.Generator) -> None:
    if model.config.latent_norm == "const":
        # pin each encoder's constant scale to its first-batch latent RMS
        raw = model.encode_latents(batch)
        for enc, part in zip(model.encoders, PARTS):
            enc.scale = float(np.sqrt((raw[part].data ** 2).mean()) + 1e-9) * enc.scale
    latents = model.encode_latents(batch)
    ladder = model.ladder(latents)  # hard pass just to reach every stack input
    for part in PARTS:
        for v, cb in enumerate(model.codebooks[part]):
            cb.init_from(ladder[part]["q_inputs"][v], rng)


def refit_decoder_bypass(model: MotionTokenizer, batch: np.ndarray) -> None:
    """Closed-form ridge fit of the phase-resolved decoder bypass.

    Solves the least-squares map from hard code sums to the frames of each
    token stride and writes it into the bypass conv (the conv head's current
    contribution is subtracted from the target first).  The regression rows
    mix every layer-prefix sum, with the full stack repeated, so truncated
    decodes stay calibrated too.  A few of these during training keep the
    linear decode optimal for the moving codebooks instead of crawling there
    with L1 sign gradients.
    """
    latents = model.encode_latents(batch)
    ladder = model.ladder(latents)
    sums = np.concatenate([ladder[p]["stack"].data for p in PARTS], axis=1)
    B, C3, n = sums.shape
    X = sums.transpose(0, 2, 1).reshape(B * n, C3)
    X = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    target = model.normalize(batch)
    resid = target - _head_only(model, sums).transpose(0, 2, 1)
    Y = resid.reshape(B, n, DOWNSCALE, FRAME_WIDTH).reshape(B * n, DOWNSCALE * FRAME_WIDTH)
    gram = X.T @ X
    lam = 1e-3 * np.trace(gram) / gram.shape[0]
    gram[np.diag_indices_from(gram)] += lam
    W = np.linalg.solve(gram, X.T @ Y)
    model.decoder.skip.weight.data = np.ascontiguousarray(W[:-1].T[:, :, None])
    model.decoder.skip.bias.data = W[-1].copy()


def _head_only(model: MotionTokenizer, sums: np.ndarray) -> np.ndarray:
    """Decoder conv-head output (bypass suppressed), numpy (B, 723, T)."""
    dec = model.decoder
    x = Tensor(sums)
    h = dec.res1(dec.conv0(x).gelu())
    h = dec.up1(h.upsample_repeat(2)).gelu()
    h = dec.res2(h)
    h = dec.up2(h.upsample_repeat(2)).gelu()
    B, _, T = h.shape
    phase = np.tile(np.eye(DOWNSCALE), (B, 1, T // DOWNSCALE)).reshape(B, DOWNSCALE, T)
    h = nn.concat([h, Tensor(phase)], axis=1)
    return dec.head(h).data


# -- checkpoint round trip ---------------------------------------------------------


def save_tokenizer(path, model: MotionTokenizer) -> None:
    from .io import save_checkpoint

    save_checkpoint(path, "tokenizer", model.config.to_dict(), model.config.seed, model.state())


def load_tokenizer(path) -> MotionTokenizer:
    from .io import load_checkpoint

    kind, config, _seed, arrays = load_checkpoint(path)
    if kind != "tokenizer":
        raise ParameterError(f"{path}: expected a tokenizer checkpoint, got {kind!r}")
    model = MotionTokenizer(TokenizerConfig(**config))
    model.load_state(arrays)
    return model
