"""Music-conditioned holistic dance generation at desk scale.

Library layout:
    motion     frame format, part split, skeleton, blendshapes
    synth      procedural music-dance corpus with planted structure
    tokenizer  hierarchical residual motion tokenizer (encode/decode/train)
    retrieval  music-motion dual encoder, InfoNCE, retrieval metrics
    generator  masked token generator with alignment supervision
    metrics    evaluation suite (matching score, beat/emotion alignment,
               Frechet distance, dispersion, reconstruction errors)
    pipeline   end-to-end runs, reports, provenance
    cli        command-line entry points
"""

__version__ = "0.1.0"

from . import errors, io, metrics, motion, synth
from .motion import (
    MotionSequence,
    PartSpans,
    Skeleton,
    BlendshapeRig,
    default_skeleton,
    default_spans,
    split_parts,
    join_parts,
    recover_global_positions,
    apply_blendshapes,
    fit_blendshape_transform,
)
from .synth import CorpusConfig, MusicTrack, PairedSample, generate_track, generate_dance, make_corpus
from .tokenizer import (
    Codebook,
    MotionTokenizer,
    TokenGrid,
    TokenizerConfig,
    decode,
    encode,
    quantize_vector,
    tokenizer_loss,
    train_tokenizer,
)
from .retrieval import (
    DualEncoder,
    RetrievalConfig,
    encode_motion,
    encode_music,
    info_nce,
    retrieve,
    train_retrieval,
)
from .generator import (
    GenerationConfig,
    GeneratorConfig,
    MaskedGenerator,
    generate,
    mask_tokens,
    train_generator,
    unmask_schedule,
)
from .pipeline import MetricParams, RunConfig, run_pipeline
