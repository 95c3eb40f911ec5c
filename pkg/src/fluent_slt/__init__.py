"""Desk-scale end-to-end translation of disfluent speech into fluent text.

A numpy toolkit covering the whole pipeline: synthetic disfluent/fluent
corpora, log-mel features, an LSTM/NiN encoder with attention decoder trained
by hand-written backpropagation, beam-search inference, BLEU/METEOR scoring,
and rule-based or neural disfluency post-processing.
"""

from .beam import DecodeConfig, Hypothesis, beam_search
from .corpus import DataConfig, Utterance, filter_long, make_synthetic_corpus
from .errors import DataError, NumericalError, UsageError
from .frontend import (
    CmvnStats,
    FeatureMatrix,
    FrontendConfig,
    apply_cmvn,
    compute_cmvn_stats,
    compute_fbank,
    render_synthetic_frames,
)
from .metrics import (
    BleuScore,
    BleuStats,
    LengthReport,
    MeteorConfig,
    bleu_corpus,
    diff_report,
    length_report,
    meteor_corpus,
    meteor_lite,
    single_ref_average,
)
from .model import (
    DecoderConfig,
    EncoderConfig,
    MonoMtConfig,
    Seq2SeqModel,
    encode,
    forward_loss,
    greedy_decode,
    init_speech_model,
    init_text_model,
)
from .postprocess import FillerLexicon, FilterConfig, filter_disfluencies, monomt_postedit
from .text import Vocabulary, build_vocab, normalize_text
from .trainer import (
    Checkpoint,
    OptimizerState,
    TrainConfig,
    adam_update,
    load_checkpoint,
    lr_schedule_step,
    make_batches,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
