"""Confidence-filtered iterative pseudo-labeling for CTC sequence recognition."""

from .corpus import (
    CorpusGenConfig,
    CorpusSplits,
    FeatureSequence,
    LabelSequence,
    Vocabulary,
    generate_corpus,
    load_manifest,
    save_manifest,
)
from .ctc import brute_force_ctc, collapse, ctc_log_prob, ctc_loss_batch, greedy_decode
from .metrics import edit_counts, histogram, overlap_rate, wer
from .model import AcousticModel, FrameLogProbs, TrainConfig, forward, init_model, lr_at, train
from .pipeline import (
    IplConfig,
    estimate_threshold,
    run_ipl,
    select_threshold,
    sweep_threshold,
    train_teacher,
)
from .pseudolabel import (
    PseudoLabel,
    ThresholdSchedule,
    generate_pseudolabels,
    next_threshold,
    score_filter,
    score_utterance,
    wer_filter,
)

__version__ = "0.1.0"
