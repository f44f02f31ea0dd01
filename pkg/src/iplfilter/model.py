"""A small per-frame acoustic model, its optimizer, and the LR schedule.

The model maps each D-dimensional frame independently to log-probabilities
over |V|+1 classes (blank included): either a single affine layer or one
tanh hidden layer followed by an affine layer. Gradients are computed by
hand, which keeps every parameter checkable against finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import FeatureSequence, LabelSequence
from .ctc import ctc_log_prob, greedy_decode, is_feasible
from .errors import ConfigurationError, ShapeError, TrainingError

CHECKPOINT_SCHEMA = "acoustic-model"
CHECKPOINT_VERSION = 1


@dataclass
class FrameLogProbs:
    """(T, C) row-normalized log-probabilities for one utterance."""

    utterance_id: str
    logp: np.ndarray


@dataclass
class AcousticModel:
    feature_dim: int
    vocab_size: int  # non-blank tokens; output dimension is vocab_size + 1
    hidden_dim: int  # 0 = plain affine model
    seed: int
    params: dict[str, np.ndarray]

    @property
    def num_classes(self) -> int:
        return self.vocab_size + 1

    def copy(self) -> "AcousticModel":
        return AcousticModel(
            feature_dim=self.feature_dim,
            vocab_size=self.vocab_size,
            hidden_dim=self.hidden_dim,
            seed=self.seed,
            params={k: v.copy() for k, v in self.params.items()},
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    base_lr: float = 0.15
    warmup_frac: float = 0.10
    hold_frac: float = 0.40
    seed: int = 0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if not (0.0 <= self.warmup_frac <= 1.0 and 0.0 <= self.hold_frac <= 1.0):
            raise ConfigurationError("schedule fractions must lie in [0, 1]")
        if self.warmup_frac + self.hold_frac > 1.0:
            raise ConfigurationError("warmup_frac + hold_frac must be <= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


def init_model(feature_dim: int, vocab_size: int, hidden_dim: int = 0, seed: int = 0) -> AcousticModel:
    """Deterministic initialization; weights scale with 1/sqrt(fan-in)."""
    if feature_dim < 1 or vocab_size < 1 or hidden_dim < 0:
        raise ConfigurationError("feature_dim, vocab_size >= 1 and hidden_dim >= 0 required")
    rng = np.random.default_rng(seed)
    C = vocab_size + 1
    if hidden_dim == 0:
        params = {
            "W": rng.standard_normal((feature_dim, C)) / math.sqrt(feature_dim),
            "b": np.zeros(C),
        }
    else:
        params = {
            "W1": rng.standard_normal((feature_dim, hidden_dim)) / math.sqrt(feature_dim),
            "b1": np.zeros(hidden_dim),
            "W2": rng.standard_normal((hidden_dim, C)) / math.sqrt(hidden_dim),
            "b2": np.zeros(C),
        }
    return AcousticModel(
        feature_dim=feature_dim,
        vocab_size=vocab_size,
        hidden_dim=hidden_dim,
        seed=seed,
        params=params,
    )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    return logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))


def _forward_cache(model: AcousticModel, frames: np.ndarray):
    if model.hidden_dim == 0:
        logits = frames @ model.params["W"] + model.params["b"]
        hidden = None
    else:
        hidden = np.tanh(frames @ model.params["W1"] + model.params["b1"])
        logits = hidden @ model.params["W2"] + model.params["b2"]
    return _log_softmax(logits), hidden


def forward_frames(model: AcousticModel, frames: np.ndarray) -> np.ndarray:
    """(T, D) frames -> (T, C) log-probabilities."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.feature_dim:
        raise ShapeError(
            f"expected (T, {model.feature_dim}) frames, got {frames.shape}"
        )
    logp, _ = _forward_cache(model, frames)
    return logp


def forward(model: AcousticModel, features: FeatureSequence) -> FrameLogProbs:
    if features.feature_dim != model.feature_dim:
        raise ShapeError(
            f"utterance {features.utterance_id}: feature_dim {features.feature_dim} "
            f"!= model feature_dim {model.feature_dim}"
        )
    return FrameLogProbs(features.utterance_id, forward_frames(model, features.frames))


def _backprop(model: AcousticModel, frames: np.ndarray, hidden, dlogits: np.ndarray):
    grads = {}
    if model.hidden_dim == 0:
        grads["W"] = frames.T @ dlogits
        grads["b"] = dlogits.sum(axis=0)
    else:
        grads["W2"] = hidden.T @ dlogits
        grads["b2"] = dlogits.sum(axis=0)
        dpre = (dlogits @ model.params["W2"].T) * (1.0 - hidden**2)
        grads["W1"] = frames.T @ dpre
        grads["b1"] = dpre.sum(axis=0)
    return grads


def utterance_loss_and_grads(model: AcousticModel, features: FeatureSequence, labels: LabelSequence):
    """-log P and its gradient with respect to every model parameter."""
    logp, hidden = _forward_cache(model, features.frames)
    res = ctc_log_prob(logp, labels, with_grad=True)
    return -res.log_prob, _backprop(model, features.frames, hidden, res.grad)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Tri-state schedule over training progress step / (total_steps - 1).

    Linear 0 -> base_lr over the warmup fraction, flat through the hold
    fraction, then linear back to exactly 0 at the final step.
    """
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} out of range [0, {total_steps})")
    if total_steps == 1:
        return 0.0  # single step is both the first and the last
    p = step / (total_steps - 1)
    warm = cfg.warmup_frac
    hold_end = cfg.warmup_frac + cfg.hold_frac
    if p < warm:
        return cfg.base_lr * (p / warm)
    if p <= hold_end:
        return cfg.base_lr
    return cfg.base_lr * (1.0 - p) / (1.0 - hold_end)


@dataclass
class TrainResult:
    model: AcousticModel
    loss_curve: list[float] = field(default_factory=list)


def train(model: AcousticModel, data, cfg: TrainConfig, weights=None) -> TrainResult:
    """Run `cfg.epochs` of minibatch CTC training; returns an updated copy.

    The shuffle order, and therefore the final weights, are a pure function
    of (model, data order, cfg). Batch gradients are the mean of per-utterance
    gradients, optionally weighted (used to down/up-weight pseudo-labels).
    The loss curve records the per-epoch mean of unweighted utterance losses.
    """
    pairs = list(data)
    for fs, lab in pairs:
        if fs.feature_dim != model.feature_dim:
            raise ShapeError(
                f"utterance {fs.utterance_id}: feature_dim {fs.feature_dim} "
                f"!= model feature_dim {model.feature_dim}"
            )
        if not is_feasible(fs.num_frames, lab):
            raise TrainingError(
                f"utterance {fs.utterance_id}: label of length {len(lab)} "
                f"infeasible for {fs.num_frames} frame(s)"
            )
    if weights is None:
        w = np.ones(len(pairs))
    else:
        w = np.asarray(list(weights), dtype=np.float64)
        if w.shape != (len(pairs),):
            raise ConfigurationError("weights must match the number of utterances")

    out = model.copy()
    n = len(pairs)
    if n == 0 or cfg.epochs == 0:
        return TrainResult(model=out, loss_curve=[])

    rng = np.random.default_rng(cfg.seed)
    batches_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    adam_m = {k: np.zeros_like(v) for k, v in out.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in out.params.items()}
    step = 0
    curve = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for b in range(batches_per_epoch):
            idx = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch_grads = {k: np.zeros_like(v) for k, v in out.params.items()}
            for i in idx:
                fs, lab = pairs[i]
                loss, grads = utterance_loss_and_grads(out, fs, lab)
                epoch_losses.append(loss)
                for k, g in grads.items():
                    batch_grads[k] += w[i] * g
            for k in batch_grads:
                batch_grads[k] /= idx.size
            lr = lr_at(step, total_steps, cfg)
            step += 1
            if cfg.optimizer == "sgd":
                for k in out.params:
                    out.params[k] -= lr * batch_grads[k]
            else:
                for k in out.params:
                    adam_m[k] = cfg.adam_beta1 * adam_m[k] + (1 - cfg.adam_beta1) * batch_grads[k]
                    adam_v[k] = cfg.adam_beta2 * adam_v[k] + (1 - cfg.adam_beta2) * batch_grads[k] ** 2
                    m_hat = adam_m[k] / (1 - cfg.adam_beta1**step)
                    v_hat = adam_v[k] / (1 - cfg.adam_beta2**step)
                    out.params[k] -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        curve.append(float(np.mean(epoch_losses)))
    return TrainResult(model=out, loss_curve=curve)


def greedy_accuracy(model: AcousticModel, data) -> float:
    """Fraction of utterances whose greedy decode equals the reference."""
    pairs = list(data)
    if not pairs:
        return 1.0
    hits = 0
    for fs, lab in pairs:
        hyp, _ = greedy_decode(forward(model, fs))
        hits += hyp.tokens == lab.tokens
    return hits / len(pairs)


def save_checkpoint(model: AcousticModel, path) -> None:
    rec = {
        "schema": CHECKPOINT_SCHEMA,
        "version": CHECKPOINT_VERSION,
        "feature_dim": model.feature_dim,
        "vocab_size": model.vocab_size,
        "hidden_dim": model.hidden_dim,
        "seed": model.seed,
        "params": {k: v.tolist() for k, v in sorted(model.params.items())},
    }
    Path(path).write_text(json.dumps(rec, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> AcousticModel:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    if rec.get("schema") != CHECKPOINT_SCHEMA:
        raise ConfigurationError(f"not a model checkpoint: schema {rec.get('schema')!r}")
    params = {k: np.asarray(v, dtype=np.float64) for k, v in rec["params"].items()}
    return AcousticModel(
        feature_dim=int(rec["feature_dim"]),
        vocab_size=int(rec["vocab_size"]),
        hidden_dim=int(rec["hidden_dim"]),
        seed=int(rec["seed"]),
        params=params,
    )
