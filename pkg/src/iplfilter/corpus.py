"""Synthetic corpus generation and manifest I/O.

The corpus stands in for transcribed speech at desk scale: every token owns a
mean feature vector, and an utterance is rendered by emitting each of its
tokens for a few consecutive frames, with Gaussian noise on top. At zero noise
the frame runs are exactly the token means, so a trained recognizer can reach
~zero error; raising the noise scale degrades separability in a controlled way.

Label sequences never place the same token twice in a row. Without that
restriction a noiseless rendering of [a, a] would be indistinguishable from a
longer rendering of [a] and no recognizer could reach zero error on clean
data. A side effect is that every generated utterance is CTC-alignable, since
repeat-free labels only require at least one frame per token.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ManifestError

# Class index reserved for the CTC blank. Label tokens use indices >= 1.
BLANK = 0

MANIFEST_SCHEMA = "corpus-manifest"
MANIFEST_VERSION = 1

_SPLIT_FILES = {
    "labeled": "labeled.jsonl",
    "unlabeled": "unlabeled.jsonl",
    "dev": "dev.jsonl",
    "test": "test.jsonl",
}
_REFS_FILE = "unlabeled_refs.jsonl"
_META_FILE = "meta.json"


@dataclass(frozen=True)
class Vocabulary:
    """Non-blank token inventory; class 0 is always the blank."""

    tokens: tuple[str, ...]
    blank_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(str(t) for t in self.tokens))
        if len(self.tokens) < 2:
            raise ConfigurationError("vocabulary needs at least 2 non-blank tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigurationError("vocabulary token names must be unique")
        if self.blank_index != 0:
            raise ConfigurationError("blank is reserved at class index 0")

    @property
    def num_classes(self) -> int:
        """Output dimension including the blank."""
        return len(self.tokens) + 1

    def name_of(self, index: int) -> str:
        if index == BLANK:
            return "<blank>"
        return self.tokens[index - 1]


def default_vocabulary(size: int = 8) -> Vocabulary:
    letters = string.ascii_lowercase
    names = [letters[i] if i < len(letters) else f"t{i}" for i in range(size)]
    return Vocabulary(tuple(names))


@dataclass(frozen=True)
class LabelSequence:
    """A blank-free sequence of token class indices (values >= 1)."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if any(t < 1 for t in self.tokens):
            raise ValueError("label tokens must be >= 1; blank (0) is excluded")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A (T, D) frame matrix for one utterance."""

    utterance_id: str
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("frames must be a (T, D) matrix with T >= 1")
        object.__setattr__(self, "frames", frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return self.utterance_id == other.utterance_id and np.array_equal(
            self.frames, other.frames
        )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class CorpusSplits:
    """Labeled/unlabeled/dev/test splits.

    ``unlabeled_refs`` holds the hidden transcripts of the unlabeled split and
    exists only for oracle evaluation; training-path operations never receive
    it. It may be empty (truth withheld entirely) but, when present, must cover
    exactly the unlabeled utterance ids.
    """

    vocabulary: Vocabulary
    labeled: list[tuple[FeatureSequence, LabelSequence]]
    unlabeled: list[FeatureSequence]
    unlabeled_refs: dict[str, LabelSequence] = field(default_factory=dict)
    dev: list[tuple[FeatureSequence, LabelSequence]] = field(default_factory=list)
    test: list[tuple[FeatureSequence, LabelSequence]] = field(default_factory=list)

    def __post_init__(self):
        ids = [fs.utterance_id for fs, _ in self.labeled]
        ids += [fs.utterance_id for fs in self.unlabeled]
        ids += [fs.utterance_id for fs, _ in self.dev]
        ids += [fs.utterance_id for fs, _ in self.test]
        dupes = {i for i in ids if ids.count(i) > 1} if len(set(ids)) != len(ids) else set()
        if dupes:
            raise ManifestError(f"duplicate utterance_id(s): {sorted(dupes)}")
        if self.unlabeled_refs:
            unl = {fs.utterance_id for fs in self.unlabeled}
            if set(self.unlabeled_refs) != unl:
                raise ManifestError("unlabeled_refs must cover exactly the unlabeled ids")

    @property
    def feature_dim(self) -> int:
        for fs, _ in self.labeled:
            return fs.feature_dim
        for fs in self.unlabeled:
            return fs.feature_dim
        raise ValueError("corpus has no utterances")

    def without_truth(self) -> "CorpusSplits":
        """Copy with the hidden unlabeled transcripts removed."""
        return CorpusSplits(
            vocabulary=self.vocabulary,
            labeled=list(self.labeled),
            unlabeled=list(self.unlabeled),
            unlabeled_refs={},
            dev=list(self.dev),
            test=list(self.test),
        )


@dataclass(frozen=True)
class CorpusGenConfig:
    """Knobs for the synthetic generator.

    ``noise_sigma`` is the per-dimension Gaussian noise scale added to token
    mean vectors (which are standard-normal draws, so pairwise mean separation
    is about sqrt(2 * feature_dim)).
    """

    vocab_size: int = 8
    feature_dim: int = 8
    label_len: tuple[int, int] = (2, 6)
    frames_per_token: tuple[int, int] = (1, 4)
    noise_sigma: float = 0.5
    n_labeled: int = 8
    n_unlabeled: int = 200
    n_dev: int = 64
    n_test: int = 64

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigurationError("vocab_size must be >= 2")
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be >= 1")
        for name in ("label_len", "frames_per_token"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigurationError(f"{name} must satisfy 1 <= lo <= hi")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        for name in ("n_labeled", "n_unlabeled", "n_dev", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1 (empty split)")


def _draw_pairs(rng, cfg: CorpusGenConfig, means: np.ndarray, prefix: str, n: int):
    lo_len, hi_len = cfg.label_len
    lo_fr, hi_fr = cfg.frames_per_token
    pairs = []
    for i in range(n):
        length = int(rng.integers(lo_len, hi_len + 1))
        tokens: list[int] = []
        for _ in range(length):
            if not tokens:
                tok = int(rng.integers(1, cfg.vocab_size + 1))
            else:
                # uniform over the other vocab_size - 1 tokens (no immediate repeat)
                r = int(rng.integers(1, cfg.vocab_size))
                tok = r if r < tokens[-1] else r + 1
            tokens.append(tok)
        counts = rng.integers(lo_fr, hi_fr + 1, size=length)
        frames = np.repeat(means[np.asarray(tokens) - 1], counts, axis=0)
        frames = frames + cfg.noise_sigma * rng.standard_normal(frames.shape)
        pairs.append(
            (FeatureSequence(f"{prefix}-{i:04d}", frames), LabelSequence(tuple(tokens)))
        )
    return pairs


def generate_corpus(gen_config: CorpusGenConfig, seed: int) -> CorpusSplits:
    """Deterministically generate all four splits from (gen_config, seed)."""
    root = np.random.SeedSequence(seed)
    s_means, s_lab, s_unl, s_dev, s_tst = root.spawn(5)
    means = np.random.default_rng(s_means).standard_normal(
        (gen_config.vocab_size, gen_config.feature_dim)
    )
    labeled = _draw_pairs(
        np.random.default_rng(s_lab), gen_config, means, "lab", gen_config.n_labeled
    )
    unl_pairs = _draw_pairs(
        np.random.default_rng(s_unl), gen_config, means, "unl", gen_config.n_unlabeled
    )
    dev = _draw_pairs(
        np.random.default_rng(s_dev), gen_config, means, "dev", gen_config.n_dev
    )
    test = _draw_pairs(
        np.random.default_rng(s_tst), gen_config, means, "tst", gen_config.n_test
    )
    return CorpusSplits(
        vocabulary=default_vocabulary(gen_config.vocab_size),
        labeled=labeled,
        unlabeled=[fs for fs, _ in unl_pairs],
        unlabeled_refs={fs.utterance_id: lab for fs, lab in unl_pairs},
        dev=dev,
        test=test,
    )


def _utterance_record(fs: FeatureSequence, labels: LabelSequence | None) -> dict:
    rec = {
        "utterance_id": fs.utterance_id,
        "num_frames": fs.num_frames,
        "feature_dim": fs.feature_dim,
        "frames": [float(x) for x in fs.frames.ravel()],
    }
    if labels is not None:
        rec["tokens"] = list(labels.tokens)
    return rec


def _write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def save_manifest(splits: CorpusSplits, out_dir) -> None:
    """Write one directory per corpus: meta + one jsonl file per split.

    Floats go through ``json.dumps`` (repr-based), so the round trip is exact.
    The unlabeled split's public file carries no transcripts; the hidden truth
    goes to a separate refs file read only by oracle paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema": MANIFEST_SCHEMA,
        "version": MANIFEST_VERSION,
        "tokens": list(splits.vocabulary.tokens),
        "feature_dim": splits.feature_dim,
    }
    (out / _META_FILE).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    _write_jsonl(out / _SPLIT_FILES["labeled"], (_utterance_record(fs, lab) for fs, lab in splits.labeled))
    _write_jsonl(out / _SPLIT_FILES["unlabeled"], (_utterance_record(fs, None) for fs in splits.unlabeled))
    _write_jsonl(out / _SPLIT_FILES["dev"], (_utterance_record(fs, lab) for fs, lab in splits.dev))
    _write_jsonl(out / _SPLIT_FILES["test"], (_utterance_record(fs, lab) for fs, lab in splits.test))
    refs = [
        {"utterance_id": uid, "tokens": list(lab.tokens)}
        for uid, lab in ((fs.utterance_id, splits.unlabeled_refs[fs.utterance_id]) for fs in splits.unlabeled)
    ] if splits.unlabeled_refs else []
    _write_jsonl(out / _REFS_FILE, refs)


def _parse_jsonl(path: Path):
    if not path.is_file():
        raise ManifestError(f"{path}: missing manifest file")
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise ManifestError(f"{path.name}:{lineno}: blank line in manifest")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path.name}:{lineno}: invalid record: {e.msg}") from e
            if not isinstance(rec, dict):
                raise ManifestError(f"{path.name}:{lineno}: record is not an object")
            yield lineno, rec


def _read_utterances(path: Path, vocab: Vocabulary, with_labels: bool):
    out = []
    for lineno, rec in _parse_jsonl(path):
        try:
            uid = rec["utterance_id"]
            T, D = int(rec["num_frames"]), int(rec["feature_dim"])
            flat = rec["frames"]
        except KeyError as e:
            raise ManifestError(f"{path.name}:{lineno}: missing field {e}") from e
        if len(flat) != T * D:
            raise ManifestError(
                f"{path.name}:{lineno}: frames length {len(flat)} != num_frames*feature_dim {T * D}"
            )
        fs = FeatureSequence(uid, np.asarray(flat, dtype=np.float64).reshape(T, D))
        if with_labels:
            try:
                tokens = rec["tokens"]
            except KeyError as e:
                raise ManifestError(f"{path.name}:{lineno}: missing field {e}") from e
            lab = _checked_labels(tokens, vocab, path, lineno)
            out.append((fs, lab))
        else:
            out.append(fs)
    return out


def _checked_labels(tokens, vocab: Vocabulary, path: Path, lineno: int) -> LabelSequence:
    try:
        lab = LabelSequence(tuple(tokens))
    except ValueError as e:
        raise ManifestError(f"{path.name}:{lineno}: {e}") from e
    if any(t >= vocab.num_classes for t in lab):
        raise ManifestError(f"{path.name}:{lineno}: token index out of vocabulary range")
    return lab


def load_manifest(in_dir) -> CorpusSplits:
    """Inverse of :func:`save_manifest`; load(save(x)) == x."""
    root = Path(in_dir)
    meta_path = root / _META_FILE
    if not meta_path.is_file():
        raise ManifestError(f"{meta_path}: missing manifest file")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{meta_path.name}:1: invalid record: {e.msg}") from e
    if meta.get("schema") != MANIFEST_SCHEMA:
        raise ManifestError(f"{meta_path.name}: unexpected schema {meta.get('schema')!r}")
    vocab = Vocabulary(tuple(meta["tokens"]))

    labeled = _read_utterances(root / _SPLIT_FILES["labeled"], vocab, with_labels=True)
    unlabeled = _read_utterances(root / _SPLIT_FILES["unlabeled"], vocab, with_labels=False)
    dev = _read_utterances(root / _SPLIT_FILES["dev"], vocab, with_labels=True)
    test = _read_utterances(root / _SPLIT_FILES["test"], vocab, with_labels=True)

    refs: dict[str, LabelSequence] = {}
    refs_path = root / _REFS_FILE
    if refs_path.is_file():
        for lineno, rec in _parse_jsonl(refs_path):
            try:
                uid, tokens = rec["utterance_id"], rec["tokens"]
            except KeyError as e:
                raise ManifestError(f"{refs_path.name}:{lineno}: missing field {e}") from e
            if uid in refs:
                raise ManifestError(f"{refs_path.name}:{lineno}: duplicate utterance_id {uid!r}")
            refs[uid] = _checked_labels(tokens, vocab, refs_path, lineno)

    expected_dim = int(meta["feature_dim"])
    for fs in [f for f, _ in labeled] + unlabeled + [f for f, _ in dev] + [f for f, _ in test]:
        if fs.feature_dim != expected_dim:
            raise ManifestError(
                f"utterance {fs.utterance_id}: feature_dim {fs.feature_dim} != manifest {expected_dim}"
            )
    return CorpusSplits(
        vocabulary=vocab,
        labeled=labeled,
        unlabeled=unlabeled,
        unlabeled_refs=refs,
        dev=dev,
        test=test,
    )
