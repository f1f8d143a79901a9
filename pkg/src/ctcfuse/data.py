"""Vocabulary, corpus ingestion, batching, and synthetic corpus generation.

Character-level modeling: transcripts are sequences of single characters
with whitespace stripped. Four reserved tokens (blank/unk/sos/eos) sit at
the head of every vocabulary; the end-of-sequence id doubles as the
padding id, which masks make unobservable.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

BLANK_TOKEN = "<blank>"
UNK_TOKEN = "<unk>"
SOS_TOKEN = "<sos>"
EOS_TOKEN = "<eos>"
SPECIALS = (BLANK_TOKEN, UNK_TOKEN, SOS_TOKEN, EOS_TOKEN)

TokenSeq = tuple[int, ...]


class DataError(Exception):
    """Raised for malformed manifests, feature files, or corpora."""


@dataclass(frozen=True)
class Vocabulary:
    """Token inventory with reserved blank / unk / sos / eos ids."""

    id_to_token: tuple[str, ...]
    token_to_id: dict = field(repr=False, compare=False)
    blank_id: int = 0
    unk_id: int = 1
    sos_id: int = 2
    eos_id: int = 3

    @property
    def pad_id(self) -> int:
        return self.eos_id

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        """Vocabulary over explicit non-special tokens, kept in sorted order."""
        ordered = SPECIALS + tuple(sorted(set(tokens)))
        if len(set(ordered)) != len(ordered):
            raise DataError("token list collides with reserved tokens")
        return cls(id_to_token=ordered, token_to_id={t: i for i, t in enumerate(ordered)})

    def tokenize(self, text: str) -> TokenSeq:
        """Character ids for ``text``; unseen characters map to unk."""
        return tuple(
            self.token_to_id.get(ch, self.unk_id) for ch in text if not ch.isspace()
        )

    def detokenize(self, ids) -> str:
        return "".join(self.id_to_token[i] for i in ids)

    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.id_to_token).encode("utf-8")).hexdigest()


def build_vocab(transcripts) -> Vocabulary:
    """Specials plus the sorted distinct characters of a transcript corpus."""
    transcripts = list(transcripts)
    if not transcripts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    chars = set()
    for text in transcripts:
        chars.update(ch for ch in text if not ch.isspace())
    return Vocabulary.from_tokens(chars)


@dataclass
class Utterance:
    """One training/eval example: feature matrix plus character-id transcript."""

    utt_id: str
    features: np.ndarray  # [T, F] float32
    transcript: TokenSeq

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError(f"utterance {self.utt_id}: features must be [T>=1, F]")
        if len(self.transcript) < 1:
            raise DataError(f"utterance {self.utt_id}: empty transcript")
        if not np.all(np.isfinite(self.features)):
            raise DataError(f"utterance {self.utt_id}: non-finite feature values")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class Batch:
    """Utterances padded to a common frame/label length, with exact masks."""

    utt_ids: list[str]
    features: np.ndarray  # [B, Tmax, F] float64, padded with 0.0
    feat_lengths: np.ndarray  # [B] int64
    targets: np.ndarray  # [B, Lmax] int64, padded with pad_id
    target_lengths: np.ndarray  # [B] int64
    transcripts: list[TokenSeq]
    pad_id: int

    @property
    def size(self) -> int:
        return len(self.utt_ids)

    def feature_mask(self) -> np.ndarray:
        """[B, Tmax] 1.0 on real frames, 0.0 on padding."""
        t_max = self.features.shape[1]
        return (np.arange(t_max)[None, :] < self.feat_lengths[:, None]).astype(np.float64)


# -- feature file format ------------------------------------------------------

_FEATURE_MAGIC = b"FEAT"
_FEATURE_VERSION = 1


def write_features(path, features: np.ndarray) -> None:
    """Binary feature matrix: magic, version, rows, cols, dtype tag, f32 LE payload."""
    arr = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_FEATURE_MAGIC)
        fh.write(struct.pack("<IIIB", _FEATURE_VERSION, arr.shape[0], arr.shape[1], 1))
        fh.write(arr.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(17)
        if len(header) < 17 or header[:4] != _FEATURE_MAGIC:
            raise DataError(f"{path}: not a feature file")
        version, rows, cols, tag = struct.unpack("<IIIB", header[4:])
        if version != _FEATURE_VERSION:
            raise DataError(f"{path}: feature file version {version} unsupported")
        if tag != 1:
            raise DataError(f"{path}: unknown dtype tag {tag}")
        payload = fh.read(rows * cols * 4)
        if len(payload) != rows * cols * 4:
            raise DataError(f"{path}: truncated feature payload")
        return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


# -- manifest ----------------------------------------------------------------


def load_manifest(path, vocab: Vocabulary) -> list[Utterance]:
    """Read ``utt_id<TAB>feature_path<TAB>num_frames<TAB>transcript`` lines.

    Feature paths are resolved relative to the manifest's directory.
    Frame counts are cross-checked against the feature files.
    """
    base = os.path.dirname(os.path.abspath(path))
    utterances = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{line_no}: expected 4 tab-separated fields")
            utt_id, feat_path, num_frames, transcript = parts
            full = feat_path if os.path.isabs(feat_path) else os.path.join(base, feat_path)
            if not os.path.exists(full):
                raise DataError(f"utterance {utt_id}: missing feature file {feat_path}")
            features = read_features(full)
            if features.shape[0] != int(num_frames):
                raise DataError(
                    f"utterance {utt_id}: manifest says {num_frames} frames, "
                    f"file has {features.shape[0]}"
                )
            utterances.append(
                Utterance(utt_id=utt_id, features=features, transcript=vocab.tokenize(transcript))
            )
    if not utterances:
        raise DataError(f"{path}: empty manifest")
    return utterances


def save_corpus(directory, corpus: list[Utterance], vocab: Vocabulary) -> str:
    """Write features, a manifest, and a vocab sidecar; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    feat_dir = os.path.join(directory, "features")
    os.makedirs(feat_dir, exist_ok=True)
    manifest = os.path.join(directory, "manifest.tsv")
    with open(manifest, "w", encoding="utf-8") as fh:
        for utt in corpus:
            rel = os.path.join("features", f"{utt.utt_id}.feat")
            write_features(os.path.join(directory, rel), utt.features)
            text = vocab.detokenize(utt.transcript)
            fh.write(f"{utt.utt_id}\t{rel}\t{utt.num_frames}\t{text}\n")
    with open(os.path.join(directory, "vocab.txt"), "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")
    return manifest


def load_vocab_file(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
    if tuple(tokens[:4]) != SPECIALS:
        raise DataError(f"{path}: vocab file must start with the four reserved tokens")
    return Vocabulary(id_to_token=tuple(tokens), token_to_id={t: i for i, t in enumerate(tokens)})


# -- synthetic corpus ---------------------------------------------------------

_SYNTH_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings for the monotonic-transduction toy corpus.

    Each token owns a fixed random prototype vector; an utterance tiles
    the prototypes of its transcript, each repeated a random number of
    frames, plus Gaussian noise.
    """

    vocab_size: int = 16
    count: int = 200
    min_len: int = 3
    max_len: int = 8
    min_frames_per_token: int = 2
    max_frames_per_token: int = 4
    noise: float = 0.1
    feature_dim: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise DataError("synthetic vocabulary needs at least 2 tokens")
        if self.vocab_size > len(_SYNTH_ALPHABET):
            raise DataError(f"synthetic vocabulary capped at {len(_SYNTH_ALPHABET)} tokens")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise DataError("degenerate transcript length range")
        if self.min_frames_per_token < 1 or self.max_frames_per_token < self.min_frames_per_token:
            raise DataError("degenerate frames-per-token range")
        if self.count < 1:
            raise DataError("corpus count must be >= 1")


def synth_corpus(cfg: SynthConfig) -> tuple[Vocabulary, list[Utterance]]:
    """Deterministic toy corpus: same seed, bit-identical output."""
    rng = np.random.default_rng(cfg.seed)
    alphabet = _SYNTH_ALPHABET[: cfg.vocab_size]
    vocab = Vocabulary.from_tokens(alphabet)
    prototypes = rng.normal(size=(cfg.vocab_size, cfg.feature_dim))
    char_ids = [vocab.token_to_id[ch] for ch in alphabet]

    corpus = []
    for i in range(cfg.count):
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        picks = rng.integers(0, cfg.vocab_size, size=length)
        transcript = tuple(char_ids[p] for p in picks)
        rows = []
        for p in picks:
            reps = int(rng.integers(cfg.min_frames_per_token, cfg.max_frames_per_token + 1))
            rows.append(np.tile(prototypes[p], (reps, 1)))
        features = np.concatenate(rows, axis=0)
        if cfg.noise > 0.0:
            features = features + cfg.noise * rng.normal(size=features.shape)
        corpus.append(
            Utterance(
                utt_id=f"synth-{i:05d}",
                features=features.astype(np.float32),
                transcript=transcript,
            )
        )
    return vocab, corpus


def desk_synth_config(seed: int = 7) -> SynthConfig:
    """Default desk-scale corpus: enough frames per token to survive 4x subsampling."""
    return SynthConfig(
        vocab_size=16,
        count=200,
        min_len=3,
        max_len=6,
        min_frames_per_token=8,
        max_frames_per_token=12,
        noise=0.08,
        feature_dim=8,
        seed=seed,
    )


# -- batching -----------------------------------------------------------------


def make_batches(
    corpus: list[Utterance],
    batch_size: int,
    vocab: Vocabulary,
    policy: str = "shuffle",
    seed: int = 0,
) -> list[Batch]:
    """Deterministic batch assembly; padding is 0.0 frames / pad-id labels."""
    if not corpus:
        raise DataError("cannot batch an empty corpus")
    if policy not in ("none", "shuffle", "sort"):
        raise DataError(f"unknown batching policy {policy!r}")
    order = list(range(len(corpus)))
    if policy == "shuffle":
        rng = np.random.default_rng(seed)
        order = list(rng.permutation(len(corpus)))
    elif policy == "sort":
        order.sort(key=lambda i: (corpus[i].num_frames, corpus[i].utt_id))

    batches = []
    for start in range(0, len(order), batch_size):
        group = [corpus[i] for i in order[start : start + batch_size]]
        t_max = max(u.num_frames for u in group)
        l_max = max(len(u.transcript) for u in group)
        feats = np.zeros((len(group), t_max, group[0].features.shape[1]), dtype=np.float64)
        targets = np.full((len(group), l_max), vocab.pad_id, dtype=np.int64)
        for row, utt in enumerate(group):
            feats[row, : utt.num_frames] = utt.features
            targets[row, : len(utt.transcript)] = utt.transcript
        batches.append(
            Batch(
                utt_ids=[u.utt_id for u in group],
                features=feats,
                feat_lengths=np.array([u.num_frames for u in group], dtype=np.int64),
                targets=targets,
                target_lengths=np.array([len(u.transcript) for u in group], dtype=np.int64),
                transcripts=[u.transcript for u in group],
                pad_id=vocab.pad_id,
            )
        )
    return batches


# -- corpus statistics -------------------------------------------------------

LENGTH_BUCKETS = ((1, 5), (6, 9), (10, 14), (15, 19), (20, 24), (25, None))


@dataclass(frozen=True)
class CorpusStats:
    """Transcript-length distribution over the fixed bucket boundaries."""

    counts: tuple[int, ...]
    total: int

    @property
    def percentages(self) -> tuple[float, ...]:
        if self.total == 0:
            return tuple(0.0 for _ in self.counts)
        return tuple(100.0 * c / self.total for c in self.counts)

    def bucket_label(self, idx: int) -> str:
        lo, hi = LENGTH_BUCKETS[idx]
        return f">={lo}" if hi is None else f"{lo}-{hi}"

    def render_table(self) -> str:
        header = " | ".join(f"{self.bucket_label(i):>6}" for i in range(len(LENGTH_BUCKETS)))
        row = " | ".join(f"{p:5.2f}%" for p in self.percentages)
        return f"{header}\n{row}"

    def render_kv(self) -> str:
        lines = [f"total={self.total}"]
        for i, p in enumerate(self.percentages):
            key = self.bucket_label(i).replace(">=", "ge").replace("-", "_")
            lines.append(f"bucket_{key}={p:.2f}")
        return "\n".join(lines)


def corpus_stats(lengths) -> CorpusStats:
    """Bucketed percentage distribution of transcript lengths."""
    lengths = list(lengths)
    counts = [0] * len(LENGTH_BUCKETS)
    for n in lengths:
        for i, (lo, hi) in enumerate(LENGTH_BUCKETS):
            if n >= lo and (hi is None or n <= hi):
                counts[i] += 1
                break
    return CorpusStats(counts=tuple(counts), total=len(lengths))
