"""Joint CTC-attention transformer with optional N-best hypothesis memory.

The encoder is a strided 2D-conv front end followed by pre-norm
self-attention blocks; a linear+log-softmax head on top of it produces
the CTC posterior. The decoder is a standard pre-norm transformer
decoder, optionally extended per layer with a parallel attention
sub-layer over an encoded N-best memory whose output is concatenated
with self-attention and projected back to model width.

Parameters live in a flat name->Tensor dict (prefixes ``embed.``,
``encoder.``, ``ctc_head.``, ``decoder.``, ``ne.``) so checkpoints can
be loaded selectively by module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ctcfuse import tensor as tz
from ctcfuse.ctc import NBestList
from ctcfuse.tensor import Tensor

MASK_VALUE = -1e30

METHOD_BASELINE = "baseline"
METHOD_FUSION = "embed_fusion"
METHOD_ALIGNED = "aligned_fusion"
METHOD_NBEST = "nbest_memory"
METHODS = (METHOD_BASELINE, METHOD_FUSION, METHOD_ALIGNED, METHOD_NBEST)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    encoder_layers: int = 2
    decoder_layers: int = 2
    ne_layers: int = 1
    vocab_size: int = 20
    dropout: float = 0.1
    pos_encoding: str = "sinusoidal"
    subsample_factor: int = 4
    feature_dim: int = 8

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        if min(self.encoder_layers, self.decoder_layers, self.vocab_size) < 1:
            raise ValueError("layer and vocabulary counts must be >= 1")
        if self.ne_layers < 0:
            raise ValueError("ne_layers must be >= 0")
        if self.subsample_factor not in (2, 4):
            raise ValueError("subsample factor must be 2 or 4 (stride-2 conv stages)")
        if self.pos_encoding != "sinusoidal":
            raise ValueError(f"unknown positional encoding {self.pos_encoding!r}")

    @property
    def conv_stages(self) -> int:
        return 1 if self.subsample_factor == 2 else 2

    @classmethod
    def desk(cls, vocab_size: int, feature_dim: int = 8) -> "ModelConfig":
        """Small configuration sized so the full test suite runs in minutes."""
        return cls(vocab_size=vocab_size, feature_dim=feature_dim)

    @classmethod
    def reference(cls, vocab_size: int, feature_dim: int = 80) -> "ModelConfig":
        """Full-scale configuration (12/6/2 layers, width 256, FFN 1024, 4 heads)."""
        return cls(
            d_model=256,
            num_heads=4,
            ffn_dim=1024,
            encoder_layers=12,
            decoder_layers=6,
            ne_layers=2,
            vocab_size=vocab_size,
            feature_dim=feature_dim,
        )

    @classmethod
    def toy(cls, vocab_size: int, feature_dim: int = 4) -> "ModelConfig":
        """Tiny shapes for finite-difference gradient checks."""
        return cls(
            d_model=8,
            num_heads=2,
            ffn_dim=16,
            encoder_layers=2,
            decoder_layers=2,
            ne_layers=1,
            vocab_size=vocab_size,
            dropout=0.0,
            feature_dim=feature_dim,
        )


@dataclass(frozen=True)
class FusionConfig:
    """How CTC hypotheses enter the decoder during training."""

    method: str = METHOD_BASELINE
    alpha: float = 0.5
    n: int = 3
    beam_width: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.method == METHOD_NBEST and self.n < 1:
            raise ValueError("n must be >= 1 for the N-best method")
        if self.beam_width < self.n:
            raise ValueError("beam_width must be >= n")


@dataclass
class EncoderOutput:
    """Encoder states plus the post-subsampling frame bookkeeping."""

    h_s: Tensor  # [B, T', d_model]
    lengths: np.ndarray  # [B] int64, real frames per utterance
    key_bias: np.ndarray  # [B, 1, 1, T'] additive attention mask


def subsampled_length(length: int, stages: int) -> int:
    for _ in range(stages):
        length = (length + 1) // 2
    return length


@lru_cache(maxsize=64)
def _sinusoidal_pe(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(np.float64)
    idx = np.arange(0, d_model, 2).astype(np.float64)
    angle = pos / np.power(10000.0, idx / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


@lru_cache(maxsize=64)
def _causal_bias(length: int) -> np.ndarray:
    bias = np.triu(np.full((length, length), MASK_VALUE), k=1)
    return bias[None, None, :, :]


def _length_bias(lengths: np.ndarray, t_max: int) -> np.ndarray:
    mask = np.arange(t_max)[None, :] < lengths[:, None]
    bias = np.where(mask, 0.0, MASK_VALUE)
    return bias[:, None, None, :]


def param_specs(config: ModelConfig, with_ne_memory: bool, n: int = 1) -> dict[str, tuple]:
    """Deterministic name -> shape map for every trainable tensor."""
    d, ffn, v, heads = config.d_model, config.ffn_dim, config.vocab_size, config.num_heads
    ch = d
    specs: dict[str, tuple] = {"embed.table": (v, d)}

    freq = config.feature_dim
    in_ch = 1
    for stage in range(1, config.conv_stages + 1):
        specs[f"encoder.sub.conv{stage}.w"] = (ch, in_ch, 3, 3)
        specs[f"encoder.sub.conv{stage}.b"] = (ch,)
        freq = (freq + 1) // 2
        in_ch = ch
    specs["encoder.sub.proj.w"] = (ch * freq, d)
    specs["encoder.sub.proj.b"] = (d,)

    def attention(prefix: str):
        for name in ("q", "k", "v", "o"):
            specs[f"{prefix}.{name}.w"] = (d, d)
            specs[f"{prefix}.{name}.b"] = (d,)

    def norm(prefix: str):
        specs[f"{prefix}.g"] = (d,)
        specs[f"{prefix}.b"] = (d,)

    def ffn_block(prefix: str):
        specs[f"{prefix}.fc1.w"] = (d, ffn)
        specs[f"{prefix}.fc1.b"] = (ffn,)
        specs[f"{prefix}.fc2.w"] = (ffn, d)
        specs[f"{prefix}.fc2.b"] = (d,)

    for i in range(config.encoder_layers):
        norm(f"encoder.layer{i}.ln1")
        attention(f"encoder.layer{i}.attn")
        norm(f"encoder.layer{i}.ln2")
        ffn_block(f"encoder.layer{i}.ffn")
    norm("encoder.ln")

    specs["ctc_head.w"] = (d, v)
    specs["ctc_head.b"] = (v,)

    for i in range(config.decoder_layers):
        norm(f"decoder.layer{i}.ln1")
        attention(f"decoder.layer{i}.self")
        if with_ne_memory:
            attention(f"decoder.layer{i}.ne")
            specs[f"decoder.layer{i}.nproj.w"] = (2 * d, d)
            specs[f"decoder.layer{i}.nproj.b"] = (d,)
        norm(f"decoder.layer{i}.ln2")
        attention(f"decoder.layer{i}.cross")
        norm(f"decoder.layer{i}.ln3")
        ffn_block(f"decoder.layer{i}.ffn")
    norm("decoder.ln")
    specs["decoder.out.w"] = (d, v)
    specs["decoder.out.b"] = (v,)

    if with_ne_memory:
        specs["ne.proj.w"] = (n * d, d)
        specs["ne.proj.b"] = (d,)
        for i in range(config.ne_layers):
            norm(f"ne.layer{i}.ln1")
            attention(f"ne.layer{i}.attn")
            norm(f"ne.layer{i}.ln2")
            ffn_block(f"ne.layer{i}.ffn")
        norm("ne.ln")
    return specs


def count_params(config: ModelConfig, fusion: FusionConfig) -> int:
    specs = param_specs(config, fusion.method == METHOD_NBEST, fusion.n)
    return int(sum(np.prod(shape) for shape in specs.values()))


class Model:
    """Stateful parameter holder; all forward passes build fresh graphs."""

    def __init__(self, config: ModelConfig, fusion: FusionConfig, seed: int = 0):
        self.config = config
        self.fusion = fusion
        self.uses_ne_memory = fusion.method == METHOD_NBEST
        if self.uses_ne_memory and config.ne_layers < 1:
            raise ValueError("the N-best method needs ne_layers >= 1")
        self.training = False
        self.rng = np.random.default_rng(seed + 1)

        init_rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        for name, shape in param_specs(config, self.uses_ne_memory, fusion.n).items():
            if ".ln" in name:
                fill = np.ones(shape) if name.endswith(".g") else np.zeros(shape)
                self.params[name] = Tensor(fill, requires_grad=True)
            elif name.endswith(".b"):
                self.params[name] = Tensor(np.zeros(shape), requires_grad=True)
            elif name == "embed.table":
                scale = config.d_model ** -0.5
                self.params[name] = Tensor(
                    init_rng.normal(0.0, scale, size=shape), requires_grad=True
                )
            else:
                self.params[name] = tz.parameter(shape, init_rng)

    # -- mode & parameter plumbing ------------------------------------------

    def train(self, flag: bool = True) -> "Model":
        self.training = flag
        return self

    def eval(self) -> "Model":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        mismatched = [
            name
            for name in self.params
            if name in arrays and arrays[name].shape != self.params[name].shape
        ]
        if mismatched:
            raise ValueError(f"shape mismatch for parameters: {sorted(mismatched)}")
        missing = [name for name in self.params if name not in arrays]
        if missing:
            raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
        for name, p in self.params.items():
            p.data = arrays[name].astype(p.data.dtype)

    # -- shared building blocks ----------------------------------------------

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return tz.matmul(x, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _norm(self, x: Tensor, name: str) -> Tensor:
        return tz.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _drop(self, x: Tensor) -> Tensor:
        return tz.dropout(x, self.config.dropout, self.rng, self.training)

    def _mha(self, prefix: str, q_in: Tensor, kv_in: Tensor, bias: np.ndarray | None) -> Tensor:
        d, heads = self.config.d_model, self.config.num_heads
        dh = d // heads
        b, lq = q_in.shape[0], q_in.shape[1]
        lk = kv_in.shape[1]
        q = self._linear(q_in, f"{prefix}.q").reshape(b, lq, heads, dh).transpose(0, 2, 1, 3)
        k = self._linear(kv_in, f"{prefix}.k").reshape(b, lk, heads, dh).transpose(0, 2, 3, 1)
        v = self._linear(kv_in, f"{prefix}.v").reshape(b, lk, heads, dh).transpose(0, 2, 1, 3)
        scores = tz.matmul(q, k) * (1.0 / math.sqrt(dh))
        if bias is not None:
            scores = scores + Tensor(bias)
        weights = tz.softmax(scores, axis=-1)
        ctx = tz.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, lq, d)
        return self._linear(ctx, f"{prefix}.o")

    def _ffn(self, x: Tensor, prefix: str) -> Tensor:
        return self._linear(tz.relu(self._linear(x, f"{prefix}.fc1")), f"{prefix}.fc2")

    # -- encoder ----------------------------------------------------------------

    def encode(self, features: np.ndarray, lengths: np.ndarray) -> EncoderOutput:
        """Conv subsampling then self-attention blocks over real frames.

        ``features`` is [B, T, F] with zero padding past each utterance's
        length; padded frames stay masked through every stage so states
        on real frames are independent of the amount of padding.
        """
        if features.ndim != 3 or features.shape[2] != self.config.feature_dim:
            raise ValueError(
                f"expected features [B, T, {self.config.feature_dim}], got {features.shape}"
            )
        lengths = np.asarray(lengths, dtype=np.int64)
        if int(lengths.min()) < self.config.subsample_factor:
            raise ValueError(
                f"utterance too short: need at least {self.config.subsample_factor} frames"
            )
        b, t_max, _ = features.shape
        x = Tensor(features.reshape(b, 1, t_max, features.shape[2]))
        cur = lengths.copy()
        for stage in range(1, self.config.conv_stages + 1):
            x = tz.relu(
                tz.conv2d(
                    x,
                    self.params[f"encoder.sub.conv{stage}.w"],
                    self.params[f"encoder.sub.conv{stage}.b"],
                    stride=2,
                    pad=1,
                )
            )
            cur = (cur + 1) // 2
            t_now = x.shape[2]
            frame_mask = (np.arange(t_now)[None, :] < cur[:, None]).astype(np.float64)
            x = x * Tensor(frame_mask[:, None, :, None])

        b_, ch, t_sub, f_sub = x.shape
        x = x.transpose(0, 2, 1, 3).reshape(b_, t_sub, ch * f_sub)
        x = self._linear(x, "encoder.sub.proj")
        x = x * math.sqrt(self.config.d_model) + Tensor(_sinusoidal_pe(t_sub, self.config.d_model))
        x = self._drop(x)

        key_bias = _length_bias(cur, t_sub)
        for i in range(self.config.encoder_layers):
            h = self._norm(x, f"encoder.layer{i}.ln1")
            x = x + self._drop(self._mha(f"encoder.layer{i}.attn", h, h, key_bias))
            h = self._norm(x, f"encoder.layer{i}.ln2")
            x = x + self._drop(self._ffn(h, f"encoder.layer{i}.ffn"))
        x = self._norm(x, "encoder.ln")
        return EncoderOutput(h_s=x, lengths=cur, key_bias=key_bias)

    def ctc_head(self, enc: EncoderOutput) -> Tensor:
        """Per-frame log-probabilities over the full vocabulary, [B, T', V]."""
        return tz.log_softmax(self._linear(enc.h_s, "ctc_head"), axis=-1)

    # -- token embeddings ---------------------------------------------------------

    def embed_tokens(self, ids: np.ndarray) -> Tensor:
        """Scaled table lookup plus sinusoidal positions over the last axis.

        The blank id embeds through its own learned row like any other
        token; aligned fusion relies on that.
        """
        ids = np.asarray(ids, dtype=np.int64)
        emb = tz.embedding(self.params["embed.table"], ids) * math.sqrt(self.config.d_model)
        return emb + Tensor(_sinusoidal_pe(ids.shape[-1], self.config.d_model))

    # -- N-best memory -------------------------------------------------------------

    def ne_input(self, nbest: NBestList, max_len: int, pad_id: int) -> Tensor:
        """Project the concatenated hypothesis embeddings to model width, [max_len, d]."""
        ids = nbest_id_matrix(nbest, self.fusion.n, max_len, pad_id)
        emb = self.embed_tokens(ids)  # [n, max_len, d]
        n, L, d = emb.shape
        flat = emb.transpose(1, 0, 2).reshape(L, n * d)
        return self._linear(flat, "ne.proj")

    def ne_input_batch(self, nbests: list[NBestList], max_len: int, pad_id: int) -> Tensor:
        ids = np.stack(
            [nbest_id_matrix(nb, self.fusion.n, max_len, pad_id) for nb in nbests], axis=0
        )  # [B, n, L]
        emb = self.embed_tokens(ids)  # [B, n, L, d]
        b, n, L, d = emb.shape
        flat = emb.transpose(0, 2, 1, 3).reshape(b, L, n * d)
        return self._linear(flat, "ne.proj")

    def ne_encode(self, x: Tensor) -> Tensor:
        """Self-attention blocks over the hypothesis memory (no causal mask)."""
        if self.config.ne_layers < 1:
            raise ValueError("ne_encode requires ne_layers >= 1")
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        for i in range(self.config.ne_layers):
            h = self._norm(x, f"ne.layer{i}.ln1")
            x = x + self._drop(self._mha(f"ne.layer{i}.attn", h, h, None))
            h = self._norm(x, f"ne.layer{i}.ln2")
            x = x + self._drop(self._ffn(h, f"ne.layer{i}.ffn"))
        x = self._norm(x, "ne.ln")
        return x.reshape(*x.shape[1:]) if squeeze else x

    # -- decoder ----------------------------------------------------------------

    def decoder_forward(
        self,
        input_emb: Tensor,
        enc: EncoderOutput,
        ne_memory: Tensor | None = None,
    ) -> Tensor:
        """Causal decoder over ``input_emb`` attending encoder states; [B, L, V] logits.

        When the model carries an N-best memory, every layer runs a second
        attention over it in parallel with self-attention; the two outputs
        are concatenated and projected back to model width before
        encoder-decoder attention.
        """
        if ne_memory is not None and not self.uses_ne_memory:
            raise ValueError("ne_memory supplied to a model without the N-best method")
        if ne_memory is None and self.uses_ne_memory:
            raise ValueError("this model requires ne_memory")
        squeeze = input_emb.ndim == 2
        if squeeze:
            input_emb = input_emb.reshape(1, *input_emb.shape)
            if ne_memory is not None and ne_memory.ndim == 2:
                ne_memory = ne_memory.reshape(1, *ne_memory.shape)

        x = self._drop(input_emb)
        causal = _causal_bias(x.shape[1])
        for i in range(self.config.decoder_layers):
            h = self._norm(x, f"decoder.layer{i}.ln1")
            a = self._mha(f"decoder.layer{i}.self", h, h, causal)
            if ne_memory is not None:
                side = self._mha(f"decoder.layer{i}.ne", h, ne_memory, None)
                a = self._linear(tz.concat([a, side], axis=-1), f"decoder.layer{i}.nproj")
            x = x + self._drop(a)
            h = self._norm(x, f"decoder.layer{i}.ln2")
            x = x + self._drop(self._mha(f"decoder.layer{i}.cross", h, enc.h_s, enc.key_bias))
            h = self._norm(x, f"decoder.layer{i}.ln3")
            x = x + self._drop(self._ffn(h, f"decoder.layer{i}.ffn"))
        x = self._norm(x, "decoder.ln")
        logits = self._linear(x, "decoder.out")
        return logits.reshape(*logits.shape[1:]) if squeeze else logits


def nbest_id_matrix(nbest: NBestList, n: int, max_len: int, pad_id: int) -> np.ndarray:
    """[n, max_len] hypothesis ids, eos-padded; short lists repeat the last entry."""
    if len(nbest) == 0:
        raise ValueError("empty N-best list")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    seqs = nbest.sequences()[:n]
    while len(seqs) < n:
        seqs.append(seqs[-1])
    ids = np.full((n, max_len), pad_id, dtype=np.int64)
    for row, seq in enumerate(seqs):
        clipped = seq[:max_len]
        ids[row, : len(clipped)] = clipped
    return ids


def fuse_embeddings(emb_y: Tensor, emb_w: Tensor, alpha: float) -> Tensor:
    """Convex combination ``alpha * emb_w + (1 - alpha) * emb_y``.

    The endpoints return the operand itself, so ``alpha == 0`` is exactly
    (bitwise) the plain teacher-forcing input.
    """
    if emb_y.shape != emb_w.shape:
        raise ValueError(f"fusion operands differ in shape: {emb_y.shape} vs {emb_w.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return emb_y
    if alpha == 1.0:
        return emb_w
    return emb_w * alpha + emb_y * (1.0 - alpha)
