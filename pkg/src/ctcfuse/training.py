"""Joint multi-task training with CTC-hypothesis decoder inputs.

Every step: encode, CTC head, CTC loss, fresh hypotheses from the current
posterior, per-utterance decoder-input construction (gated fusion,
aligned fusion, or N-best memory), label-smoothed cross-entropy, joint
loss, backward, Adam update. A batch may mix all three input pathways;
masks keep padded and blank-target positions out of the loss.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ctcfuse import tensor as tz
from ctcfuse.alignment import GatingConfig, PathwayDecision, aef_align, gate
from ctcfuse.ctc import CtcPosterior, ctc_loss_op, greedy_1best, min_frames, prefix_beam_nbest
from ctcfuse.data import Batch, Utterance, Vocabulary, make_batches
from ctcfuse.model import (
    METHOD_ALIGNED,
    METHOD_BASELINE,
    METHOD_FUSION,
    METHOD_NBEST,
    FusionConfig,
    Model,
    ModelConfig,
)
from ctcfuse.tensor import Tensor, load_tensors, save_tensors

CHECKPOINT_FORMAT_VERSION = 1


class NumericError(Exception):
    """Raised when a loss or update turns non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    fusion: FusionConfig = field(default_factory=FusionConfig)
    gating: GatingConfig = field(default_factory=GatingConfig)
    ctc_weight: float = 0.3
    label_smoothing: float = 0.1
    lr_base: float = 0.03
    warmup_steps: int = 80
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    epochs: int = 30
    batch_size: int = 8
    batch_policy: str = "shuffle"
    seed: int = 7
    aef_align_before_gate: bool = True
    pretrain_path: str | None = None
    pretrain_selection: str | None = None  # "encoder" | "encoder_decoder"
    eval_every: int = 5
    stop_at_train_cer: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise ValueError("ctc_weight must lie in [0, 1]")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if self.pretrain_selection not in (None, "encoder", "encoder_decoder"):
            raise ValueError(f"unknown pretrain selection {self.pretrain_selection!r}")


def desk_train_config(
    vocab_size: int,
    method: str = METHOD_BASELINE,
    seed: int = 7,
    feature_dim: int = 8,
) -> TrainConfig:
    """Desk-scale defaults: small model, dropout off, method-matched gating."""
    model_cfg = ModelConfig(vocab_size=vocab_size, feature_dim=feature_dim, dropout=0.0)
    if method == METHOD_FUSION:
        fusion = FusionConfig(method=method, alpha=0.5)
        gating = GatingConfig(mode="absolute", t_l=2)
    elif method == METHOD_ALIGNED:
        fusion = FusionConfig(method=method, alpha=0.5)
        gating = GatingConfig(mode="relative", t_r=0.15)
    elif method == METHOD_NBEST:
        fusion = FusionConfig(method=method, n=3, beam_width=5)
        gating = GatingConfig()
    else:
        fusion = FusionConfig()
        gating = GatingConfig()
    return TrainConfig(model=model_cfg, fusion=fusion, gating=gating, seed=seed)


@dataclass
class EpochMetrics:
    epoch: int
    joint_loss: float
    ctc_loss: float
    att_loss: float
    blanks_inserted: int
    pathway_counts: dict[str, int]
    ctc_unreachable: int
    utterances: int
    train_cer: float | None
    wall_time_s: float

    def to_json_record(self) -> str:
        """Deterministic serialization: wall time stays out of the record."""
        payload = {
            "epoch": self.epoch,
            "joint_loss": self.joint_loss,
            "ctc_loss": self.ctc_loss,
            "att_loss": self.att_loss,
            "blanks_inserted": self.blanks_inserted,
            "pathway_counts": self.pathway_counts,
            "ctc_unreachable": self.ctc_unreachable,
            "utterances": self.utterances,
            "train_cer": self.train_cer,
        }
        return json.dumps(payload, sort_keys=True)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def joint_loss(l_ctc: Tensor, l_att: Tensor, lam: float) -> Tensor:
    """Interpolated multi-task objective ``lam * ctc + (1 - lam) * att``."""
    if not np.isfinite(l_ctc.data).all():
        raise NumericError("non-finite CTC loss")
    if not np.isfinite(l_att.data).all():
        raise NumericError("non-finite attention loss")
    return l_ctc * lam + l_att * (1.0 - lam)


def smoothed_cross_entropy(
    logits: Tensor, targets: np.ndarray, mask: np.ndarray, smoothing: float
) -> Tensor:
    """Masked label-smoothed CE, averaged over unmasked positions.

    The smoothed target puts ``1 - smoothing`` on the label and spreads
    ``smoothing`` uniformly over the remaining classes; masked positions
    contribute exactly zero gradient.
    """
    vocab = logits.shape[-1]
    logp = tz.log_softmax(logits, axis=-1)
    q = np.full(logits.shape, smoothing / (vocab - 1))
    rows = np.arange(targets.shape[0])[:, None]
    cols = np.arange(targets.shape[1])[None, :]
    q[rows, cols, targets] = 1.0 - smoothing
    q *= mask[..., None]
    denom = float(mask.sum())
    if denom == 0.0:
        raise ValueError("loss mask excludes every position")
    return (logp * Tensor(-q)).sum() * (1.0 / denom)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def lr_schedule(base: float, step: int, warmup: int) -> float:
    """Inverse-sqrt decay with linear warmup; peaks exactly at ``step == warmup``."""
    return base * min(step**-0.5, step * warmup**-1.5)


def adam_step(param, grad, m, v, step, lr, beta1=0.9, beta2=0.98, eps=1e-9):
    """One bias-corrected adaptive-moment update; returns (param, m, v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.lr_base = cfg.lr_base
        self.warmup = cfg.warmup_steps
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.adam_eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> float:
        self.step_count += 1
        lr = lr_schedule(self.lr_base, self.step_count, self.warmup)
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data, self.m[name], self.v[name] = adam_step(
                p.data, grad, self.m[name], self.v[name],
                self.step_count, lr, self.beta1, self.beta2, self.eps,
            )
            if not np.isfinite(p.data).all():
                raise NumericError(f"non-finite parameter after update: {name}")
        return lr

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.step_count], dtype=np.int64)}
        for name in self.params:
            out[f"adam.m.{name}"] = self.m[name].copy()
            out[f"adam.v.{name}"] = self.v[name].copy()
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["adam.step"][0])
        for name in self.params:
            self.m[name] = arrays[f"adam.m.{name}"].copy()
            self.v[name] = arrays[f"adam.v.{name}"].copy()


# ---------------------------------------------------------------------------
# decoder-input construction
# ---------------------------------------------------------------------------


@dataclass
class DecoderInputs:
    input_emb: Tensor  # [B, L, d]
    targets: np.ndarray  # [B, L] int64
    loss_mask: np.ndarray  # [B, L] float64
    pathway_counts: dict[str, int]
    blanks_inserted: int
    ctc_reachable: list[bool]
    ne_memory: Tensor | None
    y_rows: list[list[int]]
    w_rows: list[list[int]]
    alphas: np.ndarray


def compute_ctc_hypotheses(
    log_probs: np.ndarray,
    lengths: np.ndarray,
    fusion: FusionConfig,
    blank_id: int,
):
    """Fresh per-utterance hypotheses from the current posterior (detached).

    Greedy 1-best for the fusion methods, prefix-beam N-best for the
    memory method, None per utterance for the baseline.
    """
    out = []
    for i in range(log_probs.shape[0]):
        post = CtcPosterior(log_probs[i, : lengths[i]], blank_id)
        if fusion.method in (METHOD_FUSION, METHOD_ALIGNED):
            out.append(greedy_1best(post))
        elif fusion.method == METHOD_NBEST:
            out.append(prefix_beam_nbest(post, fusion.beam_width, fusion.n))
        else:
            out.append(None)
    return out


def _fit_length(seq, target_len: int, pad_id: int) -> list[int]:
    """Truncate or right-pad so teacher-forcing steps align with the targets."""
    fitted = list(seq[:target_len])
    fitted += [pad_id] * (target_len - len(fitted))
    return fitted


def build_decoder_input(
    batch: Batch,
    model: Model,
    cfg: TrainConfig,
    vocab: Vocabulary,
    hyps: list,
    enc_lengths: np.ndarray,
) -> DecoderInputs:
    """Assemble per-utterance decoder inputs, targets, and loss masks.

    Pathways: equal lengths fuse reference and hypothesis embeddings;
    close lengths feed the hypothesis (aligned first for the aligned
    method); distant lengths fall back to plain teacher forcing.
    Utterances whose target cannot be reached by any CTC path are forced
    to plain teacher forcing and excluded from the CTC term upstream.
    """
    method = cfg.fusion.method
    sos, eos, blank = vocab.sos_id, vocab.eos_id, vocab.blank_id
    counts = {d.value: 0 for d in PathwayDecision}
    blanks_total = 0
    reachable: list[bool] = []
    y_rows: list[list[int]] = []
    w_rows: list[list[int]] = []
    tgt_rows: list[list[int]] = []
    mask_blank_rows: list[list[bool]] = []
    alphas = np.zeros(batch.size)

    for i, y in enumerate(batch.transcripts):
        y = list(y)
        can_reach = int(enc_lengths[i]) >= min_frames(y)
        reachable.append(can_reach)
        y_in, w_in, tgt = [sos] + y, [sos] + y, y + [eos]
        mask_blank = [False] * len(tgt)
        decision = PathwayDecision.GROUND_TRUTH_ONLY

        if method in (METHOD_FUSION, METHOD_ALIGNED):
            w = list(hyps[i])
            pair = None
            if method == METHOD_ALIGNED and cfg.aef_align_before_gate:
                # align every utterance: the blank counter tracks raw CTC
                # output quality, including utterances later demoted
                pair = aef_align(tuple(y), tuple(w), blank)
                blanks_total += pair.blanks_inserted
            decision = gate(len(w), len(y), cfg.gating)
            if not can_reach:
                decision = PathwayDecision.GROUND_TRUTH_ONLY
            if decision is not PathwayDecision.GROUND_TRUTH_ONLY:
                # with align-before-gate off, only exactly-equal lengths
                # earn aligned fusion; close lengths feed the raw 1-best
                use_aligned = method == METHOD_ALIGNED and (
                    cfg.aef_align_before_gate or decision is PathwayDecision.FUSE
                )
                if use_aligned:
                    if pair is None:
                        pair = aef_align(tuple(y), tuple(w), blank)
                        blanks_total += pair.blanks_inserted
                    y_in = [sos] + list(pair.y_align)
                    w_in = [sos] + list(pair.w_align)
                    tgt = list(pair.y_align) + [eos]
                    mask_blank = [t == blank for t in tgt]
                    alphas[i] = cfg.fusion.alpha
                elif decision is PathwayDecision.FUSE:
                    w_in = [sos] + w
                    alphas[i] = cfg.fusion.alpha
                else:  # CTC_AS_INPUT: the hypothesis replaces the reference input
                    w_in = [sos] + _fit_length(w, len(y), eos)
                    alphas[i] = 1.0
        counts[decision.value] += 1
        y_rows.append(y_in)
        w_rows.append(w_in)
        tgt_rows.append(tgt)
        mask_blank_rows.append(mask_blank)

    l_max = max(len(r) for r in y_rows)
    y_ids = np.full((batch.size, l_max), vocab.pad_id, dtype=np.int64)
    w_ids = np.full((batch.size, l_max), vocab.pad_id, dtype=np.int64)
    targets = np.full((batch.size, l_max), vocab.pad_id, dtype=np.int64)
    mask = np.zeros((batch.size, l_max))
    for i in range(batch.size):
        n = len(y_rows[i])
        y_ids[i, :n] = y_rows[i]
        w_ids[i, :n] = w_rows[i]
        targets[i, :n] = tgt_rows[i]
        mask[i, :n] = 1.0
        for pos, is_blank in enumerate(mask_blank_rows[i]):
            if is_blank:
                mask[i, pos] = 0.0

    emb_y = model.embed_tokens(y_ids)
    if np.all(alphas == 0.0):
        input_emb = emb_y
    else:
        emb_w = model.embed_tokens(w_ids)
        coef = Tensor(alphas[:, None, None])
        input_emb = emb_w * coef + emb_y * (1.0 - coef)

    ne_memory = None
    if method == METHOD_NBEST:
        max_hyp = max(
            (len(seq) for nb in hyps for seq in nb.sequences()[: cfg.fusion.n]), default=0
        )
        ne_memory = model.ne_encode(
            model.ne_input_batch(hyps, max(1, max_hyp), vocab.pad_id)
        )

    return DecoderInputs(
        input_emb=input_emb,
        targets=targets,
        loss_mask=mask,
        pathway_counts=counts,
        blanks_inserted=blanks_total,
        ctc_reachable=reachable,
        ne_memory=ne_memory,
        y_rows=y_rows,
        w_rows=w_rows,
        alphas=alphas,
    )


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class StepStats:
    joint: float
    ctc: float
    att: float
    blanks_inserted: int
    pathway_counts: dict[str, int]
    unreachable: int
    size: int
    reachable: int


def run_training_step(
    batch: Batch,
    model: Model,
    optimizer: Adam,
    cfg: TrainConfig,
    vocab: Vocabulary,
) -> StepStats:
    enc = model.encode(batch.features, batch.feat_lengths)
    posterior = model.ctc_head(enc)
    hyps = compute_ctc_hypotheses(posterior.data, enc.lengths, cfg.fusion, vocab.blank_id)
    dec = build_decoder_input(batch, model, cfg, vocab, hyps, enc.lengths)

    ctc_terms = []
    for i, ok in enumerate(dec.ctc_reachable):
        if ok:
            sliced = posterior[i, : int(enc.lengths[i])]
            term, _ = ctc_loss_op(sliced, batch.transcripts[i], vocab.blank_id)
            ctc_terms.append(term)
    if ctc_terms:
        ctc_mean = ctc_terms[0]
        for term in ctc_terms[1:]:
            ctc_mean = ctc_mean + term
        ctc_mean = ctc_mean * (1.0 / len(ctc_terms))
    else:
        ctc_mean = Tensor(np.asarray(0.0))

    logits = model.decoder_forward(dec.input_emb, enc, dec.ne_memory)
    att = smoothed_cross_entropy(logits, dec.targets, dec.loss_mask, cfg.label_smoothing)
    total = joint_loss(ctc_mean, att, cfg.ctc_weight)

    total.backward()
    optimizer.step()
    model.zero_grad()

    return StepStats(
        joint=total.item(),
        ctc=ctc_mean.item(),
        att=att.item(),
        blanks_inserted=dec.blanks_inserted,
        pathway_counts=dec.pathway_counts,
        unreachable=sum(not ok for ok in dec.ctc_reachable),
        size=batch.size,
        reachable=sum(dec.ctc_reachable),
    )


def train_epoch(
    corpus: list[Utterance],
    vocab: Vocabulary,
    model: Model,
    optimizer: Adam,
    cfg: TrainConfig,
    epoch: int,
) -> EpochMetrics:
    """One deterministic pass: batch order and dropout derive from (seed, epoch)."""
    start = time.perf_counter()
    model.train(True)
    model.rng = np.random.default_rng(cfg.seed * 7919 + epoch)
    batches = make_batches(
        corpus, cfg.batch_size, vocab, policy=cfg.batch_policy, seed=cfg.seed * 100003 + epoch
    )
    totals = {"joint": 0.0, "ctc": 0.0, "att": 0.0}
    blanks = unreachable = seen = reachable = 0
    counts = {d.value: 0 for d in PathwayDecision}
    for batch_idx, batch in enumerate(batches):
        try:
            stats = run_training_step(batch, model, optimizer, cfg, vocab)
        except (NumericError, FloatingPointError) as err:
            raise NumericError(
                f"epoch {epoch} batch {batch_idx} ({batch.utt_ids[0]}...): {err}"
            ) from err
        totals["joint"] += stats.joint * stats.size
        totals["att"] += stats.att * stats.size
        totals["ctc"] += stats.ctc * stats.reachable
        blanks += stats.blanks_inserted
        unreachable += stats.unreachable
        seen += stats.size
        reachable += stats.reachable
        for key, val in stats.pathway_counts.items():
            counts[key] += val
    model.train(False)
    return EpochMetrics(
        epoch=epoch,
        joint_loss=totals["joint"] / seen,
        ctc_loss=totals["ctc"] / reachable if reachable else math.inf,
        att_loss=totals["att"] / seen,
        blanks_inserted=blanks,
        pathway_counts=counts,
        ctc_unreachable=unreachable,
        utterances=seen,
        train_cer=None,
        wall_time_s=time.perf_counter() - start,
    )


@dataclass
class TrainResult:
    model: Model
    optimizer: Adam
    history: list[EpochMetrics]
    first_epoch_at_target: int | None
    final_train_cer: float | None


def train(
    corpus: list[Utterance],
    vocab: Vocabulary,
    cfg: TrainConfig,
    out_dir: str | None = None,
    log=None,
) -> TrainResult:
    """Full run: init (optionally from a donor checkpoint), epochs, metrics.

    Train CER is measured by greedy attention decoding every
    ``eval_every`` epochs (and on the final epoch); when
    ``stop_at_train_cer`` is set the run stops at the first measurement
    at or below it.
    """
    model = Model(cfg.model, cfg.fusion, seed=cfg.seed)
    if cfg.pretrain_path:
        init_from_pretrained(
            model, cfg.pretrain_path, cfg.pretrain_selection or "encoder", vocab.content_hash()
        )
    optimizer = Adam(model.params, cfg)
    return _train_loop(corpus, vocab, model, optimizer, cfg, out_dir, log, start_epoch=1)


def resume(
    corpus: list[Utterance],
    vocab: Vocabulary,
    checkpoint_path: str,
    cfg: TrainConfig,
    out_dir: str | None = None,
    log=None,
) -> TrainResult:
    """Continue a run from a checkpoint; epoch-derived seeds keep it exact."""
    model, optimizer, meta = load_checkpoint(checkpoint_path, cfg)
    return _train_loop(
        corpus, vocab, model, optimizer, cfg, out_dir, log, start_epoch=meta["epoch"] + 1
    )


def _train_loop(corpus, vocab, model, optimizer, cfg, out_dir, log, start_epoch) -> TrainResult:
    metrics_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.jsonl")

    def emit(line: str) -> None:
        if log is not None:
            log(line)

    history: list[EpochMetrics] = []
    first_at_target = None
    final_cer = None
    for epoch in range(start_epoch, cfg.epochs + 1):
        metrics = train_epoch(corpus, vocab, model, optimizer, cfg, epoch)
        measure = epoch % cfg.eval_every == 0 or epoch == cfg.epochs
        if measure:
            metrics.train_cer = _greedy_train_cer(corpus, vocab, model, cfg)
            final_cer = metrics.train_cer
        history.append(metrics)
        if metrics_path:
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(metrics.to_json_record() + "\n")
        emit(
            f"epoch {epoch:3d} joint={metrics.joint_loss:.4f} ctc={metrics.ctc_loss:.4f} "
            f"att={metrics.att_loss:.4f} blanks={metrics.blanks_inserted} "
            f"cer={'-' if metrics.train_cer is None else f'{metrics.train_cer:.4f}'} "
            f"wall={metrics.wall_time_s:.2f}s"
        )
        if metrics.train_cer is not None and first_at_target is None:
            target = cfg.stop_at_train_cer
            if target is not None and metrics.train_cer <= target:
                first_at_target = epoch
                break
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "model.ckpt"), model, optimizer, cfg, vocab,
                        epoch=history[-1].epoch if history else 0)
    return TrainResult(
        model=model,
        optimizer=optimizer,
        history=history,
        first_epoch_at_target=first_at_target,
        final_train_cer=final_cer,
    )


def _greedy_train_cer(corpus, vocab, model, cfg) -> float:
    from ctcfuse import decode as decode_mod
    from ctcfuse.alignment import edit_distance

    dcfg = decode_mod.DecodeConfig(method="attention", beam=1)
    total_edits = 0
    total_ref = 0
    model.train(False)
    for utt in corpus:
        hyp, _, _ = decode_mod.attention_beam_decode(utt.features, model, dcfg, vocab)
        total_edits += edit_distance(utt.transcript, hyp)[0]
        total_ref += len(utt.transcript)
    return total_edits / total_ref


# ---------------------------------------------------------------------------
# checkpoints and selective initialization
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: Model, optimizer: Adam, cfg: TrainConfig,
                    vocab: Vocabulary, epoch: int) -> None:
    """Binary tensor container plus a JSON sidecar at ``path`` / ``path.json``."""
    arrays = model.state_arrays()
    arrays.update(optimizer.state_arrays())
    save_tensors(path, arrays)
    sidecar = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(model.config),
        "fusion": asdict(model.fusion),
        "method": model.fusion.method,
        "vocab_hash": vocab.content_hash(),
        "epoch": epoch,
        "optimizer": {
            "lr_base": optimizer.lr_base,
            "warmup_steps": optimizer.warmup,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "adam_eps": optimizer.eps,
        },
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, cfg: TrainConfig | None = None) -> tuple[Model, Adam, dict]:
    """Rebuild model and optimizer state from a checkpoint pair."""
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format version {sidecar.get('format_version')} unsupported"
        )
    model_cfg = ModelConfig(**sidecar["model_config"])
    fusion = FusionConfig(**sidecar["fusion"])
    model = Model(model_cfg, fusion, seed=0)
    arrays = load_tensors(path)
    model.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("adam.")})
    if cfg is None:
        opt_meta = sidecar["optimizer"]
        cfg = TrainConfig(
            model=model_cfg,
            fusion=fusion,
            lr_base=opt_meta["lr_base"],
            warmup_steps=opt_meta["warmup_steps"],
            beta1=opt_meta["beta1"],
            beta2=opt_meta["beta2"],
            adam_eps=opt_meta["adam_eps"],
        )
    optimizer = Adam(model.params, cfg)
    optimizer.load_state_arrays(arrays)
    return model, optimizer, sidecar


_SELECTION_PREFIXES = {
    "encoder": ("encoder.", "ctc_head."),
    "encoder_decoder": ("encoder.", "ctc_head.", "decoder.", "embed."),
}


def _is_ne_param(name: str) -> bool:
    return name.startswith("ne.") or ".ne." in name or ".nproj." in name


def init_from_pretrained(
    model: Model, checkpoint_path, selection: str, vocab_hash: str | None = None
) -> Model:
    """Overwrite the selected parameter groups from a donor checkpoint.

    ``encoder`` covers the encoder stack and the CTC head;
    ``encoder_decoder`` additionally covers the decoder stack and the
    shared embedding table. N-best-memory parameters are never loaded.
    """
    if selection not in _SELECTION_PREFIXES:
        raise ValueError(f"unknown selection {selection!r}")
    with open(str(checkpoint_path) + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if vocab_hash is not None and sidecar.get("vocab_hash") != vocab_hash:
        raise ValueError("donor checkpoint was trained with a different vocabulary")
    arrays = load_tensors(checkpoint_path)
    prefixes = _SELECTION_PREFIXES[selection]
    mismatched = []
    missing = []
    for name, p in model.params.items():
        if _is_ne_param(name) or not name.startswith(prefixes):
            continue
        if name not in arrays:
            missing.append(name)
        elif arrays[name].shape != p.shape:
            mismatched.append(name)
    if missing:
        raise ValueError(f"donor checkpoint missing parameters: {sorted(missing)}")
    if mismatched:
        raise ValueError(f"shape mismatch loading parameters: {sorted(mismatched)}")
    for name, p in model.params.items():
        if _is_ne_param(name) or not name.startswith(prefixes):
            continue
        p.data = arrays[name].astype(p.data.dtype)
    return model
