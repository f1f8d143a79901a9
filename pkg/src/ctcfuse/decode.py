"""Inference: attention beam search, CTC+attention rescoring, CER reports."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ctcfuse.alignment import edit_distance
from ctcfuse.ctc import CtcPosterior, prefix_beam_nbest
from ctcfuse.data import Utterance, Vocabulary
from ctcfuse.model import EncoderOutput, Model
from ctcfuse.tensor import Tensor

METHOD_ATTENTION = "attention"
METHOD_RESCORE = "ctc_rescore"


@dataclass(frozen=True)
class DecodeConfig:
    method: str = METHOD_ATTENTION
    beam: int = 10
    lambda_dec: float = 0.3  # rescore interpolation toward the CTC score
    max_len_factor: float = 1.0  # output-length cap as a fraction of encoder frames

    def __post_init__(self):
        if self.method not in (METHOD_ATTENTION, METHOD_RESCORE):
            raise ValueError(f"unknown decode method {self.method!r}")
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if not 0.0 <= self.lambda_dec <= 1.0:
            raise ValueError("lambda_dec must lie in [0, 1]")
        if self.max_len_factor <= 0:
            raise ValueError("max_len_factor must be positive")


def _log_softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _tile_encoder(enc: EncoderOutput, count: int) -> EncoderOutput:
    return EncoderOutput(
        h_s=Tensor(np.repeat(enc.h_s.data, count, axis=0)),
        lengths=np.repeat(enc.lengths, count),
        key_bias=np.repeat(enc.key_bias, count, axis=0),
    )


def _ne_memory_for(model: Model, enc: EncoderOutput, vocab: Vocabulary) -> Tensor | None:
    """Encode the utterance's CTC N-best once; attended at every decode step."""
    if not model.uses_ne_memory:
        return None
    posterior = model.ctc_head(enc)
    post = CtcPosterior(posterior.data[0, : int(enc.lengths[0])], vocab.blank_id)
    nbest = prefix_beam_nbest(post, model.fusion.beam_width, model.fusion.n)
    max_len = max(1, max((len(s) for s in nbest.sequences()), default=1))
    return model.ne_encode(model.ne_input_batch([nbest], max_len, vocab.pad_id))


def attention_beam_decode(
    features: np.ndarray,
    model: Model,
    cfg: DecodeConfig,
    vocab: Vocabulary,
) -> tuple[tuple[int, ...], float, bool]:
    """Autoregressive beam search from sos; hypotheses end at eos.

    Returns ``(tokens, score, reached_eos)`` where the score is the total
    log-probability normalized by output length at the final ranking
    only. If nothing reaches eos within the length cap the best partial
    hypothesis comes back flagged.
    """
    model.train(False)
    feats = np.asarray(features, dtype=np.float64)
    enc = model.encode(feats[None, :, :], np.array([feats.shape[0]]))
    ne_memory = _ne_memory_for(model, enc, vocab)
    max_len = max(1, int(round(cfg.max_len_factor * int(enc.lengths[0]))))

    # (tokens, raw log-prob, finished); finished entries ride along in the
    # beam so beam=1 terminates exactly where stepwise argmax does
    beams: list[tuple[tuple[int, ...], float, bool]] = [((), 0.0, False)]
    for _ in range(max_len):
        live = [(i, b) for i, b in enumerate(beams) if not b[2]]
        if not live:
            break
        ids = np.array([(vocab.sos_id,) + b[0] for _, b in live], dtype=np.int64)
        enc_b = _tile_encoder(enc, len(live))
        mem_b = None
        if ne_memory is not None:
            mem_b = Tensor(np.repeat(ne_memory.data, len(live), axis=0))
        logits = model.decoder_forward(model.embed_tokens(ids), enc_b, mem_b)
        logp = _log_softmax_np(logits.data[:, -1, :])
        grown: list[tuple[tuple[int, ...], float, bool]] = [b for b in beams if b[2]]
        for row, (_, (toks, score, _)) in enumerate(live):
            for k in range(vocab.size):
                cand = score + float(logp[row, k])
                if k == vocab.eos_id:
                    grown.append((toks, cand, True))
                else:
                    grown.append((toks + (k,), cand, False))
        grown.sort(key=lambda tsf: (-tsf[1], tsf[0]))
        beams = grown[: cfg.beam]

    def normalized(entry) -> float:
        toks, score, _ = entry
        return score / (len(toks) + 1)  # +1 counts the eos emission

    finished = [b for b in beams if b[2]]
    pool = finished if finished else beams
    best = max(pool, key=lambda b: (normalized(b), b[0]))
    return best[0], normalized(best), bool(finished)


def teacher_forced_scores(
    model: Model,
    enc: EncoderOutput,
    candidates: list[tuple[int, ...]],
    vocab: Vocabulary,
    ne_memory: Tensor | None,
) -> np.ndarray:
    """Total attention log-likelihood of each candidate (incl. its eos)."""
    l_max = max(len(c) for c in candidates) + 1
    ids = np.full((len(candidates), l_max), vocab.pad_id, dtype=np.int64)
    tgt = np.full((len(candidates), l_max), vocab.pad_id, dtype=np.int64)
    mask = np.zeros((len(candidates), l_max))
    for i, cand in enumerate(candidates):
        row = (vocab.sos_id,) + cand
        ids[i, : len(row)] = row
        tgt_row = cand + (vocab.eos_id,)
        tgt[i, : len(tgt_row)] = tgt_row
        mask[i, : len(tgt_row)] = 1.0
    enc_b = _tile_encoder(enc, len(candidates))
    mem_b = None
    if ne_memory is not None:
        mem_b = Tensor(np.repeat(ne_memory.data, len(candidates), axis=0))
    logits = model.decoder_forward(model.embed_tokens(ids), enc_b, mem_b).data
    logp = _log_softmax_np(logits)
    rows = np.arange(len(candidates))[:, None]
    cols = np.arange(l_max)[None, :]
    picked = logp[rows, cols, tgt] * mask
    return picked.sum(axis=1)


def ctc_rescore_decode(
    features: np.ndarray,
    model: Model,
    cfg: DecodeConfig,
    vocab: Vocabulary,
) -> tuple[tuple[int, ...], float]:
    """Rerank CTC prefix-beam candidates by interpolated CTC/attention scores.

    ``lambda_dec`` weighs the CTC path-sum score; ``1 - lambda_dec`` the
    teacher-forced attention log-likelihood. An empty candidate is scored
    like any other hypothesis.
    """
    model.train(False)
    feats = np.asarray(features, dtype=np.float64)
    enc = model.encode(feats[None, :, :], np.array([feats.shape[0]]))
    posterior = model.ctc_head(enc)
    post = CtcPosterior(posterior.data[0, : int(enc.lengths[0])], vocab.blank_id)
    nbest = prefix_beam_nbest(post, cfg.beam, cfg.beam)
    ne_memory = _ne_memory_for(model, enc, vocab)

    candidates = nbest.sequences()
    ctc_scores = np.array([score for _, score in nbest.hypotheses])
    att_scores = teacher_forced_scores(model, enc, candidates, vocab, ne_memory)
    combined = cfg.lambda_dec * ctc_scores + (1.0 - cfg.lambda_dec) * att_scores
    best = int(np.argmax(combined))
    return candidates[best], float(combined[best])


def make_decoder(model: Model, cfg: DecodeConfig, vocab: Vocabulary):
    """Utterance -> hypothesis callable for :func:`evaluate`."""

    def decode_fn(utt: Utterance) -> tuple[int, ...]:
        if cfg.method == METHOD_ATTENTION:
            return attention_beam_decode(utt.features, model, cfg, vocab)[0]
        return ctc_rescore_decode(utt.features, model, cfg, vocab)[0]

    return decode_fn


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------


@dataclass
class EvalRecord:
    utt_id: str
    cer: float
    subs: int
    ins: int
    dels: int
    ref_len: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "utt_id": self.utt_id,
                "cer": self.cer,
                "subs": self.subs,
                "ins": self.ins,
                "dels": self.dels,
            },
            sort_keys=True,
        )


@dataclass
class EvalReport:
    records: list[EvalRecord]
    corpus_cer: float
    total_edits: int
    total_ref_len: int

    def render_table(self) -> str:
        lines = [f"{'utt_id':<16} {'cer':>7} {'sub':>4} {'ins':>4} {'del':>4}"]
        for rec in self.records:
            lines.append(
                f"{rec.utt_id:<16} {rec.cer:7.4f} {rec.subs:4d} {rec.ins:4d} {rec.dels:4d}"
            )
        lines.append(
            f"corpus CER {self.corpus_cer:.4f} "
            f"({self.total_edits} edits / {self.total_ref_len} reference tokens)"
        )
        return "\n".join(lines)

    def to_jsonl(self) -> str:
        lines = [rec.to_json() for rec in self.records]
        lines.append(
            json.dumps(
                {
                    "summary": True,
                    "corpus_cer": self.corpus_cer,
                    "total_edits": self.total_edits,
                    "total_ref_len": self.total_ref_len,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines)


def evaluate(corpus: list[Utterance], decode_fn) -> EvalReport:
    """Corpus CER (total edits over total reference length) plus per-utterance rows."""
    records = []
    total_edits = 0
    total_ref = 0
    for utt in corpus:
        hyp = tuple(decode_fn(utt))
        cost, script = edit_distance(utt.transcript, hyp)
        subs = sum(1 for op, _, _ in script if op == "sub")
        dels = sum(1 for op, _, _ in script if op == "del")
        ins = sum(1 for op, _, _ in script if op == "ins")
        ref_len = len(utt.transcript)
        records.append(
            EvalRecord(
                utt_id=utt.utt_id,
                cer=cost / ref_len,
                subs=subs,
                ins=ins,
                dels=dels,
                ref_len=ref_len,
            )
        )
        total_edits += cost
        total_ref += ref_len
    return EvalReport(
        records=records,
        corpus_cer=total_edits / total_ref if total_ref else 0.0,
        total_edits=total_edits,
        total_ref_len=total_ref,
    )


def format_hypothesis(utt_id: str, tokens, score: float, vocab: Vocabulary) -> str:
    """One ``utt_id<TAB>log_score<TAB>tokens`` hypothesis line."""
    toks = " ".join(vocab.id_to_token[t] for t in tokens)
    return f"{utt_id}\t{score:.8f}\t{toks}"
