"""Command-line surface: train, decode, eval, align, synth, stats, sweep, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Failures print one machine-parsable line to stderr:
``error kind=<usage|data|numeric> msg="..."``.

Environment overrides: ``CTCFUSE_OUTDIR`` replaces the output directory,
``CTCFUSE_THREADS`` pins the numeric thread pools (exported before the
numeric stack loads).

Heavy imports happen inside the handlers so thread pinning can take
effect first.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import itertools
import json
import os
import sys


class UsageError(Exception):
    """Bad flags, malformed configs, unknown keys."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); map to our code 1
        raise UsageError(message)


def _apply_thread_env() -> None:
    threads = os.environ.get("CTCFUSE_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _outdir(args) -> str | None:
    return os.environ.get("CTCFUSE_OUTDIR") or getattr(args, "out", None)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _build_dataclass(cls, payload: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - names)
    if unknown:
        raise UsageError(f"unknown keys in {where}: {', '.join(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid {where}: {err}") from err


def _load_json(path) -> dict:
    from ctcfuse.data import DataError

    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as err:
            raise UsageError(f"{path}: invalid JSON: {err}") from err


_TOP_LEVEL_KEYS = {"data", "model", "fusion", "gating", "train"}
_NESTED_TRAIN_KEYS = {"model", "fusion", "gating"}


def resolve_run_config(payload: dict, seed_override: int | None = None):
    """Validate a JSON run config exhaustively and materialize all defaults.

    Returns ``(vocab, corpus, train_config, resolved_dict)``.
    """
    from ctcfuse.alignment import GatingConfig
    from ctcfuse.data import (
        DataError,
        SynthConfig,
        build_vocab,
        load_manifest,
        load_vocab_file,
        synth_corpus,
    )
    from ctcfuse.model import FusionConfig, ModelConfig
    from ctcfuse.training import TrainConfig

    unknown = sorted(set(payload) - _TOP_LEVEL_KEYS)
    if unknown:
        raise UsageError(f"unknown top-level config keys: {', '.join(unknown)}")
    data_sec = dict(payload.get("data") or {})
    unknown = sorted(set(data_sec) - {"manifest", "vocab", "synth"})
    if unknown:
        raise UsageError(f"unknown keys in data: {', '.join(unknown)}")
    if ("manifest" in data_sec) == ("synth" in data_sec):
        raise UsageError("data section needs exactly one of 'manifest' or 'synth'")

    if "synth" in data_sec:
        synth_cfg = _build_dataclass(SynthConfig, dict(data_sec["synth"]), "data.synth")
        vocab, corpus = synth_corpus(synth_cfg)
        data_resolved = {"synth": dataclasses.asdict(synth_cfg)}
    else:
        manifest = data_sec["manifest"]
        if not os.path.exists(manifest):
            raise DataError(f"manifest not found: {manifest}")
        if data_sec.get("vocab"):
            vocab = load_vocab_file(data_sec["vocab"])
        else:
            with open(manifest, "r", encoding="utf-8") as fh:
                texts = [line.split("\t")[3] for line in fh.read().splitlines() if line]
            vocab = build_vocab(texts)
        corpus = load_manifest(manifest, vocab)
        data_resolved = {"manifest": manifest, "vocab": data_sec.get("vocab")}

    model_sec = dict(payload.get("model") or {})
    model_sec.setdefault("vocab_size", vocab.size)
    model_sec.setdefault("feature_dim", corpus[0].features.shape[1])
    model_sec.setdefault("dropout", 0.0)
    if model_sec["vocab_size"] != vocab.size:
        raise UsageError(
            f"model.vocab_size {model_sec['vocab_size']} does not match the vocabulary ({vocab.size})"
        )
    model_cfg = _build_dataclass(ModelConfig, model_sec, "model")
    if model_cfg.feature_dim != corpus[0].features.shape[1]:
        raise UsageError("model.feature_dim does not match the corpus features")

    fusion_cfg = _build_dataclass(FusionConfig, dict(payload.get("fusion") or {}), "fusion")
    gating_cfg = _build_dataclass(GatingConfig, dict(payload.get("gating") or {}), "gating")

    train_sec = dict(payload.get("train") or {})
    reserved = sorted(set(train_sec) & _NESTED_TRAIN_KEYS)
    if reserved:
        raise UsageError(f"train section must not nest: {', '.join(reserved)}")
    if seed_override is not None:
        train_sec["seed"] = seed_override
    train_cfg = _build_dataclass(
        TrainConfig,
        {**train_sec, "model": model_cfg, "fusion": fusion_cfg, "gating": gating_cfg},
        "train",
    )

    resolved = {
        "data": data_resolved,
        "model": dataclasses.asdict(model_cfg),
        "fusion": dataclasses.asdict(fusion_cfg),
        "gating": dataclasses.asdict(gating_cfg),
        "train": {
            k: v
            for k, v in dataclasses.asdict(train_cfg).items()
            if k not in _NESTED_TRAIN_KEYS
        },
    }
    return vocab, corpus, train_cfg, resolved


def _input_content_hash(data_resolved: dict) -> str:
    digest = hashlib.sha256()
    if "synth" in data_resolved:
        digest.update(json.dumps(data_resolved["synth"], sort_keys=True).encode())
        return digest.hexdigest()
    manifest = data_resolved["manifest"]
    base = os.path.dirname(os.path.abspath(manifest))
    with open(manifest, "rb") as fh:
        digest.update(fh.read())
    with open(manifest, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            feat = line.split("\t")[1]
            full = feat if os.path.isabs(feat) else os.path.join(base, feat)
            with open(full, "rb") as ffh:
                digest.update(ffh.read())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    from ctcfuse.training import train

    payload = _load_json(args.config)
    vocab, corpus, cfg, resolved = resolve_run_config(payload, seed_override=args.seed)
    out_dir = _outdir(args)
    log_lines: list[str] = []

    def log(line: str) -> None:
        log_lines.append(line)
        if not args.quiet:
            print(line)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="utf-8") as fh:
            json.dump(resolved, fh, indent=2, sort_keys=True)
            fh.write("\n")
        meta = {
            "seed": cfg.seed,
            "input_content_hash": _input_content_hash(resolved["data"]),
            "vocab_hash": vocab.content_hash(),
        }
        with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    result = train(corpus, vocab, cfg, out_dir=out_dir, log=log)
    if out_dir:
        with open(os.path.join(out_dir, "train.log"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
    final = result.history[-1]
    print(
        f"done epochs={final.epoch} joint={final.joint_loss:.4f} "
        f"train_cer={'-' if result.final_train_cer is None else f'{result.final_train_cer:.4f}'}"
    )
    return 0


def _load_model_and_vocab(args):
    from ctcfuse.data import DataError, build_vocab, load_manifest, load_vocab_file
    from ctcfuse.training import load_checkpoint

    model, _, sidecar = load_checkpoint(args.ckpt)
    if args.vocab:
        vocab = load_vocab_file(args.vocab)
    else:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            texts = [line.split("\t")[3] for line in fh.read().splitlines() if line]
        vocab = build_vocab(texts)
    if vocab.content_hash() != sidecar["vocab_hash"]:
        raise DataError(
            "vocabulary does not match the checkpoint (pass the training vocab with --vocab)"
        )
    corpus = load_manifest(args.manifest, vocab)
    return model, vocab, corpus


def cmd_decode(args) -> int:
    import numpy as np

    from ctcfuse.ctc import CtcPosterior, format_nbest, prefix_beam_nbest
    from ctcfuse.decode import DecodeConfig, attention_beam_decode, ctc_rescore_decode, format_hypothesis

    model, vocab, corpus = _load_model_and_vocab(args)
    cfg = DecodeConfig(
        method=args.method, beam=args.beam, lambda_dec=args.lambda_dec,
        max_len_factor=args.max_len_factor,
    )
    lines = []
    nbest_lines = []
    for utt in corpus:
        if cfg.method == "attention":
            hyp, score, _ = attention_beam_decode(utt.features, model, cfg, vocab)
        else:
            hyp, score = ctc_rescore_decode(utt.features, model, cfg, vocab)
        lines.append(format_hypothesis(utt.utt_id, hyp, score, vocab))
        if args.nbest:
            enc = model.encode(
                utt.features[None].astype(np.float64), np.array([utt.num_frames])
            )
            post = CtcPosterior(
                model.ctc_head(enc).data[0, : int(enc.lengths[0])], vocab.blank_id
            )
            nb = prefix_beam_nbest(post, max(args.beam, args.nbest), args.nbest)
            nbest_lines.append(format_nbest(utt.utt_id, nb, vocab.id_to_token))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    if args.nbest:
        nbest_path = (args.out or "nbest.tsv") + (".nbest.tsv" if args.out else "")
        with open(nbest_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(nbest_lines) + "\n")
    return 0


def _read_hypothesis_file(path, vocab):
    from ctcfuse.data import DataError

    hyps = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{line_no}: expected utt_id<TAB>score<TAB>tokens")
            utt_id, _, tokens = parts
            ids = tuple(
                vocab.token_to_id.get(tok, vocab.unk_id) for tok in tokens.split() if tok
            )
            hyps[utt_id] = ids
    return hyps


def cmd_eval(args) -> int:
    from ctcfuse.data import DataError, build_vocab, load_manifest, load_vocab_file
    from ctcfuse.decode import DecodeConfig, evaluate, make_decoder

    if (args.ckpt is None) == (args.hyp is None):
        raise UsageError("eval needs exactly one of --ckpt or --hyp")
    if args.hyp:
        if args.vocab:
            vocab = load_vocab_file(args.vocab)
        else:
            with open(args.manifest, "r", encoding="utf-8") as fh:
                texts = [line.split("\t")[3] for line in fh.read().splitlines() if line]
            vocab = build_vocab(texts)
        corpus = load_manifest(args.manifest, vocab)
        hyps = _read_hypothesis_file(args.hyp, vocab)
        missing = [u.utt_id for u in corpus if u.utt_id not in hyps]
        if missing:
            raise DataError(f"hypothesis file missing utterances: {missing[:5]}")
        decode_fn = lambda utt: hyps[utt.utt_id]
    else:
        model, vocab, corpus = _load_model_and_vocab(args)
        cfg = DecodeConfig(
            method=args.method, beam=args.beam, lambda_dec=args.lambda_dec,
            max_len_factor=args.max_len_factor,
        )
        decode_fn = make_decoder(model, cfg, vocab)

    report = evaluate(corpus, decode_fn)
    print(report.render_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_jsonl() + "\n")
    return 0


def cmd_align(args) -> int:
    from ctcfuse.alignment import aef_align, render_alignment
    from ctcfuse.data import DataError, build_vocab

    for path in (args.ref, args.hyp):
        if not os.path.exists(path):
            raise DataError(f"file not found: {path}")
    with open(args.ref, "r", encoding="utf-8") as fh:
        refs = fh.read().splitlines()
    with open(args.hyp, "r", encoding="utf-8") as fh:
        hyps = fh.read().splitlines()
    if len(refs) != len(hyps):
        raise DataError(f"line count mismatch: {len(refs)} refs vs {len(hyps)} hyps")
    vocab = build_vocab([line for line in refs + hyps if line.strip()])
    blocks = []
    for i, (ref, hyp) in enumerate(zip(refs, hyps), start=1):
        pair = aef_align(vocab.tokenize(ref), vocab.tokenize(hyp), vocab.blank_id)
        blocks.append(f"# line {i}\n" + render_alignment(pair, vocab.id_to_token))
    print("\n\n".join(blocks))
    return 0


def cmd_synth(args) -> int:
    from ctcfuse.data import SynthConfig, save_corpus, synth_corpus

    cfg = SynthConfig(
        vocab_size=args.vocab_size,
        count=args.count,
        min_len=args.min_len,
        max_len=args.max_len,
        min_frames_per_token=args.min_frames,
        max_frames_per_token=args.max_frames,
        noise=args.noise,
        feature_dim=args.feature_dim,
        seed=args.seed,
    )
    vocab, corpus = synth_corpus(cfg)
    out_dir = _outdir(args)
    if not out_dir:
        raise UsageError("synth needs --out (or CTCFUSE_OUTDIR)")
    manifest = save_corpus(out_dir, corpus, vocab)
    print(f"wrote {len(corpus)} utterances to {manifest}")
    return 0


def cmd_stats(args) -> int:
    from ctcfuse.data import DataError, corpus_stats

    if (args.manifest is None) == (args.text is None):
        raise UsageError("stats needs exactly one of --manifest or --text")
    if args.manifest:
        if not os.path.exists(args.manifest):
            raise DataError(f"manifest not found: {args.manifest}")
        with open(args.manifest, "r", encoding="utf-8") as fh:
            texts = [line.split("\t")[3] for line in fh.read().splitlines() if line]
    else:
        if not os.path.exists(args.text):
            raise DataError(f"text file not found: {args.text}")
        with open(args.text, "r", encoding="utf-8") as fh:
            texts = [line for line in fh.read().splitlines() if line.strip()]
    lengths = [len([ch for ch in t if not ch.isspace()]) for t in texts]
    stats = corpus_stats(lengths)
    print(stats.render_table())
    print(stats.render_kv())
    return 0


_SWEEP_KEYS = ("method", "t_l", "t_r", "alpha", "n", "pretrain")


def _parse_grid(items: list[str]) -> dict[str, list[str]]:
    grid: dict[str, list[str]] = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"grid item {item!r} must look like key=v1,v2")
        key, _, values = item.partition("=")
        if key not in _SWEEP_KEYS:
            raise UsageError(f"unknown grid key {key!r}; allowed: {', '.join(_SWEEP_KEYS)}")
        grid[key] = values.split(",")
    if not grid:
        raise UsageError("sweep needs at least one --grid key=v1,v2")
    return grid


def _apply_grid_point(payload: dict, point: dict[str, str]) -> dict:
    from ctcfuse.model import METHODS

    out = json.loads(json.dumps(payload))  # deep copy
    out.setdefault("fusion", {})
    out.setdefault("gating", {})
    out.setdefault("train", {})
    for key, raw in point.items():
        if key == "method":
            if raw not in METHODS:
                raise UsageError(f"grid method {raw!r} not in {METHODS}")
            out["fusion"]["method"] = raw
        elif key == "alpha":
            out["fusion"]["alpha"] = float(raw)
        elif key == "n":
            out["fusion"]["n"] = int(raw)
            out["fusion"].setdefault("beam_width", max(int(raw), 5))
        elif key == "t_l":
            out["gating"]["mode"] = "absolute"
            out["gating"]["t_l"] = int(raw)
        elif key == "t_r":
            out["gating"]["mode"] = "relative"
            out["gating"]["t_r"] = float(raw)
        elif key == "pretrain":
            if raw == "none":
                out["train"]["pretrain_path"] = None
                out["train"]["pretrain_selection"] = None
            else:
                if not out["train"].get("pretrain_path"):
                    raise UsageError(
                        "grid over pretrain needs train.pretrain_path in the base config"
                    )
                out["train"]["pretrain_selection"] = raw
    return out


def cmd_sweep(args) -> int:
    from ctcfuse.training import train

    payload = _load_json(args.config)
    grid = _parse_grid(args.grid)
    out_dir = _outdir(args)
    if not out_dir:
        raise UsageError("sweep needs --out (or CTCFUSE_OUTDIR)")
    os.makedirs(out_dir, exist_ok=True)

    keys = sorted(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, combo))
        name = "run_" + "_".join(f"{k}={v}" for k, v in sorted(point.items()))
        run_dir = os.path.join(out_dir, name)
        point_payload = _apply_grid_point(payload, point)
        vocab, corpus, cfg, resolved = resolve_run_config(point_payload, seed_override=args.seed)
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "resolved_config.json"), "w", encoding="utf-8") as fh:
            json.dump(resolved, fh, indent=2, sort_keys=True)
            fh.write("\n")
        result = train(corpus, vocab, cfg, out_dir=run_dir)
        final = result.history[-1]
        rows.append(
            {
                "run": name,
                **point,
                "epochs": final.epoch,
                "joint_loss": round(final.joint_loss, 6),
                "train_cer": None
                if result.final_train_cer is None
                else round(result.final_train_cer, 6),
            }
        )
        if not args.quiet:
            print(f"{name}: joint={final.joint_loss:.4f} cer={result.final_train_cer}")

    header = ["run", *keys, "epochs", "joint_loss", "train_cer"]
    table_path = os.path.join(out_dir, "comparison.tsv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(row.get(col, "")) for col in header) + "\n")
    print(f"wrote {len(rows)} runs to {out_dir} (table: {table_path})")
    return 0


def cmd_report(args) -> int:
    from ctcfuse.data import DataError

    metrics_path = args.metrics or (os.path.join(args.run, "metrics.jsonl") if args.run else None)
    if not metrics_path:
        raise UsageError("report needs --run or --metrics")
    if not os.path.exists(metrics_path):
        raise DataError(f"metrics file not found: {metrics_path}")
    records = []
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if not records:
        raise DataError(f"{metrics_path}: no records")

    header = f"{'epoch':>5} {'joint':>9} {'ctc':>9} {'att':>9} {'blanks':>7} {'cer':>7}"
    lines = [header]
    for rec in records:
        cer = rec.get("train_cer")
        lines.append(
            f"{rec['epoch']:5d} {rec['joint_loss']:9.4f} {rec['ctc_loss']:9.4f} "
            f"{rec['att_loss']:9.4f} {rec['blanks_inserted']:7d} "
            f"{'-' if cer is None else format(cer, '.4f'):>7}"
        )
    print("\n".join(lines))

    out_dir = _outdir(args) or os.path.dirname(metrics_path) or "."
    os.makedirs(out_dir, exist_ok=True)
    loss_csv = os.path.join(out_dir, "loss.csv")
    with open(loss_csv, "w", encoding="utf-8") as fh:
        fh.write("x,series,value\n")
        for rec in records:
            for series in ("joint_loss", "ctc_loss", "att_loss"):
                fh.write(f"{rec['epoch']},{series},{rec[series]}\n")
    blanks_csv = os.path.join(out_dir, "blanks.csv")
    with open(blanks_csv, "w", encoding="utf-8") as fh:
        fh.write("x,series,value\n")
        for rec in records:
            fh.write(f"{rec['epoch']},blanks_inserted,{rec['blanks_inserted']}\n")
    print(f"plot data: {loss_csv}, {blanks_csv}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="ctcfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--seed", type=int, default=None, help="override train.seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("decode", help="decode a manifest with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--method", choices=["attention", "ctc_rescore"], default="attention")
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--lambda-dec", type=float, default=0.3, dest="lambda_dec")
    p.add_argument("--max-len-factor", type=float, default=1.0, dest="max_len_factor")
    p.add_argument("--nbest", type=int, default=0, help="also dump CTC N-best lists")
    p.add_argument("--out", default=None, help="hypothesis file (default: stdout)")
    p.set_defaults(handler=cmd_decode)

    p = sub.add_parser("eval", help="CER report from a checkpoint or hypothesis file")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--hyp", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--method", choices=["attention", "ctc_rescore"], default="attention")
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--lambda-dec", type=float, default=0.3, dest="lambda_dec")
    p.add_argument("--max-len-factor", type=float, default=1.0, dest="max_len_factor")
    p.add_argument("--out", default=None, help="JSON-lines report path")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("align", help="edit-distance alignment of two text files")
    p.add_argument("ref")
    p.add_argument("hyp")
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", default=None, required=False)
    p.add_argument("--vocab-size", type=int, default=16, dest="vocab_size")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--min-len", type=int, default=3, dest="min_len")
    p.add_argument("--max-len", type=int, default=6, dest="max_len")
    p.add_argument("--min-frames", type=int, default=8, dest="min_frames")
    p.add_argument("--max-frames", type=int, default=12, dest="max_frames")
    p.add_argument("--noise", type=float, default=0.08)
    p.add_argument("--feature-dim", type=int, default=8, dest="feature_dim")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("stats", help="transcript length distribution")
    p.add_argument("--manifest", default=None)
    p.add_argument("--text", default=None)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("sweep", help="grid of training runs plus a comparison table")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", nargs="+", required=True, metavar="key=v1,v2")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("report", help="render metrics JSON-lines to tables and plot data")
    p.add_argument("--run", default=None)
    p.add_argument("--metrics", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as err:
        print(f'error kind=usage msg="{err}"', file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f'error kind=data msg="{err}"', file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - mapped to documented exit codes
        from ctcfuse.data import DataError
        from ctcfuse.training import NumericError

        if isinstance(err, DataError):
            print(f'error kind=data msg="{err}"', file=sys.stderr)
            return 2
        if isinstance(err, NumericError):
            print(f'error kind=numeric msg="{err}"', file=sys.stderr)
            return 3
        raise


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
