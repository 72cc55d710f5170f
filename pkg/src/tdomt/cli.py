"""Command-line entry point: ``tdomt <subcommand> ...``.

Subcommands: gen-corpus, train, translate, evaluate, params, analyze, sweep.
Outputs go under ``--out`` or, by default, ``$TDOMT_OUT`` (else ./tdomt_runs).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus.generate import read_instances, save_corpus
from .experiment import (
    ExperimentConfig,
    ExperimentError,
    analyze_model,
    corpus_from,
    default_out_dir,
    evaluate_instances,
    load_checkpoint,
    load_config,
    metrics_to_json,
    run_training,
    sweep,
    write_metrics,
)
from .model.config import ConfigError, ModelConfig
from .model.params import count_parameters, parameter_breakdown


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["training.seed"] = args.seed
    if getattr(args, "precision", None) is not None:
        changes["training.precision"] = args.precision
    if getattr(args, "beam", None) is not None:
        changes["evaluation.beam"] = args.beam
    return cfg.replace(**changes) if changes else cfg


def _out(args, default_name):
    return Path(args.out) if args.out else default_out_dir() / default_name


def cmd_gen_corpus(args):
    cfg = _config(args)
    from .experiment import build_corpus

    corpus = build_corpus(cfg.corpus)
    out = _out(args, "corpus")
    save_corpus(corpus, out)
    print(f"wrote corpus ({', '.join(f'{k}={len(v)}' for k, v in corpus.splits.items())}) to {out}")


def cmd_train(args):
    cfg = _config(args)
    out = _out(args, cfg.name)
    corpus = corpus_from(args.corpus) if args.corpus else None
    _, trace = run_training(cfg, out, corpus, log=print)
    print(f"trained {len(trace)} steps; checkpoint at {out / 'checkpoint_last'}")


def cmd_translate(args):
    model, vocab, cfg = load_checkpoint(args.checkpoint)
    instances = read_instances(args.input, vocab)
    from .experiment import decode_instances

    ev = cfg.evaluation if cfg is not None else None
    beam = args.beam if args.beam is not None else (ev.beam if ev else 1)
    hyps = decode_instances(model, instances, vocab, beam,
                            ev.max_len_a if ev else 1.2, args.max_len if args.max_len is not None else (ev.max_len_b if ev else 10))
    lines = [" ".join(vocab.decode(h)) for h in hyps]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""))
    else:
        print("\n".join(lines))


def cmd_evaluate(args):
    model, vocab, cfg = load_checkpoint(args.checkpoint)
    beam = args.beam if args.beam is not None else (cfg.evaluation.beam if cfg else 4)
    if args.testset:
        instances = []
        for path in args.testset:
            instances.extend(read_instances(path, vocab))
        missing = [i for i in instances if not i.target]
        if missing:
            raise ExperimentError(f"{len(missing)} test instance(s) lack a reference translation")
        center = cfg.corpus.center if cfg else "en"
    else:
        corpus = corpus_from(args.corpus) if args.corpus else corpus_from(cfg.corpus)
        splits = cfg.evaluation.splits if cfg else ["test_supervised", "test_zeroshot"]
        instances = [i for s in splits for i in corpus[s]]
        center = corpus.config.center
    res, _ = evaluate_instances(model, instances, vocab, beam, center=center)
    out = _out(args, "evaluation")
    write_metrics(res, out)
    table = metrics_to_json(res)
    for g, row in table["groups"].items():
        print(f"{g:10s} " + "  ".join(f"{k} {v:.4f}" for k, v in row.items()))
    print(f"wrote {out / 'metrics.json'} and {out / 'metrics.csv'}")


def cmd_params(args):
    base = load_config(args.config).model if args.config else ModelConfig()
    data = base.to_dict()
    if args.vocab is not None:
        data["vocab_size"] = args.vocab
    if args.d_model is not None:
        data["d_model"] = args.d_model
    if args.num_layers is not None:
        data["num_layers"] = args.num_layers
        data["stage1_layers"] = min(data["stage1_layers"], 2 * args.num_layers - 1)
    cfg = ModelConfig.from_dict(data)
    report = {}
    variants = {
        "encoder_decoder": dict(data, architecture="encoder_decoder", adaptation=False, instrucl_layer=None),
        "decoder_only": dict(data, architecture="decoder_only", adaptation=False, instrucl_layer=None),
        "tdo": dict(data, architecture="tdo", adaptation=False, instrucl_layer=None),
        "tdo+adaptation": dict(data, architecture="tdo", adaptation=True, instrucl_layer=None),
    }
    for name, d in variants.items():
        c = ModelConfig.from_dict(d)
        report[name] = {
            "total": count_parameters(c, args.core_only),
            "breakdown": parameter_breakdown(c, args.core_only),
        }
    ref = report["encoder_decoder"]["total"]
    for name, r in report.items():
        r["ratio_to_encoder_decoder"] = r["total"] / ref if ref else None
    report["config"] = {"model": cfg.to_dict(), "core_only": args.core_only}
    print(json.dumps(report, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")


def cmd_analyze(args):
    model, vocab, cfg = load_checkpoint(args.checkpoint)
    corpus = corpus_from(args.corpus) if args.corpus else corpus_from(cfg.corpus)
    directions = None
    if args.directions:
        directions = [tuple(d.split("-")) for d in args.directions.split(",")]
    size = args.set_size or (cfg.evaluation.analysis_set_size if cfg else 128)
    rep = analyze_model(model, vocab, corpus, directions, size)
    out = _out(args, "analysis")
    out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(out / "preference.csv")
    rep.write_json(out / "preference.json")
    for layer, s in rep.summary().items():
        print(f"layer {layer}: mean {s['mean']:.4f}  min {s['min']:.4f}  max {s['max']:.4f}")
    print(f"wrote {out / 'preference.csv'} and {out / 'preference.json'}")


def cmd_sweep(args):
    cfg = _config(args)
    values = [int(v) for v in args.values.split(",")]
    out = _out(args, f"sweep-{cfg.name}-{args.axis}")
    rows = sweep(cfg, args.axis, values, out, baseline=args.baseline, log=print)
    for r in rows:
        if r["metric"] == "token_accuracy":
            print(f"{args.axis}={r['value']} {r['group']:10s} acc {r['score']:.4f}  delta {r['delta']:+.4f}")
    print(f"wrote {out / 'sweep.csv'}")


def build_parser():
    p = argparse.ArgumentParser(prog="tdomt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="experiment config (JSON)")
            sp.add_argument("--seed", type=int)
            sp.add_argument("--precision", type=int, choices=(32, 64))
        sp.add_argument("--out", help="output directory (default: $TDOMT_OUT/<name>)")

    sp = sub.add_parser("gen-corpus", help="generate and save the synthetic corpus")
    common(sp)
    sp.set_defaults(func=cmd_gen_corpus)

    sp = sub.add_parser("train", help="train a model")
    common(sp)
    sp.add_argument("--corpus", help="corpus directory (default: generate from the config)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("translate", help="decode a tag<TAB>source file")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--beam", type=int)
    sp.add_argument("--max-len", type=int, help="extra tokens allowed beyond 1.2 x source length")
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.set_defaults(func=cmd_translate)

    sp = sub.add_parser("evaluate", help="score a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--testset", nargs="*", help="tag<TAB>source<TAB>target files")
    sp.add_argument("--corpus", help="corpus directory or config (default: the checkpoint's corpus)")
    sp.add_argument("--beam", type=int)
    common(sp, config=False)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("params", help="parameter counts per architecture")
    sp.add_argument("--config")
    sp.add_argument("--vocab", type=int)
    sp.add_argument("--d-model", type=int)
    sp.add_argument("--num-layers", type=int)
    sp.add_argument("--core-only", action="store_true", help="layer weight matrices only")
    sp.add_argument("--out", help="also write the report as JSON")
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("analyze", help="layer-wise linguistic preference")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--corpus")
    sp.add_argument("--directions", help="comma-separated src-tgt pairs (default: all zero-shot)")
    sp.add_argument("--set-size", type=int)
    common(sp, config=False)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="train/evaluate across M or the InstruCL layer")
    common(sp)
    sp.add_argument("--axis", required=True, choices=("M", "instrucl_layer"))
    sp.add_argument("--values", required=True, help="comma-separated integers")
    sp.add_argument("--baseline", type=int)
    sp.add_argument("--beam", type=int)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ExperimentError, ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
