"""Command-line entry point tying generation, training, decoding and
evaluation into reproducible runs.

Subcommands: gen, train, greedy, beam, eval, oracle, bench. Every run
writes a manifest (resolved config + seed) into its output directory.
A JSON config file can be supplied with --config; explicit flags win.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import beam as beam_mod
from . import eval_metrics
from .model import (PRESETS, SemanticParser, SrcVocab, load_model)
from .parse_repr import frame_from_string, tree_to_frame
from .synth_data import (GrammarSpec, build_vocabs, default_grammar,
                         generate_dataset, load_tsv, save_tsv, split_dataset)
from .training import TrainConfig, train

MODEL_CHOICES = ("proposed-nar", "baseline-nar", "ar-index", "ar-span")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _write_manifest(out_dir, args):
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump({"narparse_version": "0.1.0", "config": resolved}, fh,
                  indent=1)


def _load_data(path):
    data, skipped = load_tsv(path)
    for lineno, reason in skipped:
        print(f"skipped line {lineno}: {reason}", file=sys.stderr)
    return data


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args):
    spec = GrammarSpec.from_json(args.spec) if args.spec else default_grammar()
    dataset = generate_dataset(spec, args.seed, args.size)
    train_set, dev_set, test_set = split_dataset(dataset, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for name, subset in (("train", train_set), ("dev", dev_set),
                         ("test", test_set)):
        save_tsv(os.path.join(args.out, f"{name}.tsv"), subset)
    spec.to_json(os.path.join(args.out, "grammar.json"))
    _write_manifest(args.out, args)
    print(f"wrote {len(train_set)}/{len(dev_set)}/{len(test_set)} "
          f"train/dev/test examples to {args.out}")
    return 0


def _build_model(name, preset, train_set, seed):
    vocab = build_vocabs(train_set, pad_even_lengths=True)
    src_vocab = SrcVocab.build(train_set)
    config = PRESETS[preset]()
    kind = {"proposed-nar": "proposed", "baseline-nar": "baseline",
            "ar-index": "ar", "ar-span": "ar"}[name]
    form = "index" if name == "ar-index" else "span"
    return SemanticParser(kind, config, vocab, src_vocab, seed=seed, form=form)


def cmd_train(args):
    train_set = _load_data(os.path.join(args.data, "train.tsv"))
    dev_set = _load_data(os.path.join(args.data, "dev.tsv"))
    model = _build_model(args.model, args.preset, train_set, args.seed)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         seed=args.seed, base_lr=args.lr,
                         lambda_len=args.lambda_len,
                         lambda_int=args.lambda_int, p_tf=args.p_tf)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, args)
    with open(os.path.join(args.out, "metrics.jsonl"), "w") as log_fh:
        train(model, train_set, dev_set, config,
              out_dir=os.path.join(args.out, "checkpoint"), log_fh=log_fh)
    return 0


def cmd_greedy(args):
    model = load_model(os.path.join(args.model, "checkpoint"))
    data = _load_data(args.data)
    preds, golds = [], []
    for query, tree in data:
        h = beam_mod.greedy_parse(model, query)
        preds.append([(beam_mod.hypothesis_span_render(model, h), h.intent)])
        golds.append((tree_to_frame(tree, "span").render(), tree.label))
    em, im = eval_metrics.exact_match_report(preds, golds, ks=(1,))
    report = {"top1_em": em[1], "top1_im": im[1], "n_examples": len(data)}
    print(json.dumps(report, indent=1))
    if args.out:
        _write_manifest(args.out, args)
        with open(os.path.join(args.out, "greedy.json"), "w") as fh:
            json.dump(report, fh, indent=1)
    return 0


def cmd_beam(args):
    model = load_model(os.path.join(args.model, "checkpoint"))
    data = _load_data(args.data)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, args)
    out_path = os.path.join(args.out, "beam.jsonl")
    with open(out_path, "w") as fh:
        for query, tree in data:
            hyps = beam_mod.topk_parse(model, query, args.k, k1=args.k1,
                                       k2=args.k2, method=args.score,
                                       alpha=args.alpha)
            if args.valid_only:
                hyps = [h for h in hyps if h.valid] or hyps[:1]
            record = {
                "query": " ".join(query),
                "gold": tree_to_frame(tree, "span").render(),
                "gold_intent": tree.label,
                "form": model.form,
                "hypotheses": [dict(h.to_record(),
                                    span=beam_mod.hypothesis_span_render(model, h))
                               for h in hyps],
            }
            fh.write(json.dumps(record) + "\n")
    print(f"wrote {out_path}")
    return 0


def cmd_eval(args):
    preds, golds, collections = [], [], []
    with open(args.beams) as fh:
        for line in fh:
            record = json.loads(line)
            hyps = record["hypotheses"]
            preds.append([(h["span"], h["intent"]) for h in hyps])
            golds.append((record["gold"], record["gold_intent"]))
            collections.append([frame_from_string(h["span"], "span")
                                for h in hyps[:3]])
    em, im = eval_metrics.exact_match_report(preds, golds)
    diversity = eval_metrics.diversity_report(collections)
    report = eval_metrics.EvalReport(top_em=em, top_im=im,
                                     n_examples=len(golds), **diversity)
    print(report.to_table())
    if args.out:
        _write_manifest(args.out, args)
        with open(os.path.join(args.out, "report.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
        with open(os.path.join(args.out, "report.txt"), "w") as fh:
            fh.write(report.to_table() + "\n")
    return 0


def cmd_oracle(args):
    model = load_model(os.path.join(args.model, "checkpoint"))
    data = _load_data(args.data)
    oracle = "gold_intent" if model.kind == "proposed" else "gold_length"
    oracle_em, _ = eval_metrics.oracle_eval(model, data, oracle)
    greedy_em, _ = eval_metrics.greedy_eval(model, data)
    report = {"oracle": oracle, "oracle_em": oracle_em,
              "greedy_em": greedy_em, "n_examples": len(data)}
    print(json.dumps(report, indent=1))
    if args.out:
        _write_manifest(args.out, args)
        with open(os.path.join(args.out, "oracle.json"), "w") as fh:
            json.dump(report, fh, indent=1)
    return 0


def cmd_bench(args):
    model = load_model(os.path.join(args.model, "checkpoint"))
    data = _load_data(args.data)[:args.limit]
    report = eval_metrics.latency_report(model, data, mode=args.mode,
                                         k=args.k, k1=args.k1, k2=args.k2)
    summary = {"mode": args.mode, "kind": model.kind,
               "mean_decoder_passes": report["mean_decoder_passes"],
               "mean_wall_clock_s": report["mean_wall_clock"],
               "n_examples": len(data)}
    print(json.dumps(summary, indent=1))
    if args.out:
        _write_manifest(args.out, args)
        with open(os.path.join(args.out, "bench.json"), "w") as fh:
            json.dump(dict(summary, decoder_passes=report["decoder_passes"],
                           frame_lengths=report["frame_lengths"]), fh)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="narparse")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--spec", help="grammar JSON (default: built-in 25-intent)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a parser")
    p.add_argument("--model", choices=MODEL_CHOICES, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambda-len", type=float, default=10.0)
    p.add_argument("--lambda-int", type=float, default=100.0)
    p.add_argument("--p-tf", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("greedy", help="greedy decoding + top-1 EM")
    p.add_argument("--model", required=True, help="training run directory")
    p.add_argument("--data", required=True, help="TSV file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_greedy)

    p = sub.add_parser("beam", help="top-k decoding to JSONL")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--k1", type=int, help="intent beam (proposed NAR)")
    p.add_argument("--k2", type=int, help="length beam")
    p.add_argument("--score", choices=("s1", "s2", "s3"), default="s3")
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--valid-only", action="store_true",
                   help="filter flagged-invalid hypotheses")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_beam)

    p = sub.add_parser("eval", help="score a beam JSONL file")
    p.add_argument("--beams", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="oracle vs greedy EM")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="decoding cost accounting")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--k1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        i = argv.index("--config")
        with open(argv[i + 1]) as fh:
            config = json.load(fh)
        del argv[i:i + 2]
        # config supplies defaults; explicit flags still win
        extra = []
        for key, value in config.items():
            flag = "--" + key.replace("_", "-")
            if flag not in argv:
                extra.extend([flag, str(value)])
        argv = argv[:1] + extra + argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures -> exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
