"""Command-line interface.

Subcommands: compress, train, annotate, evaluate, confidence-report,
gradcheck.  The ATTNCOMP_SEED environment variable overrides any seed from
flags or config files.  Exit codes: 0 success, 1 validation error,
2 completed with per-record failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .annotation import (
    AnnotationConfig,
    GeneratorClient,
    MATCH_POLICIES,
    RecordingGenerator,
    annotate,
    parse_generator,
    write_annotations,
)
from .bundles import load_head, save_head
from .confidence import calibration_report, write_calibration_csv
from .corpus import Granularity, load_dataset
from .errors import AttncompError, GeneratorError
from .evaluation import RunConfig, run_eval, write_report
from .head import init_random
from .provider import SampleScorer, parse_provider
from .topp import DEFAULT_EPSILON_SENTENCE, TopPConfig
from .training import TrainConfig, TrainingInstance, gradient_check, train, write_loss_log

GRANULARITIES = {"doc": Granularity.DOCUMENT, "sentence": Granularity.SENTENCE}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit(self._validation_exit(message))

    def _validation_exit(self, message) -> int:
        print(f"error: {message}", file=sys.stderr)
        return 1


def _resolve_seed(*candidates: int | None) -> int:
    env = os.environ.get("ATTNCOMP_SEED")
    if env is not None:
        return int(env)
    for c in candidates:
        if c is not None:
            return c
    return 0


def _topp_from_args(args) -> TopPConfig:
    epsilon = args.epsilon
    if epsilon is None:
        epsilon = (
            DEFAULT_EPSILON_SENTENCE if args.granularity == "sentence" else 0.01
        )
    return TopPConfig(p=args.top_p, epsilon=epsilon)


def _scorer_from_args(args, seed: int) -> SampleScorer:
    provider = parse_provider(args.provider, seed)
    head = None
    weights = getattr(args, "weights", None)
    if weights:
        head = load_head(weights)
    elif args.provider.startswith("synthetic"):
        head = init_random(16, provider.params.d_model, seed=seed)
        print(
            "note: no --weights given; scoring with a randomly initialized head",
            file=sys.stderr,
        )
    return SampleScorer(provider, head)


def _cmd_compress(args) -> int:
    seed = _resolve_seed(args.seed)
    samples = load_dataset(args.dataset)
    scorer = _scorer_from_args(args, seed)
    config = RunConfig(
        provider_spec=args.provider,
        weights_dir=getattr(args, "weights", None),
        granularity=GRANULARITIES[args.granularity],
        topp=_topp_from_args(args),
        parallelism=args.parallelism,
        seed=seed,
        out_dir=args.out,
    )
    report = run_eval(samples, scorer, config, generator=None)
    records_path, agg_path = write_report(report, args.out)
    print(f"wrote {records_path} and {agg_path}")
    print(f"evaluated {report.aggregate['evaluated']}/{report.aggregate['samples']}, "
          f"compression rate {report.aggregate['compression_rate']}")
    return 2 if report.had_failures else 0


def _parse_train_config(path: str) -> dict:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise AttncompError(f"{path}:{line_no}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _cmd_train(args) -> int:
    raw = _parse_train_config(args.config) if args.config else {}
    seed = _resolve_seed(args.seed, int(raw["seed"]) if "seed" in raw else None)

    def num(key, default, cast):
        return cast(raw[key]) if key in raw else default

    config = TrainConfig(
        learning_rate=num("learning_rate", 2e-4, float),
        batch_size=num("batch_size", 8, int),
        epochs=num("epochs", 8, int),
        lambda_=num("lambda", 0.8, float),
        seed=seed,
        adam_beta1=num("adam_beta1", 0.9, float),
        adam_beta2=num("adam_beta2", 0.999, float),
        adam_eps=num("adam_eps", 1e-8, float),
        shuffle_docs_each_epoch=num(
            "shuffle_docs_each_epoch", True, lambda v: v.lower() in ("1", "true", "on")
        ),
    )
    dataset_path = os.path.join(args.dataset, "dataset.jsonl")
    samples = load_dataset(dataset_path)
    unlabeled = [i for i, s in enumerate(samples) if s.relevance_labels is None]
    if unlabeled:
        raise AttncompError(
            f"{len(unlabeled)} samples lack relevance labels (first: {unlabeled[0]})"
        )

    provider_spec = raw.get("provider", "synthetic:")
    if provider_spec.startswith("bundle:") and not os.path.isabs(
        provider_spec.split(":", 1)[1]
    ):
        provider_spec = "bundle:" + os.path.join(args.dataset, provider_spec.split(":", 1)[1])
    provider = parse_provider(provider_spec, seed)

    instances = []
    for index, sample in enumerate(samples):
        result = provider.get(index, sample, Granularity.DOCUMENT)
        instances.append(
            TrainingInstance(bundle=result.hidden, labels=sample.relevance_labels)
        )

    heads = num("heads", 16, int)
    d_model = instances[0].bundle.d_model
    d_a = num("d_a", None, int)
    init_spec = raw.get("init", "random")
    if init_spec.startswith("bundle:"):
        initial = load_head(init_spec.split(":", 1)[1])
    else:
        initial = init_random(heads, d_model, d_a, seed=num("init_seed", seed, int))

    result = train(instances, config, initial_head=initial)
    os.makedirs(args.out, exist_ok=True)
    save_head(args.out, result.head)
    log_path = os.path.join(args.out, "loss_log.csv")
    write_loss_log(log_path, result.epoch_log)
    final = result.epoch_log[-1]
    print(f"trained {config.epochs} epochs on {len(instances)} instances; "
          f"final loss {final.total:.4f} (doc {final.l_doc:.4f}, ins {final.l_ins:.4f})")
    print(f"wrote weights to {args.out} and loss log to {log_path}")
    return 0


def _cmd_annotate(args) -> int:
    seed = _resolve_seed(args.seed)
    samples = load_dataset(args.dataset)
    scorer = _scorer_from_args(args, seed)
    generator: GeneratorClient = RecordingGenerator(
        parse_generator(args.generator), args.out + ".generator_log.jsonl"
    )
    matcher = MATCH_POLICIES[args.match]
    corpus = tuple(d for s in samples for d in s.documents)
    config = AnnotationConfig(
        shuffles=args.shuffles,
        top_p=args.top_p,
        epsilon=args.epsilon if args.epsilon is not None else 0.01,
        seed=seed,
        match_policy=args.match,
        corpus=corpus,
    )
    def annotate_one(pair):
        index, sample = pair
        return index, annotate(sample, scorer, generator, matcher, config, index)

    rows = []
    failures = 0
    items = list(enumerate(samples))
    if args.parallelism > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.parallelism) as pool:
            futures = {pool.submit(annotate_one, item): item[0] for item in items}
            outcomes = []
            for future, index in futures.items():
                try:
                    outcomes.append(future.result())
                except (GeneratorError, AttncompError) as exc:
                    failures += 1
                    print(f"sample {index}: skipped ({exc})", file=sys.stderr)
            outcomes.sort(key=lambda t: t[0])
            rows = [(samples[i], outcome) for i, outcome in outcomes]
    else:
        for item in items:
            try:
                index, outcome = annotate_one(item)
                rows.append((samples[index], outcome))
            except (GeneratorError, AttncompError) as exc:
                failures += 1
                print(f"sample {item[0]}: skipped ({exc})", file=sys.stderr)
    write_annotations(args.out, rows)
    counts = {"positive": 0, "negative": 0, "discarded": 0}
    for _, outcome in rows:
        counts[outcome.variant] += 1
    print(f"annotated {len(rows)} samples -> {args.out} "
          f"(positive {counts['positive']}, negative {counts['negative']}, "
          f"discarded {counts['discarded']}, failed {failures})")
    return 2 if failures else 0


def _cmd_evaluate(args) -> int:
    seed = _resolve_seed(args.seed)
    samples = load_dataset(args.dataset)
    scorer = _scorer_from_args(args, seed)
    generator = None
    if args.generator:
        os.makedirs(args.report, exist_ok=True)
        generator = RecordingGenerator(
            parse_generator(args.generator),
            os.path.join(args.report, "generator_log.jsonl"),
        )
    config = RunConfig(
        provider_spec=args.provider,
        weights_dir=args.weights,
        granularity=GRANULARITIES[args.granularity],
        topp=_topp_from_args(args),
        parallelism=args.parallelism,
        seed=seed,
        out_dir=args.report,
    )
    report = run_eval(samples, scorer, config, generator)
    records_path, agg_path = write_report(report, args.report)
    print(f"wrote {records_path} and {agg_path}")
    for key in ("evaluated", "failures", "compression_rate", "mean_f1",
                "mean_acc_contains", "mean_confidence"):
        print(f"  {key}: {report.aggregate[key]}")
    return 2 if report.had_failures else 0


def _cmd_confidence_report(args) -> int:
    pairs = []
    with open(args.records, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            if "confidence" not in obj or obj.get("error"):
                continue
            metric = obj.get("f1")
            if metric is None:
                metric = obj.get("acc_contains")
            if metric is None:
                continue
            pairs.append((float(obj["confidence"]), float(metric)))
    report = calibration_report(pairs, mode=args.bins)
    write_calibration_csv(report, args.out)
    flag = " (degenerate outcome variance)" if report.degenerate else ""
    print(f"wrote {args.out}; pearson_r={report.pearson_r:.4f}{flag}")
    return 0


def _cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args.seed)
    worst = gradient_check(list(range(seed, seed + args.instances)))
    print(f"gradcheck over {args.instances} instances: worst relative error {worst:.3e}")
    if worst > 1e-4:
        print("FAIL: exceeds 1e-4", file=sys.stderr)
        return 1
    print("PASS")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="attncomp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"attncomp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_weights=True):
        p.add_argument("--provider", default="synthetic:",
                       help="bundle:DIR or synthetic:key=value,...")
        p.add_argument("--granularity", choices=sorted(GRANULARITIES), default="doc")
        p.add_argument("--top-p", type=float, default=0.95)
        p.add_argument("--epsilon", type=float, default=None,
                       help="minimum score floor (default 0.01; 0.001 at sentence granularity)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--parallelism", type=int, default=1)
        if with_weights:
            p.add_argument("--weights", default=None, help="head-weight bundle directory")

    p = sub.add_parser("compress", help="score and select documents, no generation")
    p.add_argument("--dataset", required=True)
    add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_compress)

    p = sub.add_parser("train", help="fine-tune the scoring head")
    p.add_argument("--dataset", required=True, help="directory with dataset.jsonl")
    p.add_argument("--config", default=None, help="key=value training config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output weights directory")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("annotate", help="label document relevance via compression")
    p.add_argument("--dataset", required=True)
    p.add_argument("--generator", required=True, help="tcp:HOST:PORT")
    p.add_argument("--shuffles", type=int, default=3)
    add_common(p)
    p.add_argument("--match", choices=sorted(MATCH_POLICIES), default="contains")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_annotate)

    p = sub.add_parser("evaluate", help="full scoring/compression/generation run")
    p.add_argument("--dataset", required=True)
    p.add_argument("--generator", default=None, help="tcp:HOST:PORT (optional)")
    add_common(p)
    p.add_argument("--report", required=True, help="report output directory")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("confidence-report", help="decile calibration from records.jsonl")
    p.add_argument("--records", required=True)
    p.add_argument("--bins", choices=("fixed", "quantile"), default="fixed")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_confidence_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)
    p.set_defaults(fn=_cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (AttncompError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
