"""Command line interface: one subcommand per pipeline stage plus ``pipeline`` and ``report``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import architectures as A
from . import evaluation as ev
from . import grid_map as G
from . import log_ingest as LI
from . import metrics as M
from . import pipeline as P
from . import synth as S
from . import topic_model as TM

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

log = logging.getLogger("topicast")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _cmd_synth(a) -> None:
    cfg = S.SynthConfig(entities=a.entities, periods=a.periods, topics=a.topics, vocab_per_topic=a.vocab_per_topic,
                        words_per_doc=a.words_per_doc, docs_rate=a.docs_rate, rho=a.rho, trend=a.trend,
                        period_seconds=a.period_seconds, epoch_start=a.epoch_start, seed=a.seed)
    path = P.write_synth(S.generate(cfg), Path(a.out))
    print(path)


def _cmd_ingest(a) -> None:
    parsed = LI.read_log(a.log, a.format)
    b = LI.bucket(parsed.entries, a.epoch_start, a.period_seconds, a.calendar_months)
    P.write_json(a.out, LI.buckets_to_json(b))
    print(f"{len(parsed.entries)} entries, {parsed.skipped} skipped, {b.dropped} dropped, {len(b)} buckets")


def _load_buckets(path) -> LI.Buckets:
    return LI.buckets_from_json(P.read_json(path))


def _cmd_topics_fit(a) -> None:
    b = _load_buckets(a.buckets)
    window = a.window_end if a.window_end is not None else max(b.periods()) + 1
    model = P.fit_topics(b, {"k": a.k, "method": a.method, "alpha": a.alpha, "beta": a.beta, "iterations": a.iters,
                             "window_end": window, "min_df": a.min_df, "max_df": a.max_df, "seed": a.seed})
    TM.save_model(model, a.out)
    print(f"{model.k} topics over {model.n_words} words -> {a.out}")


def _cmd_topics_infer(a) -> None:
    model = TM.load_model(a.model)
    b = _load_buckets(a.buckets)
    P.save_relevancy(TM.infer_many(model, b.unique_docs()), a.out)
    print(a.out)


def _cmd_metrics(a) -> None:
    b = _load_buckets(a.buckets)
    table = P.load_relevancy(a.relevancy)
    k = len(next(iter(table.values())))
    mc = {"H": a.H, "periods": a.periods, "train_frac": a.train_frac, "val_frac": a.val_frac, "seed": a.seed}
    series, parts, scale, clamped = P.build_samples(b, P.relevancy_lookup(table), k, mc)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "series.csv", "w", encoding="utf-8", newline="") as fh:
        M.series_to_csv(series, fh)
    for part in parts:
        M.save_samples(part, out / f"{part.tag}.tns")
    P.write_json(out / "scale.json", {"scale_factor": scale, "clamped": clamped,
                                      "sizes": {p.tag: len(p) for p in parts}})
    print(" ".join(f"{p.tag}={len(p)}" for p in parts) + f" scale={scale:.6g} clamped={clamped}")


def _cmd_gridmap(a) -> None:
    model = TM.load_model(a.model)
    grid, red = G.build_grid(TM.topic_word_matrix(model), a.method, a.seed)
    grid.save(a.out)
    print(f"{grid.rows}x{grid.cols} grid, neighborhood score {G.neighborhood_score(red.points, grid):.4f}")


def _cmd_train(a) -> None:
    d = Path(a.samples)
    tr, va, te = (M.load_samples(d / f"{t}.tns") for t in ("train", "val", "test"))
    grid = G.TopicGrid.load(a.grid) if a.grid else None
    tcfg = dict(P.DEFAULTS["train"], filters=a.filters, seed=a.seed, tdrn_reading=a.tdrn_reading)
    spec = P.arch_spec(a.arch, tr.k, tr.H, grid, tcfg)
    model = A.build(spec)
    rep = A.train(model, tr, va, te, epochs=a.epochs, loss=a.loss, lr=a.lr, batch_size=a.batch_size, seed=a.seed)
    P.save_report(rep, Path(a.out))
    print(f"{a.arch}: test {a.loss} {rep.series('test', a.loss)[-1]:.6g}, {rep.param_count} parameters -> {a.out}")


def _cmd_evaluate(a) -> None:
    reports = {}
    for d in a.reports:
        rep = P.load_report(Path(d))
        reports[rep.arch] = rep
    rows = [ev.summarize(r, a.loss, a.m_best) for r in reports.values()]
    table = ev.loss_table(rows, a.loss, a.baseline)
    if a.out:
        Path(a.out).write_text(ev.table_csv(table, a.loss), encoding="utf-8")
    sys.stdout.write(ev.table_text(table, a.loss))


def _cmd_report(a) -> None:
    sys.stdout.write(P.report(a.experiment, a.loss))


def _cmd_pipeline(a) -> None:
    out = P.run_pipeline(a.config, a.out, until=a.until)
    print(out)
    if not a.quiet:
        sys.stdout.write(P.report(out))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topicast", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic activity log")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--entities", type=int, default=1000)
    s.add_argument("--periods", type=int, default=12)
    s.add_argument("--topics", type=int, default=16)
    s.add_argument("--vocab-per-topic", type=int, default=20)
    s.add_argument("--words-per-doc", type=int, default=8)
    s.add_argument("--docs-rate", type=float, default=4.0)
    s.add_argument("--rho", type=float, default=0.9)
    s.add_argument("--trend", type=float, default=0.0)
    s.add_argument("--period-seconds", type=int, default=86400)
    s.add_argument("--epoch-start", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("ingest", help="parse a log and bucket it into periods")
    s.add_argument("log")
    s.add_argument("--format", choices=("jsonl", "csv"), default=None, help="default: from the file extension")
    s.add_argument("--epoch-start", type=int, default=0)
    s.add_argument("--period-seconds", type=int, default=86400)
    s.add_argument("--calendar-months", action="store_true")
    s.add_argument("--out", required=True, help="buckets JSON file")
    s.set_defaults(func=_cmd_ingest)

    s = sub.add_parser("topics", help="fit a topic model or infer relevancy")
    tsub = s.add_subparsers(dest="topics_command", required=True, parser_class=_Parser)
    f = tsub.add_parser("fit")
    f.add_argument("buckets")
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--alpha", type=float, default=None, help="default 50/k")
    f.add_argument("--beta", type=float, default=0.01)
    f.add_argument("--iters", type=int, default=500)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--method", choices=("lda", "kmeans"), default="lda")
    f.add_argument("--window-end", type=int, default=None, help="fit on periods before this index")
    f.add_argument("--min-df", type=int, default=5)
    f.add_argument("--max-df", type=float, default=0.5)
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_topics_fit)
    i = tsub.add_parser("infer")
    i.add_argument("model")
    i.add_argument("buckets")
    i.add_argument("--out", required=True, help="relevancy tensor file")
    i.set_defaults(func=_cmd_topics_infer)

    s = sub.add_parser("metrics", help="topical volumes, samples and temporal split")
    s.add_argument("buckets")
    s.add_argument("relevancy")
    s.add_argument("--H", type=int, default=6)
    s.add_argument("--periods", type=int, default=None)
    s.add_argument("--train-frac", type=float, default=0.7)
    s.add_argument("--val-frac", type=float, default=0.08)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=_cmd_metrics)

    s = sub.add_parser("gridmap", help="place topics on a grid")
    s.add_argument("model")
    s.add_argument("--method", choices=("pca", "tsne"), default="pca")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_gridmap)

    s = sub.add_parser("train", help="train one architecture")
    s.add_argument("samples", help="directory holding train/val/test sample files")
    s.add_argument("--arch", choices=A.KINDS, required=True)
    s.add_argument("--grid", help="grid JSON (spatial architectures)")
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--loss", choices=("rle", "r2le", "mse"), default="rle")
    s.add_argument("--filters", type=int, default=16)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--tdrn-reading", choices=A.TDRN_READINGS, default="scalar")
    s.add_argument("--out", required=True, help="report directory")
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("evaluate", help="loss table from training reports")
    s.add_argument("reports", nargs="+", help="report directories")
    s.add_argument("--loss", choices=ev.LOSS_NAMES, default="rle")
    s.add_argument("--m-best", type=int, default=5)
    s.add_argument("--baseline", default="mlp")
    s.add_argument("--out", help="CSV output file")
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("report", help="summarize an experiment directory")
    s.add_argument("experiment")
    s.add_argument("--loss", choices=ev.LOSS_NAMES, default=None)
    s.set_defaults(func=_cmd_report)

    s = sub.add_parser("pipeline", help="run all stages from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="experiment directory")
    s.add_argument("--until", choices=P.STAGES, default=None, help="stop after this stage")
    s.add_argument("--quiet", action="store_true", help="skip the summary")
    s.set_defaults(func=_cmd_pipeline)
    return p


_CONFIG_ERRORS = (P.ConfigError, A.ConfigError, TM.InvalidConfigError, json.JSONDecodeError, FileNotFoundError,
                  ValueError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except P.StageError as exc:
        print(f"topicast: {exc}", file=sys.stderr)
        print("topicast: rerun the same command to resume from this stage", file=sys.stderr)
        return EXIT_STAGE
    except _CONFIG_ERRORS as exc:
        print(f"topicast: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"topicast: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
