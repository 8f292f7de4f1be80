"""End-to-end experiment runner driven by one JSON config.

Stages run in order: synth (or a log file), ingest, topics, metrics,
gridmap, train, evaluate. Each stage writes into ``stage_<name>/`` and
leaves a ``.done`` marker holding a key derived from its own config section
and the keys of the stages it reads from. A rerun skips stages whose key is
unchanged, so a failed run resumes from the stage that failed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import shutil
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import architectures as A
from . import evaluation as ev
from . import grid_map as G
from . import log_ingest as LI
from . import metrics as M
from . import synth as S
from . import topic_model as TM
from ._accel import backend
from .nn.tensorio import load_tensors, save_tensors

log = logging.getLogger(__name__)

STAGES = ("synth", "ingest", "topics", "metrics", "gridmap", "train", "evaluate")
SPATIAL = ("lrcn", "sccn", "lrcnm", "sccnm")


class ConfigError(ValueError):
    """Invalid experiment config (CLI exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed (CLI exit code 3)."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


_SEED = {"type": ["integer", "null"], "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "source": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["synth", "log"]},
                "path": {"type": "string"},
                "format": {"enum": ["jsonl", "csv"]},
                "entities": _POS_INT, "periods": _POS_INT, "topics": _POS_INT,
                "vocab_per_topic": _POS_INT, "words_per_doc": _POS_INT,
                "docs_rate": {"type": "number", "exclusiveMinimum": 0},
                "rho": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "trend": {"type": "number", "minimum": 0, "maximum": 1},
                "concentration": {"type": "number", "exclusiveMinimum": 0},
                "activity_spread": {"type": "number", "minimum": 0},
                "seed": _SEED,
            },
        },
        "ingest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epoch_start": {"type": "integer", "minimum": 0},
                "period_seconds": _POS_INT,
                "calendar_months": {"type": "boolean"},
            },
        },
        "topics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 2},
                "method": {"enum": ["lda", "kmeans"]},
                "alpha": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "iterations": _POS_INT,
                "window_end": {"type": ["integer", "null"], "minimum": 1},
                "min_df": _POS_INT,
                "max_df": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "seed": _SEED,
            },
        },
        "metrics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "H": _POS_INT,
                "periods": {"type": ["integer", "null"], "minimum": 2},
                "train_frac": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "val_frac": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": _SEED,
            },
        },
        "gridmap": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"method": {"enum": ["pca", "tsne"]}, "seed": _SEED},
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "archs": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"enum": list(A.KINDS)}},
                "epochs": _POS_INT,
                "loss": {"enum": ["mse", "rle", "r2le"]},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": _POS_INT,
                "filters": _POS_INT,
                "filter_size": _POS_INT,
                "conv_layers": _POS_INT,
                "lstm_width": _POS_INT,
                "tdrn_width": _POS_INT,
                "tdrn_reading": {"enum": list(A.TDRN_READINGS)},
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "l2": {"type": "number", "minimum": 0},
                "seed": _SEED,
            },
        },
        "evaluate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "losses": {"type": "array", "minItems": 1, "items": {"enum": list(ev.LOSS_NAMES)}},
                "m_best": _POS_INT,
                "baseline": {"enum": list(A.KINDS)},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "source": {
        "kind": "synth", "format": "jsonl", "entities": 1000, "periods": 12, "topics": 16,
        "vocab_per_topic": 20, "words_per_doc": 8, "docs_rate": 4.0, "rho": 0.9, "trend": 0.0,
        "concentration": 0.3, "activity_spread": 0.5, "seed": None,
    },
    "ingest": {"epoch_start": 0, "period_seconds": 86400, "calendar_months": False},
    "topics": {"k": 16, "method": "lda", "alpha": None, "beta": 0.01, "iterations": 200,
               "window_end": None, "min_df": 5, "max_df": 0.5, "seed": None},
    "metrics": {"H": 6, "periods": None, "train_frac": 0.7, "val_frac": 0.08, "seed": None},
    "gridmap": {"method": "pca", "seed": None},
    "train": {"archs": ["mlp", "tdrn", "lrcn", "sccn"], "epochs": 30, "loss": "rle", "lr": 1e-3,
              "batch_size": 32, "filters": 16, "filter_size": 2, "conv_layers": 2, "lstm_width": 64,
              "tdrn_width": 32, "tdrn_reading": "scalar", "dropout": 0.1, "l2": 1e-4, "seed": None},
    "evaluate": {"losses": ["rle", "r2le"], "m_best": 5, "baseline": "mlp"},
}

# keys that influence stage outputs; anything else is bookkeeping
_STAGE_INPUTS = {
    "synth": ("source",),
    "ingest": ("ingest",),
    "topics": ("topics",),
    "metrics": ("metrics",),
    "gridmap": ("gridmap",),
    "train": ("train",),
    "evaluate": ("evaluate",),
}
_UPSTREAM = {
    "synth": (), "ingest": ("synth",), "topics": ("ingest",), "metrics": ("ingest", "topics"),
    "gridmap": ("topics",), "train": ("metrics", "gridmap"), "evaluate": ("train",),
}


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(raw: dict) -> dict:
    """Validate ``raw`` and fill defaults; section seeds default to the master seed."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    for section in ("source", "topics", "metrics", "gridmap", "train"):
        if cfg[section]["seed"] is None:
            cfg[section]["seed"] = cfg["seed"]
    src = cfg["source"]
    if src["kind"] == "log" and "path" not in src:
        raise ConfigError("config error at source: a log source needs 'path'")
    if cfg["metrics"]["train_frac"] + cfg["metrics"]["val_frac"] >= 1:
        raise ConfigError("config error at metrics: train_frac + val_frac must be < 1")
    if src["kind"] == "synth" and cfg["metrics"]["periods"] is None:
        cfg["metrics"]["periods"] = src["periods"]
    if cfg["metrics"]["periods"] is not None and cfg["metrics"]["H"] >= cfg["metrics"]["periods"]:
        raise ConfigError("config error at metrics: H must be smaller than the number of periods")
    if cfg["topics"]["window_end"] is None:
        cfg["topics"]["window_end"] = cfg["metrics"]["H"]
    rows, cols = G.grid_dims(cfg["topics"]["k"])
    multi = [a for a in cfg["train"]["archs"] if a in ("lrcnm", "sccnm")]
    if multi and min(rows, cols) < 5:
        raise ConfigError(f"config error at train/archs: {', '.join(multi)} need a grid of at least 5x5, "
                          f"k={cfg['topics']['k']} gives {rows}x{cols}")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return resolve_config(raw)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def stage_keys(cfg: dict) -> dict[str, str]:
    """Content key per stage from its config section and upstream keys."""
    keys: dict[str, str] = {}
    for name in STAGES:
        sections = {s: cfg[s] for s in _STAGE_INPUTS[name]}
        if name == "synth" and cfg["source"]["kind"] == "log":
            sections["log_sha256"] = _file_hash(Path(cfg["source"]["path"]))
        if name == "metrics":
            sections["k"] = cfg["topics"]["k"]
        up = {u: keys[u] for u in _UPSTREAM[name]}
        keys[name] = _digest({"stage": name, "config": sections, "upstream": up})
    return keys


# ---------------------------------------------------------------------------
# file helpers shared with the CLI
# ---------------------------------------------------------------------------


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_relevancy(rel: dict[str, np.ndarray], path) -> None:
    """Relevancy vectors as a tensor file; the sidecar lists content hashes row by row."""
    keys = sorted((LI.content_key(d), d) for d in rel)
    k = len(next(iter(rel.values()))) if rel else 0
    values = np.array([rel[d] for _, d in keys]).reshape(len(keys), k)
    save_tensors(path, {"values": values})
    write_json(f"{path}.json", {"k": k, "keys": [h for h, _ in keys]})


def load_relevancy(path) -> dict[str, np.ndarray]:
    """Mapping from content hash to relevancy vector."""
    values = load_tensors(path)["values"]
    meta = read_json(f"{path}.json")
    return {h: values[i] for i, h in enumerate(meta["keys"])}


def relevancy_lookup(table: dict[str, np.ndarray]):
    return lambda doc: table[LI.content_key(doc)]


def synth_config(src: dict) -> S.SynthConfig:
    fields = {k: v for k, v in src.items() if k not in ("kind", "path", "format")}
    return S.SynthConfig(**fields)


def write_synth(data: S.SynthData, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        LI.write_jsonl(data.entries, fh)
    with open(out / "ground_truth.csv", "w", encoding="utf-8", newline="") as fh:
        S.write_ground_truth(data, fh)
    with open(out / "doc_topics.csv", "w", encoding="utf-8", newline="") as fh:
        S.write_doc_topics(data, fh)
    return log_path


def fit_topics(buckets: LI.Buckets, tcfg: dict) -> TM.TopicModel:
    """Fit on documents from periods before ``window_end`` only."""
    end = tcfg["window_end"]
    pairs = [(d, p) for (_, p), s in buckets.sets.items() if p < end for d in s.docs]
    if not pairs:
        raise TM.TopicModelError(f"no documents in the training window (periods < {end})")
    corpus = [TM.tokenize(d) for d, _ in pairs]
    if tcfg["method"] == "kmeans":
        return TM.fit_kmeans(corpus, tcfg["k"], seed=tcfg["seed"], min_df=tcfg["min_df"], max_df=tcfg["max_df"])
    return TM.fit_lda(corpus, tcfg["k"], alpha=tcfg["alpha"], beta=tcfg["beta"], iterations=tcfg["iterations"],
                      seed=tcfg["seed"], min_df=tcfg["min_df"], max_df=tcfg["max_df"],
                      periods=[p for _, p in pairs], window_end=end)


def build_samples(buckets: LI.Buckets, rel, k: int, mcfg: dict, entities=None):
    """Series, then scaled train/val/test sample sets and the clamp count."""
    periods = mcfg["periods"] or (max(buckets.periods()) + 1)
    series = M.build_series(buckets, rel, k, periods, entities=entities)
    samples = M.make_samples(series, mcfg["H"])
    tr, va, te = M.temporal_split(samples, mcfg["train_frac"], mcfg["val_frac"], mcfg["seed"])
    scale = M.fit_scale(tr)
    clamped = 0
    out = []
    for part in (tr, va, te):
        scaled, c = M.apply_scale(part, scale)
        clamped += c
        out.append(scaled)
    return series, out, scale, clamped


def arch_spec(kind: str, k: int, H: int, grid, tcfg: dict) -> A.ArchSpec:
    return A.ArchSpec(
        kind, k, H, grid=grid if kind in SPATIAL else None,
        lstm_width=tcfg["lstm_width"], tdrn_width=tcfg["tdrn_width"], tdrn_reading=tcfg["tdrn_reading"],
        filters=tcfg["filters"], filter_size=tcfg["filter_size"], conv_layers=tcfg["conv_layers"],
        dropout=tcfg["dropout"], l2=tcfg["l2"], seed=tcfg["seed"],
    )


def save_report(rep: A.TrainReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rep.to_csv(timings=True), encoding="utf-8")
    rep.save_checkpoint(out / "checkpoint.tns")
    write_json(out / "meta.json", {
        "arch": rep.arch, "param_count": rep.param_count, "epochs": rep.epochs,
        "seconds_per_epoch": float(np.mean(rep.seconds)) if rep.seconds else 0.0,
    })


def load_report(out: Path) -> A.TrainReport:
    meta = read_json(out / "meta.json")
    rep = A.TrainReport.from_csv(meta["arch"], (out / "report.csv").read_text(encoding="utf-8"))
    rep.param_count = int(meta["param_count"])
    return rep


def write_tables(reports: dict[str, A.TrainReport], out_dir: Path, losses, m_best: int, baseline: str) -> dict[str, Path]:
    tables = out_dir / "tables"
    curves = out_dir / "curves"
    tables.mkdir(parents=True, exist_ok=True)
    curves.mkdir(parents=True, exist_ok=True)
    written = {}
    for loss in losses:
        rows = [ev.summarize(reports[a], loss, m_best) for a in reports]
        table = ev.loss_table(rows, loss, baseline)
        path = tables / f"loss_{loss}.csv"
        path.write_text(ev.table_csv(table, loss), encoding="utf-8")
        (tables / f"loss_{loss}.txt").write_text(ev.table_text(table, loss), encoding="utf-8")
        written[loss] = path
    for arch, rep in reports.items():
        (curves / f"{arch}.csv").write_text(ev.curves_csv(rep), encoding="utf-8")
    return written


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


class Experiment:
    def __init__(self, cfg: dict, out_dir):
        self.cfg = cfg
        self.dir = Path(out_dir)
        self.keys = stage_keys(cfg)

    def stage_dir(self, name: str) -> Path:
        return self.dir / f"stage_{name}"

    def is_done(self, name: str) -> bool:
        marker = self.stage_dir(name) / ".done"
        return marker.exists() and marker.read_text().strip() == self.keys[name]

    def _run(self, name: str, fn) -> None:
        if self.is_done(name):
            log.info("stage %s up to date, skipping", name)
            return
        d = self.stage_dir(name)
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        log.info("stage %s", name)
        try:
            fn(d)
        except (ConfigError, StageError):
            raise
        except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
            raise StageError(name, exc) from exc
        (d / ".done").write_text(self.keys[name] + "\n")

    # individual stages ----------------------------------------------------

    def _synth(self, d: Path) -> None:
        src = self.cfg["source"]
        if src["kind"] == "synth":
            write_synth(S.generate(synth_config(src)), d)
        else:
            shutil.copyfile(src["path"], d / f"log.{src['format']}")

    def _log_path(self) -> Path:
        src = self.cfg["source"]
        return self.stage_dir("synth") / ("log.jsonl" if src["kind"] == "synth" else f"log.{src['format']}")

    def _ingest(self, d: Path) -> None:
        ic = self.cfg["ingest"]
        fmt = "jsonl" if self.cfg["source"]["kind"] == "synth" else self.cfg["source"]["format"]
        parsed = LI.read_log(self._log_path(), fmt)
        b = LI.bucket(parsed.entries, ic["epoch_start"], ic["period_seconds"], ic["calendar_months"])
        write_json(d / "buckets.json", LI.buckets_to_json(b))
        write_json(d / "stats.json", {"entries": len(parsed.entries), "skipped": parsed.skipped,
                                      "dropped": b.dropped, "buckets": len(b)})

    def _buckets(self) -> LI.Buckets:
        return LI.buckets_from_json(read_json(self.stage_dir("ingest") / "buckets.json"))

    def _topics(self, d: Path) -> None:
        b = self._buckets()
        model = fit_topics(b, self.cfg["topics"])
        TM.save_model(model, d / "model.json")
        save_relevancy(TM.infer_many(model, b.unique_docs()), d / "relevancy.tns")

    def _metrics(self, d: Path) -> None:
        b = self._buckets()
        rel = relevancy_lookup(load_relevancy(self.stage_dir("topics") / "relevancy.tns"))
        mc = self.cfg["metrics"]
        entities = None
        if self.cfg["source"]["kind"] == "synth":
            entities = [S.entity_name(i) for i in range(self.cfg["source"]["entities"])]
        series, parts, scale, clamped = build_samples(b, rel, self.cfg["topics"]["k"], mc, entities)
        with open(d / "series.csv", "w", encoding="utf-8", newline="") as fh:
            M.series_to_csv(series, fh)
        for part in parts:
            M.save_samples(part, d / f"{part.tag}.tns")
        write_json(d / "scale.json", {"scale_factor": scale, "clamped": clamped,
                                      "sizes": {p.tag: len(p) for p in parts}})

    def _gridmap(self, d: Path) -> None:
        model = TM.load_model(self.stage_dir("topics") / "model.json")
        gc = self.cfg["gridmap"]
        grid, red = G.build_grid(TM.topic_word_matrix(model), gc["method"], gc["seed"])
        grid.save(d / "grid.json")
        save_tensors(d / "points.tns", {"points": red.points})
        write_json(d / "score.json", {"neighborhood_score": G.neighborhood_score(red.points, grid)})

    def samples(self):
        m = self.stage_dir("metrics")
        return tuple(M.load_samples(m / f"{tag}.tns") for tag in ("train", "val", "test"))

    def _train(self, d: Path) -> None:
        tc = self.cfg["train"]
        tr, va, te = self.samples()
        grid = G.TopicGrid.load(self.stage_dir("gridmap") / "grid.json")
        for kind in tc["archs"]:
            spec = arch_spec(kind, tr.k, tr.H, grid, tc)
            model = A.build(spec)
            rep = A.train(model, tr, va, te, epochs=tc["epochs"], loss=tc["loss"], lr=tc["lr"],
                          batch_size=tc["batch_size"], seed=tc["seed"])
            save_report(rep, d / kind)

    def reports(self) -> dict[str, A.TrainReport]:
        out = {}
        for kind in self.cfg["train"]["archs"]:
            p = self.stage_dir("train") / kind
            if (p / "meta.json").exists():
                out[kind] = load_report(p)
        return out

    def _evaluate(self, d: Path) -> None:
        ec = self.cfg["evaluate"]
        written = write_tables(self.reports(), self.dir, ec["losses"], ec["m_best"], ec["baseline"])
        write_json(d / "tables.json", {loss: _file_hash(p) for loss, p in written.items()})

    def run(self, until: str | None = None) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        self.write_manifest()
        steps = {"synth": self._synth, "ingest": self._ingest, "topics": self._topics,
                 "metrics": self._metrics, "gridmap": self._gridmap, "train": self._train,
                 "evaluate": self._evaluate}
        for name in STAGES:
            self._run(name, steps[name])
            if name == until:
                break
        self.write_manifest()
        return self.dir

    def write_manifest(self) -> None:
        cfg = self.cfg
        stages = {}
        for name in STAGES:
            stages[name] = {"key": self.keys[name], "done": self.is_done(name)}
        write_json(self.dir / "manifest.json", {
            "package": "topicast", "version": __version__, "numpy": np.__version__, "kernels": backend(),
            "config": cfg,
            "seeds": {s: cfg[s]["seed"] for s in ("source", "topics", "metrics", "gridmap", "train")} | {"master": cfg["seed"]},
            "stages": stages,
        })


def run_pipeline(config, out_dir, until: str | None = None) -> Path:
    """Run (or resume) the experiment in ``out_dir``; ``config`` is a path or a dict."""
    cfg = resolve_config(config) if isinstance(config, dict) else load_config(config)
    if until is not None and until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}")
    return Experiment(cfg, out_dir).run(until)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def report(exp_dir, loss: str | None = None) -> str:
    """Loss tables, sizes, timings and the temporal/spatial gain split of a run."""
    exp = Path(exp_dir)
    warnings = []
    man_path = exp / "manifest.json"
    if not man_path.exists():
        raise ConfigError(f"{exp} has no manifest.json; not an experiment directory")
    manifest = read_json(man_path)
    cfg = manifest["config"]
    for name, st in manifest["stages"].items():
        if not st["done"]:
            warnings.append(f"stage {name} has not completed")
    losses = [loss] if loss else cfg["evaluate"]["losses"]
    m_best = cfg["evaluate"]["m_best"]
    reports = {}
    metas = {}
    for kind in cfg["train"]["archs"]:
        p = exp / "stage_train" / kind
        if (p / "meta.json").exists():
            reports[kind] = load_report(p)
            metas[kind] = read_json(p / "meta.json")
        else:
            warnings.append(f"no training report for {kind}")
    lines = []
    if not reports:
        warnings.append("nothing to report")
    for ln in losses:
        if not reports:
            break
        rows = [ev.summarize(reports[a], ln, m_best) for a in reports]
        table = ev.loss_table(rows, ln, cfg["evaluate"]["baseline"])
        lines.append(f"{ln.upper()} (final epoch, best-{m_best} and best-1 validation epochs)")
        lines.append(ev.table_text(table, ln))
        final = {r.arch: r.final for r in rows}
        lines.extend(gain_lines(final, ln))
        lines.append("")
    if metas:
        lines.append("architecture  parameters  seconds/epoch")
        for kind, meta in metas.items():
            lines.append(f"{kind:>12}  {meta['param_count']:>10}  {meta['seconds_per_epoch']:>13.3f}")
        if "lrcn" in metas and "sccn" in metas and metas["sccn"]["seconds_per_epoch"] > 0:
            ratio = metas["lrcn"]["seconds_per_epoch"] / metas["sccn"]["seconds_per_epoch"]
            lines.append(f"time ratio lrcn/sccn: {ratio:.3f}")
    out = "\n".join(f"warning: {w}" for w in warnings)
    return (out + "\n" if out else "") + "\n".join(lines).rstrip() + "\n"


def gain_lines(final: dict[str, float], loss: str) -> list[str]:
    """Temporal gain (TDRN over MLP) and spatial gains (over TDRN) as text lines."""
    lines = []
    if "mlp" in final and "tdrn" in final:
        lines.append(f"temporal gain (tdrn vs mlp, {loss}): {ev.gain(final['mlp'], final['tdrn']):.2f}%")
    if "tdrn" in final:
        for kind in SPATIAL:
            if kind in final:
                lines.append(f"spatial gain ({kind} vs tdrn, {loss}): {ev.gain(final['tdrn'], final[kind]):.2f}%")
    return lines

