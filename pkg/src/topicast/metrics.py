"""Topical volume and drift, per-entity metric series, and supervised samples."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .log_ingest import ActivitySet, Buckets

log = logging.getLogger(__name__)

CLAMP_LIMIT = 2.0


class SplitError(ValueError):
    pass


def _relevancy_matrix(activity, relevancy) -> np.ndarray:
    """Stack relevancy vectors for the documents of an activity set.

    ``activity`` is either an :class:`ActivitySet` (looked up in the
    ``relevancy`` mapping or callable) or already a sequence of vectors.
    """
    if isinstance(activity, ActivitySet):
        lookup = relevancy if callable(relevancy) else relevancy.__getitem__
        rows = [lookup(d) for d in activity.docs]
    else:
        rows = list(activity)
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=np.float64)


def volume_vector(activity, relevancy=None, k: int | None = None) -> np.ndarray:
    """Topical volume ``log(sum_a r_a[t] + 1)`` for every topic at once."""
    r = _relevancy_matrix(activity, relevancy)
    if r.size == 0:
        if k is None:
            raise ValueError("k is required for an empty activity set")
        return np.zeros(k)
    # left-to-right accumulation, so the value is independent of numpy's
    # pairwise summation blocking
    total = np.zeros(r.shape[1])
    for row in r:
        total += row
    return np.log(total + 1.0)


def topical_volume(activity, t: int, relevancy=None) -> float:
    """Topical volume of one topic; 0.0 for an empty set."""
    r = _relevancy_matrix(activity, relevancy)
    if r.size == 0:
        return 0.0
    total = 0.0
    for row in r:
        total += float(row[t])
    return float(np.log(total + 1.0))


def topical_drift(set_1, set_2, t: int, relevancy=None) -> float:
    """Change in topical volume from the first period to the second."""
    return topical_volume(set_2, t, relevancy) - topical_volume(set_1, t, relevancy)


@dataclass
class MetricSeries:
    """Raw topical volumes [periods x topics] of one entity.

    ``scale_factor`` is the max raw value over the training population;
    :meth:`scaled` divides by it.
    """

    entity_id: str
    values: np.ndarray
    scale_factor: float = 1.0

    def scaled(self) -> np.ndarray:
        return self.values / self.scale_factor


def build_series(
    buckets: Buckets,
    relevancy: Mapping[str, np.ndarray] | Callable[[str], np.ndarray],
    k: int,
    periods: int,
    entities: Sequence[str] | None = None,
    scale_periods: Iterable[int] | None = None,
) -> dict[str, MetricSeries]:
    """Volume series for every entity over periods [0, periods).

    Missing (entity, period) buckets give all-zero rows. The scale factor is
    the max value over ``scale_periods`` (all periods by default) across all
    entities; it falls back to 1.0 when that max is zero.
    """
    if entities is None:
        entities = buckets.entities()
    series = {}
    for e in entities:
        values = np.zeros((periods, k))
        for p in range(periods):
            aset = buckets.sets.get((e, p))
            if aset is not None and len(aset):
                values[p] = volume_vector(aset, relevancy, k)
        series[e] = MetricSeries(e, values)
    rows = list(range(periods)) if scale_periods is None else [p for p in scale_periods if 0 <= p < periods]
    m = max((float(s.values[rows].max()) for s in series.values() if rows), default=0.0)
    scale = m if m > 0 else 1.0
    for s in series.values():
        s.scale_factor = scale
    return series


def series_to_csv(series: Mapping[str, MetricSeries], fh) -> None:
    k = next(iter(series.values())).values.shape[1] if series else 0
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["entity", "period"] + [f"topic_{t}" for t in range(k)])
    for e in sorted(series):
        for p, row in enumerate(series[e].values):
            w.writerow([e, p] + [repr(float(x)) for x in row])


def series_from_csv(fh, scale_factor: float = 1.0) -> dict[str, MetricSeries]:
    rows: dict[str, list[tuple[int, list[float]]]] = {}
    reader = csv.reader(fh)
    next(reader)
    for rec in reader:
        rows.setdefault(rec[0], []).append((int(rec[1]), [float(x) for x in rec[2:]]))
    out = {}
    for e, recs in rows.items():
        recs.sort()
        out[e] = MetricSeries(e, np.array([r for _, r in recs]), scale_factor)
    return out


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    entity_id: str
    history: np.ndarray
    target: np.ndarray
    target_period: int


class SampleSet:
    """Samples stored as stacked arrays; indexing yields :class:`Sample`."""

    def __init__(self, history, target, target_period, entity_ids, scale_factor=1.0, tag=""):
        self.history = np.asarray(history, dtype=np.float64)
        self.target = np.asarray(target, dtype=np.float64)
        self.target_period = np.asarray(target_period, dtype=np.int64)
        self.entity_ids = np.asarray(entity_ids, dtype=object)
        self.scale_factor = float(scale_factor)
        self.tag = tag
        n = len(self.target_period)
        if not (self.history.shape[0] == self.target.shape[0] == self.entity_ids.shape[0] == n):
            raise ValueError("sample arrays disagree on count")

    @property
    def H(self) -> int:
        return self.history.shape[1]

    @property
    def k(self) -> int:
        return self.target.shape[1]

    def __len__(self):
        return len(self.target_period)

    def __getitem__(self, i) -> Sample:
        return Sample(str(self.entity_ids[i]), self.history[i], self.target[i], int(self.target_period[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, mask_or_index, tag=None) -> "SampleSet":
        idx = np.asarray(mask_or_index)
        return SampleSet(
            self.history[idx], self.target[idx], self.target_period[idx], self.entity_ids[idx],
            self.scale_factor, self.tag if tag is None else tag,
        )


def _empty(h: int, k: int, tag="") -> SampleSet:
    return SampleSet(np.zeros((0, h, k)), np.zeros((0, k)), np.zeros(0, np.int64), np.zeros(0, object), tag=tag)


def make_samples(series: Mapping[str, MetricSeries], H: int, scaled: bool = False) -> SampleSet:
    """Sliding windows: H consecutive rows of history, next row as target.

    Entities are visited in sorted order and windows by start period.
    """
    if not series:
        raise ValueError("no series given")
    first = next(iter(series.values()))
    P, k = first.values.shape
    if H >= P:
        log.warning("history length %d leaves no target period among %d periods", H, P)
        return _empty(H, k)
    hist, targ, tp, ents = [], [], [], []
    for e in sorted(series):
        v = series[e].scaled() if scaled else series[e].values
        for start in range(P - H):
            hist.append(v[start:start + H])
            targ.append(v[start + H])
            tp.append(start + H)
            ents.append(e)
    return SampleSet(np.array(hist), np.array(targ), tp, ents, first.scale_factor if scaled else 1.0)


def temporal_split(
    samples: SampleSet, train_frac: float = 0.7, val_frac: float = 0.08, seed: int = 0
) -> tuple[SampleSet, SampleSet, SampleSet]:
    """Split so that every test target lies after every train/val target.

    The cutoff period ``c`` is the one whose share of samples with target
    period <= c is closest to ``train_frac + val_frac`` while leaving the
    test side non-empty. Inside that share, whole entities are held out for
    validation in proportion ``val_frac / (train_frac + val_frac)``.
    """
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise SplitError("fractions must be positive with train_frac + val_frac < 1")
    periods = np.unique(samples.target_period)
    if len(periods) < 2:
        raise SplitError("temporal split needs at least two distinct target periods")
    n = len(samples)
    want = train_frac + val_frac
    best = None
    for c in periods[:-1]:
        share = np.count_nonzero(samples.target_period <= c) / n
        score = abs(share - want)
        if best is None or score < best[0]:
            best = (score, c)
    cutoff = int(best[1])
    pool_mask = samples.target_period <= cutoff
    pool_idx = np.flatnonzero(pool_mask)
    test_idx = np.flatnonzero(~pool_mask)

    ents = samples.entity_ids[pool_idx]
    uniq = np.array(sorted(set(ents.tolist())), dtype=object)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(uniq))
    n_val_target = val_frac / want * len(pool_idx)
    # take whole entities until the validation count is as close as possible
    counts = {e: 0 for e in uniq}
    for e in ents:
        counts[e] += 1
    val_ents, total = set(), 0
    for i in order:
        e = uniq[i]
        if abs(total + counts[e] - n_val_target) <= abs(total - n_val_target):
            val_ents.add(e)
            total += counts[e]
        if total >= n_val_target:
            break
    is_val = np.array([e in val_ents for e in ents], dtype=bool)
    train_idx = pool_idx[~is_val]
    val_idx = pool_idx[is_val]
    if not len(train_idx) or not len(val_idx) or not len(test_idx):
        raise SplitError("no cutoff gives non-empty train, validation and test sets")
    train = samples.subset(train_idx, "train")
    val = samples.subset(val_idx, "val")
    test = samples.subset(test_idx, "test")
    check_temporal_split(train, val, test)
    return train, val, test


def check_temporal_split(train: SampleSet, val: SampleSet, test: SampleSet) -> None:
    last = max(int(train.target_period.max(initial=-1)), int(val.target_period.max(initial=-1)))
    if len(test) and last >= int(test.target_period.min()):
        raise SplitError(f"train/val target period {last} is not before test period {int(test.target_period.min())}")


def fit_scale(train: SampleSet) -> float:
    """Max raw value over training histories and targets (1.0 if all zero)."""
    m = max(float(train.history.max(initial=0.0)), float(train.target.max(initial=0.0)))
    return m if m > 0 else 1.0


def apply_scale(samples: SampleSet, scale: float, clamp: float = CLAMP_LIMIT) -> tuple[SampleSet, int]:
    """Divide by ``scale`` and clamp at ``clamp``; returns the clamp count."""
    h = samples.history / scale
    t = samples.target / scale
    clamped = int(np.count_nonzero(h > clamp) + np.count_nonzero(t > clamp))
    if clamped:
        log.info("clamped %d scaled values above %.1f in %s split", clamped, clamp, samples.tag or "sample")
    out = SampleSet(np.minimum(h, clamp), np.minimum(t, clamp), samples.target_period, samples.entity_ids, scale, samples.tag)
    return out, clamped


def save_samples(samples: SampleSet, path) -> None:
    """Binary tensor file plus a JSON sidecar at ``<path>.json``."""
    from .nn.tensorio import save_tensors

    ent = samples.entity_ids.tolist()
    names = sorted(set(ent))
    code = {e: i for i, e in enumerate(names)}
    save_tensors(path, {
        "history": samples.history,
        "target": samples.target,
        "target_period": samples.target_period,
        "entity_code": np.array([code[e] for e in ent], dtype=np.int64),
    })
    meta = {
        "H": samples.H, "k": samples.k, "count": len(samples), "split": samples.tag,
        "scale_factor": samples.scale_factor, "entities": names,
    }
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_samples(path) -> SampleSet:
    from .nn.tensorio import load_tensors

    t = load_tensors(path)
    with open(f"{path}.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    ents = np.array(meta["entities"], dtype=object)[t["entity_code"]] if len(t["entity_code"]) else np.zeros(0, object)
    return SampleSet(t["history"], t["target"], t["target_period"], ents, meta["scale_factor"], meta["split"])
