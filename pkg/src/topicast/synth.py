"""Synthetic activity logs with planted topics and persistent preferences.

Each entity carries a topic-preference vector that evolves as
``p[t+1] = normalize(rho * p[t] + (1 - rho) * innovation)``. Each period it
emits Poisson-many documents; a document picks one topic from the current
preferences and draws its words from that topic's private vocabulary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .log_ingest import LogEntry


@dataclass(frozen=True)
class SynthConfig:
    entities: int = 1000
    periods: int = 12
    topics: int = 16
    vocab_per_topic: int = 20
    words_per_doc: int = 8
    docs_rate: float = 4.0
    rho: float = 0.9
    trend: float = 0.0
    concentration: float = 0.3
    activity_spread: float = 0.5
    period_seconds: int = 86400
    epoch_start: int = 0
    seed: int = 0

    def __post_init__(self):
        if min(self.entities, self.periods, self.topics, self.vocab_per_topic, self.words_per_doc) < 1:
            raise ValueError("entities, periods, topics, vocab_per_topic and words_per_doc must be >= 1")
        if self.docs_rate <= 0:
            raise ValueError("docs_rate must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        if not 0.0 <= self.trend <= 1.0:
            raise ValueError("trend must be in [0, 1]")


@dataclass
class SynthDoc:
    entity: int
    period: int
    topic: int
    timestamp: int
    content: str


@dataclass
class SynthData:
    config: SynthConfig
    entries: list[LogEntry]
    docs: list[SynthDoc]
    preferences: np.ndarray  # [n, P, k_true]
    rates: np.ndarray  # [n] expected documents per period

    @property
    def entity_ids(self) -> list[str]:
        return [entity_name(i) for i in range(self.config.entities)]


def entity_name(i: int) -> str:
    return f"e{i:05d}"


def topic_word(t: int, j: int) -> str:
    return f"t{t}w{j}"


def _entity_stream(cfg: SynthConfig, e: int, rng: np.random.Generator):
    k = cfg.topics
    conc = np.full(k, cfg.concentration)
    pref = np.empty((cfg.periods, k))
    pref[0] = rng.dirichlet(conc)
    trend_topic = rng.integers(k)
    # per-entity activity level, fixed over time
    rate = cfg.docs_rate * float(np.exp(cfg.activity_spread * rng.standard_normal() - 0.5 * cfg.activity_spread ** 2))
    for p in range(1, cfg.periods):
        innov = rng.dirichlet(conc)
        if cfg.trend > 0:
            innov = (1.0 - cfg.trend) * innov
            innov[trend_topic] += cfg.trend
        nxt = cfg.rho * pref[p - 1] + (1.0 - cfg.rho) * innov
        pref[p] = nxt / nxt.sum()
    docs = []
    for p in range(cfg.periods):
        n = rng.poisson(rate)
        topics = rng.choice(k, size=n, p=pref[p])
        offsets = np.sort(rng.integers(0, cfg.period_seconds, size=n))
        for t, off in zip(topics, offsets):
            words = rng.integers(0, cfg.vocab_per_topic, size=cfg.words_per_doc)
            content = " ".join(topic_word(int(t), int(w)) for w in words)
            ts = cfg.epoch_start + p * cfg.period_seconds + int(off)
            docs.append(SynthDoc(e, p, int(t), ts, content))
    return pref, docs, rate


def generate(cfg: SynthConfig) -> SynthData:
    """Logs and ground truth; per-entity streams use seeds spawned from ``cfg.seed``.

    Entries are ordered by entity, then timestamp.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.entities)
    prefs = np.empty((cfg.entities, cfg.periods, cfg.topics))
    rates = np.empty(cfg.entities)
    docs: list[SynthDoc] = []
    for e, ss in enumerate(children):
        prefs[e], edocs, rates[e] = _entity_stream(cfg, e, np.random.default_rng(ss))
        docs.extend(edocs)
    entries = [LogEntry(entity_name(d.entity), d.timestamp, d.content) for d in docs]
    return SynthData(cfg, entries, docs, prefs, rates)


def generate_entity(cfg: SynthConfig, e: int):
    """(preferences, docs, rate) of one entity, identical to its part of :func:`generate`."""
    ss = np.random.SeedSequence(cfg.seed).spawn(cfg.entities)[e]
    return _entity_stream(cfg, e, np.random.default_rng(ss))


def oracle_volume(data: SynthData, entity: int, period: int, topic: int, scale: float = 1.0) -> float:
    """Topical volume from the planted document topics, bypassing the topic model.

    Documents are deduplicated by content first, as the pipeline does; the
    relevancy of a document is the one-hot vector of its planted topic.
    """
    seen = set()
    count = 0.0
    for d in data.docs:
        if d.entity == entity and d.period == period and d.content not in seen:
            seen.add(d.content)
            if d.topic == topic:
                count += 1.0
    return float(np.log(count + 1.0)) / scale


def oracle_series(data: SynthData) -> np.ndarray:
    """Planted-topic volumes for all entities, periods and topics: [n, P, k]."""
    cfg = data.config
    counts = np.zeros((cfg.entities, cfg.periods, cfg.topics))
    seen = set()
    for d in data.docs:
        key = (d.entity, d.period, d.content)
        if key in seen:
            continue
        seen.add(key)
        counts[d.entity, d.period, d.topic] += 1.0
    return np.log(counts + 1.0)


def write_ground_truth(data: SynthData, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    k = data.config.topics
    w.writerow(["entity", "period"] + [f"pref_{t}" for t in range(k)])
    for e in range(data.config.entities):
        for p in range(data.config.periods):
            w.writerow([entity_name(e), p] + [repr(float(x)) for x in data.preferences[e, p]])


def write_doc_topics(data: SynthData, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["entity", "period", "ts", "topic"])
    for d in data.docs:
        w.writerow([entity_name(d.entity), d.period, d.timestamp, d.topic])
