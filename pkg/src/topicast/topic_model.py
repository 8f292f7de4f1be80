"""Tokenization, LDA fitting by collapsed Gibbs sampling, and relevancy inference.

A fitted :class:`TopicModel` is frozen: ``phi`` is a read-only array and
inference never touches it. Relevancy vectors are the document's inferred
topic proportions, so they sum to one.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels

FORMAT_VERSION = "topicast.topic_model/1"
_TOKEN_RE = re.compile(r"[^\W_]+")


class TopicModelError(Exception):
    pass


class InvalidConfigError(TopicModelError):
    pass


def tokenize(content: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(content.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    doc_freq: tuple[int, ...]
    index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if not self.index:
            object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        idx = self.index
        return np.array([idx[t] for t in tokens if t in idx], dtype=np.int64)


def build_vocabulary(docs: Sequence[Sequence[str]], min_df: int = 5, max_df: float = 0.5) -> Vocabulary:
    """Vocabulary of tokens in at least ``min_df`` docs and at most ``max_df`` of them.

    Tokens are sorted, so ids are deterministic.
    """
    df = Counter()
    for d in docs:
        df.update(set(d))
    limit = max_df * len(docs)
    kept = sorted(t for t, n in df.items() if n >= min_df and n <= limit)
    return Vocabulary(tuple(kept), tuple(df[t] for t in kept))


@dataclass(frozen=True)
class TopicModel:
    k: int
    phi: np.ndarray
    vocabulary: Vocabulary
    alpha: float
    beta: float
    iterations: int
    seed: int
    method: str = "lda"
    infer_iterations: int = 50

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64)
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)

    @property
    def n_words(self) -> int:
        return len(self.vocabulary)


def _rng_uniforms(seed, size) -> np.ndarray:
    return np.random.default_rng(seed).random(size)


def fit_lda(
    corpus: Sequence[Sequence[str]],
    k: int,
    alpha: float | None = None,
    beta: float = 0.01,
    iterations: int = 500,
    seed: int = 0,
    vocabulary: Vocabulary | None = None,
    min_df: int = 5,
    max_df: float = 0.5,
    periods: Sequence[int] | None = None,
    window_end: int | None = None,
) -> TopicModel:
    """Fit LDA to tokenized documents with collapsed Gibbs sampling.

    When ``periods`` and ``window_end`` are given, every document must come
    from a period before ``window_end``; later documents raise
    :class:`TopicModelError`. Documents with no in-vocabulary token are ignored.
    """
    if k < 2:
        raise InvalidConfigError("k must be >= 2")
    if iterations < 1:
        raise InvalidConfigError("iterations must be >= 1")
    if not corpus:
        raise InvalidConfigError("corpus is empty")
    if periods is not None and window_end is not None:
        late = [p for p in periods if p >= window_end]
        if late:
            raise TopicModelError(
                f"{len(late)} documents from periods >= {window_end} passed to fit_lda; "
                "the topic model may only see the training window"
            )
    if alpha is None:
        alpha = 50.0 / k
    if vocabulary is None:
        vocabulary = build_vocabulary(corpus, min_df=min_df, max_df=max_df)
    if k > len(vocabulary):
        raise InvalidConfigError(f"k={k} exceeds vocabulary size {len(vocabulary)}")

    encoded = [vocabulary.encode(d) for d in corpus]
    encoded = [d for d in encoded if d.size]
    if not encoded:
        raise InvalidConfigError("no document has an in-vocabulary token")
    words = np.concatenate(encoded)
    docs = np.repeat(np.arange(len(encoded), dtype=np.int64), [d.size for d in encoded])
    v = len(vocabulary)

    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=words.size).astype(np.int64)
    ndk = np.zeros((len(encoded), k), dtype=np.int64)
    nkw = np.zeros((k, v), dtype=np.int64)
    nk = np.zeros(k, dtype=np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    np.add.at(nk, z, 1)

    alpha = float(alpha)
    beta = float(beta)
    vbeta = v * beta
    for _ in range(iterations):
        kernels.gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, rng.random(words.size))

    phi = (nkw + beta) / (nk[:, None] + vbeta)
    phi /= phi.sum(axis=1, keepdims=True)
    return TopicModel(k, phi, vocabulary, alpha, beta, iterations, seed)


def fit_kmeans(corpus: Sequence[Sequence[str]], k: int, seed: int = 0, min_df: int = 5, max_df: float = 0.5) -> TopicModel:
    """Alternative topic finder: k-means over L2-normalized TF-IDF vectors.

    Cluster centers are stored as the model's topic-word rows (normalized to
    sum to one); relevancy is then the normalized cosine similarity of a
    document to each center.
    """
    from sklearn.cluster import KMeans

    if k < 2:
        raise InvalidConfigError("k must be >= 2")
    vocabulary = build_vocabulary(corpus, min_df=min_df, max_df=max_df)
    if k > len(vocabulary):
        raise InvalidConfigError(f"k={k} exceeds vocabulary size {len(vocabulary)}")
    x = _tfidf(corpus, vocabulary)
    x = x[x.sum(axis=1) > 0]
    km = KMeans(n_clusters=k, n_init=4, random_state=seed).fit(x)
    centers = np.clip(km.cluster_centers_, 0.0, None) + 1e-12
    phi = centers / centers.sum(axis=1, keepdims=True)
    return TopicModel(k, phi, vocabulary, 0.0, 0.0, 0, seed, method="kmeans")


def _tfidf(corpus, vocabulary: Vocabulary) -> np.ndarray:
    n = len(corpus)
    x = np.zeros((n, len(vocabulary)))
    for i, d in enumerate(corpus):
        ids = vocabulary.encode(d)
        if ids.size:
            np.add.at(x[i], ids, 1.0)
    idf = np.log((1.0 + n) / (1.0 + np.asarray(vocabulary.doc_freq, dtype=float))) + 1.0
    x *= idf
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def _doc_seed(model_seed: int, content: str) -> int:
    h = hashlib.blake2b(content.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") ^ (int(model_seed) & 0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class Relevancy:
    values: np.ndarray
    out_of_vocabulary: bool = False


def infer_relevancy(model: TopicModel, doc: str | Sequence[str]) -> Relevancy:
    """Topic proportions of one document under a frozen model.

    ``doc`` may be raw text or a token list. Sampling is seeded from the model
    seed and the document's tokens, so the result does not depend on which
    other documents are inferred or in what order.
    """
    tokens = tokenize(doc) if isinstance(doc, str) else list(doc)
    ids = model.vocabulary.encode(tokens)
    k = model.k
    if ids.size == 0:
        return Relevancy(np.full(k, 1.0 / k), True)
    if model.method == "kmeans":
        x = np.zeros(model.n_words)
        np.add.at(x, ids, 1.0)
        sims = model.phi @ x / (np.linalg.norm(model.phi, axis=1) * np.linalg.norm(x))
        return Relevancy(sims / sims.sum())
    rng = np.random.default_rng(_doc_seed(model.seed, " ".join(tokens)))
    z = rng.integers(0, k, size=ids.size).astype(np.int64)
    iters = model.infer_iterations
    uniforms = rng.random((iters, ids.size))
    theta = kernels.fold_in(ids, model.phi, model.alpha, z, uniforms, iters // 2)
    return Relevancy(theta / theta.sum())


def infer_many(model: TopicModel, docs: Iterable[str]) -> dict[str, np.ndarray]:
    """Relevancy vectors keyed by document content."""
    return {d: infer_relevancy(model, d).values for d in docs}


def topic_word_matrix(model: TopicModel | None) -> np.ndarray:
    if model is None or not isinstance(model, TopicModel):
        raise TopicModelError("topic_word_matrix needs a fitted TopicModel")
    return np.array(model.phi)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def model_to_json(model: TopicModel) -> dict:
    return {
        "version": FORMAT_VERSION,
        "method": model.method,
        "k": model.k,
        "alpha": model.alpha,
        "beta": model.beta,
        "iterations": model.iterations,
        "infer_iterations": model.infer_iterations,
        "seed": model.seed,
        "vocabulary": list(model.vocabulary.tokens),
        "doc_freq": list(model.vocabulary.doc_freq),
        "phi": [[float(x) for x in row] for row in model.phi],
    }


def model_from_json(obj: dict) -> TopicModel:
    if obj.get("version") != FORMAT_VERSION:
        raise TopicModelError(f"unsupported topic model version {obj.get('version')!r}")
    vocab = Vocabulary(tuple(obj["vocabulary"]), tuple(obj["doc_freq"]))
    return TopicModel(
        k=int(obj["k"]),
        phi=np.asarray(obj["phi"], dtype=np.float64),
        vocabulary=vocab,
        alpha=float(obj["alpha"]),
        beta=float(obj["beta"]),
        iterations=int(obj["iterations"]),
        seed=int(obj["seed"]),
        method=obj.get("method", "lda"),
        infer_iterations=int(obj.get("infer_iterations", 50)),
    )


def save_model(model: TopicModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)


def load_model(path) -> TopicModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
