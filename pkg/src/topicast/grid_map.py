"""Place topics on a rectangular grid so metric vectors become images.

Two steps: reduce the topic-word rows to 2D (PCA by default), then assign
each 2D point to a distinct grid cell with a recursive median split that keeps
nearby points in nearby cells.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

REDUCERS = ("pca", "tsne")


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class Reduced2D:
    points: np.ndarray
    method: str = "pca"
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError("points must have shape [k, 2] with k >= 1")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)


def _pca_2d(x: np.ndarray) -> np.ndarray:
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(centered.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s.size < 2 or s[1] <= tol:
        raise DegenerateInputError("fewer than two non-degenerate principal directions")
    comps = vt[:2]
    for i in range(2):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


def reduce_2d(topic_word: np.ndarray, method: str = "pca", seed: int = 0, iterations: int = 1000) -> Reduced2D:
    """Project topic-word rows to 2D.

    PCA projects the mean-centered rows onto the top two principal axes, with
    each axis signed so its largest-magnitude loading is positive. t-SNE runs
    scikit-learn's implementation with a fixed seed and iteration count.
    """
    x = np.asarray(topic_word, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateInputError("need at least two topics to reduce")
    if method == "pca":
        return Reduced2D(_pca_2d(x), "pca", None)
    if method == "tsne":
        from sklearn.manifold import TSNE

        if np.allclose(x, x[0]):
            raise DegenerateInputError("all topic rows are identical")
        perplexity = min(30.0, max(1.0, (x.shape[0] - 1) / 3.0))
        emb = TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca",
                   max_iter=iterations).fit_transform(x)
        return Reduced2D(emb, "tsne", seed)
    raise ValueError(f"unknown reducer {method!r}; expected one of {REDUCERS}")


def grid_dims(k: int) -> tuple[int, int]:
    """Most square R x C with R * C = k and R <= C."""
    if k < 1:
        raise ValueError("k must be >= 1")
    r = max(d for d in range(1, math.isqrt(k) + 1) if k % d == 0)
    if r == 1 and k > 3:
        log.warning("k=%d has no divisor below sqrt(k); grid degenerates to a 1 x %d strip", k, k)
    return r, k // r


@dataclass(frozen=True)
class TopicGrid:
    rows: int
    cols: int
    assign: tuple[tuple[int, int], ...]
    reducer: str = "pca"
    seed: int | None = None

    def __post_init__(self):
        cells = set(self.assign)
        if len(self.assign) != self.rows * self.cols or len(cells) != len(self.assign):
            raise ValueError("assignment is not a bijection onto the grid")
        if any(not (0 <= r < self.rows and 0 <= c < self.cols) for r, c in cells):
            raise ValueError("assigned cell outside the grid")

    @property
    def k(self) -> int:
        return len(self.assign)

    @property
    def flat_index(self) -> np.ndarray:
        """Row-major cell index of each topic."""
        return np.array([r * self.cols + c for r, c in self.assign], dtype=np.int64)

    @property
    def inverse_index(self) -> np.ndarray:
        """Topic index sitting in each row-major cell."""
        inv = np.empty(self.k, dtype=np.int64)
        inv[self.flat_index] = np.arange(self.k)
        return inv

    def to_json(self) -> dict:
        return {"R": self.rows, "C": self.cols, "assign": [list(a) for a in self.assign],
                "reducer": self.reducer, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "TopicGrid":
        return cls(int(obj["R"]), int(obj["C"]), tuple(tuple(a) for a in obj["assign"]),
                   obj.get("reducer", "pca"), obj.get("seed"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "TopicGrid":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def split_diffuse(points, rows: int, cols: int) -> TopicGrid:
    """Recursive median split of 2D points into an R x C grid.

    The current cell rectangle is halved along its longer side (rows when
    tied); the points are sorted along the matching axis (y for rows, x for
    columns), ties broken by the other coordinate and then by topic index,
    and the lower part (as many points as the first half has cells) goes to
    the top/left half. Cell (row, col) therefore grows with (y, x).
    """
    pts = points.points if isinstance(points, Reduced2D) else np.asarray(points, dtype=np.float64)
    k = pts.shape[0]
    if k != rows * cols:
        raise ValueError(f"{k} points cannot fill a {rows} x {cols} grid")
    assign: list[tuple[int, int] | None] = [None] * k
    stack = [(np.arange(k), 0, 0, rows, cols)]
    while stack:
        idx, r0, c0, nr, nc = stack.pop()
        if nr * nc == 1:
            assign[int(idx[0])] = (r0, c0)
            continue
        x = pts[idx, 0]
        y = pts[idx, 1]
        if nr >= nc:
            order = np.lexsort((idx, x, y))
            top = nr // 2
            first, second = idx[order[: top * nc]], idx[order[top * nc:]]
            stack.append((second, r0 + top, c0, nr - top, nc))
            stack.append((first, r0, c0, top, nc))
        else:
            order = np.lexsort((idx, y, x))
            left = nc // 2
            first, second = idx[order[: left * nr]], idx[order[left * nr:]]
            stack.append((second, r0, c0 + left, nr, nc - left))
            stack.append((first, r0, c0, nr, left))
    reducer = points.method if isinstance(points, Reduced2D) else "pca"
    seed = points.seed if isinstance(points, Reduced2D) else None
    return TopicGrid(rows, cols, tuple(assign), reducer, seed)


def layout(series_row, grid: TopicGrid) -> np.ndarray:
    """Scatter a [..., k] metric vector into [..., R, C] images."""
    x = np.asarray(series_row, dtype=np.float64)
    img = np.empty(x.shape[:-1] + (grid.k,))
    img[..., grid.flat_index] = x
    return img.reshape(x.shape[:-1] + (grid.rows, grid.cols))


def flatten(image, grid: TopicGrid) -> np.ndarray:
    """Inverse of :func:`layout`."""
    img = np.asarray(image, dtype=np.float64)
    flat = img.reshape(img.shape[:-2] + (grid.k,))
    return flat[..., grid.flat_index]


def chebyshev_distances(grid: TopicGrid) -> np.ndarray:
    cells = np.asarray(grid.assign)
    return np.abs(cells[:, None, :] - cells[None, :, :]).max(axis=-1)


def neighborhood_score(points, grid: TopicGrid) -> float:
    """Spearman correlation between 2D and grid (Chebyshev) pairwise distances."""
    from scipy.stats import spearmanr

    pts = points.points if isinstance(points, Reduced2D) else np.asarray(points)
    iu = np.triu_indices(len(pts), 1)
    d2 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)[iu]
    dg = chebyshev_distances(grid)[iu]
    return float(spearmanr(d2, dg).statistic)


def build_grid(topic_word: np.ndarray, method: str = "pca", seed: int = 0) -> tuple[TopicGrid, Reduced2D]:
    red = reduce_2d(topic_word, method, seed)
    r, c = grid_dims(red.points.shape[0])
    return split_diffuse(red, r, c), red
