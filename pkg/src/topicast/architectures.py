"""The six prediction architectures and their training loop.

All models map a history batch [N, H, k] of scaled topical metrics to a
prediction [N, k] for the next period. Spatial models scatter each period's
k values onto the topic grid internally.

* ``mlp``   - flattened history through three dense layers of shrinking width
* ``tdrn``  - per period, an LSTM reads the k metrics as a sequence; a second
  LSTM reads the per-period states across periods
* ``lrcn``  - per period, a conv stack over the topic grid; two LSTMs across
  periods
* ``sccn``  - ``lrcn`` with locally connected layers instead of convolutions
* ``lrcnm`` / ``sccnm`` - four ``lrcn`` / ``sccn`` subsystems with 2x2, 3x3,
  4x4 and 5x5 filters whose outputs feed one dense layer
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation, kernels
from .grid_map import TopicGrid
from .metrics import SampleSet, check_temporal_split
from .nn import functional as F
from .nn.layers import LSTM, Conv2D, Dense, Local2D
from .nn.optim import Adam
from .nn.tensor import NonFiniteError, Tensor, backward
from .nn.tensorio import save_tensors

log = logging.getLogger(__name__)

KINDS = ("mlp", "tdrn", "lrcn", "sccn", "lrcnm", "sccnm")
SPLITS = ("train", "val", "test")
MULTIRES_SIZES = (2, 3, 4, 5)
TDRN_READINGS = ("scalar", "vector")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArchSpec:
    kind: str
    k: int
    H: int
    grid: TopicGrid | None = None
    lstm_width: int = 64
    tdrn_width: int = 32
    tdrn_reading: str = "scalar"
    filters: int = 16
    filter_size: int = 2
    conv_layers: int = 2
    dropout: float = 0.1
    l2: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown architecture {self.kind!r}; expected one of {KINDS}")
        if self.k < 1 or self.H < 1:
            raise ConfigError("k and H must be >= 1")
        if self.tdrn_reading not in TDRN_READINGS:
            raise ConfigError(f"tdrn_reading must be one of {TDRN_READINGS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")
        if self.kind in ("lrcn", "sccn", "lrcnm", "sccnm"):
            if self.grid is None:
                raise ConfigError(f"{self.kind} needs a topic grid")
            if self.grid.k != self.k:
                raise ConfigError(f"grid holds {self.grid.k} topics, spec says k={self.k}")
            if self.conv_layers < 1:
                raise ConfigError("conv_layers must be >= 1")
        if self.kind in ("lrcn", "sccn"):
            need = self.conv_layers * (self.filter_size - 1) + 1
            if min(self.grid.rows, self.grid.cols) < need:
                raise ConfigError(
                    f"{self.conv_layers} layers of {self.filter_size}x{self.filter_size} filters "
                    f"do not fit a {self.grid.rows}x{self.grid.cols} grid"
                )
        if self.kind in ("lrcnm", "sccnm") and min(self.grid.rows, self.grid.cols) < 5:
            raise ConfigError("multi-resolution models need a grid of at least 5x5")


def mlp_widths(H: int, k: int, hidden: int = 3) -> list[int]:
    """Input width H*k shrinking geometrically to k over ``hidden + 1`` steps."""
    n_in = H * k
    r = (k / n_in) ** (1.0 / (hidden + 1))
    return [n_in] + [int(round(n_in * r ** i)) for i in range(1, hidden + 1)] + [k]


class Model:
    """Base class: parameters, regularized layer, forward pass."""

    kind = "base"

    def __init__(self, spec: ArchSpec):
        self.spec = spec
        self.layers: list = []

    def params(self) -> dict[str, Tensor]:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())

    def l2_layers(self) -> list:
        """Layers carrying the L2 penalty (one per subsystem)."""
        raise NotImplementedError

    def penalty(self) -> Tensor | None:
        if self.spec.l2 == 0:
            return None
        ws = [w for layer in self.l2_layers() for w in layer.regularized()]
        return F.l2_penalty(ws, self.spec.l2)

    def forward(self, x, train: bool = False, rng=None) -> Tensor:
        raise NotImplementedError

    def predict(self, x, batch: int = 1024) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate([self.forward(x[i:i + batch]).data for i in range(0, len(x), batch)], axis=0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params().items()}

    def load_state_dict(self, state: dict) -> None:
        for k, p in self.params().items():
            if state[k].shape != p.data.shape:
                raise ConfigError(f"checkpoint shape mismatch for {k}")
            p.data[...] = state[k]


class MLP(Model):
    kind = "mlp"

    def __init__(self, spec: ArchSpec):
        super().__init__(spec)
        rng = np.random.default_rng(spec.seed)
        self.widths = mlp_widths(spec.H, spec.k)
        acts = ["relu"] * (len(self.widths) - 2) + ["identity"]
        self.layers = [
            Dense(a, b, act, rng, name=f"dense{i}")
            for i, (a, b, act) in enumerate(zip(self.widths[:-1], self.widths[1:], acts))
        ]

    def l2_layers(self):
        return [self.layers[0]]

    def forward(self, x, train=False, rng=None):
        x = F.constant(np.asarray(x, dtype=np.float64)) if not isinstance(x, Tensor) else x
        h = x.reshape(x.shape[0], -1)
        h = self.layers[0](h)
        h = F.dropout(h, self.spec.dropout, train, rng)
        for layer in self.layers[1:]:
            h = layer(h)
        return h


class TDRN(Model):
    """Time-distributed recurrent network.

    ``scalar`` reading: per period an LSTM walks the k metrics as a length-k
    sequence and hands its final state to an LSTM over periods.
    ``vector`` reading: a dense layer shared across periods embeds each
    period's k-vector, then two stacked LSTMs run over periods.
    """

    kind = "tdrn"

    def __init__(self, spec: ArchSpec):
        super().__init__(spec)
        rng = np.random.default_rng(spec.seed)
        w = spec.tdrn_width
        if spec.tdrn_reading == "scalar":
            self.inner = LSTM(1, w, rng, name="lstm_topics")
            self.outer = [LSTM(w, spec.lstm_width, rng, name="lstm_periods")]
        else:
            self.inner = Dense(spec.k, w, "relu", rng, name="td_dense")
            self.outer = [LSTM(w, spec.lstm_width, rng, name="lstm_periods0"),
                          LSTM(spec.lstm_width, spec.lstm_width, rng, name="lstm_periods1")]
        self.head = Dense(spec.lstm_width, spec.k, "identity", rng, name="head")
        self.layers = [self.inner] + self.outer + [self.head]

    def l2_layers(self):
        return [self.inner]

    def forward(self, x, train=False, rng=None):
        x = F.constant(np.asarray(x, dtype=np.float64)) if not isinstance(x, Tensor) else x
        n, H, k = x.shape
        if self.spec.tdrn_reading == "scalar":
            states = self.inner(x.reshape(n * H, k, 1), last_only=True)  # [n*H, w]
        else:
            states = self.inner(x.reshape(n * H, k))
        h = F.dropout(states, self.spec.dropout, train, rng).reshape(n, H, -1)
        for i, layer in enumerate(self.outer):
            h = layer(h, last_only=i == len(self.outer) - 1)
        return self.head(h)


class SpatialStack:
    """Per-period conv or local stack over the topic grid, then two LSTMs and a head."""

    def __init__(self, spec: ArchSpec, local: bool, size: int, rng, prefix: str = ""):
        self.spec = spec
        self.local = local
        g = spec.grid
        rows, cols = g.rows, g.cols
        cin = 1
        self.convs = []
        for i in range(spec.conv_layers):
            f = min(size, rows, cols) if i else size
            name = f"{prefix}{'local' if local else 'conv'}{i}"
            if local:
                layer = Local2D(cin, spec.filters, (f, f), (rows, cols), rng, name=name)
            else:
                layer = Conv2D(cin, spec.filters, (f, f), rng, name=name)
            self.convs.append(layer)
            rows, cols, cin = rows - f + 1, cols - f + 1, spec.filters
        self.out_hw = (rows, cols)
        feat = spec.filters * rows * cols
        self.lstm1 = LSTM(feat, spec.lstm_width, rng, name=f"{prefix}lstm0")
        self.lstm2 = LSTM(spec.lstm_width, spec.lstm_width, rng, name=f"{prefix}lstm1")
        self.head = Dense(spec.lstm_width, spec.k, "identity", rng, name=f"{prefix}head")
        self.layers = self.convs + [self.lstm1, self.lstm2, self.head]

    def __call__(self, images: Tensor, n: int, H: int, train: bool, rng) -> Tensor:
        h = self.convs[0](images)
        h = F.dropout(h, self.spec.dropout, train, rng)
        for layer in self.convs[1:]:
            h = layer(h)
        h = h.reshape(n, H, -1)
        h = self.lstm1(h)
        h = self.lstm2(h, last_only=True)
        return self.head(h)


class _SpatialModel(Model):
    local = False

    def _images(self, x) -> tuple[Tensor, int, int]:
        x = F.constant(np.asarray(x, dtype=np.float64)) if not isinstance(x, Tensor) else x
        n, H, k = x.shape
        g = self.spec.grid
        cells = F.take(x, g.inverse_index, axis=-1)  # cell-ordered metrics
        return cells.reshape(n * H, 1, g.rows, g.cols), n, H


class LRCN(_SpatialModel):
    kind = "lrcn"

    def __init__(self, spec: ArchSpec):
        super().__init__(spec)
        rng = np.random.default_rng(spec.seed)
        self.stack = SpatialStack(spec, self.local, spec.filter_size, rng)
        self.layers = self.stack.layers

    def l2_layers(self):
        return [self.stack.convs[0]]

    def forward(self, x, train=False, rng=None):
        images, n, H = self._images(x)
        return self.stack(images, n, H, train, rng)


class SCCN(LRCN):
    kind = "sccn"
    local = True


class MultiRes(_SpatialModel):
    kind = "lrcnm"

    def __init__(self, spec: ArchSpec, sizes=MULTIRES_SIZES):
        super().__init__(spec)
        rng = np.random.default_rng(spec.seed)
        self.subsystems = [SpatialStack(spec, self.local, f, rng, prefix=f"r{f}/") for f in sizes]
        self.fuse = Dense(spec.k * len(self.subsystems), spec.k, "identity", rng, name="fuse")
        self.layers = [layer for s in self.subsystems for layer in s.layers] + [self.fuse]

    def l2_layers(self):
        return [s.convs[0] for s in self.subsystems]

    def forward(self, x, train=False, rng=None):
        images, n, H = self._images(x)
        outs = [s(images, n, H, train, rng) for s in self.subsystems]
        return self.fuse(F.concat(outs, axis=-1))


class MultiResLocal(MultiRes):
    kind = "sccnm"
    local = True


_BUILDERS = {"mlp": MLP, "tdrn": TDRN, "lrcn": LRCN, "sccn": SCCN, "lrcnm": MultiRes, "sccnm": MultiResLocal}


def build(spec: ArchSpec) -> Model:
    spec.validate()
    return _BUILDERS[spec.kind](spec)


def _kind(spec: ArchSpec, kinds) -> ArchSpec:
    if spec.kind not in kinds:
        raise ConfigError(f"spec kind {spec.kind!r} is not one of {kinds}")
    return spec


def build_mlp(spec: ArchSpec) -> MLP:
    return build(_kind(spec, ("mlp",)))


def build_tdrn(spec: ArchSpec) -> TDRN:
    return build(_kind(spec, ("tdrn",)))


def build_lrcn(spec: ArchSpec) -> LRCN:
    return build(_kind(spec, ("lrcn",)))


def build_sccn(spec: ArchSpec) -> SCCN:
    return build(_kind(spec, ("sccn",)))


def build_multires(spec: ArchSpec) -> MultiRes:
    return build(_kind(spec, ("lrcnm", "sccnm")))


def twin(spec: ArchSpec, kind: str) -> ArchSpec:
    return replace(spec, kind=kind)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    arch: str
    losses: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    seconds: list[float] = field(default_factory=list)
    eval_seconds: list[float] = field(default_factory=list)
    param_count: int = 0
    state: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def epochs(self) -> int:
        return len(self.seconds)

    def series(self, split: str, loss: str) -> list[float]:
        return self.losses[(split, loss)]

    def rows(self):
        for e in range(self.epochs):
            for split in SPLITS:
                for name in evaluation.LOSS_NAMES:
                    yield e + 1, split, name, self.losses[(split, name)][e]

    def to_csv(self, timings: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "split", "loss", "value"] + (["seconds"] if timings else []))
        for epoch, split, name, value in self.rows():
            row = [epoch, split, name, repr(value)]
            if timings:
                row.append(f"{self.seconds[epoch - 1]:.6f}")
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, arch: str, text: str) -> "TrainReport":
        rep = cls(arch)
        secs = {}
        for rec in csv.DictReader(io.StringIO(text)):
            e = int(rec["epoch"])
            rep.losses.setdefault((rec["split"], rec["loss"]), []).append(float(rec["value"]))
            if "seconds" in rec:
                secs[e] = float(rec["seconds"])
        rep.seconds = [secs[e] for e in sorted(secs)] if secs else [0.0] * len(next(iter(rep.losses.values()), []))
        return rep

    def save_checkpoint(self, path) -> None:
        save_tensors(path, self.state)


def evaluate(model: Model, samples: SampleSet) -> dict[str, float]:
    pred = model.predict(samples.history)
    return {name: fn(pred, samples.target).value for name, fn in evaluation.LOSS_FUNCTIONS.items()}


def train(
    model: Model,
    train_set: SampleSet,
    val_set: SampleSet,
    test_set: SampleSet,
    epochs: int = 30,
    loss: str = "rle",
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int | None = None,
) -> TrainReport:
    """Mini-batch Adam on the chosen loss plus the model's L2 term.

    After every epoch all three losses are evaluated on all three splits.
    Training time per epoch excludes that evaluation.
    """
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if loss not in F.LOSSES:
        raise ConfigError(f"unknown loss {loss!r}; expected one of {tuple(F.LOSSES)}")
    check_temporal_split(train_set, val_set, test_set)
    kernels.warm_up()
    rng = np.random.default_rng(model.spec.seed if seed is None else seed)
    params = model.params()
    opt = Adam(params, lr)
    loss_fn = F.LOSSES[loss]
    rep = TrainReport(model.kind, param_count=model.param_count)
    X, Y = train_set.history, train_set.target
    splits = {"train": train_set, "val": val_set, "test": test_set}
    for epoch in range(epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            idx = order[start:start + batch_size]
            try:
                out = model.forward(X[idx], train=True, rng=rng)
                total = loss_fn(out, Y[idx])
                pen = model.penalty()
                if pen is not None:
                    total = total + pen
                backward(total)
                opt.step()
            except NonFiniteError as exc:
                raise TrainingError(
                    f"{model.kind}: non-finite values at epoch {epoch + 1}; try a lower learning rate (lr={lr})"
                ) from exc
        rep.seconds.append(time.perf_counter() - t0)
        t1 = time.perf_counter()
        for split, s in splits.items():
            for name, value in evaluate(model, s).items():
                rep.losses.setdefault((split, name), []).append(value)
        rep.eval_seconds.append(time.perf_counter() - t1)
        log.info("%s epoch %d: train %s=%.5f val %.5f test %.5f (%.1fs)", model.kind, epoch + 1, loss,
                 rep.losses[("train", loss)][-1], rep.losses[("val", loss)][-1], rep.losses[("test", loss)][-1],
                 rep.seconds[-1])
    rep.state = model.state_dict()
    return rep
