"""Parameter-holding layers built on :mod:`topicast.nn.functional`."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor, parameter


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Holds named parameters; ``params()`` returns them in a stable order."""

    def __init__(self, name: str):
        self.name = name
        self._params: dict[str, Tensor] = {}

    def add_param(self, key: str, data) -> Tensor:
        p = parameter(data, name=f"{self.name}.{key}")
        self._params[key] = p
        return p

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.{k}": p for k, p in self._params.items()}

    def regularized(self) -> list[Tensor]:
        """Kernel weights an L2 penalty applies to (biases excluded)."""
        return [p for k, p in self._params.items() if k in ("W", "Wx")]

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self._params.values())


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str, rng, name: str = "dense"):
        super().__init__(name)
        self.activation = activation
        self.W = self.add_param("W", glorot(rng, (n_out, n_in), n_in, n_out))
        self.b = self.add_param("b", np.zeros(n_out))

    def __call__(self, x) -> Tensor:
        return F.dense(x, self.W, self.b, self.activation)


class LSTM(Layer):
    """LSTM over [B, T, n_in]; ``last_only`` returns just the final state."""

    def __init__(self, n_in: int, n_h: int, rng, name: str = "lstm", forget_bias: float = 1.0):
        super().__init__(name)
        self.n_h = n_h
        self.Wx = self.add_param("Wx", glorot(rng, (n_in, 4 * n_h), n_in, 4 * n_h))
        self.Wh = self.add_param("Wh", glorot(rng, (n_h, 4 * n_h), n_h, 4 * n_h))
        b = np.zeros(4 * n_h)
        b[n_h:2 * n_h] = forget_bias
        self.b = self.add_param("b", b)

    def __call__(self, xs, last_only: bool = False) -> Tensor:
        hs = F.lstm(xs, self.Wx, self.Wh, self.b)
        return hs[:, -1] if last_only else hs


class Conv2D(Layer):
    def __init__(self, cin: int, cout: int, size: tuple[int, int], rng, name: str = "conv"):
        super().__init__(name)
        fr, fc = size
        self.W = self.add_param("W", glorot(rng, (cout, cin, fr, fc), cin * fr * fc, cout * fr * fc))
        self.b = self.add_param("b", np.zeros(cout))

    def __call__(self, x) -> Tensor:
        return F.relu(F.conv2d(x, self.W, self.b))


class Local2D(Layer):
    def __init__(self, cin: int, cout: int, size: tuple[int, int], in_hw: tuple[int, int], rng, name: str = "local"):
        super().__init__(name)
        fr, fc = size
        npos = (in_hw[0] - fr + 1) * (in_hw[1] - fc + 1)
        self.W = self.add_param("W", glorot(rng, (npos, cout, cin, fr, fc), cin * fr * fc, cout * fr * fc))
        self.b = self.add_param("b", np.zeros((npos, cout)))

    def __call__(self, x) -> Tensor:
        return F.relu(F.local2d(x, self.W, self.b))

    def tie_to(self, conv: Conv2D) -> None:
        """Copy one conv bank into every position (the shared-weight special case)."""
        npos = self.W.shape[0]
        self.W.data[...] = np.broadcast_to(conv.W.data, (npos,) + conv.W.shape)
        self.b.data[...] = np.broadcast_to(conv.b.data, (npos, conv.b.shape[0]))


# ---------------------------------------------------------------------------
# array-in, array-out forms of the single-layer operations
# ---------------------------------------------------------------------------


def dense_forward(x, W, b, activation: str = "identity") -> np.ndarray:
    return F.dense(Tensor(x), Tensor(W), Tensor(b), activation).data


def lstm_step_forward(x, h, c, Wx, Wh, b) -> tuple[np.ndarray, np.ndarray]:
    x, h, c = (np.atleast_2d(a) for a in (x, h, c))
    h2, c2 = F.lstm_step(Tensor(x), Tensor(h), Tensor(c), Tensor(Wx), Tensor(Wh), Tensor(b))
    return h2.data, c2.data


def conv2d_forward(x, W, b=None) -> np.ndarray:
    b = np.zeros(W.shape[0]) if b is None else b
    single = np.ndim(x) == 3
    out = F.conv2d(Tensor(x[None] if single else x), Tensor(W), Tensor(b)).data
    return out[0] if single else out


def local2d_forward(x, W, b=None) -> np.ndarray:
    b = np.zeros(W.shape[:2]) if b is None else b
    single = np.ndim(x) == 3
    out = F.local2d(Tensor(x[None] if single else x), Tensor(W), Tensor(b)).data
    return out[0] if single else out


def conv2d_param_count(cin, cout, fr, fc, bias=True) -> int:
    return cout * cin * fr * fc + (cout if bias else 0)


def local2d_param_count(cin, cout, fr, fc, rows, cols, bias=True) -> int:
    npos = (rows - fr + 1) * (cols - fc + 1)
    return npos * cout * cin * fr * fc + (npos * cout if bias else 0)
