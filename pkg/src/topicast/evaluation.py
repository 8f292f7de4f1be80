"""Target-weighted losses, best-epoch averaging, gains and loss tables."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

LOSS_NAMES = ("mse", "rle", "r2le")
TABLE_COLUMNS = ("{L}", "delta_{L}", "{L}_5", "delta_{L}_5", "{L}_1")


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class LossValue:
    name: str
    value: float
    count: int

    def __float__(self):
        return self.value


def _pooled(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    v = np.asarray(target, dtype=np.float64).ravel()
    if p.shape != v.shape:
        raise ContractError(f"prediction count {p.size} != target count {v.size}")
    if (v < 0).any():
        raise ContractError("targets must be non-negative")
    return p, v


def mse(pred, target) -> LossValue:
    p, v = _pooled(pred, target)
    return LossValue("mse", float(np.mean((p - v) ** 2)) if v.size else 0.0, v.size)


def rle(pred, target) -> LossValue:
    """Squared error weighted by the true value, averaged over all values."""
    p, v = _pooled(pred, target)
    return LossValue("rle", float(np.mean(v * (p - v) ** 2)) if v.size else 0.0, v.size)


def r2le(pred, target) -> LossValue:
    """Squared error weighted by the squared true value."""
    p, v = _pooled(pred, target)
    return LossValue("r2le", float(np.mean(v * v * (p - v) ** 2)) if v.size else 0.0, v.size)


LOSS_FUNCTIONS = {"mse": mse, "rle": rle, "r2le": r2le}


def best_epoch_average(val: Sequence[float], test: Sequence[float], m: int) -> float:
    """Mean test loss over the ``m`` epochs with lowest validation loss.

    Ties go to the earlier epoch.
    """
    val = np.asarray(val, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if val.shape != test.shape:
        raise ContractError("validation and test series differ in length")
    if m < 1 or m > val.size:
        raise ValueError(f"need 1 <= m <= {val.size} epochs, got m={m}")
    chosen = np.argsort(val, kind="stable")[:m]
    return float(np.mean(test[chosen]))


def gain(baseline: float, value: float) -> float:
    """Percent improvement of ``value`` over ``baseline``."""
    if not baseline > 0:
        raise ContractError("baseline loss must be positive")
    return 100.0 * (baseline - value) / baseline


@dataclass
class TableRow:
    arch: str
    final: float
    best5: float
    best1: float


def summarize(report, loss: str, m_best: int = 5) -> TableRow:
    """Table row from a train report: final test loss and best-m averages."""
    val = report.series("val", loss)
    test = report.series("test", loss)
    m5 = min(m_best, len(val))
    return TableRow(report.arch, test[-1], best_epoch_average(val, test, m5), best_epoch_average(val, test, 1))


def loss_table(rows: Sequence[TableRow] | Mapping[str, TableRow], loss: str = "rle", baseline: str = "mlp") -> list[list]:
    """Rows of [arch, L, dL, L_5, dL_5, L_1]; gains are against ``baseline``.

    Gains are left as ``None`` when the baseline row is absent.
    """
    if isinstance(rows, Mapping):
        rows = list(rows.values())
    if not rows:
        raise ValueError("loss_table needs at least one row")
    base = next((r for r in rows if r.arch == baseline), None)
    if base is None:
        log.warning("no %s row; gain columns left empty", baseline)
    out = []
    for r in rows:
        if base is None or r.arch == baseline:
            d, d5 = None, None
        else:
            d, d5 = gain(base.final, r.final), gain(base.best5, r.best5)
        out.append([r.arch, r.final, d, r.best5, d5, r.best1])
    return out


def table_header(loss: str = "rle") -> list[str]:
    return ["architecture"] + [c.format(L=loss) for c in TABLE_COLUMNS]


def _fmt(x, pct=False) -> str:
    if x is None:
        return ""
    return f"{x:.2f}" if pct else f"{x:.6g}"


def table_csv(table: list[list], loss: str = "rle") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table_header(loss))
    for arch, f, d, b5, d5, b1 in table:
        w.writerow([arch, repr(float(f)), "" if d is None else f"{d:.4f}", repr(float(b5)),
                    "" if d5 is None else f"{d5:.4f}", repr(float(b1))])
    return buf.getvalue()


def table_text(table: list[list], loss: str = "rle") -> str:
    head = table_header(loss)
    body = [[arch, _fmt(f), _fmt(d, True) + ("%" if d is not None else ""), _fmt(b5),
             _fmt(d5, True) + ("%" if d5 is not None else ""), _fmt(b1)]
            for arch, f, d, b5, d5, b1 in table]
    widths = [max(len(str(r[i])) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(str(c).rjust(wd) for c, wd in zip(r, widths)) for r in [head] + body]
    return "\n".join(lines) + "\n"


def curves_csv(report) -> str:
    """Learning curves as (epoch, split, metric, value) rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "split", "metric", "value"])
    for epoch, split, name, value in report.rows():
        w.writerow([epoch, split, name, repr(value)])
    return buf.getvalue()
