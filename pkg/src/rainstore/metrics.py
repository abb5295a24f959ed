"""Verification metrics: latitude-weighted RMSE and per-class RMSE."""

from dataclasses import dataclass

import numpy as np

from .grid import latitude_weights
from .sampler import ClassBinning, class_indices


class MetricsError(ValueError):
    pass


def lw_rmse(preds, targets, grid):
    """Mean over forecast times of the latitude-weighted spatial RMSE.

    Square root taken per time step, then averaged (the aggregation order
    matters; mean-then-sqrt would differ)."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.ndim == 2:
        preds = preds[None]
        targets = np.asarray(targets)[None] if targets.ndim == 2 else targets
    if preds.shape != targets.shape:
        raise MetricsError("pred/target shapes differ: %s vs %s"
                           % (preds.shape, targets.shape))
    if preds.shape[0] == 0:
        raise MetricsError("empty time set")
    if not (np.isfinite(preds).all() and np.isfinite(targets).all()):
        raise MetricsError("NaN present; mask before calling lw_rmse")
    w = latitude_weights(grid)[None, :, None]
    sq = w * (preds - targets) ** 2
    per_time = np.sqrt(sq.mean(axis=(1, 2)))
    return float(per_time.mean())


@dataclass
class ClassRmseReport:
    per_class: dict  # label -> RMSE, absent classes omitted
    mean: float
    macro: float
    counts: dict

    def to_json(self):
        return {"per_class": self.per_class, "mean": self.mean,
                "macro": self.macro, "counts": self.counts}

    def to_text(self):
        labels = list(self.counts.keys())
        letters = {"slight": "L", "moderate": "M", "heavy": "H", "violent": "V"}
        cols = [letters.get(lab, lab[0].upper()) for lab in labels]
        cols += ["Mean", "Macro"]
        vals = [self.per_class.get(lab) for lab in labels] + [self.mean, self.macro]
        cells = ["%.4f" % v if v is not None else "-" for v in vals]
        width = max(len(c) for c in cols + cells) + 2
        head = "".join(c.rjust(width) for c in cols)
        row = "".join(c.rjust(width) for c in cells)
        return head + "\n" + row


def class_rmse(preds, targets, binning=None):
    """RMSE per precipitation class of the TARGET value, plus overall mean
    RMSE and the macro mean over the classes that are present. Unweighted
    (same-timestep pixel evaluation)."""
    binning = binning or ClassBinning()
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if preds.shape != targets.shape:
        raise MetricsError("pred/target shapes differ")
    if not np.isfinite(targets).all() or (targets < 0).any():
        raise MetricsError("targets must be finite and >= 0")
    cls = class_indices(targets, binning)
    sq = (preds - targets) ** 2
    per_class = {}
    counts = {}
    for idx, label in enumerate(binning.labels):
        mask = cls == idx
        n = int(mask.sum())
        counts[label] = n
        if n:
            per_class[label] = float(np.sqrt(sq[mask].mean()))
    mean = float(np.sqrt(sq.mean())) if len(sq) else 0.0
    macro = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return ClassRmseReport(per_class=per_class, mean=mean, macro=macro,
                           counts=counts)
