"""Standard monocular depth-evaluation metrics and split aggregation."""
import csv
import io
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ContractError, DomainError

CSV_COLUMNS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    log10: float = float("nan")

    def row(self, with_log10=False):
        cols = CSV_COLUMNS + (("log10",) if with_log10 else ())
        return [getattr(self, c) for c in cols]


def _as_array(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def evaluate_depth(pred, gt, cap=80.0, median_scale=True, mask=None, min_depth=0.0):
    """Metrics over pixels with ``min_depth < gt <= cap`` (and ``mask``).

    Relative errors divide by ground truth. With ``median_scale`` the
    prediction is first multiplied by median(gt) / median(pred).
    """
    pred, gt = _as_array(pred), _as_array(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    valid = (gt > min_depth) & (gt <= cap) & np.isfinite(gt)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    if not valid.any():
        raise DomainError("no valid pixels")
    p, g = pred[valid], gt[valid]
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    if np.any(p <= 0):
        raise DomainError("non-positive predicted depth at a valid pixel")
    ratio = np.maximum(g / p, p / g)
    diff = p - g
    return MetricReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        n_pixels=int(valid.sum()),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
    )


def mean_report(reports):
    """Unweighted per-field mean of several reports (n_pixels is summed)."""
    reports = list(reports)
    if not reports:
        raise ContractError("cannot average zero reports")
    vals = {}
    for f in fields(MetricReport):
        col = [getattr(r, f.name) for r in reports]
        vals[f.name] = int(sum(col)) if f.name == "n_pixels" else float(np.mean(col))
    return MetricReport(**vals)


def evaluate_split(pairs, split_labels, cap=80.0, median_scale=True):
    """Per-split mean of per-image reports.

    ``pairs`` is a sequence of ``(pred, gt)``; ``split_labels`` names the
    split of each pair (e.g. "motion" / "static"). Returns a dict keyed by
    split; a requested split with no pairs is omitted with a warning.
    """
    pairs, labels = list(pairs), list(split_labels)
    if len(pairs) != len(labels):
        raise ContractError(f"{len(pairs)} pairs but {len(labels)} labels")
    grouped = {}
    for (pred, gt), label in zip(pairs, labels):
        grouped.setdefault(label, []).append(evaluate_depth(pred, gt, cap, median_scale))
    for expected in ("motion", "static"):
        if expected not in grouped:
            warnings.warn(f"split {expected!r} is empty; omitted", stacklevel=2)
    return {label: mean_report(reps) for label, reps in grouped.items()}


def reports_to_csv(reports, with_log10=False, label_column=None):
    """CSV text with the fixed metric header; ``reports`` is a list or dict."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(CSV_COLUMNS) + (["log10"] if with_log10 else [])
    items = reports.items() if isinstance(reports, dict) else ((None, r) for r in reports)
    if label_column:
        header = [label_column] + header
    w.writerow(header)
    for label, rep in items:
        row = [repr(v) for v in rep.row(with_log10)]
        w.writerow(([label] if label_column else []) + row)
    return buf.getvalue()


def report_dict(report):
    return asdict(report)
