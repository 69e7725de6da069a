"""CSV metric reports: one row per utterance, one column per metric."""
import csv
import math

from .registry import MetricVector


def _fmt(v):
    return "" if v is None else repr(float(v))


def report_columns(registry, names=None):
    """Metric columns in registry order, restricted to ``names`` when given."""
    if names is None:
        return registry.names
    wanted = set(names)
    return [n for n in registry.names if n in wanted]


def write_metric_csv(path, rows, registry, names=None, extra=()):
    """Write ``rows`` of ``(utt_id, MetricVector, extra_values)``.

    Column order is ``utt_id``, the ``extra`` columns, then metrics in
    registry order. Missing values are written as empty cells.
    """
    cols = report_columns(registry, names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utt_id", *extra, *cols])
        for utt, vec, ext in rows:
            w.writerow([utt, *ext, *(_fmt(vec.get(c)) for c in cols)])
    return cols


def read_metric_csv(path, registry, extra=(), validate=True):
    """Inverse of :func:`write_metric_csv`; returns ``{utt_id: (MetricVector, extras)}``."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        metric_cols = [c for c in reader.fieldnames if c in registry]
        for row in reader:
            vals = {c: float(row[c]) for c in metric_cols if row[c] not in ("", None)}
            vals = {k: v for k, v in vals.items() if not math.isnan(v)}
            out[row["utt_id"]] = (MetricVector(registry, vals, validate=validate),
                                  {e: row.get(e) for e in extra})
    return out
