"""Cohort CSV ingestion and deterministic table emission.

Cohort files carry a header row `time,event,arm,x1..xp`; row order is the
subject index.  All emitted tables are UTF-8 with \\n line endings, floats in
shortest exact round-trip form, and the literal string NA for missing cells,
so repeated runs with the same configuration are byte-identical and parse
back losslessly.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from survace.survival import Cohort


class CohortFormatError(ValueError):
    """Malformed cohort file; message names the offending row/column."""


def _parse_cell(raw, row, col):
    try:
        return float(raw)
    except ValueError:
        raise CohortFormatError(
            f"row {row}, column {col!r}: non-numeric value {raw!r}") from None


def load_cohort(path) -> Cohort:
    """Read a cohort CSV with columns time, event, arm, x1..xp."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortFormatError("empty file: missing header row") from None
        header = [h.strip() for h in header]
        required = ["time", "event", "arm"]
        for col in required:
            if col not in header:
                raise CohortFormatError(f"missing required column {col!r}")
        x_cols = [h for h in header if h not in required]
        expected_x = [f"x{j + 1}" for j in range(len(x_cols))]
        if x_cols != expected_x:
            raise CohortFormatError(
                f"covariate columns must be x1..x{len(x_cols)} in order, got {x_cols}")
        pos = {c: header.index(c) for c in header}

        times, events, arms, xs = [], [], [], []
        for r, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise CohortFormatError(
                    f"row {r}: expected {len(header)} cells, got {len(rec)}")
            t = _parse_cell(rec[pos["time"]], r, "time")
            if not math.isfinite(t) or t < 0:
                raise CohortFormatError(f"row {r}, column 'time': negative or non-finite {t!r}")
            ev = _parse_cell(rec[pos["event"]], r, "event")
            if ev not in (0.0, 1.0):
                raise CohortFormatError(f"row {r}, column 'event': must be 0 or 1, got {rec[pos['event']]!r}")
            arm = _parse_cell(rec[pos["arm"]], r, "arm")
            if arm not in (0.0, 1.0):
                raise CohortFormatError(f"row {r}, column 'arm': must be 0 or 1, got {rec[pos['arm']]!r}")
            times.append(t)
            events.append(int(ev))
            arms.append(int(arm))
            xs.append([_parse_cell(rec[pos[c]], r, c) for c in x_cols])
    if not times:
        raise CohortFormatError("no data rows")
    x = np.asarray(xs, dtype=float) if x_cols else np.zeros((len(times), 0))
    cohort = Cohort(times, events, arms, x)
    if cohort.n1 == 0 or cohort.n0 == 0:
        raise CohortFormatError("one arm has zero subjects")
    return cohort


def save_cohort(cohort: Cohort, path):
    header = ["time", "event", "arm"] + [f"x{j + 1}" for j in range(cohort.p)]
    rows = []
    for i in range(cohort.n):
        rows.append([cohort.y[i], int(cohort.delta[i]), int(cohort.z[i]),
                     *cohort.x[i]])
    write_table(path, header, rows)


def fmt_cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "NA"
    return repr(v)


def write_table(path, header, rows):
    """Write a CSV deterministically (UTF-8, \\n endings, %.12g floats)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_cell(c) for c in row) + "\n")
