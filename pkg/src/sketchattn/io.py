"""Plain-text matrix files and report CSVs.

Matrix files hold one row per line, comma-separated, with an optional
``# rows cols`` first line. Floats are written with 17 significant digits
so a save/load round trip is bit-exact.
"""

import csv
import math

import numpy as np

CSV_HEADER = ("experiment", "n", "p", "d", "seed", "method", "kernel", "metric", "value")


class MatrixParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def fmt(x):
    return format(float(x), ".17g")


def load_matrix(path):
    header = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                if rows or header is not None:
                    raise MatrixParseError(path, lineno, "header must be the first line")
                parts = text[1:].split()
                if len(parts) != 2:
                    raise MatrixParseError(path, lineno, "header must be '# rows cols'")
                try:
                    header = (int(parts[0]), int(parts[1]))
                except ValueError:
                    raise MatrixParseError(path, lineno, f"bad header {text!r}") from None
                continue
            try:
                vals = [float(tok) for tok in text.split(",")]
            except ValueError as exc:
                raise MatrixParseError(path, lineno, str(exc)) from None
            if not all(math.isfinite(v) for v in vals):
                raise MatrixParseError(path, lineno, "non-finite entry")
            if rows and len(vals) != len(rows[0]):
                raise MatrixParseError(path, lineno,
                                       f"expected {len(rows[0])} entries, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise MatrixParseError(path, 1, "no matrix rows")
    m = np.array(rows, dtype=np.float64)
    if header is not None and header != m.shape:
        raise MatrixParseError(path, 1, f"header says {header} but data is {m.shape}")
    return m


def save_matrix(m, path, header=True):
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_csv(reports, fh):
    """Write reports to an open text stream, sorted by their cell coordinates."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(reports, key=lambda r: r.sort_key()):
        w.writerow([r.experiment, r.n, r.p, r.d, r.seed, r.method, r.kernel, r.metric, fmt(r.value)])


def emit_csv(reports, path):
    with open(path, "w", newline="") as fh:
        write_csv(reports, fh)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
