"""Reading long-format gap tables and writing result tables.

Every written file starts with a header naming the package version and
seed.  Floats are written with ``repr`` so they parse back exactly.
"""

import csv
import json
import math
from pathlib import Path

from ._version import __version__
from .exceptions import SampleError
from .sample import Sample, build_sample

DEFAULT_COLUMNS = {"id": "subject_id", "stage": "stage", "gap": "gap_time", "cause": "cause"}


def header_line(seed):
    return f"# gapcr {__version__} seed={seed}"


def _data_lines(handle):
    for line in handle:
        if line.strip() and not line.lstrip().startswith("#"):
            yield line


def _read_dicts(path, delimiter):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(_data_lines(fh), delimiter=delimiter)
            rows = list(reader)
            fields = reader.fieldnames or []
    except OSError as exc:
        raise SampleError(f"cannot read {path}: {exc.strerror}") from None
    if not fields and not rows:
        raise SampleError("no subjects parsed")
    return fields, rows


def _require(fields, names, path):
    missing = [c for c in names if c not in fields]
    if missing:
        raise SampleError(f"{path}: missing column(s) {', '.join(missing)}")


def read_long_table(path, columns=None, censor_col=None, censor_file=None, group_col=None, delimiter=","):
    """Parse a long-format table into rows, censor times and group labels.

    Parameters
    ----------
    path : path-like
        One row per subject and stage.
    columns : dict, optional
        Overrides for the ``id``, ``stage``, ``gap`` and ``cause`` column names.
    censor_col : str, optional
        Column holding each subject's censoring time (repeated on its rows).
    censor_file : path-like, optional
        Separate ``subject_id, censor_time`` table.
    group_col : str, optional
        Column holding a group label, constant within subject.

    Returns
    -------
    rows : list of (subject_id, stage, gap_time, cause)
    censor : dict
    groups : dict or None
    """
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    fields, records = _read_dicts(path, delimiter)
    needed = [cols["id"], cols["stage"], cols["gap"], cols["cause"]]
    needed += [c for c in (censor_col, group_col) if c]
    _require(fields, needed, path)
    rows, censor, groups = [], {}, {} if group_col else None
    for lineno, rec in enumerate(records, start=2):
        sid = rec[cols["id"]]
        try:
            stage = int(rec[cols["stage"]])
            gap = float(rec[cols["gap"]])
            cause = int(rec[cols["cause"]])
        except (TypeError, ValueError):
            raise SampleError(f"{path}, row {lineno}: cannot parse stage/gap/cause {rec!r}", sid) from None
        rows.append((sid, stage, gap, cause))
        if censor_col:
            try:
                c = float(rec[censor_col])
            except (TypeError, ValueError):
                raise SampleError(f"{path}, row {lineno}: bad censor time {rec[censor_col]!r}", sid) from None
            if censor.setdefault(sid, c) != c:
                raise SampleError(f"{path}, row {lineno}: censor time differs between rows", sid)
        if group_col:
            g = rec[group_col]
            if groups.setdefault(sid, g) != g:
                raise SampleError(f"{path}, row {lineno}: group label differs between rows", sid)
    if censor_file:
        cfields, crecs = _read_dicts(censor_file, delimiter)
        id_col = cols["id"] if cols["id"] in cfields else "subject_id"
        _require(cfields, [id_col, "censor_time"], censor_file)
        for lineno, rec in enumerate(crecs, start=2):
            try:
                censor[rec[id_col]] = float(rec["censor_time"])
            except (TypeError, ValueError):
                raise SampleError(f"{censor_file}, row {lineno}: bad censor time", rec[id_col]) from None
    return rows, censor, groups


def read_sample(path, num_causes=2, **kwargs):
    """Read a long-format table straight into a :class:`Sample`."""
    rows, censor, groups = read_long_table(path, **kwargs)
    if not rows and not censor:
        raise SampleError("no subjects parsed")
    return build_sample(rows, censor, num_causes=num_causes)


def sample_rows(sample: Sample):
    """Long-format rows of `sample`, including terminal censored records."""
    out = []
    for s in sample.subjects:
        for r in s.records:
            out.append(
                {
                    "subject_id": s.subject_id,
                    "stage": r.stage,
                    "gap_time": r.gap_time,
                    "cause": r.cause,
                    "censor_time": s.censor_time,
                }
            )
    return out


def write_sample(sample, path, seed=None):
    """Write `sample` in the long format read by :func:`read_sample` with ``censor_col='censor_time'``."""
    write_table(path, sample_rows(sample), seed=seed)


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_table(path, rows, fmt="csv", seed=None, columns=None):
    """Write a list of dicts as CSV or JSON, preceded by the version/seed header."""
    path = Path(path)
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(header_line(seed) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c)) for c in columns])
    elif fmt == "json":
        doc = {
            "generator": f"gapcr {__version__}",
            "seed": seed,
            "columns": columns,
            "rows": [{c: _json_value(row.get(c)) for c in columns} for row in rows],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def read_table(path):
    """Read a CSV written by :func:`write_table` back into dicts of strings."""
    _, rows = _read_dicts(path, ",")
    return rows
