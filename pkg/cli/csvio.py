"""CSV ingestion and the canonical writer used for round trips."""
import csv
import io
import logging
import re
from pathlib import Path

import numpy as np

from estimation.data import Dataset, MultiIndexData, check_compatible
from estimation.exceptions import InputError, ParseError

logger = logging.getLogger(__name__)

_X_COLUMN = re.compile(r'^x(\d+)$')
_Z_COLUMN = re.compile(r'^z(\d+)$')
_V_COLUMN = re.compile(r'^v(\d+)_(\d+)$')


def format_value(value):
    """Integral floats without a decimal part, other floats by repr."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if np.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(value)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_text(path):
    """UTF-8 text of ``path``; undecodable bytes are a ParseError at their line."""
    raw = Path(path).read_bytes()
    try:
        return raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(f"invalid UTF-8 byte 0x{raw[e.start]:02x}", line=raw.count(b'\n', 0, e.start) + 1)


def _read_table(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    reader = csv.reader(io.StringIO(read_text(path), newline=''))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file", line=1)
    except csv.Error as e:
        raise ParseError(f"malformed CSV: {e}", line=1)
    body = []
    line = 1
    try:
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            values = []
            for name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric value {cell.strip()!r} in column '{name}'", line=line)
                if not np.isfinite(value):
                    raise ParseError(f"non-finite value {cell.strip()!r} in column '{name}'", line=line)
                values.append(value)
            body.append(values)
    except csv.Error as e:
        raise ParseError(f"malformed CSV: {e}", line=line + 1)
    if not body:
        raise ParseError("no data rows", line=2)
    return header, np.array(body)


def _indexed_columns(header, pattern):
    found = {}
    for k, name in enumerate(header):
        m = pattern.match(name)
        if m:
            found[tuple(int(g) for g in m.groups())] = k
    return found


def _ordered(found, count, what):
    expected = list(range(1, count + 1))
    if sorted(key[0] for key in found) != expected:
        raise ParseError(f"{what} columns must be numbered 1..{count}", line=1)
    return [found[(j,)] for j in expected]


def load_csv(path, model=None):
    """
    Read a dataset. Single-index files carry ``y`` (or ``y1,y2`` for panel
    losses) and ``x1..xp``; multi-index files carry ``y``, ``z1..zp1`` and
    ``v<l>_<j>`` for alternative l and regressor j. When ``model`` is given,
    outcomes are checked against its support.
    """
    header, body = _read_table(path)
    known = {'y', 'y1', 'y2'}
    x_cols = _indexed_columns(header, _X_COLUMN)
    z_cols = _indexed_columns(header, _Z_COLUMN)
    v_cols = _indexed_columns(header, _V_COLUMN)
    stray = [h for k, h in enumerate(header)
             if h not in known and k not in x_cols.values() and k not in z_cols.values() and k not in v_cols.values()]
    if stray:
        raise ParseError(f"unrecognized column(s): {', '.join(stray)}", line=1)

    if 'y1' in header or 'y2' in header:
        if 'y1' not in header or 'y2' not in header or 'y' in header:
            raise ParseError("panel outcomes need both y1 and y2 (and no y column)", line=1)
        Y = body[:, [header.index('y1'), header.index('y2')]]
    elif 'y' in header:
        Y = body[:, header.index('y')]
    else:
        raise ParseError("header must name the outcome column y (or y1, y2)", line=1)

    if z_cols or v_cols:
        if x_cols:
            raise ParseError("x columns cannot be mixed with z/v columns", line=1)
        data = _multi_index(body, Y, z_cols, v_cols, model)
    else:
        if not x_cols:
            raise ParseError("no regressor columns x1..xp", line=1)
        X = body[:, _ordered(x_cols, len(x_cols), 'x')]
        data = Dataset(X=X, Y=Y)

    if model is not None:
        check_compatible(data, model)
    logger.info(f"Loaded {path}: n={data.n}, dim={data.dim}")
    return data


def _multi_index(body, Y, z_cols, v_cols, model):
    if model is None or not model.multi_index:
        raise InputError("z/v columns need a multi-index loss (mnl, clogit or mixed_logit)")
    Z = body[:, _ordered(z_cols, len(z_cols), 'z')] if z_cols else np.zeros((body.shape[0], 0))
    if v_cols:
        L2 = max(l for l, _ in v_cols)
        p2 = max(j for _, j in v_cols)
        if len(v_cols) != L2 * p2:
            raise ParseError(f"v columns must form a complete grid v1_1..v{L2}_{p2}", line=1)
        V = np.empty((body.shape[0], L2, p2))
        for (l, j), k in v_cols.items():
            V[:, l - 1, j - 1] = body[:, k]
    else:
        V = np.zeros((body.shape[0], 0, 0))
    L1 = 0 if model.kind == 'clogit' else model.J
    return MultiIndexData(Z=Z, V=V, Y=Y, L1=L1, L2=V.shape[1])


def dataset_columns(data):
    """(header, matrix) in canonical column order."""
    if isinstance(data, MultiIndexData):
        header = ['y'] + [f"z{j}" for j in range(1, data.p1 + 1)]
        header += [f"v{l}_{j}" for l in range(1, data.L2 + 1) for j in range(1, data.p2 + 1)]
        V = data.V.reshape(data.n, data.L2 * data.p2)
        return header, np.column_stack([data.Y, data.Z, V])
    Y = data.Y.reshape(data.n, -1)
    y_names = ['y'] if Y.shape[1] == 1 else ['y1', 'y2']
    header = y_names + [f"x{j}" for j in range(1, data.p + 1)]
    return header, np.column_stack([Y, data.X])


def write_csv(data, path):
    header, matrix = dataset_columns(data)
    return write_rows(path, header, matrix.tolist())
