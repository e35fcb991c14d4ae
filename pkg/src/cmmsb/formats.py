"""Plain-text dataset and subgroup files, JSON/CSV outputs."""
import hashlib
import json
import re

import numpy as np

from .mathkernel import DomainError
from .relmodel import MISSING, InteractionMatrix, SubgroupMap


class FormatError(DomainError):
    """Malformed input file; the message carries the file and line."""


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield no, line


def _index(tok, n, path, no):
    try:
        x = int(tok)
    except ValueError:
        raise FormatError(f"{path}:{no}: expected an integer, got {tok!r}") from None
    if not 0 <= x < n:
        raise FormatError(f"{path}:{no}: node index {x} outside 0..{n - 1}")
    return x


def read_dataset(path):
    """Read ``n <N> directed|symmetric`` followed by ``i j e`` lines."""
    it = _lines(path)
    try:
        no, header = next(it)
    except StopIteration:
        raise FormatError(f"{path}: empty dataset file") from None
    parts = header.split()
    if len(parts) != 3 or parts[0] != "n" or parts[2] not in ("directed", "symmetric"):
        raise FormatError(f"{path}:{no}: header must be 'n <N> directed|symmetric'")
    try:
        n = int(parts[1])
    except ValueError:
        raise FormatError(f"{path}:{no}: node count must be an integer") from None
    if n < 2:
        raise FormatError(f"{path}:{no}: need at least 2 nodes")
    symmetric = parts[2] == "symmetric"
    vals = np.full((n, n), MISSING, dtype=np.int8)
    for no, line in it:
        toks = line.split()
        if len(toks) != 3:
            raise FormatError(f"{path}:{no}: expected 'i j e'")
        i = _index(toks[0], n, path, no)
        j = _index(toks[1], n, path, no)
        if toks[2] not in ("0", "1"):
            raise FormatError(f"{path}:{no}: edge value must be 0 or 1")
        if i == j:
            raise FormatError(f"{path}:{no}: self-interactions are not modelled")
        vals[i, j] = int(toks[2])
        if symmetric:
            vals[j, i] = int(toks[2])
    return InteractionMatrix(vals)


def write_dataset(path, data):
    i, j = np.nonzero(data.observed_mask())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {data.n} directed\n")
        for a, b in zip(i, j):
            fh.write(f"{a} {b} {data.values[a, b]}\n")


_RANGE = re.compile(r"^(\d+)\.\.(\d+)$")
_LABEL = re.compile(r"^d=(\d+)$")


def _label(tok, path, no):
    m = _LABEL.match(tok)
    if not m:
        raise FormatError(f"{path}:{no}: expected 'd=<label>', got {tok!r}")
    return int(m.group(1))


def read_subgroups(path, n):
    """Subgroup labels for an ``n``-node network.

    Accepts ``i j d`` lines (unlisted pairs stay 0) and the directives
    ``all d=<k>`` and ``block <a>..<b> d=<k> rest d=<m>``; later lines
    override earlier ones.
    """
    g = np.zeros((n, n), dtype=np.int64)
    for no, line in _lines(path):
        toks = line.split()
        if toks[0] == "all":
            if len(toks) != 2:
                raise FormatError(f"{path}:{no}: expected 'all d=<k>'")
            g[:] = _label(toks[1], path, no)
        elif toks[0] == "block":
            if len(toks) != 5 or toks[3] != "rest":
                raise FormatError(f"{path}:{no}: expected 'block <a>..<b> d=<k> rest d=<m>'")
            m = _RANGE.match(toks[1])
            if not m:
                raise FormatError(f"{path}:{no}: block range must look like 0..19")
            a, b = int(m.group(1)), int(m.group(2))
            if not a <= b < n:
                raise FormatError(f"{path}:{no}: block range {a}..{b} outside 0..{n - 1}")
            g[:] = _label(toks[4], path, no)
            g[a: b + 1, a: b + 1] = _label(toks[2], path, no)
        else:
            if len(toks) != 3:
                raise FormatError(f"{path}:{no}: expected 'i j d' or a directive")
            i = _index(toks[0], n, path, no)
            j = _index(toks[1], n, path, no)
            try:
                d = int(toks[2])
            except ValueError:
                raise FormatError(f"{path}:{no}: subgroup label must be an integer") from None
            if d < 0:
                raise FormatError(f"{path}:{no}: subgroup label must be nonnegative")
            g[i, j] = d
    np.fill_diagonal(g, 0)
    return SubgroupMap(g)


def write_subgroups(path, sub):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in zip(*np.nonzero(sub.labels)):
            fh.write(f"{i} {j} {sub.labels[i, j]}\n")


def read_pairs(path, n):
    out = []
    for no, line in _lines(path):
        toks = line.split()
        if len(toks) != 2:
            raise FormatError(f"{path}:{no}: expected 'i j'")
        out.append((_index(toks[0], n, path, no), _index(toks[1], n, path, no)))
    return out


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_matrix_csv(path, mat, header):
    """CSV of a float matrix; NaN cells (diagonal) are left empty."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        for row in mat:
            fh.write(",".join("" if np.isnan(x) else repr(float(x)) for x in row) + "\n")


def read_matrix_csv(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if line.startswith("#") or not line.strip():
                continue
            try:
                rows.append([float(x) if x else np.nan for x in line.strip().split(",")])
            except ValueError:
                raise FormatError(f"{path}:{no}: malformed number") from None
    mat = np.array(rows)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise FormatError(f"{path}: predictive matrix must be square")
    return mat
