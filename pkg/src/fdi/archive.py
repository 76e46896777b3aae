"""On-disk dataset archive.

An archive is a directory holding:

``features.tsv``
    ``index<TAB>feature_id``, one line per feature in index order.
``users.tsv``
    One user id per line, ascending (users with empty profiles included).
``profiles.tsv``
    ``user<TAB>feature_index<TAB>weight`` sorted by user then index; weights
    use the shortest round-tripping float repr.
``dataset.json``
    Role and summary counts.

All files are written deterministically, so equal datasets give byte-identical
archives.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dataset import Dataset, FeatureSpace, Role
from .exceptions import FDIError
from .reports import dumps_json, write_atomic

__all__ = ["save_archive", "load_archive", "archive_digest", "file_digest"]

_FILES = ("features.tsv", "users.tsv", "profiles.tsv", "dataset.json")


def _check_tabless(values, what: str) -> None:
    for v in values:
        if "\t" in v or "\n" in v:
            raise FDIError(f"{what} id {v!r} contains a tab or newline")


def save_archive(d: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    _check_tabless(d.space.ids, "feature")
    _check_tabless(d.users, "user")
    write_atomic(out / "features.tsv", "".join(f"{i}\t{f}\n" for i, f in enumerate(d.space.ids)))
    write_atomic(out / "users.tsv", "".join(f"{u}\n" for u in d.users))
    lines = []
    for prof in d:
        for k, w in prof.entries:
            lines.append(f"{prof.user}\t{k}\t{float(w)!r}\n")
    write_atomic(out / "profiles.tsv", "".join(lines))
    meta = {
        "format": "fdi-archive/1",
        "role": d.role.value,
        "n_users": d.n,
        "n_features": d.N,
        "n_relationships": d.n_relationships,
    }
    write_atomic(out / "dataset.json", dumps_json(meta))
    return out


def _read_lines(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8")
    return text.split("\n")[:-1] if text else []


def load_archive(path, role: Role | None = None) -> Dataset:
    root = Path(path)
    for name in _FILES:
        if not (root / name).is_file():
            raise FDIError(f"{root} is not a dataset archive: missing {name}")
    meta = json.loads((root / "dataset.json").read_text(encoding="utf-8"))
    ids = []
    for i, line in enumerate(_read_lines(root / "features.tsv")):
        idx, fid = line.split("\t", 1)
        if int(idx) != i:
            raise FDIError("features.tsv is not in index order")
        ids.append(fid)
    users = _read_lines(root / "users.tsv")
    pos = {u: i for i, u in enumerate(users)}
    rows, cols, vals = [], [], []
    for line in _read_lines(root / "profiles.tsv"):
        u, k, w = line.split("\t")
        rows.append(pos[u])
        cols.append(int(k))
        vals.append(float(w))
    X = sp.csr_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(len(users), len(ids)),
    )
    return Dataset(FeatureSpace(ids), users, X, role or Role(meta.get("role", "training")))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def archive_digest(path) -> str:
    """SHA-256 over the archive's data files, in a fixed order."""
    root = Path(path)
    if root.is_file():
        return file_digest(root)
    h = hashlib.sha256()
    for name in _FILES:
        h.update(name.encode())
        h.update(bytes.fromhex(file_digest(root / name)))
    return h.hexdigest()
