"""Parsers and generators that produce edge lists and datasets.

Edge lists are plain lists of ``(user, feature_id, weight)`` tuples and are
turned into a :class:`~fdi.dataset.Dataset` with
:func:`~fdi.dataset.build_dataset`.
"""

from __future__ import annotations

import gzip
import io
import logging
import re
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dataset import Dataset, FeatureSpace, Role
from .exceptions import FDIError, InfeasibleSeparationError, ParseError

logger = logging.getLogger(__name__)

__all__ = [
    "open_text",
    "parse_tsv",
    "parse_snap_ego",
    "parse_http_log",
    "extract_http_features",
    "SynthSpec",
    "synth_generate",
    "DEFAULT_PATH_DELIMITERS",
]

DEFAULT_PATH_DELIMITERS = "/?=&"


def open_text(path) -> io.TextIOBase:
    """Open a text file, transparently decompressing gzip input."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def parse_tsv(path, strict: bool = False) -> list[tuple[str, str, float]]:
    """Read ``user<TAB>feature[<TAB>weight]`` lines.

    Blank lines and lines starting with ``#`` are ignored. Malformed lines are
    logged with their line number and skipped, or raise :class:`ParseError`
    when ``strict`` is set.
    """
    edges = []
    bad = []
    with open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            edge = None
            if len(parts) in (2, 3) and parts[0] and parts[1]:
                try:
                    w = float(parts[2]) if len(parts) == 3 else 1.0
                except ValueError:
                    w = -1.0
                if w >= 0 and np.isfinite(w):
                    edge = (parts[0], parts[1], w)
            if edge is None:
                bad.append(lineno)
                logger.warning("%s:%d: malformed line %r", path, lineno, line)
            else:
                edges.append(edge)
    if bad and strict:
        raise ParseError(f"{len(bad)} malformed line(s) in {path}: {bad[:10]}", bad)
    return edges


def _read_featnames(path: Path) -> list[str]:
    names = []
    with open_text(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            col, _, name = line.partition(" ")
            names.append(name.strip() or col)
    return names


def _snap_sibling(feat: Path, suffix: str) -> Path | None:
    stem = feat.name
    for ext in (".feat.gz", ".feat"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
            break
    for cand in (feat.with_name(stem + suffix), feat.with_name(stem + suffix + ".gz")):
        if cand.exists():
            return cand
    return None


def _ego_id(feat: Path) -> str:
    return re.sub(r"\.feat(\.gz)?$", "", feat.name)


def parse_snap_ego(feat_files) -> list[tuple[str, str, float]]:
    """Parse SNAP ego-network ``.feat`` files into binary edges.

    ``feat_files`` is a directory (searched recursively for ``*.feat``) or an
    iterable of ``.feat`` paths. Each row is ``node b1 ... bF``; the matching
    ``.featnames`` file names the columns, otherwise names are synthesized as
    ``ego:col``. The ego's own ``.egofeat`` row is included when present.
    Pairs repeated across egos are merged (binary semantics).
    """
    if isinstance(feat_files, (str, Path)) and Path(feat_files).is_dir():
        root = Path(feat_files)
        paths = sorted(set(root.rglob("*.feat")) | set(root.rglob("*.feat.gz")))
    elif isinstance(feat_files, (str, Path)):
        paths = [Path(feat_files)]
    else:
        paths = sorted(Path(p) for p in feat_files)

    pairs: set[tuple[str, str]] = set()
    for feat in paths:
        ego = _ego_id(feat)
        names_path = _snap_sibling(feat, ".featnames")
        names = _read_featnames(names_path) if names_path else None

        def emit(node: str, bits: list[str], where: str, lineno: int) -> None:
            nonlocal names
            if names is None:
                names = [f"{ego}:{c}" for c in range(len(bits))]
            if len(bits) != len(names):
                raise ParseError(
                    f"{where}:{lineno}: row has {len(bits)} columns, expected {len(names)}",
                    [lineno],
                )
            for col, b in enumerate(bits):
                if b == "1":
                    pairs.add((node, names[col]))
                elif b != "0":
                    raise ParseError(f"{where}:{lineno}: non-binary value {b!r}", [lineno])

        with open_text(feat) as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                emit(parts[0], parts[1:], str(feat), lineno)
        egofeat = _snap_sibling(feat, ".egofeat")
        if egofeat is not None:
            with open_text(egofeat) as fh:
                for lineno, line in enumerate(fh, start=1):
                    parts = line.split()
                    if parts:
                        emit(ego, parts, str(egofeat), lineno)
    return [(u, f, 1.0) for u, f in sorted(pairs)]


def parse_http_log(path, strict: bool = False) -> list[tuple[str, str]]:
    """Read ``user<TAB>url`` lines for :func:`extract_http_features`."""
    records = []
    bad = []
    with open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                bad.append(lineno)
                logger.warning("%s:%d: malformed line %r", path, lineno, line)
                continue
            records.append((parts[0], parts[1]))
    if bad and strict:
        raise ParseError(f"{len(bad)} malformed line(s) in {path}: {bad[:10]}", bad)
    return records


_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*://")


def _split_url(url: str) -> tuple[str, str] | None:
    url = url.strip()
    url = _SCHEME.sub("", url, count=1)
    if not url or url.startswith("/"):
        return None
    cut = len(url)
    for ch in "/?":
        pos = url.find(ch)
        if pos != -1:
            cut = min(cut, pos)
    host, rest = url[:cut], url[cut:]
    if not host or any(c.isspace() for c in host):
        return None
    return host, rest


def extract_http_features(
    log: Iterable[tuple[str, str]],
    delimiters: str = DEFAULT_PATH_DELIMITERS,
    include: Iterable[str] = ("domain", "path"),
) -> list[tuple[str, str, float]]:
    """Turn ``(user, url)`` records into domain and path-token edges.

    Each record contributes its host as ``D:<host>`` and every non-empty token
    of its path and query, split on ``delimiters``, as ``P:<token>``. Tokens
    are kept verbatim (no case folding or URL decoding). Weights are
    occurrence counts across all records. Records whose URL has no host are
    skipped and counted in a warning.
    """
    include = set(include)
    unknown = include - {"domain", "path"}
    if unknown:
        raise FDIError(f"unknown feature kinds: {sorted(unknown)}")
    splitter = re.compile("[" + re.escape(delimiters) + "]") if delimiters else None
    counts: Counter[tuple[str, str]] = Counter()
    skipped = 0
    for user, url in log:
        parts = _split_url(str(url))
        if parts is None:
            skipped += 1
            continue
        host, rest = parts
        if "domain" in include:
            counts[(str(user), "D:" + host)] += 1
        if "path" in include and rest:
            tokens = splitter.split(rest) if splitter else [rest]
            for tok in tokens:
                if tok:
                    counts[(str(user), "P:" + tok)] += 1
    if skipped:
        logger.warning("skipped %d record(s) with unparseable URLs", skipped)
    return [(u, f, float(c)) for (u, f), c in sorted(counts.items())]


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for :func:`synth_generate`.

    ``gamma_separation`` asks for every pair of users to differ in at least
    that many features; users are redrawn one at a time until they clear it,
    up to ``max_attempts`` draws per user.
    """

    n_users: int
    N_features: int
    p_feature: float
    seed: int = 0
    gamma_separation: int | None = None
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.n_users < 1 or self.N_features < 1:
            raise FDIError("n_users and N_features must be positive")
        if not 0.0 < self.p_feature < 1.0:
            raise FDIError("p_feature must lie in (0, 1)")
        if self.gamma_separation is not None and not (
            0 <= self.gamma_separation <= self.N_features
        ):
            raise FDIError("gamma_separation must lie in [0, N_features]")


def synth_generate(spec: SynthSpec, role: Role = Role.TRAINING) -> Dataset:
    """Draw a binary dataset with i.i.d. Bernoulli(``p_feature``) relationships."""
    rng = np.random.default_rng(spec.seed)
    n, N, p = spec.n_users, spec.N_features, spec.p_feature
    gamma = spec.gamma_separation

    def draw() -> np.ndarray:
        k = rng.binomial(N, p)
        return np.sort(rng.choice(N, size=k, replace=False))

    rows: list[np.ndarray] = []
    if gamma:
        accepted = np.zeros((0, N), dtype=np.int32)
        for i in range(n):
            for _ in range(spec.max_attempts):
                idx = draw()
                vec = np.zeros(N, dtype=np.int32)
                vec[idx] = 1
                if accepted.shape[0] == 0 or np.min(
                    np.count_nonzero(accepted != vec, axis=1)
                ) >= gamma:
                    break
            else:
                raise InfeasibleSeparationError(
                    f"could not place user {i} at separation {gamma} "
                    f"after {spec.max_attempts} attempts"
                )
            rows.append(idx)
            accepted = np.vstack([accepted, vec])
    else:
        rows = [draw() for _ in range(n)]

    indptr = np.r_[0, np.cumsum([r.size for r in rows])]
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    X = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(n, N))
    uw, fw = len(str(n - 1)), len(str(N - 1))
    users = [f"u{i:0{uw}d}" for i in range(n)]
    space = FeatureSpace(f"f{j:0{fw}d}" for j in range(N))
    return Dataset(space, users, X, role)
