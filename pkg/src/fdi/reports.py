"""Result containers and their CSV/JSON serializations."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class CandidateSet:
    """Top-K inference result for one target user, best candidate first."""

    user: str
    candidates: tuple[str, ...]
    scores: tuple[float, ...]

    def __contains__(self, user) -> bool:
        return user in self.candidates

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return value


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def dumps_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class QuantReport:
    """Per-user condition verdicts plus the aggregate (delta, K) outcome."""

    model: str
    columns: tuple[str, ...]
    rows: list[dict]
    m_tilde: int
    required: int
    params: dict = field(default_factory=dict)

    @property
    def n_passed(self) -> int:
        return sum(1 for r in self.rows if r["pass"])

    @property
    def inferable(self) -> bool:
        return self.n_passed >= self.required

    @property
    def delta_achieved(self) -> float:
        return self.n_passed / self.m_tilde if self.m_tilde else float("nan")

    def summary(self) -> dict:
        return {
            "model": self.model,
            "m_tilde": self.m_tilde,
            "n_passed": self.n_passed,
            "required": self.required,
            "delta_achieved": self.delta_achieved,
            "inferable": self.inferable,
            "params": self.params,
        }

    def to_csv(self) -> str:
        return rows_to_csv(self.columns, self.rows)

    def to_json(self) -> str:
        return dumps_json(self.summary())

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        write_atomic(out_dir / "report.csv", self.to_csv())
        write_atomic(out_dir / "summary.json", self.to_json())
