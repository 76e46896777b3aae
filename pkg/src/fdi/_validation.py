"""Input validation helpers shared by the quantifiers and estimators."""

from __future__ import annotations

import math

from .dataset import Dataset, Role
from .exceptions import BadKError, BadPError, BadXiError, DegeneratePError, FDIError


def check_dataset(X, role: Role = Role.TRAINING) -> Dataset:
    """Return ``X`` as a :class:`Dataset`, wrapping matrices and arrays."""
    if isinstance(X, Dataset):
        return X
    return Dataset.from_matrix(X, role=role)


def check_k(K, n: int) -> int:
    if isinstance(K, bool) or int(K) != K:
        raise BadKError(f"K must be an integer, got {K!r}")
    K = int(K)
    if not 1 <= K <= n:
        raise BadKError(f"K must lie in [1, {n}], got {K}")
    return K


def check_sampling_p(p) -> float:
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise BadPError(f"sampling probability must lie in (0, 1], got {p}")
    return p


def check_preservation_p(p) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise FDIError(f"p must lie in (0, 1), got {p}")
    if p == 0.5:
        raise DegeneratePError("p must differ from 1/2: all users are equivalent")
    return p


def check_delta(delta) -> float:
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise FDIError(f"delta must lie in [0, 1], got {delta}")
    return delta


def check_xi(xi) -> float:
    xi = float(xi)
    if not 0.0 < xi < 1.0:
        raise BadXiError(f"xi must lie in (0, 1), got {xi}")
    return xi


def required_count(delta: float, m_tilde: int) -> int:
    """``floor(delta * m_tilde)``, guarded against 0.1*10 = 0.999... style drift."""
    return int(math.floor(delta * m_tilde + 1e-9))


def log_or_neg_inf(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf
