"""Global knobs: the dense-operation size cap.

Dense solvers refuse inputs beyond the cap so that the oracle layer stays
honest; large problems belong to the low-rank module.  The cap can be
overridden through the DTMOR_DENSE_CAP environment variable.
"""
import os

from .exceptions import DenseCapError

DENSE_CAP_DEFAULT = 2000
DENSE_CAP_ENV = "DTMOR_DENSE_CAP"


def dense_cap() -> int:
    raw = os.environ.get(DENSE_CAP_ENV)
    if raw is None:
        return DENSE_CAP_DEFAULT
    try:
        value = int(raw)
    except ValueError as exc:
        raise DenseCapError(f"{DENSE_CAP_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise DenseCapError(f"{DENSE_CAP_ENV} must be positive, got {value}")
    return value


def check_dense_cap(size: int, what: str) -> None:
    cap = dense_cap()
    if size > cap:
        raise DenseCapError(
            f"{what} of size {size} exceeds the dense cap {cap}; "
            f"use the low-rank solvers or raise {DENSE_CAP_ENV}"
        )
