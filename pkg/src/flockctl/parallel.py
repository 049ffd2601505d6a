import os

ENV_VAR = "FLOCKCTL_THREADS"


def max_workers() -> int:
    """Worker cap from ``FLOCKCTL_THREADS``; defaults to 1 (sequential)."""
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n
