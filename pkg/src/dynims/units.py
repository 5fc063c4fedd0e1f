"""Byte and time unit helpers. Capacities are integer bytes throughout."""

KB = 1024
MB = 1024 * KB
GB = 1024 * MB


def gb(x: float) -> int:
    """Convert gigabytes to integer bytes (truncating)."""
    return int(x * GB)


def to_gb(n: int) -> float:
    return n / GB
