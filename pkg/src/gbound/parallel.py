import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker cap from ``GBOUND_THREADS`` (default: CPU count)."""
    env = os.environ.get("GBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"GBOUND_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def pmap(fn, items):
    """Order-preserving map over a thread pool; serial for a single worker."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))
