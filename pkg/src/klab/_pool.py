import os
from concurrent.futures import ThreadPoolExecutor


def workers() -> int:
    try:
        return max(1, int(os.environ.get("KLAB_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    """map() over a thread pool sized by KLAB_THREADS; results keep input order."""
    items = list(items)
    n = workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
