"""Pass/fail lines for the acceptance criteria, printed at the end of the run."""

import time
from contextlib import contextmanager

LINES: dict[str, str] = {}


@contextmanager
def criterion(key: str, title: str):
    """Record ``PASS``/``FAIL`` for one criterion; failures propagate."""
    t0 = time.time()
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        detail = "; ".join(notes + [f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"])
        _put(key, f"FAIL  {title} [{time.time() - t0:.1f}s] {detail}")
        raise
    _put(key, f"PASS  {title} [{time.time() - t0:.1f}s] {'; '.join(notes)}")


def _put(key, line):
    LINES[key] = f"criterion {key}: {line}"
    print("\n" + LINES[key])
