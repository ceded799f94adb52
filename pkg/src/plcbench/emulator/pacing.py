from __future__ import annotations

import random
import threading
import time
from contextlib import contextmanager
from typing import Iterator

# below this much remaining wait we spin instead of sleeping; the scheduler
# wakes sleepers up too late for millisecond intervals otherwise
_SPIN_S = 300e-6


def wait_until(deadline: float, clock=time.perf_counter) -> None:
    while True:
        left = deadline - clock()
        if left <= 0:
            return
        if left > _SPIN_S:
            time.sleep(left - _SPIN_S)


class Pacer:
    """Keeps consecutive sends on one interface at least ``interval`` apart.

    The next deadline is measured from when the previous send *returned*, so
    time spent inside ``send`` never shortens a gap. Each interval is stretched
    by a uniform factor in ``[1, 1 + jitter]``.
    """

    def __init__(self, jitter: float = 0.02, seed: int | None = None, clock=time.perf_counter):
        if not 0 <= jitter < 1:
            raise ValueError("jitter must be in [0, 1)")
        self.jitter = jitter
        self._rng = random.Random(seed)
        self._clock = clock
        self._last: float | None = None
        self._lock = threading.Lock()
        self.sent = 0

    def next_interval(self, interval_s: float) -> float:
        return interval_s * (1 + self._rng.uniform(0, self.jitter))

    @contextmanager
    def slot(self, interval_s: float) -> Iterator[None]:
        """Hold the interface for one send; the body performs the send."""
        with self._lock:
            if self._last is not None:
                wait_until(self._last + self.next_interval(interval_s), self._clock)
            try:
                yield
            finally:
                self._last = self._clock()
                self.sent += 1
