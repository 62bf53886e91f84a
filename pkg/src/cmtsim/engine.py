"""Event scheduler with a float clock and named deterministic RNG streams.

Ordering contract: events fire in (fire_at, insertion order) priority, so
two events scheduled for the same instant run in the order they were
scheduled.  Cancellation is lazy, a cancelled token stays in the heap and
is skipped at dispatch time.
"""

import hashlib
import heapq
import math
import random
from dataclasses import dataclass


class Event:
    """A scheduled callback.  Returned from schedule calls as the cancel token."""

    __slots__ = ("fire_at", "seq", "fn", "cancelled")

    def __init__(self, fire_at, seq, fn):
        self.fire_at = fire_at
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self):
        self.cancelled = True

    def __lt__(self, other):
        if self.fire_at != other.fire_at:
            return self.fire_at < other.fire_at
        return self.seq < other.seq


@dataclass
class RunStats:
    dispatched: int
    stopped: bool


class RngStream(random.Random):
    """random.Random seeded from (master seed, stream name) via SHA-256.

    The derivation is stable across platforms and processes, so any run is
    replayable from the master seed alone and separate streams never share
    state.
    """

    def __new__(cls, master_seed, name):
        # random.Random's C-level __new__ only accepts a seed argument.
        return super().__new__(cls)

    def __init__(self, master_seed, name):
        derived = hashlib.sha256(f"{master_seed}/{name}".encode()).digest()
        super().__init__(int.from_bytes(derived[:8], "big"))
        self.name = name


class Simulator:
    """Clock, event heap and the RNG stream registry for one run."""

    def __init__(self, master_seed=1):
        self.master_seed = master_seed
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self._stop = False
        self._streams = {}

    def stream(self, name) -> RngStream:
        st = self._streams.get(name)
        if st is None:
            st = self._streams[name] = RngStream(self.master_seed, name)
        return st

    def at(self, fire_at, fn) -> Event:
        """Schedule fn() at absolute time fire_at.  Past or non-finite times are bugs."""
        if not math.isfinite(fire_at) or fire_at < self.now:
            raise ValueError(f"bad fire time {fire_at!r} at clock {self.now!r}")
        ev = Event(fire_at, self._seq, fn)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay, fn) -> Event:
        return self.at(self.now + delay, fn)

    def stop(self):
        """Make the current run_until return once the running handler finishes."""
        self._stop = True

    def run_until(self, t_end) -> RunStats:
        """Dispatch every event with fire_at <= t_end in (time, seq) order.

        The clock lands on t_end when events remain beyond it, and stays on
        the last dispatched time when the heap drains first.
        """
        if not math.isfinite(t_end) or t_end < self.now:
            raise ValueError(f"bad horizon {t_end!r} at clock {self.now!r}")
        self._stop = False
        heap = self._heap
        dispatched = 0
        while heap:
            ev = heap[0]
            if ev.fire_at > t_end:
                self.now = t_end
                return RunStats(dispatched, False)
            heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            dispatched += 1
            ev.fn()
            if self._stop:
                return RunStats(dispatched, True)
        return RunStats(dispatched, False)
