"""Opt-in instrumentation of dense kernel work.

Counting is scoped to a ``with count_ops()`` block through a context
variable, so uninstrumented code pays one lookup per kernel call and
concurrent callers never see each other's counts.
"""
import contextvars
from contextlib import contextmanager
from dataclasses import dataclass

_active = contextvars.ContextVar("mlqs_op_counter", default=None)


@dataclass
class OpCount:
    flops: int = 0
    calls: int = 0


@contextmanager
def count_ops():
    """Count flops and kernel calls issued inside the ``with`` body."""
    counter = OpCount()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)


def record(flops):
    counter = _active.get()
    if counter is not None:
        counter.flops += int(flops)
        counter.calls += 1
