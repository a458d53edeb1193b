"""Multiply-accumulate accounting for the forward pass."""

from collections import Counter

_active = []


class OpCounter:
    """Collects MAC counts from every matmul/conv executed while active.

    Use as a context manager; counters nest and each active one sees every op.
    """

    def __init__(self):
        self.by_kind = Counter()

    @property
    def macs(self):
        return sum(self.by_kind.values())

    def add(self, kind, macs):
        self.by_kind[kind] += int(macs)

    def merge(self, other):
        self.by_kind.update(other.by_kind)
        return self

    def as_dict(self):
        return {"macs": self.macs, "by_kind": dict(sorted(self.by_kind.items()))}

    def __enter__(self):
        _active.append(self)
        return self

    def __exit__(self, *exc):
        _active.remove(self)

    def __repr__(self):
        return f"OpCounter(macs={self.macs}, by_kind={dict(self.by_kind)})"


def record(kind, macs):
    for c in _active:
        c.add(kind, macs)


def counting():
    return bool(_active)
