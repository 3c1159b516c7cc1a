"""The error-sensible bucket: a voting counter that bounds its own error.

A bucket keeps one candidate key and two vote counters. Positive votes
(``yes``) come from the candidate, negative votes (``no``) from everyone
else. ``no`` is exactly the amount of value that collided between two
distinct keys, so for any key ``x``::

    query(x).estimate - query(x).mpe <= f(x) <= query(x).estimate

The compiled sketch kernels inline the same rule over flat arrays; this
class is the readable reference used by tests and small tools.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, NamedTuple, Optional


class CounterOverflowError(OverflowError):
    """A counter would exceed its configured field width."""


class BucketEstimate(NamedTuple):
    estimate: int
    mpe: int


@dataclass
class Bucket:
    id: Optional[Hashable] = None
    yes: int = 0
    no: int = 0

    @property
    def empty(self) -> bool:
        return self.id is None

    def insert(self, key: Hashable, value: int = 1, yes_max: int | None = None) -> "Bucket":
        """Cast ``value`` votes for ``key``; replace the candidate when yes <= no.

        ``yes_max`` is the largest value the YES field can hold. The caller
        decides what to do with the :class:`CounterOverflowError`; the bucket
        is left untouched when it is raised.
        """
        if value < 1:
            raise ValueError(f"value must be >= 1, got {value}")
        if key == self.id:
            if yes_max is not None and self.yes + value > yes_max:
                raise CounterOverflowError(f"YES would reach {self.yes + value} > {yes_max}")
            self.yes += value
            return self
        no = self.no + value
        if self.yes <= no:
            if yes_max is not None and no > yes_max:
                raise CounterOverflowError(f"YES would reach {no} > {yes_max}")
            self.id = key
            self.yes, self.no = no, self.yes
        else:
            self.no = no
        return self

    def query(self, key: Hashable) -> BucketEstimate:
        if self.id is not None and key == self.id:
            return BucketEstimate(self.yes, self.no)
        return BucketEstimate(self.no, self.no)


def bucket_insert(bucket: Bucket, key: Hashable, value: int = 1) -> Bucket:
    return bucket.insert(key, value)


def bucket_query(bucket: Bucket, key: Hashable) -> BucketEstimate:
    return bucket.query(key)
