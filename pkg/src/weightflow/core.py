"""Weighted datasets: the value type every other module builds on.

A dataset maps records to real weights. Records are immutable values
drawn from a small universe (ints, strings, and tuples of records) so
that every record has a canonical total order and a stable text form.
"""

from __future__ import annotations

import json
import re
from typing import Iterable, Iterator, Mapping, Union

Record = Union[int, str, tuple]

# Stored weights below this magnitude are treated as zero and dropped.
WEIGHT_EPSILON = 1e-12

_INT_BOUND = 1 << 63


def validate_record(record: Record) -> Record:
    """Checks that a value is a legal record and returns it unchanged.

    Legal records are ints (bounded to 64 bits, bools excluded), strings,
    and tuples of legal records. Anything else raises TypeError.
    """
    if type(record) is int:
        if not -_INT_BOUND <= record < _INT_BOUND:
            raise TypeError("integer record out of 64-bit range: %r" % (record,))
        return record
    if type(record) is str:
        return record
    if type(record) is tuple:
        for item in record:
            validate_record(item)
        return record
    raise TypeError("records must be int, str, or tuple, got %s" % type(record).__name__)


def record_sort_key(record: Record):
    """Canonical sort key: total order over all records, stable across runs.

    Ints order numerically, strings lexicographically, tuples elementwise;
    mixed types order as int < str < tuple.
    """
    t = type(record)
    if t is int:
        return (0, record)
    if t is str:
        return (1, record)
    return (2, tuple(record_sort_key(item) for item in record))


def _check_weight(weight: float) -> float:
    w = float(weight)
    if w != w or w in (float("inf"), float("-inf")):
        raise ValueError("weights must be finite, got %r" % weight)
    return w


class WeightedDataset:
    """Immutable mapping from records to nonzero real weights.

    Entries with |weight| <= WEIGHT_EPSILON are dropped at construction,
    so a record is "absent" exactly when its weight is zero. Weights may
    be negative (set difference produces such datasets); most transforms
    only make sense on nonnegative data and say so.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Union[Mapping, Iterable, None] = None):
        data: dict = {}
        if entries is None:
            items: Iterable = ()
        elif isinstance(entries, Mapping):
            items = entries.items()
        else:
            items = entries
        for record, weight in items:
            validate_record(record)
            w = _check_weight(weight)
            data[record] = data.get(record, 0.0) + w
        self._entries = {r: w for r, w in data.items() if abs(w) > WEIGHT_EPSILON}

    @classmethod
    def from_records(cls, records: Iterable[Record], weight: float = 1.0) -> "WeightedDataset":
        """Dataset with the given weight on each record; duplicates accumulate."""
        return cls((r, weight) for r in records)

    @classmethod
    def _from_clean_dict(cls, entries: dict) -> "WeightedDataset":
        # Internal fast path: caller guarantees validated records, finite
        # weights, and no near-zero entries.
        ds = cls.__new__(cls)
        ds._entries = entries
        return ds

    def weight_of(self, record: Record) -> float:
        """Weight of a record; 0.0 when absent."""
        return self._entries.get(record, 0.0)

    def items(self) -> Iterator:
        return iter(self._entries.items())

    def records(self) -> Iterator[Record]:
        return iter(self._entries.keys())

    def sorted_items(self) -> list:
        """Entries in canonical record order. Use for any output surface."""
        return sorted(self._entries.items(), key=lambda kv: record_sort_key(kv[0]))

    def to_dict(self) -> dict:
        return dict(self._entries)

    @property
    def size_norm(self) -> float:
        """Sum of absolute weights (the size of the dataset)."""
        return sum(abs(w) for w in self._entries.values())

    def difference_norm(self, other: "WeightedDataset") -> float:
        """Sum over all records of |self(x) - other(x)|."""
        total = 0.0
        mine = self._entries
        theirs = other._entries
        for record, w in mine.items():
            total += abs(w - theirs.get(record, 0.0))
        for record, w in theirs.items():
            if record not in mine:
                total += abs(w)
        return total

    def apply_delta(self, delta: "DeltaBatch") -> "WeightedDataset":
        """New dataset with the delta's signed weight changes applied."""
        data = dict(self._entries)
        for record, dw in delta.items():
            w = data.get(record, 0.0) + dw
            _check_weight(w)
            if abs(w) > WEIGHT_EPSILON:
                data[record] = w
            else:
                data.pop(record, None)
        return WeightedDataset._from_clean_dict(data)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, record: Record) -> bool:
        return record in self._entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedDataset):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self):
        raise TypeError("WeightedDataset is not hashable")

    def __repr__(self) -> str:
        parts = ", ".join("%r: %r" % kv for kv in self.sorted_items())
        return "WeightedDataset({%s})" % parts


class DeltaBatch:
    """Signed weight changes to apply to a dataset, one entry per record.

    Duplicated records accumulate at construction. Unlike datasets, tiny
    entries are kept; only exact zeros are dropped, so that a batch and
    its negation always cancel exactly.
    """

    __slots__ = ("_changes",)

    def __init__(self, changes: Union[Mapping, Iterable, None] = None):
        data: dict = {}
        if changes is None:
            items: Iterable = ()
        elif isinstance(changes, Mapping):
            items = changes.items()
        else:
            items = changes
        for record, dw in items:
            validate_record(record)
            w = _check_weight(dw)
            data[record] = data.get(record, 0.0) + w
        self._changes = {r: w for r, w in data.items() if w != 0.0}

    def negated(self) -> "DeltaBatch":
        out = DeltaBatch.__new__(DeltaBatch)
        out._changes = {r: -w for r, w in self._changes.items()}
        return out

    def items(self) -> Iterator:
        return iter(self._changes.items())

    def to_dict(self) -> dict:
        return dict(self._changes)

    def __len__(self) -> int:
        return len(self._changes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeltaBatch):
            return NotImplemented
        return self._changes == other._changes

    def __hash__(self):
        raise TypeError("DeltaBatch is not hashable")

    def __repr__(self) -> str:
        parts = ", ".join(
            "%r: %r" % kv for kv in sorted(self._changes.items(), key=lambda kv: record_sort_key(kv[0]))
        )
        return "DeltaBatch({%s})" % parts


def encode_record_text(record: Record) -> str:
    """Compact, unambiguous text form of a record.

    Ints print as digits, strings as JSON string literals, tuples as
    comma-joined encodings in parentheses. Contains no tabs or newlines,
    so encoded records can live in line- and tab-delimited files.
    """
    t = type(record)
    if t is int:
        return str(record)
    if t is str:
        return json.dumps(record)
    return "(" + ",".join(encode_record_text(item) for item in record) + ")"


_INT_TOKEN = re.compile(r"-?\d+")
_JSON_DECODER = json.JSONDecoder()


def _parse_record(text: str, i: int):
    c = text[i]
    if c == "(":
        i += 1
        items = []
        if i < len(text) and text[i] == ")":
            return tuple(items), i + 1
        while True:
            value, i = _parse_record(text, i)
            items.append(value)
            if i >= len(text):
                raise ValueError("unterminated tuple in record text")
            if text[i] == ",":
                i += 1
                continue
            if text[i] == ")":
                return tuple(items), i + 1
            raise ValueError("bad character %r at %d in record text" % (text[i], i))
    if c == '"':
        value, end = _JSON_DECODER.raw_decode(text, i)
        if not isinstance(value, str):
            raise ValueError("expected string literal in record text")
        return value, end
    match = _INT_TOKEN.match(text, i)
    if not match:
        raise ValueError("bad character %r at %d in record text" % (c, i))
    return int(match.group()), match.end()


def parse_record_text(text: str) -> Record:
    """Inverse of encode_record_text."""
    try:
        value, end = _parse_record(text, 0)
    except IndexError:
        raise ValueError("truncated record text: %r" % text) from None
    if end != len(text):
        raise ValueError("trailing junk in record text: %r" % text[end:])
    return validate_record(value)


def weight_of(dataset: WeightedDataset, record: Record) -> float:
    return dataset.weight_of(record)


def difference_norm(a: WeightedDataset, b: WeightedDataset) -> float:
    return a.difference_norm(b)


def apply_delta(dataset: WeightedDataset, delta: DeltaBatch) -> WeightedDataset:
    return dataset.apply_delta(delta)
