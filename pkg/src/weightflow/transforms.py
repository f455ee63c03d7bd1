"""Weight-stable transforms over weighted datasets.

Every transform here is 1-Lipschitz in the dataset difference norm:
changing the input by some total weight changes the output by at most
that much (per input, for the binary ones). That property is what lets
a downstream noisy aggregation keep a fixed privacy price no matter how
transforms are composed, and the test suite checks it directly.

The data-dependent transforms (select_many, group_by, join) buy their
stability by scaling output weights down, so results are weighted
counts rather than counts; callers are expected to rescale after
aggregation.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence, Union

from .core import WEIGHT_EPSILON, Record, WeightedDataset, record_sort_key

ScheduleFn = Callable[[Record], Iterable[float]]
Schedule = Union[float, int, ScheduleFn]


def select(dataset: WeightedDataset, mapper: Callable[[Record], Record]) -> WeightedDataset:
    """Applies mapper to each record; weights of colliding images add up."""
    out: dict = {}
    for record, w in dataset.items():
        image = mapper(record)
        out[image] = out.get(image, 0.0) + w
    return WeightedDataset(out)


def where(dataset: WeightedDataset, predicate: Callable[[Record], bool]) -> WeightedDataset:
    """Keeps records satisfying the predicate, weights unchanged."""
    return WeightedDataset((r, w) for r, w in dataset.items() if predicate(r))


def _as_dataset(value) -> WeightedDataset:
    if isinstance(value, WeightedDataset):
        return value
    return WeightedDataset.from_records(value)


def select_many(dataset: WeightedDataset, expander: Callable[[Record], object]) -> WeightedDataset:
    """Maps each record to a weighted set and mixes the sets together.

    The set produced for record x is scaled by A(x) / max(1, ||f(x)||)
    before being accumulated, so a unit-weight record contributes at most
    unit weight in total no matter how many records it expands to.

    The expander may return a WeightedDataset or any iterable of records
    (taken with unit weight each, duplicates accumulating).
    """
    out: dict = {}
    for record, w in dataset.items():
        expansion = _as_dataset(expander(record))
        scale = w / max(1.0, expansion.size_norm)
        if scale == 0.0:
            continue
        for image, fw in expansion.items():
            out[image] = out.get(image, 0.0) + scale * fw
    return WeightedDataset(out)


def group_part_outputs(
    key_value: Record,
    part: dict,
    reducer: Callable[[tuple], Record],
) -> dict:
    """Output entries contributed by one group: the telescoping construction.

    Records of the part are ranked by weight, largest first (ties broken
    by canonical record order). The i-th ranked prefix is fed to the
    reducer, yielding a record (key, reduced) whose weight is half the
    drop from the i-th weight to the next. Total output weight for the
    part is therefore half its maximum input weight.
    """
    ranked = sorted(part.items(), key=lambda kv: (-kv[1], record_sort_key(kv[0])))
    out: dict = {}
    prefix: list = []
    for i, (record, w) in enumerate(ranked):
        prefix.append(record)
        nxt = ranked[i + 1][1] if i + 1 < len(ranked) else 0.0
        dw = (w - nxt) / 2.0
        if abs(dw) <= WEIGHT_EPSILON:
            continue
        reduced = reducer(tuple(sorted(prefix, key=record_sort_key)))
        result = (key_value, reduced)
        out[result] = out.get(result, 0.0) + dw
    return out


def group_by(
    dataset: WeightedDataset,
    key: Callable[[Record], Record],
    reducer: Callable[[tuple], Record],
) -> WeightedDataset:
    """Groups records by key and reduces each group's weighted prefixes.

    The reducer is a pure function of a canonically sorted tuple of
    records. Intended for nonnegative inputs.
    """
    parts: dict = {}
    for record, w in dataset.items():
        parts.setdefault(key(record), {})[record] = w
    out: dict = {}
    for key_value, part in parts.items():
        for result, dw in group_part_outputs(key_value, part, reducer).items():
            out[result] = out.get(result, 0.0) + dw
    return WeightedDataset(out)


def shave_chunks(weight: float, schedule_for_record) -> list:
    """Splits a weight into the chunk sizes prescribed by a schedule.

    Chunk i gets min(schedule[i], remainder), stopping once the weight is
    exhausted or the schedule ends. Nonpositive weights produce nothing.
    """
    chunks: list = []
    remaining = weight
    if remaining <= WEIGHT_EPSILON:
        return chunks
    for step in schedule_for_record:
        if step < 0:
            raise ValueError("shave schedule entries must be nonnegative")
        if remaining <= WEIGHT_EPSILON:
            break
        take = step if step < remaining else remaining
        if take > WEIGHT_EPSILON:
            chunks.append(take)
        remaining -= step
    return chunks


def _constant_chunks(weight: float, step: float) -> list:
    if weight <= WEIGHT_EPSILON:
        return []
    full = int(weight / step)
    chunks = [step] * full
    rest = weight - full * step
    if rest > WEIGHT_EPSILON:
        chunks.append(rest)
    return chunks


def shave(dataset: WeightedDataset, schedule: Schedule) -> WeightedDataset:
    """Splits each record's weight into indexed chunks.

    Record x of weight w becomes records (x, 0), (x, 1), ... whose weights
    follow the schedule until w is used up. A numeric schedule means every
    chunk has that size (with a fractional final chunk); a callable maps a
    record to its sequence of chunk sizes.
    """
    out: dict = {}
    if callable(schedule):
        get_chunks = lambda record, w: shave_chunks(w, schedule(record))
    else:
        step = float(schedule)
        if step <= 0:
            raise ValueError("constant shave schedule must be positive")
        get_chunks = lambda record, w: _constant_chunks(w, step)
    for record, w in dataset.items():
        for i, chunk in enumerate(get_chunks(record, w)):
            out[(record, i)] = chunk
    return WeightedDataset(out)


def _pair(x: Record, y: Record) -> Record:
    return (x, y)


def join(
    a: WeightedDataset,
    b: WeightedDataset,
    key_a: Callable[[Record], Record],
    key_b: Callable[[Record], Record],
    result: Callable[[Record, Record], Record] = _pair,
) -> WeightedDataset:
    """Matches records of a and b sharing a key, damping by group size.

    Within key k the output is the outer product of the two restrictions
    divided by the total weight both sides bring to the key, so each
    input record passes on at most its own weight. Keys present on only
    one side produce nothing.
    """
    left: dict = {}
    for record, w in a.items():
        left.setdefault(key_a(record), []).append((record, w))
    right: dict = {}
    for record, w in b.items():
        right.setdefault(key_b(record), []).append((record, w))
    out: dict = {}
    for k, la in left.items():
        lb = right.get(k)
        if not lb:
            continue
        denom = sum(abs(w) for _, w in la) + sum(abs(w) for _, w in lb)
        for ra, wa in la:
            for rb, wb in lb:
                image = result(ra, rb)
                out[image] = out.get(image, 0.0) + wa * wb / denom
    return WeightedDataset(out)


def union(a: WeightedDataset, b: WeightedDataset) -> WeightedDataset:
    """Record-wise maximum of the two weights (absent reads as zero)."""
    out: dict = {}
    bd = b.to_dict()
    for record, w in a.items():
        out[record] = max(w, bd.get(record, 0.0))
    for record, w in bd.items():
        if record not in out:
            out[record] = max(w, 0.0)
    return WeightedDataset(out)


def intersect(a: WeightedDataset, b: WeightedDataset) -> WeightedDataset:
    """Record-wise minimum of the two weights (absent reads as zero)."""
    out: dict = {}
    bd = b.to_dict()
    for record, w in a.items():
        out[record] = min(w, bd.get(record, 0.0))
    for record, w in bd.items():
        if record not in out:
            out[record] = min(w, 0.0)
    return WeightedDataset(out)


def concat(a: WeightedDataset, b: WeightedDataset) -> WeightedDataset:
    """Record-wise sum of weights."""
    out = a.to_dict()
    for record, w in b.items():
        out[record] = out.get(record, 0.0) + w
    return WeightedDataset(out)


def except_(a: WeightedDataset, b: WeightedDataset) -> WeightedDataset:
    """Record-wise difference a - b. May produce negative weights."""
    out = a.to_dict()
    for record, w in b.items():
        out[record] = out.get(record, 0.0) - w
    return WeightedDataset(out)
