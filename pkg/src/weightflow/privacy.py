"""Noisy measurement and privacy budget accounting.

Because every transform is weight-stable, the privacy price of a
measurement is a pure plan property: the per-record noise level epsilon
times the number of dataflow paths from each protected input into the
aggregation. The accountant charges that price before any noise is
drawn, all inputs or none.

A Measurement is the only artifact that survives a protected dataset:
it holds a noisy value for each record that carried weight when it was
taken, and fabricates (then memoizes) fresh noise for any other record
it is ever asked about, so callers cannot tell weight zero apart from
never-present.
"""

from __future__ import annotations

import hashlib
import math
import random
import threading
from typing import Dict, Iterable, Optional, Tuple, Union

from .core import (
    Record,
    WeightedDataset,
    encode_record_text,
    parse_record_text,
    record_sort_key,
    validate_record,
)
from .engine import EvalState
from .plan import QueryPlan


def laplace_from_uniform(u: float, scale: float) -> float:
    """Maps one uniform variate in [0, 1) through the Laplace inverse CDF.

    u = 0.5 maps to exactly 0.0; the distribution is centered at zero
    with the given scale (variance 2 * scale^2).
    """
    if not 0.0 <= u < 1.0:
        raise ValueError("uniform variate must lie in [0, 1)")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    d = u - 0.5
    if d == 0.0:
        return 0.0
    if d > 0.0:
        return -scale * math.log(1.0 - 2.0 * d)
    return scale * math.log(1.0 + 2.0 * d)


def derive_seed(seed: int, tag: str) -> int:
    """Stable 63-bit sub-seed for an independent named noise stream."""
    digest = hashlib.sha256(("%d:%s" % (seed, tag)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class NoiseSource:
    """Seeded Laplace sampler; one uniform variate per sample.

    zero_noise turns every sample into 0.0 without consuming variates,
    which gives exact measurements for debugging and oracle tests.
    """

    def __init__(self, seed: int, zero_noise: bool = False):
        self.seed = int(seed)
        self.zero_noise = bool(zero_noise)
        self._rng = random.Random(self.seed)

    def sample(self, scale: float) -> float:
        if self.zero_noise:
            return 0.0
        return laplace_from_uniform(self._rng.random(), scale)

    def spawn(self, tag: str) -> "NoiseSource":
        """Independent source with a seed derived from this one's seed."""
        return NoiseSource(derive_seed(self.seed, tag), self.zero_noise)


class Measurement:
    """Noisy view of one aggregation, safe to keep after the data is gone.

    observed holds the values drawn when the measurement was taken;
    lookups for any other record draw Laplace(1/epsilon) noise around
    zero and memoize it. Lookup is synchronized so concurrent readers
    agree on the drawn value.
    """

    def __init__(
        self,
        query_id: str,
        epsilon: float,
        observed: Dict[Record, float],
        lazy_source: NoiseSource,
        meta: Optional[Dict[str, str]] = None,
    ):
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        self.query_id = query_id
        self.epsilon = float(epsilon)
        self.observed = dict(observed)
        self.memo: Dict[Record, float] = {}
        self._lazy_source = lazy_source
        self.meta = dict(meta or {})
        self._lock = threading.Lock()

    @property
    def noise_scale(self) -> float:
        return 1.0 / self.epsilon

    def is_known(self, record: Record) -> bool:
        return record in self.observed or record in self.memo

    def known_items(self) -> Iterable[Tuple[Record, float]]:
        yield from self.observed.items()
        yield from self.memo.items()

    def value_for(self, record: Record) -> float:
        """Noisy value for a record, drawing and memoizing when unseen."""
        return self.value_for_tracking(record)[0]

    def value_for_tracking(self, record: Record) -> Tuple[float, bool]:
        """(value, was_already_known). Drawing marks the record known."""
        value = self.observed.get(record)
        if value is not None:
            return value, True
        with self._lock:
            value = self.memo.get(record)
            if value is not None:
                return value, True
            value = self._lazy_source.sample(self.noise_scale)
            self.memo[record] = value
            return value, False

    # -- serialization -------------------------------------------------

    def to_text(self) -> str:
        lines = ["# weightflow measurement v1"]
        lines.append("# query_id=%s" % self.query_id)
        lines.append("# epsilon=%s" % repr(self.epsilon))
        lines.append("# seed=%d" % self._lazy_source.seed)
        lines.append("# zero_noise=%d" % int(self._lazy_source.zero_noise))
        for key in sorted(self.meta):
            lines.append("# %s=%s" % (key, self.meta[key]))
        entries = sorted(self.observed.items(), key=lambda kv: record_sort_key(kv[0]))
        for record, value in entries:
            lines.append("%s\t%s" % (encode_record_text(record), repr(value)))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Measurement":
        header: Dict[str, str] = {}
        observed: Dict[Record, float] = {}
        for line in text.splitlines():
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    header[key.strip()] = value
                continue
            record_text, value_text = line.split("\t")
            observed[parse_record_text(record_text)] = float(value_text)
        for required in ("query_id", "epsilon", "seed"):
            if required not in header:
                raise ValueError("measurement file is missing %r" % required)
        source = NoiseSource(int(header["seed"]), bool(int(header.get("zero_noise", "0"))))
        meta = {
            k: v
            for k, v in header.items()
            if k not in ("query_id", "epsilon", "seed", "zero_noise")
        }
        return cls(header["query_id"], float(header["epsilon"]), observed, source, meta)

    @classmethod
    def load(cls, path) -> "Measurement":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def noisy_count(
    dataset: Union[WeightedDataset, dict],
    epsilon: float,
    source: NoiseSource,
    query_id: str = "count",
    clip: bool = False,
    meta: Optional[Dict[str, str]] = None,
) -> Measurement:
    """Measures a dataset: weight plus Laplace(1/epsilon) noise per record.

    Records are drawn in canonical order so a fixed seed yields a fixed
    assignment of variates to records. Negative weights are refused
    unless clip=True, which floors them at zero (dropping the record, so
    it behaves like any absent record afterwards).

    The caller is responsible for having charged the privacy budget; the
    plan-level helper measure_plan does both.
    """
    entries = dataset.sorted_items() if isinstance(dataset, WeightedDataset) else sorted(
        dataset.items(), key=lambda kv: record_sort_key(kv[0])
    )
    observe_source = source.spawn("%s/observe" % query_id)
    lazy_source = source.spawn("%s/lazy" % query_id)
    scale = 1.0 / epsilon
    observed: Dict[Record, float] = {}
    for record, weight in entries:
        if weight < 0.0:
            if not clip:
                raise ValueError(
                    "dataset has a negative weight at %r; pass clip=True to floor it" % (record,)
                )
            continue
        observed[record] = weight + observe_source.sample(scale)
    return Measurement(query_id, epsilon, observed, lazy_source, meta)


class BudgetExceededError(RuntimeError):
    pass


class BudgetAccount:
    """Per-input privacy budget: a cap and the amount already spent."""

    def __init__(self):
        self._caps: Dict[str, float] = {}
        self._spent: Dict[str, float] = {}

    def register(self, name: str, cap: float) -> None:
        if cap < 0:
            raise ValueError("budget cap must be nonnegative")
        self._caps[name] = float(cap)
        self._spent.setdefault(name, 0.0)

    def cap(self, name: str) -> float:
        return self._caps[name]

    def spent(self, name: str) -> float:
        return self._spent.get(name, 0.0)

    def remaining(self, name: str) -> float:
        return self._caps[name] - self.spent(name)

    def names(self):
        return sorted(self._caps)

    def plan_cost(self, plan: QueryPlan, epsilon: float) -> Dict[str, float]:
        """Cost per input of measuring every aggregation in the plan."""
        return {name: plan.count_uses(name) * epsilon for name in plan.inputs}

    def can_charge(self, plan: QueryPlan, epsilon: float) -> bool:
        try:
            self._check(self.plan_cost(plan, epsilon))
            return True
        except BudgetExceededError:
            return False

    def _check(self, cost: Dict[str, float]) -> None:
        for name, amount in cost.items():
            if name not in self._caps:
                raise KeyError("input %r is not registered with the budget account" % name)
            slack = self._caps[name] - self._spent.get(name, 0.0)
            # tiny tolerance so an exactly exhausting charge is accepted
            if amount > slack + 1e-12:
                raise BudgetExceededError(
                    "charge of %g on %r exceeds remaining budget %g" % (amount, name, slack)
                )

    def charge(self, plan: QueryPlan, epsilon: float) -> Dict[str, float]:
        """Spends uses * epsilon for every input; all inputs or none."""
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        cost = self.plan_cost(plan, epsilon)
        self._check(cost)
        for name, amount in cost.items():
            self._spent[name] = self._spent.get(name, 0.0) + amount
        return cost

    def charge_raw(self, name: str, amount: float) -> None:
        """Spends a fixed amount on one input (for bespoke mechanisms)."""
        self._check({name: amount})
        self._spent[name] = self._spent.get(name, 0.0) + amount

    # -- persistence ---------------------------------------------------

    def to_text(self) -> str:
        lines = ["# weightflow budget ledger v1"]
        for name in self.names():
            lines.append("%s\t%s\t%s" % (name, repr(self._spent.get(name, 0.0)), repr(self._caps[name])))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "BudgetAccount":
        account = cls()
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            name, spent, cap = line.split("\t")
            account._caps[name] = float(cap)
            account._spent[name] = float(spent)
        return account

    @classmethod
    def load(cls, path) -> "BudgetAccount":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def count_uses(plan: QueryPlan, input_name: str, query_id: Optional[str] = None) -> int:
    """Dataflow path count from an input to aggregations; see QueryPlan."""
    return plan.count_uses(input_name, query_id)


def charge(account: BudgetAccount, plan: QueryPlan, epsilon: float) -> Dict[str, float]:
    return account.charge(plan, epsilon)


def measure_plan(
    plan: QueryPlan,
    inputs: Dict[str, WeightedDataset],
    epsilon: float,
    source: NoiseSource,
    account: Optional[BudgetAccount] = None,
    meta: Optional[Dict[str, str]] = None,
) -> Dict[str, Measurement]:
    """Evaluates a plan and measures every aggregation in it.

    The budget, when an account is given, is charged up front for all
    aggregations together; a refused charge raises before any evaluation
    or noise draw happens.
    """
    if account is not None:
        account.charge(plan, epsilon)
    state = EvalState(plan)
    state.initialize(inputs)
    out: Dict[str, Measurement] = {}
    for query_id in sorted(plan.aggregations):
        values = state.measurement_value(query_id)
        out[query_id] = noisy_count(
            WeightedDataset(values), epsilon, source, query_id=query_id, meta=meta
        )
    return out
