"""Incremental evaluation of query plans.

An EvalState holds, for every plan node, its current output dataset plus
whatever keyed indexes the operator needs to answer small input changes
with small output changes. Initialization is just a propagation of the
full inputs from an empty state, so batch and incremental evaluation
share one code path and cannot drift apart.

The join update exploits the identity
    (A+a) x (B+b) = A x B + a x B + A x b + a x b
whenever a key's total input weight is unchanged by the delta (the
common case under degree-preserving edge swaps); otherwise the key's
whole output is recomputed under the new damping denominator. Stored
state always holds plain accumulated weights, and denominators are
recomputed from the stored parts rather than adjusted in place.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterable, Optional, Union

from .core import WEIGHT_EPSILON, DeltaBatch, WeightedDataset
from .plan import (
    K_AGGREGATE,
    K_CONCAT,
    K_EXCEPT,
    K_GROUP_BY,
    K_INPUT,
    K_INTERSECT,
    K_JOIN,
    K_SELECT,
    K_SELECT_MANY,
    K_SHAVE,
    K_UNION,
    K_WHERE,
    QueryPlan,
)
from .transforms import _as_dataset, _constant_chunks, group_part_outputs, shave_chunks

_EPS = WEIGHT_EPSILON


class DiscrepancyTracker:
    """Running L1 distance between one aggregation's output and a measurement.

    The tracked value is the sum of |q(x) - m(x)| over every record that
    either carries weight in the aggregation output or has a materialized
    (observed or memoized) noisy value in the measurement. Records the
    measurement has materialized keep contributing |0 - m(x)| even if
    their weight later returns to zero.
    """

    __slots__ = ("measurement", "value")

    def __init__(self, measurement):
        self.measurement = measurement
        self.value = 0.0

    def rebase(self, output: dict) -> None:
        """Recomputes the value from scratch against the given output."""
        total = 0.0
        seen_known = 0
        for record, m in self.measurement.known_items():
            total += abs(output.get(record, 0.0) - m)
            seen_known += 1
        for record, q in output.items():
            if not self.measurement.is_known(record):
                total += abs(q - self.measurement.value_for(record))
        # value_for above may have grown known_items; recount not needed
        # because each newly drawn record was handled in the second loop.
        self.value = total

    def update(self, record, old_q: float, new_q: float) -> None:
        m, known = self.measurement.value_for_tracking(record)
        if known:
            self.value += abs(new_q - m) - abs(old_q - m)
        else:
            # First time this record carries weight: its baseline |0 - m|
            # was never counted, so fold it in along with the new residual.
            self.value += abs(new_q - m)


class EvalState:
    """Materialized evaluation of a plan, updatable by input deltas."""

    def __init__(self, plan: QueryPlan):
        self.plan = plan
        n = len(plan.nodes)
        self.node_outputs: list = [dict() for _ in range(n)]
        self.op_state: list = [None] * n
        self.trackers: Dict[str, list] = {}
        self._fanout: list = [[] for _ in range(n)]
        for node in plan.nodes:
            for slot, pid in enumerate(node.parents):
                self._fanout[pid].append((node.id, slot))
        self._agg_ids = {nid: qid for qid, nid in plan.aggregations.items()}
        self.last_emitted: Dict[int, int] = {}
        self.last_join_rescales: Dict[int, int] = {}
        self._reset_state()

    def _reset_state(self) -> None:
        for i in range(len(self.plan.nodes)):
            self.node_outputs[i] = {}
            kind = self.plan.nodes[i].kind
            if kind == K_JOIN:
                self.op_state[i] = {"left": {}, "right": {}, "lnorm": {}, "rnorm": {}}
            elif kind == K_GROUP_BY:
                self.op_state[i] = {}
            elif kind == K_SHAVE:
                self.op_state[i] = {}
            else:
                self.op_state[i] = None

    # -- public API ---------------------------------------------------

    def initialize(self, inputs: dict) -> None:
        """Loads full input datasets, replacing any previous state."""
        expected = set(self.plan.inputs)
        given = set(inputs)
        if given != expected:
            raise ValueError("plan inputs are %s, got %s" % (sorted(expected), sorted(given)))
        self._reset_state()
        for trackers in self.trackers.values():
            for tracker in trackers:
                tracker.rebase({})
        seeds = {}
        for name, dataset in inputs.items():
            if isinstance(dataset, WeightedDataset):
                seeds[name] = dataset.to_dict()
            else:
                seeds[name] = dict(dataset)
        self._propagate(seeds)

    def propagate(self, input_name: str, delta: Union[DeltaBatch, dict]) -> None:
        """Applies a signed change to one input and updates everything."""
        if input_name not in self.plan.inputs:
            raise KeyError("no input named %r" % input_name)
        changes = delta.to_dict() if isinstance(delta, DeltaBatch) else dict(delta)
        self._propagate({input_name: changes})

    def output(self, node_id: int) -> dict:
        return dict(self.node_outputs[node_id])

    def measurement_value(self, query_id: str) -> dict:
        """Current exact output of the named aggregation."""
        return dict(self.node_outputs[self.plan.aggregations[query_id]])

    def attach_measurement(self, query_id: str, measurement) -> DiscrepancyTracker:
        """Starts tracking |Q(A) - m| for the named aggregation."""
        if query_id not in self.plan.aggregations:
            raise KeyError("no aggregation named %r" % query_id)
        tracker = DiscrepancyTracker(measurement)
        tracker.rebase(self.node_outputs[self.plan.aggregations[query_id]])
        self.trackers.setdefault(query_id, []).append(tracker)
        return tracker

    def memory_report(self) -> dict:
        """Entry counts per node: output size plus operator index size."""
        report = {}
        for node in self.plan.nodes:
            state = self.op_state[node.id]
            extra = 0
            if node.kind == K_JOIN:
                extra = sum(len(p) for p in state["left"].values())
                extra += sum(len(p) for p in state["right"].values())
            elif node.kind in (K_GROUP_BY,):
                extra = sum(len(p) for p in state.values())
            elif node.kind == K_SHAVE:
                extra = len(state)
            report[node.id] = {
                "kind": node.kind,
                "output": len(self.node_outputs[node.id]),
                "state": extra,
            }
        return report

    # -- propagation --------------------------------------------------

    def _propagate(self, seeds: dict) -> None:
        plan = self.plan
        pending: dict = {}
        self.last_emitted = {}
        self.last_join_rescales = {}
        for name, changes in seeds.items():
            nid = plan.inputs[name]
            slot = pending.setdefault(nid, [None, None])
            slot[0] = dict(changes)
        for node in plan.nodes:
            slots = pending.pop(node.id, None)
            if slots is None:
                continue
            d0 = slots[0]
            d1 = slots[1]
            if d0:
                d0 = {r: v for r, v in d0.items() if v > _EPS or v < -_EPS}
            if d1:
                d1 = {r: v for r, v in d1.items() if v > _EPS or v < -_EPS}
            if not d0 and not d1:
                continue
            out_delta = self._apply_op(node, d0 or {}, d1 or {})
            if not out_delta:
                continue
            out_delta = {r: v for r, v in out_delta.items() if v > _EPS or v < -_EPS}
            if not out_delta:
                continue
            self.last_emitted[node.id] = len(out_delta)
            outputs = self.node_outputs[node.id]
            agg_id = self._agg_ids.get(node.id)
            trackers = self.trackers.get(agg_id) if agg_id is not None else None
            if trackers:
                for record, dv in out_delta.items():
                    old = outputs.get(record, 0.0)
                    new = old + dv
                    if -_EPS <= new <= _EPS:
                        outputs.pop(record, None)
                        new = 0.0
                    else:
                        outputs[record] = new
                    for tracker in trackers:
                        tracker.update(record, old, new)
            else:
                for record, dv in out_delta.items():
                    new = outputs.get(record, 0.0) + dv
                    if -_EPS <= new <= _EPS:
                        outputs.pop(record, None)
                    else:
                        outputs[record] = new
            for cid, slot in self._fanout[node.id]:
                entry = pending.setdefault(cid, [None, None])
                acc = entry[slot]
                if acc is None:
                    entry[slot] = dict(out_delta)
                else:
                    for record, dv in out_delta.items():
                        acc[record] = acc.get(record, 0.0) + dv

    def _apply_op(self, node, d0: dict, d1: dict) -> dict:
        kind = node.kind
        if kind == K_INPUT:
            return d0
        if kind == K_SELECT:
            mapper = node.params["mapper"]
            out: dict = {}
            for record, dv in d0.items():
                image = mapper(record)
                out[image] = out.get(image, 0.0) + dv
            return out
        if kind == K_WHERE:
            predicate = node.params["predicate"]
            return {r: dv for r, dv in d0.items() if predicate(r)}
        if kind == K_JOIN:
            return self._apply_join(node, d0, d1)
        if kind == K_INTERSECT:
            return self._apply_min_max(node, d0, d1, min)
        if kind == K_UNION:
            return self._apply_min_max(node, d0, d1, max)
        if kind == K_CONCAT:
            out = dict(d0)
            for record, dv in d1.items():
                out[record] = out.get(record, 0.0) + dv
            return out
        if kind == K_EXCEPT:
            out = dict(d0)
            for record, dv in d1.items():
                out[record] = out.get(record, 0.0) - dv
            return out
        if kind == K_SELECT_MANY:
            expander = node.params["expander"]
            out = {}
            for record, dv in d0.items():
                expansion = _as_dataset(expander(record))
                scale = dv / max(1.0, expansion.size_norm)
                if scale == 0.0:
                    continue
                for image, fw in expansion.items():
                    out[image] = out.get(image, 0.0) + scale * fw
            return out
        if kind == K_SHAVE:
            return self._apply_shave(node, d0)
        if kind == K_GROUP_BY:
            return self._apply_group_by(node, d0)
        if kind == K_AGGREGATE:
            return d0
        raise AssertionError("unknown node kind %r" % kind)

    def _apply_shave(self, node, delta: dict) -> dict:
        schedule = node.params["schedule"]
        weights = self.op_state[node.id]
        if callable(schedule):
            chunks_of = lambda record, w: shave_chunks(w, schedule(record))
        else:
            step = float(schedule)
            chunks_of = lambda record, w: _constant_chunks(w, step)
        out: dict = {}
        for record, dv in delta.items():
            old_w = weights.get(record, 0.0)
            new_w = old_w + dv
            if -_EPS <= new_w <= _EPS:
                weights.pop(record, None)
                new_w = 0.0
            else:
                weights[record] = new_w
            old_chunks = chunks_of(record, old_w) if old_w > _EPS else []
            new_chunks = chunks_of(record, new_w) if new_w > _EPS else []
            for i in range(max(len(old_chunks), len(new_chunks))):
                before = old_chunks[i] if i < len(old_chunks) else 0.0
                after = new_chunks[i] if i < len(new_chunks) else 0.0
                if after != before:
                    key = (record, i)
                    out[key] = out.get(key, 0.0) + (after - before)
        return out

    def _apply_group_by(self, node, delta: dict) -> dict:
        key_fn = node.params["key"]
        reducer = node.params["reducer"]
        parts = self.op_state[node.id]
        grouped: dict = {}
        for record, dv in delta.items():
            grouped.setdefault(key_fn(record), {})[record] = dv
        out: dict = {}
        for key_value, dk in grouped.items():
            part = parts.get(key_value)
            old_out = group_part_outputs(key_value, part, reducer) if part else {}
            if part is None:
                part = {}
                parts[key_value] = part
            for record, dv in dk.items():
                w = part.get(record, 0.0) + dv
                if -_EPS <= w <= _EPS:
                    part.pop(record, None)
                else:
                    part[record] = w
            if part:
                new_out = group_part_outputs(key_value, part, reducer)
            else:
                new_out = {}
                del parts[key_value]
            for record, w in new_out.items():
                dv = w - old_out.get(record, 0.0)
                if dv != 0.0:
                    out[record] = out.get(record, 0.0) + dv
            for record, w in old_out.items():
                if record not in new_out:
                    out[record] = out.get(record, 0.0) - w
        return out

    def _apply_min_max(self, node, d0: dict, d1: dict, pick) -> dict:
        pa, pb = node.parents
        out_a = self.node_outputs[pa]
        out_b = self.node_outputs[pb]
        own = self.node_outputs[node.id]
        out: dict = {}
        touched = set(d0)
        touched.update(d1)
        for record in touched:
            new = pick(out_a.get(record, 0.0), out_b.get(record, 0.0))
            old = own.get(record, 0.0)
            if new != old:
                out[record] = new - old
        return out

    def _apply_join(self, node, d0: dict, d1: dict) -> dict:
        params = node.params
        key_a = params["key_a"]
        key_b = params["key_b"]
        result = params["result"]
        state = self.op_state[node.id]
        left = state["left"]
        right = state["right"]
        lnorm = state["lnorm"]
        rnorm = state["rnorm"]
        dl: dict = {}
        for record, dv in d0.items():
            dl.setdefault(key_a(record), {})[record] = dv
        dr: dict = {}
        for record, dv in d1.items():
            dr.setdefault(key_b(record), {})[record] = dv
        touched = set(dl)
        touched.update(dr)
        rescales = 0
        out: dict = {}
        for k in touched:
            part_a = left.get(k, {})
            part_b = right.get(k, {})
            a = dl.get(k)
            b = dr.get(k)
            na = lnorm.get(k, 0.0)
            nb = rnorm.get(k, 0.0)
            new_a = dict(part_a)
            if a:
                for record, dv in a.items():
                    w = new_a.get(record, 0.0) + dv
                    if -_EPS <= w <= _EPS:
                        new_a.pop(record, None)
                    else:
                        new_a[record] = w
            new_b = dict(part_b)
            if b:
                for record, dv in b.items():
                    w = new_b.get(record, 0.0) + dv
                    if -_EPS <= w <= _EPS:
                        new_b.pop(record, None)
                    else:
                        new_b[record] = w
            new_na = sum(map(abs, new_a.values())) if new_a else 0.0
            new_nb = sum(map(abs, new_b.values())) if new_b else 0.0
            denom_old = na + nb
            denom_new = new_na + new_nb
            if denom_new == denom_old and denom_old > 0.0:
                scale = 1.0 / denom_old
                if a and part_b:
                    for ra, wa in a.items():
                        for rb, wb in part_b.items():
                            image = result(ra, rb)
                            out[image] = out.get(image, 0.0) + wa * wb * scale
                if b and part_a:
                    for rb, wb in b.items():
                        for ra, wa in part_a.items():
                            image = result(ra, rb)
                            out[image] = out.get(image, 0.0) + wa * wb * scale
                if a and b:
                    for ra, wa in a.items():
                        for rb, wb in b.items():
                            image = result(ra, rb)
                            out[image] = out.get(image, 0.0) + wa * wb * scale
            else:
                rescales += 1
                if part_a and part_b and denom_old > 0.0:
                    scale = 1.0 / denom_old
                    for ra, wa in part_a.items():
                        for rb, wb in part_b.items():
                            image = result(ra, rb)
                            out[image] = out.get(image, 0.0) - wa * wb * scale
                if new_a and new_b and denom_new > 0.0:
                    scale = 1.0 / denom_new
                    for ra, wa in new_a.items():
                        for rb, wb in new_b.items():
                            image = result(ra, rb)
                            out[image] = out.get(image, 0.0) + wa * wb * scale
            if new_a:
                left[k] = new_a
                lnorm[k] = new_na
            else:
                left.pop(k, None)
                lnorm.pop(k, None)
            if new_b:
                right[k] = new_b
                rnorm[k] = new_nb
            else:
                right.pop(k, None)
                rnorm.pop(k, None)
        if rescales:
            self.last_join_rescales[node.id] = (
                self.last_join_rescales.get(node.id, 0) + rescales
            )
        return out
