import math
import random

import pytest

from weightflow.core import WeightedDataset, difference_norm
from weightflow.transforms import (
    concat,
    except_,
    group_by,
    intersect,
    join,
    select,
    select_many,
    shave,
    union,
    where,
)

A = WeightedDataset({"1": 0.75, "2": 2.0, "3": 1.0})
B = WeightedDataset({"1": 3.0, "4": 2.0})
C = WeightedDataset({"1": 0.75, "2": 2.0, "3": 1.0, "4": 2.0, "5": 2.0})

TOL = 1e-9


def close(d, expected):
    got = d.to_dict()
    assert set(got) == set(expected), (sorted(got), sorted(expected))
    for r, w in expected.items():
        assert abs(got[r] - w) < TOL, (r, got[r], w)


def parity(x):
    return str(int(x) % 2)


def test_select_parity_golden():
    close(select(A, parity), {"0": 2.0, "1": 1.75})


def test_select_identity_and_constant():
    assert select(A, lambda x: x) == A
    close(select(B, lambda x: "k"), {"k": 5.0})


def test_where_golden_and_edges():
    close(where(A, lambda x: int(x) ** 2 < 5), {"1": 0.75, "2": 2.0})
    assert where(A, lambda x: True) == A
    assert len(where(A, lambda x: False)) == 0


def test_select_many_golden():
    out = select_many(A, lambda x: [i + 1 for i in range(int(x))])
    close(out, {1: 0.75 + 1.0 + 1.0 / 3.0, 2: 1.0 + 1.0 / 3.0, 3: 1.0 / 3.0})


def test_select_many_edge_to_endpoints():
    out = select_many(WeightedDataset({("a", "b"): 1.0}), lambda e: [e[0], e[1]])
    close(out, {"a": 0.5, "b": 0.5})


def test_select_many_singleton_is_select():
    assert select_many(A, lambda x: [x]) == A


def test_select_many_accepts_weighted_images():
    # sub-unit images are not scaled up, only down to unit norm
    out = select_many(WeightedDataset({"x": 2.0}), lambda x: WeightedDataset({"y": 0.25}))
    close(out, {"y": 0.5})


def test_group_by_golden():
    out = group_by(C, lambda x: "odd" if int(x) % 2 else "even", tuple)
    close(
        out,
        {
            ("odd", ("5",)): 0.5,
            ("odd", ("3", "5")): 0.125,
            ("odd", ("1", "3", "5")): 0.375,
            ("even", ("2", "4")): 1.0,
        },
    )


def test_group_by_count_reducer_on_edges():
    edges = WeightedDataset({("a", "b"): 1.0, ("a", "c"): 1.0, ("b", "c"): 1.0})
    out = group_by(edges, lambda e: e[0], len)
    close(out, {("a", 2): 0.5, ("b", 1): 0.5})


def test_group_by_empty():
    assert len(group_by(WeightedDataset(), lambda x: x, len)) == 0


def test_group_by_weight_conservation():
    rng = random.Random(5)
    for _ in range(50):
        data = WeightedDataset({i: rng.uniform(0.01, 4.0) for i in range(rng.randrange(1, 12))})
        out = group_by(data, lambda x: x % 3, tuple)
        for key in (0, 1, 2):
            part_max = max((w for r, w in data.items() if r % 3 == key), default=0.0)
            got = sum(w for (k, _), w in out.items() if k == key)
            assert abs(got - part_max / 2.0) < TOL


def test_shave_golden():
    close(
        shave(A, 1.0),
        {("1", 0): 0.75, ("2", 0): 1.0, ("2", 1): 1.0, ("3", 0): 1.0},
    )


def test_shave_select_inverse():
    rng = random.Random(9)
    data = WeightedDataset({i: rng.uniform(0.01, 4.0) for i in range(20)})
    back = select(shave(data, 0.5), lambda t: t[0])
    assert difference_norm(back, data) < TOL


def test_shave_custom_schedule():
    out = shave(WeightedDataset({"x": 1.0}), lambda x: [0.5, 0.25])
    # finite schedules drop whatever weight they do not cover
    close(out, {("x", 0): 0.5, ("x", 1): 0.25})


def test_shave_drops_nonpositive_weights():
    assert len(shave(WeightedDataset({"x": -1.0}), 1.0)) == 0


def test_shave_rejects_bad_schedules():
    with pytest.raises(ValueError):
        shave(A, -0.5)
    with pytest.raises(ValueError):
        shave(WeightedDataset({"x": 1.0}), lambda x: [-0.25])


def test_join_golden():
    # the worked example pairs B with a variant of A whose "1" weighs 0.5
    a1 = WeightedDataset({"1": 0.5, "2": 2.0, "3": 1.0})
    out = join(a1, B, lambda x: int(x) % 2, lambda x: int(x) % 2)
    close(
        out,
        {("2", "4"): 1.0, ("1", "1"): 1.0 / 3.0, ("3", "1"): 2.0 / 3.0},
    )


def test_join_paths_weight():
    # symmetric unit edges of a path a-b-c self-joined on the middle node
    edges = WeightedDataset(
        {("a", "b"): 1.0, ("b", "a"): 1.0, ("b", "c"): 1.0, ("c", "b"): 1.0}
    )
    out = join(
        edges,
        edges,
        lambda e: e[1],
        lambda e: e[0],
        lambda x, y: (x[0], x[1], y[1]),
    )
    # four records share key b (deg 2): each path weighs 1/(2*2)
    assert abs(out.weight_of(("a", "b", "c")) - 0.25) < TOL
    assert abs(out.weight_of(("c", "b", "a")) - 0.25) < TOL


def test_join_empty_side():
    assert len(join(A, WeightedDataset(), lambda x: 0, lambda x: 0)) == 0


def test_join_per_key_weight_band():
    rng = random.Random(11)
    for _ in range(100):
        a = WeightedDataset({i: rng.uniform(0.01, 4.0) for i in range(rng.randrange(1, 10))})
        b = WeightedDataset({i: rng.uniform(0.01, 4.0) for i in range(rng.randrange(1, 10))})
        out = join(a, b, lambda x: x % 2, lambda x: x % 2, lambda x, y: (x, y))
        for key in (0, 1):
            na = sum(w for r, w in a.items() if r % 2 == key)
            nb = sum(w for r, w in b.items() if r % 2 == key)
            got = sum(w for (x, y), w in out.items() if x % 2 == key)
            if na == 0.0 or nb == 0.0:
                assert got == 0.0
            else:
                lo, hi = 0.5 * min(na, nb), min(na, nb)
                assert lo - TOL <= got <= hi + TOL


def test_union_intersect_goldens():
    close(intersect(A, B), {"1": 0.75})
    close(union(A, B), {"1": 3.0, "2": 2.0, "3": 1.0, "4": 2.0})
    assert len(intersect(A, WeightedDataset())) == 0
    assert union(A, WeightedDataset()) == A


def test_concat_except_goldens():
    close(concat(A, B), {"1": 3.75, "2": 2.0, "3": 1.0, "4": 2.0})
    assert len(except_(A, A)) == 0
    close(except_(A, B), {"1": -2.25, "2": 2.0, "3": 1.0, "4": -2.0})


def test_select_norm_preserved_for_positive_inputs():
    rng = random.Random(3)
    for _ in range(50):
        data = WeightedDataset({i: rng.uniform(0.01, 4.0) for i in range(15)})
        out = select(data, lambda x: x % 4)
        assert abs(out.size_norm - data.size_norm) < TOL
