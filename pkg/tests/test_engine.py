import random

import pytest

from bsnmac.engine import CausalityError, Engine, EventCapExceeded, EventKind, stream_seed


def test_fires_in_time_order():
    eng = Engine(1)
    seen = []
    eng.schedule(5, seen.append, "e1")
    eng.schedule(3, seen.append, "e2")
    eng.run(10)
    assert seen == ["e2", "e1"]


def test_equal_times_fire_in_insertion_order():
    eng = Engine(1)
    seen = []
    eng.schedule(7, seen.append, "a")
    eng.schedule(7, seen.append, "b")
    eng.run(7)
    assert seen == ["a", "b"]


def test_scheduling_in_the_past_is_rejected():
    eng = Engine(1)
    eng.run(4)
    with pytest.raises(CausalityError, match="causality violation") as err:
        eng.schedule(2, lambda: None, kind=EventKind.SLOT, target="n1")
    assert "t=2" in str(err.value) and "t=4" in str(err.value) and "n1" in str(err.value)


def test_run_on_empty_queue_advances_time():
    eng = Engine(1)
    assert eng.run(100) == 0
    assert eng.now == 100


def test_run_includes_the_boundary():
    eng = Engine(1)
    for t in (1, 2, 3):
        eng.schedule(t, lambda: None)
    assert eng.run(2) == 2
    assert eng.pending == 1
    assert eng.now == 2


def test_run_backwards_is_rejected():
    eng = Engine(1)
    eng.run(10)
    with pytest.raises(CausalityError):
        eng.run(5)


def test_cancel_semantics():
    eng = Engine(1)
    seen = []
    ev = eng.schedule(5, seen.append, "x")
    assert eng.cancel(ev) is True
    assert eng.cancel(ev) is False
    eng.run(10)
    assert seen == []
    fired = eng.schedule(11, seen.append, "y")
    eng.run(20)
    assert seen == ["y"]
    assert eng.cancel(fired) is False


def test_event_cap_aborts():
    eng = Engine(1, event_cap=10)

    def again():
        eng.schedule(eng.now + 1, again)

    eng.schedule(0, again)
    with pytest.raises(EventCapExceeded, match="event cap of 10"):
        eng.run(1_000)


def test_handlers_scheduling_at_now_fire_in_the_same_run():
    eng = Engine(1)
    seen = []
    eng.schedule(3, lambda: eng.schedule(3, seen.append, "child"))
    eng.run(3)
    assert seen == ["child"]


def _random_trace(seed):
    eng = Engine(seed, trace=True)
    rng = eng.stream("driver")

    def spawn(depth):
        if depth < 4:
            for _ in range(rng.randrange(3)):
                eng.schedule(eng.now + rng.randrange(5), spawn, depth + 1, kind=EventKind.TIMER, target=f"d{depth}")

    for i in range(20):
        eng.schedule(rng.randrange(50), spawn, 0, kind=EventKind.ARRIVAL, target=f"r{i}")
    eng.run(1_000)
    return eng.trace_lines()


def test_trace_is_totally_ordered_and_deterministic():
    a = _random_trace(42)
    assert a == _random_trace(42)
    keys = [tuple(map(int, line.split()[:2])) for line in a]
    assert all(x < y for x, y in zip(keys, keys[1:]))
    assert a != _random_trace(43)


def test_named_streams_are_independent_of_creation_order():
    e1, e2 = Engine(7), Engine(7)
    e1.stream("other")
    x = [e1.stream("node/a").random() for _ in range(5)]
    y = [e2.stream("node/a").random() for _ in range(5)]
    assert x == y
    assert stream_seed(7, "node/a") != stream_seed(7, "node/b")
    assert x == [random.Random(stream_seed(7, "node/a")).random() for _ in range(1)] + y[1:]
