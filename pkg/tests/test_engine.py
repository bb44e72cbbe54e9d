import math

import numpy as np
import pytest

from relsim.adversary import (
    ConstantReliability,
    CrashSchedule,
    LinearFraction,
    UniformReliability,
    UpfrontCrashes,
)
from relsim.engine import (
    ConfigError,
    RunConfig,
    _StreamPool,
    deliver,
    rng_stream,
    run,
)
from relsim.estimator import EstimationParams, gamma1
from relsim.metrics import RunMetrics
from relsim.protocol import ProcessorState, Share

PARAMS = EstimationParams(0.5, 0.1)


class TestRngStream:
    def test_same_key_identical(self):
        a = rng_stream(1, 2, 3, "query").random(100)
        b = rng_stream(1, 2, 3, "query").random(100)
        assert np.array_equal(a, b)

    def test_seed_changes_draws(self):
        a = rng_stream(1, 2, 3, "query").random(10)
        b = rng_stream(2, 2, 3, "query").random(10)
        assert not np.array_equal(a, b)

    def test_distinct_coordinates_distinct_streams(self):
        base = rng_stream(5, 1, 1, "query").random(8)
        for pid, rnd, stage in [(2, 1, "query"), (1, 2, "query"), (1, 1, "gossip")]:
            assert not np.array_equal(base, rng_stream(5, pid, rnd, stage).random(8))

    def test_independence_smoke(self):
        x = rng_stream(11, 0, 0, "query").random(100_000)
        y = rng_stream(11, 1, 0, "query").random(100_000)
        corr = np.corrcoef(x, y)[0, 1]
        assert abs(corr) < 0.01

    def test_pool_matches_fresh_streams(self):
        pool = _StreamPool(99, 4)
        for pid in range(4):
            for rnd in (0, 3):
                for stage in ("query", "gossip"):
                    fresh = rng_stream(99, pid, rnd, stage).random(5)
                    pooled = pool.get(pid, rnd, stage).random(5)
                    assert np.array_equal(fresh, pooled)


class TestDeliver:
    def _states(self, n):
        return [ProcessorState(id=i, n=n) for i in range(n)]

    def test_message_to_crashed_same_round_dropped(self):
        states = self._states(2)
        metrics = RunMetrics()
        schedule = CrashSchedule({1: 3})
        inboxes, drops = deliver([(1, "m", 0)], schedule, states, 3, metrics)
        assert inboxes == {}
        assert drops == [(1, "m", "crashed")]
        assert metrics.dropped_to_crashed == 1

    def test_message_to_live_delivered(self):
        states = self._states(2)
        metrics = RunMetrics()
        inboxes, drops = deliver([(1, "m", 0)], CrashSchedule({}), states, 0, metrics)
        assert inboxes == {1: ["m"]} and not drops
        assert metrics.delivered == 1

    def test_message_to_halted_dropped_separately(self):
        states = self._states(2)
        states[1].halted = True
        metrics = RunMetrics()
        _, drops = deliver([(1, "m", 0)], CrashSchedule({}), states, 0, metrics)
        assert drops == [(1, "m", "halted")]
        assert metrics.dropped_to_halted == 1

    def test_empty_batch(self):
        inboxes, drops = deliver([], CrashSchedule({}), self._states(1), 0,
                                 RunMetrics())
        assert inboxes == {} and drops == []


class TestRun:
    def test_single_processor_hand_trace(self):
        # One perfect worker queries itself every round, accumulates one
        # correct record per round, becomes enlightened once the stopping
        # threshold is reached, professes to itself, and halts on receiving
        # its own profess (the halt level for n=1 is 0).
        result = run(RunConfig(n=1, params=PARAMS, seed=7), collect_trace=True)
        assert result.completion == "all_halted"
        needed = math.ceil(gamma1(PARAMS))
        assert result.halt_rounds == [needed - 1]
        assert result.estimates[0][0] == gamma1(PARAMS) / (needed - 1)
        kinds = [(e.kind, e.round) for e in result.trace.events]
        assert ("enlighten", needed - 1) in kinds
        assert ("halt", needed - 1) in kinds
        profess_sends = [e for e in result.trace.events
                         if e.kind == "send" and e.payload["type"] == "profess"]
        assert len(profess_sends) == 1
        assert profess_sends[0].payload["to"] == 0

    def test_determinism_bit_identical(self):
        config = RunConfig(n=16, params=PARAMS, seed=5,
                           reliability=UniformReliability(0.5, 1.0))
        a = run(config, collect_trace=True)
        b = run(config, collect_trace=True)
        assert a.halt_rounds == b.halt_rounds
        assert a.metrics.messages_total == b.metrics.messages_total
        assert [e.to_line() for e in a.trace.events] == [
            e.to_line() for e in b.trace.events
        ]
        for pid in a.estimates:
            assert np.array_equal(a.estimates[pid], b.estimates[pid],
                                  equal_nan=True)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            run(RunConfig(n=0, params=PARAMS))
        with pytest.raises(ConfigError):
            run(RunConfig(n=4, params=PARAMS, max_rounds=0))

    def test_round_cap_flagged_not_raised(self):
        result = run(RunConfig(n=8, params=EstimationParams(0.2, 0.05),
                               seed=1, max_rounds=5))
        assert result.completion == "round_cap_hit"
        assert result.metrics.rounds_to_all_halt == 5
        assert result.estimates == {}

    def test_all_halted_implies_live_halted_and_time_metric(self):
        config = RunConfig(n=32, params=PARAMS, model=LinearFraction(0.25),
                           crash_pattern=UpfrontCrashes(), seed=2)
        result = run(config)
        assert result.completion == "all_halted"
        crashed = set(result.schedule.crash_round)
        for pid in range(32):
            if pid in crashed:
                assert result.halt_rounds[pid] is None
            else:
                assert result.halt_rounds[pid] is not None
        max_halt = max(r for r in result.halt_rounds if r is not None)
        assert result.metrics.rounds_to_all_halt == max_halt + 1

    def test_work_bounded_by_nine_steps_per_round(self):
        result = run(RunConfig(n=16, params=PARAMS, seed=3))
        m = result.metrics
        assert m.work_steps <= 9 * 16 * m.rounds_to_all_halt

    def test_message_conservation(self):
        config = RunConfig(n=24, params=PARAMS, model=LinearFraction(0.5),
                           crash_pattern=UpfrontCrashes(), seed=4)
        result = run(config)
        assert result.metrics.conservation_ok()

    def test_no_send_after_halt(self):
        result = run(RunConfig(n=12, params=PARAMS, seed=6), collect_trace=True)
        halt_round = {}
        for event in result.trace.events:
            if event.kind == "halt":
                halt_round[event.id] = event.round
            if event.kind == "send" and event.id in halt_round:
                assert event.round <= halt_round[event.id]

    def test_crashed_send_nothing_from_crash_round(self):
        config = RunConfig(n=8, params=PARAMS, model=LinearFraction(0.5),
                           crash_pattern=UpfrontCrashes(), seed=9)
        result = run(config, collect_trace=True)
        crashed = set(result.schedule.crash_round)
        assert crashed
        for event in result.trace.events:
            if event.kind == "send":
                assert event.id not in crashed

    def test_literal_and_prose_level_reset_observationally_identical(self):
        # Shares always carry level 0, so widening the reset comparison to
        # all received gossip never changes behavior.
        base = RunConfig(n=16, params=PARAMS, seed=21,
                         reliability=UniformReliability(0.6, 1.0))
        literal = RunConfig(n=16, params=PARAMS, seed=21,
                            reliability=UniformReliability(0.6, 1.0),
                            literal_ell_reset=True)
        a = run(base, collect_trace=True)
        b = run(literal, collect_trace=True)
        assert a.halt_rounds == b.halt_rounds
        assert [e.to_line() for e in a.trace.events] == [
            e.to_line() for e in b.trace.events
        ]

    def test_zero_crashes_zero_false_detections_when_cap_unbinding(self):
        result = run(RunConfig(n=64, params=PARAMS, seed=812))
        assert result.metrics.dropped_requests == 0
        assert result.metrics.false_crash_detections == 0

    def test_crash_event_emitted_once_per_victim(self):
        config = RunConfig(n=16, params=PARAMS, model=LinearFraction(0.5),
                           crash_pattern=UpfrontCrashes(), seed=13)
        result = run(config, collect_trace=True)
        crash_events = [e for e in result.trace.events if e.kind == "crash"]
        assert sorted(e.id for e in crash_events) == sorted(result.schedule.crash_round)

    def test_default_round_caps(self):
        assert RunConfig(n=256, params=PARAMS).effective_max_rounds() == 64 * 8
        assert RunConfig(n=1, params=PARAMS).effective_max_rounds() == 64
        from relsim.adversary import FractionalPolynomial
        assert RunConfig(n=256, params=PARAMS,
                         model=FractionalPolynomial(0.5)).effective_max_rounds() == 2048

    def test_estimates_dtype_and_population(self):
        result = run(RunConfig(n=8, params=PARAMS, seed=1))
        for pid, est in result.estimates.items():
            assert est.shape == (8,)
            assert est.dtype == np.float64
