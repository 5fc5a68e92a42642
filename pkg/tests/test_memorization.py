import math

import pytest

from pdmprare.core import (DegenerateRecordError, State, SurvivalRecord,
                           preponderant_extension, simulate)
from pdmprare.memorization import (DifferentiationDraw,
                                   _conditioned_boundary_table,
                                   sample_avoiding_extension,
                                   sample_differentiation_time)
from pdmprare.oracle import differentiation_time_between
from pdmprare.streams import Stream
from pdmprare.systems import OFF, ON, make_system
from support import ALT, RUN, LineModel


class QueuedStream:
    """Feeds predetermined uniforms; picks go through the real arithmetic."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self):
        return self.values.pop(0)

    def pick(self, weights):
        u = self.uniform() * math.fsum(weights)
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u <= acc:
                return i
        return len(weights) - 1


def _line_record():
    # RUN at rate 0.3 over [0, 1), forced jump dropping to 0.5, ALT at
    # rate 0.5 over [1, 2]
    pre = math.exp(-0.3)
    post = 0.5
    terminal = 0.5 * math.exp(-0.5)
    return SurvivalRecord(
        breakpoints=((1.0, pre, post),),
        interval_states=(State((0.2,), RUN), State((0.0,), ALT)),
        terminal=terminal,
        horizon=2.0,
        preponderant=True,
    )


def _v_for(record, u):
    return (u - record.terminal) / (1.0 - record.terminal)


def test_walk_crosses_first_interval():
    model, record = LineModel(), _line_record()
    u = 0.9
    draw = sample_differentiation_time(model, record, QueuedStream([_v_for(record, u)]))
    assert not draw.at_boundary_jump
    assert draw.segment_index == 0
    assert draw.tau == pytest.approx(math.log(1.0 / u) / 0.3, rel=1e-12)
    assert draw.u_tilde == pytest.approx(u)


def test_walk_crosses_inside_the_drop():
    model, record = LineModel(), _line_record()
    draw = sample_differentiation_time(model, record, QueuedStream([_v_for(record, 0.6)]))
    assert draw.at_boundary_jump
    assert draw.segment_index == 0
    assert draw.tau == 1.0


def test_walk_crosses_final_interval():
    model, record = LineModel(), _line_record()
    u = 0.4
    draw = sample_differentiation_time(model, record, QueuedStream([_v_for(record, u)]))
    assert not draw.at_boundary_jump
    assert draw.segment_index == 1
    assert draw.tau == pytest.approx(1.0 + math.log(0.5 / u) / 0.5, rel=1e-12)


def test_walk_skips_flat_interval():
    # no decay before the jump: every draw lands in the drop
    record = SurvivalRecord(breakpoints=((1.0, 1.0, 0.4),),
                            interval_states=(State((0.0,), RUN), State((0.0,), ALT)),
                            terminal=0.4, horizon=1.5, preponderant=True)
    for v in (0.01, 0.5, 0.99):
        draw = sample_differentiation_time(LineModel(), record, QueuedStream([v]))
        assert draw.at_boundary_jump and draw.tau == 1.0


def test_walk_rejects_bad_records():
    model = LineModel()
    good = _line_record()
    truncated = SurvivalRecord(good.breakpoints, good.interval_states,
                               0.4, 2.0, False)
    with pytest.raises(ValueError, match="truncated"):
        sample_differentiation_time(model, truncated, QueuedStream([0.5]))
    sure = SurvivalRecord((), (State((0.2,), RUN),), 1.0, 2.0, True)
    with pytest.raises(DegenerateRecordError):
        sample_differentiation_time(model, sure, QueuedStream([0.5]))


def _survival_at(model, record, t):
    """Evaluate F(t) by walking the record."""
    f, t_prev = 1.0, 0.0
    for i, (s, pre, post) in enumerate(record.breakpoints):
        if t < s:
            return f * math.exp(-model.cumulative_rate(record.interval_states[i], t - t_prev))
        f *= math.exp(-model.cumulative_rate(record.interval_states[i], s - t_prev))
        f *= post / pre if pre > 0.0 else 0.0
        t_prev = s
    last = record.interval_states[len(record.breakpoints)]
    return f * math.exp(-model.cumulative_rate(last, t - t_prev))


def test_u_tilde_brackets_the_survival_function():
    model = LineModel()
    stream = Stream(202)
    checked = 0
    for i in range(500):
        _, record = simulate(model, model.initial_state(), 3.0, stream.child("sim", i))
        if not record.preponderant or not 0.0 < record.terminal < 1.0:
            continue
        draw = sample_differentiation_time(model, record, stream.child("draw", i))
        assert 0.0 < draw.tau <= record.horizon
        if draw.at_boundary_jump:
            s, pre, post = record.breakpoints[draw.segment_index]
            assert post <= draw.u_tilde <= pre
        else:
            f_tau = _survival_at(model, record, draw.tau)
            assert f_tau == pytest.approx(draw.u_tilde, abs=1e-8)
        checked += 1
    assert checked > 120


def test_conditioned_table_excludes_recorded_arrival():
    model = LineModel()
    table = _conditioned_boundary_table(model, State((1.0,), RUN),
                                        State((0.0,), RUN))
    assert len(table.entries) == 1
    z, q = table.entries[0]
    assert z.m == ALT and q == 1.0


def test_conditioned_table_degenerate_when_branch_is_certain():
    room = make_system("heated_room")
    departure = State((25.0,), (ON, OFF))
    recorded = State((25.0,), (OFF, OFF))
    with pytest.raises(DegenerateRecordError, match="no mass"):
        _conditioned_boundary_table(room, departure, recorded)


def test_avoiding_extension_differs_within_horizon():
    model = make_system("heated_room", x0=20.0, m0=(OFF, OFF), fail_a=0.05,
                        gamma=0.1, tf=6.0)
    z0 = model.initial_state()
    segment, _v, record = preponderant_extension(model, z0, 6.0)
    stream = Stream(77)
    boundary_hits = spontaneous = 0
    for i in range(150):
        ext = sample_avoiding_extension(model, z0, 6.0, segment, record,
                                        stream.child(i))
        t = differentiation_time_between(segment, ext)
        assert 0.0 < t <= 6.0
        assert ext.horizon == 6.0
        # the matched prefix is copied verbatim
        for a, b in zip(segment.jumps, ext.jumps):
            if a == b:
                continue
            assert b.time == pytest.approx(t) or a.time == pytest.approx(t)
            break
        forced_here = any(j.forced and j.time == pytest.approx(t) for j in ext.jumps) \
            or any(j.forced and j.time == pytest.approx(t) for j in segment.jumps)
        if forced_here:
            boundary_hits += 1
        else:
            spontaneous += 1
    # the demo room puts real mass on both differentiation flavors
    assert boundary_hits > 10 and spontaneous > 10


def test_avoiding_extension_checks_horizons():
    model = LineModel()
    segment, _v, record = preponderant_extension(model, model.initial_state(), 2.0)
    with pytest.raises(ValueError, match="same interval"):
        sample_avoiding_extension(model, model.initial_state(), 1.5, segment,
                                  record, Stream(1))


def test_boundary_start_extension_supports_avoiding_draws():
    # a deterministic extension computed from a boundary state opens with
    # the t = 0 control jump; differing right there restarts from the
    # other kernel branch
    model = LineModel()
    z0 = State((1.0,), RUN)
    segment, v, record = preponderant_extension(model, z0, 1.5)
    assert record.breakpoints[0] == (0.0, 1.0, 0.7)
    stream = Stream(97)
    openings = 0
    for i in range(150):
        ext = sample_avoiding_extension(model, z0, 1.5, segment, record,
                                        stream.child(i))
        if ext.initial != segment.initial:
            assert ext.initial == State((0.0,), ALT)
            openings += 1
        else:
            assert 0.0 < differentiation_time_between(segment, ext) <= 1.5
    # the opening branch holds mass 0.3 of the differing law; it must show up
    assert openings > 10


def test_boundary_start_record_can_differ_at_time_zero():
    # a segment recorded from a boundary start opens with a normalization
    # breakpoint at t = 0 carrying no skeleton jump; differing there
    # restarts from the excluded kernel branch
    model = LineModel()
    z0 = State((1.0,), RUN)
    segment = record = None
    for i in range(50):
        sk, rec = simulate(model, z0, 1.5, Stream(63).child("scan", i))
        if rec.preponderant and 0.0 < rec.terminal < 1.0 and sk.initial.m == RUN:
            segment, record = sk, rec
            break
    assert segment is not None
    assert record.breakpoints[0][0] == 0.0
    assert segment.initial == State((0.0,), RUN)
    stream = Stream(31)
    restarted = 0
    for i in range(200):
        ext = sample_avoiding_extension(model, z0, 1.5, segment, record,
                                        stream.child(i))
        if ext.initial != segment.initial:
            assert ext.initial == State((0.0,), ALT)
            restarted += 1
        else:
            assert differentiation_time_between(segment, ext) > 0.0
    assert restarted > 0


def test_mixture_reproduces_unconditioned_first_jump_flavor():
    # weight terminal on the recorded segment plus (1 - terminal) on
    # avoiding draws must match plain simulation; compare the fraction of
    # paths whose first jump is forced at the recorded time
    model = LineModel()
    z0 = model.initial_state()
    dt = 2.0
    segment, v, record = preponderant_extension(model, z0, dt)
    assert v == record.terminal
    first_forced = segment.jumps[0]
    stream = Stream(404)
    n = 1500
    hits = 0
    for i in range(n):
        if stream.child("mix", i).uniform() < v:
            hits += 1
            continue
        ext = sample_avoiding_extension(model, z0, dt, segment, record,
                                        stream.child("avoid", i))
        j = ext.jumps[0]
        if j.forced and j.time == first_forced.time and j.arrival == first_forced.arrival:
            hits += 1
    ref = 0
    for i in range(n):
        sk, _ = simulate(model, z0, dt, stream.child("plain", i))
        j = sk.jumps[0] if sk.jumps else None
        if j is not None and j.forced and j.time == first_forced.time \
                and j.arrival == first_forced.arrival:
            ref += 1
    p, q = hits / n, ref / n
    se = math.sqrt((p * (1 - p) + q * (1 - q)) / n)
    assert abs(p - q) < 4.0 * max(se, 1e-3)


def test_draw_is_a_value_object():
    d = DifferentiationDraw(1.0, True, 0, 0.5)
    assert d == DifferentiationDraw(1.0, True, 0, 0.5)
    with pytest.raises(AttributeError):
        d.tau = 2.0
