import pytest

from lowmode.errors import ConfigError
from lowmode.schedule import LrSchedule, ModeSchedule, effective_prob, lr_at, mode_stream, next_mode


def test_lr_steps():
    s = LrSchedule(0.1, [(80, 0.01), (120, 0.001)])
    assert [lr_at(s, e) for e in (1, 79, 80, 119, 120, 200)] == [0.1, 0.1, 0.01, 0.01, 0.001, 0.001]
    assert lr_at(LrSchedule(0.05, []), 150) == 0.05
    assert s.adjust_epochs == [80, 120]


def test_forced_windows_after_adjustments():
    s = ModeSchedule.constant(0.5, 200, forced_full_window=4, lr_adjust_epochs=[80, 120])
    zero = [e for e in range(1, 201) if effective_prob(s, e) == 0.0]
    assert zero == [1, 2, 3, 4, 80, 81, 82, 83, 120, 121, 122, 123]
    assert effective_prob(s, 50) == 0.5
    assert effective_prob(s, 84) == 0.5


def test_start_window_optional():
    s = ModeSchedule.constant(0.5, 10, forced_full_window=2, force_at_start=False)
    assert effective_prob(s, 1) == 0.5


def test_extreme_probabilities():
    assert set(mode_stream(ModeSchedule.constant(0.0, 3, forced_full_window=0), 2, 500)) == {"full"}
    assert set(mode_stream(ModeSchedule.constant(1.0, 3, forced_full_window=0), 2, 500)) == {"low"}


def test_deterministic_policy_period():
    s = ModeSchedule.constant(0.5, 3, forced_full_window=0, policy="deterministic", period=3)
    assert mode_stream(s, 1, 6) == ["full", "full", "low", "full", "full", "low"]


def test_stream_is_reproducible_and_seeded():
    a = ModeSchedule.constant(0.5, 5, forced_full_window=0, seed=4)
    b = ModeSchedule.constant(0.5, 5, forced_full_window=0, seed=4)
    c = ModeSchedule.constant(0.5, 5, forced_full_window=0, seed=5)
    assert mode_stream(a, 3, 200) == mode_stream(b, 3, 200)
    assert mode_stream(a, 3, 200) != mode_stream(c, 3, 200)
    # a single query does not depend on what was asked before
    assert next_mode(a, 3, 150) == mode_stream(b, 3, 200)[149]


@pytest.mark.parametrize("kw", [dict(probs=[1.5]), dict(probs=[-0.1]), dict(probs=[]),
                                dict(probs=[0.5], policy="adaptive"), dict(probs=[0.5], period=0),
                                dict(probs=[0.5], forced_full_window=-1)])
def test_invalid_schedules(kw):
    with pytest.raises(ConfigError):
        ModeSchedule(**kw)


def test_epoch_out_of_range():
    with pytest.raises(ValueError):
        effective_prob(ModeSchedule.constant(0.5, 3), 4)
