import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from lowmode import cost
from lowmode.nn import LayerSpec, NetworkSpec, PRESETS, preset
from lowmode.schedule import ModeSchedule
from lowmode.transform import TransformSpec


def one_conv(k=3, cin=16, cout=32, stride=1, pad=1, size=8, transformable=True):
    return NetworkSpec("one", [
        LayerSpec("conv", "c", dict(cin=cin, cout=cout, k=k, stride=stride, pad=pad), transformable),
        LayerSpec("global_avgpool", "pool"),
        LayerSpec("linear", "fc", dict(din=cout, dout=10)),
    ], in_channels=cin, input_size=size)


def test_single_conv_macs():
    rep = cost.cost_report(one_conv(), TransformSpec(2))
    conv = rep.layers["full"][0]
    assert conv.macs == 9 * 16 * 8 * 8 * 32 == 294912
    assert conv.param_count == 9 * 16 * 32
    assert rep.layers["full"][-1].macs == 320
    assert rep.total("full") == 294912 + 320


def test_batch_scales_totals():
    one, many = cost.cost_report(one_conv(), batch=1), cost.cost_report(one_conv(), batch=7)
    assert many.total("low") == 7 * one.total("low")


def test_exact_sixteen_fold_reduction():
    rep = cost.cost_report(one_conv(k=2, stride=2, pad=0, size=32), TransformSpec(2))
    (f, lo), = rep.conv_pairs()
    assert lo.kernel_size == 1 and lo.cascade == Fraction(2)
    assert f.macs == 16 * lo.macs


def test_low_never_costs_more():
    for name in PRESETS:
        rep = cost.cost_report(preset(name), TransformSpec(2))
        for f, lo in rep.conv_pairs():
            assert 0 < lo.macs <= f.macs, f.layer


def test_resnet18_block_convs_shrink_ninefold():
    rep = cost.cost_report(preset("resnet18-cifar"), TransformSpec(2))
    pairs = {f.layer: (f, lo) for f, lo in rep.conv_pairs()}
    f, lo = pairs["layer1.0.conv1"]
    # 3x3 -> 1x1; maxpool skipped in low mode, so the activation is the same size
    assert lo.cascade == 1 and f.macs == 9 * lo.macs
    f, lo = pairs["stem.conv"]
    assert lo.kernel_size == 3 and f.macs == 4 * lo.macs


def test_expected_cost_examples():
    s = ModeSchedule.constant(0.5, 1, forced_full_window=0)
    assert cost.expected_training_cost((100, 40), s, 10) == [700]
    assert cost.expected_training_cost((100, 40), ModeSchedule.constant(0.0, 2), 10) == [1000, 1000]
    assert cost.expected_training_cost((100, 40), ModeSchedule.constant(1.0, 1, forced_full_window=0), 10) == [400]


def test_velocity_examples():
    assert cost.raw_velocities([0.5, 0.5, 0.5], [0, 1, 2]) == [0.0, 0.0]
    assert cost.raw_velocities([0.6, 0.4], [10, 20])[0] < 0
    assert cost.velocity_series([0, 10, 20], accuracies=[0.1, 0.2, 0.3]) == [0.01, 0.01]
    with pytest.raises(ValueError):
        cost.raw_velocities([0.1, 0.2], [5, 5])
    with pytest.raises(ValueError):
        cost.raw_velocities([0.1], [0])


def test_moving_average_edges():
    assert cost.moving_average([1.0, 2.0, 6.0]) == [1.5, 3.0, 4.0]
    assert cost.moving_average([4.0]) == [4.0]


records_st = st.lists(
    st.tuples(st.floats(0, 1e6, allow_nan=False), st.floats(0, 50, allow_nan=False), st.floats(0, 1),
              st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(0, 10 ** 15),
              st.floats(-1, 1, allow_nan=False)),
    max_size=8,
)


@given(records_st)
def test_metrics_round_trip(rows):
    recs = [cost.MetricsRecord(i, *r) for i, r in enumerate(rows)]
    assert cost.parse_metrics(cost.format_metrics(recs)) == recs


def test_fill_velocities(tmp_path):
    recs = [cost.MetricsRecord(e, 10.0 * e, 1.0, 0.1 * (e + 1), 0, 5, 0) for e in range(4)]
    cost.fill_velocities(recs)
    assert recs[0].velocity == 0.0
    assert all(math.isclose(r.velocity, 0.01) for r in recs[1:])
    cost.write_metrics(tmp_path / "m.csv", recs)
    assert cost.read_metrics(tmp_path / "m.csv") == recs


def test_format_report_mentions_totals():
    rep = cost.cost_report(preset("resnet18-cifar"), TransformSpec(2))
    text = cost.format_report(rep, ModeSchedule.constant(0.0, 2), 10)
    assert "layer1.0.conv1" in text and "low/full conv MAC ratio" in text
    assert "ratio 1.0000" in text
    assert '"conv_ratio"' in cost.report_to_json(rep)
