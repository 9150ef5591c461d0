import numpy as np
import pytest

from lowmode import data
from lowmode.errors import DataFormatError, TrainingAborted
from lowmode.nn import Param, ParamStore, build_network, preset
from lowmode.schedule import LrSchedule, ModeSchedule
from lowmode.trainer import (
    TrainConfig,
    evaluate,
    full_mode_step,
    load_checkpoint,
    low_mode_step,
    read_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
    write_checkpoint,
)
from lowmode.transform import refresh_if_dirty


def store(**values):
    ps = ParamStore()
    for k, v in values.items():
        ps.add(k, np.asarray(v, dtype=np.float64))
    return ps


def test_sgd_two_step_hand_example():
    ps = store(w=[1.0])
    sgd_step(ps, {"w": np.array([1.0])}, 0.1, 0.9, 0.0)
    assert ps["w"].value[0] == pytest.approx(0.9, abs=1e-15)
    sgd_step(ps, {"w": np.array([1.0])}, 0.1, 0.9, 0.0)
    assert ps["w"].value[0] == pytest.approx(0.71, abs=1e-15)


def test_sgd_vanilla_and_decay():
    ps = store(w=[2.0, -1.0])
    sgd_step(ps, {"w": np.array([0.5, 0.25])}, 0.2, 0.0, 0.0)
    np.testing.assert_array_equal(ps["w"].value, [2.0 - 0.2 * 0.5, -1.0 - 0.2 * 0.25])
    ps["w"].momentum[:] = [1.0, 1.0]
    for i in range(1, 4):
        sgd_step(ps, {"w": np.zeros(2)}, 0.0, 0.5, 0.0)
        np.testing.assert_array_equal(ps["w"].momentum, [0.5 ** i] * 2)


def test_sgd_skips_params_without_grad():
    ps = store(a=[1.0], b=[1.0])
    sgd_step(ps, {"a": np.array([1.0])}, 0.1, 0.9, 5e-4)
    assert ps["b"].value[0] == 1.0 and ps["b"].version == 0 and ps["a"].version == 1


def tiny_dataset(n=40, size=32, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    return data.Dataset(rng.standard_normal((n, 3, size, size)).astype(np.float32), labels, "val")


def test_evaluate_chance_level_and_no_mutation():
    ds = tiny_dataset(200)
    accs = []
    for seed in range(5):
        net, params = build_network(preset("tiny-cnn"), seed=seed, dtype=np.float32)
        before = {k: v.copy() for k, v in params.buffers.items()}
        accs.append(evaluate(net, params, ds, 64))
        assert all(np.array_equal(before[k], params.buffers[k]) for k in before)
    assert abs(np.mean(accs) - 0.1) <= 0.03


def test_evaluate_perfect_logits():
    class Oracle:
        def forward(self, params, x, mode, training):
            out = np.zeros((len(x), 10))
            out[np.arange(len(x)), x[:, 0, 0, 0].astype(int)] = 1.0
            return out

    labels = np.arange(30) % 10
    images = np.zeros((30, 1, 1, 1), np.float32)
    images[:, 0, 0, 0] = labels
    ps = store(w=[0.0])
    assert evaluate(Oracle(), ps, data.Dataset(images, labels), 7) == 1.0
    with pytest.raises(ValueError):
        evaluate(Oracle(), ps, data.Dataset(images[:0], labels[:0]))


def test_low_step_only_touches_reachable_params():
    spec = preset("resnet18-cifar", width=2)
    net, params = build_network(spec, seed=0)
    before = {p.name: p.value.copy() for p in params}
    x = np.random.default_rng(0).standard_normal((2, 3, 16, 16))
    low_mode_step(net, params, x, np.array([1, 2]), 0.1, TrainConfig(epochs=1))
    changed = {n for n, v in before.items() if not np.array_equal(v, params[n].value)}
    # every parameter is on the low-mode path of a resnet (maxpool skip has no params)
    assert changed == set(before)
    # a transform bank became stale after the update and is refreshed on demand
    bank = net.banks["layer1.0.conv1.weight"]
    assert bank.dirty
    refresh_if_dirty(bank)
    assert not bank.dirty


def test_low_step_leaves_unreachable_param_untouched():
    net, params = build_network(preset("tiny-cnn"), seed=0)
    params.add("orphan", np.ones(3))
    full_mode_step(net, params, np.zeros((2, 3, 32, 32)), np.array([0, 1]), 0.1, TrainConfig(epochs=1))
    low_mode_step(net, params, np.zeros((2, 3, 16, 16)), np.array([0, 1]), 0.1, TrainConfig(epochs=1))
    assert np.array_equal(params["orphan"].value, np.ones(3)) and params["orphan"].version == 0


def small_run(epochs, p, seed=0, **kw):
    sched = ModeSchedule.constant(p, epochs, forced_full_window=1, lr_adjust_epochs=[3], seed=seed)
    return TrainConfig(epochs=epochs, batch_size=20, seed=seed, schedule=sched,
                       lr=LrSchedule(0.05, [(3, 0.005)]), deterministic=True, **kw)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    root = data.synthetic_cifar10(tmp_path_factory.mktemp("syn"), 10, 4, seed=1)
    return data.load_cifar10(root)


def test_train_writes_artifacts_and_counts_modes(tmp_path, small_data):
    train_ds, val_ds = small_data
    net, params = build_network(preset("tiny-cnn"), seed=0, dtype=np.float32)
    res = train(net, params, train_ds, val_ds, small_run(3, 1.0), out_dir=tmp_path)
    assert [r.epoch for r in res.history] == [0, 1, 2, 3]
    # epoch 1 and epoch 3 are forced full-mode windows, epoch 2 runs low only
    assert [(r.low_iters, r.full_iters) for r in res.history[1:]] == [(0, 5), (5, 0), (0, 5)]
    times = [r.wall_time_s for r in res.history]
    assert all(b > a for a, b in zip(times, times[1:]))
    for name in ("metrics.csv", "timing.csv", "checkpoint.bin"):
        assert (tmp_path / name).exists()
    assert len(res.iter_times["low"]) == 5 and res.train_time_s > 0


def test_resume_reproduces_run(tmp_path, small_data):
    train_ds, val_ds = small_data

    def run(epochs, out, resume=None):
        net, params = build_network(preset("tiny-cnn"), seed=0, dtype=np.float32)
        train(net, params, train_ds, val_ds, small_run(epochs, 0.5), out_dir=out, resume=resume)
        return params

    straight = run(4, tmp_path / "a")
    run(2, tmp_path / "b")
    resumed = run(4, tmp_path / "c", resume=tmp_path / "b" / "checkpoint.bin")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "c" / "metrics.csv").read_bytes()
    assert all(np.array_equal(straight[n].value, resumed[n].value) for n in straight.names())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_loss_aborts_with_diagnostic(small_data):
    train_ds, val_ds = small_data
    net, params = build_network(preset("tiny-cnn"), seed=0, dtype=np.float32)
    cfg = small_run(2, 0.0)
    cfg.lr = LrSchedule(1e30)
    with pytest.raises(TrainingAborted, match=r"epoch 1, iteration \d+ \(full mode\)"):
        train(net, params, train_ds, val_ds, cfg)


def test_checkpoint_format(tmp_path):
    path = tmp_path / "c.bin"
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([1, 2], dtype=np.int64)}
    write_checkpoint(path, tensors, {"epoch": 3})
    got, header = read_checkpoint(path)
    assert header["epoch"] == 3
    for k, v in tensors.items():
        assert got[k].dtype == v.dtype and np.array_equal(got[k], v)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DataFormatError):
        read_checkpoint(path)
    (tmp_path / "junk.bin").write_bytes(b"not a checkpoint")
    with pytest.raises(DataFormatError):
        read_checkpoint(tmp_path / "junk.bin")


def test_checkpoint_shape_mismatch(tmp_path):
    net, params = build_network(preset("tiny-cnn"), seed=0)
    save_checkpoint(tmp_path / "c.bin", params, 1, [])
    _, wider = build_network(preset("tiny-cnn", width=4), seed=0)
    with pytest.raises(DataFormatError, match="shape"):
        load_checkpoint(tmp_path / "c.bin", wider)
    # restoring into a same-shaped store invalidates pooled-kernel caches
    _, same = build_network(preset("tiny-cnn"), seed=1)
    load_checkpoint(tmp_path / "c.bin", same)
    assert same["conv1.weight"].version == 1
    assert np.array_equal(same["conv1.weight"].value, params["conv1.weight"].value)


def test_config_validation():
    from lowmode.errors import ConfigError

    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=2, schedule=ModeSchedule.constant(0.5, 3))
    assert Param("x", np.zeros(1)).version == 0
