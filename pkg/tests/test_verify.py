"""The gradient-check harness itself: it must catch wrong gradients."""

import numpy as np
import pytest

from lowmode import verify
from lowmode.nn import preset


def test_rel_error_scale_and_floor():
    assert verify.rel_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert verify.rel_error([0.0], [0.0]) == 0.0
    assert verify.rel_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)
    assert verify.rel_error([1e-12], [0.0], floor=1.0) == pytest.approx(1e-12)


def test_fd_check_detects_wrong_gradient():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(5)
    loss = lambda: float((x ** 3).sum())  # noqa: E731
    good, _, _ = verify.fd_check(loss, {"x": x}, {"x": 3 * x ** 2})
    bad, name, _ = verify.fd_check(loss, {"x": x}, {"x": 2 * x ** 2})
    assert good < 1e-8 and bad > 0.1 and name == "x"


@pytest.mark.parametrize("op", ["conv2d_backward", "batchnorm_backward", "transform_grad_array"])
def test_each_fault_is_caught(op):
    faulty = verify.with_fault(op)
    failed = [s for s in verify.OP_SUITES if not s(range(2), faulty).passed]
    assert failed, op
    assert all(s(range(2), verify.default_ops()).passed for s in verify.OP_SUITES)


def test_suite_line_names_ops():
    r = verify.check_avgpool2d(range(2), verify.with_fault("avgpool2d_backward"))
    assert not r.passed and "avgpool2d" in r.line() and "FAIL" in r.line()


def test_tiny_network_both_modes():
    for mode in ("full", "low"):
        assert verify.check_network("tiny-cnn", mode, range(3)).passed


def test_chained_update_is_exact():
    pytest.importorskip("torch")
    err, _ = verify.chained_update_check(preset("tiny-cnn"), seed=4, batch=3)
    assert err <= 1e-12


def test_torch_oracle_catches_wrong_transform_gradient(monkeypatch):
    """Routing the pooled-kernel gradient wrongly must break the update equivalence."""
    pytest.importorskip("torch")
    from lowmode import transform

    real = transform.backprop_through_transform
    monkeypatch.setattr(transform, "backprop_through_transform", lambda bank, g: 2.0 * real(bank, g))
    err, where = verify.chained_update_check(preset("tiny-cnn"), seed=0)
    assert err > 1e-6 and "conv" in where
