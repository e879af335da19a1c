import numpy as np
import pytest

from goalienet.tensor import Tensor, add, gradient_check, mse_masked, relu, tensor_sum
from gradsuite import OPS, check_micro_model, check_op


def sum_of_squares(xs):
    x = xs[0]
    sq = mse_masked(x, Tensor(np.zeros(x.shape, x.dtype)), Tensor(np.ones(x.shape[:2], x.dtype)))
    return add(sq, sq)  # the mean over two cells, doubled


def test_sum_of_squares():
    x = Tensor(np.array([[[[1.0, 2.0]]]]), requires_grad=True)
    res = gradient_check(sum_of_squares, [x])
    assert res.passed and res.checked == 2
    assert x.grad.reshape(-1).tolist() == [2.0, 4.0]


def test_kink_excluded():
    x = Tensor(np.array([0.0, 1.5, -2.0]), requires_grad=True)
    res = gradient_check(lambda xs: tensor_sum(relu(xs[0])), [x])
    assert res.passed and res.excluded == 1 and res.checked == 2


def test_near_kink_retried_with_smaller_step():
    # 5e-4 from the kink: eps=1e-3 crosses it, eps/10 does not
    x = Tensor(np.array([5e-4, -5e-4]), requires_grad=True)
    res = gradient_check(lambda xs: tensor_sum(relu(xs[0])), [x])
    assert res.passed and res.excluded == 0 and res.checked == 2


def test_reports_wrong_gradient():
    # a function whose recorded backward disagrees with its values must fail
    wrong = Tensor(np.array([1.0, 2.0]), requires_grad=True)

    def lying(xs):
        s = tensor_sum(xs[0])
        s.data = s.data * 3  # value no longer matches the recorded backward
        return s

    res = gradient_check(lying, [wrong])
    assert not res.passed and res.failures and res.max_rel_error > 0.5


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
@pytest.mark.parametrize("op", OPS)
def test_ops(op, dtype):
    for seed in range(10):
        res = check_op(op, seed, dtype)
        assert res.passed, (op, seed, res.failures)
        assert res.checked > 0


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_micro_model(dtype):
    for seed in range(5):
        res = check_micro_model(seed, dtype)
        assert res.passed, (seed, res.failures)
