import numpy as np
import pytest

import src.kernel.functional as F
from src.kernel.checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from src.kernel.grad_check import grad_check
from src.kernel.tensor import Tensor, matmul, no_grad, set_debug
from src.utils.errors import CorruptContainerError, DataIOError, GradCheckError, NumericFault, ShapeError


def _param(shape, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


# === matmul ===

def test_matmul_identity():
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(matmul(Tensor(np.eye(2)), Tensor(x)).data, x)


def test_matmul_hand_example():
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_grad_is_ones_times_b_transposed():
    a, b = _param((3, 4), 1), _param((4, 2), 2)
    (a @ b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 2)))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# === tape mechanics ===

def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0, -1.0]), requires_grad=True)
    y = x * x + x
    y.sum().backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_indexing_scatters_gradient():
    x = Tensor(np.arange(5.0), requires_grad=True)
    (x[np.array([0, 0, 3])].sum() + x[1:3].sum()).backward()
    np.testing.assert_allclose(x.grad, [2.0, 1.0, 1.0, 1.0, 0.0])


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_backward_needs_scalar_or_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


# === conv / pool ===

def test_conv_unit_kernel_is_identity():
    x = np.random.default_rng(0).random((2, 4, 4))
    k = np.zeros((2, 2, 1, 1))
    k[0, 0] = k[1, 1] = 1.0
    np.testing.assert_allclose(F.conv2d(Tensor(x), Tensor(k)).data, x)


def test_conv_hand_example():
    out = F.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 2, 2))))
    assert out.shape == (1, 2, 2)
    assert np.all(out.data == 4.0)


def test_conv_non_integral_output():
    with pytest.raises(ShapeError):
        F.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=2)


@pytest.mark.parametrize("stride, padding", [(1, 0), (1, 1), (2, 1)])
def test_conv_gradients_match_finite_differences(stride, padding):
    x = _param((2, 2, 5, 5), 3)
    k = _param((3, 2, 3, 3), 4, 0.5)
    b = _param((3,), 5)
    report = grad_check(lambda: F.conv2d(x, k, b, stride, padding).tanh().sum(), {"x": x, "k": k, "b": b}, eps=1e-6)
    assert report.max_rel_error < 1e-5


def test_max_pool_routes_gradient_to_argmax():
    x = Tensor(np.array([[[[1.0, 5.0], [2.0, 3.0]]]]), requires_grad=True)
    out = F.max_pool2d(x, 2)
    assert out.data.item() == 5.0
    out.sum().backward()
    assert x.grad.tolist() == [[[[0.0, 1.0], [0.0, 0.0]]]]


# === softmax family ===

def test_softmax_symmetry_and_stability():
    np.testing.assert_allclose(F.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    big = F.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0)


@pytest.mark.parametrize("shape", [(1, 1), (3, 5), (2, 4, 7), (6, 256)])
def test_softmax_rows_sum_to_one(shape):
    x = Tensor(np.random.default_rng(len(shape)).normal(scale=20.0, size=shape))
    rows = F.softmax(x, axis=-1).data.sum(axis=-1)
    np.testing.assert_allclose(rows, np.ones(shape[:-1]), rtol=0, atol=1e-12)


def test_softmax_jvp_matches_finite_differences():
    x = _param((3, 5), 7)
    w = np.random.default_rng(8).normal(size=(3, 5))
    report = grad_check(lambda: (F.softmax(x, axis=1) * w).sum(), x)
    assert report.max_rel_error < 1e-6


def test_masked_logsumexp_ignores_masked_entries():
    x = Tensor(np.array([[1.0, 2.0, 100.0]]), requires_grad=True)
    mask = np.array([[True, True, False]])
    out = F.logsumexp(x, axis=1, mask=mask)
    assert out.data[0] == pytest.approx(np.log(np.exp(1.0) + np.exp(2.0)))
    out.sum().backward()
    assert x.grad[0, 2] == 0.0


def test_fully_masked_row_has_no_gradient():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    out = F.logsumexp(x, axis=1, mask=np.array([[True, False], [False, False]]))
    assert np.isneginf(out.data[1])
    out[0].backward()
    assert np.all(np.isfinite(x.grad)) and np.all(x.grad[1] == 0.0)


def test_cross_entropy_of_uniform_logits():
    loss = F.cross_entropy(Tensor(np.zeros((4, 10))), np.array([0, 3, 5, 9]))
    assert loss.item() == pytest.approx(np.log(10.0))


# === grad_check ===

def test_grad_check_sum_is_exact():
    theta = _param((4, 3))
    report = grad_check(lambda: theta.sum(), theta)
    assert report.passed
    assert report.max_rel_error < 1e-8
    np.testing.assert_allclose(theta.grad, np.ones((4, 3)))


def test_grad_check_tanh_linear():
    W = _param((4, 3), 1, 0.3)
    x = Tensor(np.random.default_rng(2).normal(size=(3, 2)))
    report = grad_check(lambda: (W @ x).tanh().sum(), W, eps=1e-4)
    assert report.max_rel_error < 1e-5


def test_grad_check_reports_mismatch():
    theta = _param((3,))

    def wrong():
        out = Tensor.from_op(theta.data**2, (theta,), lambda g: (g * 3.0,), "bad_square")
        return out.sum()

    report = grad_check(wrong, theta)
    assert not report.passed
    assert report.worst[0] == "theta"


def test_grad_check_aborts_on_non_finite_loss():
    theta = Tensor(np.array([-1.0, 1.0]), requires_grad=True)
    with pytest.raises(GradCheckError):
        grad_check(lambda: theta.log().sum(), theta)


def test_debug_mode_flags_non_finite_softmax():
    set_debug(True)
    try:
        with pytest.raises(NumericFault):
            F.softmax(Tensor([np.nan, 0.0]))
    finally:
        set_debug(False)


# === SNNW checkpoints ===

def test_checkpoint_round_trip(tmp_path):
    tensors = {"visual.conv1.weight": np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2), "head.bias": np.ones(4)}
    path = str(tmp_path / "ckpt" / "m.snnw")
    save_checkpoint(tensors, path)
    back = load_checkpoint(path)
    assert list(back) == list(tensors)
    for name, arr in tensors.items():
        assert back[name].dtype == arr.dtype
        assert np.array_equal(back[name], arr)
    assert dumps(back) == dumps(tensors)


@pytest.mark.parametrize("blob", [b"", b"XXXX\x01\x00\x00\x00\x00\x00", dumps({"w": np.ones(3)})[:-1], dumps({"w": np.ones(3)}) + b"\x00"])
def test_checkpoint_rejects_corrupt_blobs(blob):
    with pytest.raises(CorruptContainerError):
        loads(blob)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(DataIOError):
        load_checkpoint(str(tmp_path / "absent.snnw"))
