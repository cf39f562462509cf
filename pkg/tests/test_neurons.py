import numpy as np
import pytest

from src.kernel.grad_check import grad_check
from src.kernel.tensor import Tensor, set_debug
from src.models.layers import LayerStack, LIFLayer, Linear, run_sequence
from src.models.neurons import (
    LIFParams,
    LIFState,
    SpikeActivity,
    SpikeMode,
    SurrogateParams,
    lif_step,
    sparsity,
    spike_surrogate,
    surrogate_grad,
)
from src.utils.errors import ConfigError, NumericFault, ShapeError, UndefinedSparsityError


def _state(u):
    return LIFState(Tensor(np.array(u, dtype=np.float64)))


# === lif_step ===

def test_rest_is_a_fixed_point():
    spikes, nxt = lif_step(_state([0.0, 0.0]), Tensor(np.zeros(2)))
    assert spikes.data.tolist() == [0.0, 0.0]
    assert nxt.u.data.tolist() == [0.0, 0.0]


def test_euler_step_below_threshold():
    spikes, nxt = lif_step(_state([0.0]), Tensor([1.0]), LIFParams(tau_m=2.0, dt=1.0))
    assert spikes.data[0] == 0.0
    assert nxt.u.data[0] == pytest.approx(0.5)


def test_spike_and_reset():
    spikes, nxt = lif_step(_state([0.9]), Tensor([10.0]), LIFParams(tau_m=1.0))
    assert spikes.data[0] == 1.0
    assert nxt.u.data[0] == 0.0


def test_state_input_shape_mismatch():
    with pytest.raises(ShapeError):
        lif_step(_state([0.0, 0.0]), Tensor(np.zeros(3)))


def test_non_finite_membrane_in_debug_mode():
    set_debug(True)
    try:
        with pytest.raises(NumericFault):
            lif_step(_state([0.0]), Tensor([np.inf]))
    finally:
        set_debug(False)


@pytest.mark.parametrize("kwargs", [{"tau_m": 0.0}, {"theta": 0.0, "u_rest": 0.0}])
def test_invalid_lif_params(kwargs):
    with pytest.raises(ConfigError):
        LIFParams(**kwargs)


# === surrogate ===

def test_surrogate_peak_and_shoulders():
    assert surrogate_grad(np.array(0.0), 10.0) == 1.0
    np.testing.assert_allclose(surrogate_grad(np.array([-0.5, 0.5]), 10.0), [1 / 36, 1 / 36])


def test_hard_spike_forward_and_backward():
    v = Tensor(np.array([-0.01, 0.01, 0.5]), requires_grad=True)
    out = spike_surrogate(v, SurrogateParams(alpha=10.0), SpikeMode.HARD)
    assert out.data.tolist() == [0.0, 1.0, 1.0]
    out.sum().backward()
    assert v.grad[2] == pytest.approx(1 / 36)


def test_soft_spike_is_differentiable():
    v = Tensor(np.linspace(-1.0, 1.0, 7), requires_grad=True)
    sp = SurrogateParams(alpha=2.0)
    report = grad_check(lambda: spike_surrogate(v, sp, "soft").sum(), v, eps=1e-6)
    assert report.max_rel_error < 1e-6
    assert np.all((0.0 < spike_surrogate(v, sp, "soft").data) & (spike_surrogate(v, sp, "soft").data < 1.0))


# === run_sequence ===

def _stack(seed=0):
    return LayerStack("toy", (5,), [Linear("toy.fc1", 5, 6, seed), LIFLayer("toy.lif1"), Linear("toy.fc2", 6, 3, seed), LIFLayer("toy.lif2")])


def test_zero_input_never_spikes():
    out, activity = run_sequence(_stack(), np.zeros((4, 2, 5)))
    assert out.shape == (4, 2, 3)
    assert activity.total_spikes == 0
    assert sparsity(activity) == 1.0
    assert activity.layers["toy.lif1"].neuron_timesteps == 4 * 2 * 6


def test_run_sequence_records_binary_inputs():
    x = np.zeros((3, 1, 5))
    x[0, 0, 1] = x[2, 0, 1] = x[1, 0, 4] = 1.0
    _, activity = run_sequence(_stack(), x)
    record = activity.inputs["toy.fc1"]
    assert record.binary
    assert record.counts.tolist() == [0.0, 2.0, 0.0, 0.0, 1.0]
    assert (record.timesteps, record.batch) == (3, 1)


def test_two_neuron_two_step_run_matches_hand_unrolled_lif():
    fc = Linear("toy.fc", 2, 2)
    fc.weight = Tensor(np.array([[2.5, 0.0], [0.0, 1.5]]), requires_grad=True)
    x = np.ones((2, 1, 2))
    out, _ = run_sequence(LayerStack("toy", (2,), [fc, LIFLayer("toy.lif")]), x)

    p = LIFParams()
    u, expected = np.zeros(2), []
    for t in range(2):
        u = u + (-(u - p.u_rest) + (x[t, 0] @ fc.weight.data) * p.r) * (p.dt / p.tau_m)
        s = (u >= p.theta).astype(float)
        u = np.where(s > 0, p.u_rest, u)
        expected.append(s)
    np.testing.assert_array_equal(out.data[:, 0], np.array(expected))
    np.testing.assert_array_equal(out.data[:, 0], [[1.0, 0.0], [1.0, 1.0]])


def test_doubling_time_bins_doubles_neuron_timesteps():
    x = (np.random.default_rng(2).random((4, 2, 5)) < 0.5).astype(np.float64)
    _, short = run_sequence(_stack(), x)
    _, long = run_sequence(_stack(), np.concatenate([x, x]))
    for name, layer in short.layers.items():
        assert long.layers[name].neuron_timesteps == 2 * layer.neuron_timesteps


def test_run_sequence_rejects_wrong_shape():
    with pytest.raises(ShapeError):
        run_sequence(_stack(), np.zeros((4, 2, 6)))


def test_soft_mode_stack_passes_grad_check():
    stack = _stack(3)
    x = (np.random.default_rng(1).random((3, 2, 5)) < 0.5).astype(np.float64)
    report = grad_check(
        lambda: run_sequence(stack, x, sp=SurrogateParams(alpha=2.0), mode="soft")[0].sum(),
        stack.params(),
        eps=1e-5,
        atol=1e-4,
        max_coords=4,
    )
    assert report.max_rel_error < 1e-4


# === sparsity ===

@pytest.mark.parametrize("spike_count, expected", [(0, 1.0), (3, 0.97)])
def test_sparsity_arithmetic(spike_count, expected):
    activity = SpikeActivity()
    trace = np.zeros((10, 10))
    trace.reshape(-1)[:spike_count] = 1.0
    activity.record_spikes("lif", trace, 10)
    assert sparsity(activity) == pytest.approx(expected)


def test_sparsity_undefined_without_neurons():
    with pytest.raises(UndefinedSparsityError):
        sparsity(SpikeActivity())


def test_merge_sums_layers():
    a, b = SpikeActivity(samples=2), SpikeActivity(samples=3)
    a.record_spikes("lif", np.ones((2, 4)), 4)
    b.record_spikes("lif", np.zeros((3, 4)), 4)
    merged = a.merge(b)
    assert merged.samples == 5
    assert merged.total_spikes == 8
    assert merged.total_neuron_timesteps == 20
