import numpy as np
import pytest
import scipy.sparse as sp

from topogcl import autodiff as ad
from topogcl.autodiff import Tensor


def numeric_grad(f, x, step=1e-5):
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = f()
        flat[k] = orig - step
        down = f()
        flat[k] = orig
        out.reshape(-1)[k] = (up - down) / (2 * step)
    return out


def check(build, *shapes, seed=0, positive=False):
    """Compare backprop against central differences for loss = sum(build(*tensors) * R)."""
    rng = np.random.default_rng(seed)
    leaves = [Tensor(rng.uniform(0.5, 2.0, s) if positive else rng.normal(size=s), requires_grad=True) for s in shapes]
    weight = None

    def loss():
        nonlocal weight
        out = build(*leaves)
        if weight is None:
            weight = np.random.default_rng(seed + 1).normal(size=out.shape)
        return ad.sum_all(ad.mul(out, Tensor(weight)))

    loss().backward()
    for leaf in leaves:
        with ad.no_grad():
            num = numeric_grad(lambda: loss().item(), leaf.data)
        np.testing.assert_allclose(leaf.grad, num, rtol=1e-6, atol=1e-8)


A = np.random.default_rng(7).normal(size=(4, 4))
S = sp.csr_matrix(np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0.0]]))


@pytest.mark.parametrize(
    "build,shapes,positive",
    [
        (ad.matmul, [(2, 3), (3, 4)], False),
        (ad.add, [(3, 2), (1, 2)], False),
        (ad.elementwise_sub, [(3, 2), (3, 1)], False),
        (ad.elementwise_mul, [(3, 2), (3, 2)], False),
        (ad.div, [(3, 2), (3, 2)], True),
        (lambda a: ad.scalar_mul(a, -2.5), [(2, 2)], False),
        (ad.relu, [(4, 3)], False),
        (ad.sigmoid, [(4, 3)], False),
        (ad.exp, [(3, 3)], False),
        (ad.log, [(3, 3)], True),
        (ad.sqrt, [(3, 3)], True),
        (ad.square, [(3, 3)], False),
        (ad.transpose, [(2, 5)], False),
        (ad.row_sum, [(4, 3)], False),
        (ad.mean_all, [(4, 3)], False),
        (lambda a, b: ad.concat_rows([a, b]), [(2, 3), (1, 3)], False),
        (lambda a, b: ad.concat_cols([a, b]), [(2, 3), (2, 1)], False),
        (lambda a: ad.take(a, [0, 2, 2], [1, 0, 1]), [(3, 2)], False),
        (lambda a: ad.reshape(a, (3, 2)), [(2, 3)], False),
        (lambda a: ad.sparse_matmul(S, a), [(4, 2)], False),
        (lambda a: a @ Tensor(A) - a.T.T * 3.0, [(5, 4)], False),
    ],
)
def test_primitive_gradients(build, shapes, positive):
    check(build, *shapes, positive=positive)


def test_forward_examples():
    assert ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 1)))).shape == (2, 1)
    assert np.all(ad.relu(Tensor(-np.ones((2, 2)))).data == 0)
    assert ad.mean_all(Tensor([[1.0, 2.0], [3.0, 4.0]])).item() == 2.5


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.DimensionError, match=r"\(2, 3\).*\(2, 3\)|\(2, 3\).*\(4, 1\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ad.DimensionError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_mean_all_gradient():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    ad.mean_all(w).backward()
    np.testing.assert_array_equal(w.grad, np.full((2, 2), 0.25))


def test_square_sum_gradient():
    data = np.array([[1.0, -2.0], [0.5, 3.0]])
    w = Tensor(data, requires_grad=True)
    ad.sum_all(ad.square(w)).backward()
    np.testing.assert_array_equal(w.grad, 2 * data)


def test_gradients_accumulate_over_uses_and_calls():
    w = Tensor(np.array([[2.0]]), requires_grad=True)
    (w * w + w).backward()
    assert w.grad.item() == 5.0
    (w * w + w).backward()
    assert w.grad.item() == 10.0
    w.zero_grad()
    assert w.grad is None


def test_non_scalar_backward_rejected():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        ad.relu(w).backward()


def test_no_gradient_into_constants():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    c = Tensor(np.ones((2, 2)))
    ad.sum_all(ad.mul(w, c)).backward()
    assert c.grad is None and w.grad is not None


def test_no_grad_records_nothing():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    with ad.no_grad():
        out = ad.relu(w)
    assert out._ctx is None and not out.requires_grad


def test_log_rejects_non_positive():
    with pytest.raises(FloatingPointError):
        ad.log(Tensor(np.array([[0.0]])))


def test_replay_is_bit_identical():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))

    def run():
        a, b = Tensor(x, requires_grad=True), Tensor(y, requires_grad=True)
        loss = ad.mean_all(ad.sigmoid(ad.matmul(a, b)))
        loss.backward()
        return loss.item(), a.grad.tobytes(), b.grad.tobytes()

    assert run() == run()


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        p = np.array([1.0, -2.0])
        ad.adam_step([p], [np.zeros(2)], ad.AdamState())
        np.testing.assert_array_equal(p, [1.0, -2.0])

    def test_moves_against_gradient(self):
        p = np.zeros(3)
        state = ad.AdamState(lr=0.01)
        g = np.array([1.0, -1.0, 0.5])
        for _ in range(50):
            ad.adam_step([p], [g], state)
        np.testing.assert_array_equal(np.sign(p), -np.sign(g))
        assert state.step == 50

    def test_first_step_magnitude_is_lr(self):
        p = np.zeros(3)
        ad.adam_step([p], [np.array([3.0, -0.2, 0.0])], ad.AdamState(lr=1e-3))
        np.testing.assert_allclose(np.abs(p), [1e-3, 1e-3, 0.0], rtol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ad.DimensionError):
            ad.adam_step([np.zeros(2)], [np.zeros(3)], ad.AdamState())

    def test_optimizer_wrapper(self):
        w = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        opt = ad.Adam([w], lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            ad.sum_all(ad.square(w)).backward()
            opt.step()
        assert np.all(np.abs(w.data) < 0.05)


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path):
        params = {"a": np.random.default_rng(0).normal(size=(3, 2)), "b": np.array([[1 / 3]])}
        ad.save_checkpoint(tmp_path / "c.json", params, {"k": 1})
        header, arrays = ad.load_checkpoint(tmp_path / "c.json", {"a": (3, 2), "b": (1, 1)})
        assert header == {"k": 1}
        for k in params:
            np.testing.assert_array_equal(arrays[k], params[k])

    def test_shape_mismatch_rejected(self, tmp_path):
        ad.save_checkpoint(tmp_path / "c.json", {"a": np.zeros((3, 2))})
        with pytest.raises(ad.DimensionError, match="a"):
            ad.load_checkpoint(tmp_path / "c.json", {"a": (2, 3)})
        with pytest.raises(ad.DimensionError, match="lacks"):
            ad.load_checkpoint(tmp_path / "c.json", {"a": (3, 2), "z": (1,)})
