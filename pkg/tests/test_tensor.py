import numpy as np
import pytest

from ctcfuse import tensor as T
from ctcfuse.tensor import Tensor


def matmul_oracle(a, b):
    """Naive triple-loop matrix product, independent of the engine."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def grad_of(t):
    return t.grad if t.grad is not None else np.zeros_like(t.data)


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor(np.eye(2)), Tensor([[5.0], [6.0]]))
        np.testing.assert_array_equal(out.data, [[5.0], [6.0]])

    def test_against_triple_loop(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0], [6.0]])
        out = T.matmul(Tensor(a), Tensor(b))
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])
        np.testing.assert_allclose(out.data, matmul_oracle(a, b), rtol=1e-15)

    def test_zero_matrix(self):
        out = T.matmul(Tensor(np.zeros((3, 2))), Tensor(np.ones((2, 4))))
        np.testing.assert_array_equal(out.data, np.zeros((3, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="inner dimensions"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_random_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.normal(size=(3, 4))
            b = rng.normal(size=(4, 2))
            np.testing.assert_allclose(
                T.matmul(Tensor(a), Tensor(b)).data, matmul_oracle(a, b), rtol=1e-12
            )


class TestLogSoftmax:
    def test_symmetric_pair(self):
        out = T.log_softmax(Tensor([0.0, 0.0]), axis=-1)
        np.testing.assert_allclose(out.data, [-np.log(2.0)] * 2, rtol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 5))
        a = T.log_softmax(Tensor(x), axis=-1).data
        b = T.log_softmax(Tensor(x + 123.456), axis=-1).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_frozen_high_precision(self):
        # reference values computed with 40-digit arithmetic
        expected = [-2.4076059644443803045, -1.4076059644443803045, -0.40760596444438030448]
        out = T.log_softmax(Tensor([1.0, 2.0, 3.0]), axis=-1)
        np.testing.assert_allclose(out.data, expected, rtol=1e-14)

    def test_rows_exponentiate_to_one(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 9)) * 10
        out = T.log_softmax(Tensor(x), axis=-1)
        sums = np.exp(out.data).sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) < 1e-9)


class TestLayerNorm:
    def test_constant_vector_is_zeroed(self):
        x = Tensor(np.full((3, 4), 7.0))
        out = T.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_standardized_fixed_point(self):
        v = np.array([-1.0, 1.0, -1.0, 1.0])  # zero mean, unit variance
        out = T.layer_norm(Tensor(v[None, :]), Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data[0], v, atol=1e-5)

    def test_output_statistics(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10, 16)) * 3 + 2
        out = T.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
        assert np.all(np.abs(out.mean(axis=-1)) < 1e-6)
        assert np.all(np.abs(out.var(axis=-1) - 1.0) < 1e-3)

    def test_bad_gamma_shape(self):
        with pytest.raises(ValueError):
            T.layer_norm(Tensor(np.zeros((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(4)))


class TestEmbedding:
    def test_single_row(self):
        table = Tensor(np.arange(12.0).reshape(4, 3))
        out = T.embedding(table, np.array([2]))
        np.testing.assert_array_equal(out.data, table.data[2:3])

    def test_repeated_id_accumulates(self):
        table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
        out = T.embedding(table, np.array([1, 1]))
        out.sum().backward()
        expected = np.zeros((4, 3))
        expected[1] = 2.0
        np.testing.assert_array_equal(table.grad, expected)

    def test_out_of_range(self):
        table = Tensor(np.zeros((4, 3)))
        with pytest.raises(IndexError):
            T.embedding(table, np.array([4]))

    def test_grad_matches_finite_difference(self):
        rng = np.random.default_rng(4)
        table = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        ids = np.array([0, 2, 2, 4])

        def f():
            emb = T.embedding(table, ids)
            return (emb * emb).sum()

        report = T.grad_check(f, {"table": table}, step=1e-6, tolerance=1e-5)
        assert report["passed"], report


class TestBackward:
    def test_sum_gives_ones(self):
        w = Tensor(np.ones((2, 3)), requires_grad=True)
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_detached_tensor_has_zero_grad(self):
        w = Tensor(np.ones(3), requires_grad=True)
        other = Tensor(np.ones(3), requires_grad=True)
        other.sum().backward()
        np.testing.assert_array_equal(grad_of(w), np.zeros(3))

    def test_non_scalar_loss_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (w * 2.0).backward()

    def test_second_backward_errors(self):
        w = Tensor(np.ones(3), requires_grad=True)
        loss = w.sum()
        loss.backward()
        with pytest.raises(RuntimeError, match="already ran"):
            loss.backward()

    def test_shared_tensor_accumulates(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        (w * w).sum().backward()  # d(w^2)/dw = 2w
        np.testing.assert_allclose(w.grad, [4.0])

    @pytest.mark.parametrize("seed", range(10))
    def test_composed_graph_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        g = Tensor(np.ones(4), requires_grad=True)
        c = Tensor(rng.normal(size=(3, 4)))

        def f():
            h = T.layer_norm(T.matmul(a, b) + c, g, Tensor(np.zeros(4)))
            h = T.relu(h) + 0.1 * h
            return (T.log_softmax(h, axis=-1) * h).sum()

        report = T.grad_check(f, {"a": a, "b": b, "g": g}, step=1e-6, tolerance=1e-5)
        assert report["passed"], report


class TestGradCheck:
    def test_matmul_sum_passes(self):
        rng = np.random.default_rng(7)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        report = T.grad_check(lambda: T.matmul(a, b).sum(), {"a": a, "b": b})
        assert report["passed"]
        assert report["max_deviation"] < 1e-5

    def test_constant_function_reports_zero(self):
        w = Tensor(np.ones(2), requires_grad=True)
        report = T.grad_check(lambda: Tensor(np.zeros(1)).sum() + 0.0 * w.sum(), {"w": w})
        assert report["passed"]
        assert report["max_deviation"] < 1e-9

    def test_failure_is_reported_not_raised(self):
        w = Tensor(np.array([1.0]), requires_grad=True)

        def broken():
            out = (w * w).sum()
            out._grad_fn = lambda g: (np.array([123.0]),)  # sabotage the closure
            return out

        report = T.grad_check(broken, {"w": w})
        assert not report["passed"]
        assert report["failures"] == ["w"]


class TestOps:
    def test_purity_bit_identical(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(4, 4))
        a = T.log_softmax(Tensor(x), axis=-1).data
        b = T.log_softmax(Tensor(x), axis=-1).data
        assert a.tobytes() == b.tobytes()

    def test_non_finite_forward_raises(self):
        with pytest.raises(FloatingPointError):
            T.log(Tensor([0.0]))

    def test_getitem_scatter(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x[0, 1:3].sum().backward()
        expected = np.zeros((2, 3))
        expected[0, 1:3] = 1.0
        np.testing.assert_array_equal(x.grad, expected)

    def test_concat_roundtrip_grads(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 3)), requires_grad=True)
        out = T.concat([a, b], axis=1)
        (out * 2.0).sum().backward()
        np.testing.assert_array_equal(a.grad, np.full((2, 2), 2.0))
        np.testing.assert_array_equal(b.grad, np.full((2, 3), 2.0))

    def test_broadcast_add_grad(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        bias = Tensor(np.ones(3), requires_grad=True)
        (a + bias).sum().backward()
        np.testing.assert_array_equal(bias.grad, np.full(3, 2.0))

    def test_dropout_eval_identity_and_train_mask(self):
        x = Tensor(np.ones((100,)))
        assert T.dropout(x, 0.5, None, training=False) is x
        rng = np.random.default_rng(9)
        y = T.dropout(x, 0.5, rng, training=True)
        kept = y.data != 0.0
        assert 20 < kept.sum() < 80
        np.testing.assert_allclose(y.data[kept], 2.0)

    def test_conv2d_matches_direct_convolution(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(1, 2, 5, 4))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, pad=1).data
        # direct sliding-window evaluation
        xp = np.zeros((1, 2, 7, 6))
        xp[:, :, 1:6, 1:5] = x
        ho, wo = 3, 2
        ref = np.zeros((1, 3, ho, wo))
        for co in range(3):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[0, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3]
                    ref[0, co, i, j] = (patch * w[co]).sum() + b[co]
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_conv2d_grads(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(2, 1, 4, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)

        def f():
            out = T.conv2d(x, w, b, stride=2, pad=1)
            return (out * out).sum()

        report = T.grad_check(f, {"x": x, "w": w, "b": b}, step=1e-6, tolerance=1e-5)
        assert report["passed"], report


class TestContainer:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        arrays = {
            "enc.w": rng.normal(size=(3, 4)),
            "enc.b": rng.normal(size=4).astype(np.float32),
            "step": np.array([7], dtype=np.int64),
        }
        path = tmp_path / "params.bin"
        T.save_tensors(path, arrays)
        loaded = T.load_tensors(path)
        assert set(loaded) == set(arrays)
        for name, arr in arrays.items():
            assert loaded[name].dtype == arr.dtype
            assert loaded[name].tobytes() == arr.tobytes()

    def test_rewrite_is_byte_identical(self, tmp_path):
        arrays = {"b": np.ones(2), "a": np.zeros((1, 2))}
        p1, p2 = tmp_path / "one.bin", tmp_path / "two.bin"
        T.save_tensors(p1, arrays)
        T.save_tensors(p2, T.load_tensors(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "bad.bin"
        T.save_tensors(path, {"x": np.ones(1)})
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version mismatch"):
            T.load_tensors(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "trunc.bin"
        T.save_tensors(path, {"x": np.ones(8)})
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError, match="truncated"):
            T.load_tensors(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(ValueError, match="magic"):
            T.load_tensors(path)
