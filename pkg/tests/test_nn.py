"""Autodiff engine, layers, optimizer, and checkpoint format."""

import numpy as np
import pytest

from hrrplab.nn import (Adam, CheckpointError, ConditionEmbedding, Conv1d,
                        GroupNorm, Linear, Module, NetworkConfig, ResBlock,
                        Tensor, clip_parameters, embed_angles,
                        finite_difference_check, load_checkpoint, parameter,
                        restore_parameters, save_checkpoint,
                        sinusoidal_embedding)
from hrrplab.nn import autodiff as ad


class TestTensorBasics:
    def test_arithmetic_forward(self):
        a = Tensor(np.array([1.0, 2.0]))
        b = Tensor(np.array([3.0, 4.0]))
        assert ((a + b) * b - a).data.tolist() == [11.0, 22.0]
        assert (a / 2.0).data.tolist() == [0.5, 1.0]
        assert (a ** 2.0).data.tolist() == [1.0, 4.0]

    def test_backward_through_diamond(self):
        # y = (x + x) * x = 2 x^2 -> dy/dx = 4x; the node x is visited twice
        x = parameter(np.array([3.0]))
        y = ((x + x) * x).sum()
        y.backward()
        assert x.grad.tolist() == [12.0]

    def test_broadcast_gradients(self):
        a = parameter(np.ones((2, 3)))
        b = parameter(np.ones(3))
        ((a * b).sum()).backward()
        assert a.grad.shape == (2, 3)
        assert b.grad.tolist() == [2.0, 2.0, 2.0]  # summed over broadcast axis

    def test_matmul_gradients(self):
        a = parameter(np.array([[1.0, 2.0]]))
        b = parameter(np.array([[3.0], [4.0]]))
        (a @ b).sum().backward()
        assert a.grad.tolist() == [[3.0, 4.0]]
        assert b.grad.tolist() == [[1.0], [2.0]]

    def test_mean_and_reshape(self):
        x = parameter(np.arange(6.0).reshape(2, 3))
        y = x.reshape(3, 2).mean()
        y.backward()
        assert np.allclose(x.grad, np.full((2, 3), 1.0 / 6.0))

    def test_no_grad_suppresses_graph(self):
        x = parameter(np.ones(3))
        with ad.no_grad():
            y = (x * 2.0).sum()
        assert y._parents == ()
        assert not y.requires_grad

    def test_item_requires_scalar(self):
        with pytest.raises((TypeError, ValueError)):
            Tensor(np.ones(3)).item()


class TestConv1d:
    def test_contract_example(self):
        # [1,2,3,4] convolved with kernel [1,1], no padding -> [3,5,7]
        x = Tensor(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
        w = Tensor(np.array([[[1.0, 1.0]]]))
        out = ad.conv1d(x, w, padding=0)
        assert out.data.tolist() == [[[3.0, 5.0, 7.0]]]

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((2, 1, 8)))
        w = Tensor(np.array([[[0.0, 1.0, 0.0]]]))
        out = ad.conv1d(x, w, padding=1)
        assert np.allclose(out.data, x.data)

    def test_stride_halves_length(self):
        x = Tensor(np.zeros((1, 3, 16)))
        w = Tensor(np.zeros((5, 3, 3)))
        out = ad.conv1d(x, w, padding=1, stride=2)
        assert out.shape == (1, 5, 8)

    def test_gradcheck(self):
        rng = np.random.default_rng(1)
        x = parameter(rng.standard_normal((2, 2, 6)))
        w = parameter(rng.standard_normal((3, 2, 3)) * 0.5)
        b = parameter(rng.standard_normal(3) * 0.1)

        def f():
            return ad.silu(ad.conv1d(x, w, b, padding=1, stride=2)).sum()

        assert finite_difference_check(f, [x, w, b], epsilon=1e-3) < 1e-4

    def test_upsample_inverts_stride_shapes(self):
        x = Tensor(np.arange(8.0).reshape(1, 2, 4))
        up = ad.upsample_nearest(x, 2)
        assert up.shape == (1, 2, 8)
        assert up.data[0, 0].tolist() == [0.0, 0.0, 1.0, 1.0,
                                          2.0, 2.0, 3.0, 3.0]


class TestLayers:
    def test_linear_shapes_and_grad(self):
        rng = np.random.default_rng(0)
        lin = Linear(4, 3, rng)
        out = lin(Tensor(rng.standard_normal((5, 4))))
        assert out.shape == (5, 3)

        def f():
            return (lin(Tensor(np.ones((2, 4)))) ** 2.0).sum()

        assert finite_difference_check(f, lin.parameters(), epsilon=1e-3) < 1e-4

    def test_groupnorm_normalizes_groups(self):
        rng = np.random.default_rng(0)
        norm = GroupNorm(8, groups=4)
        x = Tensor(rng.standard_normal((3, 8, 16)) * 5.0 + 2.0)
        out = norm(x).data.reshape(3, 4, 2 * 16)
        assert np.allclose(out.mean(axis=2), 0.0, atol=1e-6)
        assert np.allclose(out.var(axis=2), 1.0, atol=1e-3)

    def test_groupnorm_gradcheck(self):
        rng = np.random.default_rng(2)
        norm = GroupNorm(4, groups=2)
        x = parameter(rng.standard_normal((2, 4, 6)))
        mix = Tensor(rng.standard_normal((2, 4, 6)))

        def f():
            return (norm(x) * mix).sum()

        params = [x] + norm.parameters()
        assert finite_difference_check(f, params, epsilon=1e-3) < 1e-4

    def test_resblock_identity_at_init(self):
        # the closing conv is zero-initialized, so a fresh block is exactly
        # the identity regardless of the embedding
        rng = np.random.default_rng(0)
        block = ResBlock(8, 8, rng)
        x = Tensor(rng.standard_normal((2, 8, 12)))
        emb = Tensor(rng.standard_normal((2, 8)))
        assert np.array_equal(block(x, emb).data, x.data)

    def test_resblock_embedding_reaches_output_after_perturbation(self):
        rng = np.random.default_rng(0)
        block = ResBlock(8, 8, rng)
        for p in block.parameters():
            p.data = p.data + 0.05 * rng.standard_normal(p.data.shape)
        x = Tensor(rng.standard_normal((2, 8, 12)))
        a = block(x, Tensor(np.zeros((2, 8))))
        b = block(x, Tensor(np.ones((2, 8))))
        assert not np.allclose(a.data, b.data)

    def test_resblock_gradcheck(self):
        rng = np.random.default_rng(3)
        block = ResBlock(4, 6, rng)
        for p in block.parameters():
            p.data = p.data + 0.1 * rng.standard_normal(p.data.shape)
        x = Tensor(rng.standard_normal((2, 4, 8)))
        emb = Tensor(rng.standard_normal((2, 6)))

        def f():
            return (block(x, emb) ** 2.0).mean()

        assert finite_difference_check(f, block.parameters(),
                                       epsilon=3e-4) < 1e-4

    def test_named_parameters_order_stable(self):
        rng = np.random.default_rng(0)
        block = ResBlock(4, 6, rng)
        names = [name for name, _ in block.named_parameters()]
        assert names == [name for name, _ in block.named_parameters()]
        assert any("emb_proj" in n for n in names)
        assert len(names) == len(set(names))


class TestSinusoidalEmbedding:
    def test_full_turn_periodicity_bitexact(self):
        for angle in (0.0, 33.25, 181.5):
            assert np.array_equal(sinusoidal_embedding(angle, 16),
                                  sinusoidal_embedding(angle + 360.0, 16))

    def test_distinct_on_degree_grid(self):
        grid = np.arange(0.0, 360.0, 1.0)
        emb = embed_angles(grid, 16)
        assert len(np.unique(emb.round(12), axis=0)) == len(grid)

    def test_interleaved_sin_cos_unit_pairs(self):
        emb = sinusoidal_embedding(77.0, 16)
        pair_norms = emb[0::2] ** 2 + emb[1::2] ** 2
        assert np.allclose(pair_norms, 1.0)

    def test_dimension_must_be_even(self):
        with pytest.raises(ValueError):
            sinusoidal_embedding(10.0, 7)


class TestConditionEmbedding:
    def _feats(self, cond, n=3):
        lengths = np.full(n, 120.0)
        widths = np.full(n, 20.0)
        aspects = np.linspace(0.0, 90.0, n)
        return cond.features(lengths, widths, aspects)

    def test_mode_masking(self):
        rng = np.random.default_rng(0)
        cond_both = ConditionEmbedding(16, rng, mode="both")
        feats = self._feats(cond_both)
        aspect_part = feats[:, :-2]
        dims_part = feats[:, -2:]
        assert np.any(aspect_part != 0.0) and np.any(dims_part != 0.0)

        cond_aspect = ConditionEmbedding(16, np.random.default_rng(0),
                                         mode="aspect")
        feats_a = self._feats(cond_aspect)
        assert np.array_equal(feats_a[:, :-2], aspect_part)
        assert np.all(feats_a[:, -2:] == 0.0)

        cond_dims = ConditionEmbedding(16, np.random.default_rng(0),
                                       mode="dimensions")
        feats_d = self._feats(cond_dims)
        assert np.all(feats_d[:, :-2] == 0.0)
        assert np.array_equal(feats_d[:, -2:], dims_part)

    def test_none_mode_ignores_everything(self):
        rng = np.random.default_rng(0)
        cond = ConditionEmbedding(16, rng, mode="none")
        a = cond(self._feats(cond), np.array([False, False, False]))
        b = cond(self._feats(cond) * 0.0 + 7.0, np.array([True, True, True]))
        assert np.allclose(a.data, b.data)

    def test_dropped_rows_use_null_token(self):
        rng = np.random.default_rng(0)
        cond = ConditionEmbedding(16, rng, mode="both")
        feats = self._feats(cond)
        mixed = cond(feats, np.array([True, False, True]))
        all_dropped = cond(feats, np.array([True, True, True]))
        none_dropped = cond(feats, np.array([False, False, False]))
        assert np.allclose(mixed.data[0], all_dropped.data[0])
        assert np.allclose(mixed.data[1], none_dropped.data[1])
        assert not np.allclose(mixed.data[0], none_dropped.data[0])

    def test_gradcheck(self):
        rng = np.random.default_rng(4)
        cond = ConditionEmbedding(8, rng, mode="both")
        feats = self._feats(cond)
        dropped = np.array([True, False, False])

        def f():
            return (cond(feats, dropped) ** 2.0).mean()

        assert finite_difference_check(f, cond.parameters(),
                                       epsilon=1e-4) < 1e-4


class TestAdam:
    def test_first_step_magnitude_is_lr(self):
        # with bias correction, a constant gradient moves each weight by
        # exactly lr on the first step
        p = parameter(np.array([1.0, -2.0]))
        opt = Adam([p], lr=0.01)
        p.grad = np.array([0.3, -0.7])
        opt.step()
        assert np.allclose(p.data, [1.0 - 0.01, -2.0 + 0.01])

    def test_bowl_convergence(self):
        p = parameter(np.array([5.0]))
        opt = Adam([p], lr=0.2)
        for _ in range(200):
            opt.zero_grad()
            loss = (p ** 2.0).sum()
            loss.backward()
            opt.step()
        assert abs(p.data[0]) < 1e-2

    def test_zero_grad_clears(self):
        p = parameter(np.ones(2))
        opt = Adam([p], lr=0.1)
        p.grad = np.ones(2)
        opt.zero_grad()
        assert p.grad is None


class TestClipParameters:
    def test_contract_example(self):
        p = parameter(np.array([0.07, -0.2, 0.01]))
        clip_parameters([p], 0.05)
        assert p.data.tolist() == [0.05, -0.05, 0.01]

    def test_idempotent(self):
        p = parameter(np.array([0.2, -0.3]))
        clip_parameters([p], 0.05)
        once = p.data.copy()
        clip_parameters([p], 0.05)
        assert np.array_equal(p.data, once)

    def test_bound_must_be_positive(self):
        with pytest.raises(ValueError):
            clip_parameters([parameter(np.ones(2))], 0.0)


class _TinyModel(Module):
    def __init__(self):
        rng = np.random.default_rng(0)
        self.lin1 = Linear(4, 3, rng)
        self.lin2 = Linear(3, 2, rng)


class TestCheckpoint:
    def _save(self, path, model):
        save_checkpoint(path, "ddpm", model.named_parameters(),
                        config={"n_bins": 8}, seed=3, step=100,
                        loss_tail=[0.5, 0.4])

    def test_round_trip(self, tmp_path):
        model = _TinyModel()
        path = tmp_path / "m.ckpt"
        self._save(path, model)
        header, arrays = load_checkpoint(path)
        assert header["model"] == "ddpm"
        assert header["seed"] == 3
        assert header["config"] == {"n_bins": 8}
        restored = _TinyModel()
        for p in restored.parameters():
            p.data = p.data * 0.0
        restore_parameters(restored.named_parameters(), header, arrays)
        for (_, a), (_, b) in zip(model.named_parameters(),
                                  restored.named_parameters()):
            assert np.allclose(a.data, b.data, atol=1e-6)  # float32 at rest

    def test_malformed_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic|malformed"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        model = _TinyModel()
        path = tmp_path / "m.ckpt"
        self._save(path, model)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        model = _TinyModel()
        path = tmp_path / "m.ckpt"
        self._save(path, model)
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        import json
        import struct
        model = _TinyModel()
        path = tmp_path / "m.ckpt"
        self._save(path, model)
        raw = path.read_bytes()
        header_len = struct.unpack("<I", raw[8:12])[0]
        header = json.loads(raw[12:12 + header_len])
        header["format_version"] = 99
        blob = json.dumps(header, sort_keys=True).encode()
        path.write_bytes(raw[:8] + struct.pack("<I", len(blob)) + blob
                         + raw[12 + header_len:])
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_restore_shape_mismatch(self, tmp_path):
        model = _TinyModel()
        path = tmp_path / "m.ckpt"
        self._save(path, model)
        header, arrays = load_checkpoint(path)
        other = Linear(5, 5, np.random.default_rng(0))
        with pytest.raises(CheckpointError):
            restore_parameters([("lin1.weight", other.weight)], header, arrays)


class TestNetworkConfig:
    def test_divisibility_invariant(self):
        with pytest.raises(ValueError):
            NetworkConfig(n_bins=100, n_stages=3)

    def test_as_dict_round_trip(self):
        cfg = NetworkConfig(base_channels=12)
        assert NetworkConfig(**cfg.as_dict()) == cfg
