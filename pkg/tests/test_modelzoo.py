"""Tests for architecture builders, parameter accounting, weight files and the network passes."""

import json
import struct
from pathlib import Path

import numpy as np
import pytest

from statenet.errors import ConfigurationError, DimensionError, LoadError
from statenet.layers import softmax_cross_entropy
from statenet.layers.gradcheck import check_gradient
from statenet.modelzoo import (
    WeightManifest,
    backward,
    build_arch1,
    build_arch2,
    build_architecture,
    build_vgg16_base,
    extract_manifest,
    forward,
    head_layers,
    init_weights,
    load_checkpoint,
    load_weights_partial,
    param_count,
    param_shapes,
    propagate_shapes,
    save_checkpoint,
    table_rows,
)
from statenet.optim import RMSpropState

BASE_ROWS = (
    ["Conv3-64"] * 2
    + ["Maxpool"]
    + ["Conv3-128"] * 2
    + ["Maxpool"]
    + ["Conv3-256"] * 3
    + ["Maxpool"]
    + ["Conv3-512"] * 3
    + ["Maxpool"]
    + ["Conv3-512"] * 3
)
ARCH1_ROWS = BASE_ROWS + ["Conv3-512", "Maxpool", "FC-4096", "Dropout 0.2", "FC-128", "Dropout 0.2", "FC-7"]
ARCH2_ROWS = BASE_ROWS + ["Conv3-512", "Maxpool", "Conv1-512", "Global Average Pooling", "Dropout 0.2", "FC-7"]


def _pool_extents(arch):
    return [s.out_shape[1] for s in propagate_shapes(arch) if s.kind == "maxpool"]


class TestBuilders:
    @pytest.mark.parametrize("builder", [build_arch1, build_arch2])
    def test_full_size_spatial_sequence(self, builder):
        arch = builder()
        assert arch.input_shape == (3, 224, 224)
        assert _pool_extents(arch) == [112, 56, 28, 14, 7]
        assert propagate_shapes(arch)[-1].out_shape == (7,)

    def test_table_rows_arch1(self):
        assert table_rows(build_arch1()) == ARCH1_ROWS

    def test_table_rows_arch2(self):
        assert table_rows(build_arch2()) == ARCH2_ROWS

    def test_base_feature_map_before_last_pool(self):
        shapes = propagate_shapes(build_vgg16_base(), require_logits=False)
        before_pool5 = next(s for s in shapes if s.name == "pool5").in_shape
        assert before_pool5 == (512, 14, 14)

    def test_base_divisor_8_widths(self):
        arch = build_vgg16_base(width_divisor=8)
        widths = [layer.size for layer in arch.layers if layer.kind == "conv3"]
        assert sorted(set(widths)) == [8, 16, 32, 64]
        assert widths[0] == 8 and widths[-1] == 64

    def test_base_small_input(self):
        shapes = propagate_shapes(build_vgg16_base(width_divisor=8, input_size=64), require_logits=False)
        pool4 = next(s for s in shapes if s.name == "pool4")
        assert pool4.out_shape[1:] == (4, 4)

    def test_arch1_flatten_width(self):
        shapes = {s.name: s for s in propagate_shapes(build_arch1())}
        assert shapes["fc1"].in_shape == (25088,)

    def test_added_layers_marked(self):
        arch = build_arch1()
        added = {layer.name for layer in arch.layers if layer.origin == "added" and layer.has_params}
        assert added == {"conv5_4", "fc1", "fc2", "fc3"}

    def test_arch2_l2_scope_defaults_to_dense(self):
        arch = build_arch2()
        assert arch.l2.lam == 0.01
        assert arch.l2.scope == ("fc1",)

    def test_arch2_gap_width_scales(self):
        shapes = {s.name: s for s in propagate_shapes(build_arch2(width_divisor=8, input_size=64))}
        assert shapes["gap"].out_shape == (64,)
        assert shapes["fc1"].out_shape == (7,)

    def test_dense_widths_scale_with_floor_of_seven(self):
        arch = build_arch1(width_divisor=64, input_size=32)
        assert arch.layer("fc1").size == 64
        assert arch.layer("fc2").size == 7
        assert arch.layer("fc3").size == 7

    def test_unique_layer_names(self):
        for arch in (build_arch1(), build_arch2()):
            assert len(arch.layer_names) == len(set(arch.layer_names))

    @pytest.mark.parametrize("divisor", [0, 3, 128])
    def test_invalid_divisor(self, divisor):
        with pytest.raises(ConfigurationError):
            build_vgg16_base(width_divisor=divisor)

    def test_invalid_input_size(self):
        with pytest.raises(ConfigurationError):
            build_arch1(input_size=100)

    def test_unknown_architecture(self):
        with pytest.raises(ConfigurationError):
            build_architecture("arch3")


class TestParamCount:
    def test_spot_values(self):
        arch1, arch2 = build_arch1(), build_arch2()
        assert param_count(arch1).per_layer["conv1_1"] == 1792
        assert param_count(arch1).per_layer["fc1"] == 102_764_544
        assert param_count(arch2).per_layer["fc1"] == 3591
        assert param_count(arch2).per_layer["conv6_1"] == 262_656

    def test_arch2_head_smaller(self):
        arch1, arch2 = build_arch1(), build_arch2()
        head1 = param_count(arch1).subtotal(head_layers(arch1))
        head2 = param_count(arch2).subtotal(head_layers(arch2))
        assert head2 < head1

    def test_pool_layers_count_zero(self):
        arch = build_arch1()
        pools = [layer.name for layer in arch.layers if layer.kind == "maxpool"]
        assert param_count(arch).subtotal(pools) == 0

    @pytest.mark.parametrize("name", ["arch1", "arch2"])
    def test_matches_instantiated_tensors(self, name):
        arch = build_architecture(name, width_divisor=8, input_size=64)
        params = init_weights(arch, seed=0)
        counts = param_count(arch)
        for layer in arch.layers:
            instantiated = sum(params[k].size for k in (f"{layer.name}.weight", f"{layer.name}.bias") if k in params)
            assert counts.per_layer[layer.name] == instantiated
        assert counts.total == sum(p.size for p in params.values())

    @pytest.mark.parametrize("divisor", [2, 4, 8])
    def test_conv_kernels_scale_by_inverse_square(self, divisor):
        full, scaled = param_shapes(build_arch1()), param_shapes(build_arch1(width_divisor=divisor))
        for key, shape in full.items():
            if key.endswith(".weight") and len(shape) == 4 and not key.startswith("conv1_1"):
                assert np.prod(scaled[key]) * divisor**2 == np.prod(shape)


class TestInitWeights:
    @pytest.fixture
    def arch(self):
        return build_arch1(width_divisor=8, input_size=64)

    def test_deterministic(self, arch):
        a, b = init_weights(arch, seed=5), init_weights(arch, seed=5)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)

    def test_biases_zero(self, arch):
        params = init_weights(arch, seed=5)
        assert all(not v.any() for k, v in params.items() if k.endswith(".bias"))

    def test_weight_mean_near_zero(self, arch):
        w = init_weights(arch, seed=5)["fc1.weight"].astype(np.float64)
        fan_in, fan_out = w.shape
        sigma = np.sqrt(6.0 / (fan_in + fan_out)) / np.sqrt(3.0)
        assert w.size >= 100_000
        assert abs(w.mean()) < 3 * sigma / np.sqrt(w.size)

    def test_within_glorot_bound(self, arch):
        w = init_weights(arch, seed=5)["conv2_1.weight"]
        c_out, c_in, k, _ = w.shape
        bound = np.sqrt(6.0 / ((c_in + c_out) * k * k))
        assert np.abs(w).max() <= bound + 1e-6


class TestWeightFile:
    def test_golden_two_tensor_layout(self):
        manifest = WeightManifest(
            {"a.bias": np.array([1.0, -2.0], dtype=np.float32), "a.weight": np.array([[0.5, 4.0]], dtype=np.float32)}
        )
        index = (
            b'{"metadata":{},"tensors":[{"dtype":"f32","name":"a.bias","offset":0,"shape":[2]},'
            b'{"dtype":"f32","name":"a.weight","offset":8,"shape":[1,2]}],"version":1}'
        )
        expected = b"STNTWGT1" + struct.pack("<Q", len(index)) + index + struct.pack("<4f", 1.0, -2.0, 0.5, 4.0)
        assert manifest.to_bytes() == expected
        decoded = WeightManifest.from_bytes(expected)
        np.testing.assert_array_equal(decoded.tensors["a.weight"], [[0.5, 4.0]])

    def test_round_trip_bitwise(self, rng, tmp_path: Path):
        tensors = {"x.weight": rng.standard_normal((3, 4)).astype(np.float32), "x.bias": np.zeros(4, np.float32)}
        path = WeightManifest(tensors, {"note": "hi"}).save(tmp_path / "w.bin")
        loaded = WeightManifest.load(path)
        assert loaded.metadata == {"note": "hi"}
        assert all(loaded.tensors[k].tobytes() == v.tobytes() for k, v in tensors.items())

    def test_bad_magic(self):
        data = WeightManifest({"a.bias": np.ones(1, np.float32)}).to_bytes()
        with pytest.raises(LoadError) as exc:
            WeightManifest.from_bytes(b"XXXXXXXX" + data[8:])
        assert exc.value.offset == 0

    def test_truncated_blob(self):
        data = WeightManifest({"a.bias": np.ones(4, np.float32)}).to_bytes()
        with pytest.raises(LoadError, match="offset"):
            WeightManifest.from_bytes(data[:-3])

    def test_corrupted_index(self):
        data = bytearray(WeightManifest({"a.bias": np.ones(1, np.float32)}).to_bytes())
        data[16] = ord("[")
        with pytest.raises(LoadError) as exc:
            WeightManifest.from_bytes(bytes(data))
        assert exc.value.offset == 16

    def test_index_is_json(self):
        data = WeightManifest({"a.bias": np.ones(1, np.float32)}, {"k": 1}).to_bytes()
        (length,) = struct.unpack_from("<Q", data, 8)
        assert json.loads(data[16 : 16 + length])["metadata"] == {"k": 1}


class TestPartialLoad:
    def test_base_manifest_loads_thirteen(self):
        base = build_vgg16_base(width_divisor=8, input_size=64)
        manifest = extract_manifest(init_weights(base, seed=1))
        arch = build_arch1(width_divisor=8, input_size=64)
        params, report = load_weights_partial(arch, manifest, init_weights(arch, seed=2))
        assert len(report.loaded) == 13
        assert set(report.skipped) == {"conv5_4", "fc1", "fc2", "fc3"}
        np.testing.assert_array_equal(params["conv3_2.weight"], manifest.tensors["conv3_2.weight"])

    def test_empty_manifest(self):
        arch = build_arch1(width_divisor=16, input_size=32)
        init = init_weights(arch, seed=2)
        params, report = load_weights_partial(arch, WeightManifest(), init)
        assert report.loaded == []
        logits, _ = forward(arch, params, np.zeros((1, 3, 32, 32), np.float32))
        assert logits.shape == (1, 7)

    def test_shape_conflict_names_layer(self):
        arch = build_arch1(width_divisor=8, input_size=64)
        manifest = WeightManifest(
            {"conv1_1.weight": np.zeros((64, 3, 3, 3), np.float32), "conv1_1.bias": np.zeros(64, np.float32)}
        )
        with pytest.raises(LoadError, match="conv1_1"):
            load_weights_partial(arch, manifest, init_weights(arch, seed=0))

    def test_strict_requires_base_layers(self):
        arch = build_arch1(width_divisor=16, input_size=32)
        with pytest.raises(LoadError):
            load_weights_partial(arch, WeightManifest(), init_weights(arch, seed=0), policy="strict")

    def test_strict_rejects_unused_tensors(self):
        base = build_vgg16_base(width_divisor=16, input_size=32)
        manifest = extract_manifest(init_weights(base, seed=1))
        manifest.tensors["extra.weight"] = np.zeros(2, np.float32)
        arch = build_arch1(width_divisor=16, input_size=32)
        with pytest.raises(LoadError, match="extra"):
            load_weights_partial(arch, manifest, init_weights(arch, seed=0), policy="strict")


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path: Path):
        arch = build_arch2(width_divisor=16, input_size=32)
        params = init_weights(arch, seed=3)
        state = RMSpropState({"fc1.weight": np.abs(rng.standard_normal(params["fc1.weight"].shape)).astype(np.float32)}, 12)
        history = [{"epoch": 1, "train_loss": 1.5, "train_accuracy": 0.25, "val_loss": 1.75, "val_accuracy": 0.125}]
        path = save_checkpoint(tmp_path / "c.ckpt", params, state, 1, history, {"val_accuracy": 0.125})

        checkpoint = load_checkpoint(path)
        assert checkpoint.epoch == 1
        assert checkpoint.val_accuracy == 0.125
        assert checkpoint.history == history
        assert checkpoint.optimizer_state.step_count == 12
        assert all(checkpoint.params[k].tobytes() == v.tobytes() for k, v in params.items())
        assert (
            checkpoint.optimizer_state.mean_square["fc1.weight"].tobytes() == state.mean_square["fc1.weight"].tobytes()
        )

    def test_truncated_checkpoint(self, tmp_path: Path):
        arch = build_arch2(width_divisor=16, input_size=32)
        path = save_checkpoint(tmp_path / "c.ckpt", init_weights(arch, seed=3), RMSpropState(), 1, [])
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(LoadError):
            load_checkpoint(path)

    def test_plain_weights_are_not_a_checkpoint(self, tmp_path: Path):
        path = WeightManifest({"a.bias": np.ones(1, np.float32)}).save(tmp_path / "w.bin")
        with pytest.raises(LoadError):
            load_checkpoint(path)


class TestNetwork:
    @pytest.fixture
    def small(self):
        arch = build_arch1(width_divisor=16, input_size=32)
        return arch, init_weights(arch, seed=0)

    def test_cache_shapes_match_oracle(self, small, rng):
        arch, params = small
        logits, cache = forward(arch, params, rng.standard_normal((2, 3, 32, 32)).astype(np.float32))
        assert logits.shape == (2, 7)
        assert cache.shapes == [s.in_shape for s in propagate_shapes(arch)]

    def test_train_mode_deterministic_per_seed(self, small, rng):
        arch, params = small
        x = rng.standard_normal((4, 3, 32, 32)).astype(np.float32)
        a, _ = forward(arch, params, x, "train", seed=8)
        b, _ = forward(arch, params, x, "train", seed=8)
        assert a.tobytes() == b.tobytes()

    def test_eval_mode_ignores_seed(self, small, rng):
        arch, params = small
        x = rng.standard_normal((2, 3, 32, 32)).astype(np.float32)
        a, _ = forward(arch, params, x, "eval", seed=1)
        b, _ = forward(arch, params, x, "eval", seed=2)
        assert a.tobytes() == b.tobytes()

    def test_wrong_input_shape(self, small):
        arch, params = small
        with pytest.raises(DimensionError):
            forward(arch, params, np.zeros((1, 3, 64, 64), np.float32))

    @pytest.mark.parametrize("name", ["arch1", "arch2"])
    def test_end_to_end_gradient(self, name, rng):
        arch = build_architecture(name, width_divisor=32, input_size=32)
        params = init_weights(arch, seed=4, dtype=np.float64)
        # nonzero biases keep activations off the ReLU and max-pool kinks
        for key in [k for k in params if k.endswith(".bias")]:
            params[key] = rng.uniform(0.05, 0.1, size=params[key].shape)
        x = rng.standard_normal((2, 3, 32, 32))
        labels = [1, 5]
        logits, cache = forward(arch, params, x, "train", seed=6)
        _, d_logits = softmax_cross_entropy(logits, labels)
        grads = backward(arch, params, cache, d_logits)

        for key in ("conv1_1.weight", "conv5_4.bias", f"{[l for l in arch.layers if l.has_params][-1].name}.weight"):

            def objective(value, key=key):
                trial = dict(params)
                trial[key] = value
                return softmax_cross_entropy(forward(arch, trial, x, "train", seed=6)[0], labels)[0]

            assert check_gradient(objective, params[key], grads[key], coordinates=10) < 1e-4

    def test_backward_skips_frozen_layers(self, small, rng):
        arch, params = small
        logits, cache = forward(arch, params, rng.standard_normal((2, 3, 32, 32)).astype(np.float32))
        _, d_logits = softmax_cross_entropy(logits, [0, 1])
        frozen = frozenset(l.name for l in arch.layers if l.has_params and l.origin == "base")
        grads = backward(arch, params, cache, d_logits, skip=frozen)
        assert set(grads) == {f"{n}.{p}" for n in ("conv5_4", "fc1", "fc2", "fc3") for p in ("weight", "bias")}

    def test_zero_head_gives_ln7(self, small, rng):
        arch, params = small
        params = dict(params)
        params["fc3.weight"] = np.zeros_like(params["fc3.weight"])
        params["fc3.bias"] = np.zeros_like(params["fc3.bias"])
        logits, _ = forward(arch, params, rng.uniform(0, 1, (5, 3, 32, 32)).astype(np.float32))
        loss, _ = softmax_cross_entropy(logits, [0, 1, 2, 3, 4])
        assert loss == pytest.approx(np.log(7), abs=0.01)

    @pytest.mark.slow
    def test_full_size_arch2_forward(self, rng):
        arch = build_arch2()
        params = init_weights(arch, seed=0)
        logits, _ = forward(arch, params, rng.uniform(0, 1, (2, 3, 224, 224)).astype(np.float32))
        assert logits.shape == (2, 7)

    @pytest.mark.slow
    def test_full_size_arch1_forward(self, rng):
        arch = build_arch1()
        params = init_weights(arch, seed=0)
        logits, _ = forward(arch, params, rng.uniform(0, 1, (1, 3, 224, 224)).astype(np.float32))
        assert logits.shape == (1, 7)
