"""Graphs, builders, model files, and the inference runtime."""

import math

import numpy as np
import pytest

from deepwaste.engine import BatchNormParams, ConvParams
from deepwaste.errors import (
    GraphValidationError,
    ModelFormatError,
    ModelValidationError,
    ShapeError,
    TruncatedBlobError,
)
from deepwaste.model import (
    INPUT,
    FCParams,
    GraphNode,
    InputSpec,
    Model,
    ModelGraph,
    PoolSpec,
    build_mobilenet_v1,
    build_resnet50,
    fold_batchnorms,
    load_model,
    randomize_weights,
    read_manifest,
    save_model,
)

from oracles import resnet50_parameter_count

LABELS = ("trash", "recycle", "compost")


def toy_graph():
    """1 conv + GAP + fc + softmax with hand-picked weights."""
    w = np.zeros((2, 1, 3, 3), dtype=np.float32)
    w[0, 0, 1, 1] = 1.0
    w[1, 0, 1, 1] = 2.0
    conv = ConvParams(2, 1, 3, padding=1, weights=w, bias=[0.1, -0.2])
    fc = FCParams(np.eye(2, dtype=np.float32), np.zeros(2, dtype=np.float32))
    return ModelGraph(
        (
            GraphNode("conv", "conv", (INPUT,), conv),
            GraphNode("relu", "relu", ("conv",)),
            GraphNode("gap", "global_avg_pool", ("relu",)),
            GraphNode("fc", "fully_connected", ("gap",), fc),
            GraphNode("softmax", "softmax", ("fc",)),
        )
    )


def toy_model():
    return Model(toy_graph(), InputSpec(4, 4, 1, mean=(0.0,), std=(1.0,)), ("a", "b"))


def small_random_model(rng, fold_bn=False):
    """Tiny conv+bn+relu+gap+fc+softmax model with random weights."""
    conv = ConvParams(
        4, 3, 3, padding=1, weights=rng.standard_normal((4, 3, 3, 3)).astype(np.float32) * 0.3
    )
    bn = BatchNormParams(
        rng.uniform(0.5, 1.5, 4).astype(np.float32),
        rng.standard_normal(4).astype(np.float32) * 0.1,
        rng.standard_normal(4).astype(np.float32) * 0.1,
        rng.uniform(0.5, 1.5, 4).astype(np.float32),
    )
    fc = FCParams(
        rng.standard_normal((4, 3)).astype(np.float32), rng.standard_normal(3).astype(np.float32)
    )
    g = ModelGraph(
        (
            GraphNode("conv", "conv", (INPUT,), conv),
            GraphNode("bn", "batchnorm", ("conv",), bn),
            GraphNode("relu", "relu", ("bn",)),
            GraphNode("gap", "global_avg_pool", ("relu",)),
            GraphNode("fc", "fully_connected", ("gap",), fc),
            GraphNode("softmax", "softmax", ("fc",)),
        )
    )
    if fold_bn:
        g = fold_batchnorms(g)
    return Model(g, InputSpec(8, 8, mean=(0, 0, 0), std=(1, 1, 1)), LABELS)


class TestGraphValidation:
    def test_toy_graph_validates(self):
        order = toy_graph().validate((1, 1, 4, 4))
        assert set(order) == {"conv", "relu", "gap", "fc", "softmax"}

    def test_cycle_rejected(self):
        g = ModelGraph(
            (
                GraphNode("a", "relu", ("b",)),
                GraphNode("b", "relu", ("a",)),
                GraphNode("c", "relu", (INPUT,)),
            )
        )
        with pytest.raises(GraphValidationError, match="cycle"):
            g.validate()

    def test_duplicate_ids_rejected(self):
        g = ModelGraph((GraphNode("a", "relu", (INPUT,)), GraphNode("a", "relu", (INPUT,))))
        with pytest.raises(GraphValidationError, match="duplicate"):
            g.validate()

    def test_unknown_input_rejected(self):
        g = ModelGraph((GraphNode("a", "relu", ("ghost",)),))
        with pytest.raises(GraphValidationError, match="ghost"):
            g.validate()

    def test_two_outputs_rejected(self):
        g = ModelGraph(
            (
                GraphNode("gap", "global_avg_pool", (INPUT,)),
                GraphNode("a", "relu", ("gap",)),
                GraphNode("b", "relu", ("gap",)),
            )
        )
        with pytest.raises(GraphValidationError, match="output"):
            g.validate()

    def test_single_feature_tap_required(self):
        g = ModelGraph((GraphNode("a", "relu", (INPUT,)),))
        with pytest.raises(GraphValidationError, match="global_avg_pool"):
            g.validate()

    def test_shape_mismatch_names_node(self):
        g = toy_graph()
        with pytest.raises(GraphValidationError, match="conv"):
            g.validate((1, 3, 4, 4))  # conv expects 1 channel

    def test_validated_graph_executes(self, rng):
        m = small_random_model(rng)
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        assert m.forward(x).confidences.shape == (3,)

    def test_add_arity_checked(self):
        g = ModelGraph((GraphNode("s", "add", (INPUT,)),))
        with pytest.raises(GraphValidationError, match="2 input"):
            g.validate()


class TestBuilders:
    def test_resnet50_shapes(self):
        g = build_resnet50(3)
        shapes = g.infer_shapes((1, 3, 224, 224))
        assert shapes[g.output_id] == (1, 3)
        assert shapes[g.feature_tap_id] == (1, 2048)

    def test_resnet50_parameter_count(self):
        assert build_resnet50(3).parameter_count() == 23514179
        assert build_resnet50(3).parameter_count() == resnet50_parameter_count(3)
        assert build_resnet50(5).parameter_count() == resnet50_parameter_count(5)

    def test_mobilenet_shapes(self):
        g = build_mobilenet_v1(3)
        shapes = g.infer_shapes((1, 3, 224, 224))
        assert shapes[g.output_id] == (1, 3)
        assert shapes[g.feature_tap_id] == (1, 1024)

    def test_mobilenet_depthwise_node_count(self):
        g = build_mobilenet_v1(3)
        assert sum(1 for n in g.nodes if n.kind == "depthwise_conv") == 13

    def test_num_classes_validated(self):
        with pytest.raises(ValueError):
            build_resnet50(1)
        with pytest.raises(ValueError):
            build_mobilenet_v1(0)

    def test_randomize_covers_every_tensor(self):
        g = build_mobilenet_v1(3)
        w = randomize_weights(g, seed=3)
        assert set(w) == set(g.tensors())
        g.with_tensors(w)  # shapes all agree

    def test_randomize_deterministic(self):
        g = build_mobilenet_v1(3)
        a = randomize_weights(g, seed=11)
        b = randomize_weights(g, seed=11)
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestModelFile:
    @staticmethod
    def save_small(rng, tmp_path, architecture="custom"):
        m = small_random_model(rng)
        manifest = tmp_path / "model.json"
        blob = tmp_path / "model.bin"
        save_model(
            m.graph,
            m.graph.tensors(),
            manifest,
            blob,
            architecture=architecture,
            input_spec=m.input_spec,
            labels=m.labels,
        )
        return m, manifest, blob

    def test_roundtrip_bitwise(self, rng, tmp_path):
        m, manifest, blob = self.save_small(rng, tmp_path)
        loaded = load_model(manifest, blob)
        for name, arr in m.graph.tensors().items():
            np.testing.assert_array_equal(loaded.graph.tensors()[name], arr)

    def test_roundtrip_forward_equal(self, rng, tmp_path):
        m, manifest, blob = self.save_small(rng, tmp_path)
        loaded = load_model(manifest, blob)
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        np.testing.assert_allclose(
            loaded.forward(x).confidences, m.forward(x).confidences, atol=1e-6
        )

    def test_offsets_increasing_and_gap_free(self, rng, tmp_path):
        _, manifest_path, _ = self.save_small(rng, tmp_path)
        manifest, _, _ = read_manifest(manifest_path)
        offset = 0
        for t in manifest.tensors:
            assert t.offset == offset
            assert t.length == int(np.prod(t.shape)) * 4
            offset += t.length

    def test_missing_tensor_names_node(self, rng, tmp_path):
        m = small_random_model(rng)
        weights = m.graph.tensors()
        del weights["fc.weight"]
        with pytest.raises(ModelFormatError, match="fc"):
            save_model(
                m.graph,
                weights,
                tmp_path / "m.json",
                tmp_path / "m.bin",
                architecture="custom",
                input_spec=m.input_spec,
                labels=m.labels,
            )

    def test_truncated_blob_rejected(self, rng, tmp_path):
        _, manifest, blob = self.save_small(rng, tmp_path)
        blob.write_bytes(blob.read_bytes()[:-1])
        with pytest.raises(TruncatedBlobError):
            load_model(manifest, blob)

    def test_bad_magic_rejected(self, rng, tmp_path):
        _, manifest, blob = self.save_small(rng, tmp_path)
        manifest.write_text(manifest.read_text().replace("DWMODEL", "NOTMODL"))
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(manifest, blob)

    def test_bad_version_rejected(self, rng, tmp_path):
        _, manifest, blob = self.save_small(rng, tmp_path)
        manifest.write_text(manifest.read_text().replace('"format_version": 1', '"format_version": 99'))
        with pytest.raises(ModelFormatError, match="version"):
            load_model(manifest, blob)

    def test_shape_mismatch_names_tensor(self, rng, tmp_path):
        _, manifest, blob = self.save_small(rng, tmp_path)
        doc = manifest.read_text()
        # fc.weight is 4x3; claim 3x4 so the element count still matches
        doc = doc.replace(
            '"name": "fc.weight",\n   "dtype": "f32",\n   "shape": [\n    4,\n    3\n   ]',
            '"name": "fc.weight",\n   "dtype": "f32",\n   "shape": [\n    3,\n    4\n   ]',
        )
        manifest.write_text(doc)
        with pytest.raises(ModelValidationError, match="fc.weight"):
            load_model(manifest, blob)

    def test_mobilenet_roundtrip(self, rng, tmp_path):
        g = build_mobilenet_v1(3).with_tensors(randomize_weights(build_mobilenet_v1(3), seed=5))
        save_model(
            g,
            g.tensors(),
            tmp_path / "m.json",
            tmp_path / "m.bin",
            architecture="mobilenet_v1",
            input_spec=InputSpec(224, 224),
            labels=LABELS,
        )
        loaded = load_model(tmp_path / "m.json", tmp_path / "m.bin")
        assert loaded.architecture == "mobilenet_v1"
        assert loaded.feature_width == 1024
        for name, arr in g.tensors().items():
            np.testing.assert_array_equal(loaded.graph.tensors()[name], arr)

    def test_parameter_count_via_manifest_matches_graph(self, rng, tmp_path):
        m, manifest_path, _ = self.save_small(rng, tmp_path)
        manifest, _, _ = read_manifest(manifest_path)
        assert manifest.parameter_count() == m.graph.parameter_count()

    def test_model_id_is_manifest_digest(self, rng, tmp_path):
        import hashlib

        _, manifest, blob = self.save_small(rng, tmp_path)
        loaded = load_model(manifest, blob)
        assert loaded.model_id == hashlib.sha256(manifest.read_bytes()).hexdigest()


class TestFolding:
    def test_fold_on_vs_off_small(self, rng, tmp_path):
        m, manifest, blob = TestModelFile.save_small(rng, tmp_path)
        plain = load_model(manifest, blob, fold_bn=False)
        folded = load_model(manifest, blob, fold_bn=True)
        assert sum(1 for n in folded.graph.nodes if n.kind == "batchnorm") == 0
        for _ in range(10):
            x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
            a = plain.forward(x).confidences
            b = folded.forward(x).confidences
            assert np.max(np.abs(a - b)) <= 1e-5

    def test_fold_preserves_parameter_count_semantics(self, rng):
        m = small_random_model(rng)
        folded = fold_batchnorms(m.graph)
        assert sum(1 for n in folded.nodes if n.kind == "batchnorm") == 0
        # the folded conv gains a bias (4) and sheds gamma/beta (8)
        assert folded.parameter_count() == m.graph.parameter_count() - 4

    def test_shared_conv_output_not_folded(self, rng):
        conv = ConvParams(2, 1, 1, weights=rng.standard_normal((2, 1, 1, 1)).astype(np.float32))
        bn = BatchNormParams(np.ones(2), np.zeros(2), np.zeros(2), np.ones(2))
        g = ModelGraph(
            (
                GraphNode("conv", "conv", (INPUT,), conv),
                GraphNode("bn", "batchnorm", ("conv",), bn),
                GraphNode("extra", "add", ("conv", "bn")),
                GraphNode("gap", "global_avg_pool", ("extra",)),
            )
        )
        folded = fold_batchnorms(g)
        assert sum(1 for n in folded.nodes if n.kind == "batchnorm") == 1


class TestRuntime:
    def test_toy_hand_computed(self):
        m = toy_model()
        x = np.ones((1, 1, 4, 4), dtype=np.float32)
        p = m.forward(x)
        # features (1.1, 1.8); softmax of identity fc: 1/(1+e^0.7)
        want0 = 1.0 / (1.0 + math.exp(0.7))
        np.testing.assert_allclose(p.confidences, [want0, 1.0 - want0], atol=1e-5)
        assert p.label == "b"

    def test_confidences_sum_to_one(self, rng):
        m = small_random_model(rng)
        for _ in range(5):
            x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
            p = m.forward(x)
            assert abs(float(p.confidences.sum()) - 1.0) <= 1e-6
            assert np.all(p.confidences > 0)
            assert p.label in m.labels

    def test_deterministic(self, rng):
        m = small_random_model(rng)
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        a = m.forward(x).confidences
        b = m.forward(x).confidences
        np.testing.assert_array_equal(a, b)

    def test_latency_recorded(self, rng):
        m = small_random_model(rng)
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        assert m.forward(x).latency_ms > 0

    def test_input_shape_message(self, rng):
        m = small_random_model(rng)
        with pytest.raises(ShapeError, match=r"expected input 1x3x8x8.*got \(1, 3, 9, 9\)"):
            m.forward(np.zeros((1, 3, 9, 9), dtype=np.float32))

    def test_batch_rowwise_equal(self, rng):
        m = small_random_model(rng)
        x = rng.standard_normal((4, 3, 8, 8)).astype(np.float32)
        batch = m.forward_batch(x)
        for i in range(4):
            single = m.forward(x[i : i + 1]).confidences
            assert np.max(np.abs(batch[i] - single)) <= 1e-6

    def test_feature_tap(self, rng):
        m = small_random_model(rng)
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        f = m.extract_features(x)
        assert f.shape == (4,)
        assert np.all(f >= 0)  # tap sits after a relu
        np.testing.assert_array_equal(f, m.extract_features(x))

    def test_features_batch(self, rng):
        m = small_random_model(rng)
        x = rng.standard_normal((3, 3, 8, 8)).astype(np.float32)
        fb = m.features_batch(x)
        assert fb.shape == (3, 4)
        np.testing.assert_allclose(fb[1], m.extract_features(x[1:2]), atol=1e-6)

    def test_label_count_must_match_fc(self):
        with pytest.raises(ShapeError, match="classes"):
            Model(toy_graph(), InputSpec(4, 4, 1, mean=(0.0,), std=(1.0,)), LABELS)
