"""Weight bundle persistence and checkpoint discovery."""

import json

import numpy as np
import pytest

from core.weights import (
    bundle_path,
    checkpoint_paths,
    latest_checkpoint,
    load_weights,
    read_bundle,
    save_weights,
)
from exceptions import WeightFormatError
from models import BundleMetadata, ModelConfig


class TestBundleRoundTrip:

    def test_reload_decodes_identically(self, sfe_model, tmp_path, rng):
        path = save_weights(sfe_model, bundle_path(tmp_path, sfe_model.config),
                            BundleMetadata(seed=4, steps=12, train_es_n0_db=5.0))
        model, metadata = load_weights(path)

        assert metadata.steps == 12
        assert model.config == sfe_model.config
        for name, value in sfe_model.parameters().items():
            assert model.parameters()[name].tobytes() == value.tobytes()

        W = sfe_model.config.W
        windows = (rng.normal(size=(8, W)) + 1j * rng.normal(size=(8, W))).astype(np.complex64)
        assert model.decoder.decode_batch(windows)[0].tobytes() == \
            sfe_model.decoder.decode_batch(windows)[0].tobytes()

    def test_bundle_file_name(self, tmp_path):
        assert bundle_path(tmp_path, ModelConfig(k=8, n=8)).name == "AE-8_8.weights"
        assert bundle_path(tmp_path, ModelConfig(k=8, n=8, sfe_enabled=False)).name == "AE-8_8-2.weights"

    def test_no_temporary_file_left(self, tiny_model, tmp_path):
        save_weights(tiny_model, tmp_path / "m.weights")
        assert [p.name for p in tmp_path.iterdir()] == ["m.weights"]

    def test_config_recorded(self, tiny_model, tmp_path):
        path = save_weights(tiny_model, tmp_path / "m.weights")
        bundle = read_bundle(path)
        assert (bundle.config.k, bundle.config.n, bundle.config.name) == (2, 2, "AE-2/2-2")


class TestBundleValidation:

    @pytest.fixture
    def document(self, tiny_model, tmp_path):
        path = save_weights(tiny_model, tmp_path / "m.weights")
        return path, json.loads(path.read_text())

    def test_expected_config_mismatch(self, document):
        path, _ = document
        with pytest.raises(WeightFormatError):
            load_weights(path, expected=ModelConfig(k=2, n=2))

    def test_wrong_shape_names_layer(self, document):
        path, doc = document
        record = next(r for r in doc["layers"] if r["name"] == "dec_dense_1.weight")
        record["shape"] = [record["shape"][1], record["shape"][0]]
        path.write_text(json.dumps(doc))
        with pytest.raises(WeightFormatError) as excinfo:
            load_weights(path)
        assert excinfo.value.details["layer_name"] == "dec_dense_1.weight"

    def test_missing_layer(self, document):
        path, doc = document
        doc["layers"] = [r for r in doc["layers"] if r["name"] != "embedding.table"]
        path.write_text(json.dumps(doc))
        with pytest.raises(WeightFormatError) as excinfo:
            load_weights(path)
        assert excinfo.value.details["layer_name"] == "embedding.table"

    def test_unknown_layer(self, document):
        path, doc = document
        doc["layers"].append({"name": "extra.bias", "shape": [1], "values": [0.0]})
        path.write_text(json.dumps(doc))
        with pytest.raises(WeightFormatError):
            load_weights(path)

    def test_value_count_mismatch(self, document):
        path, doc = document
        doc["layers"][0]["values"] = doc["layers"][0]["values"][:-1]
        path.write_text(json.dumps(doc))
        with pytest.raises(WeightFormatError) as excinfo:
            load_weights(path)
        assert excinfo.value.details["layer_name"] == doc["layers"][0]["name"]

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(WeightFormatError):
            load_weights(tmp_path / "missing.weights")

    def test_unsupported_version(self, document):
        path, doc = document
        doc["format_version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(WeightFormatError):
            load_weights(path)


class TestCheckpoints:

    def test_paths(self, tmp_path, tiny_config):
        weights, optimizer = checkpoint_paths(tmp_path, tiny_config, 20)
        assert weights.name == "AE-2_2-2.step00000020.weights"
        assert optimizer.name == "AE-2_2-2.step00000020.adam.npz"
        assert weights.parent == tmp_path / "checkpoints"

    def test_latest_requires_both_files(self, tmp_path, tiny_config):
        assert latest_checkpoint(tmp_path, tiny_config) is None
        for step in (10, 20):
            weights, optimizer = checkpoint_paths(tmp_path, tiny_config, step)
            weights.parent.mkdir(parents=True, exist_ok=True)
            weights.write_text("{}")
            optimizer.write_bytes(b"")
        checkpoint_paths(tmp_path, tiny_config, 30)[0].write_text("{}")

        step, weights, _ = latest_checkpoint(tmp_path, tiny_config)
        assert step == 20
        assert weights.name.endswith("step00000020.weights")
