"""
Weight Bundles and Checkpoints
==============================

A weight bundle is one JSON document holding the model configuration,
training metadata and every parameter tensor in network order:

    {
      "format_version": 1,
      "config":   {"k": 8, "n": 8, "sfe_enabled": true, "name": "AE-8/8"},
      "metadata": {"seed": 1, "steps": 150000, "train_es_n0_db": 5.0},
      "layers":   [{"name": "embedding.table", "shape": [256, 256], "values": [...]}, ...]
    }

Values are written with 9 significant digits, enough to restore every
float32 exactly, so a saved and reloaded model decodes bitwise identically.

Checkpoints pair a bundle with an optimizer archive (.npz) under
``<out>/checkpoints/``.
"""

import json
import logging
import os
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from core.layers import DTYPE
from core.modem import Autoencoder
from exceptions import ConfigurationError, WeightFormatError
from models import BundleConfig, BundleMetadata, LayerRecord, ModelConfig, WeightBundle


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
WEIGHTS_SUFFIX = ".weights"
OPTIMIZER_SUFFIX = ".adam.npz"

PathLike = Union[str, Path]


def _format_values(values: np.ndarray) -> list[float]:
    return [float(f"{v:.9g}") for v in values.ravel().tolist()]


def model_to_bundle(model: Autoencoder, metadata: Optional[BundleMetadata] = None) -> WeightBundle:
    layers = [
        LayerRecord(name=name, shape=list(tensor.shape), values=_format_values(tensor))
        for name, tensor in model.parameters().items()
    ]
    return WeightBundle(
        format_version=FORMAT_VERSION,
        config=BundleConfig.from_model_config(model.config),
        metadata=metadata or BundleMetadata(),
        layers=layers,
    )


def model_from_bundle(bundle: WeightBundle, source: str = "<bundle>") -> Autoencoder:
    """
    Build the architecture named by the bundle config and fill in its tensors.

    Raises:
        WeightFormatError: Missing, unexpected or mis-shaped layer, or a
            config that does not describe a buildable model
    """
    if bundle.format_version != FORMAT_VERSION:
        raise WeightFormatError("<bundle>", f"unsupported format_version {bundle.format_version}", source)
    try:
        config = bundle.config.to_model_config()
        model = Autoencoder.create(config)
    except (ValidationError, ConfigurationError) as e:
        raise WeightFormatError("<config>", f"invalid model config: {e}", source) from e
    if bundle.config.name != config.name:
        raise WeightFormatError("<config>", f"name {bundle.config.name!r} does not match {config.name!r}", source)

    expected = model.parameters()
    seen = set()
    for record in bundle.layers:
        if record.name not in expected:
            raise WeightFormatError(record.name, f"not a parameter of {config.name}", source)
        if record.name in seen:
            raise WeightFormatError(record.name, "duplicate layer record", source)
        want = tuple(expected[record.name].shape)
        if tuple(record.shape) != want:
            raise WeightFormatError(record.name, f"shape {tuple(record.shape)} != expected {want}", source)
        values = np.asarray(record.values, dtype=DTYPE).reshape(want)
        if not np.isfinite(values).all():
            raise WeightFormatError(record.name, "non-finite values", source)
        model.set_parameter(record.name, values)
        seen.add(record.name)

    missing = [name for name in expected if name not in seen]
    if missing:
        raise WeightFormatError(missing[0], "missing from bundle", source)
    return model


def save_weights(
    model: Autoencoder,
    path: PathLike,
    metadata: Optional[BundleMetadata] = None,
) -> Path:
    """Write the model as a weight bundle; the file appears atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bundle = model_to_bundle(model, metadata)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(bundle.model_dump_json(), encoding="utf-8")
    os.replace(tmp, path)
    logger.info(f"Saved {model.config.name} weights ({model.parameter_count()} params) to {path}")
    return path


def read_bundle(path: PathLike) -> WeightBundle:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise WeightFormatError("<file>", f"cannot read: {e}", str(path)) from e
    try:
        return WeightBundle.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0] if e.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ())) or "<bundle>"
        layer = where
        loc = first.get("loc", ())
        if len(loc) >= 2 and loc[0] == "layers":
            try:
                layer = json.loads(text)["layers"][int(loc[1])].get("name", where)
            except (ValueError, KeyError, IndexError, TypeError, AttributeError):
                pass
        raise WeightFormatError(layer, first.get("msg", str(e)), str(path)) from e


def load_weights(path: PathLike, expected: Optional[ModelConfig] = None) -> tuple[Autoencoder, BundleMetadata]:
    """
    Load a bundle and rebuild the model.

    Args:
        path: Bundle file
        expected: When given, the bundle must describe exactly this config
    """
    bundle = read_bundle(path)
    if expected is not None and bundle.config.to_model_config() != expected:
        raise WeightFormatError(
            "<config>", f"bundle is {bundle.config.name}, expected {expected.name}", str(path)
        )
    model = model_from_bundle(bundle, str(path))
    logger.info(f"Loaded {model.config.name} from {path}")
    return model, bundle.metadata


def bundle_path(directory: PathLike, config: ModelConfig) -> Path:
    """<directory>/AE-8_8.weights for AE-8/8."""
    return Path(directory) / f"{config.file_stem}{WEIGHTS_SUFFIX}"


# =============================================================================
# Checkpoints
# =============================================================================

def checkpoint_paths(directory: PathLike, config: ModelConfig, step: int) -> tuple[Path, Path]:
    base = Path(directory) / "checkpoints" / f"{config.file_stem}.step{step:08d}"
    return base.with_name(base.name + WEIGHTS_SUFFIX), base.with_name(base.name + OPTIMIZER_SUFFIX)


def latest_checkpoint(directory: PathLike, config: ModelConfig) -> Optional[tuple[int, Path, Path]]:
    """Highest-step checkpoint with both files present, or None."""
    folder = Path(directory) / "checkpoints"
    if not folder.is_dir():
        return None
    pattern = re.compile(rf"^{re.escape(config.file_stem)}\.step(\d+){re.escape(WEIGHTS_SUFFIX)}$")
    found = []
    for entry in folder.iterdir():
        match = pattern.match(entry.name)
        if match:
            step = int(match.group(1))
            weights, optimizer = checkpoint_paths(directory, config, step)
            if optimizer.exists():
                found.append((step, weights, optimizer))
    return max(found) if found else None
