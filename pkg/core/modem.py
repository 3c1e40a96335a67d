"""
Encoder and Decoder Networks
============================

Builds the transmitter and receiver networks of an AE-k/n autoencoder.

Encoder (one symbol -> n complex samples):
    Embedding(M -> M) -> Dense+ReLU(M -> M) -> Dense+ReLU(M -> 2n)
    -> Dense(2n -> 2n) -> unit-disk normalization -> real-to-complex

Decoder (W = 3n - 1 complex samples -> probabilities over M symbols):
    complex-to-real (2W reals)
    SFE branch: reshape (W, 2) -> conv(3, 2->128)+ReLU -> maxpool(1)
                -> conv(16, 128->64)+ReLU -> maxpool(2) -> flatten
                -> Dense+ReLU(->512) -> Dense+ReLU(->10)
    trunk: concatenate(2W [+10]) -> Dense+ReLU 512, 512, 256, 256, 128
           -> Dense(->M) -> softmax -> argmax

For AE-7/16 the encoder holds 38,080 parameters and the decoder 1,192,138;
other (k, n) follow the same pattern with fixed SFE and trunk widths.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.layers import (
    Concatenate,
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    MaxPool1D,
    NormalizeComplex,
    RealComplexMarshal,
    ReLU,
    Reshape,
    Softmax,
    Tensor,
)
from core.network import Sequential
from exceptions import ConfigurationError, InputDomainError, StructuralError
from models import LayerRow, ModelConfig


logger = logging.getLogger(__name__)

PILOT_SYMBOL = 0

SFE_CONV1_CHANNELS = 128
SFE_CONV1_KERNEL = 3
SFE_POOL1 = 1
SFE_CONV2_CHANNELS = 64
SFE_CONV2_KERNEL = 16
SFE_POOL2 = 2
SFE_HIDDEN = 512
SFE_FEATURES = 10
TRUNK_WIDTHS = (512, 512, 256, 256, 128)

MIN_SFE_WINDOW = 18


def validate_architecture(config: ModelConfig) -> None:
    """The SFE's second kernel (length 16) must fit after the first conv."""
    if config.sfe_enabled and config.W < MIN_SFE_WINDOW:
        raise ConfigurationError(
            "model.n",
            f"window W={config.W} (n={config.n}) is shorter than {MIN_SFE_WINDOW}; "
            f"the synchronization feature estimator needs n >= 7 or sfe_enabled = false"
        )


# =============================================================================
# Encoder
# =============================================================================

class Encoder:
    """
    Transmitter network. One instance serves every frame position, so the
    pilot waveform is the same wherever it is emitted.
    """

    def __init__(self, config: ModelConfig, network: Sequential):
        self.config = config
        self.network = network

    def _check_symbols(self, symbols: np.ndarray) -> None:
        M = self.config.M
        if symbols.size and (symbols.min() < 0 or symbols.max() >= M):
            bad = int(symbols.min()) if symbols.min() < 0 else int(symbols.max())
            raise InputDomainError("symbol", bad, f"[0, {M})")

    def forward(self, symbols) -> tuple[Tensor, list]:
        """Batched forward: (B,) integer symbols -> (B, n) complex samples."""
        symbols = np.asarray(symbols, dtype=np.int64)
        self._check_symbols(symbols)
        return self.network.forward(symbols)

    def backward(self, caches: list, grad_samples: Tensor) -> dict[str, Tensor]:
        _, grads = self.network.backward(caches, grad_samples)
        return grads

    def encode_batch(self, symbols) -> Tensor:
        samples, _ = self.forward(symbols)
        return samples

    def encode(self, s: int) -> Tensor:
        """n complex samples for one symbol; every |x_j| <= 1."""
        return self.encode_batch(np.asarray([s]))[0]

    @property
    def pilot(self) -> Tensor:
        return self.encode(PILOT_SYMBOL)

    def parameters(self) -> dict[str, Tensor]:
        return self.network.parameters()

    def parameter_count(self) -> int:
        return self.network.parameter_count()


def build_encoder(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> Encoder:
    """
    Build the encoder for `config`. Parameters are drawn from `rng` when
    given, otherwise left at zero (e.g. before loading a bundle).
    """
    validate_architecture(config)
    M, n = config.M, config.n
    network = Sequential("encoder", [
        Embedding("embedding", M, M),
        Dense("enc_dense_1", M, M),
        ReLU("enc_relu_1"),
        Dense("enc_dense_2", M, 2 * n),
        ReLU("enc_relu_2"),
        Dense("enc_dense_3", 2 * n, 2 * n),
        NormalizeComplex("normalize"),
        RealComplexMarshal("real2complex", "real2complex"),
    ])
    if rng is not None:
        network.initialize(rng)
    return Encoder(config, network)


def normalize_to_unit_disk(x: Tensor) -> Tensor:
    """
    Scale each complex pair (a, b) of a 2n-real vector by 1/max(1, |(a, b)|).

    Accepts (2n,) or (B, 2n).
    """
    x = np.asarray(x)
    batched = x.ndim == 2
    y, _ = NormalizeComplex("normalize").forward(x if batched else x[None])
    return y if batched else y[0]


# =============================================================================
# Decoder
# =============================================================================

@dataclass
class DecoderCache:
    marshal: object
    sfe: Optional[list]
    concat: object
    trunk: list
    probs: Tensor


class Decoder:
    """
    Receiver network: optional SFE branch + classification trunk.

    `forward` returns probabilities; `backward` takes the gradient with
    respect to the logits (softmax inputs) and returns the gradient with
    respect to the complex window plus parameter gradients.
    """

    def __init__(
        self,
        config: ModelConfig,
        marshal: RealComplexMarshal,
        sfe: Optional[Sequential],
        concat: Concatenate,
        trunk: Sequential,
    ):
        self.config = config
        self.marshal = marshal
        self.sfe = sfe
        self.concat = concat
        self.trunk = trunk
        self.softmax = Softmax("softmax")

    def forward(self, windows: Tensor) -> tuple[Tensor, DecoderCache]:
        """(B, W) complex windows -> (B, M) probabilities."""
        if windows.ndim != 2 or windows.shape[1] != self.config.W:
            raise StructuralError("decoder window", (None, self.config.W), windows.shape)
        reals, marshal_cache = self.marshal.forward(windows)
        branches = [reals]
        sfe_caches = None
        if self.sfe is not None:
            features, sfe_caches = self.sfe.forward(reals)
            branches.append(features)
        joined, concat_cache = self.concat.forward(branches)
        logits, trunk_caches = self.trunk.forward(joined)
        probs, _ = self.softmax.forward(logits)
        return probs, DecoderCache(marshal_cache, sfe_caches, concat_cache, trunk_caches, probs)

    def backward(self, cache: DecoderCache, grad_logits: Tensor) -> tuple[Tensor, dict[str, Tensor]]:
        grad_joined, grads = self.trunk.backward(cache.trunk, grad_logits)
        grad_branches, _ = self.concat.backward(cache.concat, grad_joined)
        grad_reals = grad_branches[0]
        if self.sfe is not None:
            grad_from_sfe, sfe_grads = self.sfe.backward(cache.sfe, grad_branches[1])
            grads.update(sfe_grads)
            grad_reals = grad_reals + grad_from_sfe
        grad_windows, _ = self.marshal.backward(cache.marshal, grad_reals)
        return grad_windows, grads

    def backward_from_probs(self, cache: DecoderCache, grad_probs: Tensor) -> tuple[Tensor, dict[str, Tensor]]:
        grad_logits, _ = self.softmax.backward(cache.probs, grad_probs)
        return self.backward(cache, grad_logits)

    def decode_batch(self, windows: Tensor) -> tuple[Tensor, np.ndarray]:
        probs, _ = self.forward(windows)
        return probs, probs.argmax(axis=-1)

    def decode(self, window: Tensor) -> tuple[Tensor, int]:
        """Probability vector over M and the most likely symbol (ties -> lowest index)."""
        window = np.asarray(window)
        if window.shape != (self.config.W,):
            raise StructuralError("decoder window", (self.config.W,), window.shape)
        probs, symbols = self.decode_batch(window[None])
        return probs[0], int(symbols[0])

    def kink_signature(self, cache: DecoderCache) -> list[np.ndarray]:
        signature = self.trunk.kink_signature(cache.trunk)
        if self.sfe is not None:
            signature += self.sfe.kink_signature(cache.sfe)
        return signature

    def networks(self) -> list[Sequential]:
        return [net for net in (self.sfe, self.trunk) if net is not None]

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for net in self.networks():
            params.update(net.parameters())
        return params

    def parameter_count(self) -> int:
        return sum(net.parameter_count() for net in self.networks())


def _build_sfe(W: int) -> Sequential:
    conv1_len = W - SFE_CONV1_KERNEL + 1
    pool1_len = conv1_len // SFE_POOL1
    conv2_len = pool1_len - SFE_CONV2_KERNEL + 1
    flat = (conv2_len // SFE_POOL2) * SFE_CONV2_CHANNELS
    return Sequential("sfe", [
        Reshape("sfe_reshape", (W, 2)),
        Conv1D("sfe_conv_1", 2, SFE_CONV1_CHANNELS, SFE_CONV1_KERNEL),
        ReLU("sfe_relu_1"),
        MaxPool1D("sfe_pool_1", SFE_POOL1),
        Conv1D("sfe_conv_2", SFE_CONV1_CHANNELS, SFE_CONV2_CHANNELS, SFE_CONV2_KERNEL),
        ReLU("sfe_relu_2"),
        MaxPool1D("sfe_pool_2", SFE_POOL2),
        Flatten("sfe_flatten"),
        Dense("sfe_dense_1", flat, SFE_HIDDEN),
        ReLU("sfe_relu_3"),
        Dense("sfe_dense_2", SFE_HIDDEN, SFE_FEATURES),
        ReLU("sfe_relu_4"),
    ])


def build_decoder(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> Decoder:
    """
    Build the decoder for `config`.

    Raises:
        ConfigurationError: SFE enabled with W < 18
    """
    validate_architecture(config)
    W, M = config.W, config.M
    sfe = _build_sfe(W) if config.sfe_enabled else None
    width = 2 * W + (SFE_FEATURES if sfe is not None else 0)

    trunk_layers = []
    for index, out_width in enumerate(TRUNK_WIDTHS, start=1):
        trunk_layers.append(Dense(f"dec_dense_{index}", width, out_width))
        trunk_layers.append(ReLU(f"dec_relu_{index}"))
        width = out_width
    trunk_layers.append(Dense(f"dec_dense_{len(TRUNK_WIDTHS) + 1}", width, M))
    trunk = Sequential("trunk", trunk_layers)

    decoder = Decoder(
        config,
        RealComplexMarshal("complex2real", "complex2real"),
        sfe,
        Concatenate("concatenate"),
        trunk,
    )
    if rng is not None:
        for net in decoder.networks():
            net.initialize(rng)
    return decoder


# =============================================================================
# Autoencoder
# =============================================================================

class Autoencoder:
    """Encoder + decoder pair for one ModelConfig."""

    def __init__(self, config: ModelConfig, encoder: Encoder, decoder: Decoder):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def create(cls, config: ModelConfig, rng: Optional[np.random.Generator] = None) -> "Autoencoder":
        """Fresh model; parameters drawn from `rng` (zeros when None)."""
        encoder = build_encoder(config, rng)
        decoder = build_decoder(config, rng)
        logger.debug(
            f"Built {config.name}: encoder {encoder.parameter_count()} params, "
            f"decoder {decoder.parameter_count()} params"
        )
        return cls(config, encoder, decoder)

    def parameters(self) -> dict[str, Tensor]:
        params = dict(self.encoder.parameters())
        params.update(self.decoder.parameters())
        return params

    def parameter_count(self) -> int:
        return self.encoder.parameter_count() + self.decoder.parameter_count()

    def set_parameter(self, qualified_name: str, value: Tensor) -> None:
        for net in [self.encoder.network] + self.decoder.networks():
            if qualified_name in net.parameters():
                net.set_parameter(qualified_name, value)
                return
        raise KeyError(qualified_name)

    def astype(self, dtype) -> "Autoencoder":
        self.encoder.network.astype(dtype)
        for net in self.decoder.networks():
            net.astype(dtype)
        return self

    def layer_table(self) -> list[LayerRow]:
        return layer_table(self)


def _stack_rows(section: str, network: Sequential, input_shape: tuple) -> list[LayerRow]:
    rows = []
    shapes = network.output_shapes(input_shape)
    layers = network.layers
    index = 0
    while index < len(layers):
        layer = layers[index]
        shape = shapes[index]
        if isinstance(layer, Dense):
            follower = layers[index + 1] if index + 1 < len(layers) else None
            if isinstance(follower, ReLU):
                rows.append(LayerRow(section=section, name="Dense (ReLU)", kind=layer.kind.value,
                                     parameters=layer.parameter_count(), output_shape=list(shapes[index + 1])))
                index += 2
                continue
            rows.append(LayerRow(section=section, name="Dense (Linear)", kind=layer.kind.value,
                                 parameters=layer.parameter_count(), output_shape=list(shape)))
        elif isinstance(layer, Conv1D):
            rows.append(LayerRow(section=section, name="Convolution (ReLU)", kind=layer.kind.value,
                                 parameters=layer.parameter_count(), output_shape=list(shapes[index + 1])))
            index += 2
            continue
        elif isinstance(layer, ReLU):
            pass
        else:
            label = {
                "embedding": "Embedding",
                "maxpool1d": "MaxPool",
                "reshape": "Reshape",
                "flatten": "Flatten",
                "normalize-complex": "Normalization",
            }.get(layer.kind.value, layer.name)
            if isinstance(layer, RealComplexMarshal):
                label = "Real2Complex" if layer.direction == "real2complex" else "Complex2Real"
            rows.append(LayerRow(section=section, name=label, kind=layer.kind.value,
                                 parameters=layer.parameter_count(), output_shape=list(shape)))
        index += 1
    return rows


def layer_table(model: Autoencoder) -> list[LayerRow]:
    """
    Architecture table with one row per logical layer
    (Dense/Conv rows include their activation), channel rows included.
    """
    cfg = model.config
    n, W, M = cfg.n, cfg.W, cfg.M
    rows = [LayerRow(section="Encoder", name="Input", kind="input", parameters=0, output_shape=[1])]
    rows += _stack_rows("Encoder", model.encoder.network, (1,))

    for label, width in (("Serialize", 5 * n), ("Time Shift", W), ("Phase Noise", W),
                         ("Gaussian Noise", W), ("Multiply", W)):
        rows.append(LayerRow(section="Channel", name=label, kind="channel", parameters=0, output_shape=[width]))

    rows.append(LayerRow(section="Receiver", name="Complex2Real",
                         kind=model.decoder.marshal.kind.value, parameters=0, output_shape=[2 * W]))
    concat_width = 2 * W
    if model.decoder.sfe is not None:
        rows += _stack_rows("SFE", model.decoder.sfe, (2 * W,))
        concat_width += SFE_FEATURES
    rows.append(LayerRow(section="Decoder", name="Concatenate", kind="concatenate",
                         parameters=0, output_shape=[concat_width]))
    trunk_rows = _stack_rows("Decoder", model.decoder.trunk, (concat_width,))
    trunk_rows[-1] = trunk_rows[-1].model_copy(update={"name": "Dense (Softmax)"})
    rows += trunk_rows
    rows.append(LayerRow(section="Decoder", name="ArgMax", kind="argmax", parameters=0, output_shape=[1]))
    return rows
