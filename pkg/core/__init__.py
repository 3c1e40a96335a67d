"""
Core Processing Module
======================

Contains the numerical engine and orchestration for AE-Modem:
- layers / network / optimizer: differentiable layers, backprop, Adam
- gradcheck: finite-difference verification of every backward rule
- modem: encoder and decoder networks, the autoencoder and its layer table
- weights: weight bundles and checkpoints
- channel: training channel, stream channel and seeded random streams
- trainer: training loop, Monte Carlo SER evaluation, BPSK baseline
- runtime: streaming tx/rx, alignment, windowed SER, IQ files
- report: versioned CSV files and SVG charts
- pipeline: one run per CLI verb, with manifests and replay
"""

from core.modem import Autoencoder, Decoder, Encoder, build_decoder, build_encoder
from core.pipeline import ExperimentPipeline, RunOutcome, create_pipeline
from core.trainer import evaluate_ser, sweep_snr, train
from core.weights import load_weights, save_weights

__all__ = [
    'Autoencoder',
    'Encoder',
    'Decoder',
    'build_encoder',
    'build_decoder',
    'ExperimentPipeline',
    'RunOutcome',
    'create_pipeline',
    'train',
    'evaluate_ser',
    'sweep_snr',
    'load_weights',
    'save_weights',
]
