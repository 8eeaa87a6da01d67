"""Federated learning experiment engine.

Implements FedAvg, FedSAM, FedLESAM, FedSynSAM, and a DynaFed-style
baseline on small MLPs, with model-update compression (stochastic
quantization, top-k sparsification), trajectory-matching data
condensation, and sharpness diagnostics.
"""

__version__ = "0.1.0"
