"""
Quantized Diffusion Schrödinger Bridges

Anchor-quantized couplings for training diffusion Schrödinger bridges between
two empirical point clouds, with simulation, MMD evaluation and a randomized
check of the stability bounds behind the quantization.
"""

__version__ = "1.0.0"
__author__ = "QDSB Team"
__description__ = "Anchor-quantized diffusion Schrödinger bridge training and verification"
