"""Ambient diffusion posterior sampling at desk scale.

Denoisers trained from linearly corrupted data, DPS / A-DPS / A-OS samplers,
multi-coil MRI forward models and brute-force verifiers for the
identifiability claims behind ambient training.
"""

__version__ = "0.1.0"
