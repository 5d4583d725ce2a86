"""Serving shim around a miniature fine-tunable sequence-to-sequence model.

Implements the generation wire protocol (/generate, /dump, /healthz)
with per-token log-probabilities, binary tensor dumps (encoder
attention, hidden states, cross-attention, head sensitivities), and a
fine-tuning entry point with early stopping.
"""

__version__ = "0.1.0"
