"""Perceptually guided TTS training toolkit.

Trains desk-scale Transformer-TTS / FastSpeech models under a combined
objective that mixes the conventional reconstruction losses with a
perceptual term computed by a frozen MOS prediction network, and ships
the evaluation machinery (PER, MOS aggregation, FCR/TMSR, paired t-test)
used to compare systems.
"""

__version__ = "0.1.0"
