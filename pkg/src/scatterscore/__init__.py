"""Non-intrusive speech intelligibility and quality scoring from spectrogram
and wavelet-scattering features."""

__version__ = "0.1.0"
