"""Per-utterance normalization, frame alignment and the ``.scsf`` file format.

File layout (all little-endian)::

    b"SCSF"  u16 version  u16 id_len  id (utf-8)
    per stream (spectrogram, then scattering):
        u32 rows  u32 cols  rows*cols float32, row-major
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram, stft_magnitude
from .errors import FeatureIOError, FrameMismatch, OutOfRange, VersionMismatch
from .scattering import ScatteringCoeffs, ScatteringConfig, scattering_features

MAGIC = b"SCSF"
FORMAT_VERSION = 1
MAX_FRAME_DRIFT = 4
INTEL_MAX = 10.0


@dataclass(frozen=True, eq=False)
class FeatureSample:
    spec: np.ndarray  # (T, bins) float32 in [0, 1]
    scat: np.ndarray  # (T, paths) float32 in [0, 1]
    utterance_id: str = ""

    def __post_init__(self):
        if self.spec.ndim != 2 or self.scat.ndim != 2:
            raise ValueError("feature streams must be 2-D")
        if self.spec.shape[0] != self.scat.shape[0]:
            raise FrameMismatch(
                f"spectrogram has {self.spec.shape[0]} frames, scattering {self.scat.shape[0]}"
            )

    @property
    def frames(self):
        return self.spec.shape[0]


def minmax_normalize(m):
    """Map a whole matrix affinely onto [0, 1]; a constant matrix maps to zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def rescale_intelligibility(score):
    """Character count on 0-10 to the 0-5 training scale."""
    s = np.asarray(score, dtype=np.float64)
    if np.any(s < 0) or np.any(s > INTEL_MAX) or not np.all(np.isfinite(s)):
        raise OutOfRange(f"intelligibility must lie in [0, 10], got {score!r}")
    out = s * 0.5
    return float(out) if out.ndim == 0 else out


def inverse_rescale_intelligibility(score):
    s = np.asarray(score, dtype=np.float64) * 2.0
    return float(s) if s.ndim == 0 else s


def align_frames(spec: Spectrogram | np.ndarray, scat: ScatteringCoeffs | np.ndarray,
                 utterance_id="") -> FeatureSample:
    spec_v = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    scat_v = scat.values if isinstance(scat, ScatteringCoeffs) else np.asarray(scat)
    n_spec, n_scat = spec_v.shape[0], scat_v.shape[0]
    if abs(n_spec - n_scat) > MAX_FRAME_DRIFT:
        raise FrameMismatch(
            f"{utterance_id or 'utterance'}: {n_spec} spectrogram frames vs {n_scat} scattering frames"
        )
    T = min(n_spec, n_scat)
    return FeatureSample(
        minmax_normalize(spec_v[:T]).astype(np.float32),
        minmax_normalize(scat_v[:T]).astype(np.float32),
        utterance_id,
    )


def write_features(sample: FeatureSample, path):
    uid = sample.utterance_id.encode("utf-8")
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(uid)), uid]
    for m in (sample.spec, sample.scat):
        m = np.ascontiguousarray(m, dtype="<f4")
        parts.append(struct.pack("<II", *m.shape))
        parts.append(m.tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise FeatureIOError(f"cannot write {path}: {exc}") from exc


def read_features(path) -> FeatureSample:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FeatureIOError(f"cannot read {path}: {exc}") from exc
    if not blob:
        raise FeatureIOError(f"{path}: empty file")
    if len(blob) < 8:
        raise FeatureIOError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise VersionMismatch(f"{path}: bad magic {blob[:4]!r}")
    version, id_len = struct.unpack_from("<HH", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    offset = 8 + id_len
    uid = blob[8:offset].decode("utf-8")
    streams = []
    for _ in range(2):
        if len(blob) < offset + 8:
            raise FeatureIOError(f"{path}: truncated stream header")
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        nbytes = rows * cols * 4
        if len(blob) < offset + nbytes:
            raise FeatureIOError(f"{path}: truncated stream data")
        streams.append(np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset)
                       .reshape(rows, cols).astype(np.float32))
        offset += nbytes
    if offset != len(blob):
        raise FeatureIOError(f"{path}: {len(blob) - offset} trailing bytes")
    return FeatureSample(streams[0], streams[1], uid)


def feature_path(directory, utterance_id):
    return os.path.join(directory, f"{utterance_id}.scsf")


def extract_features(audio, scat_config=None, window=512, hop=256, utterance_id="") -> FeatureSample:
    """Spectrogram + scattering for one utterance, aligned and normalized."""
    spec = stft_magnitude(audio, window, hop)
    scat = scattering_features(audio, scat_config or ScatteringConfig())
    return align_frames(spec, scat, utterance_id)
