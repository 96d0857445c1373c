"""Listening-test ratings: CSV ingestion, train/test partition, synthetic corpora.

Ratings CSV (UTF-8, header required)::

    utterance_id,wav_path,rater_id,quality,intelligibility[,method,noise_type,snr]

Quality is 1-5, intelligibility is the number of characters recognised
out of 10 (0-10). A ``method`` of ``example`` marks warm-up files that
never enter the test set; ``clean`` marks unprocessed clean speech.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import AudioBuffer, write_wav
from .errors import EmptyDataset, InvalidConfig, RangeError, SchemaError

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("utterance_id", "wav_path", "rater_id", "quality", "intelligibility")
OPTIONAL_COLUMNS = ("method", "noise_type", "snr")
QUALITY_RANGE = (1, 5)
INTEL_RANGE = (0, 10)
MIN_TEST_RATERS = 3
EXAMPLE_METHOD = "example"
CLEAN_METHOD = "clean"


@dataclass(frozen=True)
class RatingRecord:
    utterance_id: str
    wav_path: str
    rater_id: str
    quality: int
    intelligibility: int
    method: str | None = None
    noise_type: str | None = None
    snr: float | None = None

    @property
    def is_example(self):
        return (self.method or "").lower() == EXAMPLE_METHOD

    @property
    def is_clean(self):
        return (self.method or "").lower() == CLEAN_METHOD


@dataclass(frozen=True)
class TestItem:
    utterance_id: str
    wav_path: str
    quality: float
    intelligibility: float
    rater_count: int


@dataclass
class DatasetManifest:
    train: list = field(default_factory=list)  # RatingRecord, one per rating
    test: list = field(default_factory=list)   # TestItem, one per utterance

    @property
    def S(self):
        return len(self.train)

    def to_json(self, **extra):
        doc = {
            "train": [asdict(r) for r in self.train],
            "test": [asdict(t) for t in self.test],
            "counts": {
                "train_samples": len(self.train),
                "train_utterances": len({r.utterance_id for r in self.train}),
                "test_utterances": len(self.test),
            },
        }
        doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True)


def _parse_int(value, column, line):
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"line {line}: {column} is not a number: {value!r}") from None
    if not f.is_integer():
        raise RangeError(f"{column} must be an integer, got {value!r}", line)
    return int(f)


def load_ratings(csv_path):
    """Parse and validate a ratings CSV; errors carry the 1-based file line."""
    try:
        fh = open(csv_path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot open ratings file {csv_path}: {exc}") from exc
    records = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{csv_path}: missing header")
        header = [c.strip() for c in reader.fieldnames]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{csv_path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            if None in row:
                raise SchemaError(f"line {line}: too many fields")
            if any(row.get(c) is None for c in REQUIRED_COLUMNS):
                raise SchemaError(f"line {line}: too few fields")
            quality = _parse_int(row["quality"], "quality", line)
            intel = _parse_int(row["intelligibility"], "intelligibility", line)
            if not QUALITY_RANGE[0] <= quality <= QUALITY_RANGE[1]:
                raise RangeError(f"quality {quality} outside {QUALITY_RANGE[0]}-{QUALITY_RANGE[1]}", line)
            if not INTEL_RANGE[0] <= intel <= INTEL_RANGE[1]:
                raise RangeError(f"intelligibility {intel} outside {INTEL_RANGE[0]}-{INTEL_RANGE[1]}", line)
            uid = row["utterance_id"].strip()
            if not uid:
                raise SchemaError(f"line {line}: empty utterance_id")
            snr = (row.get("snr") or "").strip()
            try:
                snr_value = float(snr) if snr else None
            except ValueError:
                raise SchemaError(f"line {line}: snr is not a number: {snr!r}") from None
            records.append(RatingRecord(
                uid, row["wav_path"].strip(), row["rater_id"].strip(), quality, intel,
                (row.get("method") or "").strip() or None,
                (row.get("noise_type") or "").strip() or None,
                snr_value,
            ))
    return records


def partition(records) -> DatasetManifest:
    """Utterances rated by >= 3 distinct raters become averaged test items;
    every other rating is its own training sample."""
    if not records:
        raise EmptyDataset("no rating records")
    groups = {}
    for r in records:
        groups.setdefault(r.utterance_id, []).append(r)
    manifest = DatasetManifest()
    for uid, recs in groups.items():
        raters = {r.rater_id for r in recs}
        if len(raters) >= MIN_TEST_RATERS and not any(r.is_example for r in recs):
            manifest.test.append(TestItem(
                uid, recs[0].wav_path,
                float(np.mean([r.quality for r in recs])),
                float(np.mean([r.intelligibility for r in recs])),
                len(raters),
            ))
        else:
            manifest.train.extend(recs)
    if not manifest.test:
        log.warning("no utterance has %d or more raters; test set is empty", MIN_TEST_RATERS)
    return manifest


# --- synthetic corpus --------------------------------------------------------

SNR_LEVELS = (-5.0, 0.0, 5.0, 10.0, 15.0)
NOISE_TYPES = ("white", "pink")
SAMPLE_RATE = 16000


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def pseudo_scores(snr, rater_noise_i=0, rater_noise_q=0):
    """Non-physical monotone map from SNR (dB) to (quality, intelligibility)."""
    intel = int(np.clip(round(10.0 * _sigmoid(snr / 4.0)) + rater_noise_i, 0, 10))
    quality = int(np.clip(round(1.0 + 4.0 * _sigmoid((snr - 2.0) / 5.0)) + rater_noise_q, 1, 5))
    return quality, intel


def _speech_like(rng, n):
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(100.0, 220.0) * (1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    formants = rng.uniform([300, 900, 2200], [900, 2000, 3200])
    base = float(f0.mean())
    sig = np.zeros(n)
    for k in range(1, int(4000 // base) + 1):
        amp = 0.05 + sum(np.exp(-((k * base - F) ** 2) / (2 * 150.0 ** 2)) for F in formants)
        sig += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k ** 0.5
    rate = rng.uniform(3.0, 5.0)
    env = np.sin(np.pi * rate * t + rng.uniform(0, np.pi)) ** 2
    fade = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.05)
    return sig * env * fade


def _noise(rng, n, kind):
    white = rng.standard_normal(n)
    if kind == "white":
        return white
    spec = np.fft.rfft(white)
    f = np.arange(spec.size)
    f[0] = 1
    return np.fft.irfft(spec / np.sqrt(f), n)


def synth_utterance(seed, index, snr=None, noise_type=None):
    """One synthetic noisy utterance; returns ``(AudioBuffer, snr, noise_type)``."""
    rng = np.random.default_rng([seed, index])
    n = int(rng.uniform(1.0, 3.0) * SAMPLE_RATE)
    snr = float(rng.choice(SNR_LEVELS)) if snr is None else float(snr)
    noise_type = str(rng.choice(NOISE_TYPES)) if noise_type is None else noise_type
    clean = _speech_like(rng, n)
    noise = _noise(rng, n, noise_type)
    noise *= np.sqrt(np.mean(clean ** 2) / (np.mean(noise ** 2) * 10.0 ** (snr / 10.0)))
    mix = clean + noise
    mix *= rng.uniform(0.45, 0.9) / np.max(np.abs(mix))
    return AudioBuffer(mix, SAMPLE_RATE), snr, noise_type


def synth_corpus(out_dir, n_utts, seed, test_fraction=0.25, rater_pool=40):
    """Write ``n_utts`` WAVs plus ``ratings.csv`` into ``out_dir``.

    ``round(n_utts * test_fraction)`` utterances get 3-5 raters (and so
    land in the test set); the rest get a single rater so every training
    target is consistent. Returns the CSV path.
    """
    if n_utts < 8:
        raise InvalidConfig(f"synthetic corpus needs at least 8 utterances, got {n_utts}")
    if not 0.0 <= test_fraction <= 1.0:
        raise InvalidConfig(f"test_fraction must be in [0, 1], got {test_fraction}")
    os.makedirs(out_dir, exist_ok=True)
    n_test = int(round(n_utts * test_fraction))
    test_ids = set(np.random.default_rng([seed, 2 ** 32 - 1]).permutation(n_utts)[:n_test].tolist())
    rows = []
    for i in range(n_utts):
        uid = f"utt{i:04d}"
        audio, snr, noise_type = synth_utterance(seed, i)
        write_wav(os.path.join(out_dir, f"{uid}.wav"), audio)
        rng = np.random.default_rng([seed, i, 1])
        n_raters = int(rng.integers(3, 6)) if i in test_ids else 1
        for r in rng.choice(rater_pool, size=n_raters, replace=False):
            q, it = pseudo_scores(snr, int(rng.integers(-1, 2)), int(rng.integers(-1, 2)))
            rows.append([uid, f"{uid}.wav", f"r{int(r):03d}", q, it, "synthetic", noise_type, f"{snr:g}"])
    csv_path = os.path.join(out_dir, "ratings.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)
        w.writerows(rows)
    return csv_path


def resolve_wav(csv_path, wav_path):
    if os.path.isabs(wav_path):
        return wav_path
    return os.path.join(os.path.dirname(os.path.abspath(csv_path)), wav_path)
