import csv

import numpy as np
import pytest

from scatterscore.data import (
    SNR_LEVELS, DatasetManifest, load_ratings, partition, pseudo_scores, resolve_wav, synth_corpus,
    synth_utterance,
)
from scatterscore.dsp import read_wav
from scatterscore.errors import EmptyDataset, InvalidConfig, RangeError, SchemaError
from scatterscore.metrics import srcc

HEADER = "utterance_id,wav_path,rater_id,quality,intelligibility,method\n"


def _csv(tmp_path, body, header=HEADER):
    p = tmp_path / "r.csv"
    p.write_text(header + body, encoding="utf-8")
    return p


def test_load_valid(tmp_path):
    recs = load_ratings(_csv(tmp_path, "a,a.wav,r1,3,7,\nb,b.wav,r2,5,10,clean\n"))
    assert len(recs) == 2
    assert recs[0].quality == 3 and recs[0].intelligibility == 7 and recs[0].method is None
    assert recs[1].is_clean and not recs[1].is_example


@pytest.mark.parametrize("row,line,column", [
    ("a,a.wav,r1,3,7,\nb,b.wav,r1,6,7,\n", 3, "quality"),
    ("a,a.wav,r1,0,7,\n", 2, "quality"),
    ("a,a.wav,r1,3,7,\nb,b.wav,r1,3,7,\nc,c.wav,r1,3,11,\n", 4, "intelligibility"),
    ("a,a.wav,r1,3,-1,\n", 2, "intelligibility"),
    ("a,a.wav,r1,3.5,4,\n", 2, "quality"),
])
def test_out_of_range_reports_line(tmp_path, row, line, column):
    with pytest.raises(RangeError) as info:
        load_ratings(_csv(tmp_path, row))
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")
    assert column in str(info.value)


def test_quoted_newline_keeps_file_lines(tmp_path):
    body = 'a,"x\ny.wav",r1,3,7,\nb,b.wav,r1,3,12,\n'
    with pytest.raises(RangeError) as info:
        load_ratings(_csv(tmp_path, body))
    assert info.value.line == 4


def test_schema_errors(tmp_path):
    with pytest.raises(SchemaError, match="intelligibility"):
        load_ratings(_csv(tmp_path, "a,a.wav,r1,3\n", header="utterance_id,wav_path,rater_id,quality\n"))
    with pytest.raises(SchemaError, match="line 2"):
        load_ratings(_csv(tmp_path, "a,a.wav,r1,three,7,\n"))
    with pytest.raises(SchemaError, match="line 2"):
        load_ratings(_csv(tmp_path, "a,a.wav,r1,3,7,,extra\n"))
    with pytest.raises(SchemaError, match="line 2"):
        load_ratings(_csv(tmp_path, "a,a.wav,r1\n"))
    with pytest.raises(SchemaError):
        load_ratings(_csv(tmp_path, "", header=""))
    with pytest.raises(FileNotFoundError):
        load_ratings(tmp_path / "missing.csv")


def _records(tmp_path, rows):
    return load_ratings(_csv(tmp_path, "".join(f"{','.join(map(str, r))}\n" for r in rows)))


def test_partition_by_rater_count(tmp_path):
    recs = _records(tmp_path, [
        ("t", "t.wav", "r1", 2, 4, ""), ("t", "t.wav", "r2", 3, 6, ""), ("t", "t.wav", "r3", 4, 8, ""),
        ("two", "2.wav", "r1", 3, 5, ""), ("two", "2.wav", "r2", 4, 6, ""),
        ("ex", "e.wav", "r1", 5, 10, "example"), ("ex", "e.wav", "r2", 5, 10, "example"),
        ("ex", "e.wav", "r3", 5, 10, "example"),
        ("dup", "d.wav", "r1", 1, 1, ""), ("dup", "d.wav", "r1", 2, 2, ""), ("dup", "d.wav", "r2", 3, 3, ""),
    ])
    m = partition(recs)
    assert [t.utterance_id for t in m.test] == ["t"]
    t = m.test[0]
    assert (t.quality, t.intelligibility, t.rater_count) == (3.0, 6.0, 3)
    assert m.S == 8
    assert {r.utterance_id for r in m.train} == {"two", "ex", "dup"}
    doc = m.to_json(seed=1)
    assert '"train_samples": 8' in doc and '"seed": 1' in doc


def test_partition_empty_and_no_test(tmp_path, caplog):
    with pytest.raises(EmptyDataset):
        partition([])
    m = partition(_records(tmp_path, [("a", "a.wav", "r1", 3, 3, "")]))
    assert m.test == [] and m.S == 1
    assert "test set is empty" in caplog.text


def test_pseudo_scores_monotone_and_bounded():
    prev = None
    for snr in np.linspace(-20, 30, 51):
        q, i = pseudo_scores(snr)
        assert 1 <= q <= 5 and 0 <= i <= 10
        if prev:
            assert q >= prev[0] and i >= prev[1]
        prev = (q, i)
    assert pseudo_scores(100, 1, 1) == (5, 10)
    assert pseudo_scores(-100, -1, -1) == (1, 0)


def test_synth_utterance_deterministic():
    a, snr_a, kind_a = synth_utterance(3, 5)
    b, snr_b, kind_b = synth_utterance(3, 5)
    assert np.array_equal(a.samples, b.samples) and (snr_a, kind_a) == (snr_b, kind_b)
    assert snr_a in SNR_LEVELS
    assert 16000 <= a.samples.size <= 48000
    assert np.max(np.abs(a.samples)) <= 0.9
    c, _, _ = synth_utterance(3, 6)
    assert c.samples.size != a.samples.size or not np.array_equal(c.samples, a.samples)


def test_synth_corpus(tmp_path):
    out = tmp_path / "c"
    path = synth_corpus(out, 12, seed=2)
    assert resolve_wav(path, "utt0000.wav") == str(out / "utt0000.wav")
    recs = load_ratings(path)
    m = partition(recs)
    assert len(m.test) == 3
    assert len({r.utterance_id for r in m.train}) == 9
    assert all(3 <= t.rater_count <= 5 for t in m.test)
    for uid in {r.utterance_id for r in recs}:
        audio = read_wav(out / f"{uid}.wav")
        assert audio.sample_rate == 16000
    again = synth_corpus(tmp_path / "d", 12, seed=2)
    assert open(path, "rb").read() == open(again, "rb").read()
    assert (out / "utt0004.wav").read_bytes() == (tmp_path / "d" / "utt0004.wav").read_bytes()
    with open(path, newline="") as fh:
        assert next(csv.reader(fh))[-3:] == ["method", "noise_type", "snr"]


def test_synth_scores_track_snr(tmp_path):
    recs = load_ratings(synth_corpus(tmp_path, 60, seed=0, test_fraction=1.0))
    m = partition(recs)
    snr = {r.utterance_id: r.snr for r in recs}
    assert srcc([snr[t.utterance_id] for t in m.test], [t.intelligibility for t in m.test]) > 0.8
    assert srcc([snr[t.utterance_id] for t in m.test], [t.quality for t in m.test]) > 0.8


def test_synth_corpus_validation(tmp_path):
    with pytest.raises(InvalidConfig):
        synth_corpus(tmp_path, 7, seed=0)
    with pytest.raises(InvalidConfig):
        synth_corpus(tmp_path, 8, seed=0, test_fraction=1.5)


def test_manifest_defaults():
    assert DatasetManifest().S == 0
