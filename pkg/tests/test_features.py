import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mganet.config import SpectrogramConfig
from mganet.features import (
    AudioFormatError,
    FeatureFileError,
    UnsupportedRateError,
    featurize_dir,
    filter_centers,
    load_wav,
    log_mel,
    mel_filterbank,
    n_frames,
    normalize,
    read_features,
    stft,
    write_features,
    write_wav,
)


def _raw_wav(path, pcm, rate=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(pcm, dtype=f"<i{width}").tobytes())


def test_load_wav_zero_payload(tmp_path):
    _raw_wav(tmp_path / "z.wav", np.zeros(100, dtype=np.int16))
    samples, rate = load_wav(tmp_path / "z.wav")
    assert rate == 16000
    np.testing.assert_array_equal(samples, np.zeros(100))


def test_load_wav_scaling(tmp_path):
    _raw_wav(tmp_path / "s.wav", [16384, -16384])
    samples, _ = load_wav(tmp_path / "s.wav")
    assert samples.tolist() == [0.5, -0.5]


def test_load_wav_wrong_rate(tmp_path):
    _raw_wav(tmp_path / "r.wav", np.zeros(10, dtype=np.int16), rate=44100)
    with pytest.raises(UnsupportedRateError):
        load_wav(tmp_path / "r.wav")


def test_load_wav_stereo_and_8bit_and_garbage(tmp_path):
    _raw_wav(tmp_path / "st.wav", np.zeros(20, dtype=np.int16), channels=2)
    with pytest.raises(AudioFormatError):
        load_wav(tmp_path / "st.wav")
    with wave.open(str(tmp_path / "b.wav"), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(16000)
        wf.writeframes(bytes(10))
    with pytest.raises(AudioFormatError):
        load_wav(tmp_path / "b.wav")
    (tmp_path / "g.wav").write_bytes(b"not a wave file at all")
    with pytest.raises(AudioFormatError):
        load_wav(tmp_path / "g.wav")


def test_wav_round_trip(tmp_path):
    x = np.round(np.random.default_rng(0).uniform(-0.9, 0.9, 500) * 32768) / 32768
    write_wav(tmp_path / "a.wav", x)
    np.testing.assert_array_equal(load_wav(tmp_path / "a.wav")[0], x)


def test_stft_ten_seconds_gives_496_frames():
    assert stft(np.zeros(160000)).shape == (496, 513)


@given(st.integers(1, 5000))
def test_frame_count_formula(n):
    cfg = SpectrogramConfig(n_fft=64, hop=17)
    assert stft(np.ones(n), cfg).shape[0] == 1 + n // 17 == n_frames(n, 17)


def test_stft_bin_centre_sine_peaks_at_its_bin():
    k = 40
    t = np.arange(16000) / 16000
    mags = stft(np.sin(2 * np.pi * k * 16000 / 1024 * t))
    interior = mags[3:-3]
    assert np.all(np.argmax(interior, axis=1) == k)


def test_stft_zero_signal():
    assert np.all(stft(np.zeros(3000)) == 0.0)


def test_stft_rejects_empty():
    with pytest.raises(ValueError):
        stft(np.zeros(0))


def test_filterbank_rows_and_centres():
    fb = mel_filterbank()
    assert fb.shape == (64, 513)
    assert np.all(fb >= 0)
    assert np.all(fb.sum(axis=1) > 0)
    assert np.all(np.diff(filter_centers()) > 0)


def test_filterbank_on_flat_spectrum_gives_row_sums():
    fb = mel_filterbank()
    np.testing.assert_allclose(fb @ np.ones(513), fb.sum(axis=1))


def test_log_mel_of_silence_is_the_floor():
    mel = log_mel(np.zeros(160000))
    assert mel.values.shape == (496, 64)
    np.testing.assert_array_equal(mel.values, np.log(1e-10))
    assert mel.duration == 10.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**16))
def test_doubling_amplitude_never_decreases_log_mel(seed):
    x = 0.2 * np.random.default_rng(seed).standard_normal(4000)
    assert np.all(log_mel(2 * x).values >= log_mel(x).values)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=3000))
def test_log_mel_is_always_finite(samples):
    assert np.all(np.isfinite(log_mel(np.array(samples)).values))


def test_log_mel_is_deterministic():
    x = np.random.default_rng(1).standard_normal(8000)
    assert np.array_equal(log_mel(x).values, log_mel(x.copy()).values)


def test_normalize_per_bin():
    v = normalize(np.random.default_rng(2).standard_normal((50, 4)) * 3 + 7)
    np.testing.assert_allclose(v.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(v.std(axis=0), 1.0, atol=1e-6)


def test_feature_file_round_trip_and_layout(tmp_path):
    v = np.random.default_rng(3).standard_normal((5, 3))
    write_features(tmp_path / "f.mgaf", v)
    blob = (tmp_path / "f.mgaf").read_bytes()
    assert blob[:4] == b"MGAF"
    assert int.from_bytes(blob[4:8], "little") == 5 and int.from_bytes(blob[8:12], "little") == 3
    assert len(blob) == 12 + 8 * 15
    np.testing.assert_array_equal(read_features(tmp_path / "f.mgaf"), v)


def test_feature_file_errors(tmp_path):
    (tmp_path / "bad.mgaf").write_bytes(b"XXXX" + bytes(8))
    with pytest.raises(FeatureFileError):
        read_features(tmp_path / "bad.mgaf")
    write_features(tmp_path / "t.mgaf", np.zeros((2, 2)))
    (tmp_path / "t.mgaf").write_bytes((tmp_path / "t.mgaf").read_bytes()[:-8])
    with pytest.raises(FeatureFileError):
        read_features(tmp_path / "t.mgaf")


def test_featurize_dir_writes_manifest(tmp_path):
    wavs = tmp_path / "audio"
    wavs.mkdir()
    write_wav(wavs / "a.wav", np.zeros(16000))
    write_wav(wavs / "b.wav", 0.1 * np.ones(3230))
    lines = featurize_dir(wavs, tmp_path / "feats")
    assert [line.split("\t")[:4] for line in lines] == [["a.wav", "a.mgaf", "50", "64"], ["b.wav", "b.mgaf", "11", "64"]]
    manifest = (tmp_path / "feats" / "manifest.tsv").read_text().splitlines()
    assert manifest[0] == "filename\tfeatures\tframes\tmels\tduration"
    assert read_features(tmp_path / "feats" / "a.mgaf").shape == (50, 64)
