"""16 kHz mono WAV -> log-mel feature matrices, plus the binary feature file format."""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SpectrogramConfig

FEATURE_MAGIC = b"MGAF"


class AudioFormatError(IOError):
    """The WAV file is malformed or uses an unsupported encoding."""


class UnsupportedRateError(AudioFormatError):
    pass


class FeatureFileError(IOError):
    pass


@dataclass
class MelSpectrogram:
    values: np.ndarray  # [frames, n_mels]
    clip_id: str = ""
    duration: float = 0.0

    @property
    def frames(self) -> int:
        return self.values.shape[0]


def load_wav(path: str | Path, expected_rate: int = 16000) -> tuple[np.ndarray, int]:
    """Read 16-bit PCM mono; samples are scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels, width, rate, n = wf.getnchannels(), wf.getsampwidth(), wf.getframerate(), wf.getnframes()
            raw = wf.readframes(n)
    except (wave.Error, EOFError, struct.error) as exc:
        raise AudioFormatError(f"{path}: not a readable RIFF/WAVE PCM file ({exc})") from exc
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit samples")
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono audio, got {channels} channels")
    if rate != expected_rate:
        raise UnsupportedRateError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (no resampling)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path: str | Path, samples: np.ndarray, rate: int = 16000) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def n_frames(n_samples: int, hop: int) -> int:
    return 1 + n_samples // hop


def stft(samples: np.ndarray, config: SpectrogramConfig | None = None) -> np.ndarray:
    """Magnitudes ``[1 + len // hop, n_fft // 2 + 1]`` of Hann-windowed, center reflect-padded frames."""
    cfg = config or SpectrogramConfig()
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("stft needs at least one sample")
    pad = cfg.n_fft // 2
    xp = np.pad(x, pad, mode="reflect") if x.size > 1 else np.pad(x, pad, mode="edge")
    count = n_frames(x.size, cfg.hop)
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop * np.arange(count)[:, None]
    window = np.hanning(cfg.n_fft + 1)[:-1]  # periodic Hann
    return np.abs(np.fft.rfft(xp[idx] * window, axis=-1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(config: SpectrogramConfig | None = None) -> np.ndarray:
    """Triangular filters ``[n_mels, n_fft // 2 + 1]`` with centers equally spaced in mel."""
    cfg = config or SpectrogramConfig()
    bins = np.fft.rfftfreq(cfg.n_fft, 1.0 / cfg.sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (center - lo)
    falling = (hi - bins[None, :]) / (hi - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def filter_centers(config: SpectrogramConfig | None = None) -> np.ndarray:
    cfg = config or SpectrogramConfig()
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))[1:-1]


def log_mel(samples: np.ndarray, config: SpectrogramConfig | None = None, clip_id: str = "") -> MelSpectrogram:
    cfg = config or SpectrogramConfig()
    power = stft(samples, cfg) ** 2
    mel = power @ mel_filterbank(cfg).T
    values = np.log(np.maximum(mel, cfg.log_floor))
    return MelSpectrogram(values, clip_id, len(samples) / cfg.sample_rate)


def normalize(values: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Zero mean, unit variance per mel bin within one clip."""
    mu = values.mean(axis=0, keepdims=True)
    sd = values.std(axis=0, keepdims=True)
    return (values - mu) / (sd + eps)


def write_features(path: str | Path, values: np.ndarray) -> None:
    frames, mels = values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<II", frames, mels))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_features(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: missing MGAF header")
    frames, mels = struct.unpack("<II", blob[4:12])
    payload = blob[12:]
    if len(payload) != 8 * frames * mels:
        raise FeatureFileError(f"{path}: payload holds {len(payload)} bytes, header promises {frames}x{mels} floats")
    return np.frombuffer(payload, dtype="<f8").reshape(frames, mels).astype(np.float64)


def featurize_dir(wav_dir: str | Path, out_dir: str | Path, config: SpectrogramConfig | None = None) -> list[str]:
    """Extract features for every ``*.wav``; writes ``<clip>.mgaf`` plus a ``manifest.tsv`` line per clip."""
    cfg = config or SpectrogramConfig()
    wav_dir, out_dir = Path(wav_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for wav in sorted(wav_dir.glob("*.wav")):
        samples, _ = load_wav(wav, cfg.sample_rate)
        mel = log_mel(samples, cfg, wav.stem)
        write_features(out_dir / f"{wav.stem}.mgaf", mel.values)
        lines.append(f"{wav.name}\t{wav.stem}.mgaf\t{mel.frames}\t{cfg.n_mels}\t{mel.duration:.3f}")
    (out_dir / "manifest.tsv").write_text("filename\tfeatures\tframes\tmels\tduration\n" + "".join(l + "\n" for l in lines))
    return lines
