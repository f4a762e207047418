"""Overlapping-chunk frequency transforms (STFT) and their inverses.

A kbit time series sampled every T_S seconds is cut into chunks of
length w seconds starting every T_C seconds (T_S < T_C <= w, so
consecutive chunks overlap).  Each chunk is DFT-transformed; only the
coefficients up to the Nyquist index are kept, stored with real and
imaginary parts interleaved.  Chunks extending past the series end are
zero-padded so that a series of N samples always yields
ceil(N / (T_C/T_S)) frames.

Conventions: rectangular window (overlap, not tapering, controls
artifacts); forward DFT unnormalized, inverse scaled by 1/L.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ChunkTooShort, EmptySeries, FrameDimMismatch, ParseError

_REL_TOL = 1e-9


def _as_multiple(value: float, base: float, name: str) -> int:
    ratio = value / base
    rounded = int(round(ratio))
    if rounded < 1 or abs(ratio - rounded) > _REL_TOL * max(1.0, abs(ratio)):
        raise ValueError(f"{name} must be a positive integer multiple of the sample interval")
    return rounded


@dataclass(frozen=True)
class ChunkConfig:
    """Chunking geometry: sample interval T_S, chunk cadence T_C, chunk length w."""

    sample_interval_s: float = 0.01
    chunk_interval_s: float = 0.05
    chunk_length_s: float = 1.0

    def __post_init__(self):
        if not self.sample_interval_s > 0:
            raise ValueError("sample_interval_s must be positive")
        if not self.chunk_interval_s > self.sample_interval_s:
            raise ValueError("chunk_interval_s must exceed sample_interval_s")
        if self.chunk_length_s < self.chunk_interval_s:
            raise ValueError("chunk_length_s must be >= chunk_interval_s")
        _as_multiple(self.chunk_interval_s, self.sample_interval_s, "chunk_interval_s")
        _as_multiple(self.chunk_length_s, self.sample_interval_s, "chunk_length_s")

    @property
    def hop_samples(self) -> int:
        """Samples between consecutive chunk starts (T_C / T_S)."""
        return _as_multiple(self.chunk_interval_s, self.sample_interval_s, "chunk_interval_s")

    @property
    def chunk_samples(self) -> int:
        """Samples per chunk (w / T_S)."""
        return _as_multiple(self.chunk_length_s, self.sample_interval_s, "chunk_length_s")

    @property
    def frame_dim(self) -> int:
        return frame_dim_for(self.chunk_samples)


def frame_dim_for(chunk_samples: int) -> int:
    """Interleaved frame length for a chunk of L samples: 2*(floor(L/2)+1)."""
    return 2 * (chunk_samples // 2 + 1)


@dataclass
class SpectralSeries:
    """Frequency-domain view of one flow: one interleaved frame per chunk."""

    frames: np.ndarray  # (n_frames, frame_dim)
    config: ChunkConfig
    origin_length: int

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=float))
        if self.frames.shape[1] != self.config.frame_dim:
            raise FrameDimMismatch(
                f"frame dim {self.frames.shape[1]} != configured {self.config.frame_dim}")

    @property
    def frame_dim(self) -> int:
        return self.frames.shape[1]


def chunk(series: np.ndarray, config: ChunkConfig) -> np.ndarray:
    """Cut a series into overlapping chunks, zero-padding past the end.

    Chunk i covers samples [i*hop, i*hop + chunk_samples); the number of
    chunks is ceil(len(series) / hop) so every sample starts exactly one
    chunk's worth of positions.
    """
    series = np.asarray(series, dtype=float).ravel()
    if series.size == 0:
        raise EmptySeries("cannot chunk an empty series")
    hop = config.hop_samples
    width = config.chunk_samples
    n_chunks = -(-series.size // hop)  # ceil
    padded = np.zeros((n_chunks - 1) * hop + width)
    padded[:series.size] = series
    idx = np.arange(n_chunks)[:, None] * hop + np.arange(width)[None, :]
    return padded[idx]


def forward_frame(chunk_values: np.ndarray) -> np.ndarray:
    """DFT of one chunk, folded at Nyquist, interleaved (re0, im0, re1, im1, ...)."""
    chunk_values = np.asarray(chunk_values, dtype=float).ravel()
    if chunk_values.size < 2:
        raise ChunkTooShort(f"chunk has {chunk_values.size} samples, need >= 2")
    spec = np.fft.rfft(chunk_values)
    out = np.empty(2 * spec.size)
    out[0::2] = spec.real
    out[1::2] = spec.imag
    return out


def inverse_frame(frame: np.ndarray, chunk_samples: int) -> np.ndarray:
    """Rebuild a chunk of L samples from an interleaved frame.

    The upper half of the spectrum is restored by conjugate symmetry and
    the inverse DFT (scaled 1/L) is applied; the real part is returned.
    """
    frame = np.asarray(frame, dtype=float).ravel()
    expected = frame_dim_for(chunk_samples)
    if frame.size != expected:
        raise FrameDimMismatch(
            f"frame dim {frame.size} incompatible with chunk of {chunk_samples} samples "
            f"(expected {expected})")
    spec = frame[0::2] + 1j * frame[1::2]
    return np.fft.irfft(spec, n=chunk_samples)


def transform(series: np.ndarray, config: ChunkConfig) -> SpectralSeries:
    """chunk + forward_frame over a whole series."""
    series = np.asarray(series, dtype=float).ravel()
    chunks = chunk(series, config)
    spec = np.fft.rfft(chunks, axis=1)
    frames = np.empty((chunks.shape[0], 2 * spec.shape[1]))
    frames[:, 0::2] = spec.real
    frames[:, 1::2] = spec.imag
    return SpectralSeries(frames=frames, config=config, origin_length=series.size)


def overlap_average(chunks: np.ndarray, hop: int, out_length: int) -> np.ndarray:
    """Place chunks at hop-spaced offsets and average overlapping samples."""
    chunks = np.atleast_2d(np.asarray(chunks, dtype=float))
    width = chunks.shape[1]
    full = (chunks.shape[0] - 1) * hop + width
    acc = np.zeros(full)
    cover = np.zeros(full)
    for i, c in enumerate(chunks):
        acc[i * hop:i * hop + width] += c
        cover[i * hop:i * hop + width] += 1.0
    out = acc / cover
    return out[:out_length]


def reassemble(series: SpectralSeries) -> np.ndarray:
    """Inverse-transform every frame and overlap-average back to kbit samples."""
    cfg = series.config
    if series.frames.shape[1] != cfg.frame_dim:
        raise FrameDimMismatch("frames inconsistent with config")
    spec = series.frames[:, 0::2] + 1j * series.frames[:, 1::2]
    chunks = np.fft.irfft(spec, n=cfg.chunk_samples, axis=1)
    return overlap_average(chunks, cfg.hop_samples, series.origin_length)


# --- CSV serialization ----------------------------------------------------

def save_series_csv(series: SpectralSeries, path) -> None:
    """One row per frame, columns f<i>_re/f<i>_im; metadata in a # header."""
    cfg = series.config
    n_coef = series.frame_dim // 2
    header = [f"f{i}_{p}" for i in range(n_coef) for p in ("re", "im")]
    with open(path, "w", newline="") as fh:
        fh.write(f"#chunk t_s={cfg.sample_interval_s!r} t_c={cfg.chunk_interval_s!r} "
                 f"w={cfg.chunk_length_s!r} origin_length={series.origin_length}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in series.frames:
            writer.writerow([format(v, ".17g") for v in row])


def load_series_csv(path) -> SpectralSeries:
    with open(path, newline="") as fh:
        meta_line = fh.readline().strip()
        if not meta_line.startswith("#chunk"):
            raise ParseError("missing #chunk metadata line", line=1)
        meta = dict(part.split("=", 1) for part in meta_line.split()[1:])
        try:
            cfg = ChunkConfig(sample_interval_s=float(meta["t_s"]),
                              chunk_interval_s=float(meta["t_c"]),
                              chunk_length_s=float(meta["w"]))
            origin = int(meta["origin_length"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad #chunk metadata: {exc}", line=1) from exc
        reader = csv.reader(fh)
        next(reader)  # column header
        rows = [[float(v) for v in row] for row in reader if row]
    return SpectralSeries(frames=np.asarray(rows, dtype=float), config=cfg,
                          origin_length=origin)
