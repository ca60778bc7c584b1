"""Detrending, Fourier transforms, and peak extraction for echo traces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sig

from .analytic import PulseSequence
from .ensemble import DecayEnvelope, EseemTrace


class DetrendError(ValueError):
    """Detrend envelope is invalid on the trace's grid."""


@dataclass(frozen=True)
class EseemSpectrum:
    """Frequency-domain view of a trace."""

    frequency_hz: np.ndarray
    amplitude: np.ndarray              # complex
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frequency_hz, dtype=float)
        if f[0] != 0.0:
            raise ValueError("spectrum must contain the DC bin")
        df = np.diff(f)
        if f.size > 2 and not np.allclose(df, df[0], rtol=1e-9):
            raise ValueError("frequency grid must be uniform")
        object.__setattr__(self, "frequency_hz", f)
        object.__setattr__(self, "amplitude", np.asarray(self.amplitude))


def _resampled(trace: EseemTrace) -> tuple[np.ndarray, np.ndarray]:
    grid, amp = trace.grid, trace.amplitude
    steps = np.diff(grid)
    if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        uniform = np.linspace(grid[0], grid[-1], grid.size)
        amp = np.interp(uniform, grid, amp)
        grid = uniform
    return grid, amp


def preprocess_and_fft(
    trace: EseemTrace,
    detrend: DecayEnvelope | None = None,
    sequence: PulseSequence | None = None,
    mirror: bool = False,
    zero_pad_factor: int = 1,
    window: str | None = None,
    subtract_baseline: bool = False,
) -> EseemSpectrum:
    """Divide out a decay envelope, optionally mirror about t = 0, and FFT.

    Mirroring builds the even extension of the trace (circularly symmetric,
    so a symmetric input transforms to a real-dominant spectrum). The
    default applies no window; ``window='hann'`` is available for noisy
    data. ``zero_pad_factor`` >= 1 pads the time record before the
    transform to refine the frequency grid.
    """
    if zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be >= 1")
    grid, amp = _resampled(trace)
    if detrend is not None:
        if sequence is None:
            raise ValueError("detrending needs the pulse sequence for its delays")
        envelope = np.broadcast_to(detrend.factor(sequence), grid.shape)
        if np.any(envelope <= 0.0) or not np.all(np.isfinite(envelope)):
            raise DetrendError("detrend envelope must stay finite and positive")
        amp = amp / envelope
    if subtract_baseline:
        amp = amp - amp.mean()      # removes the unmodulated-echo DC lobe
    if window == "hann":
        amp = amp * np.hanning(2 * amp.size)[amp.size:]   # fade-out half
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")

    dt = grid[1] - grid[0] if grid.size > 1 else 1.0
    n = amp.size
    if mirror:
        pad = (zero_pad_factor - 1) * (2 * n - 1)
        record = np.concatenate([amp, np.zeros(pad), amp[:0:-1]])
    else:
        record = np.concatenate([amp, np.zeros((zero_pad_factor - 1) * n)])
    spectrum = np.fft.rfft(record)
    freqs = np.fft.rfftfreq(record.size, dt)
    meta = dict(trace.metadata)
    meta.update(
        mirror=mirror, zero_pad_factor=zero_pad_factor, window=window,
        detrended=detrend is not None, dt_s=float(dt), n_time=int(n),
        subtract_baseline=subtract_baseline,
    )
    return EseemSpectrum(freqs, spectrum, meta)


def lorentzian_mask(spectrum: EseemSpectrum, hwhm_hz: float) -> EseemSpectrum:
    """Visual-comparison mask mimicking detection-bandwidth filtering of
    high modulation frequencies. Never used in fitting."""
    mask = 1.0 / (1.0 + (spectrum.frequency_hz / hwhm_hz) ** 2)
    meta = dict(spectrum.metadata)
    meta["lorentzian_hwhm_hz"] = hwhm_hz
    return EseemSpectrum(spectrum.frequency_hz, spectrum.amplitude * mask, meta)


def find_peaks(
    spectrum: EseemSpectrum,
    min_prominence: float = 0.05,
    skip_dc_bins: int = 1,
) -> list[dict]:
    """Local maxima of |amplitude| above a relative prominence threshold.

    Peak frequencies are refined by quadratic interpolation around the
    maximum bin; widths are FWHM estimates in Hz. The DC region can be
    excluded with ``skip_dc_bins``.
    """
    mag = np.abs(spectrum.amplitude)
    f = spectrum.frequency_hz
    if mag.size < 3:
        return []
    scale = mag[skip_dc_bins:].max() if mag[skip_dc_bins:].size else 0.0
    if scale == 0.0:
        return []
    idx, props = sig.find_peaks(mag, prominence=min_prominence * scale)
    idx = idx[idx >= max(skip_dc_bins, 1)]
    if idx.size == 0:
        return []
    widths = sig.peak_widths(mag, idx, rel_height=0.5)[0]
    df = f[1] - f[0]
    out = []
    for i, w in zip(idx, widths):
        y0, y1, y2 = mag[i - 1], mag[i], mag[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        out.append(
            {
                "frequency_hz": float(f[i] + shift * df),
                "amplitude": float(y1),
                "fwhm_hz": float(w * df),
            }
        )
    out.sort(key=lambda d: -d["amplitude"])
    return out
