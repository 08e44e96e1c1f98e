"""Triple-coincidence histograms: background, peak integration, significance, CSV."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

CSV_HEADER = ("bin_start_ns", "counts")
DEFAULT_WINDOW = 3
MIN_OFF_PEAK_BINS = 5


class HistogramFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Histogram:
    bin_width_ns: float
    counts: tuple[int, ...]
    duration_s: float
    start_offset_ns: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not self.bin_width_ns > 0:
            raise ValueError("bin width must be positive")
        if any(c < 0 for c in self.counts):
            raise ValueError("histogram counts must be non-negative")

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def window_ns(self) -> float:
        return self.n_bins * self.bin_width_ns

    def bin_starts(self) -> list[float]:
        return [round(self.start_offset_ns + k * self.bin_width_ns, 9) for k in range(self.n_bins)]

    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class PeakReport:
    peak_window: tuple[int, int]
    raw_peak_counts: int
    peak_bin_max: int
    background_mean_per_bin: float
    background_sigma_per_bin: float
    net_counts: float
    net_counts_sigma: float
    net_rate_per_hour: float
    net_rate_per_hour_sigma: float
    significance_sigma: float
    window_significance_sigma: float

    def to_json(self) -> dict:
        return {
            "peak_window": list(self.peak_window),
            "raw_peak_counts": self.raw_peak_counts,
            "peak_bin_max": self.peak_bin_max,
            "background_mean_per_bin": self.background_mean_per_bin,
            "background_sigma_per_bin": self.background_sigma_per_bin,
            "net_counts": {"mean": self.net_counts, "sigma": self.net_counts_sigma},
            "net_rate_per_hour": {"mean": self.net_rate_per_hour, "sigma": self.net_rate_per_hour_sigma},
            "significance_sigma": self.significance_sigma,
            "window_significance_sigma": self.window_significance_sigma,
        }


def estimate_background(h: Histogram, exclude: range | tuple[int, int] = range(0)) -> tuple[float, float]:
    """Mean and sample standard deviation of the bins outside ``exclude``.

    ``exclude`` is a ``range`` or a half-open ``(start, stop)`` pair of bin indices.
    """
    if isinstance(exclude, tuple):
        exclude = range(*exclude)
    off = [c for k, c in enumerate(h.counts) if k not in exclude]
    if len(off) < MIN_OFF_PEAK_BINS:
        raise ValueError(f"need at least {MIN_OFF_PEAK_BINS} off-peak bins, have {len(off)}")
    mean = math.fsum(off) / len(off)
    var = math.fsum((c - mean) ** 2 for c in off) / (len(off) - 1)
    return mean, math.sqrt(var)


def _best_window(counts: tuple[int, ...], size: int) -> int:
    best, best_sum = 0, sum(counts[:size])
    running = best_sum
    for start in range(1, len(counts) - size + 1):
        running += counts[start + size - 1] - counts[start - 1]
        if running > best_sum:
            best, best_sum = start, running
    return best


def analyze_peak(h: Histogram, window_size: int = DEFAULT_WINDOW) -> PeakReport:
    """Integrate the highest ``window_size``-bin window against the off-peak background.

    Significance is (max peak bin - background)/sqrt(background) with the
    Poisson variance floored at one count; the window-sum variant uses the
    net window counts over sqrt(window * background).
    """
    if h.n_bins == 0:
        raise ValueError("empty histogram")
    if window_size < 1 or window_size % 2 == 0 or window_size >= h.n_bins:
        raise ValueError("window size must be odd, positive and smaller than the bin count")
    start = _best_window(h.counts, window_size)
    window = range(start, start + window_size)
    bg_mean, bg_sigma = estimate_background(h, window)
    raw = sum(h.counts[k] for k in window)
    peak_max = max(h.counts[k] for k in window)
    net = raw - window_size * bg_mean
    net_sigma = math.sqrt(raw + window_size * bg_mean)
    hours = h.duration_s / 3600.0
    significance = max(0.0, (peak_max - bg_mean) / math.sqrt(max(bg_mean, 1.0)))
    window_sig = max(0.0, net / math.sqrt(max(window_size * bg_mean, 1.0)))
    return PeakReport(
        peak_window=(start, start + window_size),
        raw_peak_counts=raw,
        peak_bin_max=peak_max,
        background_mean_per_bin=bg_mean,
        background_sigma_per_bin=bg_sigma,
        net_counts=net,
        net_counts_sigma=net_sigma,
        net_rate_per_hour=net / hours,
        net_rate_per_hour_sigma=net_sigma / hours,
        significance_sigma=significance,
        window_significance_sigma=window_sig,
    )


def write_histogram_csv(h: Histogram, path) -> None:
    lines = [",".join(CSV_HEADER)]
    lines += [f"{start!r},{count}" for start, count in zip(h.bin_starts(), h.counts)]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_histogram_csv(path, duration_s: float, bin_width_ns: float | None = None) -> Histogram:
    """Parse a ``bin_start_ns,counts`` file.

    The bin width comes from the row spacing; a single-row file needs
    ``bin_width_ns``. Errors name the offending line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise HistogramFormatError(f"{path}:1: expected header {','.join(CSV_HEADER)!r}")
    starts, counts = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise HistogramFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            start = float(row[0])
            count = int(row[1])
        except ValueError:
            raise HistogramFormatError(f"{path}:{lineno}: malformed row {row!r}") from None
        if count < 0:
            raise HistogramFormatError(f"{path}:{lineno}: negative count {count}")
        starts.append(start)
        counts.append(count)
    if not counts:
        raise HistogramFormatError(f"{path}: no bins")
    if len(starts) > 1:
        width = round(starts[1] - starts[0], 9)
        for lineno, (a, b) in enumerate(zip(starts, starts[1:]), start=3):
            if abs((b - a) - width) > 1e-6 * max(width, 1.0):
                raise HistogramFormatError(f"{path}:{lineno}: inconsistent bin width {b - a!r} (expected {width!r})")
        if bin_width_ns is not None and abs(width - bin_width_ns) > 1e-6 * bin_width_ns:
            raise HistogramFormatError(f"{path}: bin width {width} differs from requested {bin_width_ns}")
    elif bin_width_ns is None:
        raise HistogramFormatError(f"{path}: single-bin file needs an explicit bin width")
    else:
        width = bin_width_ns
    return Histogram(bin_width_ns=width, counts=tuple(counts), duration_s=duration_s, start_offset_ns=starts[0])
