"""Reconstruction quality metrics: MSE, NRMSE, PSNR and SSIM.

SSIM uses a uniform 7-wide window over every fully contained window
position, sample (co)variances and the usual stabilizers
``C1 = (0.01 L)^2``, ``C2 = (0.03 L)^2`` for data range ``L``. Complex
inputs are reduced to magnitude for SSIM only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 999.0
FIELDS = ("mse", "nrmse", "psnr", "ssim")


def mse(reference, estimate) -> float:
    reference, estimate = _pair(reference, estimate)
    return float(np.mean(np.abs(reference - estimate) ** 2))


def nrmse(reference, estimate) -> float:
    """``||x - x_hat|| / ||x||``."""
    reference, estimate = _pair(reference, estimate)
    denom = np.linalg.norm(reference)
    if denom == 0:
        raise ValueError("NRMSE undefined for a zero reference")
    return float(np.linalg.norm(reference - estimate) / denom)


def psnr(reference, estimate, data_range: float) -> float:
    """``10 log10(L^2 / MSE)``; identical inputs give the ``PSNR_CAP`` sentinel."""
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    err = mse(reference, estimate)
    if err == 0:
        return PSNR_CAP
    return float(10.0 * np.log10(data_range**2 / err))


def ssim(reference, estimate, data_range: float, win_size: int = 7) -> float:
    reference, estimate = _pair(reference, estimate)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    x = np.abs(reference) if np.iscomplexobj(reference) else reference.astype(np.float64)
    y = np.abs(estimate) if np.iscomplexobj(estimate) else estimate.astype(np.float64)
    smallest = min(x.shape)
    win = min(win_size, smallest if smallest % 2 else smallest - 1)
    if win < 1:
        raise ValueError("image too small for SSIM")
    window = (win,) * x.ndim
    npix = win**x.ndim
    cov_norm = npix / (npix - 1) if npix > 1 else 1.0

    def local_mean(a):
        return sliding_window_view(a, window).mean(axis=tuple(range(-x.ndim, 0)))

    ux, uy = local_mean(x), local_mean(y)
    vx = cov_norm * (local_mean(x * x) - ux * ux)
    vy = cov_norm * (local_mean(y * y) - uy * uy)
    vxy = cov_norm * (local_mean(x * y) - ux * uy)
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    return float(s.mean())


def _pair(reference, estimate):
    reference, estimate = np.asarray(reference), np.asarray(estimate)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {estimate.shape}")
    return reference, estimate


@dataclass
class SampleMetrics:
    id: str
    mse: float
    nrmse: float
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    """Per-sample metrics with mean and standard deviation summaries."""

    samples: list = field(default_factory=list)

    def values(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples], dtype=np.float64)

    def mean(self, name: str) -> float:
        return float(self.values(name).mean())

    def std(self, name: str) -> float:
        return float(self.values(name).std())

    @property
    def mse(self) -> float:
        return self.mean("mse")

    @property
    def nrmse(self) -> float:
        return self.mean("nrmse")

    @property
    def psnr(self) -> float:
        return self.mean("psnr")

    @property
    def ssim(self) -> float:
        return self.mean("ssim")

    def extend(self, other: "MetricReport") -> "MetricReport":
        return MetricReport(self.samples + other.samples)


def compute_metrics(reference, estimate, data_range: float | None = None, sample_id="0") -> MetricReport:
    """Metrics of one reference/estimate pair.

    ``data_range`` defaults to the peak-to-peak of the reference magnitude.
    """
    reference, estimate = _pair(reference, estimate)
    if data_range is None:
        mag = np.abs(reference)
        data_range = float(mag.max() - mag.min()) or 1.0
    sample = SampleMetrics(
        str(sample_id),
        mse(reference, estimate),
        nrmse(reference, estimate),
        psnr(reference, estimate, data_range),
        ssim(reference, estimate, data_range),
    )
    return MetricReport([sample])


def batch_metrics(references, estimates, data_range: float | None = None, ids=None) -> MetricReport:
    """Metrics over paired stacks; the leading axis indexes samples."""
    if len(references) != len(estimates):
        raise ValueError("reference and estimate stacks differ in length")
    ids = [str(i) for i in range(len(references))] if ids is None else [str(i) for i in ids]
    report = MetricReport()
    for i, r, e in zip(ids, references, estimates):
        report = report.extend(compute_metrics(r, e, data_range, i))
    return report


def _num(v: float) -> str:
    return repr(float(v))


def write_metrics_csv(path, report: MetricReport, comments: dict | None = None) -> None:
    """One row per sample, then ``mean`` and ``std`` summary rows.

    ``comments`` become leading ``# key=value`` lines.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", *FIELDS))
        for s in report.samples:
            w.writerow((s.id, *(_num(getattr(s, f)) for f in FIELDS)))
        if report.samples:
            w.writerow(("mean", *(_num(report.mean(f)) for f in FIELDS)))
            w.writerow(("std", *(_num(report.std(f)) for f in FIELDS)))


def read_metrics_csv(path):
    """Returns ``(comments, rows)`` with numeric fields parsed; summary rows included."""
    comments, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            comments[key.strip()] = value.strip()
        elif line:
            lines.append(line)
    rows = []
    for rec in csv.DictReader(lines):
        rows.append({"id": rec["id"], **{f: float(rec[f]) for f in FIELDS}})
    return comments, rows
