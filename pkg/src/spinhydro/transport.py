"""Hydrodynamic analysis of correlation curves.

Curves carry a dimensionless time grid (units 1/J), values and statistical
errors.  Exponent extraction is a weighted least-squares fit of log C
against log t; the decay C ~ t^{-1/z} defines the dynamical exponent z
(1 = ballistic, 2 = diffusive).  A fixed-z amplitude fit feeds the
diffusion-constant conversion D = a^2 J / (4 pi A^2), which comes from the
one-dimensional diffusive return probability C_norm(t) = a / sqrt(4 pi D t).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np


class FitWindowError(ValueError):
    """Fit window empty, too small, or without a positive decaying signal."""


@dataclass
class CorrelationCurve:
    """Autocorrelation samples on an increasing time grid."""

    times: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    label: str = ""
    normalization: str = "raw"  # raw | by_global
    n_samples: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderrs = np.asarray(self.stderrs, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.stderrs))):
            raise ValueError("values and stderrs must be finite")

    def scaled(self, factor: float) -> "CorrelationCurve":
        return CorrelationCurve(self.times.copy(), self.values * factor,
                                self.stderrs * abs(factor), self.label,
                                self.normalization, self.n_samples)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_over_J_inverse", "value", "stderr", "n_samples"])
            for t, v, e in zip(self.times, self.values, self.stderrs):
                writer.writerow([repr(float(t)), repr(float(v)), repr(float(e)),
                                 self.n_samples])

    @classmethod
    def from_csv(cls, path, label: str = "") -> "CorrelationCurve":
        times, values, errs, ns = [], [], [], 1
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[0] != "t_over_J_inverse":
                raise ValueError(f"unexpected curve CSV header {header!r}")
            for row in reader:
                times.append(float(row[0]))
                values.append(float(row[1]))
                errs.append(float(row[2]))
                ns = int(row[3])
        return cls(np.array(times), np.array(values), np.array(errs),
                   label=label, n_samples=ns)


@dataclass
class ExponentFit:
    """Power-law fit C = prefactor * t^{-1/z} over a time window."""

    z: float
    z_err: float
    window: tuple[float, float]
    prefactor: float
    goodness: float
    n_points: int = 0
    fixed_z: bool = False

    def to_dict(self) -> dict:
        return {"z": self.z, "z_err": self.z_err,
                "window": list(self.window), "prefactor": self.prefactor,
                "goodness": self.goodness, "n_points": self.n_points,
                "fixed_z": self.fixed_z}


def _window_points(curve: CorrelationCurve, t_start: float, t_end: float,
                   n_log_bins: int | None):
    if t_start >= t_end:
        raise FitWindowError(f"empty window [{t_start}, {t_end}]")
    eps = 1e-12
    mask = (curve.times >= t_start - eps) & (curve.times <= t_end + eps)
    t = curve.times[mask]
    v = curve.values[mask]
    e = curve.stderrs[mask]
    if len(t) == 0:
        raise FitWindowError(f"no samples in window [{t_start}, {t_end}]")
    # drop statistically insignificant points before taking logs
    keep = (e == 0.0) | (v >= 3.0 * e)
    t, v, e = t[keep], v[keep], e[keep]
    if np.any(v <= 0.0):
        raise FitWindowError("non-positive values inside the fit window")
    if n_log_bins:
        t, v, e = _log_bin(t, v, e, n_log_bins)
    return t, v, e


def _log_bin(t, v, e, n_bins):
    """Average an oscillatory curve over log-spaced bins before fitting."""
    edges = np.geomspace(t[0], t[-1] * (1 + 1e-12), n_bins + 1)
    ts, vs, es = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (t >= lo) & (t < hi)
        if not np.any(m):
            continue
        if np.all(e[m] > 0):
            w = 1.0 / e[m] ** 2
            vs.append(float(np.sum(w * v[m]) / np.sum(w)))
            es.append(float(1.0 / math.sqrt(np.sum(w))))
        else:
            vs.append(float(np.mean(v[m])))
            es.append(0.0)
        ts.append(float(np.exp(np.mean(np.log(t[m])))))
    return np.array(ts), np.array(vs), np.array(es)


def fit_exponent(curve: CorrelationCurve, t_start: float, t_end: float,
                 n_log_bins: int | None = None, min_points: int = 4,
                 fix_z: float | None = None) -> ExponentFit:
    """Weighted log-log least squares of C(t) over [t_start, t_end].

    Points with value below three standard errors are excluded; remaining
    non-positive values raise.  With fix_z set, only the prefactor is fitted
    (used for diffusion-constant extraction with z = 2).
    """
    t, v, e = _window_points(curve, t_start, t_end, n_log_bins)
    if len(t) < min_points:
        raise FitWindowError(
            f"only {len(t)} usable points in window [{t_start}, {t_end}]")
    x = np.log(t)
    y = np.log(v)
    weighted = bool(np.all(e > 0.0))
    w = (v / e) ** 2 if weighted else np.ones_like(y)  # sigma_logC = stderr/value

    if fix_z is not None:
        if fix_z <= 0:
            raise ValueError("fix_z must be positive")
        target = y + x / fix_z
        ln_a = float(np.sum(w * target) / np.sum(w))
        if weighted:
            ln_a_err = float(1.0 / math.sqrt(np.sum(w)))
            chi2 = float(np.sum(w * (target - ln_a) ** 2))
            goodness = chi2 / max(len(t) - 1, 1)
        else:
            resid = target - ln_a
            ln_a_err = float(np.std(resid, ddof=1) / math.sqrt(len(t)))
            goodness = float(np.std(resid))
        a = math.exp(ln_a)
        return ExponentFit(z=fix_z, z_err=0.0, window=(t_start, t_end),
                           prefactor=a, goodness=goodness, n_points=len(t),
                           fixed_z=True)

    sw = np.sum(w)
    xbar = np.sum(w * x) / sw
    ybar = np.sum(w * y) / sw
    sxx = np.sum(w * (x - xbar) ** 2)
    if sxx == 0.0:
        raise FitWindowError("degenerate window: all times equal")
    slope = float(np.sum(w * (x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    if weighted:
        slope_err = float(1.0 / math.sqrt(sxx))
        goodness = float(np.sum(w * resid ** 2) / max(len(t) - 2, 1))
    else:
        s2 = float(np.sum(resid ** 2) / max(len(t) - 2, 1))
        slope_err = float(math.sqrt(s2 / sxx))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        goodness = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    if slope >= 0.0:
        raise FitWindowError(
            f"no power-law decay in window [{t_start}, {t_end}] (slope {slope:+.3g})")
    z = -1.0 / slope
    z_err = slope_err / slope ** 2
    return ExponentFit(z=z, z_err=float(z_err), window=(t_start, t_end),
                       prefactor=math.exp(intercept), goodness=goodness,
                       n_points=len(t))


def envelope_curve(curve: CorrelationCurve) -> CorrelationCurve:
    """Local maxima of an oscillatory curve (e.g. a squared Bessel decay).

    Fitting the peak envelope gives the power law directly when the raw
    curve oscillates through zeros that a log fit cannot digest; the grid
    must sample the oscillation densely for the peak values to be faithful.
    """
    v = curve.values
    idx = np.where((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]))[0] + 1
    if len(idx) == 0:
        raise FitWindowError("curve has no interior local maxima")
    return CorrelationCurve(times=curve.times[idx], values=v[idx],
                            stderrs=curve.stderrs[idx],
                            label=curve.label + "_envelope",
                            normalization=curve.normalization,
                            n_samples=curve.n_samples)


def exponent_sweep(curve: CorrelationCurve, t_start: float, t_end_list,
                   n_log_bins: int | None = None,
                   min_points: int = 4) -> list[ExponentFit]:
    """z(t_end) over a list of window endpoints at fixed t_start."""
    return [fit_exponent(curve, t_start, float(te), n_log_bins=n_log_bins,
                         min_points=min_points)
            for te in t_end_list]


def sweep_to_csv(fits: list[ExponentFit], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_end", "z", "z_err"])
        for f in fits:
            writer.writerow([repr(f.window[1]), repr(f.z), repr(f.z_err)])


def diffusion_constant(fit: ExponentFit) -> float:
    """D in units a^2 J from a diffusive-constrained amplitude fit.

    Requires a fit made with z fixed to 2, i.e. C_norm = A t^{-1/2} with t in
    1/J; then C_norm = a/sqrt(4 pi D t) gives D = 1/(4 pi A^2) in a^2 J.
    """
    if not fit.fixed_z or fit.z != 2.0:
        raise ValueError("diffusion constant needs a fit with z fixed to 2")
    return 1.0 / (4.0 * math.pi * fit.prefactor ** 2)


def diffusion_constant_nm2_per_ms(fit: ExponentFit,
                                  lattice_constant_angstrom: float,
                                  J_krad_s: float) -> float:
    """Convert the diffusive amplitude to physical units.

    1 krad/s equals 1 rad/ms, so D[nm^2/ms] = D[a^2 J] * a_nm^2 * J_krad_s.
    """
    a_nm = lattice_constant_angstrom * 0.1
    return diffusion_constant(fit) * a_nm ** 2 * J_krad_s


def normalize_by_global(local: CorrelationCurve,
                        global_curve: CorrelationCurve) -> CorrelationCurve:
    """Pointwise ratio local/global with error propagation."""
    if not np.array_equal(local.times, global_curve.times):
        raise ValueError("local and global curves live on different grids")
    if np.any(global_curve.values == 0.0):
        raise ZeroDivisionError("global curve touches zero")
    ratio = local.values / global_curve.values
    rel = np.zeros_like(ratio)
    nz = local.values != 0.0
    rel[nz] = (local.stderrs[nz] / local.values[nz]) ** 2
    rel += (global_curve.stderrs / global_curve.values) ** 2
    return CorrelationCurve(times=local.times.copy(), values=ratio,
                            stderrs=np.abs(ratio) * np.sqrt(rel),
                            label=local.label + "_over_global",
                            normalization="by_global",
                            n_samples=local.n_samples)


def fit_to_json(fit: ExponentFit, path=None, extra: dict | None = None) -> str:
    payload = fit.to_dict()
    if extra:
        payload.update(extra)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
