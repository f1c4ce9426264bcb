"""Pre-processing cascade: polynomial detrend, smoothing, normalization.

The cascade strips the predictable slow trend from a geometry-free series,
smooths the remainder with a least-squares (Savitzky-Golay) filter, and
normalizes the result to zero mean and unit variance. Each stage is linear
(the last is affine), so the cascade output is invariant under positive
affine maps of its input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DegenerateSeriesError, ParameterError, UnderdeterminedFitError

DEFAULT_POLY_DEGREE = 5
DEFAULT_SG_WINDOW = 81
DEFAULT_SG_ORDER = 1

# A series whose smoothed residual is this far below the input's own spread
# carries no usable signal; normalizing it would amplify rounding noise.
_DEGENERACY_RATIO = 1e-9


@dataclass(frozen=True)
class CascadeParams:
    poly_degree: int = DEFAULT_POLY_DEGREE
    sg_window: int = DEFAULT_SG_WINDOW
    sg_order: int = DEFAULT_SG_ORDER


@dataclass(frozen=True)
class ProcessedSeries:
    """Normalized residual series, mean 0 and population std 1."""
    values: np.ndarray
    params: CascadeParams
    source: object | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def detrend_poly(x: np.ndarray, degree: int = DEFAULT_POLY_DEGREE) -> np.ndarray:
    """Residual after subtracting a least-squares polynomial fit.

    The fit abscissa is the sample index rescaled to [-1, 1], which keeps the
    normal equations well conditioned at degree 5 over thousands of points.
    """
    x = np.asarray(x, dtype=float)
    if degree < 0:
        raise ParameterError("degree must be non-negative")
    if len(x) <= degree:
        raise UnderdeterminedFitError(
            f"{len(x)} samples cannot constrain a degree-{degree} fit")
    fit = Polynomial.fit(np.arange(len(x)), x, degree)
    return x - fit(np.arange(len(x)))


def _sg_weights(positions: np.ndarray, order: int) -> np.ndarray:
    """Row vector evaluating a least-squares degree-`order` fit at position 0."""
    design = positions[:, None] ** np.arange(order + 1)
    return np.linalg.pinv(design)[0]


def savgol(x: np.ndarray, window: int = DEFAULT_SG_WINDOW,
           order: int = DEFAULT_SG_ORDER) -> np.ndarray:
    """Least-squares polynomial smoother.

    Interior samples take the center value of a degree-`order` fit over the
    centered window. Near the edges the window is truncated asymmetrically
    and the fit is evaluated at the sample's own position, which preserves
    exact reproduction of polynomials up to `order` everywhere.
    """
    x = np.asarray(x, dtype=float)
    if window % 2 == 0 or window <= order:
        raise ParameterError("window must be odd and greater than the order")
    if order < 0:
        raise ParameterError("order must be non-negative")
    if len(x) < window:
        raise ParameterError(f"series of {len(x)} samples is shorter than "
                             f"the {window}-sample window")
    half = window // 2
    center = _sg_weights(np.arange(-half, half + 1, dtype=float), order)
    out = np.empty_like(x)
    out[half:len(x) - half] = np.correlate(x, center, mode="valid")
    for i in range(half):
        w = _sg_weights(np.arange(-i, half + 1, dtype=float), order)
        out[i] = w @ x[:i + half + 1]
        w = _sg_weights(np.arange(-half, i + 1, dtype=float), order)
        out[len(x) - 1 - i] = w @ x[len(x) - 1 - i - half:]
    return out


def normalize(x: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance rescaling using the population deviation."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ParameterError("normalization needs at least two samples")
    sd = float(np.std(x))
    if sd == 0.0:
        raise DegenerateSeriesError("constant series cannot be normalized")
    return (x - np.mean(x)) / sd


def preprocess_cascade(x: np.ndarray,
                       params: CascadeParams = CascadeParams(),
                       source: object | None = None) -> ProcessedSeries:
    """Full cascade: detrend, smooth, normalize.

    Raises DegenerateSeriesError when the smoothed residual's spread collapses
    relative to the input's (for example, when the input is itself a
    polynomial of the detrend degree).
    """
    x = np.asarray(x, dtype=float)
    residual = detrend_poly(x, params.poly_degree)
    smooth = savgol(residual, params.sg_window, params.sg_order)
    input_sd = float(np.std(x))
    if input_sd == 0.0 or float(np.std(smooth)) <= _DEGENERACY_RATIO * input_sd:
        raise DegenerateSeriesError("series is constant after the cascade")
    return ProcessedSeries(normalize(smooth), params, source)


STAGE_CSV_HEADER = "index,raw,residual,smoothed,normalized"


def write_stage_csv(x: np.ndarray, params: CascadeParams, path: str | Path) -> None:
    """Dump every cascade stage side by side, one row per sample."""
    x = np.asarray(x, dtype=float)
    residual = detrend_poly(x, params.poly_degree)
    smooth = savgol(residual, params.sg_window, params.sg_order)
    final = preprocess_cascade(x, params).values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STAGE_CSV_HEADER.split(","))
        for i in range(len(x)):
            writer.writerow([i, repr(float(x[i])), repr(float(residual[i])),
                             repr(float(smooth[i])), repr(float(final[i]))])
