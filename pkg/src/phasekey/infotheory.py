"""Mutual-information estimation and secret-key rates.

Mutual information between two continuous series is estimated with the
Kraskov-Stoegbauer-Grassberger k-nearest-neighbor method (their first
estimator): for every point the distance eps_i to its k-th neighbor in the
joint space is found under the max-norm, the marginal neighbors strictly
within eps_i are counted, and digamma corrections turn the counts into an
information estimate. Estimates are reported in bits and may be slightly
negative, which is ordinary estimator noise near independence.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .errors import DegenerateSeriesError, ParameterError
from .preprocess import CascadeParams, preprocess_cascade
from .segmentation import AlignedBlock
from .ubx import SatelliteId

DEFAULT_K = 4

# Module attribute rather than a direct import reference so the CLI selftest
# can inject a fault here and prove the battery catches a broken estimator.
_digamma = digamma

_JITTER_RATIO = 1e-10


@dataclass(frozen=True)
class MiEstimate:
    value_bits: float
    k: int
    n: int

    def __post_init__(self) -> None:
        if not self.n > self.k >= 1:
            raise ValueError(f"need n > k >= 1, got n={self.n}, k={self.k}")


def _prepare_marginal(v: np.ndarray) -> np.ndarray:
    """Standardize one marginal and break exact ties deterministically.

    Standardization makes the joint max-norm geometry invariant under affine
    maps of either input. When duplicate values remain (quantized input), a
    perturbation bounded by 1e-10 of the data range is added, seeded from a
    hash of the data itself so repeated runs agree bit for bit.
    """
    sd = float(np.std(v))
    if sd == 0.0:
        raise DegenerateSeriesError("constant input has no information content")
    z = (v - np.mean(v)) / sd
    if len(np.unique(z)) < len(z):
        seed = int.from_bytes(
            hashlib.blake2b(z.tobytes(), digest_size=8).digest(), "little")
        rng = np.random.default_rng(seed)
        scale = _JITTER_RATIO * float(np.ptp(z))
        z = z + rng.uniform(-scale, scale, len(z))
    return z


def _strict_counts(v: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """For each i, the number of j != i with |v[j] - v[i]| < eps[i].

    Candidate ranges come from searchsorted over bounds widened by a few
    ulps, then every candidate is re-checked with the exact strict
    comparison, so the result matches a brute-force scan bit for bit.
    """
    n = len(v)
    order = np.argsort(v, kind="stable")
    vs = v[order]
    lo = v - eps
    hi = v + eps
    for _ in range(3):
        lo = np.nextafter(lo, -np.inf)
        hi = np.nextafter(hi, np.inf)
    left = np.searchsorted(vs, lo, side="left")
    right = np.searchsorted(vs, hi, side="right")
    counts = np.empty(n, dtype=np.int64)
    width = int(np.max(right - left)) if n else 0
    span = np.arange(width)
    for s in range(0, n, 256):
        e = min(s + 256, n)
        idx = left[s:e, None] + span
        mask = idx < right[s:e, None]
        vals = vs[np.minimum(idx, n - 1)]
        inside = (np.abs(vals - v[s:e, None]) < eps[s:e, None]) & mask
        # the point itself always qualifies (distance 0), hence the -1
        counts[s:e] = inside.sum(axis=1) - 1
    return counts


def ksg_mi(x: np.ndarray, y: np.ndarray, k: int = DEFAULT_K) -> MiEstimate:
    """Mutual information between two scalar series, in bits."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ParameterError("inputs must be 1-d arrays of equal length")
    n = len(x)
    if k < 1:
        raise ParameterError("k must be at least 1")
    if n <= k:
        raise ParameterError(f"need more than k={k} samples, got {n}")
    zx = _prepare_marginal(x)
    zy = _prepare_marginal(y)
    points = np.column_stack([zx, zy])
    tree = cKDTree(points)
    eps = tree.query(points, k=k + 1, p=np.inf)[0][:, k]
    nx = _strict_counts(zx, eps)
    ny = _strict_counts(zy, eps)
    value = (
        _digamma(k) + _digamma(n)
        - float(np.mean(_digamma(nx + 1) + _digamma(ny + 1)))
    ) / math.log(2.0)
    return MiEstimate(float(value), k, n)


def secret_key_rate(i_ab: float, i_ae: float, i_be: float) -> float:
    """Key rate available to the legitimate pair against the eavesdropper.

    Exact arithmetic: i_ab - min(i_ae, i_be). Negative results are
    meaningful and preserved.
    """
    return i_ab - min(i_ae, i_be)


def secure_bit_rate(r_sk: float, sample_rate: float) -> float:
    """Secure bits per second: negative rates clamp to zero."""
    if sample_rate <= 0:
        raise ParameterError("sample rate must be positive")
    return max(r_sk, 0.0) * sample_rate


@dataclass(frozen=True)
class SkrRecord:
    sat: SatelliteId
    start_epoch: float
    mean_elevation: float | None
    mean_azimuth: float | None
    i_ab: MiEstimate
    i_ae: MiEstimate
    i_be: MiEstimate
    r_sk: float

    def __post_init__(self) -> None:
        expected = secret_key_rate(self.i_ab.value_bits, self.i_ae.value_bits,
                                   self.i_be.value_bits)
        if self.r_sk != expected:
            raise ValueError(f"r_sk {self.r_sk!r} does not equal {expected!r}")

    @classmethod
    def from_estimates(cls, sat: SatelliteId, start_epoch: float,
                       mean_elevation: float | None, mean_azimuth: float | None,
                       i_ab: MiEstimate, i_ae: MiEstimate, i_be: MiEstimate,
                       ) -> "SkrRecord":
        r_sk = secret_key_rate(i_ab.value_bits, i_ae.value_bits, i_be.value_bits)
        return cls(sat, start_epoch, mean_elevation, mean_azimuth,
                   i_ab, i_ae, i_be, r_sk)


def evaluate_block(block: AlignedBlock,
                   cascade: CascadeParams = CascadeParams(),
                   k: int = DEFAULT_K) -> SkrRecord:
    """Run the cascade on all three roles of a block and score the pairs.

    Raises DegenerateSeriesError when any role's series collapses in the
    cascade; callers treat that as an unevaluable block.
    """
    a = preprocess_cascade(block.series_a, cascade).values
    b = preprocess_cascade(block.series_b, cascade).values
    e = preprocess_cascade(block.series_e, cascade).values
    return SkrRecord.from_estimates(
        block.sat, block.start_epoch, block.mean_elevation, block.mean_azimuth,
        ksg_mi(a, b, k), ksg_mi(a, e, k), ksg_mi(b, e, k))


SKR_CSV_HEADER = "sat,start_epoch,elev_deg,azim_deg,i_ab,i_ae,i_be,r_sk,k,n"


def write_skr_csv(records: list[SkrRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SKR_CSV_HEADER.split(","))
        for r in records:
            writer.writerow([
                str(r.sat), repr(r.start_epoch),
                "" if r.mean_elevation is None else repr(r.mean_elevation),
                "" if r.mean_azimuth is None else repr(r.mean_azimuth),
                repr(r.i_ab.value_bits), repr(r.i_ae.value_bits),
                repr(r.i_be.value_bits), repr(r.r_sk),
                r.i_ab.k, r.i_ab.n,
            ])


def read_skr_csv(path: str | Path) -> list[SkrRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SKR_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            k, n = int(row["k"]), int(row["n"])
            records.append(SkrRecord(
                sat=SatelliteId.from_string(row["sat"]),
                start_epoch=float(row["start_epoch"]),
                mean_elevation=float(row["elev_deg"]) if row["elev_deg"] else None,
                mean_azimuth=float(row["azim_deg"]) if row["azim_deg"] else None,
                i_ab=MiEstimate(float(row["i_ab"]), k, n),
                i_ae=MiEstimate(float(row["i_ae"]), k, n),
                i_be=MiEstimate(float(row["i_be"]), k, n),
                r_sk=float(row["r_sk"]),
            ))
    return records
