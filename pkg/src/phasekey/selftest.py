"""Built-in verification battery behind the `selftest` command.

Each check recomputes an expected result from first principles (closed-form
Gaussian information, a quadratic-time neighbor count, hand-computed table
values) and compares the production path against it, so a regression in any
numerical stage surfaces as a failing check rather than silently skewed
output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import digamma as _reference_digamma

from . import analysis, infotheory
from .preprocess import CascadeParams, detrend_poly, preprocess_cascade, savgol
from .synth import closed_form_gaussian_mi
from .ubx import SatelliteId


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _gaussian_pair(rho: float, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    return z[:, 0], rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]


def _check_estimator_gaussian(quick: bool) -> str:
    seeds = range(3) if quick else range(10)
    n = 3000 if quick else 6000
    for rho, tolerance in ((0.0, 0.02), (0.9, 0.05)):
        truth = closed_form_gaussian_mi(rho)
        estimates = []
        for seed in seeds:
            x, y = _gaussian_pair(rho, n, seed)
            estimates.append(infotheory.ksg_mi(x, y).value_bits)
        error = abs(float(np.mean(estimates)) - truth)
        if error > tolerance:
            raise AssertionError(
                f"rho={rho}: mean estimate off by {error:.4f} bits "
                f"(tolerance {tolerance})")
    return f"rho 0 and 0.9 within tolerance over {len(list(seeds))} seeds"


def _brute_mi_bits(x: np.ndarray, y: np.ndarray, k: int) -> float:
    """Quadratic-time rebuild of the estimator used as an internal reference."""
    zx = infotheory._prepare_marginal(np.asarray(x, dtype=float))
    zy = infotheory._prepare_marginal(np.asarray(y, dtype=float))
    n = len(zx)
    dx = np.abs(zx[:, None] - zx[None, :])
    dy = np.abs(zy[:, None] - zy[None, :])
    joint = np.maximum(dx, dy)
    np.fill_diagonal(joint, np.inf)
    eps = np.sort(joint, axis=1)[:, k - 1]
    off = ~np.eye(n, dtype=bool)
    nx = ((dx < eps[:, None]) & off).sum(axis=1)
    ny = ((dy < eps[:, None]) & off).sum(axis=1)
    value = (
        _reference_digamma(k) + _reference_digamma(n)
        - float(np.mean(_reference_digamma(nx + 1) + _reference_digamma(ny + 1)))
    ) / math.log(2.0)
    return float(value)


def _check_estimator_bruteforce(quick: bool) -> str:
    cases = 2 if quick else 5
    worst = 0.0
    rng = np.random.default_rng(20260815)
    for _ in range(cases):
        n = int(rng.integers(80, 160))
        x = rng.random(n)
        y = 0.5 * x + rng.random(n)
        fast = infotheory.ksg_mi(x, y).value_bits
        slow = _brute_mi_bits(x, y, infotheory.DEFAULT_K)
        worst = max(worst, abs(fast - slow))
    if worst > 1e-12:
        raise AssertionError(f"fast and quadratic paths differ by {worst:.2e} bits")
    return f"{cases} instances agree within 1e-12 bits"


def _check_skr_identity(quick: bool) -> str:
    cases = 100 if quick else 1000
    rng = np.random.default_rng(7)
    for _ in range(cases):
        i_ab, i_ae, i_be = rng.uniform(-2.0, 4.0, 3)
        got = infotheory.secret_key_rate(i_ab, i_ae, i_be)
        if got != i_ab - min(i_ae, i_be):
            raise AssertionError(f"identity broken for {(i_ab, i_ae, i_be)}")
    return f"{cases} random triples exact"


def _check_cascade(quick: bool) -> str:
    del quick
    n = 2000
    t = np.arange(n, dtype=float)
    line = 3.0 * t - 11.0
    smoothed = savgol(line)
    if np.max(np.abs(smoothed - line)) > 1e-9 * np.max(np.abs(line)):
        raise AssertionError("smoother does not reproduce an affine input")
    u = np.linspace(-1.0, 1.0, n)
    poly = ((0.4 * u - 1.0) * u + 2.0) * u ** 3 + 5.0 * u - 3.0
    residual = detrend_poly(poly)
    if np.max(np.abs(residual)) > 1e-6 * float(np.ptp(poly)):
        raise AssertionError("detrend does not annihilate a fit-degree polynomial")
    rng = np.random.default_rng(11)
    x = np.cumsum(rng.standard_normal(n)) + poly
    base = preprocess_cascade(x).values
    mapped = preprocess_cascade(2.5 * x + 40.0).values
    if np.max(np.abs(base - mapped)) > 1e-9:
        raise AssertionError("cascade is not invariant under a positive affine map")
    return "affine reproduction, annihilation and invariance hold"


def _check_secure_bit_mapping(quick: bool) -> str:
    del quick
    expected = {0.4: 8.0, 0.2: 4.0, 0.0: 0.0, -0.3: 0.0}
    for r_sk, bits in expected.items():
        got = infotheory.secure_bit_rate(r_sk, 20.0)
        if got != bits:
            raise AssertionError(f"{r_sk} bits/sample maps to {got}, expected {bits}")
    return "threshold boundaries map to 8/4/0 bits per second at 20 Hz"


def _fake_record(sat: str, slot: int, r_sk: float,
                 elevation: float | None = 45.0,
                 azimuth: float | None = 180.0) -> infotheory.SkrRecord:
    i_ab = infotheory.MiEstimate(r_sk + 0.5, 4, 100)
    i_ae = infotheory.MiEstimate(0.5, 4, 100)
    i_be = infotheory.MiEstimate(0.7, 4, 100)
    return infotheory.SkrRecord.from_estimates(
        SatelliteId.from_string(sat), slot * 300.0, elevation, azimuth,
        i_ab, i_ae, i_be)


def _check_filter_reproduction(quick: bool) -> str:
    del quick
    records = (
        [_fake_record(f"G{i:02d}", 0, 0.3) for i in (1, 2, 3)]
        + [_fake_record(f"G{i:02d}", 1, 0.3) for i in (1, 2, 3, 4)]
    )
    rows = analysis.criteria_table(records, [analysis.CriteriaFilter("all")])
    if rows[0].avg_count_above[0.0] != 3.5:
        raise AssertionError(
            f"slots of 3 and 4 qualifying satellites average "
            f"{rows[0].avg_count_above[0.0]}, expected 3.5")
    wrap = [_fake_record("G01", 0, 0.3, azimuth=350.0),
            _fake_record("G02", 0, 0.3, azimuth=10.0),
            _fake_record("G03", 0, 0.3, azimuth=100.0)]
    sector = analysis.CriteriaFilter("nw", azimuth_sectors=("NW-NE",))
    kept = analysis.filter_records(wrap, sector)
    if [str(r.sat) for r in kept] != ["G01", "G02"]:
        raise AssertionError("north-straddling sector selected the wrong records")
    return "criteria averages and sector wrap reproduce hand-computed values"


CHECKS: list[tuple[str, Callable[[bool], str]]] = [
    ("estimator_gaussian", _check_estimator_gaussian),
    ("estimator_bruteforce", _check_estimator_bruteforce),
    ("skr_identity", _check_skr_identity),
    ("cascade", _check_cascade),
    ("secure_bit_mapping", _check_secure_bit_mapping),
    ("filter_reproduction", _check_filter_reproduction),
]


def run_selftest(quick: bool = False) -> list[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            detail = check(quick)
            results.append(CheckResult(name, True, detail))
        except Exception as exc:
            results.append(CheckResult(name, False, str(exc)))
    return results
