"""Synthetic three-receiver scenarios with known information content.

Ground truth is defined on a correlated Gaussian core: the closed-form
mutual information of a bivariate Gaussian pair depends only on its
correlation. The satellite-like generator then adds only ingredients the
processing cascade removes or tolerates, polynomial trends (annihilated by
the detrend stage) and smoothing (applied identically across roles, so
pairwise correlations are unchanged). That makes end-to-end pipeline output
checkable against closed-form values without any hardware recording.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ScenarioError
from .observables import GfSample, GfSeries, write_gf_csv
from .preprocess import DEFAULT_SG_ORDER, DEFAULT_SG_WINDOW, savgol
from .ubx import Role, SatelliteId

_ROLES = (Role.ALICE, Role.BOB, Role.EVE)

DEFAULT_N = 6000
DEFAULT_SAMPLE_RATE = 20.0


def closed_form_gaussian_mi(rho: float) -> float:
    """Mutual information of a bivariate Gaussian pair, in bits."""
    if not -1.0 < rho < 1.0:
        raise ParameterError(f"correlation {rho} outside (-1, 1)")
    return -0.5 * math.log2(1.0 - rho * rho)


@dataclass(frozen=True)
class ScenarioSpec:
    """Recipe for one synthetic satellite pass.

    `correlation` is the 3x3 role correlation matrix (order Alice, Bob, Eve),
    `trend` holds per-role polynomial coefficients (ascending degree, over an
    abscissa spanning [-1, 1]) and `noise_floor` per-role white-noise sigmas.
    """
    n: int = DEFAULT_N
    correlation: tuple[tuple[float, ...], ...] = (
        (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    trend: tuple[tuple[float, ...], ...] = ((), (), ())
    noise_floor: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0
    sat: SatelliteId = field(default_factory=lambda: SatelliteId.from_string("G01"))
    sample_rate: float = DEFAULT_SAMPLE_RATE
    start_epoch: float = 0.0

    def __post_init__(self) -> None:
        matrix = np.asarray(self.correlation, dtype=float)
        if matrix.shape != (3, 3):
            raise ScenarioError("correlation must be a 3x3 matrix")
        if not np.array_equal(matrix, matrix.T):
            raise ScenarioError("correlation matrix must be symmetric")
        if not np.all(np.diag(matrix) == 1.0):
            raise ScenarioError("correlation diagonal must be exactly 1")
        smallest = float(np.linalg.eigvalsh(matrix)[0])
        if smallest < -1e-10:
            raise ScenarioError(
                f"correlation matrix is not positive semi-definite "
                f"(smallest eigenvalue {smallest:.4f})")
        if len(self.trend) != 3 or len(self.noise_floor) != 3:
            raise ScenarioError("trend and noise_floor need one entry per role")
        if any(s < 0 for s in self.noise_floor):
            raise ScenarioError("noise_floor entries must be non-negative")
        if self.n < DEFAULT_SG_WINDOW:
            raise ScenarioError(
                f"n must be at least {DEFAULT_SG_WINDOW}, the smoothing "
                f"window of the satellite-like generator")
        if self.sample_rate <= 0:
            raise ScenarioError("sample_rate must be positive")
        object.__setattr__(self, "correlation",
                           tuple(tuple(float(v) for v in row) for row in matrix))
        object.__setattr__(self, "trend",
                           tuple(tuple(float(c) for c in row) for row in self.trend))
        object.__setattr__(self, "noise_floor",
                           tuple(float(s) for s in self.noise_floor))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.correlation, dtype=float)

    def pair_rho(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])


def _matrix_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root; tolerates the singular (rho = 1) boundary."""
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


def gen_gaussian_triple(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three correlated standard-normal series, deterministic in the seed."""
    rng = np.random.default_rng(spec.seed)
    core = rng.standard_normal((spec.n, 3)) @ _matrix_sqrt(spec.matrix)
    return core[:, 0], core[:, 1], core[:, 2]


def gen_satellite_like(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw-style series: smoothed correlated core plus trend plus noise.

    The smoother imposes the temporal correlation of a slowly varying channel
    while leaving cross-role correlations untouched; the white noise floor is
    drawn after the core from the same seeded stream, so the whole recipe is
    reproducible bit for bit.
    """
    rng = np.random.default_rng(spec.seed)
    core = rng.standard_normal((spec.n, 3)) @ _matrix_sqrt(spec.matrix)
    t = np.linspace(-1.0, 1.0, spec.n)
    out = []
    for idx in range(3):
        series = savgol(core[:, idx], DEFAULT_SG_WINDOW, DEFAULT_SG_ORDER)
        coeffs = spec.trend[idx]
        if coeffs:
            series = series + np.polynomial.polynomial.polyval(t, list(coeffs))
        sigma = spec.noise_floor[idx]
        noise = rng.standard_normal(spec.n)
        if sigma:
            series = series + sigma * noise
        out.append(series)
    return out[0], out[1], out[2]


def scenario_series(spec: ScenarioSpec) -> list[GfSeries]:
    """Satellite-like output wrapped as per-role geometry-free series."""
    vectors = gen_satellite_like(spec)
    interval = 1.0 / spec.sample_rate
    series = []
    for role, values in zip(_ROLES, vectors):
        samples = tuple(
            GfSample(spec.start_epoch + i * interval, float(v), True)
            for i, v in enumerate(values))
        series.append(GfSeries(spec.sat, role, samples))
    return series


def ground_truth(spec: ScenarioSpec) -> dict:
    """Scenario description plus closed-form pairwise information, in bits."""
    return {
        "n": spec.n,
        "seed": spec.seed,
        "sat": str(spec.sat),
        "sample_rate": spec.sample_rate,
        "start_epoch": spec.start_epoch,
        "correlation": [list(row) for row in spec.correlation],
        "trend": [list(c) for c in spec.trend],
        "noise_floor": list(spec.noise_floor),
        "mi_bits": {
            "ab": closed_form_gaussian_mi(spec.pair_rho(0, 1)),
            "ae": closed_form_gaussian_mi(spec.pair_rho(0, 2)),
            "be": closed_form_gaussian_mi(spec.pair_rho(1, 2)),
        },
    }


_SCENARIO_KEYS = {
    "n", "seed", "sat", "sample_rate", "start_epoch",
    "rho_ab", "rho_ae", "rho_be",
    "trend_a", "trend_b", "trend_e",
    "noise_a", "noise_b", "noise_e",
}


def parse_scenario(path: str | Path) -> ScenarioSpec:
    """Read a scenario from a plain key=value file.

    Unknown keys are rejected so a typo cannot silently fall back to a
    default. Trend values are comma-separated polynomial coefficients in
    ascending degree; lines starting with '#' are comments.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = val.strip()

    def coeffs(key: str) -> tuple[float, ...]:
        text = values.get(key, "")
        if not text:
            return ()
        return tuple(float(part) for part in text.split(","))

    rho_ab = float(values.get("rho_ab", "0"))
    rho_ae = float(values.get("rho_ae", "0"))
    rho_be = float(values.get("rho_be", "0"))
    return ScenarioSpec(
        n=int(values.get("n", str(DEFAULT_N))),
        correlation=(
            (1.0, rho_ab, rho_ae),
            (rho_ab, 1.0, rho_be),
            (rho_ae, rho_be, 1.0),
        ),
        trend=(coeffs("trend_a"), coeffs("trend_b"), coeffs("trend_e")),
        noise_floor=(
            float(values.get("noise_a", "0")),
            float(values.get("noise_b", "0")),
            float(values.get("noise_e", "0")),
        ),
        seed=int(values.get("seed", "0")),
        sat=SatelliteId.from_string(values.get("sat", "G01")),
        sample_rate=float(values.get("sample_rate", str(DEFAULT_SAMPLE_RATE))),
        start_epoch=float(values.get("start_epoch", "0")),
    )


def write_fixture(spec: ScenarioSpec, out_dir: str | Path) -> dict[str, Path]:
    """Write per-role series CSVs and the ground-truth JSON into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for series in scenario_series(spec):
        path = out / f"{series.role.value}.csv"
        write_gf_csv([series], path)
        paths[series.role.value] = path
    truth_path = out / "truth.json"
    truth_path.write_text(json.dumps(ground_truth(spec), indent=2) + "\n")
    paths["truth"] = truth_path
    return paths
