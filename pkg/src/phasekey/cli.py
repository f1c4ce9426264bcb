"""Command-line front end for batch runs.

Subcommands: ingest (UBX to observation CSVs), analyze (inputs to per-block
key-rate records), report (records to tables and sky plots), simulate
(synthetic fixtures) and selftest (built-in verification battery).

Exit codes: 0 success, 1 selftest or internal failure, 2 no usable data,
64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import analysis, plots, selftest
from .errors import (
    DegenerateSeriesError,
    EmptySessionError,
    NoUsableDataError,
    ParameterError,
    PhaseKeyError,
    ScenarioError,
)
from .infotheory import evaluate_block, read_skr_csv, write_skr_csv
from .observables import GF_CSV_HEADER, build_gf_series, read_gf_csv
from .preprocess import CascadeParams
from .segmentation import (
    BlockOmission,
    align_epochs,
    attach_geometry,
    block_sample_count,
    make_blocks,
    write_manifest_csv,
)
from .synth import parse_scenario, write_fixture
from .ubx import (
    Role,
    SatGeometry,
    ingest_file,
    write_geometry_csv,
    write_observations_csv,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NO_DATA = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with code 64."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunConfig:
    block_duration: float = 300.0
    sample_rate: float = 20.0
    poly_degree: int = 5
    sg_window: int = 81
    sg_order: int = 1
    k: int = 4
    alignment_tolerance: float = 0.010
    threads: int | None = None

    def __post_init__(self) -> None:
        for name in ("block_duration", "sample_rate", "poly_degree",
                     "sg_window", "k", "alignment_tolerance"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.sg_order < 0:
            raise ParameterError("sg_order must be non-negative")
        if self.sg_window % 2 == 0 or self.sg_window <= self.sg_order:
            raise ParameterError("sg_window must be odd and greater than sg_order")
        if self.threads is not None and self.threads < 1:
            raise ParameterError("threads must be at least 1")
        block_sample_count(self.block_duration, self.sample_rate)

    @property
    def cascade(self) -> CascadeParams:
        return CascadeParams(self.poly_degree, self.sg_window, self.sg_order)


def _read_key_values(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    settings: dict = {}
    if args.config:
        raw = _read_key_values(Path(args.config))
        known = {f.name: f for f in fields(RunConfig)}
        for key, text in raw.items():
            if key not in known:
                raise ParameterError(f"{args.config}: unknown setting {key!r}")
            caster = int if known[key].type in ("int", "int | None") else float
            settings[key] = caster(text)
    for name in ("block_duration", "sample_rate", "poly_degree", "sg_window",
                 "sg_order", "k", "alignment_tolerance", "threads"):
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    return RunConfig(**settings)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value settings file; flags win")
    parser.add_argument("--block-duration", dest="block_duration", type=float,
                        help="block length in seconds (default 300)")
    parser.add_argument("--sample-rate", dest="sample_rate", type=float,
                        help="nominal sample rate in Hz (default 20)")
    parser.add_argument("--poly-degree", dest="poly_degree", type=int,
                        help="detrend polynomial degree (default 5)")
    parser.add_argument("--sg-window", dest="sg_window", type=int,
                        help="smoother window length, odd (default 81)")
    parser.add_argument("--sg-order", dest="sg_order", type=int,
                        help="smoother polynomial order (default 1)")
    parser.add_argument("--k", type=int,
                        help="nearest-neighbor count for the estimator (default 4)")
    parser.add_argument("--alignment-tolerance", dest="alignment_tolerance",
                        type=float, help="epoch matching tolerance in seconds "
                        "(default 0.010)")
    parser.add_argument("--threads", type=int,
                        help="worker threads for block evaluation "
                        "(default: machine parallelism)")


def _looks_like_gf_csv(path: Path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(len(GF_CSV_HEADER) + 2)
    try:
        return head.decode("ascii").startswith(GF_CSV_HEADER.split(",")[0] + ",")
    except UnicodeDecodeError:
        return False


def _load_role(path: Path, role: Role,
               ) -> tuple[dict, list[SatGeometry]]:
    """One role's per-satellite series and geometry, from UBX or series CSV."""
    if _looks_like_gf_csv(path):
        series = {s.sat: s for s in read_gf_csv(path, role)}
        return series, []
    store, summary = ingest_file(path, role)
    print(f"{role.value}: {summary.describe()}", file=sys.stderr)
    series = {}
    for sat in sorted(store.satellites(), key=str):
        series[sat] = build_gf_series(store, sat)
    return series, store.geometry


def cmd_ingest(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = [(Role.ALICE, args.alice), (Role.BOB, args.bob), (Role.EVE, args.eve)]
    given = [(role, path) for role, path in pairs if path]
    if not given:
        raise ParameterError("at least one of --alice, --bob or --eve is required")
    for role, path in given:
        store, summary = ingest_file(path, role)
        write_observations_csv(store, out / f"{role.value}_observations.csv")
        write_geometry_csv(store, out / f"{role.value}_geometry.csv")
        print(f"{role.value}: {summary.describe()}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    interval = 1.0 / config.sample_rate

    roles = {}
    geometry: list[SatGeometry] = []
    for role, path in ((Role.ALICE, args.alice), (Role.BOB, args.bob),
                       (Role.EVE, args.eve)):
        series, geo = _load_role(Path(path), role)
        roles[role] = series
        if not geometry:
            geometry = geo

    common = sorted(
        set(roles[Role.ALICE]) & set(roles[Role.BOB]) & set(roles[Role.EVE]),
        key=str)
    blocks = []
    omissions: list[BlockOmission] = []
    for sat in common:
        grid = align_epochs(roles[Role.ALICE][sat], roles[Role.BOB][sat],
                            roles[Role.EVE][sat],
                            tolerance=config.alignment_tolerance,
                            nominal_interval=interval)
        sat_blocks, sat_omissions = make_blocks(
            grid, config.block_duration, config.sample_rate)
        sat_geometry = [g for g in geometry if g.sat == sat]
        blocks.extend(attach_geometry(b, sat_geometry) for b in sat_blocks)
        omissions.extend(sat_omissions)

    records = []
    degenerate: list[BlockOmission] = []

    def evaluate(block):
        try:
            return evaluate_block(block, config.cascade, config.k)
        except DegenerateSeriesError:
            return BlockOmission(block.sat, block.start_epoch, "degenerate")

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        for result in pool.map(evaluate, blocks):
            if isinstance(result, BlockOmission):
                degenerate.append(result)
            else:
                records.append(result)

    records.sort(key=lambda r: (str(r.sat), r.start_epoch))
    reasons: dict[str, int] = {}
    for om in omissions + degenerate:
        reasons[om.reason] = reasons.get(om.reason, 0) + 1
    print(f"satellites: {len(common)} common to all roles; "
          f"blocks: {len(records)} evaluated, "
          f"omitted: {reasons or 'none'}", file=sys.stderr)

    kept = [b for b in blocks
            if not any(d.sat == b.sat and d.start_epoch == b.start_epoch
                       for d in degenerate)]
    write_manifest_csv(kept, omissions + degenerate, out / "manifest.csv")
    if not records:
        print("no valid blocks to evaluate", file=sys.stderr)
        return EXIT_NO_DATA
    write_skr_csv(records, out / "skr.csv")
    print(out / "skr.csv")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records = read_skr_csv(args.skr)
    if not records:
        print("no records in input", file=sys.stderr)
        return EXIT_NO_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    filters = analysis.builtin_filters()
    if args.hour_range:
        try:
            start, _, end = args.hour_range.partition("-")
            hour_range = (float(start), float(end))
        except ValueError:
            raise ParameterError(
                f"hour range {args.hour_range!r} is not START-END") from None
        filters.append(analysis.CriteriaFilter(
            f"hours-{hour_range[0]:g}-{hour_range[1]:g}", hour_range=hour_range))

    criteria = analysis.criteria_table(records, filters)
    availability = analysis.availability_table(
        records, session_hours=args.session_hours, sample_rate=args.sample_rate)
    distribution = analysis.rsk_distribution(records, filters)
    analysis.write_criteria_csv(criteria, out / "criteria.csv")
    analysis.write_availability_csv(availability, out / "availability.csv")
    analysis.write_distribution_csv(distribution, out / "distribution.csv")

    sky_rows = analysis.skyplot_export(records)
    analysis.write_sky_csv(sky_rows, out / "skyplot.csv", "r_sk")
    plots.render_skyplot(sky_rows, out / "skyplot.svg", "r_sk (bits)",
                         "Secret-key rate by satellite position")
    mi_rows = analysis.mi_export(records)
    analysis.write_sky_csv(mi_rows, out / "mi_skyplot.csv", "i_ab")
    plots.render_skyplot(mi_rows, out / "mi_skyplot.svg", "I(A;B) (bits)",
                         "Mutual information by satellite position")
    skipped = len(records) - len(sky_rows)
    if skipped:
        print(f"{skipped} records lack geometry and were left off the sky plots",
              file=sys.stderr)

    summary = analysis.session_summary(records, filters,
                                       session_hours=args.session_hours,
                                       sample_rate=args.sample_rate)
    analysis.write_summary_json(summary, out / "summary.json")
    print(out / "summary.json")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = parse_scenario(args.scenario)
    paths = write_fixture(spec, args.out)
    for name in ("alice", "bob", "eve", "truth"):
        print(paths[name])
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest.run_selftest(quick=args.quick)
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        failed += not result.passed
        print(f"{status} {result.name}: {result.detail}")
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_FAILURE
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="phasekey", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_ingest = sub.add_parser("ingest", help="decode UBX captures to CSV")
    p_ingest.add_argument("--alice", help="UBX file for the first receiver")
    p_ingest.add_argument("--bob", help="UBX file for the second receiver")
    p_ingest.add_argument("--eve", help="UBX file for the third receiver")
    p_ingest.add_argument("--out", required=True, help="output directory")
    p_ingest.set_defaults(func=cmd_ingest)

    p_analyze = sub.add_parser(
        "analyze", help="per-block key-rate records from three receivers")
    p_analyze.add_argument("--alice", required=True,
                           help="UBX capture or series CSV")
    p_analyze.add_argument("--bob", required=True)
    p_analyze.add_argument("--eve", required=True)
    p_analyze.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    p_report = sub.add_parser("report", help="tables and sky plots from records")
    p_report.add_argument("--skr", required=True, help="records CSV from analyze")
    p_report.add_argument("--out", required=True, help="output directory")
    p_report.add_argument("--session-hours", dest="session_hours", type=float,
                          help="session length fixing the availability denominator")
    p_report.add_argument("--sample-rate", dest="sample_rate", type=float,
                          default=20.0, help="sample rate for the secure-bits "
                          "mapping (default 20)")
    p_report.add_argument("--hour-range", dest="hour_range",
                          help="extra hour-of-day filter, e.g. 6-18")
    p_report.set_defaults(func=cmd_report)

    p_sim = sub.add_parser("simulate", help="generate synthetic fixtures")
    p_sim.add_argument("--scenario", required=True, help="key=value scenario file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_self = sub.add_parser("selftest", help="run the verification battery")
    p_self.add_argument("--quick", action="store_true",
                        help="reduced seed counts, same coverage")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NoUsableDataError, EmptySessionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_DATA
    except (ScenarioError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PhaseKeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
