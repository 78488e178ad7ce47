"""Command-line interface: ``segiwv segment | simulate | validate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path


from .core import DataError, month_index, read_series_csv
from .fourier import RankDeficientError
from .inference import INITS, VARIANTS, InferenceOptions, infer_all_k
from .robust import DegenerateScaleError
from .selection import CRITERIA, normalize_criterion, select_from_inference
from .simulation import SIGMA2_GRID, SimConfig, run_study, write_study
from .validation import (
    DEFAULT_WINDOW, SUMMARY_COLUMNS, MetadataLog, classify_outliers, read_metadata_csv, summarize, validate,
)

log = logging.getLogger("segiwv")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
FIT_COLUMNS = ("date", "y", "mu", "f", "residual")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _criteria(text: str) -> list[str]:
    try:
        out = [normalize_criterion(c) for c in text.split(",") if c.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not out:
        raise argparse.ArgumentTypeError("no criterion given")
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="segiwv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    def inference_flags(sp):
        sp.add_argument("--variant", choices=VARIANTS, default="a")
        sp.add_argument("--kmax", type=int, default=30)
        sp.add_argument("--criteria", type=_criteria, default=list(CRITERIA), help="comma list of mBIC,Lav,BM1,BM2")
        sp.add_argument("--order", type=int, default=4, help="Fourier order")
        sp.add_argument("--alpha", type=float, default=0.001, help="significance level for variant b")
        sp.add_argument("--tol", type=float, default=1e-6, help="relative stopping tolerance")
        sp.add_argument("--max-iters", type=int, default=100)
        sp.add_argument("--init", choices=INITS, default="default")
        sp.add_argument("--update-variance", action="store_true")
        sp.add_argument("--accelerate", action="store_true", help="SQUAREM extrapolation of the Fourier coefficients")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", required=True, help="output directory")

    seg = sub.add_parser("segment", help="segment one or more daily series")
    seg.add_argument("--input", nargs="+", required=True, help="CSV with date,value or date,gnss,erai")
    seg.add_argument("--station", default=None, help="station name (single input only)")
    seg.add_argument("--period", type=float, default=365.25)
    seg.add_argument("--gap-days", type=int, default=30, help="max spike length for outlier pairs")
    seg.add_argument("--amp-factor", type=float, default=2.0, help="outlier offset threshold in local std")
    seg.add_argument("--fit-criterion", default=None, help="criterion used for series_fit.csv (default BM1)")
    inference_flags(seg)

    sim = sub.add_parser("simulate", help="run the simulation study")
    sim.add_argument("--replicates", type=int, default=100)
    sim.add_argument("--sigma1", type=_floats, default=[0.5])
    sim.add_argument("--sigma2", type=_floats, default=list(SIGMA2_GRID))
    sim.add_argument("--seed", type=int, default=0)
    inference_flags(sim)

    val = sub.add_parser("validate", help="check detections against station metadata")
    val.add_argument("--input", nargs="+", required=True, help="result.json files written by 'segment'")
    val.add_argument("--metadata", required=True, help="CSV station,date,type")
    val.add_argument("--criteria", type=_criteria, default=None)
    val.add_argument("--window-days", type=int, default=DEFAULT_WINDOW)
    val.add_argument("--out", required=True)
    return p


def options_from_args(args, **extra) -> InferenceOptions:
    try:
        return InferenceOptions(
            K_max=args.kmax, variant=args.variant, init=args.init, stop_tol=args.tol, max_iters=args.max_iters,
            accelerate=args.accelerate, fourier_order=args.order, selection_alpha=args.alpha,
            update_variance=args.update_variance, threads=args.threads, **extra,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _num(x):
    x = float(x)
    return None if not math.isfinite(x) else x


def segment_result(series, result, criteria, station: str, gap_days: int = 30, amp_factor: float = 2.0) -> dict:
    """JSON-ready summary of an inference run and its selected segmentations."""
    sel = select_from_inference(result, criteria)
    dates = series.dates
    local_sd = result.sigma.per_index(month_index(series))
    chosen = {}
    for crit, K in sel.as_dict().items():
        fit = result[K]
        seg = fit.segmentation
        flags = classify_outliers(seg, dates, local_sd, gap_days, amp_factor)
        cps = [
            {
                "index": int(t),
                # date of the last observation before the break
                "date": str(dates[t - 1]),
                "offset": float(seg.means[k + 1] - seg.means[k]),
                "outlier": bool(flags[k]),
            }
            for k, t in enumerate(seg.changepoints)
        ]
        chosen[crit] = {
            "K": int(K),
            "penalty_constant": _num(sel.choices[crit].penalty_constant),
            "changepoints": cps,
            "means": seg.means.tolist(),
            "fourier": {
                "order": fit.fourier.order, "period": fit.fourier.period,
                "a": fit.fourier.a.tolist(), "b": fit.fourier.b.tolist(),
                "active": fit.fourier.active.tolist(),
            },
            "converged": bool(fit.converged),
        }
    o = result.options
    return {
        "station": station,
        "n": int(series.n),
        "start": str(dates[0]),
        "end": str(dates[-1]),
        "dropped": int(series.dropped),
        "options": {
            "K_max": o.K_max, "variant": o.variant, "init": o.init, "stop_tol": o.stop_tol,
            "max_iters": o.max_iters, "accelerate": o.accelerate, "fourier_order": o.fourier_order,
            "period": o.period, "selection_alpha": o.selection_alpha, "update_variance": o.update_variance,
            "gap_days": gap_days, "amp_factor": amp_factor,
        },
        "sigma": {"source": result.sigma.source, "monthly": [_num(s) for s in result.sigma.sigma]},
        "ssr": result.ssr.tolist(),
        "iterations": [r.iterations for r in result.fits],
        "converged": [bool(r.converged) for r in result.fits],
        "selected": {c: v["K"] for c, v in chosen.items()},
        "segmentations": chosen,
    }


def series_fit_rows(series, result, K: int):
    fit = result[K]
    mu = fit.segmentation.fitted()
    f = fit.fourier.evaluate(series.day_phase())
    y = series.values
    for d, yy, m, ff in zip(series.dates, y, mu, f):
        yield (str(d), repr(float(yy)), repr(float(m)), repr(float(ff)), repr(float(yy - m - ff)))


def write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_result(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def run_segment(args) -> int:
    opts = options_from_args(args, period=args.period)
    if args.station and len(args.input) > 1:
        raise UsageError("--station requires a single --input")
    fit_crit = normalize_criterion(args.fit_criterion) if args.fit_criterion else ("BM1" if "BM1" in args.criteria else args.criteria[0])
    if fit_crit not in args.criteria:
        raise UsageError(f"--fit-criterion {fit_crit} not among --criteria")
    out = Path(args.out)
    for path in args.input:
        station = args.station or Path(path).stem
        series = read_series_csv(path)
        if opts.K_max > series.n:
            raise DataError(f"{path}: {series.n} observations cannot hold K_max={opts.K_max} segments")
        t0 = time.perf_counter()
        result = infer_all_k(series, opts)
        elapsed = time.perf_counter() - t0
        log.info("%s: n=%d K_max=%d finished in %.1fs", station, series.n, opts.K_max, elapsed)
        summary = segment_result(series, result, args.criteria, station, args.gap_days, args.amp_factor)
        target = out if len(args.input) == 1 else out / station
        target.mkdir(parents=True, exist_ok=True)
        write_json(summary, target / "result.json")
        with open(target / "series_fit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FIT_COLUMNS)
            w.writerows(series_fit_rows(series, result, summary["selected"][fit_crit]))
    return EXIT_OK


def run_simulate(args) -> int:
    opts = options_from_args(args)
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    for s in args.sigma1 + args.sigma2:
        if not s > 0:
            raise UsageError("standard deviations must be > 0")
    config = SimConfig(sigma1=args.sigma1[0], sigma2=args.sigma2[0], replicates=args.replicates, seed=args.seed)
    report = run_study(config, args.criteria, opts, args.sigma1, args.sigma2, threads=args.threads)
    write_study(report, args.out)
    return EXIT_OK


def validation_tables(results: list[dict], metadata: dict[str, MetadataLog], criteria=None, window_days: int = DEFAULT_WINDOW):
    """Per-detection, per-station and aggregate rows for a batch of results."""
    missing = sorted(r["station"] for r in results if r["station"] not in metadata)
    if metadata and len(missing) == len(results):
        raise DataError(f"no station matches the metadata: {', '.join(missing)}")
    for name in missing:
        # absent from a non-empty file means no documented change
        log.warning("no metadata for station %s", name)
    crits = criteria or [c for c in CRITERIA if any(c in r["segmentations"] for r in results)]
    details, stations, summary = [], [], []
    for crit in crits:
        reports = {}
        for r in results:
            seg = r["segmentations"].get(crit)
            if seg is None:
                raise DataError(f"result for {r['station']} has no {crit} segmentation")
            log_ = metadata.get(r["station"], MetadataLog(station=r["station"]))
            dets = [(c["date"], c["offset"]) for c in seg["changepoints"]]
            rep = validate(dets, log_, window_days, [c["outlier"] for c in seg["changepoints"]])
            reports[r["station"]] = rep
            for c in rep.checks:
                details.append((crit, r["station"], str(c.date), c.offset, "" if c.nearest_date is None else str(c.nearest_date),
                                c.nearest_type, "" if c.distance is None else c.distance, int(c.validated), int(c.outlier)))
            stations.append((crit, r["station"], rep.detections, rep.outliers, rep.validations,
                             rep.percent_validated, rep.percent_validated_without_outliers))
        row = summarize(reports, crit)
        summary.append(tuple(row[k] for k in SUMMARY_COLUMNS))
    return details, stations, summary


DETAIL_COLUMNS = ("criterion", "station", "date", "offset", "event_date", "event_type", "distance_days", "validated", "outlier")
STATION_COLUMNS = ("criterion", "station", "detections", "outliers", "validations", "pct_validated", "pct_validated_without_outliers")


def run_validate(args) -> int:
    if args.window_days < 0:
        raise UsageError("--window-days must be >= 0")
    metadata = read_metadata_csv(args.metadata)
    results = []
    for path in args.input:
        try:
            results.append(load_result(path))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
    details, stations, summary = validation_tables(results, metadata, args.criteria, args.window_days)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, header, rows in (
        ("validation_details.csv", DETAIL_COLUMNS, details),
        ("validation_stations.csv", STATION_COLUMNS, stations),
        ("validation_summary.csv", SUMMARY_COLUMNS, summary),
    ):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    handler = {"segment": run_segment, "simulate": run_simulate, "validate": run_validate}[args.mode]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"segiwv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DegenerateScaleError, RankDeficientError, OSError) as exc:
        print(f"segiwv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"segiwv: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
