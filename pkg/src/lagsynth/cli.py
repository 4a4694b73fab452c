"""Command-line entry point: ``lagsynth synth|fit|nulltest|baseline|report|verify``.

Exit codes: 0 success, 1 computation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy
import statsmodels
from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, RunConfig, config_hash, load_config
from .cv import SCHEMES
from .io import FormatError, atomic_write, dump_json, read_dataset, write_dataset, write_tensor
from .pipeline import compare_cohort, prepare, run_baselines, run_nulltest, run_scheme
from .surrogates import StationarityError
from .synth import SCENARIOS, generate, scenario

logger = logging.getLogger("lagsynth")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
REPORT_FILES = {"fit": "fit_report.json", "nulltest": "nulltest_report.json", "baseline": "baseline_report.json"}


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")


_USAGE_ERRORS = (ConfigError, FileNotFoundError, FileExistsError, FormatError, UsageError, json.JSONDecodeError)


@contextmanager
def stage(name):
    """Tag failures with the pipeline stage; input problems stay usage errors."""
    try:
        yield
    except _USAGE_ERRORS:
        raise
    except Exception as exc:  # noqa: BLE001 - reported with its stage
        raise StageError(name, exc) from exc


def _threads() -> int | None:
    raw = os.environ.get("LAGSYNTH_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"LAGSYNTH_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"LAGSYNTH_THREADS must be >= 1, got {n}")
    return n


def _provenance(cfg: RunConfig) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "surrogate_base_seed": cfg.surrogates.base_seed,
        "versions": {
            "lagsynth": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "statsmodels": statsmodels.__version__,
        },
    }


def _floats(x):
    return [float(v) for v in np.asarray(x, dtype=float)]


def _load_cfg(args) -> RunConfig:
    if not args.config:
        raise UsageError(f"{args.command} needs --config PATH")
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, scheme=args.scheme, surrogates=getattr(args, "surrogates", None))


def _out_dir(cfg: RunConfig, args) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output:
        return cfg.resolve(cfg.output)
    raise UsageError("no output directory: pass --out or set 'output' in the config")


def _guard(path: Path, force: bool):
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")


def _load_prepared(cfg: RunConfig, path):
    with stage("load"):
        ds = read_dataset(cfg.resolve(path))
    n_lags = cfg.n_lags or ds.n_lags
    if not n_lags:
        raise ConfigError("n_lags is not set in the config and the dataset manifest does not provide it")
    with stage("prepare"):
        prep = prepare(ds.features, ds.targets, n_lags, cfg.standardize)
    return ds, prep


# --------------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    if not args.scenario:
        raise UsageError(f"synth needs a scenario name ({', '.join(SCENARIOS)})")
    if not args.out:
        raise UsageError("synth needs --out DIR")
    try:
        spec = scenario(args.scenario, args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    _guard(out / "manifest.json", args.force)
    with stage("generate"):
        ds = generate(spec)
    with stage("write"):
        extra = {"scenario": args.scenario, "spec": spec.to_dict(), "active_groups": spec.active_groups}
        write_dataset(out, ds.features, ds.targets, ds.paradigms, tr=spec.tr, n_lags=spec.n_lags, extra=extra, force=True)
    print(f"wrote {args.scenario} (seed {spec.seed}) to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- fit


def _fit_report(cfg, ds, prep, result) -> dict:
    C, F, M = prep.design.n_channels, prep.design.n_freqs, prep.n_lags
    parts = []
    for j, p in enumerate(result.parcellations):
        coef = p.model.coeff_tensor(C, F, M)
        gnorm = np.sqrt((coef**2).sum(axis=(1, 2)))
        parts.append(
            {
                "index": j + 1,
                "r": p.score.r,
                "mse": p.score.mse,
                "degenerate": p.score.degenerate,
                "n_test": p.score.n,
                "lambda": p.model.hyper.lam,
                "alpha": p.model.hyper.alpha,
                "intercept": p.model.intercept,
                "n_nonzero": int(np.count_nonzero(p.model.coeffs)),
                "active_channels": [ds.features[0].channel_labels[c] for c in np.nonzero(gnorm)[0]],
                "group_norms": _floats(gnorm),
                "solver": {
                    "iterations": p.model.diag.iterations,
                    "converged": p.model.diag.converged,
                    "kkt": p.model.diag.kkt,
                    "objective": p.model.diag.objective,
                },
                "search": p.trace.to_dict() if p.trace is not None else None,
                "prediction": _floats(p.prediction),
                "truth": _floats(p.truth),
            }
        )
    return {
        "kind": "fit",
        "config": cfg.to_dict(),
        "provenance": _provenance(cfg),
        "dataset": {
            "tr": ds.tr,
            "n_lags": prep.n_lags,
            "rows_per_session": [prep.n1, prep.n2],
            "channels": list(ds.features[0].channel_labels),
            "freqs": [float(f) for f in ds.features[0].freqs],
        },
        "scheme": result.scheme,
        "parcellations": parts,
        "mean_r": result.mean_r,
        "mean_mse": result.mean_mse,
    }


def cmd_fit(args) -> int:
    cfg = _load_cfg(args)
    if not cfg.dataset:
        raise ConfigError("config.dataset is required for fit")
    out = _out_dir(cfg, args)
    _guard(out / REPORT_FILES["fit"], args.force)
    ds, prep = _load_prepared(cfg, cfg.dataset)
    with stage("fit"):
        result = run_scheme(prep, cfg.scheme, cfg.nested_settings())
    with stage("report"):
        report = _fit_report(cfg, ds, prep, result)
        C, F, M = prep.design.n_channels, prep.design.n_freqs, prep.n_lags
        for j, p in enumerate(result.parcellations, start=1):
            write_tensor(out / f"model_p{j}.lgst", p.model.coeff_tensor(C, F, M))
        _emit(report, out, cfg.plots)
    print(render_summary(report), end="")
    return EXIT_OK


# --------------------------------------------------------------------------- nulltest


def cmd_nulltest(args) -> int:
    cfg = _load_cfg(args)
    if not cfg.dataset:
        raise ConfigError("config.dataset is required for nulltest")
    out = _out_dir(cfg, args)
    _guard(out / REPORT_FILES["nulltest"], args.force)
    ds, prep = _load_prepared(cfg, cfg.dataset)
    s = cfg.surrogates
    with stage("nulltest"):
        combined, parts = run_nulltest(
            prep,
            cfg.scheme,
            cfg.nested_settings(),
            n_surrogates=s.n,
            base_seed=s.base_seed,
            adf_threshold=s.adf_threshold,
            adf_max_lag=s.adf_max_lag,
            iaaft_opts=cfg.iaaft_opts(),
            n_workers=_threads() or 1,
        )
    report = {
        "kind": "nulltest",
        "config": cfg.to_dict(),
        "provenance": _provenance(cfg),
        "scheme": cfg.scheme,
        "combined": combined.to_dict(),
        "parcellations": [p.to_dict() for p in parts],
    }
    with stage("report"):
        _emit(report, out, cfg.plots)
    print(render_summary(report), end="")
    return EXIT_OK


# --------------------------------------------------------------------------- baseline


def cmd_baseline(args) -> int:
    cfg = _load_cfg(args)
    paths = cfg.datasets or ([cfg.dataset] if cfg.dataset else [])
    if not paths:
        raise ConfigError("config.datasets (or dataset) is required for baseline")
    out = _out_dir(cfg, args)
    _guard(out / REPORT_FILES["baseline"], args.force)
    rows = []
    for path in paths:
        ds, prep = _load_prepared(cfg, path)
        with stage("fit"):
            res = run_scheme(prep, cfg.scheme, cfg.nested_settings())
        with stage("baseline"):
            base = run_baselines(prep, cfg.scheme, ds.tr)
        rows.append({"dataset": path, "sgl_r": res.mean_r, **base})
    sgl = [r["sgl_r"] for r in rows]
    others = {"muc": [r["muc_mean_r"] for r in rows], "smr_abs": [r["smr_mean_abs_r"] for r in rows]}
    with stage("statistics"):
        if len(rows) < 5:
            raise StageError(
                "statistics",
                ValueError(f"Wilcoxon signed-rank needs at least 5 paired datasets, got {len(rows)}"),
            )
        tests = compare_cohort(sgl, others, cfg.baseline.q)
        tests["smr_signed"] = compare_cohort(sgl, {"smr_signed": [r["smr_mean_r"] for r in rows]}, cfg.baseline.q)[
            "smr_signed"
        ]
    report = {
        "kind": "baseline",
        "config": cfg.to_dict(),
        "provenance": _provenance(cfg),
        "scheme": cfg.scheme,
        "datasets": rows,
        "tests": tests,
        "bh_family": ["muc", "smr_abs"],
    }
    with stage("report"):
        _emit(report, out, cfg.plots)
    print(render_summary(report), end="")
    return EXIT_OK


# --------------------------------------------------------------------------- report / verify


def render_summary(report: dict) -> str:
    kind = report.get("kind")
    lines = [f"lagsynth {kind} report", f"config hash: {report['provenance']['config_hash']}"]
    if kind == "fit":
        lines.append(f"scheme: {report['scheme']}")
        for p in report["parcellations"]:
            flag = "  (degenerate prediction)" if p["degenerate"] else ""
            lines.append(
                f"parcellation {p['index']}: r = {p['r']:.4f}, mse = {p['mse']:.4f}, "
                f"lambda = {p['lambda']:.4g}, alpha = {p['alpha']:.3f}, "
                f"channels = {', '.join(p['active_channels']) or '-'}{flag}"
            )
        lines.append(f"mean test r = {report['mean_r']:.4f}, mean mse = {report['mean_mse']:.4f}")
    elif kind == "nulltest":
        c = report["combined"]
        lines.append(f"scheme: {report['scheme']}; surrogates: {c['n_surrogates']}")
        lines.append(f"observed r = {c['observed_stat']:.4f}")
        lines.append(f"p (k/n) = {c['p_value']:.4g}; p ((k+1)/(n+1)) = {c['p_conservative']:.4g}")
        if c["failed"]:
            lines.append(f"failed surrogates: {c['failed']}")
    elif kind == "baseline":
        lines.append(f"scheme: {report['scheme']}; datasets: {len(report['datasets'])}")
        for r in report["datasets"]:
            lines.append(
                f"  {r['dataset']}: SGL {r['sgl_r']:.3f}  MUC {r['muc_mean_r']:.3f}  "
                f"SMR {r['smr_mean_r']:.3f} (|r| {r['smr_mean_abs_r']:.3f})"
            )
        for name, t in report["tests"].items():
            lines.append(
                f"SGL vs {name}: W = {t['statistic']:g}, p = {t['p_value']:.4g}, "
                f"p_BH = {t['p_bh']:.4g}, median diff = {t['median_difference']:.3f}"
            )
    return "\n".join(lines) + "\n"


def _plots(report: dict, out: Path):
    from . import plots

    kind = report["kind"]
    if kind == "fit":
        tr = report["dataset"]["tr"]
        for p in report["parcellations"]:
            plots.plot_prediction(
                p["truth"],
                p["prediction"],
                out / f"prediction_p{p['index']}.svg",
                f"{report['scheme']} parcellation {p['index']}: r = {p['r']:.3f}",
                tr,
            )
    elif kind == "nulltest":
        c = report["combined"]
        plots.plot_violin(
            {"surrogates": c["surrogate_stats"]},
            out / "null_violin.svg",
            f"IAAFT null (p = {c['p_value']:.3g})",
            observed={"surrogates": c["observed_stat"]},
        )
    elif kind == "baseline":
        rows = report["datasets"]
        plots.plot_violin(
            {
                "SGL": [r["sgl_r"] for r in rows],
                "MUC": [r["muc_mean_r"] for r in rows],
                "SMR": [r["smr_mean_r"] for r in rows],
            },
            out / "baseline_violin.svg",
            f"{report['scheme']} test correlations",
        )


def _emit(report: dict, out: Path, plots: bool):
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / REPORT_FILES[report["kind"]], dump_json(report))
    atomic_write(out / f"{report['kind']}_summary.txt", render_summary(report))
    if plots:
        _plots(report, out)


def _read_report(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"report not found: {path}")
    report = json.loads(path.read_text())
    if report.get("kind") not in REPORT_FILES or "config" not in report or "provenance" not in report:
        raise FormatError(f"{path} is not a lagsynth report")
    return report


def cmd_report(args) -> int:
    if not args.target:
        raise UsageError("report needs a report file path")
    report = _read_report(args.target)
    out = Path(args.out) if args.out else Path(args.target).parent
    with stage("render"):
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / f"{report['kind']}_summary.txt", render_summary(report))
        _plots(report, out)
    print(render_summary(report), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    if not args.target:
        raise UsageError("verify needs a report file path")
    report = _read_report(args.target)
    stored = report["provenance"].get("config_hash")
    try:
        embedded = RunConfig.from_dict(report["config"]).to_dict()
    except ConfigError as exc:
        print(f"verify: embedded config is invalid: {exc}", file=sys.stderr)
        return EXIT_FAIL
    recomputed = config_hash(embedded)
    ok = stored == recomputed
    if args.config:
        supplied = config_hash(_load_cfg(args))
        if supplied != stored:
            print(f"verify: config {args.config} hashes to {supplied}, report has {stored}", file=sys.stderr)
            ok = False
    if stored != recomputed:
        print(f"verify: stored hash {stored} != recomputed {recomputed}", file=sys.stderr)
    if ok:
        print(f"ok: {args.target} config hash {stored}")
        return EXIT_OK
    return EXIT_FAIL


# --------------------------------------------------------------------------- main


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "nulltest": cmd_nulltest,
    "baseline": cmd_baseline,
    "report": cmd_report,
    "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="N", help="override the config seed (or synth scenario seed)")
    common.add_argument("--scheme", choices=SCHEMES, help="override the split scheme")
    common.add_argument("--surrogates", type=int, metavar="N", help="override the surrogate count")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="lagsynth", description="EEG-to-fMRI sparse-group-lasso prediction pipeline")
    parser.add_argument("--version", action="version", version=f"lagsynth {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("synth", parents=[common], help="write a synthetic scenario dataset")
    p.add_argument("scenario", nargs="?", help=f"one of {', '.join(SCENARIOS)}")
    sub.add_parser("fit", parents=[common], help="nested fit and held-out evaluation")
    sub.add_parser("nulltest", parents=[common], help="IAAFT surrogate null test")
    sub.add_parser("baseline", parents=[common], help="SGL vs SMR/MUC over a dataset cohort")
    for name, what in (("report", "re-render summary and plots"), ("verify", "check a report's config hash")):
        p = sub.add_parser(name, parents=[common], help=what)
        p.add_argument("target", nargs="?", help="report JSON file")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
        if args.surrogates is not None and args.command != "nulltest":
            raise UsageError("--surrogates only applies to nulltest")
        limit = _threads()
        with threadpool_limits(limits=limit) if limit else _null_ctx():
            return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except _USAGE_ERRORS as exc:
        print(f"lagsynth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StationarityError as exc:
        print(f"lagsynth: [nulltest] {exc}", file=sys.stderr)
        return EXIT_FAIL
    except StageError as exc:
        if isinstance(exc.exc, StationarityError):
            print(f"lagsynth: [{exc.stage}] {exc.exc}", file=sys.stderr)
        else:
            print(f"lagsynth: {exc}", file=sys.stderr)
        return EXIT_FAIL


@contextmanager
def _null_ctx():
    yield


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
