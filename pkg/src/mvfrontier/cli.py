"""Command-line front end.

Verbs
-----
``ingest``     validate an industry-portfolio CSV and optionally rewrite it
``calibrate``  emit the calibrated DGP spec as JSON
``run``        run the full study from a TOML config and write the report files
``compare``    dominance verdicts between two frontier CSVs

The output directory is taken from ``--out``, then the ``MVFRONTIER_OUT``
environment variable, then ``[output] dir`` in the config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import shutil
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, core
from .dgp import KINDS, calibrate as calibrate_spec
from .estimators import RULES
from .experiment import (
    FrontierCurve,
    StudyConfig,
    frontier_dominance,
    ras_dominance,
    run_study,
)
from .io import parse_industry_csv, select_window, write_industry_csv

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

OUT_ENV = "MVFRONTIER_OUT"
FLOAT_FMT = "%.12g"
FRONTIER_COLUMNS = ("rule", "allocation", "gamma", "mean", "variance", "utility",
                    "sd_mean", "sd_variance")

EXIT_OK = 0
EXIT_CAP = 3
EXIT_ERROR = 1

_CALIBRATION_KEYS = ("nu", "default_nu", "skew_scale", "ar_mean", "garch_alpha", "garch_beta")
_RULE_OPTION_KEYS = ("k", "tau", "sharpe_source", "delta", "classical_constant")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """Fixed 12-significant-digit text for a number."""
    return FLOAT_FMT % float(x)


def _json_num(x):
    return float(fmt(x))


def _clean(obj):
    """Recursively round floats to 12 significant digits for JSON output."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return _json_num(x) if np.isfinite(x) else None
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# configuration


def _split_list(text):
    if text is None:
        return None
    if isinstance(text, str):
        return [p.strip() for p in text.split(",") if p.strip()]
    return list(text)


def load_config(path) -> dict:
    """Read a TOML study config and resolve it to a flat dict with defaults."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.resolve().parent
    return resolve_config(raw, base)


def resolve_config(raw: dict, base: Path = Path(".")) -> dict:
    known = {"data", "study", "calibration", "rule_options", "output"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config sections {sorted(extra)}")
    data = dict(raw.get("data", {}))
    study = dict(raw.get("study", {}))
    if "path" not in data:
        raise ConfigError("config needs [data] path")
    data_path = Path(data["path"])
    if not data_path.is_absolute():
        data_path = base / data_path
    cal = dict(raw.get("calibration", {}))
    bad = set(cal) - set(_CALIBRATION_KEYS)
    if bad:
        raise ConfigError(f"unknown [calibration] keys {sorted(bad)}")
    opts = dict(raw.get("rule_options", {}))
    bad = set(opts) - set(_RULE_OPTION_KEYS)
    if bad:
        raise ConfigError(f"unknown [rule_options] keys {sorted(bad)}")
    out = raw.get("output", {}).get("dir")
    if out is not None and not Path(out).is_absolute():
        out = str(base / out)
    return {
        "data_path": str(data_path),
        "window": str(data.get("window", "120")),
        "missing": data.get("missing", "reject"),
        "dgp": _split_list(study.get("dgp", ["MVG"])),
        "rules": _split_list(study.get("rules", list(RULES))),
        "reps": int(study.get("reps", 10_000)),
        "window_t": int(study.get("window_t", 36)),
        "seed": int(study.get("seed", 0)),
        "threads": int(study.get("threads", 1)),
        "failure_cap": float(study.get("failure_cap", 0.01)),
        "allocations": [float(a) for a in study.get("allocations", core.DEFAULT_ALLOCATIONS)],
        "calibration": cal,
        "rule_options": opts,
        "out": out,
    }


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        cfg["reps"] = args.reps
    if getattr(args, "dgp", None):
        cfg["dgp"] = _split_list(args.dgp)
    if getattr(args, "rules", None):
        cfg["rules"] = _split_list(args.rules)
    if getattr(args, "window", None):
        cfg["window"] = args.window
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    if getattr(args, "out", None):
        cfg["out"] = args.out
    elif os.environ.get(OUT_ENV):
        cfg["out"] = os.environ[OUT_ENV]
    unknown = [d for d in cfg["dgp"] if d not in KINDS]
    if unknown or not cfg["dgp"]:
        raise ConfigError(f"unknown DGP kinds {unknown}; expected a subset of {list(KINDS)}")
    unknown = [r for r in cfg["rules"] if r not in RULES]
    if unknown or not cfg["rules"]:
        raise ConfigError(f"unknown rules {unknown}; expected a subset of {list(RULES)}")
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    return cfg


def config_digest(cfg: dict, data_sha256: str) -> str:
    """SHA-256 over everything that determines the results (not worker count or paths)."""
    keyed = {k: v for k, v in cfg.items() if k not in ("threads", "out", "data_path")}
    keyed["data_sha256"] = data_sha256
    text = json.dumps(_clean(keyed), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# report serialization


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def frontier_rows(report):
    truth = report.true_frontier
    zero = np.zeros_like(truth.means)
    rows = []
    curves = [(truth, {"sd_mean": zero, "sd_variance": zero})]
    curves += [(c, report.frontier_dispersion[r]) for r, c in report.average_frontiers.items()]
    for curve, disp in curves:
        for i in range(len(curve.gammas)):
            rows.append((curve.rule_tag, curve.allocations[i], curve.gammas[i], curve.means[i],
                         curve.variances[i], curve.utilities[i], disp["sd_mean"][i],
                         disp["sd_variance"][i]))
    return rows


def loss_table_rows(report):
    """Utility-loss table: one row per gamma, one loss column (percent) per rule."""
    rules = list(report.utility_loss_table["losses"])
    header = ["allocation", "gamma", "true_utility"] + rules
    truth = report.true_frontier
    rows = []
    for i, g in enumerate(report.utility_loss_table["gammas"]):
        rows.append([truth.allocations[i], g, truth.utilities[i]]
                    + [report.utility_loss_table["losses"][r][i] for r in rules])
    return header, rows


def plot_rows(report):
    """Long format: rule, series, x (variance), y (mean), allocation."""
    rows = []
    curves = [report.true_frontier] + list(report.average_frontiers.values())
    for curve in curves:
        for i in range(len(curve.gammas)):
            rows.append((curve.rule_tag, "frontier", curve.variances[i], curve.means[i],
                         curve.allocations[i]))
    for r, disp in report.frontier_dispersion.items():
        curve = report.average_frontiers[r]
        for i in range(len(curve.gammas)):
            rows.append((r, "sd_band_upper", curve.variances[i],
                         curve.means[i] + disp["sd_mean"][i], curve.allocations[i]))
            rows.append((r, "sd_band_lower", curve.variances[i],
                         curve.means[i] - disp["sd_mean"][i], curve.allocations[i]))
    return rows


def write_report(report, dgp: str, outdir: Path) -> list:
    """Write the four per-DGP files of ``report`` into ``outdir``; return their names."""
    names = [f"frontiers_{dgp}.csv", f"loss_table_{dgp}.csv", f"dominance_{dgp}.json",
             f"plot_{dgp}.csv"]
    _write_csv(outdir / names[0], FRONTIER_COLUMNS, frontier_rows(report))
    header, rows = loss_table_rows(report)
    _write_csv(outdir / names[1], header, rows)
    dom = {
        "dgp": dgp,
        "ras": report.dominance["ras"],
        "frontier": report.dominance["frontier"],
        "rmse": report.rmse,
        "failures": report.failures,
        "omitted_rules": report.omitted_rules,
        "spec": report.config.dgp.to_dict(),
    }
    (outdir / names[2]).write_text(_dumps(dom), encoding="utf-8")
    _write_csv(outdir / names[3], ("rule", "series", "variance", "mean", "allocation"),
               plot_rows(report))
    return names


def read_frontier_csv(path) -> dict:
    """Read a frontier CSV back into ``{rule: FrontierCurve}`` (plus dispersion)."""
    by_rule = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(FRONTIER_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            by_rule.setdefault(row["rule"], []).append(row)
    curves = {}
    for rule, rows in by_rule.items():
        col = {c: np.array([float(r[c]) for r in rows]) for c in FRONTIER_COLUMNS[1:]}
        curves[rule] = FrontierCurve(rule, col["allocation"], col["gamma"], col["mean"],
                                     col["variance"], col["utility"])
    return curves


# ---------------------------------------------------------------------------
# verbs


def _load_panel(path, window, missing="reject"):
    return select_window(parse_industry_csv(path, missing=missing), window)


def _calibration_kwargs(cal: dict) -> dict:
    return {k: v for k, v in cal.items() if k in _CALIBRATION_KEYS}


def cmd_ingest(args) -> int:
    panel = parse_industry_csv(args.path, missing=args.missing)
    if args.window:
        panel = select_window(panel, args.window)
    if args.out:
        write_industry_csv(panel, args.out)
    summary = {
        "path": str(args.path),
        "n_periods": panel.n_periods,
        "n_assets": len(panel.asset_names),
        "first": panel.dates[0],
        "last": panel.dates[-1],
        "asset_names": list(panel.asset_names),
    }
    sys.stdout.write(_dumps(summary))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.config:
        cfg = _apply_overrides(load_config(args.config), args)
    elif args.data:
        cfg = _apply_overrides(resolve_config({"data": {"path": args.data}}, Path.cwd()), args)
    else:
        raise ConfigError("calibrate needs --config or --data")
    panel = _load_panel(cfg["data_path"], cfg["window"], cfg["missing"])
    specs = {d: calibrate_spec(panel.values, d, **_calibration_kwargs(cfg["calibration"])).to_dict()
             for d in cfg["dgp"]}
    text = _dumps(specs if len(specs) > 1 else next(iter(specs.values())))
    if args.out:
        _atomic_write_files({Path(args.out): text})
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _atomic_write_files(files: dict):
    for target, text in files.items():
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise


def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run needs --config")
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg["out"]:
        raise ConfigError(f"no output directory: use --out, {OUT_ENV} or [output] dir")
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    data_sha = hashlib.sha256(Path(cfg["data_path"]).read_bytes()).hexdigest()
    panel = _load_panel(cfg["data_path"], cfg["window"], cfg["missing"])

    staging = Path(tempfile.mkdtemp(dir=outdir, prefix=".staging-"))
    moved = []
    try:
        written, failures, status = [], {}, {}
        for dgp in cfg["dgp"]:
            spec = calibrate_spec(panel.values, dgp, **_calibration_kwargs(cfg["calibration"]))
            config = StudyConfig(
                dgp=spec,
                rules=tuple(cfg["rules"]),
                reps=cfg["reps"],
                window_t=cfg["window_t"],
                allocations=tuple(cfg["allocations"]),
                master_seed=cfg["seed"],
                rule_options=dict(cfg["rule_options"]),
                workers=cfg["threads"],
                failure_cap=cfg["failure_cap"],
            )
            report = run_study(config)
            written += write_report(report, dgp, staging)
            failures[dgp] = dict(report.failures)
            status[dgp] = {"ok": report.ok, "cap_exceeded": report.cap_exceeded,
                           "omitted_rules": report.omitted_rules}
        manifest = {
            "config_digest": config_digest(cfg, data_sha),
            "config": {k: v for k, v in cfg.items() if k not in ("threads", "out", "data_path")},
            "data_file": Path(cfg["data_path"]).name,
            "data_sha256": data_sha,
            "window": {"first": panel.dates[0], "last": panel.dates[-1], "n_periods": panel.n_periods},
            "master_seed": cfg["seed"],
            "code_version": __version__,
            "numpy_version": np.__version__,
            "trial_failures": failures,
            "status": status,
            "files": sorted(written),
            # Everything under "runtime" varies between otherwise identical runs.
            "runtime": {
                "started": started,
                "finished": datetime.now(timezone.utc).isoformat(),
                "threads": cfg["threads"],
            },
        }
        (staging / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")
        for name in written + ["manifest.json"]:
            os.replace(staging / name, outdir / name)
            moved.append(outdir / name)
    except BaseException:
        for p in moved:
            p.unlink(missing_ok=True)
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    ok = all(s["ok"] for s in status.values())
    if not ok:
        _error_record("run", "FailureCapExceeded",
                      f"trial failures above the {cfg['failure_cap']:.2%} cap", status=status)
        return EXIT_CAP
    return EXIT_OK


def _pick(curves: dict, rule, path):
    if rule is not None:
        if rule not in curves:
            raise ValueError(f"{path}: no rule {rule!r} (found {sorted(curves)})")
        return curves[rule]
    rules = [r for r in curves if r != "true"]
    if len(rules) != 1:
        raise ValueError(f"{path}: holds rules {sorted(curves)}; choose one with --rule-a/--rule-b")
    return curves[rules[0]]


def cmd_compare(args) -> int:
    a = _pick(read_frontier_csv(args.a), args.rule_a, args.a)
    b = _pick(read_frontier_csv(args.b), args.rule_b, args.b)
    if a.gammas.shape != b.gammas.shape or not np.allclose(a.gammas, b.gammas, rtol=1e-10):
        ras = None
    else:
        ras = ras_dominance(a.utilities, b.utilities, a.gammas).to_dict()
    out = {
        "a": a.rule_tag,
        "b": b.rule_tag,
        "frontier": frontier_dominance(a, b).to_dict(),
        "ras": ras,
    }
    sys.stdout.write(_dumps(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvfrontier", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)

    ing = sub.add_parser("ingest", help="validate an industry-portfolio CSV")
    ing.add_argument("path")
    ing.add_argument("--window")
    ing.add_argument("--missing", choices=("reject", "drop"), default="reject")
    ing.add_argument("--out", help="rewrite the cleaned panel to this CSV")

    def study_flags(sp):
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--out")
        sp.add_argument("--dgp", help="comma-separated DGP kinds")
        sp.add_argument("--rules", help="comma-separated decision rules")
        sp.add_argument("--window", help="trailing months or YYYYMM:YYYYMM")
        sp.add_argument("--threads", type=int)

    cal = sub.add_parser("calibrate", help="emit calibrated DGP specs as JSON")
    study_flags(cal)
    cal.add_argument("--data", help="CSV path when no config is given")

    run = sub.add_parser("run", help="run the study described by a config file")
    study_flags(run)

    cmp_ = sub.add_parser("compare", help="dominance verdicts between two frontier CSVs")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--rule-a")
    cmp_.add_argument("--rule-b")
    return p


def _error_record(verb, kind, message, **extra):
    rec = {"error": kind, "message": message, "verb": verb}
    rec.update(extra)
    sys.stderr.write(json.dumps(_clean(rec), sort_keys=True) + "\n")


_HANDLERS = {"ingest": cmd_ingest, "calibrate": cmd_calibrate, "run": cmd_run,
             "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.verb](args)
    except (ValueError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _error_record(args.verb, type(exc).__name__, str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
