"""Command-line interface: ``gwroute {fit,routemap,diagnose,simulate,bw-curve}``.

Exit codes: 0 on success, 1 for user errors (bad flags, unreadable input,
invalid options), 2 for numerical failures (singular fits, saturated
models, non-convergence).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .dataset import apply_transform, distance_matrix, load_csv
from .diagnostics import (
    build_weight_matrix,
    global_collinearity,
    local_collinearity,
    morans_i,
    standardized_residuals,
)
from .errors import GwrouteError, NumericalError, UserInputError
from .global_models import GlobalFit, fit_ols, fit_sam
from .gwr import bandwidth_curve, fit_gwr, optimize_bandwidth
from .kernel import KERNELS, Bandwidth, KernelSpec
from .routemap import RouteMapAborted, RouteMapConfig, run_routemap
from .synth import SurfaceSpec, generate_svc
from .variants import fit_msgwr, fit_mxgwr, optimize_mxgwr_bandwidth

log = logging.getLogger("gwroute")

MODELS = ("ols", "sam", "gwr", "mxgwr", "msgwr")
COMMANDS = ("fit", "routemap", "diagnose", "simulate", "bw-curve")


class UsageError(UserInputError):
    pass


# -- configuration ------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything a run depends on. Round-trips through JSON unchanged."""

    command: str = None
    input: str = None
    response: str = None
    predictors: list = field(default_factory=list)
    x: str = "x"
    y: str = "y"
    id: str = None
    transforms: dict = field(default_factory=dict)
    model: str = "gwr"
    kernel: str = "bisquare"
    bw: str = None
    bw_search: str = "aicc"
    bw_form: str = "fixed"
    global_vars: list = field(default_factory=list)
    local_vars: list = field(default_factory=list)
    nugget: str = "on"
    max_sweeps: int = 100
    soc_tol: float = 1e-5
    center_for_bandwidths: bool = True
    routemap: dict = field(default_factory=dict)
    weights: str = "knn:8"
    row_standardize: bool = True
    permutations: int = 0
    n_points: int = 40
    spec: str = None
    truth: str = None
    seed: int = None
    out: str = "."
    geojson: bool = False
    threads: int = None

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise UsageError(f"unknown configuration key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and isinstance(data.get("config"), dict) and "version" in data:
        data = data["config"]           # an earlier report: replay its echoed config
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


# -- serialisation --------------------------------------------------------------

def _plain(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else "|".join(map(str, k)): _plain(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (Bandwidth, KernelSpec)):
        return str(obj) if isinstance(obj, Bandwidth) else \
            {"kernel": obj.kernel, "bandwidth": str(obj.bandwidth)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    return obj


def write_report_json(report, path, config=None, timestamp=None):
    """Write a fit or route-map report as stable-key JSON.

    Floats keep round-trip precision. ``generated_at`` is the only field
    that changes between identical runs.
    """
    body = report.to_dict() if hasattr(report, "to_dict") else \
        report.summary_dict() if hasattr(report, "summary_dict") else dict(report)
    doc = {"version": __version__, "report": body,
           "config": config.to_dict() if isinstance(config, RunConfig) else config,
           "generated_at": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()}
    text = json.dumps(_plain(doc), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return path


def _fmt(v):
    return repr(float(v))


def surface_table(fit):
    """Header and rows of the per-location coefficient table."""
    if not hasattr(fit, "surfaces"):
        raise ValueError(f"{getattr(fit, 'model', type(fit).__name__)} fit has no local "
                         f"coefficient surfaces")
    surf = fit.surfaces()
    header = ["x", "y"]
    for nm in surf:
        header += [f"beta_{nm}", f"se_{nm}", f"t_{nm}", f"p_{nm}", f"sig_{nm}"]
    coords = np.asarray(fit.coords)
    rows = []
    for i in range(coords.shape[0]):
        row = [_fmt(coords[i, 0]), _fmt(coords[i, 1])]
        for b, s, t, p in surf.values():
            row += [_fmt(b[i]), _fmt(s[i]), _fmt(t[i]), _fmt(p[i]), "1" if p[i] < 0.05 else "0"]
        rows.append(row)
    return header, rows


def write_surface_csv(fit, path):
    """Write x, y and beta/se/t/p/sig columns per term, one row per location."""
    if isinstance(fit, GlobalFit):
        raise ValueError(f"{fit.model} is a global fit and has no coefficient surfaces")
    header, rows = surface_table(fit)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_surface_geojson(fit, path):
    header, rows = surface_table(fit)
    feats = []
    for row in rows:
        props = {}
        for k, v in zip(header[2:], row[2:]):
            props[k] = int(v) if k.startswith("sig_") else _plain(float(v))
        feats.append({"type": "Feature",
                      "geometry": {"type": "Point", "coordinates": [float(row[0]),
                                                                    float(row[1])]},
                      "properties": props})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh, sort_keys=True)
        fh.write("\n")
    return path


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p, data=True):
    p.add_argument("--config", help="JSON file with RunConfig keys (or an earlier report)")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--threads", type=int, help="worker threads for local fits")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    if data:
        p.add_argument("--input", help="CSV file")
        p.add_argument("--response", help="response column")
        p.add_argument("--predictors", help="comma-separated predictor columns")
        p.add_argument("--x", help="x coordinate column (default x)")
        p.add_argument("--y", help="y coordinate column (default y)")
        p.add_argument("--id", help="identifier column")
        p.add_argument("--transform", action="append", metavar="VAR=KIND",
                       help="natural_log, sqrt or none; repeatable")
        p.add_argument("--geojson", action="store_true", default=None,
                       help="also write coefficient surfaces as GeoJSON points")


def _kernel_args(p):
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--bw", help="bandwidth, e.g. fixed:597.5 or adaptive:60")
    p.add_argument("--bw-search", choices=("aicc", "cv"))
    p.add_argument("--bw-form", choices=("fixed", "adaptive"))


def build_parser():
    parser = _Parser(prog="gwroute", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gwroute {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one model")
    _common(p)
    _kernel_args(p)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--global", dest="global_vars", help="MX-GWR global terms (comma-separated)")
    p.add_argument("--local", dest="local_vars", help="MX-GWR local terms (comma-separated)")
    p.add_argument("--nugget", help="SAM nugget: on, off or a fixed share in [0, 1]")
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--soc-tol", type=float)
    p.add_argument("--no-center", dest="center_for_bandwidths", action="store_false",
                   default=None, help="MS-GWR: select bandwidths on raw predictors")

    p = sub.add_parser("routemap", help="run the full route map")
    _common(p)
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--bw-form", choices=("fixed", "adaptive"))
    p.add_argument("--weights", help="Moran weights: knn:k, distance_band:d, inverse_distance:p")
    p.add_argument("--global-threshold", type=float)
    p.add_argument("--similarity-ratio", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mxgwr-bw", type=float, help="local bandwidth for the MX-GWR candidate")

    p = sub.add_parser("diagnose", help="Moran's I, collinearity and outlier checks")
    _common(p)
    p.add_argument("--weights", help="knn:k, distance_band:d or inverse_distance:p")
    p.add_argument("--row-standardize", dest="row_standardize", action="store_true",
                   default=None)
    p.add_argument("--no-row-standardize", dest="row_standardize", action="store_false")
    p.add_argument("--permutations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--bw", help="bandwidth for local collinearity, e.g. fixed:800")

    p = sub.add_parser("simulate", help="generate synthetic data with known coefficients")
    _common(p, data=False)
    p.add_argument("--spec", help="JSON simulation spec")
    p.add_argument("--seed", type=int)
    p.add_argument("--truth", help="CSV path for the true coefficients")

    p = sub.add_parser("bw-curve", help="GWR criterion over a grid of bandwidths")
    _common(p)
    _kernel_args(p)
    p.add_argument("--n-points", type=int)
    return parser


_FLAG_KEYS = {"input", "response", "x", "y", "id", "kernel", "bw", "bw_search", "bw_form",
              "model", "nugget", "max_sweeps", "soc_tol", "center_for_bandwidths", "weights",
              "row_standardize", "permutations", "seed", "spec", "truth", "out", "threads",
              "geojson", "n_points"}


def _split(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else []


def resolve_config(args):
    """Config file values, overridden by flags given on the command line."""
    base = _read_config(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig.from_dict(base)
    cfg.command = args.command
    ns = vars(args)
    for key in _FLAG_KEYS:
        if ns.get(key) is not None:
            setattr(cfg, key, ns[key])
    if ns.get("predictors") is not None:
        cfg.predictors = _split(ns["predictors"])
    for key in ("global_vars", "local_vars"):
        if ns.get(key) is not None:
            setattr(cfg, key, _split(ns[key]))
    for item in ns.get("transform") or []:
        var, sep, kind = item.partition("=")
        if not sep:
            raise UsageError(f"--transform expects VAR=KIND, got {item!r}")
        cfg.transforms[var.strip()] = kind.strip()
    rm = dict(cfg.routemap)
    for flag, key in (("global_threshold", "global_threshold"),
                      ("similarity_ratio", "local_similarity_ratio"), ("alpha", "alpha"),
                      ("mxgwr_bw", "mxgwr_bandwidth")):
        if ns.get(flag) is not None:
            rm[key] = ns[flag]
    cfg.routemap = rm
    return cfg


# -- commands ----------------------------------------------------------------------

def _load(cfg):
    if not cfg.input:
        raise UsageError("--input is required")
    if not cfg.response:
        raise UsageError("--response is required")
    if not cfg.predictors:
        raise UsageError("--predictors is required")
    schema = {"x": cfg.x, "y": cfg.y, "response": cfg.response, "predictors": cfg.predictors,
              "id": cfg.id}
    try:
        ds = load_csv(cfg.input, schema)
    except FileNotFoundError as exc:
        raise UsageError(f"input file not found: {cfg.input}") from exc
    for var, kind in cfg.transforms.items():
        ds = apply_transform(ds, var, kind)
    return ds


def _outdir(cfg):
    out = cfg.out or "."
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    if not os.path.isdir(out) or not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _write(func, *args, **kw):
    try:
        return func(*args, **kw)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc


def _write_surfaces(fit, out, stem, cfg, written):
    written.append(_write(write_surface_csv, fit, os.path.join(out, f"{stem}.csv")))
    if cfg.geojson:
        written.append(_write(write_surface_geojson, fit, os.path.join(out, f"{stem}.geojson")))


def _nugget(text):
    if text in ("on", "off"):
        return text
    try:
        return float(text)
    except (TypeError, ValueError):
        raise UsageError(f"--nugget must be on, off or a number, got {text!r}") from None


def cmd_fit(cfg):
    ds = _load(cfg)
    out = _outdir(cfg)
    dm = distance_matrix(ds)
    written = []
    extra = {}
    if cfg.model == "ols":
        fit = fit_ols(ds)
    elif cfg.model == "sam":
        fit = fit_sam(ds, nugget=_nugget(cfg.nugget), dm=dm)
    elif cfg.model == "gwr":
        if cfg.bw:
            bw = Bandwidth.parse(cfg.bw)
        else:
            bw, curve = optimize_bandwidth(ds, kernel=cfg.kernel, form=cfg.bw_form,
                                           criterion=cfg.bw_search, dm=dm, threads=cfg.threads)
            extra["bandwidth_search"] = curve.summary_dict()
            log.info("selected bandwidth %s", bw)
        fit = fit_gwr(ds, spec=KernelSpec(cfg.kernel, bw), dm=dm, threads=cfg.threads)
    elif cfg.model == "mxgwr":
        X, names = ds.design()
        gv, lv = list(cfg.global_vars), list(cfg.local_vars)
        listed = {v.lower() for v in gv + lv}
        rest = [nm for nm in ds.predictor_names if nm.lower() not in listed]
        if gv and not lv:
            lv = rest
        elif lv and not gv:
            gv = rest
        if cfg.bw:
            spec = KernelSpec(cfg.kernel, Bandwidth.parse(cfg.bw))
        else:
            spec, curve = optimize_mxgwr_bandwidth(X, ds.response, names, gv, lv, dm,
                                                   cfg.kernel, cfg.bw_form)
            extra["bandwidth_search"] = curve.summary_dict()
        fit = fit_mxgwr(ds, global_vars=gv, local_vars=lv, spec=spec, dm=dm)
    elif cfg.model == "msgwr":
        fit = fit_msgwr(ds, kernel=cfg.kernel, form=cfg.bw_form, max_sweeps=cfg.max_sweeps,
                        soc_tol=cfg.soc_tol, center_for_bandwidths=cfg.center_for_bandwidths,
                        dm=dm)
    else:
        raise UsageError(f"unknown model {cfg.model!r}")
    summary = fit.summary_dict()
    summary.update(extra)
    summary["transform_log"] = [r.as_dict() for r in ds.transform_log]
    if not isinstance(fit, GlobalFit):
        _write_surfaces(fit, out, f"surfaces_{cfg.model}", cfg, written)
    written.append(_write(write_report_json, summary, os.path.join(out, "report.json"), cfg))
    for line in _fit_lines(fit, summary):
        print(line)
    return written


def _fit_lines(fit, summary):
    lines = [f"model: {summary['model']}  n = {summary['n']}  AICc = {summary['aicc']:.4f}  "
             f"R2 = {summary['r2']:.4f}"]
    if "bandwidth" in summary:
        lines.append(f"bandwidth: {summary['bandwidth']}")
    if "bandwidths" in summary:
        lines += [f"bandwidth[{k}]: {v}" for k, v in summary["bandwidths"].items()]
    coefs = summary.get("coefficients") or summary.get("global_coefficients") or {}
    for nm, c in coefs.items():
        lines.append(f"  {nm:<16} {c['estimate']: .6f}  se {c['se']:.6f}  p {c['p']:.4g}")
    return lines


def cmd_routemap(cfg):
    ds = _load(cfg)
    out = _outdir(cfg)
    rm = dict(cfg.routemap)
    rm.setdefault("kernel", cfg.kernel)
    rm.setdefault("form", cfg.bw_form)
    rm.setdefault("weights", cfg.weights)
    try:
        rcfg = RouteMapConfig.from_dict(rm)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid route-map configuration: {exc}") from exc
    written = []
    try:
        report = run_routemap(ds, cfg.predictors, rcfg)
    except RouteMapAborted as exc:
        written.append(_write(write_report_json, exc.report, os.path.join(out, "report.json"),
                              cfg))
        raise
    written.append(_write(write_report_json, report, os.path.join(out, "report.json"), cfg))
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.narrative())
    written.append(os.path.join(out, "report.txt"))
    _write_surfaces(report.msgwr, out, "surfaces_msgwr", cfg, written)
    for name, fit in sorted(report.candidates.items()):
        if not isinstance(fit, GlobalFit):
            _write_surfaces(fit, out, "surfaces_" + name.lower().replace("-", ""), cfg, written)
    print(report.narrative(), end="")
    return written


def cmd_diagnose(cfg):
    ds = _load(cfg)
    out = _outdir(cfg)
    dm = distance_matrix(ds)
    X, names = ds.design()
    ols_fit = fit_ols(ds)
    wm = build_weight_matrix(dm, cfg.weights, row_standardize=cfg.row_standardize)
    seed = 0 if cfg.seed is None else cfg.seed
    moran = morans_i(ols_fit.residuals, wm, "residual_adjusted", X=X,
                     permutations=cfg.permutations, seed=seed)
    sr = standardized_residuals(ols_fit)
    doc = {"weights": wm.scheme, "row_standardized": wm.row_standardized,
           "islands": wm.islands, "ols": ols_fit.summary_dict(),
           "moran_ols_residuals": moran.summary_dict(),
           "outliers": {"limit": 3.0, "n_flagged": sr.n_flagged,
                        "rows": (np.flatnonzero(sr.flags) + 1).tolist(),
                        "excluded": sr.excluded}}
    if ds.m >= 2:
        doc["collinearity"] = global_collinearity(ds).summary_dict()
    if cfg.bw:
        spec = KernelSpec(cfg.kernel, Bandwidth.parse(cfg.bw))
        doc["local_collinearity"] = local_collinearity(ds, spec=spec, dm=dm).summary_dict()
    path = _write(write_report_json, doc, os.path.join(out, "diagnostics.json"), cfg)
    print(f"Moran's I (OLS residuals, {wm.scheme}): I = {moran.I:.4f}, p = {moran.p_value:.4g}")
    for flag in doc.get("collinearity", {}).get("flags", []):
        print(f"collinearity: {flag}")
    print(f"standardised residuals beyond 3: {sr.n_flagged}")
    return [path]


def _read_spec(path):
    if not path:
        raise UsageError("--spec is required")
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"spec {path} is not valid JSON: {exc}") from exc
    return spec


def cmd_simulate(cfg):
    spec = _read_spec(cfg.spec)
    try:
        surfaces = {k: SurfaceSpec.from_dict(v) for k, v in spec["surfaces"].items()}
        seed = cfg.seed if cfg.seed is not None else spec.get("seed", 0)
        ds, truth = generate_svc(int(spec["n"]), float(spec["extent"]),
                                 spec.get("layout", "grid"), surfaces,
                                 float(spec.get("predictor_sd", 1.0)),
                                 float(spec.get("noise_sd", 1.0)), int(seed))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid simulation spec: {exc}") from exc
    out = cfg.out or "."
    path = out if out.endswith(".csv") else os.path.join(_outdir(cfg), "synth.csv")
    header = ["x", "y", ds.response_name, *ds.predictor_names]
    rows = np.column_stack([ds.coords, ds.response, ds.predictors])
    written = [_write(_write_rows, path, header, rows)]
    if cfg.truth:
        t = np.column_stack([ds.coords] + [truth[k] for k in truth])
        written.append(_write(_write_rows, cfg.truth, ["x", "y", *truth], t))
    print(f"wrote {ds.n} rows (seed {seed}) to {path}")
    return written


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(v) for v in r] for r in rows])
    return path


def cmd_bw_curve(cfg):
    ds = _load(cfg)
    out = _outdir(cfg)
    curve = bandwidth_curve(ds, kernel=cfg.kernel, form=cfg.bw_form, criterion=cfg.bw_search,
                            n_points=cfg.n_points, threads=cfg.threads)
    path = os.path.join(out, "bw_curve.csv")
    _write(_write_rows, path, ["bandwidth", cfg.bw_search], curve.as_rows())
    rep = _write(write_report_json, curve.summary_dict(), os.path.join(out, "bw_curve.json"), cfg)
    best = curve.bandwidths[int(np.nanargmin(np.where(np.isfinite(curve.values),
                                                      curve.values, np.nan)))]
    print(f"grid minimum at {best:g} ({cfg.bw_search}); plateau={curve.plateau} "
          f"boundary={curve.boundary_minimum}")
    return [path, rep]


HANDLERS = {"fit": cmd_fit, "routemap": cmd_routemap, "diagnose": cmd_diagnose,
            "simulate": cmd_simulate, "bw-curve": cmd_bw_curve}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = resolve_config(args)
        if cfg.threads is not None:
            os.environ["GWROUTE_THREADS"] = str(cfg.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            HANDLERS[args.command](cfg)
        return 0
    except SystemExit as exc:           # --help / --version
        return int(exc.code or 0)
    except UserInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (GwrouteError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
