"""Command-line entry point: configuration, dispatch, caching and CSV/JSON output.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import acceptance, effective1d, geometry, model1d, moments, operator2d, tunneling, wkb
from .errors import ConfigError, MagstepError, NumericalError, ValidationError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
MODELS = ("magnetic-step", "neumann", "transversal")
COMMANDS = ("constants", "curve", "predict", "effective-gap", "wkb-residual", "solve2d",
            "validate")

log = logging.getLogger("magstep")


@dataclass
class RunConfig:
    """All physical and numerical parameters of a run.

    ``sweep`` keys: ``h`` (effective-operator parameters), ``hbar`` (2D and
    WKB), ``count``, ``orders``, ``mode`` (``full`` or ``single-well`` for
    ``solve2d``). ``grid`` keys: ``spacing``, ``half_width`` (fiber),
    ``n_effective`` (1D nodes), ``n_sigma``, ``n_tau``. ``tolerances`` maps
    criterion numbers to overrides of :data:`magstep.acceptance.TOLERANCES`.
    """

    model: str = "magnetic-step"
    a: tuple = (-0.5,)
    curve: dict = field(default_factory=lambda: {"kind": "ellipse", "semi_major": 2.0,
                                                 "semi_minor": 1.0})
    grid: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    eta: float = operator2d.ETA_DEFAULT
    alpha: float | None = None
    cache_dir: str = ".magstep-cache"

    @classmethod
    def from_mapping(cls, data):
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "a" in data:
            a = data["a"]
            data["a"] = tuple(float(x) for x in (a if isinstance(a, (list, tuple)) else [a]))
        if "tolerances" in data:
            data["tolerances"] = {int(k): dict(v) for k, v in dict(data["tolerances"]).items()}
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.a:
            raise ConfigError("a must list at least one value")
        if self.model == "magnetic-step" and not all(-1.0 <= x < 0.0 for x in self.a):
            raise ConfigError(f"a must lie in [-1, 0) for the step model, got {self.a}")
        if not 0.0 < float(self.eta) < 0.25:
            raise ConfigError(f"eta must lie in (0, 1/4), got {self.eta}")
        if not isinstance(self.curve, dict) or "kind" not in self.curve:
            raise ConfigError("curve needs a 'kind'")
        for n in self.tolerances:
            if n not in acceptance.TOLERANCES:
                raise ConfigError(f"no acceptance criterion {n}")
        for key in ("h", "hbar"):
            vals = self.sweep.get(key)
            if vals is not None and not all(float(v) > 0 for v in vals):
                raise ConfigError(f"sweep.{key} must be positive")

    def canonical(self):
        """Deterministic JSON of the content fields (the cache location is excluded)."""
        d = asdict(self)
        d.pop("cache_dir")
        d["tolerances"] = {str(k): v for k, v in d["tolerances"].items()}
        return json.dumps(_plain(d), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @property
    def a0(self):
        return self.a[0]


@dataclass
class ResultRecord:
    """Cached result of one command."""

    config_hash: str
    command: str
    timestamp: str
    outputs: dict
    diagnostics: dict
    table: dict
    schema: int = SCHEMA_VERSION

    def body(self):
        return json.dumps(_plain(asdict(self)), sort_keys=True, indent=1)

    def checksum(self):
        return hashlib.sha256(self.body().encode()).hexdigest()


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def load_config(path):
    """Read a YAML or JSON config file (JSON is a YAML subset)."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        return RunConfig.from_mapping(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# cache

def _cache_path(cfg, command):
    return Path(cfg.cache_dir) / f"{command}-{cfg.hash()}.json"


def _atomic_write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cache_store(path, record):
    _atomic_write(path, json.dumps({"checksum": record.checksum(), "record": json.loads(record.body())},
                                   sort_keys=True, indent=1))


def cache_load(path):
    """Cached record, or ``None`` if missing or corrupted (checksum mismatch)."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        record = ResultRecord(**raw["record"])
    except FileNotFoundError:
        return None
    except (ValueError, KeyError, TypeError) as exc:
        log.warning("corrupted cache entry %s (%s); recomputing", path, exc)
        return None
    if record.checksum() != raw.get("checksum"):
        log.warning("checksum mismatch in cache entry %s; recomputing", path)
        return None
    return record


# shared builders

def build_curve(params):
    try:
        return _build_curve(dict(params))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad curve config {params}: {exc!r}") from exc


def _build_curve(params):
    kind = params.pop("kind")
    if kind == "ellipse":
        return geometry.build_ellipse(float(params["semi_major"]), float(params["semi_minor"]))
    if kind == "fourier":
        coeffs = {int(k): float(v) for k, v in dict(params["cos_coeffs"]).items()}
        return geometry.build_fourier_curve(float(params.get("radius", 1.0)), coeffs)
    if kind == "tabulated":
        return geometry.load_tabulated(params["path"], tol=float(params.get("tol", 1e-3)))
    raise ConfigError(f"unknown curve kind {kind!r}")


def _fiber_grid(cfg):
    g = cfg.grid
    kw = {k: float(g[k]) for k in ("spacing", "half_width") if k in g}
    return model1d.default_grid(**kw) if kw else None


def _edge(cfg, a=None):
    return moments.edge_constants(cfg.a0 if a is None else a, _fiber_grid(cfg))


def _constants(cfg):
    if cfg.model == "neumann":
        return model1d.de_gennes_constants()
    return _edge(cfg)


def _n_effective(cfg):
    return int(cfg.grid.get("n_effective", 1024))


# commands: each returns (outputs, diagnostics, table)

def cmd_constants(cfg):
    dg = model1d.de_gennes_constants(
        model1d.default_grid(True, **{k: float(cfg.grid[k]) for k in ("spacing", "half_width")
                                      if k in cfg.grid}))
    rows = []
    for a in cfg.a:
        c = _edge(cfg, a)
        rows.append([a, c.zeta_a, c.beta_a, c.mu_pp, c.c2, c.m3, c.phi_at_0, c.dphi_at_0])
    header = ["a", "zeta", "beta", "mu_pp", "c2", "m3", "phi0", "dphi0"]
    out = {"de_gennes": asdict(dg), "edge": [dict(zip(header, r)) for r in rows]}
    return out, {}, {"header": header, "rows": rows}


def cmd_curve(cfg):
    c = build_curve(cfg.curve)
    out = {"kind": c.kind, "half_length": c.half_length, "area": c.area,
           "gamma0": geometry.circulation(c), **c.wells}
    step = max(1, len(c.s) // 512)
    rows = [[s, k] for s, k in zip(c.s[::step], c.k[::step])]
    return out, {"closure_error": c.closure_error()}, {"header": ["s", "k"], "rows": rows}


def cmd_predict(cfg):
    header = ["h", "S_u", "S_d", "gap_predicted", "phase"]
    if cfg.model == "transversal":
        params = {k: float(v) for k, v in cfg.curve.items() if k != "kind"}
        if cfg.curve["kind"] != "arc":
            raise ConfigError("transversal model needs curve kind 'arc'")
        arc = tunneling.cosine_bump_arc(**params)
        c = _edge(cfg)
        hs = cfg.sweep.get("h", np.geomspace(1e-6, 1e-3, 7))
        preds = [tunneling.splitting_predict_transversal(arc, c, float(h)) for h in hs]
        rows = [[float(h), p["S_a"], p["S_a"], p["gap_predicted"], 0.0] for h, p in zip(hs, preds)]
        return {"model": cfg.model, "S_a": preds[0]["S_a"], "A_a": preds[0]["A_a"]}, {}, \
            {"header": header, "rows": rows}
    curve = build_curve(cfg.curve)
    constants = _constants(cfg)
    effpot = tunneling.effective_potential(constants, curve)
    ag = tunneling.agmon(effpot)
    if cfg.alpha is not None:
        alpha = float(cfg.alpha)
    elif cfg.model == "magnetic-step":
        setup = wkb.prepare(constants, curve)
        alpha = wkb.alpha_a(setup.effpot, setup.K)
    else:
        alpha = 0.0
    hs = cfg.sweep.get("h") or effective1d.default_h_list(ag.S, int(cfg.sweep.get("count", 12)))
    predict = tunneling.splitting_predict if cfg.model == "magnetic-step" else \
        (lambda c, cv, al, h, **kw: tunneling.splitting_predict_neumann(cv, h, c, al, **kw))
    rows = []
    for h in hs:
        p = predict(constants, curve, alpha, float(h), effpot=effpot, ag=ag)
        rows.append([float(h), p.S_u, p.S_d, p.gap_predicted, p.phase["L_f"]])
    out = {"model": cfg.model, "alpha": alpha, "S_u": ag.S_u, "S_d": ag.S_d, "A_u": ag.A_u,
           "A_d": ag.A_d, "g": ag.g, "gamma0": geometry.circulation(curve)}
    return out, {}, {"header": header, "rows": rows}


def cmd_effective_gap(cfg):
    curve = build_curve(cfg.curve)
    effpot = tunneling.effective_potential(_constants(cfg), curve)
    ag = tunneling.agmon(effpot)
    n = _n_effective(cfg)
    count = int(cfg.sweep.get("count", 12))
    hs = cfg.sweep.get("h") or effective1d.resolvable_h_list(effpot, ag.S, count, n)
    fit = effective1d.gap_exponent_fit(effpot, hs, n)
    rows = [list(r) for r in fit.pop("rows")]
    out = {"S": ag.S, "S_u": ag.S_u, "S_d": ag.S_d, **fit, "rel_err": fit["S_fit"] / ag.S - 1.0}
    return out, {}, {"header": ["h", "nu1", "nu2", "gap", "floor"], "rows": rows}


def cmd_wkb_residual(cfg):
    if cfg.model != "magnetic-step":
        raise ConfigError("wkb-residual needs the magnetic-step model")
    curve = build_curve(cfg.curve)
    setup = wkb.prepare(_edge(cfg), curve)
    hbars = cfg.sweep.get("hbar") or np.geomspace(0.05, 0.2, 5).tolist()
    orders = tuple(int(n) for n in cfg.sweep.get("orders", (0, 1, 3)))
    slopes = wkb.residual_slopes(setup, curve, hbars, orders)
    rows = [[N, float(hb), r] for N, d in slopes.items() for hb, r in zip(hbars, d["residuals"])]
    out = {"slopes": {N: d["slope"] for N, d in slopes.items()},
           "required": {N: (N + 1) / 2.0 for N in orders}}
    return out, {}, {"header": ["order", "hbar", "residual"], "rows": rows}


def _solve2d_point(cfg_json, hbar):
    cfg = RunConfig.from_mapping(json.loads(cfg_json))
    curve = build_curve(cfg.curve)
    c = _edge(cfg)
    ns, nt = int(cfg.grid.get("n_sigma", 512)), int(cfg.grid.get("n_tau", 256))
    if cfg.sweep.get("mode", "full") == "single-well":
        grid = operator2d.single_well_line(curve, hbar, ns, nt, cfg.eta, constants=c)
        op = operator2d.assemble_single_well(c, curve, "r", hbar, cfg.eta, grid)
    else:
        grid = operator2d.default_strip(curve, hbar, ns, nt, cfg.eta, constants=c)
        op = operator2d.assemble_full(c, curve, hbar, cfg.eta, grid)
    vals, info = operator2d.lowest_eigs(op, 3)
    return [hbar, *map(float, vals), float(vals[1] - vals[0])], \
        {"residuals": info["residuals"], "shift": info["shift"], "n": op.n}


def cmd_solve2d(cfg, jobs=1):
    hbars = [float(h) for h in cfg.sweep.get("hbar", [0.06])]
    cfg_json = json.dumps(_plain({k: v for k, v in asdict(cfg).items()}))
    results = _map(_solve2d_point, [(cfg_json, h) for h in hbars], jobs)
    rows = [r for r, _ in results]
    diag = {str(h): d for h, (_, d) in zip(hbars, results)}
    out = {"mode": cfg.sweep.get("mode", "full"),
           "levels": [dict(zip(["hbar", "nu1", "nu2", "nu3", "gap"], r)) for r in rows]}
    return out, diag, {"header": ["hbar", "nu1", "nu2", "nu3", "gap"], "rows": rows}


def cmd_validate(cfg, skip_2d=False):
    # sequential: runtime limits are part of the criteria
    results = acceptance.run_suite(skip_2d, cfg.tolerances)
    out = {"passed": all(r.passed for r in results), "skip_2d": skip_2d,
           "criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                         "error": r.error, "details": _plain(r.details)} for r in results]}
    diag = {"runtime": {r.number: r.runtime for r in results}}
    rows = [[r.number, r.name, "PASS" if r.passed else "FAIL", r.error] for r in results]
    return out, diag, {"header": ["criterion", "name", "status", "error"], "rows": rows}


def _map(fun, args, jobs):
    if jobs <= 1 or len(args) <= 1:
        return [fun(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fun, *zip(*args)))


def run_command(command, cfg, skip_2d=False, jobs=1, refresh=False):
    """Cached execution of one command; returns the :class:`ResultRecord`."""
    key = command + ("-skip2d" if command == "validate" and skip_2d else "")
    path = _cache_path(cfg, key)
    if not refresh:
        cached = cache_load(path)
        if cached is not None:
            return cached
    if command == "validate":
        out, diag, table = cmd_validate(cfg, skip_2d)
    elif command == "solve2d":
        out, diag, table = cmd_solve2d(cfg, jobs)
    else:
        out, diag, table = HANDLERS[command](cfg)
    record = ResultRecord(cfg.hash(), command,
                          datetime.now(timezone.utc).isoformat(timespec="seconds"),
                          _plain(out), _plain(diag), _plain(table))
    cache_store(path, record)
    return cache_load(path) or record


HANDLERS = {"constants": cmd_constants, "curve": cmd_curve, "predict": cmd_predict,
            "effective-gap": cmd_effective_gap, "wkb-residual": cmd_wkb_residual}


def render_csv(record):
    buf = io.StringIO()
    buf.write(f"# schema={record.schema} config={record.config_hash} command={record.command}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(record.table["header"])
    for row in record.table["rows"]:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_outputs(record, out_dir):
    out_dir = Path(out_dir)
    stem = record.command.replace("-", "_")
    _atomic_write(out_dir / f"{stem}.json", record.body() + "\n")
    _atomic_write(out_dir / f"{stem}.csv", render_csv(record))
    return out_dir / f"{stem}.json", out_dir / f"{stem}.csv"


def build_parser():
    p = argparse.ArgumentParser(prog="magstep", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
    p.add_argument("--out", metavar="DIR", default="magstep-out", help="output directory")
    p.add_argument("--skip-2d", action="store_true",
                   help="validate: skip the slow double-well 2D criterion")
    p.add_argument("--jobs", metavar="N", type=int, default=1,
                   help="parallel workers for solve2d sweep points")
    p.add_argument("--refresh", action="store_true", help="ignore cached results")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = load_config(args.config)
        record = run_command(args.command, cfg, args.skip_2d, args.jobs, args.refresh)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MagstepError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    json_path, csv_path = write_outputs(record, args.out)
    if args.command == "validate":
        for c in record.outputs["criteria"]:
            status = "PASS" if c["passed"] else "FAIL"
            extra = f" ({c['error']})" if c["error"] else ""
            print(f"criterion {c['number']:2d} {status}  {c['name']}{extra}")
        print(f"wrote {json_path} and {csv_path}")
        return EXIT_OK if record.outputs["passed"] else EXIT_VALIDATION
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
