"""Command line driver: configs in, reports and tables out.

    stochlp symbol-check --symbol heat --out out/
    stochlp all --config run.ini --threads 4

Every run writes report.json, tables/*.csv and manifest.json under --out.
The manifest holds the full config; ``--config out/manifest.json`` reruns it
and reproduces the reports byte for byte.  The thread count is an execution
setting only and is not recorded.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import bernstein, kernels, lpaley, metric, spde, symbols
from .report import CheckReport, dumps, write_csv, write_json

COMMANDS = ("symbol-check", "kernel-table", "hormander", "lpaley", "spde", "bernstein", "all")


@dataclass
class RunConfig:
    command: str = "all"
    symbol: str = "heat"
    bernstein: str = "alpha-beta:0.25:0.75"
    d: int = 1
    L: float | None = None
    n: int | None = None
    T: float | None = None
    n_t: int | None = None
    C0: float | None = None
    seed: int = 0
    M_paths: int = 1024
    K_modes: int = 8
    p_list: list = field(default_factory=lambda: [2, 4])
    lemmas: list = field(default_factory=lambda: ["mc1", "mc2", "mc3"])
    n_scales: int = 8
    per_scale: int = 32
    iso_members: int = 5
    process: str = "battery"
    refine: bool = False
    out: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, value, known[key].default)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.process not in ("battery", "zero"):
            raise ValueError("process must be 'battery' or 'zero'")
        if self.M_paths < 2 or self.K_modes < 1 or self.d < 1:
            raise ValueError("M_paths >= 2, K_modes >= 1 and d >= 1 are required")


_LISTS = ("p_list", "lemmas")
_FLOATS = ("L", "T", "C0")
_INTS = ("d", "n", "n_t", "seed", "M_paths", "K_modes", "n_scales", "per_scale", "iso_members")


def _coerce(key, value, default):
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null")):
        return None
    if key in _LISTS:
        if isinstance(value, str):
            value = [v for v in re.split(r"[,\s]+", value.strip()) if v]
        if key == "p_list":
            return [int(v) if float(v) == int(float(v)) else float(v) for v in value]
        return [str(v) for v in value]
    if key in _FLOATS:
        return float(value)
    if key in _INTS:
        return int(value)
    if key == "refine":
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    return str(value)


def load_config(path: str | Path) -> dict:
    """JSON (a flat object or a manifest) or INI with a [run] section.

    INI sections other than [run] are flattened, so ``[grid] n = 64`` sets n.
    """
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        return json.loads(text)
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    out = {}
    for section in cp.sections():
        out.update(dict(cp[section]))
    return out


# ------------------------------------------------------------ commands

def _symbol(cfg: RunConfig) -> symbols.Symbol:
    return symbols.parse_symbol(cfg.symbol, cfg.d)


def _grid(cfg: RunConfig, L, n, T, n_t) -> kernels.SpaceTimeGrid:
    return kernels.SpaceTimeGrid(cfg.L if cfg.L is not None else L, cfg.n if cfg.n is not None else n, cfg.d,
                                 cfg.T if cfg.T is not None else T, cfg.n_t if cfg.n_t is not None else n_t)


def _metric(sym: symbols.Symbol, cfg: RunConfig) -> metric.QuasiMetric:
    if sym.bernstein is not None:
        return metric.subordinate_metric(sym.bernstein, cfg.C0)
    return metric.parabolic_metric(sym.order, cfg.C0)


def run_symbol_check(cfg, threads):
    sym = _symbol(cfg)
    alpha = (1,) + (0,) * (sym.d - 1)
    return [
        symbols.check_ellipticity(sym),
        symbols.check_derivative_bounds(sym),
        symbols.check_dyadic_condition(sym, np.logspace(-2, 2, 9), [((alpha,), (1,))]),
    ]


def run_kernel_table(cfg, threads):
    sym = _symbol(cfg)
    grid = _grid(cfg, 16.0, 1024, 1.0, 16)
    kf = kernels.kernel_field(sym, 0.0, 0.25, grid)
    rows = [{"x": float(x), "kernel": float(v)} for x, v in zip(grid.axis, np.real(kf.values).reshape(-1))] \
        if grid.d == 1 else []
    dump = CheckReport(f"kernel_dump[{sym.label}]", bool(np.all(np.isfinite(kf.values))),
                       {"mass": kf.mass(), "s": 0.0, "t": 0.25, "grid": grid.to_dict()},
                       tables={"kernel": rows})
    out = [dump]
    for lemma in cfg.lemmas:
        out.append(kernels.verify_kernel_lemma(sym, None, lemma, refine=cfg.refine))
    if sym.bernstein is not None:
        out.append(kernels.verify_bernstein_kernel_bounds(sym))
    return out


def run_hormander(cfg, threads):
    sym = _symbol(cfg)
    rho = _metric(sym, cfg)
    fam = kernels.KernelFamily(sym)
    return [
        metric.doubling_check(rho, 2.0, d=sym.d),
        metric.hormander_sup_estimate(fam, rho, refine=cfg.refine, threads=threads, seed=cfg.seed,
                                      n_scales=cfg.n_scales, per_scale=cfg.per_scale),
    ]


def run_lpaley(cfg, threads):
    sym = _symbol(cfg)
    fam = kernels.KernelFamily(sym)
    grid = _grid(cfg, math.pi, 64, 1.0, 16)
    out = [lpaley.verify_lpaley(fam, p_list=tuple(cfg.p_list), grid=grid, refine=cfg.refine, seed=cfg.seed)]
    rho = _metric(sym, cfg)
    fields_ = [lpaley.ScalarField(m.build(grid).modulus(), grid) for m in lpaley.lp_battery(fam, seed=cfg.seed)]
    for p in cfg.p_list:
        if p > 1:
            out.append(lpaley.maximal_inequality_check(fields_, rho, p))
    return out


def run_spde(cfg, threads):
    sym = _symbol(cfg)
    grid = _grid(cfg, math.pi, 64, 1.0, 128)
    if cfg.process == "zero":
        battery = [spde.AdaptedProcess("zero", (0.0, grid.T),
                                       lambda i, x: np.zeros((cfg.K_modes,) + x.shape[:-1]), cfg.K_modes)]
    else:
        battery = spde.g_battery(cfg.K_modes, grid.T, grid.L, grid.d, cfg.seed)
    noise = spde.NoiseEnsemble.for_grid(grid, cfg.seed, cfg.M_paths, cfg.K_modes)
    out = [spde.ito_isometry_check(sym, g, noise, grid, threads=threads) for g in battery[:cfg.iso_members]]
    for p in cfg.p_list:
        if p >= 2:
            out.append(spde.lp_ratio_estimate(sym, battery, noise, grid, p, refine=cfg.refine, threads=threads))
    return out


def run_bernstein(cfg, threads):
    phi = bernstein.parse_bernstein(cfg.bernstein)
    table = CheckReport("bernstein_catalog", True, {"members": len(bernstein.catalog_table())},
                        tables={"catalog": bernstein.catalog_table()})
    out = [table, bernstein.inverse_roundtrip_check(phi)]
    if phi.exponents:
        out.append(bernstein.scaling_check(phi))
    for which in ("615_1", "615_2", "615_3"):
        out.append(bernstein.verify_subordinate_lemma(phi, None, which, d=cfg.d, refine=cfg.refine))
    return out


RUNNERS = {
    "symbol-check": run_symbol_check,
    "kernel-table": run_kernel_table,
    "hormander": run_hormander,
    "lpaley": run_lpaley,
    "spde": run_spde,
    "bernstein": run_bernstein,
}


def run(cfg: RunConfig, threads: int = 1) -> dict:
    """Execute a config; returns the report document (reports keep their tables)."""
    names = [c for c in COMMANDS if c != "all"] if cfg.command == "all" else [cfg.command]
    reports = []
    for name in names:
        for r in RUNNERS[name](cfg, threads):
            reports.append((name, r))
    return {
        "command": cfg.command,
        "passed": all(r.passed for _, r in reports),
        "reports": [dict(r.to_dict(), command=name) for name, r in reports],
        "_objects": [r for _, r in reports],
    }


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")


def write_outputs(doc: dict, cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    body = {k: v for k, v in doc.items() if k != "_objects"}
    write_json(out / "report.json", body)
    for r in doc["_objects"]:
        for tname, rows in r.tables.items():
            if rows:
                flat = [{k: (dumps(v).strip() if isinstance(v, (dict, list)) else v) for k, v in row.items()}
                        for row in rows]
                write_csv(out / "tables" / f"{_slug(r.name)}__{tname}.csv", flat)
    write_json(out / "manifest.json", {"package": "stochlp", "version": __version__, "config": cfg.to_dict()})
    return out


# ------------------------------------------------------------ entry point

class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)


def _emit_error(kind: str, message: str, code: int = 2):
    sys.stdout.write(dumps({"error": {"type": kind, "message": message}}))
    sys.exit(code)


def build_parser() -> argparse.ArgumentParser:
    ap = _JsonErrorParser(prog="stochlp", description="Numerical certificates for stochastic L_p estimates.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI or JSON config (a manifest.json also works)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--symbol")
    ap.add_argument("--refine", action="store_true", default=None, help="run grid/path refinement drift checks")
    ap.add_argument("--json", action="store_true", help="print report.json to stdout")
    ap.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config) if args.config else {}
        if isinstance(data, dict) and "config" in data:
            data = dict(data["config"])
        data["command"] = args.command
        for key in ("seed", "out", "symbol", "refine"):
            if getattr(args, key) is not None:
                data[key] = getattr(args, key)
        cfg = RunConfig.from_mapping(data)
        if args.threads < 1:
            raise ValueError("--threads must be positive")
        doc = run(cfg, args.threads)
        out = write_outputs(doc, cfg)
    except Exception as exc:  # reported as machine-readable JSON
        _emit_error(type(exc).__name__, str(exc))
    if args.json:
        sys.stdout.write((out / "report.json").read_text(encoding="utf-8"))
    else:
        for r in doc["_objects"]:
            print(r.summary_line())
        print(f"{'PASS' if doc['passed'] else 'FAIL'}: {len(doc['reports'])} reports written to {out}")
    return 0 if doc["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
