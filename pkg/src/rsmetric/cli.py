"""Command-line entry point: verification suites, spectral experiments, reports."""

from __future__ import annotations

import ast
import csv
import datetime as _dt
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import checks

SUITE_NAMES = ("algebra", "chernweil", "asymptotics", "transport", "localindex", "spectral", "all")
FORMATS = ("json", "csv", "text")
CSV_COLUMNS = ("suite", "seed", "check_id", "status", "error", "tolerance", "detail")


class ConfigError(ValueError):
    pass


@dataclass
class SuiteResult:
    suite: str
    seed: int
    tolerance_scale: float
    results: list = field(default_factory=list)
    generated: str = ""

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


# ---------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def suite_config(cfg: dict) -> dict:
    unknown = set(cfg) - {"spectral"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    spec = cfg.get("spectral", {})
    if not isinstance(spec, dict):
        raise ConfigError("'spectral' must be an object")
    unknown = set(spec) - set(checks.SPECTRAL_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown spectral keys: {sorted(unknown)}")
    for k, v in spec.items():
        want = type(checks.SPECTRAL_DEFAULTS[k])
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            continue
        if not isinstance(v, want) or isinstance(v, bool):
            raise ConfigError(f"spectral.{k} must be {want.__name__}")
    return spec


_FUNCS = {name: getattr(np, name) for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "abs")}
_CONSTS = {"pi": np.pi, "e": np.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant, ast.Load,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def parse_expr(src: str, variables=("x",)):
    """Compile a numpy expression in the given variables; only arithmetic and elementary functions."""
    if not isinstance(src, str):
        raise ConfigError(f"expression must be a string, got {src!r}")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {src!r}: {exc.msg}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {src!r}")
        if isinstance(node, ast.Name) and node.id not in (*variables, *_FUNCS, *_CONSTS):
            raise ConfigError(f"unknown name {node.id!r} in {src!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"only elementary functions may be called in {src!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"only numeric constants allowed in {src!r}")
    code = compile(tree, "<config>", "eval")

    def f(*args):
        env = {"__builtins__": {}, **_FUNCS, **_CONSTS, **dict(zip(variables, args))}
        return np.broadcast_to(eval(code, env), np.shape(args[0])).astype(float)

    return f


def _get(cfg, key, kind, default):
    v = cfg.get(key, default)
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or isinstance(v, bool):
        raise ConfigError(f"{key} must be {getattr(kind, '__name__', kind)}")
    return v


CIRCLE_KEYS = {"N", "g", "h", "holonomy", "isometry", "shift", "gammaF", "family", "mode", "power", "convergence"}
TORUS_KEYS = {"N", "h", "isometry", "family", "mode"}


def _family_cfg(cfg, case, cases):
    fam = cfg.get("family", {})
    if not isinstance(fam, dict) or set(fam) - {"case", "direction", "step"}:
        raise ConfigError("family must be an object with keys case, direction, step")
    case = case or fam.get("case", "hF")
    if case not in cases:
        raise ConfigError(f"family case must be one of {cases}")
    return case, fam.get("direction", "1"), _get(fam, "step", float, 1e-4)


def circle_family(cfg: dict, gamma: str | None = None, case: str | None = None):
    """(family(eps, N=None) -> CircleModel, case, step) from a circle config; variations are exp(eps v)."""
    from .spectral import CircleModel

    unknown = set(cfg) - CIRCLE_KEYS
    if unknown:
        raise ConfigError(f"unknown circle keys: {sorted(unknown)}")
    N0 = _get(cfg, "N", int, 512)
    g = parse_expr(cfg.get("g", "1"))
    hs = cfg.get("h", "1")
    hs = [hs] if isinstance(hs, str) else hs
    hol = cfg.get("holonomy", 0.0)
    hol = [hol] if isinstance(hol, (int, float)) else hol
    if not isinstance(hs, list) or not isinstance(hol, list):
        raise ConfigError("h and holonomy must be a value or a list (one entry per rank)")
    m = max(len(hs), len(hol))
    hs, hol = (hs * m if len(hs) == 1 else hs), (hol * m if len(hol) == 1 else hol)
    if len(hs) != m or len(hol) != m:
        raise ConfigError("h and holonomy lists must have equal length")
    hf = [parse_expr(s) for s in hs]
    U = np.diag(np.exp(1j * np.asarray(hol, dtype=float)))
    gF = np.diag(np.asarray(cfg.get("gammaF", [1.0] * m), dtype=float))
    iso = gamma or _get(cfg, "isometry", str, "identity")
    shift = _get(cfg, "shift", int, 0)
    case, v, step = _family_cfg(cfg, case, ("gTM", "hF"))
    v = parse_expr(v)

    def hmat(x, eps):
        w = np.exp(eps * v(x)) if case == "hF" else 1.0
        return np.stack([np.diag(np.array([f(xi) for f in hf]) * wi) for xi, wi in
                         zip(x, np.broadcast_to(w, x.shape))])

    def family(eps, N=None):
        N = N or N0
        gg = (lambda x: g(x) * np.exp(eps * v(x))) if case == "gTM" else g
        nodes = 2 * np.pi * np.arange(N) / N
        edges = nodes + np.pi / N
        return CircleModel(N, gg(nodes), gg(edges), hmat(nodes, eps), hmat(edges, eps), U=U, isometry=iso,
                           shift=shift, gammaF=gF)

    return family, case, step


def torus_family(cfg: dict, gamma: str | None = None):
    from .spectral import TorusModel

    unknown = set(cfg) - TORUS_KEYS
    if unknown:
        raise ConfigError(f"unknown torus keys: {sorted(unknown)}")
    N = _get(cfg, "N", int, 32)
    h = parse_expr(cfg.get("h", "1"), ("x", "y"))
    iso = gamma or _get(cfg, "isometry", str, "minus_id")
    _, v, step = _family_cfg(cfg, None, ("hF",))
    v = parse_expr(v, ("x", "y"))
    return (lambda eps: TorusModel.from_function(N, lambda x, y: h(x, y) * np.exp(eps * v(x, y)), iso)), step


# ---------------------------------------------------------------------------
# suites and reports


def run_suite(name: str, seed: int, config: dict | None = None, tolerance_scale: float = 1.0) -> SuiteResult:
    if name not in SUITE_NAMES:
        raise ValueError(f"unknown suite {name!r}")
    spec = suite_config(config or {})
    names = [n for n in SUITE_NAMES if n != "all"] if name == "all" else [name]
    out = SuiteResult(name, seed, tolerance_scale, generated=_dt.datetime.now(_dt.timezone.utc).isoformat())
    for n in names:
        for fn in checks.SUITES[n]:
            out.results.append(checks.run_check(fn, seed, tolerance_scale, spec))
    return out


def _run_info(res: SuiteResult) -> dict:
    # the only field that varies between identical runs
    return {"generated": res.generated, "runtime_ms": {r.check_id: round(r.runtime_ms, 3) for r in res.results}}


def _rows(res: SuiteResult):
    for r in res.results:
        yield {"suite": res.suite, "seed": res.seed, "check_id": r.check_id, "status": "pass" if r.passed else "fail",
               "error": r.error, "tolerance": r.tolerance, "detail": r.detail}


def emit_report(res: SuiteResult, fmt: str = "json", path=None) -> str:
    if fmt == "json":
        doc = {"run_info": _run_info(res), "suite": res.suite, "seed": res.seed,
               "tolerance_scale": res.tolerance_scale, "passed": res.passed,
               "checks": [{k: v for k, v in row.items() if k not in ("suite", "seed")} for row in _rows(res)]}
        text = json.dumps(doc, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        buf.write("# run_info " + json.dumps(_run_info(res)) + "\n")
        w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in _rows(res):
            w.writerow({**row, "error": repr(row["error"]), "tolerance": repr(row["tolerance"])})
        text = buf.getvalue()
    elif fmt == "text":
        rows = list(_rows(res))
        wid = max([len(r["check_id"]) for r in rows] + [5])
        lines = [f"run_info: {json.dumps(_run_info(res))}",
                 f"suite {res.suite}  seed {res.seed}  tolerance-scale {res.tolerance_scale}",
                 f"{'check':<{wid}}  status  {'error':>10}  {'tolerance':>10}  detail"]
        for r in rows:
            lines.append(f"{r['check_id']:<{wid}}  {r['status'].upper():<6}  {r['error']:>10.3e}  "
                         f"{r['tolerance']:>10.3e}  {r['detail']}")
        lines.append(f"{sum(r['status'] == 'pass' for r in rows)}/{len(rows)} passed")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"format must be one of {FORMATS}")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(text: str) -> SuiteResult:
    """Inverse of emit_report(..., 'json')."""
    doc = json.loads(text)
    times = doc["run_info"]["runtime_ms"]
    res = SuiteResult(doc["suite"], doc["seed"], doc["tolerance_scale"], generated=doc["run_info"]["generated"])
    for c in doc["checks"]:
        res.results.append(checks.CheckResult(c["check_id"], c["status"] == "pass", c["error"], c["tolerance"],
                                              times[c["check_id"]], c["detail"]))
    return res


def _write(text: str, out) -> None:
    if out is None:
        click.echo(text, nl=False)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise click.FileError(str(out), hint=str(exc)) from exc


# ---------------------------------------------------------------------------
# commands


@click.group()
def main():
    """Equivariant Ray-Singer metric verification toolkit."""


@main.command()
@click.argument("name", type=click.Choice(SUITE_NAMES))
@click.option("--seed", type=int, required=True, help="Seed for randomized checks.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="JSON config.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report path (stdout if omitted).")
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="text")
@click.option("--tolerance-scale", type=float, default=1.0, show_default=True,
              help="Multiplier for numeric tolerances.")
def suite(name, seed, config_path, out, fmt, tolerance_scale):
    """Run a verification suite; exit code 0 iff every check passes."""
    try:
        res = run_suite(name, seed, load_config(config_path), tolerance_scale)
    except ConfigError as exc:
        raise click.BadParameter(str(exc), param_hint="--config") from exc
    _write(emit_report(res, fmt), out)
    raise SystemExit(0 if res.passed else 1)


@main.group()
def spectral():
    """Discrete anomaly experiments."""


def _spectral_output(doc: dict, fmt: str, out) -> None:
    if fmt == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in doc["result"].items():
            w.writerow([k, repr(v) if isinstance(v, float) else v])
        if "convergence" in doc:
            w.writerow([])
            w.writerow(["N", "log_tau", "richardson"])
            c = doc["convergence"]
            ext = [""] + [repr(x) for x in c["extrapolation"]]
            for N, val, e in zip(c["N"], c["value"], ext):
                w.writerow([N, repr(val), e])
        text = buf.getvalue()
    _write(text, out)


def _spectral_run(run, fmt, report):
    from .spectral import ConstantKernelViolation, IllConditioned, InvarianceError

    t = time.perf_counter()
    try:
        doc = run()
    except (ConfigError, InvarianceError, ConstantKernelViolation, IllConditioned, ValueError) as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc
    doc = {"run_info": {"generated": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                        "runtime_ms": round(1000 * (time.perf_counter() - t), 3)}, **doc}
    _spectral_output(doc, fmt, report)


@spectral.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--gamma", type=click.Choice(["identity", "rotation", "reflection"]), default=None,
              help="Overrides the config isometry.")
@click.option("--vary", type=click.Choice(["gTM", "hF"]), default=None, help="Overrides the family case.")
@click.option("--mode", type=click.Choice(["exact", "window", "sector"]), default=None)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def circle(config_path, gamma, vary, mode, report, fmt):
    """Finite-difference anomaly on the discrete circle against the fixed-point formula."""
    from .spectral import anomaly_experiment, convergence_table, log_torsion

    def run():
        cfg = load_config(config_path)
        family, case, step = circle_family(cfg, gamma, vary)
        m = mode or _get(cfg, "mode", str, "window")
        power = _get(cfg, "power", int, 1)
        rep = anomaly_experiment(family, case, power, step, m)
        doc = {"config": cfg, "result": rep.as_dict()}
        if "convergence" in cfg:
            Ns = cfg["convergence"]
            tm = "window" if m == "sector" else m
            doc["convergence"] = convergence_table(lambda N: family(0.0, N), Ns,
                                                   lambda dc: log_torsion(dc, power, tm))
        return doc

    _spectral_run(run, fmt, report)


@spectral.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--gamma", type=click.Choice(["identity", "minus_id"]), default=None)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def torus(config_path, gamma, report, fmt):
    """Finite-difference anomaly on the flat discrete torus (sector log-determinants)."""
    from .spectral import anomaly_experiment

    def run():
        cfg = load_config(config_path)
        family, step = torus_family(cfg, gamma)
        mode = _get(cfg, "mode", str, "sector")
        return {"config": cfg, "result": anomaly_experiment(family, "hF", 1, step, mode).as_dict()}

    _spectral_run(run, fmt, report)


@main.group()
def chernweil():
    """Chern-Weil forms from ingested curvature data."""


@chernweil.command()
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON with key R: nested n^4 list, R[i][j][k][l] = R_ijkl.")
def euler(input_path):
    """Euler density Pf[R/2 pi] of an algebraic curvature tensor."""
    from .chern_weil import curvature_matrix, euler_form

    try:
        R = np.asarray(json.loads(Path(input_path).read_text())["R"], dtype=float)
        value = float(euler_form(curvature_matrix(R)).value.top())
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"bad curvature input: {exc}") from exc
    click.echo(json.dumps({"n": int(R.shape[0]), "euler_density": value}))
