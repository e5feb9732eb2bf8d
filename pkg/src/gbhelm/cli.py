"""Command-line front end: ``gbhelm {trace,beam,validate-example,convergence}``.

Every command reads a JSON config validated against ``data/config.schema.json``
and writes plain-text outputs whose first line carries the config's sha256.
Exit codes: 0 success, 1 bad config or arguments, 2 non-trapping not
certified, 3 acceptance gate failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, GBError, NonTrappingUncertain

log = logging.getLogger("gbhelm")

EXIT_OK, EXIT_CONFIG, EXIT_TRAPPING, EXIT_ACCEPTANCE = 0, 1, 2, 3

DEFAULTS = {
    "alpha": 0.0,
    "trace": {"samples": 16, "s_max": 50.0, "step": 2e-3},
    "beam": {"step": 1e-3},
    "quadrature": {"n_quad": 8, "panel_width": None, "eta": None, "step": 1e-3},
    "grid": {"points_per_wavelength": 10, "radius": None},
    "branch": "auto",
    "output": "out",
}

EXAMPLE_SLOPE_MAX = -0.9
EXAMPLE_R2_MIN = 0.98


def load_schema():
    return json.loads(resources.files("gbhelm").joinpath("data/config.schema.json").read_text())


def load_config(path=None, text=None):
    """Parse and validate a config; returns (config dict with defaults, sha256 of the raw text)."""
    import jsonschema

    if text is None:
        if path is None:
            raise ConfigError("no config given")
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc
    cfg = {}
    for key, val in DEFAULTS.items():
        cfg[key] = {**val, **raw.get(key, {})} if isinstance(val, dict) else raw.get(key, val)
    for key in ("medium", "source", "k_list", "expect_slope"):
        if key in raw:
            cfg[key] = raw[key]
    return cfg, hashlib.sha256(text.encode()).hexdigest()


def _medium(cfg):
    from .medium import MediumModel

    try:
        return MediumModel.from_dict(cfg["medium"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"medium: {exc}") from exc


def _source(cfg, dim):
    from .source import SourceSpec

    if "source" not in cfg:
        raise ConfigError("this command needs a 'source' block")
    try:
        spec = SourceSpec.from_dict(cfg["source"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"source: {exc}") from exc
    if spec.dim != dim:
        raise ConfigError(f"source dimension {spec.dim} does not match medium dimension {dim}")
    return spec


def parse_k_list(text):
    try:
        ks = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--k: {exc}") from exc
    return ks


def _k_list(cfg, override):
    ks = parse_k_list(override) if override is not None else list(cfg.get("k_list", []))
    if not ks:
        raise ConfigError("k_list is empty")
    if any(not k > 0 for k in ks):
        raise ConfigError("every k must be positive")
    return sorted(ks)


def _header(digest, command):
    return [f"config-sha256 {digest}", f"command {command}"]


def _write(out: Path, name, text):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    log.info("wrote %s", out / name)


def _gnuplot(head, csv_name, title, ylabel, column=2, logscale=True):
    lines = [f"# {h}" for h in head] + [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        "set xlabel 'k'",
        f"set ylabel '{ylabel}'",
    ]
    if logscale:
        lines.append("set logscale xy")
    lines.append(f"plot '{csv_name}' using 1:{column} with linespoints")
    return "\n".join(lines) + "\n"


def _map(threads, fn, items):
    """Ordered map; results (and hence outputs) do not depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(v) for v in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- commands -----------------------------------------------------------------

def cmd_trace(cfg, digest, out: Path, threads=1):
    """Non-trapping report plus one CSV per sampled ray (s, x, p, H, H - H0)."""
    from .medium import certify_nontrapping
    from .raytrace import integrate_bicharacteristic

    m = _medium(cfg)
    t = cfg["trace"]
    head = _header(digest, "trace")
    try:
        report = certify_nontrapping(m, t["samples"], t["s_max"], step=t["step"])
    except NonTrappingUncertain as exc:
        _write(out, "nontrapping.json", json.dumps({"header": head, **exc.report.to_dict()}, indent=2))
        raise
    _write(out, "nontrapping.json", json.dumps({"header": head, **report.to_dict()}, indent=2))

    def one(i):
        ray = integrate_bicharacteristic(m, report.x0[i], report.p0[i], (0.0, report.escape_s[i]),
                                         t["step"])
        return ray.to_csv(head + [f"ray {i}"])

    for i, text in enumerate(_map(threads, one, list(range(report.samples)))):
        _write(out, f"ray_{i:03d}.csv", text)
    return EXIT_OK


def cmd_beam(cfg, digest, out: Path, k_override=None, threads=1):
    """One first-order beam: node table CSV and |u| on a grid through the launch point."""
    from .beam import beam_field, build_first_order_beam
    from .source import initial_hessian
    from .superpose import write_field

    m = _medium(cfg)
    d = m.dim
    b = cfg["beam"]
    x0 = np.asarray(b.get("x0", [-0.5 * m.R] + [0.0] * (d - 1)), dtype=float)
    e = np.asarray(b.get("direction", [1.0] + [0.0] * (d - 1)), dtype=float)
    if x0.shape != (d,) or e.shape != (d,) or not np.linalg.norm(e) > 0:
        raise ConfigError("beam.x0 and beam.direction must be nonzero vectors of the medium dimension")
    p0 = np.sqrt(m.n2(x0)) * e / np.linalg.norm(e)
    beam = build_first_order_beam(m, x0, p0, initial_hessian(m, x0, p0), alpha=cfg["alpha"],
                                  step=b["step"], eta=b.get("eta"))
    head = _header(digest, "beam")
    _write(out, "beam.csv", beam.to_csv(head))
    k = _k_list(cfg, k_override)[0]
    h = 2 * np.pi / k / cfg["grid"]["points_per_wavelength"]
    R = cfg["grid"]["radius"] or m.R
    n = int(np.ceil(2 * R / h))
    ax = -R + (2 * R / n) * (np.arange(n) + 0.5)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    if d == 3:
        pts = np.column_stack([pts, np.full(len(pts), x0[2])])
    u = beam_field(beam, pts, k)
    bounds = [(-R, R), (-R, R)] + ([(x0[2], x0[2])] if d == 3 else [])
    _write(out, "beam_field.txt", write_field(pts, u, k, bounds, (n, n) + ((1,) if d == 3 else ()), head))
    return EXIT_OK


def example_errors(ks):
    """|example5_quadrature(x) - eval_beam(x)| at x = (1, 0, 0) for each k."""
    from .beam import build_first_order_beam, eval_beam
    from .medium import MediumModel
    from .reference import example5_quadrature

    m = MediumModel(kind="constant", R=1.0, dim=3)
    P = np.diag([0.0, 1.0, 1.0])
    beam = build_first_order_beam(m, np.zeros(3), np.array([1.0, 0, 0]), 1j * P, s_span=(-1.0, 1.0))
    x = np.array([1.0, 0.0, 0.0])
    rows = []
    for k in ks:
        q = example5_quadrature(x, k)
        v = eval_beam(beam, x, k).value
        rows.append((k, q, v, abs(q - v)))
    return rows


def cmd_validate_example(ks, digest, out: Path):
    """Table of the oscillatory-integral oracle against the closed-form beam, with a slope gate."""
    from .analysis import fit_slope

    if any(not k > 0 for k in ks):
        raise ConfigError("every k must be positive")
    rows = example_errors(ks)
    head = _header(digest, "validate-example")
    lines = [f"# {h}" for h in head] + ["k,re_quadrature,im_quadrature,re_beam,im_beam,abs_err"]
    lines += [f"{k:.10g},{q.real:.15e},{q.imag:.15e},{v.real:.15e},{v.imag:.15e},{e:.15e}"
              for k, q, v, e in rows]
    _write(out, "example.csv", "\n".join(lines) + "\n")
    result = {"header": head, "k": [r[0] for r in rows], "err": [r[3] for r in rows]}
    status = EXIT_OK
    if len(rows) >= 3:
        rep = fit_slope([r[0] for r in rows], [r[3] for r in rows])
        passed = rep.slope <= EXAMPLE_SLOPE_MAX and rep.r2 >= EXAMPLE_R2_MIN
        result.update(slope=rep.slope, r2=rep.r2, passed=passed)
        print(f"slope {rep.slope:.4f}  r2 {rep.r2:.4f}  "
              f"(gate: slope <= {EXAMPLE_SLOPE_MAX}, r2 >= {EXAMPLE_R2_MIN})  {'PASS' if passed else 'FAIL'}")
        status = EXIT_OK if passed else EXIT_ACCEPTANCE
    else:
        result.update(slope=None, r2=None, passed=None,
                      note="slope not fitted: fewer than 3 k values")
        print("slope: not fitted (fewer than 3 k values)")
    for k, _q, _v, e in rows:
        print(f"k={k:<8g} err={e:.3e}")
    _write(out, "example.json", json.dumps(result, indent=2))
    _write(out, "example.gp", _gnuplot(head, "example.csv", "oscillatory integral vs beam", "error", column=6))
    return status


def cmd_convergence(cfg, digest, out: Path, k_override=None, threads=1):
    """Exact-reference error (2D constant medium) or the residual indicator, per k."""
    from .analysis import fit_slope, residual_indicator, superposition_error
    from .errors import MediumNotConstant

    m = _medium(cfg)
    spec = _source(cfg, m.dim)
    ks = _k_list(cfg, k_override)
    q, g = cfg["quadrature"], cfg["grid"]
    branch = cfg["branch"]
    if branch in ("auto", "exact"):
        try:
            if not m.is_constant:
                raise MediumNotConstant("the exact reference needs a constant medium")
            if m.dim != 2:
                raise MediumNotConstant("the exact reference is gridded in two dimensions only")
            branch = "exact"
        except MediumNotConstant as exc:
            log.warning("%s; using the residual indicator", exc)
            branch = "indicator"
    kw = dict(n_quad=q["n_quad"], eta=q["eta"], step=q["step"],
              points_per_wavelength=g["points_per_wavelength"])

    def run(k):
        if branch == "exact":
            return superposition_error(m, spec, k, radius=g["radius"], **kw)
        return residual_indicator(m, spec, k, **kw)

    rows = _map(threads, run, ks)
    key = "err" if branch == "exact" else "indicator"
    errs = [r[key] for r in rows]
    head = _header(digest, f"convergence ({branch})")
    lines = [f"# {h}" for h in head] + [f"k,{key},beams,points"]
    lines += [f"{r['k']:.10g},{r[key]:.15e},{r['beams']},{r['points']}" for r in rows]
    _write(out, "convergence.csv", "\n".join(lines) + "\n")
    result = {"header": head, "branch": branch, "k": ks, key: errs}
    status = EXIT_OK
    if len(ks) >= 3:
        rep = fit_slope(ks, errs)
        result.update(slope=rep.slope, intercept=rep.intercept, r2=rep.r2)
        print(f"{branch}: slope {rep.slope:.4f}  r2 {rep.r2:.4f}")
        gate = cfg.get("expect_slope")
        if gate is not None:
            passed = abs(rep.slope - gate["target"]) <= gate["tol"]
            result["passed"] = passed
            print(f"gate: slope {gate['target']} +- {gate['tol']}  {'PASS' if passed else 'FAIL'}")
            status = EXIT_OK if passed else EXIT_ACCEPTANCE
    else:
        result.update(slope=None, note="slope not fitted: fewer than 3 k values")
    for k, e in zip(ks, errs):
        print(f"k={k:<8g} {key}={e:.3e}")
    _write(out, "convergence.json", json.dumps(result, indent=2))
    _write(out, "convergence.gp", _gnuplot(head, "convergence.csv", f"convergence ({branch})", key))
    return status


# --- entry point ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="gbhelm", description="Gaussian-beam Helmholtz experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, needs_config in (("trace", True), ("beam", True), ("validate-example", False),
                               ("convergence", True)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=needs_config, help="experiment JSON")
        sp.add_argument("--out", help="output directory (default: config 'output' or ./out)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
        sp.add_argument("--k", help="comma-separated k list overriding the config")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.config is not None:
            cfg, digest = load_config(args.config)
        else:
            cfg, digest = dict(DEFAULTS), hashlib.sha256(b"").hexdigest()
        out = Path(args.out or cfg["output"])
        if args.command == "trace":
            return cmd_trace(cfg, digest, out, args.threads)
        if args.command == "beam":
            return cmd_beam(cfg, digest, out, args.k, args.threads)
        if args.command == "validate-example":
            ks = parse_k_list(args.k) if args.k is not None else list(cfg.get("k_list", [25, 50, 100, 200]))
            if not ks:
                raise ConfigError("k_list is empty")
            return cmd_validate_example(sorted(ks), digest, out)
        return cmd_convergence(cfg, digest, out, args.k, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonTrappingUncertain as exc:
        print(f"non-trapping not certified: {exc}", file=sys.stderr)
        return EXIT_TRAPPING
    except GBError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
