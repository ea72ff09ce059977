"""Command-line harness: ``roughsko <subcommand> --config <path> [--out DIR] [--seed N] [--threads N]``."""
import argparse
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cameron_martin import Indicator, SampledCM, cm_inner, cm_tensor_norm, embedding_ratio
from .config import ConfigError, build_field, build_model, load_config
from .conversion import ConversionSetup, convert_paths
from .export import (read_csv, write_csv, write_increments_csv, write_sample_csv,
                     write_samples_binary)
from .gaussian import sample_array
from .lift import lift_piecewise_linear
from .rde import MalliavinKernel, solve_jacobian, solve_rde
from .skorohod import compensated_second_level, skorohod_from_kernel, skorohod_riemann
from .variation import PathGrid, Partition
from .young import isometry_rhs_per_sample

SUBCOMMANDS = ("sample", "lift", "solve", "convert", "second-level", "isometry", "cm-norm", "report")
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _grid(cfg, exponent):
    return Partition.dyadic(exponent, cfg.T)


def _chunks(cfg):
    return [(s, min(cfg.chunk, cfg.samples - s)) for s in range(0, cfg.samples, cfg.chunk)]


def _draw(cfg, model, grid, start, count, d=None):
    return sample_array(model, grid, cfg.d if d is None else d, count, cfg.seed, start)


def _finite_rows(arr):
    return np.all(np.isfinite(arr.reshape(arr.shape[0], -1)), axis=1)


def _work_convert(cfg, start, count):
    model, V = build_model(cfg), build_field(cfg)
    fine = _grid(cfg, cfg.fine)
    setup = ConversionSetup(model, V, np.array(cfg.y0), [_grid(cfg, k) for k in cfg.coarse],
                            cfg.p, cfg.corr_method)
    X = _draw(cfg, model, fine, start, count)
    reports = convert_paths(X, fine, setup)
    rows, errors = [], []
    for s in range(count):
        vals = [np.array([r.stratonovich[s], r.skorohod[s], r.ito_term[s], r.correction_2d[s],
                          r.residual[s]]) for r in reports]
        if not all(np.all(np.isfinite(v)) for v in vals):
            errors.append({"sample": start + s, "error": "non-finite RDE state"})
            continue
        for r, v in zip(reports, vals):
            rows.append([start + s, r.n_coarse, r.n_fine] + v.tolist())
    events = {"renormalizations": int(reports[0].diagnostics["renormalizations"])}
    return rows, errors, events


def _work_second_level(cfg, start, count):
    model, V = build_model(cfg), build_field(cfg)
    if V.e != V.d:
        raise ValueError("second-level needs e == d (psi = V(Y) is contracted with X2)")
    fine = _grid(cfg, cfg.fine)
    X = _draw(cfg, model, fine, start, count)
    x = lift_piecewise_linear(X, fine)
    Y = solve_rde(V, x, np.array(cfg.y0), check=False)
    bundle = solve_jacobian(V, x, Y)
    psi = PathGrid(fine, V.value(Y.values))
    rows = []
    for n in (cfg.second_level_coarse or cfg.coarse):
        coarse = _grid(cfg, n)
        comp = compensated_second_level(psi, x, model, coarse)
        sko = skorohod_riemann(Y, bundle, V, x, model, coarse).total
        for s in range(count):
            rows.append([n, start + s, sko[s], comp[s] ** 2, comp[s]])
    return rows, [], {"renormalizations": bundle.renormalizations}


def _work_isometry(cfg, start, count):
    model = build_model(cfg)
    coarse = _grid(cfg, cfg.iso_coarse)
    if cfg.iso_integrand == "terminal":
        X = _draw(cfg, model, coarse, start, count, d=1)
        x = lift_piecewise_linear(X, coarse)
        n = coarse.n_intervals
        Yv = np.repeat(X[:, -1:, :], n + 1, axis=1)
        K = np.ones((count, n + 1, n + 1, 1, 1))
        delta = skorohod_from_kernel(Yv, K, x, model, coarse).total
        rhs = isometry_rhs_per_sample(PathGrid(coarse, Yv), K, model)
        return [[start + s, delta[s], rhs[s]] for s in range(count)], [], {}
    V = build_field(cfg)
    if V.e != V.d:
        raise ValueError("isometry with an RDE integrand needs e == d")
    fine = _grid(cfg, cfg.iso_fine if cfg.iso_fine else cfg.iso_coarse + cfg.min_ratio_exponent)
    X = _draw(cfg, model, fine, start, count)
    x = lift_piecewise_linear(X, fine)
    Y = solve_rde(V, x, np.array(cfg.y0), check=False)
    bundle = solve_jacobian(V, x, Y)
    delta = skorohod_riemann(Y, bundle, V, x, model, coarse).total
    rhs = isometry_rhs_per_sample(Y.restrict(coarse), MalliavinKernel(bundle, V, coarse), model)
    return [[start + s, delta[s], rhs[s]] for s in range(count)], [], {}


def _work_sample(cfg, start, count):
    model = build_model(cfg)
    fine = _grid(cfg, cfg.fine)
    return _draw(cfg, model, fine, start, count), [], {}


def _work_solve(cfg, start, count):
    model, V = build_model(cfg), build_field(cfg)
    fine = _grid(cfg, cfg.fine)
    x = lift_piecewise_linear(_draw(cfg, model, fine, start, count), fine)
    Y = solve_rde(V, x, np.array(cfg.y0), check=False)
    bundle = solve_jacobian(V, x, Y)
    return (Y.values, bundle.J, bundle.Jinv), [], {"renormalizations": bundle.renormalizations}


WORKERS = {
    "convert": _work_convert,
    "second-level": _work_second_level,
    "isometry": _work_isometry,
    "sample": _work_sample,
    "lift": _work_sample,
    "solve": _work_solve,
}


def _safe(kind, cfg, start, count):
    try:
        return WORKERS[kind](cfg, start, count)
    except Exception as exc:  # guard failures become error records; the batch continues
        return None, [{"samples": f"{start}-{start + count - 1}", "error": f"{type(exc).__name__}: {exc}"}], {}


def _run_chunks(kind, cfg, threads):
    jobs = _chunks(cfg)
    if threads <= 1 or len(jobs) == 1:
        return [_safe(kind, cfg, s, c) for s, c in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_safe, kind, cfg, s, c) for s, c in jobs]
        return [f.result() for f in futures]


class Run:
    def __init__(self, kind, cfg, out, threads):
        self.kind, self.cfg, self.out, self.threads = kind, cfg, Path(out), threads
        self.errors, self.events, self.outputs = [], [], []
        self.summary = {}
        self.t0 = time.time()
        self.comment = f"roughsko {__version__} config_sha256={cfg.sha256} seed={cfg.seed}"

    def csv(self, name, columns, rows):
        path = write_csv(self.out / name, columns, rows, self.comment)
        self.outputs.append(str(path))
        return path

    def collect(self, results):
        payloads = []
        for payload, errors, events in results:
            self.errors.extend(errors)
            if events:
                self.events.append(events)
            if payload is not None:
                payloads.append(payload)
        return payloads

    def manifest(self):
        cfg = self.cfg
        data = {
            "version": __version__,
            "subcommand": self.kind,
            "config": cfg.source,
            "config_sha256": cfg.sha256,
            "config_echo": cfg.echo,
            "seed": cfg.seed,
            "threads": self.threads,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "elapsed_seconds": round(time.time() - self.t0, 3),
            "guard_events": self.events,
            "errors": self.errors,
            "summary": self.summary,
            "outputs": self.outputs,
        }
        path = self.out / f"{self.kind}_manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, default=float) + "\n", encoding="utf-8")
        if self.errors:
            write_csv(self.out / f"{self.kind}_errors.csv", ["samples", "error"],
                      [[str(e.get("samples", e.get("sample"))), e["error"]] for e in self.errors],
                      self.comment)
        return EXIT_PARTIAL if self.errors else 0


def cmd_convert(run):
    rows = [r for chunk in run.collect(_run_chunks("convert", run.cfg, run.threads)) for r in chunk]
    run.csv("convert.csv", ["seed", "n_coarse", "n_fine", "strat", "skorohod", "ito", "corr2d", "residual"], rows)
    run.summary = _residual_summary(rows)


def cmd_second_level(run):
    rows = [r for chunk in run.collect(_run_chunks("second-level", run.cfg, run.threads)) for r in chunk]
    rows.sort(key=lambda r: (r[0], r[1]))
    run.csv("second_level.csv", ["n", "sample_id", "skorohod_total", "compensated_l2", "compensated"], rows)
    summary = []
    for n in sorted({r[0] for r in rows}):
        sub = np.array([r[2:] for r in rows if r[0] == n])
        summary.append([n, sub.shape[0], float(np.sqrt(np.mean(sub[:, 1]))),
                        float(np.mean(sub[:, 0])), float(np.std(sub[:, 0], ddof=1) / np.sqrt(sub.shape[0]))
                        if sub.shape[0] > 1 else float("nan")])
    run.csv("second_level_summary.csv", ["n", "count", "l2", "skorohod_mean", "skorohod_se"], summary)
    run.summary = {"l2": {int(s[0]): s[2] for s in summary}}


def cmd_isometry(run):
    rows = [r for chunk in run.collect(_run_chunks("isometry", run.cfg, run.threads)) for r in chunk]
    run.csv("isometry.csv", ["sample_id", "skorohod_total", "rhs"], rows)
    if len(rows) > 1:
        a = np.array(rows)
        var, rhs = float(np.var(a[:, 1], ddof=1)), float(np.mean(a[:, 2]))
        gap = abs(var - rhs) / abs(rhs) if rhs else float("nan")
        run.csv("isometry_summary.csv", ["n", "count", "var_delta", "mean_rhs", "rel_gap"],
                [[2 ** run.cfg.iso_coarse, a.shape[0], var, rhs, gap]])
        run.summary = {"var_delta": var, "mean_rhs": rhs, "rel_gap": gap}


def cmd_sample(run):
    cfg = run.cfg
    fine = _grid(cfg, cfg.fine)
    arrays = run.collect(_run_chunks("sample", cfg, run.threads))
    if not arrays:
        return
    values = np.concatenate(arrays)
    if cfg.out_format in ("csv", "both"):
        for k in range(values.shape[0]):
            path = write_sample_csv(run.out / "samples" / f"draw_{k:05d}.csv", fine.times, values[k], run.comment)
            run.outputs.append(str(path))
    if cfg.out_format in ("binary", "both"):
        run.outputs.append(str(write_samples_binary(run.out / "samples.bin", fine.times, values)))


def cmd_lift(run):
    cfg = run.cfg
    fine = _grid(cfg, cfg.fine)
    arrays = run.collect(_run_chunks("lift", cfg, run.threads))
    if not arrays:
        return
    x = lift_piecewise_linear(np.concatenate(arrays), fine)
    for n in cfg.coarse:
        xc = x.coarsen(_grid(cfg, n))
        for k in range(cfg.samples):
            path = write_increments_csv(run.out / "lift" / f"draw_{k:05d}_n{n}.csv", xc[k], run.comment)
            run.outputs.append(str(path))


def cmd_solve(run):
    cfg = run.cfg
    fine = _grid(cfg, cfg.fine)
    payloads = run.collect(_run_chunks("solve", cfg, run.threads))
    if not payloads:
        return
    Y = np.concatenate([p[0] for p in payloads])
    J = np.concatenate([p[1] for p in payloads])
    Jinv = np.concatenate([p[2] for p in payloads])
    e = Y.shape[-1]
    cols = (["t"] + [f"y{a + 1}" for a in range(e)] + [f"J{a + 1}{b + 1}" for a in range(e) for b in range(e)]
            + [f"Jinv{a + 1}{b + 1}" for a in range(e) for b in range(e)])
    final = []
    for k in range(Y.shape[0]):
        rows = np.column_stack([fine.times, Y[k], J[k].reshape(-1, e * e), Jinv[k].reshape(-1, e * e)])
        run.outputs.append(str(write_csv(run.out / "solve" / f"draw_{k:05d}.csv", cols, rows.tolist(), run.comment)))
        final.append([k] + Y[k, -1].tolist() + [float(np.max(np.abs(J[k] @ Jinv[k] - np.eye(e))))])
    run.csv("solve_summary.csv", ["sample_id"] + [f"yT{a + 1}" for a in range(e)] + ["max_jjinv_defect"], final)


def cmd_cm_norm(run):
    cfg = run.cfg
    model = build_model(cfg)
    grid = _grid(cfg, cfg.cm_grid)
    h1, h2 = Indicator(0, cfg.cm_t, cfg.d), Indicator(0, cfg.cm_s, cfg.d)
    rows = [["indicator_inner_closed_form", cm_inner(h1, h2, model)],
            ["indicator_inner_model", float(model(cfg.cm_t, cfg.cm_s))]]
    try:
        grid.index_of([cfg.cm_t, cfg.cm_s])
        q1, q2 = SampledCM(grid, h1.sample(grid)), SampledCM(grid, h2.sample(grid))
        rows.append(["indicator_inner_quadrature", cm_inner(q1, q2, model, grid)])
    except ValueError:
        pass
    if cfg.d > 1:
        rows.append(["indicator_inner_cross_component", cm_inner(h1, Indicator(1, cfg.cm_s, cfg.d), model)])
    ident = SampledCM(grid, grid.times)
    rows.append(["identity_norm_sq", cm_inner(ident, ident, model, grid)])
    tgrid = _grid(cfg, min(cfg.cm_grid, 7))
    ones = np.ones(len(tgrid))
    rows.append(["tensor_norm_indicator", cm_tensor_norm((ones, ones), model, tgrid)])
    try:
        rows.append(["embedding_ratio", embedding_ratio(h1, model, grid)])
    except ValueError:
        pass
    run.csv("cm_norm.csv", ["quantity", "value"], rows)
    run.summary = {name: value for name, value in rows}


def _residual_summary(rows):
    if not rows:
        return {}
    a = np.array(rows, dtype=float)
    table = {}
    for n in sorted({int(v) for v in a[:, 1]}):
        r = np.abs(a[a[:, 1] == n, 7])
        table[n] = {"count": int(r.size), "median": float(np.median(r)),
                    "p90": float(np.percentile(r, 90)), "mean": float(np.mean(r)),
                    "rms": float(np.sqrt(np.mean(r ** 2)))}
    return table


def fit_log2_slope(ns, values):
    """Least-squares slope of log2(values) against the coarse exponent."""
    ns, values = np.asarray(ns, dtype=float), np.asarray(values, dtype=float)
    if ns.size < 2 or np.any(values <= 0):
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(ns, np.log2(values), 1)
    return float(slope), float(intercept)


def cmd_report(run, source=None):
    src = Path(source) if source else run.out / "convert.csv"
    header, raw = read_csv(src)
    want = ["seed", "n_coarse", "n_fine", "strat", "skorohod", "ito", "corr2d", "residual"]
    if header != want:
        raise ConfigError(f"{src}:1: expected columns {','.join(want)}")
    rows = [[float(v) for v in r] for r in raw]
    table = _residual_summary(rows)
    exps = [int(np.log2(n)) for n in table]
    out_rows = [[e, n, t["count"], t["median"], t["p90"], t["mean"], t["rms"]] for e, (n, t) in zip(exps, table.items())]
    run.csv("report.csv", ["exponent", "n_coarse", "count", "median_abs_residual", "p90_abs_residual",
                           "mean_abs_residual", "rms_residual"], out_rows)
    slope, intercept = fit_log2_slope(exps, [t["median"] for t in table.values()])
    run.csv("report_fit.csv", ["quantity", "value"], [["slope_log2_median", slope], ["intercept", intercept]])
    run.summary = {"slope_log2_median": slope, "table": table}
    print("exponent  count  median|res|   p90|res|")
    for r in out_rows:
        print(f"{r[0]:8d}  {r[2]:5d}  {r[3]:.4e}  {r[4]:.4e}")
    print(f"fitted slope (log2 median vs exponent): {slope:.3f}")


COMMANDS = {
    "convert": cmd_convert,
    "second-level": cmd_second_level,
    "isometry": cmd_isometry,
    "sample": cmd_sample,
    "lift": cmd_lift,
    "solve": cmd_solve,
    "cm-norm": cmd_cm_norm,
}


def build_parser():
    p = argparse.ArgumentParser(prog="roughsko", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"roughsko {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment config file")
        s.add_argument("--out", help="output directory (overrides [output] dir)")
        s.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        s.add_argument("--threads", type=int, default=1, help="worker processes")
        if name == "report":
            s.add_argument("--input", help="convert CSV to summarise (default OUT/convert.csv)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if cfg.model == "custom":
            n = np.loadtxt(cfg.table, delimiter=",", comments="#").shape[0]
            if n != 2 ** cfg.fine + 1:
                raise ConfigError(f"{cfg.table}:0: covariance table has {n} rows, fine grid needs {2 ** cfg.fine + 1}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(args.command, cfg, args.out or cfg.out_dir, max(1, args.threads))
    try:
        if args.command == "report":
            cmd_report(run, args.input)
        else:
            COMMANDS[args.command](run)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run.manifest()
    for err in run.errors:
        print(f"warning: {err}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
