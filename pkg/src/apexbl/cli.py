"""Command-line harness: ``apexbl gen | solve | verify | bench``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import files
from .apex import apex_run, convergence_bound_violations, monotone_violations, stop_gap, verify_rate
from .awg import awg
from .baselines import bl, lowerbound_experiment, polyak
from .certificate import gap_bound, verify_certificate, wolfe_gap
from .problems import BudgetExceeded, ChainMaxProblem, CountingOracle, MaxQuadProblem, chain_optimum
from .refsolve import kelley_fstar, maxquad_fstar
from .restart import rapex_known, rapex_unknown

METHODS = ("apex", "rapex_known", "rapex_unknown", "awg", "polyak", "bl", "kelley", "lowerbound")
SUITES = ("table1_small", "lowerbound", "invariants")
DEFAULT_ROOT = "apex_runs"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    instance: str
    method: str
    m: int = 5
    theta: float = 0.75
    beta: float = 1.0
    mu_hat: Optional[float] = None
    mu_star: Optional[float] = None
    level: Optional[float] = None
    delta: Optional[float] = None
    eps: float = 1e-6
    iters: int = 1000
    budget: Optional[int] = None
    f_star: Optional[float] = None
    x0: str = "ones"
    base: str = "gd"
    tol: float = 1e-10
    seed: int = 0
    out: Optional[str] = None
    name: Optional[str] = None

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not 0.5 < self.theta < 1.0:
            raise ConfigError("theta must lie in (1/2, 1)")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        for k in ("mu_hat", "mu_star", "delta"):
            v = getattr(self, k)
            if v is not None and not v > 0:
                raise ConfigError(f"{k} must be positive")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.base not in ("gd", "polyak", "bl"):
            raise ConfigError("base must be gd, polyak or bl")


def output_root(explicit: Optional[str] = None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("APEX_LOG_DIR") or DEFAULT_ROOT)


def reference(o):
    """(f*, x*) when cheaply known for the instance type, else (None, None)."""
    if isinstance(o, MaxQuadProblem):
        r = maxquad_fstar(o)
        return r.f_star, r.x_star
    if isinstance(o, ChainMaxProblem):
        x = chain_optimum(o)
        return float(o(x).f), x
    name = getattr(o, "name", "")
    if name in ("max_sq_lin", "norm_plus_abs"):
        return 0.0, np.zeros(o.dim)
    if name.startswith("exp_linear"):
        M = float(name[name.index(",") + 1:-1])
        return math.exp(-M), np.array([-M])
    return None, None


def parse_x0(spec: str, dim: int) -> np.ndarray:
    if spec == "ones":
        return np.ones(dim)
    if spec == "zeros":
        return np.zeros(dim)
    v = np.array([float(t) for t in spec.split(",")])
    if v.size == 1:
        return np.full(dim, v[0])
    if v.size != dim:
        raise ConfigError(f"x0 has {v.size} entries, instance dimension is {dim}")
    return v


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else v for v in r])


def _num(v):
    if v is None:
        return None
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _abs_err(v, fs):
    return None if fs is None else abs(v - fs)


# ---------------------------------------------------------------- solve


def run_solve(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run one configured method and write its logs; returns (exit code, summary)."""
    cfg.validate()
    o = files.load_instance(cfg.instance)
    outdir = output_root(cfg.out) / (cfg.name or cfg.method)
    outdir.mkdir(parents=True, exist_ok=True)
    f_star, x_star = (cfg.f_star, None) if cfg.f_star is not None else reference(o)
    x0 = parse_x0(cfg.x0, o.dim)
    summary = {"method": cfg.method, "f_final": None, "f_star_if_known": f_star, "gap_bound": None,
               "oracle_calls": 0, "wall_time": None, "final_mu_hat": None, "status": "ok"}
    trace_lines, csv_rows = [], []
    header = ["iteration", "oracle_calls", "f_upper", "f_lower", "abs_err_upper", "abs_err_lower"]
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        if cfg.method in ("rapex_known", "rapex_unknown"):
            if cfg.method == "rapex_known":
                mu = cfg.mu_star or getattr(o, "mu", None)
                if mu is None:
                    raise ConfigError("rapex_known needs --mu-star")
                res = rapex_known(o, x0, mu, cfg.m, cfg.theta, cfg.eps, cfg.budget)
            else:
                res = rapex_unknown(o, x0, cfg.mu_hat or 1.0, cfg.m, cfg.theta, cfg.beta, cfg.eps,
                                    cfg.budget, keep_certificates=False,
                                    on_certificate=_cert_sink(outdir))
            trace_lines = [json.dumps({k: _num(v) for k, v in r.items()}) + "\n" for r in res.runs]
            (outdir / "events.jsonl").write_text(res.events_jsonl())
            for i, e in enumerate(res.events):
                csv_rows.append([i, e["oracle_calls"], e["f_upper"], e["f_lower"],
                                 _abs_err(e["f_upper"], f_star), _abs_err(e["f_lower"], f_star)])
            summary.update(f_final=res.f, f_lower=res.f_lower, gap_bound=res.f - res.f_lower,
                           oracle_calls=res.oracle_calls, final_mu_hat=res.mu_hats[-1] if res.mu_hats else None,
                           status=res.status, outer_iterations=res.outer_iterations,
                           monotone_violations=res.monotone_violations)
            if res.status == "budget":
                code = EXIT_BUDGET
            elif res.status != "converged":
                code = EXIT_FAIL
        elif cfg.method == "apex":
            level = cfg.level if cfg.level is not None else f_star
            if level is None:
                raise ConfigError("apex needs --level or a known optimal value")
            oc = CountingOracle(o, cfg.budget)
            stop = stop_gap(f_star, cfg.eps) if f_star is not None else None
            tr = apex_run(oc, x0, level, cfg.m, cfg.iters, stop=stop)
            trace_lines = [tr.to_jsonl()]
            for r in tr.records:
                csv_rows.append([r["t"], r["oracle_calls"], r["f_hat"], None,
                                 _abs_err(r["f_hat"], f_star), None])
            summary.update(f_final=tr.last["f_hat"], oracle_calls=oc.calls, level=level,
                           monotone_violations=monotone_violations(tr.inner_dists),
                           convergence_bound_violations=convergence_bound_violations(tr))
            if f_star is not None and x_star is not None and level == f_star:
                summary["rate"] = asdict(verify_rate(tr, f_star, x_star))
        elif cfg.method == "awg":
            if cfg.delta is None:
                raise ConfigError("awg needs --delta")
            mu = cfg.mu_hat or getattr(o, "mu", None) or 1.0
            iota = math.sqrt(2.0 * (1.0 + cfg.beta) * cfg.delta / mu)
            oc = CountingOracle(o, cfg.budget)
            out = awg(oc, x0, cfg.delta, cfg.m, iota, cfg.beta)
            trace_lines = [out.trace.to_jsonl()]
            for r in out.trace.records:
                csv_rows.append([r["t"], r["oracle_calls"], r["f_hat"], None,
                                 _abs_err(r["f_hat"], f_star), None])
            summary.update(f_final=float(o(out.x_hat).f), oracle_calls=oc.calls, success=out.success)
            if out.cert is not None:
                V, _, _ = wolfe_gap(out.cert.points, out.cert.center, out.cert.iota)
                summary["gap_bound"] = gap_bound(out.cert.iota, V, mu)
                files.save_certificate(outdir / "certificate.json", out.cert)
        elif cfg.method in ("polyak", "bl"):
            oc = CountingOracle(o, cfg.budget)
            if cfg.method == "polyak":
                if f_star is None:
                    raise ConfigError("polyak needs --f-star")
                tr = polyak(oc, x0, f_star, cfg.iters)
            else:
                level = cfg.level if cfg.level is not None else f_star
                if level is None:
                    raise ConfigError("bl needs --level")
                tr = bl(oc, x0, level, cfg.m, cfg.iters)
            trace_lines = [tr.to_jsonl()]
            for t, f in enumerate(tr.f_values):
                csv_rows.append([t, t + 1, f, None, _abs_err(f, f_star), None])
            summary.update(f_final=min(tr.f_values), oracle_calls=tr.oracle_calls, status=tr.status)
        elif cfg.method == "kelley":
            r = kelley_fstar(o, x0, cfg.tol, mu_lb=cfg.mu_star or getattr(o, "mu", None), max_cuts=cfg.iters)
            summary.update(f_final=r.f_star, f_lower=r.lower, gap_bound=r.gap, oracle_calls=r.cuts_used,
                           radius_used=r.radius_used)
            csv_rows.append([0, r.cuts_used, r.upper, r.lower, _abs_err(r.upper, f_star),
                             _abs_err(r.lower, f_star)])
        elif cfg.method == "lowerbound":
            if not isinstance(o, ChainMaxProblem):
                raise ConfigError("lowerbound needs a chain instance")
            rep = lowerbound_experiment(cfg.base, o, cfg.iters)
            for t, (d2, b) in enumerate(zip(rep.dist2, rep.bound)):
                trace_lines.append(json.dumps({"t": t, "dist2": d2, "bound": b}) + "\n")
            for t, g in enumerate(rep.gaps):
                csv_rows.append([t, t, g + rep_fstar(o), None, abs(g), None])
            summary.update(f_final=rep.gaps[-1] + rep_fstar(o), oracle_calls=rep.oracle_calls,
                           violations=rep.violations, delta_n=rep.delta_n, checked=rep.checked,
                           support_ok=rep.support_ok)
            if rep.violations:
                code = EXIT_FAIL
    except BudgetExceeded as e:
        summary["status"] = "budget"
        summary["error"] = str(e)
        code = EXIT_BUDGET
    except ConfigError:
        raise
    except Exception as e:  # solver failure: keep partial logs
        summary["status"] = "error"
        summary["error"] = f"{type(e).__name__}: {e}"
        code = EXIT_FAIL
    summary["wall_time"] = time.perf_counter() - t0
    (outdir / "trace.jsonl").write_text("".join(trace_lines))
    _write_csv(outdir / "convergence.csv", header, csv_rows)
    summary = {k: _num(v) if not isinstance(v, dict) else v for k, v in summary.items()}
    files.write_json(outdir / "summary.json", summary)
    return code, summary


def rep_fstar(p: ChainMaxProblem) -> float:
    return float(p(chain_optimum(p)).f)


def _cert_sink(outdir: Path):
    cdir = outdir / "certificates"
    count = [0]

    def sink(cert):
        files.save_certificate(cdir / f"cert_{count[0]:05d}.json", cert)
        count[0] += 1
    return sink


# ---------------------------------------------------------------- bench


def _table1_row(job):
    d, L, mh, seed = job
    p = files.build(files.maxquad_spec(d, 50, 1.0, L, seed))
    ref = maxquad_fstar(p)
    t0 = time.perf_counter()
    res = rapex_unknown(p, np.ones(d), mh, 50, 0.75, 1.0, 1e-6, keep_certificates=False)
    wall = time.perf_counter() - t0
    return {"k": 50, "L": L, "mu_hat_1": mh, "mu_hat_S": res.mu_hats[-1],
            "iterations": res.outer_iterations, "obj": res.f, "opt": ref.f_star,
            "error": res.f - ref.f_star, "d": d, "seed": seed, "oracle_calls": res.oracle_calls,
            "min_mu_hat": min(res.mu_hats), "max_lower_excess": max(res.f_lowers) - ref.f_star,
            "status": res.status, "wall_time": wall}


def _lowerbound_row(job):
    method, k, kappa, n = job
    p = ChainMaxProblem(k, n, 1.0, kappa)
    rep = lowerbound_experiment(method, p, 20000)
    return {"method": method, "k": k, "kappa": kappa, "n": n, "q": rep.q, "delta_n": rep.delta_n,
            "checked": rep.checked, "violations": rep.violations, "support_ok": rep.support_ok,
            "final_dist2": rep.dist2[-1]}


def _invariants_row(job):
    seed, mh = job
    p = files.build(files.maxquad_spec(20, 5, 1.0, 10.0, seed))
    ref = maxquad_fstar(p)
    certs = []
    res = rapex_unknown(p, np.ones(20), mh, 5, on_certificate=certs.append, keep_certificates=False)
    bad = 0
    for c in certs:
        rep = verify_certificate(c)
        V = rep.V_measured
        if not rep.valid or float(p(c.center).f) - ref.f_star > gap_bound(c.iota, V, 1.0) + 1e-7:
            bad += 1
    return {"seed": seed, "mu_hat_1": mh, "certificates": len(certs), "certificate_failures": bad,
            "monotone_violations": res.monotone_violations,
            "min_mu_hat": min(res.mu_hats), "max_lower_excess": max(res.f_lowers) - ref.f_star,
            "error": res.f - ref.f_star, "status": res.status}


def _jobs(suite, dims):
    if suite == "table1_small":
        return _table1_row, [(d, L, mh, 0) for d in dims for L in (5.0, 10.0, 100.0, 1000.0)
                             for mh in (1.0, 10.0, 100.0, 1000.0)]
    if suite == "lowerbound":
        return _lowerbound_row, [(meth, k, kap, 200) for k in (1, 2, 4) for kap in (10.0, 100.0)
                                 for meth in ("gd", "polyak", "bl")]
    return _invariants_row, [(seed, mh) for seed in range(5) for mh in (1.0, 10.0, 100.0, 1000.0)]


def run_bench(suite: str, out: Optional[str] = None, workers: int = 1, dims=(50, 300)) -> tuple[int, Path]:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}")
    fn, jobs = _jobs(suite, dims)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(fn, jobs))  # map keeps the configured order
    else:
        rows = [fn(j) for j in jobs]
    root = output_root(out) / "bench"
    if suite == "table1_small":
        main = ["k", "L", "mu_hat_1", "mu_hat_S", "iterations", "obj", "opt", "error"]
        _write_csv(root / "table1.csv", main, [[r[c] for c in main] for r in rows])
        cols = list(rows[0])
        _write_csv(root / "table1_details.csv", cols, [[r[c] for c in cols] for r in rows])
        path = root / "table1.csv"
        ok = all(abs(r["error"]) <= 1e-5 for r in rows)
    else:
        cols = list(rows[0])
        path = root / f"{suite}.csv"
        _write_csv(path, cols, [[r[c] for c in cols] for r in rows])
        if suite == "lowerbound":
            ok = all(r["violations"] == 0 for r in rows)
        else:
            ok = all(r["certificate_failures"] == 0 and r["monotone_violations"] == 0 for r in rows)
    return (EXIT_OK if ok else EXIT_FAIL), path


# ---------------------------------------------------------------- verify


def run_verify(cert_path: str, instance: str) -> int:
    try:
        cert = files.load_certificate(cert_path)
        o = files.load_instance(instance)
    except files.FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if cert.center.size != o.dim:
        print("error: certificate dimension does not match the instance", file=sys.stderr)
        return EXIT_USAGE
    rep = verify_certificate(cert)
    consistent = all(abs(o(c.z).f - c.fz) <= 1e-9 * (1.0 + abs(c.fz)) for c in cert.points)
    print(f"V = {rep.V_measured:.12g}  nu = {rep.nu:.12g}  contained = {rep.contained}  "
          f"oracle-consistent = {consistent}")
    return EXIT_OK if rep.valid and consistent else EXIT_FAIL


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apexbl", description="Accelerated bundle-level solvers and benchmarks.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write an instance file")
    g.add_argument("kind", choices=("maxquad", "chain"))
    g.add_argument("--d", type=int, default=50)
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--L", type=float, default=10.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--shared-eigvecs", action="store_true")
    g.add_argument("--literal", action="store_true", help="store dense matrices instead of generator parameters")
    g.add_argument("-o", "--output", required=True)

    s = sub.add_parser("solve", help="run one method")
    s.add_argument("--instance", required=True, help="instance file or inline JSON")
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--theta", type=float, default=0.75)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--mu-hat", type=float)
    s.add_argument("--mu-star", type=float)
    s.add_argument("--level", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--iters", type=int, default=1000, help="iteration cap (cut cap for kelley)")
    s.add_argument("--budget", type=int)
    s.add_argument("--f-star", type=float)
    s.add_argument("--x0", default="ones", help="ones, zeros, a scalar, or comma-separated values")
    s.add_argument("--base", default="gd", choices=("gd", "polyak", "bl"), help="method for lowerbound")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output root (default: $APEX_LOG_DIR or ./apex_runs)")
    s.add_argument("--name", help="run directory name (default: the method)")

    v = sub.add_parser("verify", help="check a certificate file")
    v.add_argument("certificate")
    v.add_argument("instance")

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", choices=SUITES)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--dims", default="50,300", help="dimensions for table1_small")
    b.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.cmd == "gen":
            if args.kind == "maxquad":
                spec = files.maxquad_spec(args.d, args.k, args.mu, args.L, args.seed, args.shared_eigvecs)
                if args.literal:
                    spec = files.literal_spec(files.build(spec))
            else:
                spec = files.chain_spec(args.k, args.n, args.mu, args.L)
            files.write_json(args.output, spec)
            return EXIT_OK
        if args.cmd == "solve":
            keys = {f for f in ExperimentConfig.__dataclass_fields__}
            cfg = ExperimentConfig(**{k: v for k, v in vars(args).items() if k in keys})
            code, summary = run_solve(cfg)
            print(json.dumps(summary))
            return code
        if args.cmd == "verify":
            return run_verify(args.certificate, args.instance)
        dims = tuple(int(t) for t in args.dims.split(","))
        code, path = run_bench(args.suite, args.out, args.workers, dims)
        print(path)
        return code
    except (ConfigError, ValueError, files.FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
