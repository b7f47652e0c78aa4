"""Command line entry point: ``liftmix <subcommand>``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import exact, experiments, limits
from .model import ModelSpec, simulate_dataset

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


# config handling

def _get(cfg: dict, key: str, default=None, required: bool = False):
    node = cfg
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"missing required key '{key}'")
            return default
        node = node[part]
    return node


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}")


def model_from_config(cfg: dict) -> tuple[ModelSpec, dict]:
    kind = _get(cfg, "model.kind", required=True)
    alpha = _get(cfg, "model.alpha", required=True)
    K = _get(cfg, "model.k")
    if np.isscalar(alpha):
        if K is None:
            raise ConfigError("a scalar 'model.alpha' needs 'model.k'")
        alpha = [float(alpha)] * int(K)
    alpha = [float(a) for a in alpha]
    if K is not None and int(K) != len(alpha):
        raise ConfigError("'model.k' does not match the length of 'model.alpha'")
    resolved = {"kind": kind, "alpha": alpha, "k": len(alpha)}
    try:
        if kind in ("prior", "prior-only"):
            model = ModelSpec.prior_only(alpha)
        elif kind == "gaussian":
            dim = int(_get(cfg, "model.dim", 1))
            theta0 = _get(cfg, "model.theta0", 0.0)
            sigma2 = float(_get(cfg, "model.sigma2", 1.0))
            sigma02 = float(_get(cfg, "model.sigma02", 1.0))
            model = ModelSpec.gaussian(alpha, theta0, sigma2, sigma02, dim=dim)
            resolved.update(dim=dim, theta0=[float(t) for t in np.atleast_1d(model.theta0)],
                            sigma2=sigma2, sigma02=sigma02)
        elif kind == "poisson":
            beta1 = float(_get(cfg, "model.beta1", 1.0))
            beta2 = float(_get(cfg, "model.beta2", 1.0))
            model = ModelSpec.poisson(alpha, beta1, beta2)
            resolved.update(beta1=beta1, beta2=beta2)
        else:
            raise ConfigError(f"unknown model.kind {kind!r}")
    except ValueError as e:
        raise ConfigError(str(e))
    return model, resolved


def experiment_from_config(cfg: dict, args) -> tuple[experiments.ExperimentConfig, dict]:
    model, model_res = model_from_config(cfg)
    source = _get(cfg, "data.source", "none" if model_res["kind"].startswith("prior") else None,
                  required=not model_res["kind"].startswith("prior"))
    n = _get(cfg, "data.n", required=source != "file")
    path = _get(cfg, "data.path")
    if source == "file":
        if path is None:
            raise ConfigError("missing required key 'data.path'")
        from .model import Dataset
        n = Dataset.from_csv(path).n
    kinds = _get(cfg, "sampler.kind", required=True)
    seed = args.seed if getattr(args, "seed", None) is not None else _get(cfg, "run.seed", 0)
    out_dir = getattr(args, "out", None) or _get(cfg, "output.dir", required=True)
    resolved = {
        "model": model_res,
        "data": {"source": source, "n": int(n), "path": path,
                 "mixture": {"weights": _get(cfg, "data.mixture.weights"),
                             "means": _get(cfg, "data.mixture.means"),
                             "var": float(_get(cfg, "data.mixture.var", 1.0))}},
        "sampler": {"kind": [kinds] if isinstance(kinds, str) else list(kinds),
                    "xi": float(_get(cfg, "sampler.xi", 0.5)),
                    "s": float(_get(cfg, "sampler.s", 1.0))},
        "run": {"replicates": int(_get(cfg, "run.replicates", required=True)),
                "sweeps": int(_get(cfg, "run.sweeps", required=True)),
                "seed": int(seed),
                "init": _get(cfg, "run.init", "uniform"),
                "functionals": list(_get(cfg, "run.functionals", ["largest", "prop_1"]))},
        "output": {"dir": str(out_dir)},
    }
    try:
        ec = experiments.ExperimentConfig(
            model=model, n=int(n), kernels=resolved["sampler"]["kind"], data_source=source,
            data_path=path, mixture_weights=resolved["data"]["mixture"]["weights"],
            mixture_means=resolved["data"]["mixture"]["means"],
            mixture_var=resolved["data"]["mixture"]["var"], xi=resolved["sampler"]["xi"],
            s=resolved["sampler"]["s"], replicates=resolved["run"]["replicates"],
            sweeps=resolved["run"]["sweeps"], functionals=resolved["run"]["functionals"],
            seed=resolved["run"]["seed"], init=resolved["run"]["init"],
            workers=resolve_threads(args), output_dir=str(out_dir))
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e))
    resolved["run"]["workers"] = ec.workers
    return ec, resolved


def resolve_threads(args) -> int:
    t = getattr(args, "threads", None)
    return int(t) if t else experiments.default_workers()


# output directories

class OutputDir:
    """Writes into a temporary sibling and swaps it in on success."""

    def __init__(self, target, overwrite: bool):
        self.target = Path(target)
        if self.target.exists() and any(self.target.iterdir()) and not overwrite:
            raise ConfigError(f"output directory {self.target} is not empty; use --overwrite")
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".liftmix-", dir=self.target.parent))

    def path(self, name: str) -> Path:
        return self.tmp / name

    def commit(self) -> None:
        old = None
        if self.target.exists():
            old = self.target.with_name(self.target.name + ".old-" + self.tmp.name[-8:])
            os.replace(self.target, old)
        os.replace(self.tmp, self.target)
        if old is not None:
            shutil.rmtree(old)

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def write_manifest(out: OutputDir, command: str, resolved: dict, seed, started: float,
                   summary: dict) -> None:
    manifest = {
        "command": command,
        "config": resolved,
        "build": {"liftmix": __version__, "python": platform.python_version(),
                  "numpy": np.__version__},
        "seed": seed,
        "wall_clock_seconds": round(time.time() - started, 3),
        "summary": summary,
    }
    with open(out.path("manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# subcommands

def cmd_run(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    ec, resolved = experiment_from_config(cfg, args)
    out = OutputDir(ec.output_dir, args.overwrite)
    try:
        records = experiments.run_replicates(ec)
        experiments.write_traces(out.path("traces.csv"), records)
        experiments.write_final(out.path("final.csv"), records)
        experiments.write_report(out.path("report.csv"), experiments.summary_rows(ec, records))
        write_manifest(out, "run", resolved, ec.seed, started,
                       {"records": len(records), "kernels": ec.kernels})
    except BaseException:
        out.abort()
        raise
    out.commit()
    print(f"wrote {len(records)} replicate records to {ec.output_dir}")
    return EXIT_OK


def cmd_geweke(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    ec, resolved = experiment_from_config(cfg, args)
    if ec.data_source != "model":
        raise ConfigError("geweke needs data.source = \"model\"")
    threshold = float(_get(cfg, "geweke.threshold", 0.07))
    draws = int(_get(cfg, "geweke.reference_draws", 20000))
    expect = dict(_get(cfg, "geweke.expect", {}))
    resolved["geweke"] = {"threshold": threshold, "reference_draws": draws, "expect": expect}
    out = OutputDir(ec.output_dir, args.overwrite)
    ok = True
    try:
        records = experiments.run_replicates(ec)
        results = experiments.geweke_experiment(ec, draws, threshold=threshold, records=records)
        rows = []
        for g in results:
            want = expect.get(g.kernel, "pass")
            good = g.passed == (want == "pass")
            ok &= good
            rows.append({"check": "geweke-ks", "kernel": g.kernel, "metric": "ks",
                         "value": repr(g.ks), "threshold": repr(g.floor + g.threshold),
                         "pass": g.passed})
            rows.append({"check": "geweke-w1", "kernel": g.kernel, "metric": "w1",
                         "value": repr(g.w1), "threshold": "", "pass": ""})
            rows.append({"check": "noise-floor", "kernel": g.kernel, "metric": "ks",
                         "value": repr(g.floor), "threshold": repr(g.floor_sd), "pass": ""})
            print(f"{g.kernel}: KS={g.ks:.4f} floor={g.floor:.4f} "
                  f"-> {'pass' if g.passed else 'fail'} (expected {want})")
        experiments.write_traces(out.path("traces.csv"), records)
        experiments.write_final(out.path("final.csv"), records)
        experiments.write_report(out.path("report.csv"), rows)
        write_manifest(out, "geweke", resolved, ec.seed, started,
                       {"records": len(records), "as_expected": ok})
    except BaseException:
        out.abort()
        raise
    out.commit()
    return EXIT_OK if ok else EXIT_FAIL


def cmd_exact_check(args) -> int:
    started = time.time()
    results = []
    grid = exact.instance_grid(args.max_n, args.max_k, args.seed)
    for inst in grid:
        results += exact.invariance_checks(inst)
        if not args.skip_ordering:
            results += exact.ordering_checks(inst)
    results += exact.eigenvalue_checks()
    n = 8
    results += exact.counterexample_checks(n)
    mg, r = exact.counterexample_entries(n)
    pub_mg, pub_r = exact.counterexample_published(n)
    print(f"counterexample n={n}: P_MG={mg:.15g} (2/(n(n+2))={pub_mg:.15g}); "
          f"P_R={r:.15g} (from the proposal 1/(2n)={1 / (2 * n):.15g}; "
          f"published 1/(6n)={pub_r:.15g})")
    print(f"ratio P_R/P_MG = {r / mg:.6g} = (n+2)/4")
    if args.perturb:
        rng = np.random.default_rng(args.seed)
        inst = grid[-1]
        P = exact.perturb(exact.build_kernel("nr", inst.model, inst.data, inst.n), rng)
        results.append(exact.CheckResult("invariance nr (perturbed)", inst.label,
                                         exact.check_invariance(P), exact.INVARIANCE_TOL))
    failed = [c for c in results if not c.passed]
    by_check: dict = {}
    for c in results:
        by_check.setdefault(c.check.split(" [")[0], []).append(c)
    for name, cs in by_check.items():
        worst = max(c.value for c in cs)
        status = "pass" if all(c.passed for c in cs) else "FAIL"
        print(f"{status} {name}: {len(cs)} instances, worst {worst:.3g} (bound {cs[0].bound:g})")
    if args.out:
        out = OutputDir(args.out, args.overwrite)
        try:
            with open(out.path("report.csv"), "w") as fh:
                fh.write("check,instance,value,bound,pass\n")
                for c in results:
                    fh.write(f"{c.check},{c.instance},{c.value!r},{c.bound!r},{c.passed}\n")
            write_manifest(out, "exact-check", vars_clean(args), args.seed, started,
                           {"checks": len(results), "failed": len(failed)})
        except BaseException:
            out.abort()
            raise
        out.commit()
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


def _parse_list(text: str, cast=float) -> list:
    return [cast(v) for v in text.split(",") if v.strip()]


def cmd_limits_check(args) -> int:
    started = time.time()
    rows = []
    ns = _parse_list(args.n_list, int)
    alphas = [(2.0, 1.0), (0.5, 0.5), (3.0, 2.0, 1.0)]
    # drift and second moments
    for a in [(1.0, 1.0), (2.0, 3.0), (0.5, 1.5, 1.0)]:
        for n in ns:
            x = _grid_point(n, len(a))
            drift, second = limits.mg_step_moments_exact(n, a, x)
            dev = np.abs(drift - limits.mg_drift_closed_form(n, a, x)).max()
            rows.append(("mg-drift", n, a, "", dev, 1e-13))
            resid = np.abs(n * n / 2 * np.diag(second) - x * (1 - x)).max()
            rows.append(("mg-second-moment-residual", n, a, "", resid, float("nan")))
    # acceptance expansion
    for a in alphas + [(1.0, 1.0, 1.0)]:
        prev = None
        for n in ns:
            dev = limits.max_expansion_deviation(n, a, _grid_point(n, len(a)))
            if all(v == 1.0 for v in a):
                rows.append(("nr-expansion-exact", n, a, "", dev, 0.0))
            elif prev is not None and n == 2 * prev[0] and prev[0] >= 100:
                rows.append(("nr-expansion-ratio", n, a, "", dev / prev[1], 0.75))
            prev = (n, dev)
    # rescaled chains
    if args.replicates > 0:
        for kind in ("mg", "nr"):
            cmp_ = limits.rescaled_chain_vs_limit(kind, args.chain_n, args.t,
                                                  replicates=args.replicates, seed=args.seed)
            for n, d in cmp_.rows():
                rows.append((f"{kind}-w1", n, (1.0, 1.0), args.t, d, float("nan")))
            rows.append((f"{kind}-w1-floor", 0, (1.0, 1.0), args.t, cmp_.floor, float("nan")))
            d0, d1 = cmp_.distances[0], cmp_.distances[-1]
            rows.append((f"{kind}-w1-non-increasing", args.chain_n[-1], (1.0, 1.0), args.t,
                         d1 - d0, 2 * cmp_.floor))
    failed = 0
    lines = ["check,n,K,alpha,t,value,bound,pass"]
    for check, n, a, t, v, bound in rows:
        ok = bool(np.isnan(bound) or v <= bound)
        failed += not ok
        lines.append(f"{check},{n},{len(a)},{' '.join(map(repr, a))},{t},{v!r},{bound!r},{ok}")
    for line in lines[1:]:
        print(line)
    if args.out:
        out = OutputDir(args.out, args.overwrite)
        try:
            out.path("limits.csv").write_text("\n".join(lines) + "\n")
            write_manifest(out, "limits-check", vars_clean(args), args.seed, started,
                           {"checks": len(rows), "failed": failed})
        except BaseException:
            out.abort()
            raise
        out.commit()
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _grid_point(n: int, K: int) -> np.ndarray:
    """An interior point on the 1/n grid close to (K, K-1, ..., 1) / sum."""
    w = np.arange(K, 0, -1, dtype=float)
    counts = np.floor(n * w / w.sum()).astype(int)
    counts[0] += n - counts.sum()
    return counts / n


def cmd_simulate_data(args) -> int:
    cfg = load_config(args.config)
    model, _ = model_from_config(cfg)
    n = int(_get(cfg, "data.n", required=True))
    seed = args.seed if args.seed is not None else int(_get(cfg, "run.seed", 0))
    sim = simulate_dataset(model, n, seed)
    out = Path(args.out)
    if out.exists() and not args.overwrite:
        raise ConfigError(f"{out} exists; use --overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    sim.data.to_csv(out, integer=model.kind.name == "POISSON_GAMMA")
    side = {"seed": seed, "weights": sim.weights.tolist(), "atoms": sim.atoms.tolist(),
            "labels": None if sim.labels is None else sim.labels.tolist()}
    with open(str(out) + ".truth.json", "w") as fh:
        json.dump(side, fh, indent=2)
        fh.write("\n")
    print(f"wrote {n} observations to {out}")
    return EXIT_OK


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liftmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(q, out_required=False):
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--threads", type=int, default=None)
        q.add_argument("--overwrite", action="store_true")
        q.add_argument("--out", default=None, required=out_required)

    q = sub.add_parser("run", help="run replicate chains from a config file")
    q.add_argument("config")
    common(q)
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("geweke", help="compare final proportions with the prior law")
    q.add_argument("config")
    common(q)
    q.set_defaults(func=cmd_geweke)

    q = sub.add_parser("exact-check", help="exact checks on enumerated small instances")
    q.add_argument("--max-n", type=int, default=6)
    q.add_argument("--max-k", type=int, default=3)
    q.add_argument("--perturb", action="store_true", help="corrupt one kernel entry")
    q.add_argument("--skip-ordering", action="store_true")
    common(q)
    q.set_defaults(func=cmd_exact_check, seed=0)

    q = sub.add_parser("limits-check", help="moment, expansion and scaling-limit checks")
    q.add_argument("--n-list", default="100,200,400,800")
    q.add_argument("--chain-n", type=lambda s: _parse_list(s, int), default=[200, 800])
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--replicates", type=int, default=1000)
    common(q)
    q.set_defaults(func=cmd_limits_check, seed=0)

    q = sub.add_parser("simulate-data", help="draw a dataset from the model")
    q.add_argument("config")
    common(q, out_required=True)
    q.set_defaults(func=cmd_simulate_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if getattr(args, "seed", None) is None and args.command in ("exact-check", "limits-check"):
        args.seed = 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
