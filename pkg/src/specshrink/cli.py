"""Command-line interface.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 a trial worker failed (partial outputs are removed).
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
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidPrior, InvalidRoots, SampleTooShort, SpecShrinkError
from .gaussian_core import ComplexSample, RngSeed, sample_ar_path
from .inference import McmcOptions, canonical_order, mle, posterior_sample
from .kahler_geometry import (
    PriorSpec,
    alpha_parallel_check,
    closed_form_risk_gap,
    dlog_jeffreys_fd,
    fisher_metric_ar,
    hermite_moment_check,
    inner_product,
    leading_risk_gap,
    orthogonal_part_H,
    parallel_part_G,
    prior_normalizer,
    q_limit,
    random_interior_roots,
    verify_eigenfunction,
)
from .spectral_model import ArRoots, psd_from_roots

log = logging.getLogger("specshrink")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_WORKER = 0, 1, 2, 3
CSV_COLUMNS = ["xi", "kappa", "n", "z_mean", "z_stderr", "q_limit", "trials", "excluded_trials"]
SAMPLE_HEADER = "# complex-sample v1 n={n} seed={seed}"


class UsageError(Exception):
    """Invalid user input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# parsing helpers


def parse_roots(text: str) -> np.ndarray:
    """``"re,im:re,im"`` into a complex array."""
    out = []
    for part in text.split(":"):
        bits = [b for b in part.split(",") if b.strip()]
        if len(bits) not in (1, 2):
            raise UsageError(f"cannot parse root {part!r}; expected re,im")
        re_ = float(bits[0])
        im_ = float(bits[1]) if len(bits) == 2 else 0.0
        out.append(complex(re_, im_))
    return np.array(out)


def parse_float_list(text: str) -> list:
    return [float(x) for x in str(text).split(",") if x.strip()]


def parse_int_list(text: str) -> list:
    return [int(x) for x in str(text).split(",") if x.strip()]


def parse_xi_grid(text: str) -> list:
    """Either ``start:stop:step`` (inclusive) or a comma list."""
    text = str(text)
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        k = int(round((b - a) / s))
        return [round(a + i * s, 10) for i in range(k + 1)]
    return parse_float_list(text)


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        cfg[k.strip().replace("-", "_")] = v.strip()
    return cfg


def resolve_seed(args) -> int:
    env = os.environ.get("SPECSHRINK_SEED")
    if env is not None and env.strip():
        return int(env)
    return int(args.seed)


def write_sample(path, z: np.ndarray, seed: int) -> None:
    with open(path, "w") as fh:
        fh.write(SAMPLE_HEADER.format(n=z.size, seed=seed) + "\n")
        for v in z:
            fh.write(f"{float(v.real)!r} {float(v.imag)!r}\n")


def read_sample(path) -> ComplexSample:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# complex-sample v1"):
            raise UsageError(f"{path}: missing complex-sample header")
        fields = dict(kv.split("=", 1) for kv in header.split()[3:] if "=" in kv)
        data = np.loadtxt(fh, ndmin=2)
    if data.shape[1] != 2:
        raise UsageError(f"{path}: expected two columns per line")
    z = data[:, 0] + 1j * data[:, 1]
    if "n" in fields and int(fields["n"]) != z.size:
        raise UsageError(f"{path}: header says n={fields['n']} but file has {z.size} values")
    return ComplexSample(z)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    roots = ArRoots(parse_roots(args.roots))
    if args.p is not None and args.p != roots.p:
        raise UsageError(f"--p {args.p} does not match {roots.p} roots")
    seed = resolve_seed(args)
    z = sample_ar_path(roots, args.n, RngSeed(seed))
    write_sample(args.out, z.values, seed)
    print(args.out)
    return EXIT_OK


def _pairs(r) -> list:
    return [[float(x.real), float(x.imag)] for x in np.atleast_1d(r)]


def cmd_fit(args) -> int:
    seed = resolve_seed(args)
    sample = read_sample(args.input)
    if args.method == "mle":
        res = mle(sample, args.p, seed=RngSeed(seed))
        emit_json(
            {
                "method": "mle",
                "p": args.p,
                "n": sample.n,
                "seed": seed,
                "roots": _pairs(res.roots),
                "abs_roots": [float(abs(x)) for x in res.roots],
                "loglik": res.loglik,
                "converged": res.converged,
                "iterations": res.iterations,
                "restarts_used": res.restarts_used,
            }
        )
        return EXIT_OK
    prior = PriorSpec.jeffreys() if args.kappa is None else PriorSpec.from_kappa(args.kappa)
    opts = McmcOptions(burn_in=args.burn_in, kept=args.kept, thin=args.thin)
    draws = posterior_sample(sample, prior, args.p, opts, seed=RngSeed(seed))
    sorted_draws = np.array([canonical_order(d) for d in draws.draws])
    mean = sorted_draws.mean(axis=0)
    emit_json(
        {
            "method": "bayes",
            "prior": prior.label(),
            "kappa": prior.effective_kappa,
            "p": args.p,
            "n": sample.n,
            "seed": seed,
            "posterior_mean": _pairs(mean),
            "posterior_mean_abs": [float(x) for x in np.abs(sorted_draws).mean(axis=0)],
            "acceptance_rate": draws.acceptance_rate,
            "ess": draws.ess,
            "low_ess_warning": draws.low_ess_warning,
            "draws": len(draws),
            "burn_in": draws.burn_in,
            "thinning": draws.thinning,
        }
    )
    return EXIT_OK


RISK_SCAN_DEFAULTS = {
    "kappa_list": "-1",
    "n": "30",
    "xi_grid": "-0.9:0.9:0.1",
    "trials": "500",
    "seed": "0",
    "out_dir": ".",
    "grid_size": "4096",
    "burn_in": "2000",
    "kept": "4000",
    "thin": "2",
    "jobs": str(os.cpu_count() or 1),
}


def _resolve_scan_options(args) -> dict:
    opts = dict(RISK_SCAN_DEFAULTS)
    if args.config:
        file_cfg = read_config(args.config)
        unknown = set(file_cfg) - set(opts)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(file_cfg)
    for k in RISK_SCAN_DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = str(v)
    env = os.environ.get("SPECSHRINK_SEED")
    if env is not None and env.strip():
        opts["seed"] = env.strip()
    return opts


def cmd_risk_scan(args) -> int:
    from .risk_lab import ExperimentConfig, WorkerFailure, scan_domination
    from .plotting import plot_risk_scan

    o = _resolve_scan_options(args)
    kappas = parse_float_list(o["kappa_list"])
    n_values = parse_int_list(o["n"])
    xi = parse_xi_grid(o["xi_grid"])
    for k in kappas:
        if k >= 2:
            raise UsageError(f"kappa = {k:g} >= 2: the predictive density does not exist")
    mcmc = McmcOptions(burn_in=int(o["burn_in"]), kept=int(o["kept"]), thin=int(o["thin"]))
    cfg = ExperimentConfig(
        xi_grid=xi,
        n_values=n_values,
        kappa_values=kappas,
        trials=int(o["trials"]),
        grid_size=int(o["grid_size"]),
        mcmc=mcmc,
        master_seed=int(o["seed"]),
    )
    # jobs and output location do not change results, so they stay out of the hash
    hashed = {
        "xi_grid": cfg.xi_grid,
        "n_values": n_values,
        "kappa_values": kappas,
        "trials": cfg.trials,
        "grid_size": cfg.grid_size,
        "mcmc": asdict(mcmc),
        "master_seed": cfg.master_seed,
        "version": __version__,
    }
    h = config_hash(hashed)
    out_dir = Path(o["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"risk_scan-{h}.csv"
    svg_path = out_dir / f"risk_scan-{h}.svg"
    manifest_path = out_dir / f"manifest-{h}.json"
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def progress(pt):
        log.info("N=%d xi=%+.3f kappa=%g Z=%.4f +/- %.4f", pt.n, pt.xi, pt.kappa, pt.estimate.mean, pt.estimate.stderr)

    try:
        scan = scan_domination(cfg, jobs=int(o["jobs"]), progress=progress)
    except WorkerFailure as exc:
        for pth in (csv_path, svg_path):
            if pth.exists():
                pth.unlink()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WORKER

    rows = []
    for pt in sorted(scan.points, key=lambda q: (q.xi, q.kappa, q.n)):
        rows.append(
            {
                "xi": pt.xi,
                "kappa": pt.kappa,
                "n": pt.n,
                "z_mean": pt.estimate.mean,
                "z_stderr": pt.estimate.stderr,
                "q_limit": q_limit(pt.xi, pt.kappa),
                "trials": pt.estimate.trials,
                "excluded_trials": pt.estimate.excluded,
            }
        )
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    tmp = csv_path.with_suffix(".csv.partial")
    tmp.write_text(buf.getvalue())
    tmp.replace(csv_path)
    plot_risk_scan(rows, svg_path)

    intervals = {
        f"n={n},kappa={k:g}": (None if v is None else [v[0], v[1]]) for (n, k), v in sorted(scan.intervals.items())
    }
    manifest = {
        "config_hash": h,
        "tool_version": __version__,
        "master_seed": cfg.master_seed,
        "config": hashed,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": {"csv": csv_path.name, "svg": svg_path.name},
        "domination_intervals": intervals,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    emit_json({"config_hash": h, "csv": str(csv_path), "svg": str(svg_path), "manifest": str(manifest_path),
               "domination_intervals": intervals})
    return EXIT_OK


def run_verify_checks(p: int, seed: int, phi_exponent: float = 1.0, points: int = 50) -> list:
    """``(name, residual, tolerance)`` rows of the geometry verification suite."""
    tol_eig = {1: 1e-5, 2: 1e-4, 3: 1e-3}[p]
    rows = []
    eig = verify_eigenfunction(p, points, RngSeed(seed), phi_exponent=phi_exponent)
    rows.append((f"eigenfunction K={p * (p + 1)} (estimated {eig.eigenvalue:.6f})", eig.max_residual, tol_eig))

    rng = RngSeed(seed, 1).generator()
    jac = 0.0
    for _ in range(10):
        r = random_interior_roots(p, rng)
        met = fisher_metric_ar(r)
        # g^{i jbar} d_k g_{i jbar} against d_k log pi_J
        dg = np.stack([_dmetric(r, k) for k in range(p)])
        lhs = np.einsum("ji,kij->k", met.inverse, dg)
        jac = max(jac, float(np.max(np.abs(lhs - dlog_jeffreys_fd(r)))))
    rows.append(("Jacobi formula", jac, 1e-6))

    if p <= 2:
        ap = max(alpha_parallel_check(random_interior_roots(p, rng)) for _ in range(10))
        rows.append(("alpha-parallel identity", ap, 1e-6))
        gmax, ghmax = 0.0, 0.0
        for _ in range(20):
            r = random_interior_roots(p, rng)
            gmax = max(gmax, float(np.max(np.abs(parallel_part_G(r, PriorSpec.from_kappa(-1.0)).values))))
            H = orthogonal_part_H(r)
            for k in (-1.0, 0.0):
                ghmax = max(ghmax, abs(inner_product(parallel_part_G(r, PriorSpec.from_kappa(k)), H)))
        rows.append(("parallel part vanishes at kappa=-1", gmax, 1e-8))
        rows.append(("parallel/orthogonal inner product", ghmax, 1e-8))
        herm = hermite_moment_check(fisher_metric_ar(random_interior_roots(p, rng)), 100_000, RngSeed(seed, 2))
        rows.append(("Hermite moments (max z-score)", max(herm.second_max_z, herm.fourth_max_z, herm.odd_max_z), 4.0))
    else:
        print("note: alpha-parallel, G/H and Hermite checks run for p <= 2 only")

    gaps = []
    diff = diff_fd = 0.0
    for _ in range(20):
        r = random_interior_roots(p, rng, r_max=0.8)
        gaps.append(leading_risk_gap(PriorSpec.from_kappa(-1.0), r))
        k = float(rng.uniform(-1, 1))
        closed = closed_form_risk_gap(k, r)
        diff = max(diff, abs(leading_risk_gap(PriorSpec.from_kappa(k), r) - closed))
        if p <= 2:
            diff_fd = max(diff_fd, abs(leading_risk_gap(PriorSpec.from_kappa(k), r, method="fd") - closed))
    rows.append(("risk gap: two routes agree", diff, 1e-6))
    if p <= 2:
        rows.append(("risk gap: finite-difference route agrees", diff_fd, 1e-6))
    rows.append((f"risk gap at kappa=-1 equals {2 * p * (p + 1)} (std)", float(np.std(gaps)), 1e-5))

    if p == 1:
        worst = 0.0
        for k in (-1.0, 0.0, 0.5):
            res = prior_normalizer(PriorSpec.from_kappa(k), 1)
            worst = max(worst, abs(res.value - np.pi / (1 - k)))
        rows.append(("prior normalizer pi/(1-kappa)", worst, 1e-6))
        div = prior_normalizer(PriorSpec.from_kappa(1.0), 1)
        rows.append(("divergence detected at kappa=1", 0.0 if not div.finite else 1.0, 0.5))
    return rows


def _dmetric(r: np.ndarray, k: int) -> np.ndarray:
    """Holomorphic derivative of the metric in root ``k``."""
    g = 1.0 / (1.0 - np.outer(r, r.conj()))
    out = np.zeros_like(g)
    out[k, :] = r.conj() * g[k, :] ** 2
    return out


def cmd_verify(args) -> int:
    seed = resolve_seed(args)
    rows = run_verify_checks(args.p, seed, phi_exponent=args.phi_exponent)
    ok = True
    print(f"verify p={args.p} K={args.p * (args.p + 1)} seed={seed}")
    for name, resid, tol in rows:
        passed = bool(resid < tol)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: residual={resid:.3e} tol={tol:.0e}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_q_limit(args) -> int:
    from .plotting import plot_q_limits

    kappas = parse_float_list(args.kappa_list)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash({"kappas": kappas, "version": __version__})
    path = out_dir / f"q_limit-{h}.svg"
    plot_q_limits(kappas, path)
    csv_path = out_dir / f"q_limit-{h}.csv"
    xs = np.round(np.linspace(0, 0.95, 20), 4)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi"] + [f"kappa={k:g}" for k in kappas])
        for x in xs:
            w.writerow([repr(float(x))] + [repr(float(q_limit(x, k))) for k in kappas])
    print(json.dumps({"svg": str(path), "csv": str(csv_path)}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specshrink", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"specshrink {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="simulate a stationary complex AR(p) path")
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--roots", required=True, help="re,im pairs separated by ':'")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit AR(p) roots by MLE or posterior sampling")
    sp.add_argument("--method", choices=["mle", "bayes"], default="mle")
    sp.add_argument("--kappa", type=float, default=None, help="kappa-prior; omit for Jeffreys")
    sp.add_argument("--p", type=int, default=1)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--burn-in", type=int, default=2000)
    sp.add_argument("--kept", type=int, default=4000)
    sp.add_argument("--thin", type=int, default=2)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("risk-scan", help="Monte Carlo risk-difference scan over a real xi grid")
    sp.add_argument("--config", default=None, help="flat key = value file; flags take precedence")
    sp.add_argument("--kappa-list", dest="kappa_list", default=None)
    sp.add_argument("--n", default=None, help="one N or a comma list")
    sp.add_argument("--xi-grid", dest="xi_grid", default=None, help="start:stop:step or comma list")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out-dir", dest="out_dir", default=None)
    sp.add_argument("--grid-size", dest="grid_size", type=int, default=None)
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    sp.add_argument("--kept", type=int, default=None)
    sp.add_argument("--thin", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    sp.set_defaults(func=cmd_risk_scan)

    sp = sub.add_parser("verify", help="run the geometry verification suite")
    sp.add_argument("--p", type=int, choices=[1, 2, 3], default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--phi-exponent", type=float, default=1.0, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("q-limit", help="plot limit curves of the risk difference")
    sp.add_argument("--kappa-list", dest="kappa_list", default="-1,0,0.5,1")
    sp.add_argument("--out-dir", dest="out_dir", default=".")
    sp.set_defaults(func=cmd_q_limit)
    return ap


# list-valued options whose values may start with a minus sign
_SIGNED_OPTIONS = ("--xi-grid", "--kappa-list", "--roots")


def _join_signed_values(argv: list) -> list:
    """Rewrite ``--opt -0.5:...`` as ``--opt=-0.5:...`` so argparse accepts it."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _SIGNED_OPTIONS and i + 1 < len(argv) and argv[i + 1][:1] == "-" and argv[i + 1][1:2] in "0123456789.":
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    argv = _join_signed_values(list(sys.argv[1:] if argv is None else argv))
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InvalidRoots as exc:
        msg = str(exc)
        if "distinct" in msg:
            msg = f"duplicate root: {msg}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidPrior as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, SampleTooShort, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SpecShrinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
