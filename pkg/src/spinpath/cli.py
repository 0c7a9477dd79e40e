"""Command-line front end: every experiment and check as a subcommand.

Options resolve with precedence flags > config file > built-in defaults;
the master seed additionally falls back to the SPINPATH_SEED environment
variable before the built-in default. Config files are flat `key = value`
text with '#' comments; keys mirror flag names exactly and a repeated key
wins with a warning.

Every subcommand writes CSV files into --out-dir (created if absent) with
'\\n' line endings, '.' decimal separator, and 17 significant digits, so a
re-run with the same seed is byte-identical regardless of --threads.

Exit codes: 0 success, 1 validation error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import experiments, gaussian, gibbs, paths


class CliError(Exception):
    """Validation failure; rendered as a single machine-parsable line."""


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors map to exit code 1, not 2."""

    def error(self, message):
        raise CliError(message)


SUBCOMMANDS = (
    "constants",
    "solve-q",
    "beta0",
    "perceptron-fp",
    "sk-exact",
    "perceptron-exact",
    "sde-check",
    "decompose",
    "sk-clt",
    "overlap-conc",
    "perceptron-clt",
    "telescope",
    "cf-check",
)

_SUBCOMMAND_HELP = {
    "constants": "constants report: q, beta0, nu2, tau2, (q_m, r_m), Q and Phi tables",
    "solve-q": "SK overlap fixed point q at (beta, h)",
    "beta0": "high-temperature threshold beta0 and its equation residual",
    "perceptron-fp": "perceptron fixed point (q_m, r_m) at (alpha, u-scale)",
    "sk-exact": "one seeded SK disorder draw: exact log Z and disorder CSV",
    "perceptron-exact": "one seeded perceptron draw: exact log Z and disorder CSV",
    "sde-check": "reversed-BM law, backward-heat identity, quadratic variation",
    "decompose": "pathwise fluctuation decomposition along one interpolation path",
    "sk-clt": "SK free-energy fluctuation experiment over disorder draws",
    "overlap-conc": "overlap concentration: N * E[rho((R-q)^2)] across sizes",
    "perceptron-clt": "perceptron free-energy fluctuation experiment",
    "telescope": "per-pattern telescoping identity defect over seeded draws",
    "cf-check": "empirical characteristic function vs Gaussian target",
}

# name -> (converter, validator, built-in default, help text)
_FLAGS = {
    "n": (int, lambda v: v >= 1, 8, "site count N (default: 8)"),
    "beta": (float, lambda v: v >= 0.0, 0.05, "inverse temperature (default: 0.05)"),
    "h": (float, lambda v: v >= 0.0, 0.3, "external field (default: 0.3)"),
    "alpha": (float, lambda v: v >= 0.0, 0.125, "pattern load M/N (default: 0.125)"),
    "u-scale": (float, lambda v: True, 0.2, "amplitude of u(x) = a tanh(x) (default: 0.2)"),
    "samples": (int, lambda v: v >= 1, 200, "disorder draws or paths (default: 200)"),
    "seed": (int, lambda v: v >= 0, 42, "master seed (default: 42, env SPINPATH_SEED)"),
    "steps": (int, lambda v: v >= 2, 512, "time-grid steps (default: 512)"),
    "threads": (int, lambda v: v >= 1, None, "worker threads (default: all cores)"),
    "out-dir": (str, lambda v: True, "out", "output directory (default: out)"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spinpath",
        description="Stochastic-interpolation numerics for the SK and perceptron models.",
    )
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=_SUBCOMMAND_HELP[name], description=_SUBCOMMAND_HELP[name])
        for flag, (conv, _check, _default, helptext) in _FLAGS.items():
            p.add_argument(f"--{flag}", type=conv if conv is not str else str, default=None, help=helptext)
        p.add_argument("--config", type=str, default=None, help="flat key = value config file")
    return parser


def _convert(key: str, raw: str):
    conv, check, _default, _help = _FLAGS[key]
    try:
        value = conv(raw)
    except (TypeError, ValueError):
        raise CliError(f"{key}: cannot parse value {raw!r}")
    if not check(value):
        raise CliError(f"{key}: value {value!r} out of range")
    return value


def load_config(path: str) -> dict:
    """Parse a flat key = value config file into validated option values."""
    values = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise CliError(f"config: cannot read {path!r}: {e.strerror}")
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise CliError(f"config: line {lineno} is not 'key = value': {text!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in _FLAGS:
            raise CliError(f"config: unknown key {key!r} at line {lineno}")
        if key in values:
            print(f"warning: config key {key!r} repeated; last occurrence wins", file=sys.stderr)
        values[key] = _convert(key, raw)
    return values


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, SPINPATH_SEED, config file, and flags, then validate."""
    opts = {key: entry[2] for key, entry in _FLAGS.items()}
    env_seed = os.environ.get("SPINPATH_SEED")
    if env_seed is not None:
        opts["seed"] = _convert("seed", env_seed)
    if args.config is not None:
        opts.update(load_config(args.config))
    for key in _FLAGS:
        flag_value = getattr(args, key.replace("-", "_"))
        if flag_value is not None:
            if not _FLAGS[key][1](flag_value):
                raise CliError(f"{key}: value {flag_value!r} out of range")
            opts[key] = flag_value
    if opts["threads"] is None:
        opts["threads"] = os.cpu_count() or 1
    return opts


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _out(opts, filename: str) -> str:
    os.makedirs(opts["out-dir"], exist_ok=True)
    return os.path.join(opts["out-dir"], filename)


# ---------------------------------------------------------------------------
# subcommands


def cmd_beta0(opts) -> int:
    b0 = gaussian.beta0()
    residual = gaussian.beta0_equation(b0) - 1.0
    write_csv(_out(opts, "beta0.csv"), ["beta0", "residual"], [[b0, residual]])
    print(f"beta0 = {b0:.12f}  equation residual = {residual:.3e}")
    return 0


def cmd_solve_q(opts) -> int:
    fp = gaussian.solve_q_sk(opts["beta"], opts["h"])
    write_csv(
        _out(opts, "solve_q.csv"),
        ["beta", "h", "q", "residual", "iterations"],
        [[opts["beta"], opts["h"], fp.q, fp.residual, fp.iterations]],
    )
    print(f"q = {fp.q:.12f}  residual = {fp.residual:.3e}  iterations = {fp.iterations}")
    return 0


def cmd_perceptron_fp(opts) -> int:
    u = gibbs.tanh_u(opts["u-scale"])
    fp = gaussian.solve_perceptron_fp(opts["alpha"], u)
    write_csv(
        _out(opts, "perceptron_fp.csv"),
        ["alpha_m", "u_scale", "q_m", "r_m", "q_residual", "r_residual", "iterations"],
        [[fp.alpha, opts["u-scale"], fp.q, fp.r, fp.q_residual, fp.r_residual, fp.iterations]],
    )
    print(f"q_m = {fp.q:.12f}  r_m = {fp.r:.12f}  residuals = ({fp.q_residual:.3e}, {fp.r_residual:.3e})")
    return 0


def cmd_constants(opts) -> int:
    beta, h, alpha = opts["beta"], opts["h"], opts["alpha"]
    u = gibbs.tanh_u(opts["u-scale"])
    q, nu2, tau2 = gaussian.sk_variances(beta, h)
    b0 = gaussian.beta0()
    pfp = gaussian.solve_perceptron_fp(alpha, u)
    tau2_p = gaussian.tau2_perceptron(alpha, u) if alpha > 0 else 0.0
    write_csv(
        _out(opts, "constants.csv"),
        ["beta", "h", "q", "beta0", "nu2", "tau2", "alpha", "u_scale", "q_m", "r_m", "tau2_perceptron"],
        [[beta, h, q, b0, nu2, tau2, alpha, opts["u-scale"], pfp.q, pfp.r, tau2_p]],
    )
    panels = 64
    xs = np.linspace(0.0, alpha, panels + 1)
    q_rows = [[0.0, 0.0]] + [[float(x), gaussian.xi_moments(float(x), u).variance] for x in xs[1:]]
    write_csv(_out(opts, "q_table.csv"), ["alpha_m", "Q"], q_rows)
    m_max = max(1, int(round(alpha * opts["n"])))
    phi_rows = [[m, m / opts["n"], gaussian.phi_m(opts["n"], m, u)] for m in range(m_max + 1)]
    write_csv(_out(opts, "phi_table.csv"), ["m", "alpha_m", "phi"], phi_rows)
    print(
        f"q = {q:.12f}  beta0 = {b0:.12f}  nu2 = {nu2:.6e}  tau2 = {tau2:.6e}  "
        f"q_m = {pfp.q:.10f}  r_m = {pfp.r:.10f}  tau2_perceptron = {tau2_p:.6e}"
    )
    return 0


def cmd_sk_exact(opts) -> int:
    _seed, rng = experiments.sample_stream(opts["seed"], 0)
    dis = gibbs.sample_sk_disorder(opts["n"], rng)
    params = gibbs.SkParams(beta=opts["beta"], h=opts["h"], n=opts["n"])
    log_z, _z = gibbs.sk_partition_exact(dis, params)
    gibbs.save_sk_disorder(dis, _out(opts, "sk_disorder.csv"))
    write_csv(
        _out(opts, "sk_exact.csv"),
        ["n", "beta", "h", "seed", "log_z", "p_n"],
        [[opts["n"], opts["beta"], opts["h"], opts["seed"], log_z, log_z / opts["n"]]],
    )
    print(f"log Z = {log_z:.12f}  p_N = {log_z / opts['n']:.12f}")
    return 0


def cmd_perceptron_exact(opts) -> int:
    m = int(round(opts["alpha"] * opts["n"]))
    if m < 1:
        raise CliError(f"alpha: load {opts['alpha']} gives M=0 patterns for n={opts['n']}")
    _seed, rng = experiments.sample_stream(opts["seed"], 0)
    dis = gibbs.sample_perceptron_disorder(opts["n"], m, rng)
    u = gibbs.tanh_u(opts["u-scale"])
    log_z = gibbs.perceptron_partition_exact(dis, u, m)
    gibbs.save_perceptron_disorder(dis, _out(opts, "perceptron_disorder.csv"))
    write_csv(
        _out(opts, "perceptron_exact.csv"),
        ["n", "m", "alpha", "u_scale", "seed", "log_z", "p_n"],
        [[opts["n"], m, opts["alpha"], opts["u-scale"], opts["seed"], log_z, log_z / opts["n"]]],
    )
    print(f"log Z = {log_z:.12f}  (M = {m} patterns)")
    return 0


def cmd_sde_check(opts) -> int:
    grid = paths.TimeGrid(opts["steps"])
    n_paths = opts["samples"]
    rows = []

    _seed, rng = experiments.sample_stream(opts["seed"], 1)
    x = paths.sample_reversed_bm(grid, rng.standard_normal(n_paths), rng)
    for t in (0.25, 0.5, 0.75):
        k = int(round(t * grid.steps))
        var = float(x[k].var(ddof=1))
        target = 1.0 - grid.times[k]
        se = target * math.sqrt(2.0 / (n_paths - 1))
        rows.append(["var_x", grid.times[k], var, target, se, int(abs(var - target) <= 4 * se)])
    rows.append(["endpoint_zero", 1.0, float(np.abs(x[-1]).max()), 0.0, 0.0, int(np.all(x[-1] == 0.0))])

    phi2 = lambda z: (z**2).sum(axis=1)
    lap2 = lambda z: np.full(z.shape[0], 2.0)
    phi4 = lambda z: (z**4).sum(axis=1)
    lap4 = lambda z: (12.0 * z**2).sum(axis=1)
    for name, f, lap in (("heat_x2", phi2, lap2), ("heat_x4", phi4, lap4)):
        for t in (0.5, 1.0):
            _s, rng = experiments.sample_stream(opts["seed"], 2)
            res, se = paths.backward_heat_residual(f, lap, 1, t, grid, n_paths, rng)
            rows.append([name, t, res, 0.0, se, int(abs(res) <= 4 * se)])

    params = gibbs.SkParams(beta=opts["beta"], h=opts["h"], n=opts["n"])
    q = gaussian.solve_q_sk(opts["beta"], opts["h"]).q
    n_qv = min(n_paths, 100)
    qvs = []
    for i in range(n_qv):
        _s, rng = experiments.sample_stream(opts["seed"], 1000 + i)
        path = paths.sample_sk_path(opts["n"], grid, rng)
        sigma = gibbs.random_spins(opts["n"], rng)
        qvs.append(paths.realized_qv(paths.hamiltonian_path(sigma, params, q, path)))
    rate = paths.qv_rate(params, q)
    qv_mean = float(np.mean(qvs))
    rows.append(["quadratic_variation", 1.0, qv_mean, rate, 0.1 * rate, int(abs(qv_mean - rate) <= 0.1 * rate)])

    write_csv(_out(opts, "sde_check.csv"), ["check", "t", "statistic", "target", "scale", "ok"], rows)
    bad = [r[0] for r in rows if not r[-1]]
    print(f"sde-check: {len(rows) - len(bad)}/{len(rows)} checks ok" + (f"  failing: {','.join(bad)}" if bad else ""))
    return 0


def cmd_decompose(opts) -> int:
    if opts["n"] > paths.PATH_ENUM_CAP:
        raise CliError(f"n: path experiments cap n at {paths.PATH_ENUM_CAP}, got {opts['n']}")
    n = opts["n"]
    params = gibbs.SkParams(beta=opts["beta"], h=opts["h"], n=n)
    q = gaussian.solve_q_sk(opts["beta"], opts["h"]).q
    _seed, rng = experiments.sample_stream(opts["seed"], 0)
    path = paths.sample_sk_path(n, paths.TimeGrid(opts["steps"]), rng, seed=opts["seed"])
    records = paths.decompose_y(params, q, path)
    write_csv(
        _out(opts, "decompose.csv"),
        ["t", "U", "M1", "M2", "V1", "V2", "V3", "Y", "residual"],
        [[r.t, r.u_n, r.m1, r.m2, r.v1, r.v2, r.v3, r.lhs, r.residual] for r in records],
    )
    ii, jj = np.triu_indices(n, 1)
    header = ["t"] + [f"b_{i + 1}_{j + 1}" for i, j in zip(ii, jj)] + [f"x_{i + 1}" for i in range(n)]
    write_csv(
        _out(opts, "path_dump.csv"),
        header,
        [[path.grid.times[k], *path.b[k], *path.x[k]] for k in range(path.grid.steps + 1)],
    )
    final = records[-1]
    print(f"Y(1) = {final.lhs:+.6e}  residual = {final.residual:+.3e}  (steps = {opts['steps']})")
    return 0


def _clt_config(opts, model: str) -> experiments.ExperimentConfig:
    if opts["samples"] < 2:
        raise CliError(f"samples: need at least 2 disorder draws, got {opts['samples']}")
    return experiments.ExperimentConfig(
        model=model,
        n=opts["n"],
        beta=opts["beta"],
        h=opts["h"],
        alpha=opts["alpha"],
        u_scale=opts["u-scale"],
        n_disorder=opts["samples"],
        seed=opts["seed"],
        steps=opts["steps"],
        threads=opts["threads"],
    )


def _write_clt(opts, rec: experiments.FluctuationRecord, prefix: str, label_cols, label_vals) -> None:
    write_csv(
        _out(opts, f"{prefix}_samples.csv"),
        ["sample_index", "seed", "fluctuation_value"],
        [[i, int(rec.seeds[i]), rec.values[i]] for i in range(rec.values.size)],
    )
    write_csv(
        _out(opts, f"{prefix}_summary.csv"),
        ["n", *label_cols, "n_samples", "mean", "var", "ci_lo", "ci_hi", "tau2_analytic", "ks_distance"],
        [[opts["n"], *label_vals, rec.values.size, rec.mean, rec.variance, rec.ci_lo, rec.ci_hi, rec.tau2, rec.ks_distance]],
    )


def cmd_sk_clt(opts) -> int:
    rec = experiments.run_sk_clt(_clt_config(opts, "sk"))
    _write_clt(opts, rec, "sk_clt", ["beta", "h"], [opts["beta"], opts["h"]])
    print(
        f"mean = {rec.mean:+.4e} (se {rec.stderr_mean:.2e})  var = {rec.variance:.4e}  "
        f"tau2 = {rec.tau2:.4e}  ci = [{rec.ci_lo:.4e}, {rec.ci_hi:.4e}]"
    )
    return 0


def cmd_perceptron_clt(opts) -> int:
    rec = experiments.run_perceptron_clt(_clt_config(opts, "perceptron"))
    _write_clt(opts, rec, "perceptron_clt", ["alpha"], [opts["alpha"]])
    print(
        f"mean = {rec.mean:+.4e} (se {rec.stderr_mean:.2e})  var = {rec.variance:.4e}  "
        f"tau2 = {rec.tau2:.4e}  ci = [{rec.ci_lo:.4e}, {rec.ci_hi:.4e}]"
    )
    return 0


def cmd_overlap_conc(opts) -> int:
    if opts["samples"] < 2:
        raise CliError(f"samples: need at least 2 disorder draws, got {opts['samples']}")
    sizes = [n for n in (8, 12, 16, 20) if n <= opts["n"]] or [opts["n"]]
    rows = experiments.run_overlap_concentration(
        sizes, opts["beta"], opts["h"], opts["samples"], seed=opts["seed"], threads=opts["threads"]
    )
    write_csv(
        _out(opts, "overlap_conc.csv"),
        ["n", "n_times_value", "stderr"],
        [[r["n"], r["n_times_value"], r["stderr"]] for r in rows],
    )
    vals = [r["n_times_value"] for r in rows]
    print(
        "N*E[rho((R-q)^2)]: "
        + "  ".join(f"N={r['n']}: {r['n_times_value']:.4f}" for r in rows)
        + f"  (max/min = {max(vals) / min(vals):.3f})"
    )
    return 0


def cmd_telescope(opts) -> int:
    m = int(round(opts["alpha"] * opts["n"]))
    if m < 1:
        raise CliError(f"alpha: load {opts['alpha']} gives M=0 patterns for n={opts['n']}")
    u = gibbs.tanh_u(opts["u-scale"])
    rows = []
    worst = 0.0
    for draw in range(opts["samples"]):
        seed_value, rng = experiments.sample_stream(opts["seed"], draw)
        dis = gibbs.sample_perceptron_disorder(opts["n"], m, rng)
        defect = experiments.telescoping_check(dis, u, m)
        worst = max(worst, defect)
        rows.append([draw, seed_value, defect])
    write_csv(_out(opts, "telescope.csv"), ["draw", "seed", "max_residual"], rows)
    print(f"telescoping max residual over {opts['samples']} draws = {worst:.3e}  (M = {m})")
    return 0


def cmd_cf_check(opts) -> int:
    rec = experiments.run_sk_clt(_clt_config(opts, "sk"))
    if rec.tau2 <= 0.0:
        raise CliError("beta: characteristic-function grid needs tau2 > 0 (beta > 0 and h > 0)")
    grid = experiments.cf_check_grid(rec.tau2)
    rows = experiments.empirical_cf(rec.values, grid, rec.tau2)
    write_csv(
        _out(opts, "cf_check.csv"),
        ["u", "emp_re", "emp_im", "target", "abs_diff"],
        [[r["u"], r["emp_re"], r["emp_im"], r["target"], r["abs_diff"]] for r in rows],
    )
    sup = max(r["abs_diff"] for r in rows)
    print(f"sup |empirical CF - Gaussian target| = {sup:.4f} over {len(rows)} points")
    return 0


_COMMANDS = {
    "constants": cmd_constants,
    "solve-q": cmd_solve_q,
    "beta0": cmd_beta0,
    "perceptron-fp": cmd_perceptron_fp,
    "sk-exact": cmd_sk_exact,
    "perceptron-exact": cmd_perceptron_exact,
    "sde-check": cmd_sde_check,
    "decompose": cmd_decompose,
    "sk-clt": cmd_sk_clt,
    "overlap-conc": cmd_overlap_conc,
    "perceptron-clt": cmd_perceptron_clt,
    "telescope": cmd_telescope,
    "cf-check": cmd_cf_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        opts = resolve_options(args)
        return _COMMANDS[args.command](opts)
    except gaussian.NonConvergenceError as e:
        print(f"error: non-convergence: {e}", file=sys.stderr)
        return 2
    except (CliError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
