"""Command-line pipeline: simulate, fit, evaluate, diagnose, plot.

Subcommands operate on a shared output directory and communicate through
files, so each stage can be rerun independently:

* ``simulate`` writes the true precision matrix (``theta_true.csv``) and one
  data CSV per replication;
* ``fit`` runs the per-column chains for every replication and writes a fit
  JSON (chain summaries) plus a graph-estimate JSON;
* ``evaluate`` compares estimates against the truth and writes
  ``metrics.csv`` (one row per replication per sigma mode plus a mean row);
* ``diagnose`` writes the theory report JSON and a Geweke z table;
* ``plot`` renders the interval bars of replication 0 as an SVG;
* ``all`` chains the five stages.

Configuration comes from an optional flat key=value file (section-prefixed
keys, e.g. ``chain.kernel = my``) overridden by command-line flags; the
fully resolved configuration is embedded in every output file, as a
``# qbgraph-config: {...}`` comment line in CSVs and a ``config`` field in
JSONs, so any artifact can be traced to its inputs.  Floats are written in
round-trip decimal form; undefined metrics use the literal token ``NA``.

Failures print a machine-readable JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .aggregate import GraphEstimate, build_graph_estimate
from .diagnostics import metrics, theory_quantities
from .model import DataMatrix, PrecisionMatrix, resolve_hyperparameters
from .orchestrator import derive_seed, fit_all
from .samplers import ChainConfig
from .sigma import SigmaSpec, resolve_sigma2
from .simulate import GeneratorSpec, generate, sample_gaussian

__all__ = ["RunConfig", "run_pipeline", "render_interval_svg", "main"]

NA = "NA"

SETTING_KINDS = {"a": "setting_c", "b": "hub", "c": "setting_c"}
SETTING_DEFAULT_P = {"a": 100, "b": 500, "c": 1000}

# offsets separating the seed streams of the pipeline stages
DATA_SEED_OFFSET = 101
SIGMA_SEED_OFFSET = 201
CHAIN_SEED_OFFSET = 301


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved pipeline configuration; every default materialized."""

    setting: str = "a"
    p: int = 100
    n: int = 250
    seed: int = 1
    reps: int = 20
    workers: int = 1
    out: str = "out"
    sigma_mode: str = "known"
    sigma_folds: int = 10
    n_iterations: int = 50_000
    burn_in: int = 10_000
    kernel: str = "exact"
    thin: int = 1
    rw_scale: float = 2.4
    rho_step_frac: float = 0.1
    adapt_rw: bool = False
    alpha: float = 0.9
    u: float = 1.5
    a1: float = 1e-5
    a2: float | None = None
    gamma: float = 0.2
    signal: float = 3.0
    eps: float = 1.0
    modules: int = 5
    module_size: int = 100
    hubs_per_module: int = 3
    hub_degree: int = 15
    max_nonhub_degree: int = 4
    nonhub_edges: int = 72

    def __post_init__(self) -> None:
        if self.setting not in SETTING_KINDS:
            raise ValueError(f"setting must be one of a, b, c; got {self.setting!r}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.sigma_mode not in ("known", "cv"):
            raise ValueError(f"sigma mode must be known or cv, got {self.sigma_mode!r}")

    def generator_spec(self) -> GeneratorSpec:
        kind = SETTING_KINDS[self.setting]
        kwargs = dict(kind=kind, p=self.p, seed=self.seed)
        if kind == "setting_c":
            kwargs.update(signal=self.signal, eps=self.eps)
        else:
            if self.p % self.modules != 0:
                raise ValueError(
                    f"hub setting needs p divisible by modules={self.modules}"
                )
            kwargs.update(
                modules=self.modules,
                module_size=self.p // self.modules,
                hubs_per_module=self.hubs_per_module,
                hub_degree=self.hub_degree,
                max_nonhub_degree=self.max_nonhub_degree,
                nonhub_edges=self.nonhub_edges,
            )
        return GeneratorSpec(**kwargs)

    def chain_config(self, seed: int) -> ChainConfig:
        return ChainConfig(
            seed=seed,
            n_iterations=self.n_iterations,
            burn_in=self.burn_in,
            kernel=self.kernel,
            thin=self.thin,
            rw_scale=self.rw_scale,
            rho_step_frac=self.rho_step_frac,
            adapt_rw=self.adapt_rw,
        )

    def echo(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Config file and flag resolution

_CONFIG_KEYS: dict[str, tuple[str, type]] = {
    "run.setting": ("setting", str),
    "run.p": ("p", int),
    "run.n": ("n", int),
    "run.seed": ("seed", int),
    "run.reps": ("reps", int),
    "run.workers": ("workers", int),
    "run.out": ("out", str),
    "sigma.mode": ("sigma_mode", str),
    "sigma.folds": ("sigma_folds", int),
    "chain.n_iterations": ("n_iterations", int),
    "chain.burn_in": ("burn_in", int),
    "chain.kernel": ("kernel", str),
    "chain.thin": ("thin", int),
    "chain.rw_scale": ("rw_scale", float),
    "chain.rho_step_frac": ("rho_step_frac", float),
    "chain.adapt_rw": ("adapt_rw", bool),
    "hyper.alpha": ("alpha", float),
    "hyper.u": ("u", float),
    "hyper.a1": ("a1", float),
    "hyper.a2": ("a2", float),
    "hyper.gamma": ("gamma", float),
    "generator.signal": ("signal", float),
    "generator.eps": ("eps", float),
    "generator.modules": ("modules", int),
    "generator.hubs_per_module": ("hubs_per_module", int),
    "generator.hub_degree": ("hub_degree", int),
    "generator.max_nonhub_degree": ("max_nonhub_degree", int),
    "generator.nonhub_edges": ("nonhub_edges", int),
}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_config_file(path: str | Path) -> dict:
    """Flat key=value file with section-prefixed keys; '#' starts a comment."""
    overrides: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        field_name, caster = _CONFIG_KEYS[key]
        overrides[field_name] = _parse_bool(value) if caster is bool else caster(value)
    return overrides


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config file, then flags, then QBGRAPH_WORKERS."""
    overrides: dict = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    flag_map = {
        "setting": args.setting,
        "p": args.p,
        "n": args.n,
        "seed": args.seed,
        "reps": args.reps,
        "workers": args.workers,
        "out": args.out,
        "sigma_mode": args.sigma,
        "kernel": args.kernel,
        "n_iterations": args.iters,
        "burn_in": args.burnin,
    }
    for name, value in flag_map.items():
        if value is not None:
            overrides[name] = value
    if "workers" not in overrides:
        env = os.environ.get("QBGRAPH_WORKERS")
        if env:
            overrides["workers"] = int(env)
    if "p" not in overrides:
        overrides["p"] = SETTING_DEFAULT_P[overrides.get("setting", "a")]
    return RunConfig(**overrides)


# ---------------------------------------------------------------------------
# File formats


def _fmt(value) -> str:
    """Round-trip decimal text; NA for undefined values."""
    if value is None:
        return NA
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _config_comment(config: RunConfig) -> str:
    return "# qbgraph-config: " + json.dumps(config.echo(), sort_keys=True)


def write_matrix_csv(path: Path, matrix: np.ndarray, config: RunConfig) -> None:
    """p x p matrix CSV: config comment, header row of node ids, then rows."""
    p = matrix.shape[0]
    lines = [_config_comment(config), ",".join(str(i) for i in range(p))]
    lines.extend(",".join(_fmt(v) for v in row) for row in matrix)
    path.write_text("\n".join(lines) + "\n")


def read_matrix_csv(path: Path) -> np.ndarray:
    rows = [
        line for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    data = [[float(v) for v in line.split(",")] for line in rows[1:]]
    return np.asarray(data, dtype=np.float64)


def write_data_csv(path: Path, data: np.ndarray, config: RunConfig) -> None:
    """n x p data CSV: config comment then bare comma-separated rows."""
    lines = [_config_comment(config)]
    lines.extend(",".join(_fmt(v) for v in row) for row in data)
    path.write_text("\n".join(lines) + "\n")


def read_data_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def _summary_dict(summary) -> dict:
    return {
        "inclusion_freq": summary.inclusion_freq.tolist(),
        "theta_mean": summary.theta_mean.tolist(),
        "theta_q025": summary.theta_q025.tolist(),
        "theta_q975": summary.theta_q975.tolist(),
        "trace_mean": summary.pseudo_loglik_trace_stats[0],
        "trace_var": summary.pseudo_loglik_trace_stats[1],
        "geweke_z": summary.geweke_z,
        "acceptance_rates": summary.acceptance_rates,
    }


def write_fit_json(path: Path, fit, config: RunConfig) -> None:
    doc = {
        "config": config.echo(),
        "chain_echo": fit.config_echo,
        "sigma2_used": fit.sigma2_used.tolist(),
        "wall_time": fit.wall_time,
        "summaries": [_summary_dict(s) for s in fit.summaries],
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def write_estimate_json(path: Path, estimate: GraphEstimate, config: RunConfig) -> None:
    doc = {
        "config": config.echo(),
        "delta_hat": estimate.delta_hat.astype(int).tolist(),
        "theta_hat": estimate.theta_hat.entries.tolist(),
        "intervals": estimate.intervals.tolist(),
        "disjoint_pairs": [list(pair) for pair in estimate.disjoint_pairs],
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_estimate_json(path: Path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["delta_hat"] = np.asarray(doc["delta_hat"], dtype=bool)
    doc["theta_hat"] = np.asarray(doc["theta_hat"], dtype=np.float64)
    doc["intervals"] = np.asarray(doc["intervals"], dtype=np.float64)
    return doc


# ---------------------------------------------------------------------------
# Pipeline stages


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _theta_path(out: Path) -> Path:
    return out / "theta_true.csv"


def _data_path(out: Path, rep: int) -> Path:
    return out / f"data_rep{rep}.csv"


def _fit_path(out: Path, rep: int, mode: str) -> Path:
    return out / f"fit_rep{rep}_{mode}.json"


def _estimate_path(out: Path, rep: int, mode: str) -> Path:
    return out / f"estimate_rep{rep}_{mode}.json"


def cmd_simulate(config: RunConfig) -> None:
    out = _out_dir(config)
    theta = generate(config.generator_spec())
    write_matrix_csv(_theta_path(out), theta.entries, config)
    for rep in range(config.reps):
        data = sample_gaussian(theta, config.n, derive_seed(config.seed, DATA_SEED_OFFSET + rep))
        write_data_csv(_data_path(out, rep), data.entries, config)


def cmd_fit(config: RunConfig) -> None:
    out = _out_dir(config)
    theta_true = read_matrix_csv(_theta_path(out))
    mode = config.sigma_mode
    for rep in range(config.reps):
        data = DataMatrix(entries=read_data_csv(_data_path(out, rep)))
        if mode == "known":
            sigma2 = 1.0 / np.diag(theta_true)
        else:
            spec = SigmaSpec(
                mode="cv",
                folds=config.sigma_folds,
                seed=derive_seed(config.seed, SIGMA_SEED_OFFSET + rep),
            )
            sigma2 = resolve_sigma2(data, spec, workers=config.workers)
        hyper = resolve_hyperparameters(
            data,
            sigma2,
            alpha=config.alpha,
            u=config.u,
            a1=config.a1,
            a2=config.a2,
            gamma=config.gamma,
        )
        chain = config.chain_config(derive_seed(config.seed, CHAIN_SEED_OFFSET + rep))

        def progress(done: int, total: int, rep=rep) -> None:
            print(f"rep {rep}: {done}/{total} columns", file=sys.stderr, flush=True)

        fit = fit_all(data, hyper, chain, workers=config.workers, progress=progress)
        write_fit_json(_fit_path(out, rep, mode), fit, config)
        write_estimate_json(_estimate_path(out, rep, mode), build_graph_estimate(fit), config)


def _metric_row(rep_label: str, mode: str, result) -> list[str]:
    return [
        rep_label,
        mode,
        _fmt(result.rel_error),
        _fmt(result.sensitivity),
        _fmt(result.precision),
    ]


def _mean_row(mode: str, results) -> list[str]:
    def mean_of(values):
        vals = [v for v in values if v is not None]
        return sum(vals) / len(vals) if vals else None

    return [
        "mean",
        mode,
        _fmt(mean_of([r.rel_error for r in results])),
        _fmt(mean_of([r.sensitivity for r in results])),
        _fmt(mean_of([r.precision for r in results])),
    ]


def cmd_evaluate(config: RunConfig, estimate_path: str | None = None) -> None:
    out = _out_dir(config)
    truth = PrecisionMatrix(entries=read_matrix_csv(_theta_path(out)), positive_definite=False)
    rows: list[list[str]] = []
    if estimate_path is not None:
        est = PrecisionMatrix(entries=read_matrix_csv(Path(estimate_path)), positive_definite=False)
        rows.append(_metric_row("0", config.sigma_mode, metrics(est, truth)))
    else:
        for mode in ("known", "cv"):
            results = []
            for rep in range(config.reps):
                path = _estimate_path(out, rep, mode)
                if not path.exists():
                    break
                doc = read_estimate_json(path)
                est = PrecisionMatrix(entries=doc["theta_hat"], positive_definite=False)
                results.append(metrics(est, truth))
                rows.append(_metric_row(str(rep), mode, results[-1]))
            if results:
                rows.append(_mean_row(mode, results))
    lines = [_config_comment(config), "replication,mode,rel_error,sensitivity,precision"]
    lines.extend(",".join(row) for row in rows)
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")


def cmd_diagnose(config: RunConfig) -> None:
    out = _out_dir(config)
    theta_true = read_matrix_csv(_theta_path(out))
    p = theta_true.shape[0]
    report = theory_quantities(
        PrecisionMatrix(entries=theta_true, positive_definite=False),
        1.0 / np.diag(theta_true),
        n=config.n,
        p=p,
        u=config.u,
    )
    doc = {
        "config": config.echo(),
        "kappa_underline": report.kappa_underline,
        "kappa_lower": {str(k): v for k, v in report.kappa_lower.items()},
        "kappa_upper": {str(k): v for k, v in report.kappa_upper.items()},
        "rho": report.rho.tolist(),
        "zeta": report.zeta.tolist(),
        "s_star_j": report.s_star_j.tolist(),
        "s_star": report.s_star,
        "s_bar_j": report.s_bar_j.tolist(),
        "s_bar": report.s_bar,
        "epsilon": report.epsilon,
        "m0": report.m0,
        "c1": report.c1,
        "c2": report.c2,
        "c3": report.c3,
        "c4": report.c4,
        "sample_size_thm1": report.sample_size_thm1,
        "sample_size_thm2": report.sample_size_thm2,
        "exact_flags": report.exact_flags,
    }
    (out / "theory.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    rows = [_config_comment(config), "replication,mode,column,geweke_z"]
    for mode in ("known", "cv"):
        for rep in range(config.reps):
            path = _fit_path(out, rep, mode)
            if not path.exists():
                break
            fit_doc = json.loads(path.read_text())
            for j, summary in enumerate(fit_doc["summaries"]):
                rows.append(f"{rep},{mode},{j},{_fmt(summary['geweke_z'])}")
    (out / "geweke.csv").write_text("\n".join(rows) + "\n")


def render_interval_svg(
    estimate: GraphEstimate, truth: PrecisionMatrix | None, path: str | Path
) -> None:
    """Interval bars for every off-diagonal entry, lexicographic pair order.

    One vertical segment per pair (i, j), i < j, spanning the credible
    interval; when truth is given, a dot marks the true value.  Layout is a
    pure function of the inputs, so identical estimates give identical
    bytes.
    """
    p = estimate.delta_hat.shape[0]
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    lows = np.array([estimate.intervals[i, j, 0] for i, j in pairs])
    highs = np.array([estimate.intervals[i, j, 1] for i, j in pairs])
    dots = (
        np.array([truth.entries[i, j] for i, j in pairs])
        if truth is not None
        else None
    )
    vmin = float(min(lows.min(), dots.min() if dots is not None else 0.0, 0.0))
    vmax = float(max(highs.max(), dots.max() if dots is not None else 0.0, 0.0))
    span = vmax - vmin or 1.0
    vmin -= 0.05 * span
    vmax += 0.05 * span
    width = max(640, 40 + 4 * len(pairs))
    height = 320
    left, right, top, bottom = 30.0, 10.0, 10.0, 20.0

    def xpos(idx: int) -> float:
        usable = width - left - right
        return left + usable * (idx + 0.5) / len(pairs)

    def ypos(v: float) -> float:
        usable = height - top - bottom
        return top + usable * (vmax - v) / (vmax - vmin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<!-- interval bars for {len(pairs)} node pairs -->",
        f'<line x1="{left:.2f}" y1="{ypos(0.0):.2f}" x2="{width - right:.2f}" '
        f'y2="{ypos(0.0):.2f}" stroke="#999999" stroke-width="0.5"/>',
    ]
    for idx, (lo, hi) in enumerate(zip(lows, highs)):
        x = xpos(idx)
        y1, y2 = ypos(hi), ypos(lo)
        if y2 - y1 < 1.0:
            mid = 0.5 * (y1 + y2)
            y1, y2 = mid - 0.5, mid + 0.5
        parts.append(
            f'<line x1="{x:.2f}" y1="{y1:.2f}" x2="{x:.2f}" y2="{y2:.2f}" '
            f'stroke="#000000" stroke-width="1"/>'
        )
    if dots is not None:
        for idx, value in enumerate(dots):
            parts.append(
                f'<circle cx="{xpos(idx):.2f}" cy="{ypos(float(value)):.2f}" '
                f'r="1.6" fill="#cc0000"/>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def cmd_plot(config: RunConfig) -> None:
    out = _out_dir(config)
    doc = read_estimate_json(_estimate_path(out, 0, config.sigma_mode))
    estimate = GraphEstimate(
        delta_hat=doc["delta_hat"],
        theta_hat=PrecisionMatrix(entries=doc["theta_hat"], positive_definite=False),
        intervals=doc["intervals"],
        disjoint_pairs=[tuple(pair) for pair in doc["disjoint_pairs"]],
    )
    truth_path = _theta_path(out)
    truth = (
        PrecisionMatrix(entries=read_matrix_csv(truth_path), positive_definite=False)
        if truth_path.exists()
        else None
    )
    render_interval_svg(estimate, truth, out / f"intervals_{config.sigma_mode}.svg")


def run_pipeline(config: RunConfig, command: str, estimate_path: str | None = None) -> None:
    """Execute one subcommand (or the full sequence for ``all``)."""
    if command == "simulate":
        cmd_simulate(config)
    elif command == "fit":
        cmd_fit(config)
    elif command == "evaluate":
        cmd_evaluate(config, estimate_path)
    elif command == "diagnose":
        cmd_diagnose(config)
    elif command == "plot":
        cmd_plot(config)
    elif command == "all":
        cmd_simulate(config)
        cmd_fit(config)
        cmd_evaluate(config)
        cmd_diagnose(config)
        cmd_plot(config)
    else:
        raise ValueError(f"unknown command {command!r}")


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbgraph",
        description="Sparse Gaussian graphical model estimation by parallel "
        "spike-and-slab column regressions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "evaluate", "diagnose", "plot", "all"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="key=value config file")
        cmd.add_argument("--p", type=int, help="number of nodes")
        cmd.add_argument("--n", type=int, help="sample size")
        cmd.add_argument("--seed", type=int, help="base seed")
        cmd.add_argument("--setting", choices=("a", "b", "c"), help="experiment setting")
        cmd.add_argument("--sigma", choices=("known", "cv"), help="variance mode")
        cmd.add_argument("--kernel", choices=("exact", "my"), help="MCMC kernel")
        cmd.add_argument("--iters", type=int, help="iterations per chain")
        cmd.add_argument("--burnin", type=int, help="burn-in iterations")
        cmd.add_argument("--workers", type=int, help="worker processes (or QBGRAPH_WORKERS)")
        cmd.add_argument("--reps", type=int, help="replication count")
        cmd.add_argument("--out", help="output directory")
        if name == "evaluate":
            cmd.add_argument("--estimate", help="evaluate one matrix CSV against the truth")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = resolve_run_config(args)
        run_pipeline(config, args.command, getattr(args, "estimate", None))
    except Exception as exc:
        doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(doc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
