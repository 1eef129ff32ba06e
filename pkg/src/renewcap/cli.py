"""Command line entry point: ``renewcap <command> [options]``."""
from __future__ import annotations

import logging
import math
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, kernels
from .bsde import BsdeProblem, solve_bsde
from .config import ConfigError, ExperimentConfig, dumps, load_config
from .control import evaluation_stream, policy_surface, sample_paths, train_policy
from .io import read_csv, read_manifest, staged_output, write_csv, write_manifest
from .model import ThresholdPolicy, TimeGrid
from .nn import load_params, save_params
from .rng import RngStream
from .selector import build_grid, select_threshold
from .simulate import mc_cost, simulate_exact_latent, simulate_paths

log = logging.getLogger("renewcap")

PATH_HEADER = ("path_id", "n", "t", "v", "d", "c")
PATHS_STREAM = 3


def _common(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="TOML or JSON experiment config (defaults when omitted)."),
        click.option("--seed", type=click.IntRange(min=0), help="Master seed."),
        click.option("--scale", type=click.FloatRange(0, 1, min_open=True),
                     help="Fraction of the configured epochs to run."),
        click.option("--out", type=click.Path(file_okay=False), help="Output root directory."),
        click.option("--scheme", type=click.Choice(sorted(kernels.SCHEMES)),
                     help="Path simulation scheme."),
        click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Worker threads for the path kernels."),
        click.option("-v", "--verbose", count=True, help="More logging."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _setup(config_path, seed, scale, out, scheme, verbose) -> ExperimentConfig:
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(config_path) if config_path else ExperimentConfig()
        return cfg.with_overrides(seed=seed, scale=scale, out=out, scheme=scheme)
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None


def _run(command: str, cfg: ExperimentConfig, body, threads: int = 1) -> dict:
    """Run ``body(scratch_dir) -> headline`` inside a staged output directory."""
    target = Path(cfg.out) / command
    start = time.perf_counter()
    try:
        with staged_output(target) as scratch:
            headline = body(scratch)
            artifacts = sorted(p.name for p in scratch.iterdir())
            manifest = {
                "command": command,
                "config_hash": cfg.hash(),
                "seed": cfg.seed,
                "scale": cfg.scale,
                "scheme": cfg.scheme,
                "threads": threads,
                "backend": kernels.BACKEND,
                "version": __version__,
                "wall_time_s": time.perf_counter() - start,
                "headline": headline,
                "artifacts": artifacts + ["config.toml", "manifest.json"],
            }
            (scratch / "config.toml").write_text(dumps(cfg))
            write_manifest(scratch, manifest)
    except click.ClickException:
        raise
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        raise click.ClickException(f"{command} failed: {exc}") from None
    click.echo(f"{command}: {_summary(headline)} -> {target}")
    return manifest


def _summary(headline: dict) -> str:
    parts = []
    for k, v in headline.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.6g}")
        elif isinstance(v, (int, str)):
            parts.append(f"{k}={v}")
    return " ".join(parts)


def _path_rows(bundle):
    t = bundle.grid.nodes
    for j in range(bundle.batch_size):
        for n in range(bundle.grid.M + 1):
            row = [j, n, t[n], bundle.v[j, n], bundle.d[j, n], bundle.c[j, n]]
            if bundle.controls is not None:
                a = bundle.controls[j, min(n, bundle.grid.M - 1)] if n < bundle.grid.M else (
                    math.nan, math.nan)
                row += [a[0], a[1]]
            yield row


def _write_paths(path, bundle) -> int:
    header = PATH_HEADER + (("a1", "a2") if bundle.controls is not None else ())
    return write_csv(path, header, _path_rows(bundle))


@click.group()
@click.version_option(__version__)
def main():
    """Deep BSDE and deep control experiments for renewable capacity installation."""


@main.command()
@_common
@click.option("--paths", type=click.IntRange(min=1), help="Number of sample paths.")
@click.option("--threshold", type=click.FloatRange(min=0), help="Installation threshold A.")
def simulate(config_path, seed, scale, out, scheme, threads, verbose, paths, threshold):
    """Sample state trajectories under a threshold policy."""
    cfg = _setup(config_path, seed, scale, out, scheme, verbose)
    B = paths or cfg.simulate.paths
    A = cfg.simulate.threshold if threshold is None else threshold

    def body(d):
        grid = TimeGrid(cfg.model.T, cfg.grid.M)
        fn = simulate_paths if cfg.scheme == "euler" else simulate_exact_latent
        bundle = fn(cfg.model, grid, ThresholdPolicy(A), B,
                    RngStream(cfg.seed).substream(PATHS_STREAM), num_threads=threads)
        _write_paths(d / "paths.csv", bundle)
        cost = bundle.total_cost
        return {"threshold": A, "paths": B, "mean_cost": float(np.mean(cost)),
                "mean_final_capacity": float(np.mean(bundle.c[:, -1]))}

    _run("simulate", cfg, body, threads)


@main.command("mc-oracle")
@_common
@click.option("--paths", type=click.IntRange(min=2), help="Number of Monte Carlo paths.")
@click.option("--threshold", type=click.FloatRange(min=0), help="Installation threshold A.")
def mc_oracle(config_path, seed, scale, out, scheme, threads, verbose, paths, threshold):
    """Plain Monte Carlo estimate of the expected cost of a threshold policy."""
    cfg = _setup(config_path, seed, scale, out, scheme, verbose)
    N = paths or cfg.mc.paths
    A = cfg.mc.threshold if threshold is None else threshold

    def body(d):
        grid = TimeGrid(cfg.model.T, cfg.grid.M)
        est = mc_cost(cfg.model, grid, ThresholdPolicy(A), N, RngStream(cfg.seed),
                      scheme=cfg.scheme, num_threads=threads)
        write_csv(d / "estimate.csv", ("A", "estimate", "stderr", "paths"),
                  [(A, est.estimate, est.stderr, N)])
        return {"threshold": A, "paths": N, "estimate": est.estimate, "stderr": est.stderr}

    _run("mc-oracle", cfg, body, threads)


@main.command("solve-bsde")
@_common
@click.option("--threshold", type=click.FloatRange(min=0), help="Installation threshold A.")
def solve_bsde_cmd(config_path, seed, scale, out, scheme, threads, verbose, threshold):
    """Train the backward deep BSDE solver for one threshold."""
    cfg = _setup(config_path, seed, scale, out, scheme, verbose)
    A = cfg.mc.threshold if threshold is None else threshold

    def body(d):
        grid = TimeGrid(cfg.model.T, cfg.grid.M)
        sol = solve_bsde(BsdeProblem(cfg.model, grid, A), cfg.bsde_config())
        rows = ((n, e, loss) for n in range(grid.M - 1, -1, -1)
                for e, loss in enumerate(sol.loss_history[n]))
        write_csv(d / "loss.csv", ("step", "epoch", "loss"), rows)
        write_csv(d / "value.csv", ("A", "Y0"), [(A, sol.Y0)])
        return {"threshold": A, "Y0": sol.Y0, "terminal_step_final_loss":
                sol.final_losses()[grid.M - 1], "first_step_final_loss": sol.final_losses()[0]}

    _run("solve-bsde", cfg, body, threads)


@main.command("select-threshold")
@_common
@click.option("--oracle-mode", is_flag=True,
              help="Score thresholds by Monte Carlo instead of the BSDE solver.")
@click.option("--paths", type=click.IntRange(min=2), help="Monte Carlo paths in oracle mode.")
def select_threshold_cmd(config_path, seed, scale, out, scheme, threads, verbose,
                         oracle_mode, paths):
    """Grid search over installation thresholds."""
    cfg = _setup(config_path, seed, scale, out, scheme, verbose)

    def body(d):
        grid = build_grid(cfg.model.a_min, cfg.model.a_max, cfg.selector.n_points) \
            if cfg.selector.n_points > 1 else [cfg.model.a_min]
        res = select_threshold(cfg.model, cfg.bsde_config(), grid, M=cfg.grid.M,
                               mode="mc" if oracle_mode else "bsde",
                               oracle_paths=paths or cfg.selector.oracle_paths,
                               scheme=cfg.scheme)
        best = res.best_index
        write_csv(d / "scatter.csv", ("A", "Y0", "is_min"),
                  [(p.A, p.Y0, int(i == best)) for i, p in enumerate(res.points)])
        return {"mode": res.mode, "A_star": res.A_star, "Y0_star": res.Y0_star,
                "points": [{"A": p.A, "Y0": p.Y0, "stderr": p.stderr, **p.details}
                           for p in res.points]}

    _run("select-threshold", cfg, body, threads)


def _surface_and_paths(d, net, cfg, threads):
    grid = TimeGrid(cfg.model.T, cfg.grid.M)
    write_csv(d / "surface.csv", ("axis1", "axis2", "a1", "a2"),
              policy_surface(net, cfg.model, ("t", "v")))
    bundle = sample_paths(net, cfg.model, grid, cfg.simulate.paths,
                          RngStream(cfg.seed).substream(PATHS_STREAM))
    _write_paths(d / "paths.csv", bundle)


@main.command("train-policy")
@_common
@click.option("--paths", type=click.IntRange(min=2), help="Out-of-sample evaluation paths.")
def train_policy_cmd(config_path, seed, scale, out, scheme, threads, verbose, paths):
    """Train the deep feedback installation policy."""
    cfg = _setup(config_path, seed, scale, out, scheme, verbose)

    def body(d):
        ccfg = cfg.control_config()
        if paths:
            ccfg = type(ccfg)(**{**ccfg.__dict__, "eval_paths": paths})
        res = train_policy(cfg.model, ccfg)
        write_csv(d / "loss.csv", ("step", "epoch", "loss"),
                  ((e + 1, e, loss) for e, loss in enumerate(res.loss_history)))
        save_params(res.net, d / "policy.bin")
        _surface_and_paths(d, res.net, cfg, threads)
        write_csv(d / "evaluation.csv", ("estimate", "stderr", "paths"),
                  [(res.oos.estimate, res.oos.stderr, ccfg.eval_paths)])
        return {"oos_cost": res.oos.estimate, "oos_stderr": res.oos.stderr,
                "eval_paths": ccfg.eval_paths, "epochs": ccfg.epochs,
                "first_loss": float(res.loss_history[0]) if len(res.loss_history) else None,
                "final_loss": float(res.loss_history[-1]) if len(res.loss_history) else None}

    _run("train-policy", cfg, body, threads)


@main.command("evaluate-policy")
@_common
@click.option("--policy", "policy_path", type=click.Path(dir_okay=False),
              help="Trained policy file (default: the train-policy output).")
@click.option("--paths", type=click.IntRange(min=2), help="Evaluation paths.")
def evaluate_policy_cmd(config_path, seed, scale, out, scheme, threads, verbose,
                        policy_path, paths):
    """Out-of-sample Monte Carlo cost of a trained policy."""
    cfg = _setup(config_path, seed, scale, out, scheme, verbose)
    policy_path = Path(policy_path or Path(cfg.out) / "train-policy" / "policy.bin")
    if not policy_path.is_file():
        raise click.ClickException(f"no policy file at {policy_path}; run train-policy first")

    def body(d):
        from .control import as_policy
        net = load_params(policy_path)
        N = paths or cfg.control.eval_paths
        grid = TimeGrid(cfg.model.T, cfg.grid.M)
        est = mc_cost(cfg.model, grid, as_policy(net), N, evaluation_stream(cfg.seed),
                      scheme=cfg.scheme, num_threads=threads)
        write_csv(d / "evaluation.csv", ("estimate", "stderr", "paths"),
                  [(est.estimate, est.stderr, N)])
        _surface_and_paths(d, net, cfg, threads)
        return {"oos_cost": est.estimate, "oos_stderr": est.stderr, "eval_paths": N,
                "policy": str(policy_path)}

    _run("evaluate-policy", cfg, body, threads)


@main.command()
@click.option("--out", type=click.Path(file_okay=False), default="runs", show_default=True,
              help="Output root holding the command directories.")
def report(out):
    """Compare the best threshold policy against the learned feedback policy."""
    root = Path(out)
    try:
        sel = read_manifest(root / "select-threshold")
        ctl_dir = root / "evaluate-policy"
        ctl = read_manifest(ctl_dir if (ctl_dir / "manifest.json").is_file()
                            else root / "train-policy")
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc)) from None
    _, scatter = read_csv(root / "select-threshold" / "scatter.csv")
    threshold_value = sel["headline"]["Y0_star"]
    control_value = ctl["headline"]["oos_cost"]
    rows = [
        ("threshold", sel["headline"]["A_star"], threshold_value, math.nan),
        ("deep-control", math.nan, control_value, ctl["headline"]["oos_stderr"]),
    ]
    with staged_output(root / "report") as d:
        write_csv(d / "report.csv", ("method", "A_star", "value", "stderr"),
                  rows)
        write_manifest(d, {
            "command": "report",
            "sources": {"select-threshold": sel["config_hash"], ctl["command"]: ctl["config_hash"]},
            "headline": {"threshold_Y0_star": threshold_value, "A_star": sel["headline"]["A_star"],
                         "control_cost": control_value,
                         "improvement": threshold_value - control_value,
                         "control_better": control_value < threshold_value,
                         "grid_points": int(len(scatter))},
        })
    click.echo(f"{'method':<14}{'A*':>10}{'value':>12}{'stderr':>12}")
    for name, a, v, se in rows:
        a_s = f"{a:10.4f}" if math.isfinite(a) else f"{'-':>10}"
        se_s = f"{se:12.2e}" if math.isfinite(se) else f"{'-':>12}"
        click.echo(f"{name:<14}{a_s}{v:12.6f}{se_s}")


if __name__ == "__main__":  # pragma: no cover
    main()
