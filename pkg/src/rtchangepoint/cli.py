"""Command line interface: fit, simulate, study, select, plotdata.

Exit codes: 0 success, 2 parse error, 3 configuration error, 4 data error,
5 numerical/estimation error.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, io
from .estimator import ChangePointRtModel
from .exceptions import (
    ConfigError,
    DataError,
    EstimationError,
    ParseError,
    RtChangePointError,
)
from .inference import lrt_psi, no_change_probability_ci, wald_gamma_tests
from .likelihood import param_names
from .model import ModelConfig, StructuralParams, changepoint_log_pmf_table
from .selection import select_boundary
from .simulation import SimCondition, run_grid, simulate_dataset

_EXIT_CODES = (
    (ParseError, 2),
    (ConfigError, 3),
    (DataError, 4),
    (EstimationError, 5),
)


def _exit_code(exc: RtChangePointError) -> int:
    for klass, code in _EXIT_CODES:
        if isinstance(exc, klass):
            return code
    return 1


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RtChangePointError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


def fit_options(fn):
    """Options shared by commands that run the estimator."""
    fn = click.option("--K", "n_quadrature", type=int, default=151, show_default=True,
                      help="Quadrature nodes for the latent-speed integral.")(fn)
    fn = click.option("--quadrature", type=click.Choice(["dense", "hermite"]),
                      default="dense", show_default=True)(fn)
    fn = click.option("--max-iter", type=int, default=2000, show_default=True)(fn)
    fn = click.option("--gradient-tol", type=float, default=1e-4, show_default=True)(fn)
    fn = click.option("--ridge-gamma", type=float, default=0.01, show_default=True,
                      help="Stage-1 ridge on the post-change shifts.")(fn)
    fn = click.option("--ridge-psi1", type=float, default=0.01, show_default=True,
                      help="Stage-1 ridge on the location parameter.")(fn)
    fn = click.option("--restarts", "n_restarts", type=int, default=0, show_default=True,
                      help="Extra jittered optimizer starts.")(fn)
    fn = click.option("--deterministic-reduction/--any-reduction-order",
                      default=True, show_default=True,
                      help="Keep per-respondent reductions in a fixed order.")(fn)
    return fn


def _estimator_kwargs(n_quadrature, quadrature, max_iter, gradient_tol, ridge_gamma,
                      ridge_psi1, n_restarts, deterministic_reduction, seed):
    return dict(
        n_quadrature=n_quadrature,
        quadrature=quadrature,
        max_iter=max_iter,
        gradient_tol=gradient_tol,
        ridge_gamma=ridge_gamma,
        ridge_psi1=ridge_psi1,
        n_restarts=n_restarts,
        deterministic_reduction=deterministic_reduction,
        random_state=seed,
    )


@click.group()
@click.version_option(__version__)
def main():
    """Latent change-point model for log response times."""


@main.command("fit")
@click.option("--input", "input_path", required=True, type=click.Path(), help="N x J CSV of response times.")
@click.option("--output-dir", type=click.Path(), default=".", show_default=True)
@click.option("--c", "boundary", required=True, type=int, help="Boundary parameter c.")
@click.option("--raw-seconds", is_flag=True, help="Input is raw time units; log-transform at ingest.")
@click.option("--threshold", type=float, default=0.5, show_default=True,
              help="P(change) threshold for the changed/unchanged classification.")
@click.option("--alpha-level", type=float, default=0.05, show_default=True,
              help="Alpha for credible sets and confidence intervals.")
@click.option("--seed", type=int, default=None, help="Seed for optional multistart jitter.")
@click.option("--skip-se", is_flag=True, help="Skip standard errors and test tables.")
@fit_options
@handle_errors
def cmd_fit(input_path, output_dir, boundary, raw_seconds, threshold, alpha_level,
            seed, skip_se, **fit_kw):
    """Fit the model and write parameter, test, and posterior tables."""
    y = io.load_rt_matrix(input_path, raw_seconds=raw_seconds)
    ModelConfig(n_items=y.shape[1], boundary=boundary)  # validates c vs J
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    options = dict(
        command="fit", input=str(input_path), boundary=boundary,
        raw_seconds=raw_seconds, threshold=threshold, alpha_level=alpha_level,
        seed=seed, skip_se=skip_se, **fit_kw,
    )

    model = ChangePointRtModel(boundary=boundary, compute_se=not skip_se,
                               **_estimator_kwargs(seed=seed, **fit_kw))
    model.fit(y)
    table = model.posterior_table(y)
    config = model.config_

    bundle = {
        "provenance": io.provenance_block(options, seed=seed),
        "model": {
            "n_items": config.n_items,
            "boundary": boundary,
            "n_respondents": y.shape[0],
            "param_names": param_names(config),
        },
        "fit": {
            "loglik": model.loglik_,
            "converged": model.converged_,
            "n_iter": model.n_iter_,
            "gradient_norm": model.gradient_norm_,
            "beta": model.beta_,
            "alpha": model.alpha_,
            "gamma": model.gamma_,
            "sigma": model.sigma_,
            "psi": model.psi_,
            "theta": model.theta_,
        },
        "posterior": {
            "support": table.support,
            "probs": table.probs,
            "p_change": table.p_change,
            "mode": table.mode,
            "mean": table.mean,
            "entropy": table.entropy,
            "threshold": threshold,
        },
    }

    level = 1.0 - alpha_level
    if not skip_se:
        se = model.se_items()
        wald = wald_gamma_tests(model)
        lrts = {name: lrt_psi(model, y, name) for name in ("psi1", "psi3")}
        se_psi = model.se_psi()
        ci = no_change_probability_ci(model.psi_[1], se_psi[1], level=level)
        bundle["fit"]["standard_errors"] = model.standard_errors_
        bundle["fit"]["covariance"] = model.covariance_
        bundle["fit"]["se_items"] = se
        bundle["fit"]["se_psi"] = se_psi
        bundle["tests"] = {
            "wald_gamma": {
                "item": wald.item, "estimate": wald.estimate, "se": wald.se,
                "z": wald.z, "p_raw": wald.p_raw, "p_holm": wald.p_holm,
            },
            "lrt": {k: vars(v) for k, v in lrts.items()},
            "no_change_probability": {"estimate": ci[0], "lower": ci[1],
                                      "upper": ci[2], "level": level},
        }
        (out / "items.txt").write_text(io.format_item_table(model, wald))
        (out / "structural.txt").write_text(
            io.format_structural_table(model.psi_, se_psi, lrts, ci)
        )
        io.write_csv(
            out / "items.csv",
            ["item", "beta", "se_beta", "alpha", "se_alpha", "gamma", "se_gamma",
             "z", "p_raw", "p_holm", "sigma", "se_sigma"],
            [
                [j + 1, model.beta_[j], se["beta"][j], model.alpha_[j], se["alpha"][j],
                 model.gamma_[j] if j + 1 > boundary + 1 else None,
                 se["gamma"][j],
                 *(
                     (wald.z[j - boundary - 1], wald.p_raw[j - boundary - 1],
                      wald.p_holm[j - boundary - 1])
                     if j + 1 > boundary + 1 else (None, None, None)
                 ),
                 model.sigma_[j], se["sigma"][j]]
                for j in range(config.n_items)
            ],
        )
        io.write_csv(
            out / "structural.csv",
            ["parameter", "estimate", "se", "lrt_chi2", "lrt_p"],
            [
                ["psi1", model.psi_[0], se_psi[0], lrts["psi1"].statistic, lrts["psi1"].p_value],
                ["psi2", model.psi_[1], se_psi[1], None, None],
                ["psi3", model.psi_[2], se_psi[2], lrts["psi3"].statistic, lrts["psi3"].p_value],
            ],
        )

    summary = io.posterior_summary_dict(table, threshold)
    (out / "posterior_summary.txt").write_text(io.format_posterior_summary(summary))
    io.write_csv(out / "posterior_summary.csv", ["metric", "value"], summary.items())
    io.write_posterior_respondents(out / "posterior_respondents.csv", table, threshold)

    # Model-implied prior at average speed next to the average posterior.
    prior = np.exp(
        changepoint_log_pmf_table(np.zeros(1), StructuralParams(*model.psi_), config)
    )[:, 0]
    io.write_csv(
        out / "prior_vs_posterior.csv",
        ["tau", "prior_at_xi0", "average_posterior"],
        [
            [int(t), prior[i], float(table.probs[:, i].mean())]
            for i, t in enumerate(table.support)
        ],
    )
    io.save_json(out / "result.json", bundle)
    click.echo(
        f"fit: loglik={model.loglik_:.4f} converged={model.converged_} "
        f"results in {out}"
    )


@main.command("simulate")
@click.option("--N", "n_respondents", required=True, type=int)
@click.option("--J", "n_items", required=True, type=int)
@click.option("--c", "boundary", required=True, type=int)
@click.option("--pi", "prevalence", required=True, type=float,
              help="Target prevalence of changers at average speed.")
@click.option("--psi1", type=float, default=0.2, show_default=True)
@click.option("--psi3", type=float, default=-0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--replication", type=int, default=0, show_default=True)
@click.option("--output-dir", type=click.Path(), default=".", show_default=True)
@handle_errors
def cmd_simulate(n_respondents, n_items, boundary, prevalence, psi1, psi3, seed,
                 replication, output_dir):
    """Generate one dataset from the model and write data plus truth."""
    cond = SimCondition(
        n_respondents=n_respondents, n_items=n_items, boundary=boundary,
        prevalence=prevalence, psi1=psi1, psi3=psi3, master_seed=seed,
    )
    true, y = simulate_dataset(cond, replication)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.save_matrix(out / "data.csv", y)
    options = dict(
        command="simulate", n_respondents=n_respondents, n_items=n_items,
        boundary=boundary, prevalence=prevalence, psi1=psi1, psi3=psi3,
        seed=seed, replication=replication,
    )
    truth = {
        # no timestamp: identical invocations must produce identical files
        "provenance": io.provenance_block(options, seed=seed, timestamp=False),
        "true_params": {
            "beta": true.items.beta, "alpha": true.items.alpha,
            "gamma": true.items.gamma, "sigma": true.items.sigma,
            "psi": true.psi.as_array(),
        },
        "latent": {"xi": true.xi, "tau": true.tau},
    }
    io.save_json(out / "truth.json", truth)
    click.echo(f"simulate: wrote {out / 'data.csv'} and {out / 'truth.json'}")


@main.command("study")
@click.option("--grid", "grid_name", type=click.Choice(["primary", "secondary"]),
              default=None, help="Named condition grid.")
@click.option("--conditions", "conditions_path", type=click.Path(), default=None,
              help="JSON list of custom conditions.")
@click.option("--replications", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True,
              help="Parallel replications per condition.")
@click.option("--output-dir", type=click.Path(), default=".", show_default=True)
@fit_options
@handle_errors
def cmd_study(grid_name, conditions_path, replications, seed, threads, output_dir, **fit_kw):
    """Run a recovery study over a condition grid and write report tables."""
    if (grid_name is None) == (conditions_path is None):
        raise ConfigError("provide exactly one of --grid or --conditions")
    if replications < 1:
        raise ConfigError("--replications must be positive")
    if replications < 10:
        click.echo(
            f"warning: {replications} replication(s) leave very wide Monte Carlo "
            "error; interpret cells cautiously", err=True,
        )
    if conditions_path is not None:
        spec_rows = io.load_json(conditions_path)
        grid = [
            SimCondition(
                n_respondents=row["n_respondents"], n_items=row["n_items"],
                boundary=row["boundary"], prevalence=row["prevalence"],
                psi1=row.get("psi1", 0.2), psi3=row.get("psi3", -0.5),
                n_replications=replications, master_seed=seed,
            )
            for row in spec_rows
        ]
    else:
        grid = grid_name
    est_kw = _estimator_kwargs(seed=seed, **fit_kw)
    est_kw.pop("random_state", None)
    reports = run_grid(
        grid, n_jobs=threads, n_replications=replications, master_seed=seed, **est_kw
    )
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    structural_rows = []
    for rep in reports:
        srow, irows = io.recovery_rows(rep)
        structural_rows.append(srow)
        io.write_csv(out / f"{rep.condition.label}_items.csv", io.ITEM_HEADER, irows)
        (out / f"{rep.condition.label}_items.txt").write_text(
            io.format_item_recovery_table(rep)
        )
    io.write_csv(out / "grid_structural.csv", io.STRUCTURAL_HEADER, structural_rows)
    (out / "grid_structural.txt").write_text(io.format_recovery_table(reports))
    options = dict(command="study", grid=grid_name or str(conditions_path),
                   replications=replications, seed=seed, threads=threads, **fit_kw)
    io.save_json(out / "study.json", {
        "provenance": io.provenance_block(options, seed=seed),
        "conditions": [rep.condition.label for rep in reports],
        "structural": {"header": io.STRUCTURAL_HEADER, "rows": structural_rows},
    })
    click.echo(f"study: wrote {len(reports)} condition report(s) to {out}")


@main.command("select")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--candidates", required=True, help="Comma-separated boundary values, e.g. 5,10,15.")
@click.option("--raw-seconds", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--output-dir", type=click.Path(), default=".", show_default=True)
@fit_options
@handle_errors
def cmd_select(input_path, candidates, raw_seconds, seed, output_dir, **fit_kw):
    """Fit candidate boundary values and rank them by AIC, BIC, and ICL."""
    y = io.load_rt_matrix(input_path, raw_seconds=raw_seconds)
    try:
        cand = [int(tok) for tok in candidates.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --candidates value {candidates!r}") from exc
    prototype = ChangePointRtModel(**_estimator_kwargs(seed=seed, **fit_kw))
    result = select_boundary(y, cand, estimator=prototype)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["boundary", "loglik", "n_params", "aic", "bic", "icl",
              "entropy_total", "failed"]
    rows = [
        [c.boundary, c.loglik, c.n_params, c.aic, c.bic, c.icl, c.entropy_total,
         int(c.failed)]
        for c in result.candidates
    ]
    io.write_csv(out / "selection.csv", header, rows)
    lines = [f"{'c':>4} {'loglik':>12} {'d':>5} {'AIC':>12} {'BIC':>12} {'ICL':>12}"]
    for c in result.candidates:
        if c.failed:
            lines.append(f"{c.boundary:>4} {'failed: ' + c.error}")
        else:
            lines.append(
                f"{c.boundary:>4} {c.loglik:12.3f} {c.n_params:>5} "
                f"{c.aic:12.3f} {c.bic:12.3f} {c.icl:12.3f}"
            )
    lines.append("")
    for crit in ("aic", "bic", "icl"):
        lines.append(f"selected by {crit.upper()}: c = {result.selected[crit]}")
    (out / "selection.txt").write_text("\n".join(lines) + "\n")
    options = dict(command="select", input=str(input_path), candidates=candidates,
                   seed=seed, **fit_kw)
    io.save_json(out / "selection.json", {
        "provenance": io.provenance_block(options, seed=seed),
        "candidates": result.as_rows(),
        "selected": result.selected,
    })
    click.echo(
        "select: "
        + ", ".join(f"{crit.upper()} -> c={result.selected[crit]}" for crit in ("aic", "bic", "icl"))
    )


@main.command("plotdata")
@click.option("--input", "input_path", required=True, type=click.Path(),
              help="The original N x J data CSV.")
@click.option("--bundle", "bundle_path", required=True, type=click.Path(),
              help="result.json from a previous fit.")
@click.option("--raw-seconds", is_flag=True)
@click.option("--threshold", type=float, default=None,
              help="Override the classification threshold stored in the bundle.")
@click.option("--output-dir", type=click.Path(), default=".", show_default=True)
@handle_errors
def cmd_plotdata(input_path, bundle_path, raw_seconds, threshold, output_dir):
    """Emit plot-ready CSVs: RT by item per group, and RT aligned to the
    modal change-point of each classified changer."""
    y = io.load_rt_matrix(input_path, raw_seconds=raw_seconds)
    try:
        bundle = io.load_json(bundle_path)
    except OSError as exc:
        raise ParseError(f"cannot read bundle {bundle_path}: {exc}") from exc
    post = bundle.get("posterior")
    if post is None:
        raise ParseError(f"{bundle_path} carries no posterior block")
    p_change = np.asarray(post["p_change"], dtype=float)
    mode = np.asarray(post["mode"], dtype=int)
    n_items = int(bundle["model"]["n_items"])
    if y.shape != (p_change.shape[0], n_items):
        raise DataError(
            f"data shape {y.shape} does not match the bundle "
            f"({p_change.shape[0]} x {n_items})"
        )
    thr = float(post.get("threshold", 0.5)) if threshold is None else threshold
    changed = p_change >= thr
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for j in range(n_items):
        rows.append([
            j + 1,
            int(changed.sum()), int((~changed).sum()),
            float(y[changed, j].mean()) if changed.any() else None,
            float(y[~changed, j].mean()) if (~changed).any() else None,
            float(np.exp(y[changed, j]).mean()) if changed.any() else None,
            float(np.exp(y[~changed, j]).mean()) if (~changed).any() else None,
        ])
    io.write_csv(
        out / "rt_by_group.csv",
        ["item", "n_changed", "n_unchanged", "mean_log_rt_changed",
         "mean_log_rt_unchanged", "mean_rt_changed", "mean_rt_unchanged"],
        rows,
    )

    # Offset 0 is the modal change-point itself: the last baseline item.
    header = ["offset", "n_observations", "mean_log_rt", "mean_rt"]
    rows = []
    changers = np.flatnonzero(changed & (mode < n_items))
    if changers.size:
        offsets = {}
        for i in changers:
            for j in range(n_items):
                offsets.setdefault(j + 1 - mode[i], []).append(y[i, j])
        for off in sorted(offsets):
            vals = np.asarray(offsets[off])
            rows.append([off, vals.size, float(vals.mean()),
                         float(np.exp(vals).mean())])
    io.write_csv(out / "rt_around_changepoint.csv", header, rows)
    click.echo(
        f"plotdata: {changers.size} changer(s) at threshold {thr:g}; wrote "
        f"{out / 'rt_by_group.csv'} and {out / 'rt_around_changepoint.csv'}"
    )


if __name__ == "__main__":
    main()
