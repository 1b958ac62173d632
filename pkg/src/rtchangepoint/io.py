"""File formats and result persistence for the command line tool.

Matrices are headerless CSV (rows = respondents, columns = items) written
with 17 significant digits so values round-trip exactly. Results persist
as a JSON bundle (machine) plus aligned-text tables (human) whose layouts
mirror the item-parameter, structural-parameter, and posterior-summary
tables of a typical report on this model.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import DataError, ParseError

FLOAT_FMT = "%.17g"


def load_rt_matrix(path, raw_seconds: bool = False) -> np.ndarray:
    """Read a headerless numeric CSV of response times.

    With ``raw_seconds`` the natural log is applied at ingest; otherwise
    values are taken as already log-scale. Raises ParseError with the
    offending row/column for malformed input and DataError for non-finite
    or non-positive (when logging) values.
    """
    path = Path(path)
    rows: list[list[float]] = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(line for line in text.splitlines() if line.strip())
    width = None
    for r, row in enumerate(reader):
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"row {r} has {len(row)} fields, expected {width}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            bad = next(i for i, v in enumerate(row) if not _is_float(v))
            raise ParseError(f"row {r}, column {bad}: not a number: {row[bad]!r}") from exc
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    y = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(y)):
        r, c = np.argwhere(~np.isfinite(y))[0]
        raise DataError(f"non-finite value at row {r}, column {c}")
    if raw_seconds:
        if np.any(y <= 0):
            r, c = np.argwhere(y <= 0)[0]
            raise DataError(
                f"non-positive response time at row {r}, column {c}; "
                "raw times must be positive to take logs"
            )
        y = np.log(y)
    return y


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def save_matrix(path, values: np.ndarray) -> None:
    """Write a matrix as headerless CSV at full double precision."""
    np.savetxt(path, np.asarray(values, dtype=float), fmt=FLOAT_FMT, delimiter=",")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if np.isnan(v):
            return ""
        return FLOAT_FMT % v
    if isinstance(v, (np.floating,)):
        return _cell(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def provenance_block(options: dict, seed=None, timestamp: bool = True) -> dict:
    """Reproducibility metadata embedded in every persisted result."""
    canonical = json.dumps(options, sort_keys=True, default=str)
    block = {
        "package": "rtchangepoint",
        "version": __version__,
        "seed": seed,
        "options": options,
        "options_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
    }
    if timestamp:
        block["created_utc"] = datetime.now(timezone.utc).isoformat()
    return block


def save_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def significance_stars(p: float) -> str:
    if np.isnan(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def format_item_table(model, wald) -> str:
    """Aligned item-parameter table: estimates with standard errors, a
    dash for items preceding the earliest admissible change-point, and
    Holm-corrected one-sided significance stars on the shift estimates."""
    se = model.se_items()
    lines = [
        f"{'item':<6} {'beta (se)':>16} {'alpha (se)':>16} {'gamma (se)':>20} "
        f"{'sigma (se)':>16}"
    ]
    holm = dict(zip(wald.item.tolist(), wald.p_holm.tolist()))
    for j in range(model.config_.n_items):
        item = j + 1
        beta = f"{model.beta_[j]:.3f} ({se['beta'][j]:.3f})"
        alpha = f"{model.alpha_[j]:.3f} ({se['alpha'][j]:.3f})"
        if item <= model.config_.boundary + 1:
            gamma = "---"
        else:
            stars = significance_stars(holm.get(item, np.nan))
            gamma = f"{model.gamma_[j]:.3f} ({se['gamma'][j]:.3f}){stars}"
        sigma = f"{model.sigma_[j]:.3f} ({se['sigma'][j]:.3f})"
        lines.append(f"RT{item:<4} {beta:>16} {alpha:>16} {gamma:>20} {sigma:>16}")
    lines.append("")
    lines.append("one-sided Wald tests of gamma < 0, Holm-corrected: "
                 "*** p<.001, ** p<.01, * p<.05; --- no shift parameter")
    return "\n".join(lines) + "\n"


def format_structural_table(psi, se_psi, lrt_results, ci) -> str:
    """Aligned structural-parameter table with Wald columns, likelihood
    ratio tests against zero, and the delta-method no-change interval."""
    from scipy.stats import norm

    names = ["psi1", "psi2", "psi3"]
    meaning = ["location weight", "no-change log-odds", "speed slope"]
    lines = [
        f"{'param':<6} {'interpretation':<20} {'est':>8} {'se':>8} {'z':>8} "
        f"{'p':>8} {'LRT chi2':>9} {'LRT p':>8}"
    ]
    for i, name in enumerate(names):
        z = psi[i] / se_psi[i] if se_psi[i] > 0 else np.nan
        p = 2.0 * norm.sf(abs(z)) if np.isfinite(z) else np.nan
        lrt = lrt_results.get(name)
        chi = f"{lrt.statistic:9.3f}" if lrt else f"{'---':>9}"
        lp = f"{lrt.p_value:8.3f}" if lrt else f"{'---':>8}"
        lines.append(
            f"{name:<6} {meaning[i]:<20} {psi[i]:8.3f} {se_psi[i]:8.3f} "
            f"{z:8.3f} {p:8.3f} {chi} {lp}"
        )
    est, lo, hi = ci
    lines.append("")
    lines.append(
        f"P(no change | average speed) = {est:.3f}, "
        f"95% CI [{lo:.3f}, {hi:.3f}] (delta method)"
    )
    return "\n".join(lines) + "\n"


def format_posterior_summary(summary: dict) -> str:
    width = max(len(k) for k in summary)
    lines = [f"{k:<{width}}  {_fmt_value(v)}" for k, v in summary.items()]
    return "\n".join(lines) + "\n"


def _fmt_value(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def posterior_summary_dict(table, threshold: float) -> dict:
    """Headline posterior metrics in report order."""
    n = table.n_respondents
    changed = table.classify(threshold)
    high = table.classify(0.8)
    summary = {
        "respondents": n,
        "items": table.config.n_items,
        "boundary": table.config.boundary,
        "earliest admissible change-point": table.config.boundary + 1,
        "mean P(change)": float(np.mean(table.p_change)),
        "median P(change)": float(np.median(table.p_change)),
        f"respondents with P(change) >= {threshold:g}": int(changed.sum()),
        "respondents with P(change) >= 0.8": int(high.sum()),
        "proportion with modal no-change": float(np.mean(table.mode == table.config.n_items)),
        "mean posterior mean change-point": float(np.mean(table.mean)),
        "mean posterior mean among changers": (
            float(np.mean(table.mean[changed])) if changed.any() else float("nan")
        ),
        "mean normalized entropy": float(np.mean(table.entropy)),
        "median normalized entropy": float(np.median(table.entropy)),
        "classified changed": int(changed.sum()),
        "classified no change": int(n - changed.sum()),
    }
    return summary


def write_posterior_respondents(path, table, threshold: float) -> None:
    header = ["respondent", "p_change", "mode", "mean", "entropy", "classified_changed"]
    header += [f"p_tau_{t}" for t in table.support]
    rows = []
    changed = table.classify(threshold)
    for i in range(table.n_respondents):
        rows.append(
            [i, table.p_change[i], int(table.mode[i]), table.mean[i], table.entropy[i],
             int(changed[i])] + list(table.probs[i])
        )
    write_csv(path, header, rows)


def recovery_rows(report) -> tuple[list, list]:
    """(structural_row, item_rows) for one condition's recovery report."""
    cond = report.condition
    structural = [
        cond.label, cond.n_respondents, cond.n_items, cond.boundary, cond.prevalence,
        report.mae_mode, report.mae_mean,
        report.bias_psi[0], report.rmse_psi[0],
        report.bias_psi[1], report.rmse_psi[1],
        report.bias_psi[2], report.rmse_psi[2],
        report.n_completed, report.n_failed,
    ]
    items = []
    for j in range(cond.n_items):
        gamma_cells = (
            [report.bias_gamma[j], report.rmse_gamma[j]]
            if not np.isnan(report.bias_gamma[j])
            else [None, None]
        )
        items.append(
            [j + 1, report.bias_beta[j], report.rmse_beta[j],
             report.bias_alpha[j], report.rmse_alpha[j]]
            + gamma_cells
            + [report.bias_sigma[j], report.rmse_sigma[j]]
        )
    return structural, items


STRUCTURAL_HEADER = [
    "condition", "n", "items", "boundary", "prevalence", "mae_mode", "mae_mean",
    "psi1_bias", "psi1_rmse", "psi2_bias", "psi2_rmse", "psi3_bias", "psi3_rmse",
    "completed", "failed",
]

ITEM_HEADER = [
    "item", "beta_bias", "beta_rmse", "alpha_bias", "alpha_rmse",
    "gamma_bias", "gamma_rmse", "sigma_bias", "sigma_rmse",
]


def format_recovery_table(reports) -> str:
    """Aligned text table of change-point recovery and structural cells,
    one row per condition (dashes never apply here; they live in the
    per-item tables)."""
    lines = [
        f"{'condition':<24} {'MAE mode':>9} {'MAE mean':>9} "
        f"{'psi1 bias':>10} {'rmse':>7} {'psi2 bias':>10} {'rmse':>7} "
        f"{'psi3 bias':>10} {'rmse':>7}"
    ]
    for rep in reports:
        lines.append(
            f"{rep.condition.label:<24} {rep.mae_mode:9.3f} {rep.mae_mean:9.3f} "
            f"{rep.bias_psi[0]:10.3f} {rep.rmse_psi[0]:7.3f} "
            f"{rep.bias_psi[1]:10.3f} {rep.rmse_psi[1]:7.3f} "
            f"{rep.bias_psi[2]:10.3f} {rep.rmse_psi[2]:7.3f}"
        )
    return "\n".join(lines) + "\n"


def format_item_recovery_table(report) -> str:
    """Aligned per-item bias/RMSE table for one condition; items outside
    the admissible change-point window show dashes in the gamma cells."""
    lines = [
        f"{'item':>4} {'beta bias':>10} {'rmse':>7} {'alpha bias':>11} {'rmse':>7} "
        f"{'gamma bias':>11} {'rmse':>7} {'sigma bias':>11} {'rmse':>7}"
    ]
    for j in range(report.condition.n_items):
        if np.isnan(report.bias_gamma[j]):
            gcell = f"{'---':>11} {'---':>7}"
        else:
            gcell = f"{report.bias_gamma[j]:11.3f} {report.rmse_gamma[j]:7.3f}"
        lines.append(
            f"{j + 1:>4} {report.bias_beta[j]:10.3f} {report.rmse_beta[j]:7.3f} "
            f"{report.bias_alpha[j]:11.3f} {report.rmse_alpha[j]:7.3f} "
            f"{gcell} "
            f"{report.bias_sigma[j]:11.3f} {report.rmse_sigma[j]:7.3f}"
        )
    return "\n".join(lines) + "\n"
