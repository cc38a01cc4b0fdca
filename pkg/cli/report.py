"""Report assembly: named CSV tables, SVG figures and the run manifest."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from django.utils import timezone

from cli.csvio import write_rows
from cli.svg import render_svg_line

logger = logging.getLogger(__name__)

REPLICATION_COLUMNS = ('method', 'rho', 'replication', 'seed', 'lambda', 'l1_err', 'l2_err', 'nonzeros', 'converged')
SUMMARY_COLUMNS = ('method', 'rho', 'reps', 'mean_l2', 'se_l2', 'mean_l1', 'se_l1', 'zero_estimates',
                   'dominated', 'not_converged')
DIAGNOSTIC_COLUMNS = ('method', 'rho', 'replication', 'threshold', 'dominated', 'excess_risk')
PENALTY_COLUMNS = ('method', 'lambda', 'quantile', 'alpha', 'c0', 'seed')
FIT_COLUMNS = ('method', 'lambda', 'objective', 'kkt_residual', 'iterations', 'converged', 'nonzeros')


@dataclass
class Table:
    header: tuple
    rows: list


@dataclass
class Report:
    tables: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def add_table(self, name, header, rows):
        self.tables[name] = Table(tuple(header), [list(r) for r in rows])

    def write(self, output_dir):
        """Write ``<name>.csv``, ``<name>.svg`` and manifest.json; returns the written paths."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, table in self.tables.items():
            written.append(write_rows(output_dir / f"{name}.csv", table.header, table.rows))
        for name, svg in self.figures.items():
            path = output_dir / f"{name}.svg"
            path.write_text(svg, encoding='utf-8')
            written.append(path)
        path = output_dir / 'manifest.json'
        path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True, default=_json_default) + '\n',
                        encoding='utf-8')
        written.append(path)
        logger.info(f"Wrote {len(written)} files to {output_dir}")
        return written


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, (np.ndarray, tuple)):
        return list(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def build_manifest(cfg, **extra):
    manifest = {
        'version': settings.PENALTYLAB_VERSION,
        'subcommand': cfg.subcommand,
        'seed': cfg.seed,
        'created_at': timezone.now().isoformat(),
        'config': cfg.echo(),
    }
    manifest.update(extra)
    return manifest


def penalty_row(result):
    row = result.as_row()
    return [row[c] for c in PENALTY_COLUMNS]


def fit_row(method, fit_result):
    s = fit_result.summary()
    return [method, s['lambda'], s['objective'], s['kkt_residual'], s['iterations'], s['converged'], s['nonzeros']]


def coefficient_rows(theta):
    return [[j + 1, value] for j, value in enumerate(np.asarray(theta, dtype=float))]


def cv_curve_rows(cv_result):
    return [[lam, loss] for lam, loss in zip(cv_result.grid.values, cv_result.oos_loss)]


def cv_curve_figure(cv_result):
    finite = np.isfinite(cv_result.oos_loss)
    x = np.log10(cv_result.grid.values[finite])
    return render_svg_line({'out-of-sample loss': (x, cv_result.oos_loss[finite])},
                           x_label='log10 lambda', y_label='total hold-out loss', title='Cross-validation curve')


def replication_rows(mc):
    return [[r.method, r.rho, r.replication, r.seed, r.lambda_, r.l1_err, r.l2_err, r.nonzeros, r.converged]
            for r in mc.rows]


def diagnostic_rows(mc):
    return [[r.method, r.rho, r.replication, r.threshold, r.dominated, r.excess_risk] for r in mc.rows]


def summary_rows(mc):
    return [[entry[c] for c in SUMMARY_COLUMNS] for entry in mc.summary()]


def error_figure(mc):
    """Mean l2 error against rho, one line per method."""
    series = {}
    for entry in mc.summary():
        xs, ys = series.setdefault(entry['method'], ([], []))
        xs.append(entry['rho'])
        ys.append(entry['mean_l2'])
    return render_svg_line(series, x_label='rho', y_label='mean l2 estimation error', title='Estimation error')


def density_figure(densities, rho):
    series = {name: (est.grid, est.density) for name, est in densities.items()}
    return render_svg_line(series, x_label='lambda', y_label='density', title=f"Penalty densities (rho={rho:g})")


def density_rows(per_rho, method):
    """(rho, lambda, density) rows for one method across design cells."""
    rows = []
    for rho, densities in per_rho.items():
        est = densities.get(method)
        if est is not None:
            rows.extend([rho, x, d] for x, d in zip(est.grid, est.density))
    return rows
