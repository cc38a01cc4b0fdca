import logging

from django.core.management.base import BaseCommand, CommandError

from cli.config import build_run_config
from estimation.exceptions import InputError, NumericError

logger = logging.getLogger(__name__)

EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_NOT_CONVERGED = 4


class PenaltyCommand(BaseCommand):
    """Shared flags, config precedence and exit codes for the penaltylab commands."""

    subcommand = None

    def add_arguments(self, parser):
        parser.add_argument('--config', help='key=value config file or a previous manifest.json')
        parser.add_argument('--input', help='CSV with y (or y1,y2) and x1..xp columns')
        parser.add_argument('--output-dir', help='directory receiving CSV/SVG outputs and manifest.json')
        parser.add_argument('--loss', help='loss family (logit, probit, tdist_binary, ...)')
        parser.add_argument('--loss-params', help='comma-separated key=value loss parameters')
        parser.add_argument('--method', help='penalty method (am, bam, bcv, cv, vdg16, threshold)')
        parser.add_argument('--methods', help='comma-separated penalty methods')
        parser.add_argument('--c0', type=float, help='penalty constant (default 1.1)')
        parser.add_argument('--alpha', type=float, help='probability tolerance (default 10/n)')
        parser.add_argument('--folds', type=int, help='cross-validation folds (default 10)')
        parser.add_argument('--fold-scheme', help='even or seeded_random')
        parser.add_argument('--grid-size', type=int, help='penalty grid size (default 100)')
        parser.add_argument('--grid-ratio', type=float, help='smallest grid value over lambda_max (default 1e-4)')
        parser.add_argument('--boot-draws', type=int, help='bootstrap draws')
        parser.add_argument('--reps', type=int, help='Monte Carlo replications')
        parser.add_argument('--rho-grid', help='comma-separated design correlations')
        parser.add_argument('--pattern', help='sparse or dense coefficient pattern')
        parser.add_argument('--n', type=int, help='simulated sample size')
        parser.add_argument('--p', type=int, help='simulated dimension (default n)')
        parser.add_argument('--seed', type=int, help='seed for bootstrap, folds and simulation draws')
        parser.add_argument('--workers', type=int, help='parallel workers (results do not depend on it)')
        parser.add_argument('--lambda', type=float, help='fit at this penalty level')
        parser.add_argument('--kkt-tol', type=float, help='KKT convergence tolerance')
        parser.add_argument('--max-iter', type=int, help='solver iteration cap')

    def handle(self, *args, **options):
        try:
            cfg = build_run_config(self.subcommand, options)
            report, converged = self.run(cfg)
            written = report.write(cfg.output_dir)
        except NumericError as e:
            logger.error(f"{self.subcommand} failed: {e}")
            raise CommandError(str(e), returncode=EXIT_NUMERIC)
        except InputError as e:
            logger.error(f"{self.subcommand} rejected input: {e}")
            raise CommandError(str(e), returncode=EXIT_INPUT)

        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} files to {cfg.output_dir}"))
        if not converged:
            raise CommandError("outputs written, but at least one fit did not converge",
                               returncode=EXIT_NOT_CONVERGED)

    def run(self, cfg):
        """Return (Report, all_fits_converged)."""
        raise NotImplementedError
