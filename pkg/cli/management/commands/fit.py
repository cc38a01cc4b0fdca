from cli.management.base import PenaltyCommand
from cli.workflows import run_fit


class Command(PenaltyCommand):
    help = 'Fit the l1-penalized estimator at --lambda, or at the penalty chosen by --method'

    subcommand = 'fit'

    def run(self, cfg):
        return run_fit(cfg)
