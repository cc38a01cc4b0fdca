from cli.management.base import PenaltyCommand
from cli.workflows import run_compare


class Command(PenaltyCommand):
    help = 'Run several penalty methods on one input file and tabulate them side by side'

    subcommand = 'compare'

    def run(self, cfg):
        return run_compare(cfg)
