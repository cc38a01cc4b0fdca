from cli.management.base import PenaltyCommand
from cli.workflows import run_select


class Command(PenaltyCommand):
    help = 'Select the penalty level with --method and fit at it'

    subcommand = 'select'

    def run(self, cfg):
        return run_select(cfg)
