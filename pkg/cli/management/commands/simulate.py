from cli.management.base import PenaltyCommand
from cli.workflows import run_simulate


class Command(PenaltyCommand):
    help = 'Monte Carlo study of the penalty methods on the Toeplitz logit design'

    subcommand = 'simulate'

    def run(self, cfg):
        self.stdout.write(f"Simulating {cfg.reps} replications at rho in {cfg.rho_grid} (n={cfg.n}, p={cfg.p})")
        return run_simulate(cfg)
