"""
Run configuration for the management commands.

Values come from three layers: command-line flags override keys read from
a ``--config`` file (flat ``key=value`` text, or the ``config`` object of a
previously written manifest.json), which override the settings defaults.
"""
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from django.conf import settings

from cli.csvio import read_text
from estimation.exceptions import InputError, ParseError
from estimation.losses import parse_loss_params
from estimation.penalty import BootstrapConfig, PenaltyConfig
from estimation.solver import FitConfig

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('fit', 'select', 'simulate', 'compare')


def _float_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(',') if v.strip()]


def _str_list(value):
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(',') if v.strip()]


def _params(value):
    if isinstance(value, dict):
        return dict(value)
    return parse_loss_params(value)


# field -> converter applied to config-file strings and flag values alike
CONVERTERS = {
    'input': str,
    'output_dir': str,
    'loss': str,
    'loss_params': _params,
    'method': str,
    'methods': _str_list,
    'c0': float,
    'alpha': float,
    'folds': int,
    'fold_scheme': str,
    'grid_size': int,
    'grid_ratio': float,
    'boot_draws': int,
    'reps': int,
    'rho_grid': _float_list,
    'pattern': str,
    'n': int,
    'p': int,
    'seed': int,
    'workers': int,
    'lambda_': float,
    'kkt_tol': float,
    'max_iter': int,
}


@dataclass
class RunConfig:
    subcommand: str
    input: str = None
    output_dir: str = None
    loss: str = 'logit'
    loss_params: dict = None
    method: str = None
    methods: list = None
    c0: float = None
    alpha: float = None
    folds: int = None
    fold_scheme: str = None
    grid_size: int = None
    grid_ratio: float = None
    boot_draws: int = None
    reps: int = None
    rho_grid: list = None
    pattern: str = 'sparse'
    n: int = None
    p: int = None
    seed: int = None
    workers: int = None
    lambda_: float = None
    kkt_tol: float = None
    max_iter: int = None

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise InputError(f"unknown subcommand '{self.subcommand}'")
        if self.subcommand != 'simulate':
            if not self.input:
                raise InputError(f"{self.subcommand} needs --input")
            if not Path(self.input).is_file():
                raise InputError(f"input file not found: {self.input}")
        if not self.c0 > 0:
            raise InputError(f"c0 must be positive, got {self.c0}")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.lambda_ is not None and not self.lambda_ >= 0:
            raise InputError(f"lambda must be nonnegative, got {self.lambda_}")
        if self.workers < 1:
            raise InputError(f"workers must be at least 1, got {self.workers}")
        return self

    def penalty_config(self, c0=None):
        return PenaltyConfig(c0=self.c0 if c0 is None else c0, alpha=self.alpha)

    def boot_config(self):
        return BootstrapConfig(draws=self.boot_draws, seed=self.seed)

    def fit_config(self):
        return FitConfig.from_settings(kkt_tol=self.kkt_tol, max_iter=self.max_iter)

    def echo(self):
        """JSON-friendly copy of every field, as written to the manifest."""
        values = asdict(self)
        values['lambda'] = values.pop('lambda_')
        return values


def _defaults(subcommand):
    simulate = subcommand == 'simulate'
    return {
        'output_dir': settings.PENALTYLAB_OUTPUT_DIR,
        'loss_params': {},
        'method': 'am',
        'methods': list(settings.PENALTYLAB_SIM_METHODS) if simulate else ['am', 'bam', 'bcv', 'cv', 'vdg16'],
        'c0': settings.PENALTYLAB_C0,
        'folds': settings.PENALTYLAB_FOLDS,
        'fold_scheme': settings.PENALTYLAB_FOLD_SCHEME,
        'grid_size': settings.PENALTYLAB_GRID_SIZE,
        'grid_ratio': settings.PENALTYLAB_GRID_RATIO,
        'boot_draws': settings.PENALTYLAB_SIM_BOOT_DRAWS if simulate else settings.PENALTYLAB_BOOT_DRAWS,
        'reps': settings.PENALTYLAB_SIM_REPS,
        'rho_grid': list(settings.PENALTYLAB_SIM_RHO_GRID),
        'n': settings.PENALTYLAB_SIM_N,
        'seed': settings.PENALTYLAB_SEED,
        'workers': settings.PENALTYLAB_WORKERS,
    }


def _normalize_key(key):
    key = key.strip().lstrip('-').replace('-', '_')
    return 'lambda_' if key == 'lambda' else key


def _convert(key, value, line=None):
    if key not in CONVERTERS:
        if line is not None:
            raise ParseError(f"unknown config key '{key}'", line=line)
        raise InputError(f"unknown config key '{key}'")
    if value is None:
        return None
    try:
        return CONVERTERS[key](value)
    except (TypeError, ValueError) as e:
        if line is not None:
            raise ParseError(f"invalid value for '{key}': {value!r} ({e})", line=line)
        raise InputError(f"invalid value for '{key}': {value!r} ({e})")


def load_config_file(path):
    """Parse a key=value config file or a manifest.json into field values."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    text = read_text(path)
    if path.suffix == '.json':
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno)
        raw = payload.get('config', payload)
        values = {}
        for key, value in raw.items():
            key = _normalize_key(key)
            if key == 'subcommand':
                continue
            values[key] = _convert(key, value)
        return values

    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=number)
        key, value = line.split('=', 1)
        key = _normalize_key(key)
        values[key] = _convert(key, value.strip(), line=number)
    logger.debug(f"Loaded {len(values)} keys from {path}")
    return values


def build_run_config(subcommand, options):
    """Merge flag values over config-file values over settings defaults."""
    merged = _defaults(subcommand)
    if options.get('config'):
        merged.update({k: v for k, v in load_config_file(options['config']).items() if v is not None})
    for f in fields(RunConfig):
        if f.name == 'subcommand':
            continue
        flag = 'lambda' if f.name == 'lambda_' else f.name
        value = options.get(flag)
        if value is not None:
            merged[f.name] = _convert(f.name, value)
    if merged.get('p') is None and subcommand == 'simulate':
        merged['p'] = merged['n']
    return RunConfig(subcommand=subcommand, **merged).validate()
