"""
HJB Discount Lab - Configuration Module
Environment defaults, run configuratie en validatie
"""
import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from exceptions import ConfigurationError

load_dotenv()

# NOTE: Logging is geconfigureerd via logging_config.py
# Gebruik: from logging_config import get_logger
# logger = get_logger(__name__)


def _env_bool(name, default):
    return os.getenv(name, default).lower() == 'true'


class Config:
    """Base configuratie"""

    ENVIRONMENT = os.getenv('HJBLAB_ENV', 'development')

    # Artifacts
    OUTPUT_DIR = os.getenv('HJBLAB_OUTPUT_DIR', 'runs')
    DEFAULT_SEED = int(os.getenv('HJBLAB_SEED', 20240607))

    # PDE grid (1-D)
    GRID_MIN = float(os.getenv('HJBLAB_GRID_MIN', -5.0))
    GRID_MAX = float(os.getenv('HJBLAB_GRID_MAX', 5.0))
    GRID_NODES = int(os.getenv('HJBLAB_GRID_NODES', 201))
    GRID_BOUNDARY = os.getenv('HJBLAB_GRID_BOUNDARY', 'one_sided')  # one_sided, linear_extrapolation
    HORIZON = float(os.getenv('HJBLAB_HORIZON', 1.0))
    CFL_SAFETY = float(os.getenv('HJBLAB_CFL_SAFETY', 0.9))

    # Infinite horizon march
    TOL_DT = float(os.getenv('HJBLAB_TOL_DT', 1e-6))
    T_MAX = float(os.getenv('HJBLAB_T_MAX', 500.0))
    OVERFLOW_GUARD = float(os.getenv('HJBLAB_OVERFLOW_GUARD', 1e12))
    GRADIENT_BOUND_RTOL = float(os.getenv('HJBLAB_GRADIENT_BOUND_RTOL', 1e-3))

    # Monte Carlo
    MC_PATHS = int(os.getenv('HJBLAB_MC_PATHS', 10000))
    MC_DT = float(os.getenv('HJBLAB_MC_DT', 1e-3))
    MC_ANTITHETIC = _env_bool('HJBLAB_MC_ANTITHETIC', 'false')
    PHILOX_BLOCK_SIZE = int(os.getenv('HJBLAB_PHILOX_BLOCK_SIZE', 4096))
    EXCLUSION_BUDGET = float(os.getenv('HJBLAB_EXCLUSION_BUDGET', 0.001))
    BOUND_RTOL = float(os.getenv('HJBLAB_BOUND_RTOL', 1e-9))

    # Assumption screening
    ASSUMPTION_SAMPLES = int(os.getenv('HJBLAB_ASSUMPTION_SAMPLES', 1000))
    ASSUMPTION_TOLERANCE = float(os.getenv('HJBLAB_ASSUMPTION_TOLERANCE', 1e-9))
    MIN_LIPSCHITZ = 1e-9

    # Kappa estimation
    KAPPA_RADIUS = float(os.getenv('HJBLAB_KAPPA_RADIUS', 2.0))
    KAPPA_HORIZON = float(os.getenv('HJBLAB_KAPPA_HORIZON', 10.0))
    KAPPA_TIMES = int(os.getenv('HJBLAB_KAPPA_TIMES', 20))
    KAPPA_MESH_POINTS = int(os.getenv('HJBLAB_KAPPA_MESH_POINTS', 5))
    KAPPA_OVERFLOW_GUARD = float(os.getenv('HJBLAB_KAPPA_OVERFLOW_GUARD', 1e12))

    # PDE vs Monte Carlo verificatie
    VERIFY_ABS_TOL = float(os.getenv('HJBLAB_VERIFY_ABS_TOL', 5e-3))
    VERIFY_SE_MULTIPLIER = float(os.getenv('HJBLAB_VERIFY_SE_MULTIPLIER', 3.0))
    INFINITE_MC_HORIZON = float(os.getenv('HJBLAB_INFINITE_MC_HORIZON', 30.0))

    # Finance reductie
    CONTROL_RESOLUTION_PI = int(os.getenv('HJBLAB_CONTROL_RESOLUTION_PI', 41))
    CONTROL_RESOLUTION_C = int(os.getenv('HJBLAB_CONTROL_RESOLUTION_C', 41))
    MARKET_BOX = (-5.0, 5.0)
    MERTON_RTOL = float(os.getenv('HJBLAB_MERTON_RTOL', 1e-3))

    # Logging
    JSON_LOGS = _env_bool('HJBLAB_JSON_LOGS', 'false')


class DevelopmentConfig(Config):
    """Development configuratie"""
    DEBUG = True
    JSON_LOGS = False


class ProductionConfig(Config):
    """Production configuratie"""
    DEBUG = False
    JSON_LOGS = True


class TestingConfig(Config):
    """Testing configuratie (kleine runs)"""
    DEBUG = False
    JSON_LOGS = False
    MC_PATHS = 2000
    ASSUMPTION_SAMPLES = 200
    KAPPA_TIMES = 8
    KAPPA_MESH_POINTS = 3


# Config selector
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
}


def get_config():
    """Haal configuratie op basis van environment"""
    env = os.getenv('HJBLAB_ENV', 'development')
    return config.get(env, DevelopmentConfig)


# ═══════════════════════════════════════════════════════
# RUN CONFIGURATIE
# ═══════════════════════════════════════════════════════

COMMANDS = ('check', 'solve', 'verify', 'merton', 'kappa', 'reduce')

# Sleutels die niet in de digest meetellen (output locatie verandert de run niet)
_DIGEST_EXCLUDED = ('out', 'config_path')


def run_defaults(cfg=None) -> Dict[str, Any]:
    """Defaults voor een run, afgeleid van de environment config"""
    cfg = cfg or get_config()
    return {
        'model': None,
        'market': None,
        'out': cfg.OUTPUT_DIR,
        'seed': cfg.DEFAULT_SEED,
        'mode': 'finite',
        'closed_form': False,
        'retain_stride': None,
        'control_resolution': [cfg.CONTROL_RESOLUTION_PI, cfg.CONTROL_RESOLUTION_C],
        'grid': {
            'y_min': cfg.GRID_MIN,
            'y_max': cfg.GRID_MAX,
            'nodes': cfg.GRID_NODES,
            'boundary': cfg.GRID_BOUNDARY,
        },
        'time': {'horizon': cfg.HORIZON, 'steps': None},
        'infinite': {
            'dt': None,
            'tol_dt': cfg.TOL_DT,
            't_max': cfg.T_MAX,
            'overflow_guard': cfg.OVERFLOW_GUARD,
        },
        'mc': {
            'paths': cfg.MC_PATHS,
            'dt': cfg.MC_DT,
            'antithetic': cfg.MC_ANTITHETIC,
            'block_size': cfg.PHILOX_BLOCK_SIZE,
        },
        'check': {
            'box': None,
            'samples': cfg.ASSUMPTION_SAMPLES,
            'tolerance': cfg.ASSUMPTION_TOLERANCE,
        },
        'kappa': {
            'radius': cfg.KAPPA_RADIUS,
            'horizon': cfg.KAPPA_HORIZON,
            'times': cfg.KAPPA_TIMES,
            'mesh_points': cfg.KAPPA_MESH_POINTS,
        },
        'verify': {
            'field': None,
            'probes': [0.0],
            'horizon': cfg.INFINITE_MC_HORIZON,
            'abs_tol': cfg.VERIFY_ABS_TOL,
            'bounds': [],
            'coupling': None,
            'horizons': None,
            'kappa': None,
            'dump_paths': False,
        },
        'merton': {
            'solve': True,
            'rtol': cfg.MERTON_RTOL,
            'admissibility': None,
        },
    }


def _deep_merge(base: Dict, update: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _file_digest(path):
    if not path or not os.path.isfile(path):
        return None
    with open(path, 'rb') as handle:
        return hashlib.sha256(handle.read()).hexdigest()


@dataclass
class RunConfig:
    """
    Samengevoegde run configuratie

    Volgorde (laatste wint): environment defaults < --config JSON < CLI flags
    """
    command: str
    params: Dict[str, Any] = field(default_factory=run_defaults)
    config_path: Optional[str] = None

    @classmethod
    def from_sources(cls, command, config_path=None, overrides=None, cfg=None):
        params = run_defaults(cfg)
        if config_path:
            try:
                with open(config_path, 'r', encoding='utf-8') as handle:
                    file_params = json.load(handle)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read run config '{config_path}': {exc}") from exc
            if not isinstance(file_params, dict):
                raise ConfigurationError(f"run config '{config_path}' must hold a JSON object")
            params = _deep_merge(params, file_params)
        if overrides:
            params = _deep_merge(params, overrides)
        return cls(command=command, params=params, config_path=config_path)

    def __getattr__(self, name):
        params = self.__dict__.get('params', {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {'command': self.command, **copy.deepcopy(self.params)}

    def digest(self) -> str:
        """sha256 over de canonieke run parameters en de inhoud van model/market bestanden"""
        payload = {k: v for k, v in self.to_dict().items() if k not in _DIGEST_EXCLUDED}
        payload['model_sha256'] = _file_digest(self.params.get('model'))
        payload['market_sha256'] = _file_digest(self.params.get('market'))
        if isinstance(payload.get('verify'), dict):
            payload['verify'] = dict(payload['verify'])
            payload['verify']['field_sha256'] = _file_digest(payload['verify'].get('field'))
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def provenance(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'config_digest': self.digest(),
            'seed': self.params.get('seed'),
        }


class ConfigValidator:
    """Valideer run configuratie voor het starten van zware berekeningen"""

    NEEDS_MODEL_OR_MARKET = ['check', 'solve', 'verify', 'kappa']
    NEEDS_MARKET = ['merton', 'reduce']
    VALID_BOUNDARIES = ['one_sided', 'linear_extrapolation']
    VALID_MODES = ['finite', 'infinite']

    @classmethod
    def validate_run_config(cls, run: RunConfig):
        """
        Valideer een RunConfig

        Raises:
            ConfigurationError: Als verplichte instellingen ontbreken of ongeldig zijn
        """
        from logging_config import get_logger, LogEvents
        logger = get_logger('config_validator')

        problems: List[str] = []
        params = run.params

        if run.command not in COMMANDS:
            problems.append(f'command (unknown: {run.command})')

        model, market = params.get('model'), params.get('market')
        if run.command in cls.NEEDS_MODEL_OR_MARKET:
            if bool(model) == bool(market):
                problems.append('exactly one of model / market must be given')
        if run.command in cls.NEEDS_MARKET and not market:
            problems.append('market (required for this command)')
        for label, path in (('model', model), ('market', market)):
            if path and not os.path.isfile(path):
                problems.append(f'{label} (file not found: {path})')

        grid = params.get('grid', {})
        if not grid.get('y_min', 0) < grid.get('y_max', 0):
            problems.append('grid.y_min must be below grid.y_max')
        if int(grid.get('nodes', 0)) < 3:
            problems.append('grid.nodes must be at least 3')
        if grid.get('boundary') not in cls.VALID_BOUNDARIES:
            problems.append(f"grid.boundary (invalid: {grid.get('boundary')})")
        if params.get('mode') not in cls.VALID_MODES:
            problems.append(f"mode (invalid: {params.get('mode')})")

        mc = params.get('mc', {})
        if int(mc.get('paths', 0)) < 1:
            problems.append('mc.paths must be positive')
        if not float(mc.get('dt', 0)) > 0:
            problems.append('mc.dt must be positive')

        infinite = params.get('infinite', {})
        if not float(infinite.get('tol_dt', 0)) > 0:
            problems.append('infinite.tol_dt must be positive')
        if not float(infinite.get('t_max', 0)) > 0:
            problems.append('infinite.t_max must be positive')

        horizon = params.get('time', {}).get('horizon')
        if horizon is None or not float(horizon) > 0:
            problems.append('time.horizon must be positive')

        out = params.get('out')
        if not out:
            problems.append('out (output directory not set)')
        else:
            try:
                os.makedirs(out, exist_ok=True)
            except OSError as exc:
                problems.append(f'out (cannot create {out}: {exc})')
            else:
                if not os.access(out, os.W_OK):
                    problems.append(f'out (not writable: {out})')

        if problems:
            problem_list = '\n'.join(f'  - {p}' for p in problems)
            error_msg = f"""
╔═══════════════════════════════════════════════════════╗
║  RUN CONFIGURATION ERROR                              ║
╚═══════════════════════════════════════════════════════╝

INVALID OR MISSING SETTINGS:
{problem_list}

Pass them as flags or in the --config JSON file.
"""
            logger.error(
                LogEvents.CONFIG_VALIDATION_FAILED,
                problems=problems,
                command=run.command,
            )
            raise ConfigurationError(error_msg)

        logger.debug(LogEvents.CONFIG_VALIDATION_PASSED, command=run.command)
        return True
