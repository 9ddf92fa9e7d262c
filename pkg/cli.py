"""
HJB Discount Lab - Command Line Interface
Subcommands check, solve, verify, merton, kappa en reduce met CSV/JSON artifacts

Exit codes: 0 succes, 1 verificatie/convergentie faalt, 2 usage of parse fout.
"""
import argparse
import json
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from coefficients import Constant
from config import COMMANDS, ConfigValidator, RunConfig, get_config
from exceptions import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    EvaluationError,
    ModelFileError,
    ParameterError,
    SimulationError,
)
from finance import (
    ClosedFormMaximizer,
    MarketModel,
    check_market_assumptions,
    discount_admissible,
    load_market,
    merton_benchmark,
    merton_finite_benchmark,
    to_control_model,
)
from logging_config import LogEvents, configure_structured_logging, get_logger
from model import (
    ControlModel,
    KappaTable,
    bounded_discount_kappa,
    check_assumption1,
    estimate_kappa,
    load_model,
    read_kappa_csv,
    save_model,
)
from pde import (
    Grid1D,
    TimeGrid,
    fields_to_csv,
    minimal_steps,
    read_fields_csv,
    report_to_json,
    solve_finite_horizon,
    solve_infinite_horizon,
)
from simulate import (
    BoundSpec,
    FieldPolicy,
    MonteCarloConfig,
    coupled_contraction,
    default_policy_family,
    dump_paths_csv,
    estimate_value,
    horizon_convergence,
    simulate_paths,
    verify_bounds,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


# ═══════════════════════════════════════════════════════
# ARGUMENTEN
# ═══════════════════════════════════════════════════════

# flag -> pad in de geneste run configuratie
_FLAG_PATHS = {
    'model': ('model',),
    'market': ('market',),
    'out': ('out',),
    'seed': ('seed',),
    'mode': ('mode',),
    'paths': ('mc', 'paths'),
    'dt': ('mc', 'dt'),
    'grid_min': ('grid', 'y_min'),
    'grid_max': ('grid', 'y_max'),
    'grid_nodes': ('grid', 'nodes'),
    'tol_dt': ('infinite', 'tol_dt'),
    't_max': ('infinite', 't_max'),
    'horizon': ('time', 'horizon'),
    'steps': ('time', 'steps'),
    'dump_paths': ('verify', 'dump_paths'),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='hjb-lab',
        description='Discounted stochastic control: HJB solves, Monte Carlo verification and Merton benchmarks.',
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument('--config', help='JSON run configuration')
        sub.add_argument('--model', help='model file (JSON)')
        sub.add_argument('--market', help='market file (JSON)')
        sub.add_argument('--out', help='output directory')
        sub.add_argument('--seed', type=int)
        sub.add_argument('--paths', type=int)
        sub.add_argument('--dt', type=float, help='simulation step')
        sub.add_argument('--grid-min', type=float)
        sub.add_argument('--grid-max', type=float)
        sub.add_argument('--grid-nodes', type=int)
        sub.add_argument('--tol-dt', type=float)
        sub.add_argument('--t-max', type=float)
        sub.add_argument('--horizon', type=float)
        sub.add_argument('--steps', type=int)
        sub.add_argument('--mode', choices=['finite', 'infinite'])
        sub.add_argument('--closed-form', action='store_true', default=None,
                         help='closed-form control override (market runs)')
        sub.add_argument('--dump-paths', action='store_true', default=None,
                         help='per-path CSV dump for every verify probe')
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict:
    overrides: Dict = {}
    for flag, path in _FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        target = overrides
        for key in path[:-1]:
            target = target.setdefault(key, {})
        target[path[-1]] = value
    if getattr(args, 'closed_form', None):
        overrides['closed_form'] = True
    return overrides


# ═══════════════════════════════════════════════════════
# HELPERS
# ═══════════════════════════════════════════════════════

def _write_json(run: RunConfig, name: str, data: Dict) -> str:
    path = os.path.join(run.out, name)
    payload = dict(data)
    payload['provenance'] = run.provenance()
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write('\n')
    logger.info(LogEvents.ARTIFACT_WRITTEN, path=path)
    return path


def _load_subject(run: RunConfig) -> Tuple[ControlModel, Optional[MarketModel]]:
    """Model uit het model bestand, of het gereduceerde model van een market"""
    try:
        if run.market:
            market = load_market(run.market)
            model = to_control_model(market, control_resolution=run.control_resolution,
                                     samples=run.check['samples'], seed=run.seed)
            return model, market
        return load_model(run.model), None
    except (ParameterError, DomainError) as exc:
        raise ModelFileError(f'invalid model or market file: {exc}') from exc


def _grid(run: RunConfig) -> Grid1D:
    grid = run.grid
    return Grid1D(float(grid['y_min']), float(grid['y_max']), int(grid['nodes']), grid['boundary'])


def _mc(run: RunConfig) -> MonteCarloConfig:
    mc = run.mc
    return MonteCarloConfig(paths=int(mc['paths']), dt=float(mc['dt']), seed=int(run.seed),
                            antithetic=bool(mc['antithetic']), block_size=int(mc['block_size']))


def _maximizer(run: RunConfig, market: Optional[MarketModel]):
    if run.closed_form:
        if market is None:
            raise ConfigurationError('--closed-form needs a market file')
        return ClosedFormMaximizer(market)
    return None


def _solve(run: RunConfig, model: ControlModel, market: Optional[MarketModel]):
    if model.dim != 1:
        raise ParameterError('the PDE solver handles dimension 1 only')
    grid = _grid(run)
    maximizer = _maximizer(run, market)
    if run.mode == 'finite':
        horizon = float(run.time['horizon'])
        steps = run.time.get('steps') or minimal_steps(model, grid, horizon)
        return solve_finite_horizon(model, grid, TimeGrid(horizon, int(steps)),
                                    retain_stride=run.retain_stride, maximizer=maximizer)
    infinite = run.infinite
    return solve_infinite_horizon(model, grid, dt=infinite.get('dt'), tol_dt=infinite['tol_dt'],
                                  t_max=infinite['t_max'], maximizer=maximizer,
                                  overflow_guard=infinite['overflow_guard'])


# ═══════════════════════════════════════════════════════
# COMMANDS
# ═══════════════════════════════════════════════════════

def cmd_check(run: RunConfig) -> int:
    """Assumption screens; exit 1 alleen bij een harde schending"""
    model, market = _load_subject(run)
    check = run.check
    box = check.get('box') or model.domain_box
    if box is None:
        box = [[run.grid['y_min'], run.grid['y_max']]] * model.dim
    report = check_assumption1(model, box=box, samples=check['samples'], seed=run.seed,
                               tolerance=check['tolerance'])
    data = {'model': model.name, 'assumption': report.to_dict(), 'warnings': list(model.warnings)}
    if market is not None:
        data['market'] = check_market_assumptions(market, check['samples'])
    if check.get('kappa'):
        kappa = run.kappa
        table = estimate_kappa(model, kappa['radius'], kappa['horizon'], default_policy_family(model), _mc(run),
                               n_times=kappa['times'], mesh_points=kappa['mesh_points'])
        data['kappa'] = {'status': 'met' if table.integrable else 'inconclusive', **table.to_dict()}
    _write_json(run, 'assumption_report.json', data)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_solve(run: RunConfig) -> int:
    model, market = _load_subject(run)
    value, policy, report = _solve(run, model, market)
    provenance = run.provenance()
    fields_to_csv(value, policy, os.path.join(run.out, 'value_field.csv'), provenance)
    report_to_json(report, os.path.join(run.out, 'solve_report.json'), provenance)
    logger.info(LogEvents.ARTIFACT_WRITTEN, path=run.out, converged=report.converged)
    return EXIT_OK if report.converged else EXIT_FAILED


def _probe_rows(run: RunConfig, model: ControlModel, value, policy) -> List[Dict]:
    verify = run.verify
    mc = _mc(run)
    multiplier = float(verify.get('se_multiplier', get_config().VERIFY_SE_MULTIPLIER))
    if value.kind == 'infinite':
        # Oneindige horizon: geen terminal reward, lange eindige MC horizon
        sim_model = model.with_terminal(Constant(0.0))
        horizon = float(verify['horizon'])
    else:
        sim_model = model
        horizon = float(value.horizon)
    field_policy = FieldPolicy(policy)
    rows = []
    for index, probe in enumerate(verify['probes']):
        pde_value = float(value.value_at(float(probe), 0))
        estimate = estimate_value(sim_model, field_policy, [float(probe)], 0.0, horizon, mc)
        if verify.get('dump_paths'):
            # zelfde seed en config: dezelfde paden als de schatting
            batch = simulate_paths(sim_model, field_policy, [float(probe)], horizon, mc)
            path = os.path.join(run.out, f'paths_probe_{index}.csv')
            dump_paths_csv(batch, path, {**run.provenance(), 'y0': float(probe)})
            logger.info(LogEvents.ARTIFACT_WRITTEN, path=path)
        band = multiplier * estimate.std_error + float(verify['abs_tol'])
        rows.append({
            'y': float(probe),
            'pde': pde_value,
            'mc': estimate.to_dict(),
            'difference': abs(pde_value - estimate.mean),
            'band': band,
            'met': bool(abs(pde_value - estimate.mean) <= band),
        })
    return rows


def _horizon_kappa(run: RunConfig, model: ControlModel, horizon: float) -> Tuple[str, KappaTable]:
    """
    kappa voor de staart check van horizon_convergence

    verify.kappa: 'estimate' (standaard, Monte Carlo zoals het kappa command),
    'bounded' (analytisch, sup h < 0) of het pad van een kappa.csv.
    """
    source = run.verify.get('kappa') or 'estimate'
    kappa = run.kappa
    if source == 'estimate':
        table = estimate_kappa(model, float(kappa['radius']), horizon, default_policy_family(model), _mc(run),
                               n_times=int(kappa['times']), mesh_points=int(kappa['mesh_points']))
    elif source == 'bounded':
        box = run.check.get('box') or model.domain_box
        if box is None:
            box = [[run.grid['y_min'], run.grid['y_max']]] * model.dim
        table = bounded_discount_kappa(model, box, np.linspace(0.0, horizon, int(kappa['times']) + 1),
                                       samples=run.check['samples'], seed=run.seed, radius=float(kappa['radius']))
    else:
        table = read_kappa_csv(source)
        if table.horizon < horizon - 1e-12:
            logger.warning(LogEvents.KAPPA_EXTRAPOLATED, kappa_horizon=table.horizon, needed=horizon,
                           decay_rate=table.decay_rate)
    return source, table


def cmd_verify(run: RunConfig) -> int:
    """PDE tegen Monte Carlo op probe punten, plus optionele bound, coupling en horizon checks"""
    model, market = _load_subject(run)
    verify = run.verify
    if verify.get('field'):
        value, policy = read_fields_csv(verify['field'])
    else:
        value, policy, _ = _solve(run, model, market)
    mc = _mc(run)
    data: Dict = {'model': model.name, 'probes': _probe_rows(run, model, value, policy)}
    passed = all(row['met'] for row in data['probes'])

    bounds = []
    for index, descriptor in enumerate(verify.get('bounds') or []):
        descriptor = dict(descriptor)
        starts = descriptor.pop('y0', verify['probes'])
        spec = BoundSpec.from_dict(descriptor)
        for y0 in np.atleast_1d(starts):
            report = verify_bounds(model, spec, [float(y0)], max(spec.times), mc)
            bounds.append({'index': index, 'y0': float(y0), **report.to_dict()})
            passed = passed and report.met
    data['bounds'] = bounds

    field_policy = FieldPolicy(policy)
    coupling = verify.get('coupling')
    if coupling:
        report = coupled_contraction(model, field_policy, coupling['y0'], coupling['ybar0'],
                                     float(coupling.get('T', 1.0)), mc)
        slack = float(coupling.get('slack', 10.0 * report.dt))
        met = report.overall_max_ratio_discrete <= 1.0 + slack
        data['coupling'] = {**report.to_dict(), 'slack': slack, 'met': bool(met)}
        passed = passed and met

    horizons = verify.get('horizons')
    if horizons:
        sim_model = model.with_terminal(Constant(0.0)) if value.kind == 'infinite' else model
        source, table = _horizon_kappa(run, sim_model, float(max(horizons)))
        report = horizon_convergence(sim_model, field_policy, [float(verify['probes'][0])], horizons, mc,
                                     kappa=table)
        data['horizons'] = {**report.to_dict(), 'kappa_source': source, 'kappa_label': table.label}
        passed = passed and report.converged

    data['status'] = 'met' if passed else 'violated'
    _write_json(run, 'verify_report.json', data)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_merton(run: RunConfig) -> int:
    """Merton benchmark en optioneel de PDE solve van de gereduceerde HJB"""
    model, market = _load_subject(run)
    merton = run.merton
    data: Dict = {'market': market.name}
    passed = True
    try:
        benchmark = merton_benchmark(market)
    except DomainError as exc:
        data['benchmark'] = {'error': str(exc)}
        _write_json(run, 'merton_report.json', data)
        return EXIT_FAILED
    data['benchmark'] = benchmark.to_dict()

    if merton.get('solve'):
        value, policy, report = _solve(run, model, market)
        fields_to_csv(value, policy, os.path.join(run.out, 'value_field.csv'), run.provenance())
        if run.mode == 'finite':
            reference = merton_finite_benchmark(market, float(run.time['horizon']))
        else:
            reference = benchmark.value
        interior = value.initial[1:-1]
        relative = float(np.max(np.abs(interior - reference)) / abs(reference))
        met = report.converged and relative <= float(merton['rtol'])
        data['solve'] = {
            'reference': reference,
            'relative_error': relative,
            'rtol': float(merton['rtol']),
            'report': report.to_dict(),
            'met': bool(met),
        }
        passed = passed and met

    admissibility = merton.get('admissibility')
    if admissibility:
        screen = discount_admissible(market, float(admissibility['alpha']), float(admissibility['beta']),
                                     float(admissibility['P']), float(admissibility['Q']),
                                     samples=run.check['samples'])
        data['admissibility'] = screen.to_dict()

    data['status'] = 'met' if passed else 'violated'
    _write_json(run, 'merton_report.json', data)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_kappa(run: RunConfig) -> int:
    model, _ = _load_subject(run)
    kappa = run.kappa
    table = estimate_kappa(model, float(kappa['radius']), float(kappa['horizon']),
                           default_policy_family(model), _mc(run),
                           n_times=int(kappa['times']), mesh_points=int(kappa['mesh_points']))
    table.to_csv(os.path.join(run.out, 'kappa.csv'), run.provenance())
    _write_json(run, 'kappa_report.json', table.to_dict())
    return EXIT_OK if table.integrable else EXIT_FAILED


def cmd_reduce(run: RunConfig) -> int:
    """Schrijf het gereduceerde ControlModel van een market"""
    model, _ = _load_subject(run)
    save_model(model, os.path.join(run.out, 'reduced_model.json'), run.provenance())
    logger.info(LogEvents.ARTIFACT_WRITTEN, path=os.path.join(run.out, 'reduced_model.json'))
    return EXIT_OK


HANDLERS = {
    'check': cmd_check,
    'solve': cmd_solve,
    'verify': cmd_verify,
    'merton': cmd_merton,
    'kappa': cmd_kappa,
    'reduce': cmd_reduce,
}


# ═══════════════════════════════════════════════════════
# ENTRY POINT
# ═══════════════════════════════════════════════════════

def main(argv: Optional[List[str]] = None) -> int:
    cfg = get_config()
    configure_structured_logging(environment=cfg.ENVIRONMENT)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    try:
        run = RunConfig.from_sources(args.command, args.config, overrides_from_args(args), cfg)
        ConfigValidator.validate_run_config(run)
    except ConfigurationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE

    logger.info(LogEvents.RUN_STARTED, command=run.command, config_digest=run.digest(), seed=run.seed)
    try:
        status = HANDLERS[run.command](run)
    except (ConfigurationError, ModelFileError) as exc:
        logger.error(LogEvents.VALIDATION_ERROR, command=run.command, error=str(exc))
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, DomainError, DivergenceError, SimulationError, EvaluationError) as exc:
        logger.error(LogEvents.EXCEPTION, command=run.command, error=str(exc), error_type=type(exc).__name__)
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_FAILED

    logger.info(LogEvents.RUN_FINISHED, command=run.command, status=status)
    return status


if __name__ == '__main__':
    sys.exit(main())
