"""
HJB Discount Lab - Structured Logging Configuration
Gestructureerde logging voor solver runs, simulaties en assumption checks
"""
import structlog
import logging
import sys


def configure_structured_logging(app_name='hjb-lab', environment='production'):
    """
    Configure structured logging

    Features:
    - JSON output in production (machine-readable run logs)
    - Console renderer in development
    - Logs gaan naar stderr, artifacts op disk blijven byte-identiek
    """

    if environment == 'development':
        log_level = logging.DEBUG
    elif environment == 'testing':
        log_level = logging.WARNING
    else:
        log_level = logging.INFO

    processors = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
    ]

    if environment == 'production':
        processors.append(structlog.processors.JSONRenderer(sort_keys=True))
    else:
        processors.append(structlog.dev.ConsoleRenderer())

    structlog.configure(
        processors=processors,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(message)s'))

    root_logger = logging.getLogger()
    # Herhaald configureren (tests, meerdere CLI calls) mag geen dubbele regels geven
    for existing in list(root_logger.handlers):
        if getattr(existing, '_hjb_lab_handler', False):
            root_logger.removeHandler(existing)
    handler._hjb_lab_handler = True
    root_logger.addHandler(handler)
    root_logger.setLevel(log_level)

    return structlog.get_logger(app_name)


def get_logger(name='hjb-lab'):
    """Get a configured structlog logger instance"""
    return structlog.get_logger(name)


class LogEvents:
    """Structured logging event names voor consistency"""

    # Configuration events
    CONFIG_VALIDATION_PASSED = "configuration_validation_passed"
    CONFIG_VALIDATION_FAILED = "configuration_validation_failed"
    CONFIG_VALIDATION_WARNING = "configuration_validation_warning"

    # Run lifecycle
    RUN_STARTED = "run_started"
    RUN_FINISHED = "run_finished"
    ARTIFACT_WRITTEN = "artifact_written"

    # Model events
    MODEL_LOADED = "model_loaded"
    ASSUMPTION_CHECK = "assumption_check"
    ASSUMPTION_VIOLATED = "assumption_violated"
    KAPPA_ESTIMATED = "kappa_estimated"
    KAPPA_DIVERGENCE = "kappa_divergence"
    KAPPA_EXTRAPOLATED = "kappa_extrapolated"

    # Solver events
    SOLVE_STARTED = "solve_started"
    SOLVE_FINISHED = "solve_finished"
    SOLVE_NOT_CONVERGED = "solve_not_converged"
    CFL_VIOLATION = "cfl_violation"
    SOLVER_DIVERGENCE = "solver_divergence"

    # Simulation events
    SIMULATION_FINISHED = "simulation_finished"
    PATHS_EXCLUDED = "paths_excluded"
    BOUND_CHECK = "bound_check"
    HORIZON_CONVERGENCE = "horizon_convergence"

    # Finance events
    MARKET_SCREEN_WARNING = "market_screen_warning"
    MERTON_BENCHMARK = "merton_benchmark"

    # Error events
    EXCEPTION = "exception"
    VALIDATION_ERROR = "validation_error"
