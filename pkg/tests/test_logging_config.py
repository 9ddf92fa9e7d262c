"""
Tests voor logging_config.py - Logging module
"""
import logging

import pytest

from logging_config import LogEvents, get_logger, configure_structured_logging


class TestLogEvents:
    """Test LogEvents constanten"""

    def test_run_events_defined(self):
        assert LogEvents.RUN_STARTED == "run_started"
        assert LogEvents.RUN_FINISHED == "run_finished"
        assert LogEvents.ARTIFACT_WRITTEN == "artifact_written"

    def test_solver_events_defined(self):
        assert LogEvents.SOLVE_FINISHED == "solve_finished"
        assert LogEvents.SOLVE_NOT_CONVERGED == "solve_not_converged"
        assert LogEvents.CFL_VIOLATION == "cfl_violation"

    def test_simulation_events_defined(self):
        assert LogEvents.SIMULATION_FINISHED == "simulation_finished"
        assert LogEvents.PATHS_EXCLUDED == "paths_excluded"

    def test_config_events_defined(self):
        assert LogEvents.CONFIG_VALIDATION_FAILED == "configuration_validation_failed"


class TestGetLogger:
    """Test logger factory"""

    def test_returns_logger(self):
        assert get_logger('test') is not None

    def test_default_name(self):
        assert get_logger() is not None


class TestConfigureLogging:
    """Test logging configuratie"""

    def test_development_config(self):
        logger = configure_structured_logging(app_name='test-app', environment='development')
        assert logger is not None
        assert logging.getLogger().level == logging.DEBUG

    def test_production_config(self):
        logger = configure_structured_logging(app_name='test-app', environment='production')
        assert logger is not None
        assert logging.getLogger().level == logging.INFO

    def test_testing_config_is_quiet(self):
        configure_structured_logging(environment='testing')
        assert logging.getLogger().level == logging.WARNING

    def test_repeated_configuration_keeps_one_handler(self):
        configure_structured_logging(environment='testing')
        configure_structured_logging(environment='testing')
        handlers = [h for h in logging.getLogger().handlers if getattr(h, '_hjb_lab_handler', False)]
        assert len(handlers) == 1
