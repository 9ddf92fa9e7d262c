"""
HJB Discount Lab - Exceptions
Foutklassen voor model evaluatie, solvers, simulatie en configuratie
"""


class HJBLabError(Exception):
    """Basis voor alle toolkit fouten"""


class ParameterError(HJBLabError, ValueError):
    """Ongeldige parameter, o.a. een geschonden CFL voorwaarde"""

    def __init__(self, message, min_steps=None):
        super().__init__(message)
        self.min_steps = min_steps


class EvaluationError(HJBLabError, ArithmeticError):
    """Coefficient gaf een niet-eindige waarde op een eindig punt"""

    def __init__(self, coefficient, point=None, control=None, message=None):
        self.coefficient = coefficient
        self.point = None if point is None else [float(x) for x in point]
        self.control = None if control is None else [float(x) for x in control]
        if message is None:
            message = f"non-finite value of '{coefficient}' at y={self.point}"
            if self.control is not None:
                message += f", control={self.control}"
        super().__init__(message)


class DomainError(HJBLabError, ValueError):
    """Argument buiten het domein van een formule (bv. u <= 0, x <= 0)"""


class DivergenceError(HJBLabError, RuntimeError):
    """Solver of estimator is ontspoord"""

    def __init__(self, message, node=None, step=None):
        super().__init__(message)
        self.node = node
        self.step = step


class SimulationError(HJBLabError, RuntimeError):
    """Monte Carlo run overschrijdt het exclusie budget"""

    def __init__(self, message, excluded=0, paths=0):
        super().__init__(message)
        self.excluded = excluded
        self.paths = paths


class ModelFileError(HJBLabError, ValueError):
    """Model- of marktbestand kan niet gelezen worden"""


class ConfigurationError(HJBLabError, ValueError):
    """Run configuratie is onvolledig of ongeldig"""
