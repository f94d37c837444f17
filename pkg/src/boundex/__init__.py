"""Simulation and analysis toolkit for a donor-bound exciton single-photon emitter.

Modules: ``spectral`` (line shapes), ``correlation`` (g2 models and the
coincidence estimator), ``interferometry`` (Jones calculus and LO/RF
interference), ``dynamics`` (charge-state rate equations), ``montecarlo``
(stochastic trajectories and detection), ``fitting`` (Levenberg-Marquardt),
plus ``preset``, ``figures``, ``experiments``, ``acceptance``, ``config`` and
the ``cli``.
"""

from .errors import CalibrationError, ConfigError, DomainError, FormatError, IntegrationError

__version__ = "0.1.0"

__all__ = ["CalibrationError", "ConfigError", "DomainError", "FormatError", "IntegrationError",
           "__version__"]
