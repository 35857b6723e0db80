"""Martingale Z-test for history-conditional independence of two time series."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DiagnosticsReport,
    DiagnosticWarning,
    InvalidObservationError,
    MartingaleTrace,
    Status,
    Tail,
    TestConfig,
    TestOutcome,
    TrialArrays,
    TrialObservation,
    build_trace,
    decide,
    diagnose,
    md_increment,
    run_sequential_test,
    variance_increment,
    z_to_p,
)
