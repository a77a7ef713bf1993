"""Feedback-loop A/B testing simulator.

Thin Python face of the C++ core: environment, models, the four experiment
designs, ground-truth runs and study orchestration.
"""

from ._core import *  # noqa: F401,F403
from ._core import (
    ConfigError,
    ExperimentConfig,
    Method,
    RunSpec,
    make_run_spec,
    parse_config,
    run_study,
)

__version__ = "0.1.0"

METRICS = ("short_proportion", "stay_duration", "finishing_rate")


def study(settings, output_dir, **overrides):
    """Build a RunSpec from key=value settings and run it.

    `settings` is a dict of config keys (values may be any type with a
    sensible str()); keyword overrides win over it.
    """
    merged = {k: str(v) for k, v in {**settings, **overrides}.items()}
    spec = make_run_spec(merged)
    spec.output_dir = str(output_dir)
    return run_study(spec)
