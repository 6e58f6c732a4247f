"""Python front end for the psync simulator.

Scenarios are plain dicts with the same keys as the JSON scenario files.
Rational quantities come back as "p/q" strings; use fractions.Fraction
to work with them exactly.
"""

import json
from fractions import Fraction

from ._impl import InfeasibleError, InputError, ScenarioError
from . import _impl

__all__ = ["run", "evaluate", "solve_report", "describe", "normalise", "rational",
           "InfeasibleError", "InputError", "ScenarioError"]


def _text(scenario):
    return scenario if isinstance(scenario, str) else json.dumps(scenario)


def rational(s):
    return Fraction(s)


def run(scenario, seed=1, trace=False):
    """Run one scenario. Returns the result dict, plus the CSV trace when trace=True."""
    result, csv = _impl.run(_text(scenario), seed, trace)
    result = json.loads(result)
    return (result, csv) if trace else result


def evaluate(scenario, seed, csv):
    return json.loads(_impl.evaluate(_text(scenario), seed, csv))


def solve_report(scenario):
    return _impl.solve_report(_text(scenario))


def describe(scenario, machines=False):
    return _impl.describe(_text(scenario), machines)


def normalise(scenario):
    return json.loads(_impl.normalise(_text(scenario)))
