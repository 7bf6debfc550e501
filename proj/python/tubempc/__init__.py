"""Tube-based smooth MPC for a planar 3-link arm."""

import json

from ._core import (
    NumericalError,
    controller_names,
    dynamics,
    forward_kinematics,
    initial_state,
    linearize,
    solve_dare,
    solve_qp,
    step_nominal,
    tube_radius,
)
from ._core import run_simulation as _run_simulation

__all__ = [
    "NumericalError",
    "controller_names",
    "dynamics",
    "forward_kinematics",
    "initial_state",
    "linearize",
    "run_simulation",
    "solve_dare",
    "solve_qp",
    "step_nominal",
    "tube_radius",
]


def run_simulation(controller, task="position", seed=0, duration=0, eta1=-1.0,
                   disturbance=True):
    """Closed-loop run; returns metrics as a dict plus state/input arrays."""
    out = _run_simulation(controller, task, seed, duration, eta1, disturbance)
    out["metrics"] = json.loads(out.pop("metrics_json"))
    return out
