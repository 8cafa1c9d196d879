"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numpy as np

from .exceptions import ModelValidationError, TrajectoryError
from .model import CtmnModel, validate_model
from .simulate import AugmentedTrajectory, Trajectory, strip_proposals


def check_model(model: CtmnModel) -> CtmnModel:
    if not isinstance(model, CtmnModel):
        raise TypeError(f"expected a CtmnModel, got {type(model).__name__}")
    violations = validate_model(model)
    if violations:
        raise ModelValidationError(violations)
    return model


def check_trajectory(traj, cardinalities) -> Trajectory:
    """Validate one observed trajectory (augmented ones are stripped first)."""
    if isinstance(traj, AugmentedTrajectory):
        traj = strip_proposals(traj)
    if not isinstance(traj, Trajectory):
        raise TypeError(f"expected a Trajectory, got {type(traj).__name__}")
    states = traj.states
    if states.shape[1] != len(cardinalities):
        raise TrajectoryError(f"trajectory has {states.shape[1]} variables, model has {len(cardinalities)}")
    if np.any(states < 0) or np.any(states >= np.asarray(cardinalities)):
        raise TrajectoryError("trajectory contains values outside the variables' domains")
    if not traj.horizon > 0:
        raise TrajectoryError(f"horizon must be positive, got {traj.horizon}")
    if np.any(traj.dwells <= 0):
        raise TrajectoryError("jump times must be strictly increasing inside (0, horizon)")
    if len(states) > 1:
        changed = (states[1:] != states[:-1]).sum(axis=1)
        bad = np.flatnonzero(changed != 1)
        if bad.size:
            raise TrajectoryError(
                f"transition {int(bad[0])} changes {int(changed[bad[0]])} variables; exactly one may change"
            )
    return traj


def check_trajectories(X, model: CtmnModel) -> list:
    """Normalize ``X`` (one trajectory or an iterable of them) to a validated list."""
    if isinstance(X, (Trajectory, AugmentedTrajectory)):
        X = [X]
    out = [check_trajectory(t, model.cardinalities) for t in X]
    if not out:
        raise ValueError("no trajectories given")
    return out


def check_distribution(p, n=None, atol=1e-10) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (n is not None and p.shape[0] != n):
        raise ValueError(f"expected a probability vector of length {n}, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError("probability vector must be non-negative and sum to one")
    return p
