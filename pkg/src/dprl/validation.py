"""Input validation helpers shared by the environment, learners and harness."""

from __future__ import annotations

import numbers

import numpy as np

SIMPLEX_ATOL = 1e-12


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positive_float(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_delta(delta, name="delta"):
    if isinstance(delta, bool) or not isinstance(delta, numbers.Real) or not 0 < delta <= 1:
        raise ValueError(f"{name} must lie in (0, 1], got {delta!r}")
    return float(delta)


def check_index(value, upper, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or not 0 <= value < upper:
        raise IndexError(f"{name}={value!r} out of range [0, {upper})")
    return int(value)


def check_stochastic(array, name, atol=SIMPLEX_ATOL):
    """Validate that the last axis of ``array`` holds probability vectors."""
    array = np.asarray(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(array < 0):
        raise ValueError(f"{name} contains negative probabilities")
    sums = array.sum(axis=-1)
    bad = np.abs(sums - 1.0) > atol
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name} row {where} sums to {sums[where]!r}, expected 1")
    return array


def check_policy(policy, horizon, n_states, n_actions, atol=SIMPLEX_ATOL):
    policy = np.asarray(policy, dtype=float)
    expected = (horizon, n_states, n_actions)
    if policy.shape != expected:
        raise ValueError(f"policy has shape {policy.shape}, expected {expected}")
    return check_stochastic(policy, "policy", atol=atol)
