"""Visit counts, private empirical estimates and exploration bonuses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import check_delta, check_positive_float


@dataclass(eq=False)
class VisitStatistics:
    """True counts ``N[h,s,a]``, summed costs ``C[h,s,a]`` and ``Ntrans[h,s,a,s']``."""

    N: np.ndarray
    C: np.ndarray
    Ntrans: np.ndarray

    @classmethod
    def zeros(cls, horizon, n_states, n_actions):
        shape = (horizon, n_states, n_actions)
        return cls(
            N=np.zeros(shape, dtype=np.int64),
            C=np.zeros(shape),
            Ntrans=np.zeros(shape + (n_states,), dtype=np.int64),
        )

    @property
    def shape(self):
        return self.N.shape

    def accumulate(self, traj):
        h = np.arange(len(traj))
        s, a, s_next = traj.states[:-1], traj.actions, traj.states[1:]
        # (h, s, a) indices are unique across steps of one episode
        self.N[h, s, a] += 1
        self.C[h, s, a] += traj.costs
        self.Ntrans[h, s, a, s_next] += 1
        return self


def accumulate(stats, traj):
    """Add one trajectory to ``stats`` in place and return it."""
    return stats.accumulate(traj)


def episode_increments(traj, n_states, n_actions):
    """Dense per-episode indicator and cost arrays for one trajectory."""
    H = len(traj)
    return VisitStatistics.zeros(H, n_states, n_actions).accumulate(traj)


@dataclass(eq=False)
class PrivateCounts:
    """Released (possibly noisy, possibly negative) versions of the visit statistics."""

    N: np.ndarray
    C: np.ndarray
    Ntrans: np.ndarray

    @classmethod
    def zeros(cls, horizon, n_states, n_actions):
        shape = (horizon, n_states, n_actions)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape + (n_states,)))

    @classmethod
    def from_stats(cls, stats):
        return cls(
            stats.N.astype(float), stats.C.astype(float), stats.Ntrans.astype(float)
        )


@dataclass(frozen=True)
class PrecisionLevels:
    """High-probability bounds on |released - true| for scalar and transition counts."""

    E1: float = 0.0
    E2: float = 0.0

    def __post_init__(self):
        if not (self.E1 >= 0 and self.E2 >= 0):
            raise ValueError(f"precision levels must be nonnegative, got {self}")


@dataclass(eq=False)
class PrivateEstimates:
    costs: np.ndarray
    transitions: np.ndarray


def count_denominator(N, E1):
    """``max{1, N + E1}``, elementwise."""
    return np.maximum(1.0, np.asarray(N, dtype=float) + E1)


def private_estimates(counts, prec):
    """Private mean costs and (unnormalised) transition estimates.

    Negative noisy numerators are clamped at zero before dividing.
    """
    D = count_denominator(counts.N, prec.E1)
    costs = np.maximum(counts.C, 0.0) / D
    transitions = np.maximum(counts.Ntrans, 0.0) / D[..., None]
    return PrivateEstimates(costs=costs, transitions=transitions)


def log_constants(n_states, n_actions, total_steps, delta):
    """Return ``(L_c, L_p, L')`` for confidence level ``delta`` (natural logs)."""
    for name, value in (("S", n_states), ("A", n_actions), ("T", total_steps)):
        check_positive_float(value, name)
    delta = check_delta(delta)
    SAT = n_states * n_actions * total_steps
    L_prime = math.log(6 * SAT / delta)
    L_c = math.sqrt(2 * math.log(4 * SAT / delta))
    L_p = math.sqrt(4 * n_states * L_prime)
    return L_c, L_p, L_prime


def bonus_cost(N, prec, L_c):
    D = count_denominator(N, prec.E1)
    return L_c / np.sqrt(D) + 3 * prec.E1 / D


def bonus_transition(N, prec, L_p, n_states):
    D = count_denominator(N, prec.E1)
    return L_p / np.sqrt(D) + (n_states * prec.E2 + 2 * prec.E1) / D


def bonus_pv(N, prec, L_c, n_states, horizon):
    D = count_denominator(N, prec.E1)
    return horizon * L_c / np.sqrt(D) + horizon * (n_states * prec.E2 + 2 * prec.E1) / D


@dataclass(eq=False)
class BonusTables:
    cost: np.ndarray
    transition: np.ndarray
    pv: np.ndarray


def compute_bonuses(counts, prec, n_states, horizon, total_steps, delta):
    """All three bonus tables for the released counts of one episode."""
    n_actions = counts.N.shape[2]
    L_c, L_p, _ = log_constants(n_states, n_actions, total_steps, delta)
    return BonusTables(
        cost=bonus_cost(counts.N, prec, L_c),
        transition=bonus_transition(counts.N, prec, L_p, n_states),
        pv=bonus_pv(counts.N, prec, L_c, n_states, horizon),
    )
