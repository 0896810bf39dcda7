"""Finite-horizon tabular MDPs: construction, simulation and exact evaluation.

Steps are 0-indexed throughout: ``h`` runs over ``0 .. H-1`` and value tables
carry one extra terminal row ``V[H] = 0``.  Costs are minimised.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .validation import (
    check_index,
    check_policy,
    check_positive_int,
    check_stochastic,
)

COST_NOISE = ("bernoulli", "deterministic")

LEFT, RIGHT = 0, 1


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class MdpSpec:
    """Ground-truth episodic MDP.

    Parameters
    ----------
    transitions : array of shape (H, S, A, S)
        ``transitions[h, s, a, s']`` is the probability of moving to ``s'``.
    mean_costs : array of shape (H, S, A)
        Mean of the cost distribution, each entry in [0, 1].
    initial_state : int
        Fixed start state of every episode.
    cost_noise : {"bernoulli", "deterministic"}
        How realised costs are drawn around their mean.
    """

    transitions: np.ndarray
    mean_costs: np.ndarray
    initial_state: int = 0
    cost_noise: str = "bernoulli"

    def __post_init__(self):
        P = _frozen(self.transitions)
        c = _frozen(self.mean_costs)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ValueError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        if c.shape != P.shape[:3]:
            raise ValueError(f"mean_costs has shape {c.shape}, expected {P.shape[:3]}")
        check_stochastic(P, "transitions")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c > 1):
            raise ValueError("mean_costs must lie in [0, 1]")
        if self.cost_noise not in COST_NOISE:
            raise ValueError(f"cost_noise must be one of {COST_NOISE}, got {self.cost_noise!r}")
        check_index(self.initial_state, P.shape[1], "initial_state")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "mean_costs", c)
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @property
    def horizon(self):
        return self.transitions.shape[0]

    @property
    def n_states(self):
        return self.transitions.shape[1]

    @property
    def n_actions(self):
        return self.transitions.shape[2]

    @cached_property
    def _cum_transitions(self):
        cum = np.cumsum(self.transitions, axis=-1)
        cum[..., -1] = 1.0
        return cum

    def to_dict(self):
        return {
            "S": self.n_states,
            "A": self.n_actions,
            "H": self.horizon,
            "initial_state": self.initial_state,
            "transitions": self.transitions.tolist(),
            "mean_costs": self.mean_costs.tolist(),
            "cost_noise": self.cost_noise,
        }

    @classmethod
    def from_dict(cls, data):
        missing = {"S", "A", "H", "transitions", "mean_costs"} - set(data)
        if missing:
            raise ValueError(f"MDP document is missing keys: {sorted(missing)}")
        S = check_positive_int(data["S"], "S")
        A = check_positive_int(data["A"], "A")
        H = check_positive_int(data["H"], "H")
        P = np.asarray(data["transitions"], dtype=float)
        c = np.asarray(data["mean_costs"], dtype=float)
        if P.shape != (H, S, A, S):
            raise ValueError(f"transitions has shape {P.shape}, expected {(H, S, A, S)}")
        return cls(
            transitions=P,
            mean_costs=c,
            initial_state=data.get("initial_state", 0),
            cost_noise=data.get("cost_noise", "bernoulli"),
        )


def save_mdp(mdp, path):
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=1))


def load_mdp(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return MdpSpec.from_dict(data)


@dataclass(frozen=True)
class RiverSwimParams:
    """Numeric knobs of the RiverSwim chain.

    ``right_probs`` is the (back, stay, forward) triple of the "right" action in
    interior states; at state 0 the back mass folds into staying.  At the last
    state the right action follows ``right_end_probs`` = (back, stay).
    """

    n_states: int = 6
    horizon: int = 20
    right_probs: tuple = (0.1, 0.6, 0.3)
    right_end_probs: tuple = (0.4, 0.6)
    left_end_cost: float = 0.995
    goal_cost: float = 0.0
    default_cost: float = 1.0
    cost_noise: str = "bernoulli"
    initial_state: int = 0


def build_riverswim(params=None):
    """Build the stationary RiverSwim MDP (action 0 = left, action 1 = right)."""
    params = params or RiverSwimParams()
    S = check_positive_int(params.n_states, "n_states")
    H = check_positive_int(params.horizon, "horizon")
    if S < 2:
        raise ValueError("RiverSwim needs at least two states")
    for name in ("right_probs", "right_end_probs"):
        triple = np.asarray(getattr(params, name), dtype=float)
        if np.any(triple < 0) or abs(triple.sum() - 1.0) > 1e-12:
            raise ValueError(f"{name}={getattr(params, name)!r} is not a probability vector")
    back, stay, forward = params.right_probs
    end_back, end_stay = params.right_end_probs

    P = np.zeros((S, 2, S))
    for s in range(S):
        P[s, LEFT, max(s - 1, 0)] = 1.0
    P[0, RIGHT, 0] = back + stay
    P[0, RIGHT, 1] = forward
    for s in range(1, S - 1):
        P[s, RIGHT, s - 1] = back
        P[s, RIGHT, s] = stay
        P[s, RIGHT, s + 1] = forward
    P[S - 1, RIGHT, S - 2] = end_back
    P[S - 1, RIGHT, S - 1] = end_stay

    c = np.full((S, 2), float(params.default_cost))
    c[0, LEFT] = params.left_end_cost
    c[S - 1, RIGHT] = params.goal_cost
    return MdpSpec(
        transitions=np.broadcast_to(P, (H,) + P.shape),
        mean_costs=np.broadcast_to(c, (H,) + c.shape),
        initial_state=params.initial_state,
        cost_noise=params.cost_noise,
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode: ``states`` has H+1 entries, the others H."""

    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray

    def __len__(self):
        return len(self.actions)

    @property
    def next_states(self):
        return self.states[1:]

    def steps(self):
        """Iterate over ``(s_h, a_h, c_h, s_{h+1})`` tuples."""
        return zip(
            self.states[:-1].tolist(),
            self.actions.tolist(),
            self.costs.tolist(),
            self.states[1:].tolist(),
        )


def _draw_cost(mdp, mean, u):
    if mdp.cost_noise == "deterministic":
        return mean
    return 1.0 if u < mean else 0.0


def step(mdp, s, a, h, rng):
    """Sample ``(cost, next_state)`` for taking action ``a`` in state ``s`` at step ``h``."""
    check_index(h, mdp.horizon, "h")
    check_index(s, mdp.n_states, "s")
    check_index(a, mdp.n_actions, "a")
    u_next, u_cost = rng.random(2)
    nxt = int(np.searchsorted(mdp._cum_transitions[h, s, a], u_next, side="right"))
    return _draw_cost(mdp, float(mdp.mean_costs[h, s, a]), u_cost), min(nxt, mdp.n_states - 1)


def rollout(mdp, policy, rng, validate=True):
    """Roll out one episode of ``policy`` from the fixed initial state."""
    H, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    if validate:
        policy = check_policy(policy, H, S, A, atol=1e-9)
    cum_pi = np.cumsum(policy, axis=-1)
    cum_P = mdp._cum_transitions
    costs_mean = mdp.mean_costs
    u = rng.random((H, 3))
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    costs = np.empty(H)
    s = mdp.initial_state
    states[0] = s
    for h in range(H):
        a = min(int(np.searchsorted(cum_pi[h, s], u[h, 0], side="right")), A - 1)
        s_next = min(int(np.searchsorted(cum_P[h, s, a], u[h, 1], side="right")), S - 1)
        actions[h] = a
        costs[h] = _draw_cost(mdp, costs_mean[h, s, a], u[h, 2])
        states[h + 1] = s = s_next
    return Trajectory(states=states, actions=actions, costs=costs)


class RolloutEnv:
    """Rollout-only view of an MDP handed to learners.

    Learners see the dimensions and can sample episodes, nothing else.
    """

    def __init__(self, mdp):
        self._mdp = mdp

    @property
    def horizon(self):
        return self._mdp.horizon

    @property
    def n_states(self):
        return self._mdp.n_states

    @property
    def n_actions(self):
        return self._mdp.n_actions

    def rollout(self, policy, rng):
        return rollout(self._mdp, policy, rng, validate=False)


def policy_q_values(mdp, policy):
    """Exact Q and V tables of ``policy`` by backward recursion."""
    H, S = mdp.horizon, mdp.n_states
    V = np.zeros((H + 1, S))
    Q = np.zeros(mdp.mean_costs.shape)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.mean_costs[h] + mdp.transitions[h] @ V[h + 1]
        V[h] = np.sum(policy[h] * Q[h], axis=-1)
    return Q, V


def exact_policy_value(mdp, policy):
    """Value table ``V[h, s]`` of ``policy``; ``V[H]`` is identically zero."""
    policy = check_policy(policy, mdp.horizon, mdp.n_states, mdp.n_actions, atol=1e-9)
    return policy_q_values(mdp, policy)[1]


def initial_values(mdp, policies):
    """``V_1^pi(s_1)`` for a stack of policies of shape (K, H, S, A)."""
    policies = np.asarray(policies, dtype=float)
    K = policies.shape[0]
    V = np.zeros((K, mdp.n_states))
    for h in range(mdp.horizon - 1, -1, -1):
        Q = mdp.mean_costs[h][None] + np.einsum("sat,kt->ksa", mdp.transitions[h], V)
        V = np.sum(policies[:, h] * Q, axis=-1)
    return V[:, mdp.initial_state]


def greedy_policy(Q):
    """One-hot argmin policy over the last axis; ties go to the smallest index."""
    policy = np.zeros(Q.shape)
    np.put_along_axis(policy, np.argmin(Q, axis=-1)[..., None], 1.0, axis=-1)
    return policy


def optimal_values(mdp):
    """Optimal value table and a deterministic optimal policy."""
    H, S = mdp.horizon, mdp.n_states
    V = np.zeros((H + 1, S))
    Q = np.zeros(mdp.mean_costs.shape)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.mean_costs[h] + mdp.transitions[h] @ V[h + 1]
        V[h] = Q[h].min(axis=-1)
    return V, greedy_policy(Q)


def uniform_policy(horizon, n_states, n_actions):
    return np.full((horizon, n_states, n_actions), 1.0 / n_actions)
