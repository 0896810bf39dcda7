"""Private optimistic policy optimisation (PO) and value iteration (VI).

Both learners only ever see a rollout interface and the counts released by a
privatizer; the true transition and cost tables stay with the environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone

from .mdp import greedy_policy, uniform_policy
from .privatizers import Privatizer, make_privatizer
from .statistics import (
    bonus_cost,
    bonus_pv,
    bonus_transition,
    log_constants,
    private_estimates,
)
from .validation import (
    check_delta,
    check_positive_float,
    check_positive_int,
)


@dataclass(frozen=True, eq=False)
class EpisodeArtifacts:
    """What one episode produced: the played policy, its trajectory, optional tables."""

    episode: int
    policy: np.ndarray
    trajectory: object
    q_values: np.ndarray = None
    values: np.ndarray = None


def default_learning_rate(n_actions, horizon, n_episodes):
    """Mirror-descent step size sqrt(2 ln A / (H^2 K))."""
    return math.sqrt(2 * math.log(n_actions) / (horizon**2 * n_episodes))


def optimistic_backup(costs, transitions, bonus, policy=None):
    """Truncated optimistic Bellman recursion.

    With ``policy`` the values average Q over the policy (evaluation);
    without it they take the minimum over actions (value iteration).
    Returns ``(Q, V)`` with ``V`` of shape (H+1, S) and ``V[H] = 0``.
    """
    H, S, _ = costs.shape
    Q = np.empty(costs.shape)
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        raw = costs[h] + transitions[h] @ V[h + 1] - bonus[h]
        Q[h] = np.minimum(H - h, np.maximum(0.0, raw))
        V[h] = Q[h].min(axis=1) if policy is None else np.sum(policy[h] * Q[h], axis=1)
    return Q, V


def po_bonus(counts, prec, delta, total_steps, bonus_scale=1.0):
    """``beta_c + H * beta_p`` per (h, s, a), times ``bonus_scale``."""
    H, S, A = counts.N.shape
    L_c, L_p, _ = log_constants(S, A, total_steps, delta)
    beta = bonus_cost(counts.N, prec, L_c) + H * bonus_transition(counts.N, prec, L_p, S)
    return bonus_scale * beta


def vi_bonus(counts, prec, delta, total_steps, bonus_scale=1.0):
    """``beta_c + beta_pv`` per (h, s, a), times ``bonus_scale``."""
    H, S, A = counts.N.shape
    L_c, _, _ = log_constants(S, A, total_steps, delta)
    beta = bonus_cost(counts.N, prec, L_c) + bonus_pv(counts.N, prec, L_c, S, H)
    return bonus_scale * beta


def po_evaluate(counts, prec, policy, delta, total_steps, bonus_scale=1.0):
    """Optimistic evaluation of ``policy`` from released counts; returns (Q, V)."""
    est = private_estimates(counts, prec)
    beta = po_bonus(counts, prec, delta, total_steps, bonus_scale)
    return optimistic_backup(est.costs, est.transitions, beta, policy)


def po_improve(policy, q_values, eta):
    """Exponentiated-gradient step ``pi' ~ pi * exp(-eta * Q)`` per (h, s)."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ValueError(f"eta must be nonnegative, got {eta!r}")
    # shift in log space over the support so the largest weight is exactly 1
    with np.errstate(divide="ignore"):
        logits = np.log(policy) - eta * q_values
    peak = logits.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise ValueError("policy row with zero total mass")
    weights = np.exp(logits - peak)
    total = weights.sum(axis=-1, keepdims=True)
    return weights / total


def vi_backward(counts, prec, delta, total_steps, bonus_scale=1.0):
    """Optimistic value iteration; returns (Q, V, greedy policy)."""
    est = private_estimates(counts, prec)
    beta = vi_bonus(counts, prec, delta, total_steps, bonus_scale)
    Q, V = optimistic_backup(est.costs, est.transitions, beta)
    return Q, V, greedy_policy(Q)


def _check_compatible(env, privatizer, n_episodes):
    dims = (env.horizon, env.n_states, env.n_actions)
    pdims = (privatizer.horizon, privatizer.n_states, privatizer.n_actions)
    if dims != pdims:
        raise ValueError(f"privatizer dimensions {pdims} do not match environment {dims}")
    if privatizer.n_episodes != n_episodes:
        raise ValueError(
            f"privatizer is calibrated for {privatizer.n_episodes} episodes, run asks for {n_episodes}"
        )
    if getattr(privatizer, "n_ingested_", 0):
        raise ValueError("privatizer already holds data; pass a fresh one")


def _run(env, privatizer, n_episodes, delta, bonus_scale, rng, store_values, callback, plan):
    K = check_positive_int(n_episodes, "n_episodes")
    check_delta(delta)
    if bonus_scale < 0:
        raise ValueError(f"bonus_scale must be nonnegative, got {bonus_scale!r}")
    _check_compatible(env, privatizer, K)
    if not hasattr(privatizer, "n_ingested_"):
        privatizer.reset()
    prec = privatizer.precision_levels()
    total_steps = K * env.horizon
    counts = privatizer.release(1)
    artifacts = []
    for k in range(1, K + 1):
        policy, Q, V, beta = plan(counts, prec, total_steps)
        traj = env.rollout(policy, rng)
        privatizer.ingest(traj, k)
        if callback is not None:
            callback(k, counts, beta, Q, V, policy)
        artifacts.append(EpisodeArtifacts(
            episode=k,
            policy=policy,
            trajectory=traj,
            q_values=Q if store_values else None,
            values=V if store_values else None,
        ))
        counts = privatizer.release(k + 1)
        plan.after_episode(Q)
    plan.finish(counts, prec, total_steps)
    return artifacts


class _POPlan:
    def __init__(self, env, delta, bonus_scale, eta):
        self.delta, self.bonus_scale, self.eta = delta, bonus_scale, eta
        self.policy = uniform_policy(env.horizon, env.n_states, env.n_actions)

    def __call__(self, counts, prec, total_steps):
        beta = po_bonus(counts, prec, self.delta, total_steps, self.bonus_scale)
        est = private_estimates(counts, prec)
        Q, V = optimistic_backup(est.costs, est.transitions, beta, self.policy)
        return self.policy, Q, V, beta

    def after_episode(self, Q):
        self.policy = po_improve(self.policy, Q, self.eta)

    def finish(self, counts, prec, total_steps):
        pass


class _VIPlan:
    def __init__(self, delta, bonus_scale):
        self.delta, self.bonus_scale = delta, bonus_scale
        self.policy = None

    def __call__(self, counts, prec, total_steps):
        beta = vi_bonus(counts, prec, self.delta, total_steps, self.bonus_scale)
        est = private_estimates(counts, prec)
        Q, V = optimistic_backup(est.costs, est.transitions, beta)
        return greedy_policy(Q), Q, V, beta

    def after_episode(self, Q):
        pass

    def finish(self, counts, prec, total_steps):
        self.policy = self(counts, prec, total_steps)[0]


def run_private_ucb_po(env, privatizer, n_episodes, delta=0.1, eta=None, bonus_scale=1.0,
                       rng=None, store_values=False, callback=None, return_policy=False):
    """Run private optimistic policy optimisation for ``n_episodes`` episodes.

    ``callback(k, counts, beta, Q, V, policy)`` is invoked after every rollout.
    """
    if eta is None:
        eta = default_learning_rate(env.n_actions, env.horizon, n_episodes)
    check_positive_float(eta, "eta")
    plan = _POPlan(env, delta, bonus_scale, eta)
    rng = rng if rng is not None else np.random.default_rng()
    artifacts = _run(env, privatizer, n_episodes, delta, bonus_scale, rng, store_values,
                     callback, plan)
    return (artifacts, plan.policy) if return_policy else artifacts


def run_private_ucb_vi(env, privatizer, n_episodes, delta=0.1, bonus_scale=1.0, rng=None,
                       store_values=False, callback=None, return_policy=False):
    """Run private optimistic value iteration for ``n_episodes`` episodes."""
    plan = _VIPlan(delta, bonus_scale)
    rng = rng if rng is not None else np.random.default_rng()
    artifacts = _run(env, privatizer, n_episodes, delta, bonus_scale, rng, store_values,
                     callback, plan)
    return (artifacts, plan.policy) if return_policy else artifacts


class _PrivateLearner(BaseEstimator):
    def _make_privatizer(self, env, seed):
        if isinstance(self.privatizer, Privatizer):
            return clone(self.privatizer).reset()
        return make_privatizer(self.privatizer, self.n_episodes, env.horizon, env.n_states,
                               env.n_actions, epsilon=self.epsilon, delta=self.delta,
                               random_state=seed)

    def _seeds(self):
        env_seq, priv_seq = np.random.SeedSequence(self.random_state).spawn(2)
        return np.random.default_rng(env_seq), np.random.default_rng(priv_seq)

    def _check_env(self, env):
        for name in ("horizon", "n_states", "n_actions"):
            check_positive_int(getattr(env, name), f"env.{name}")
        if not callable(getattr(env, "rollout", None)):
            raise TypeError("env must provide rollout(policy, rng)")

    def predict_proba(self, X):
        """Action probabilities of the learned policy at (step, state) rows of ``X``."""
        if not hasattr(self, "policy_"):
            raise AttributeError(f"{type(self).__name__} is not fitted yet; call fit(env)")
        X = np.asarray(X, dtype=int).reshape(-1, 2)
        return self.policy_[X[:, 0], X[:, 1]]

    def predict(self, X):
        """Most probable action at each (step, state) row of ``X``."""
        return np.argmax(self.predict_proba(X), axis=1)


class PrivateUCBPO(_PrivateLearner):
    """Optimistic policy optimisation with privatized counts.

    Parameters
    ----------
    n_episodes : int
        Number of episodes K.
    privatizer : {"identity", "central", "local"} or Privatizer
        Mechanism releasing the counts.  An instance is cloned before use.
    epsilon, delta : float
        Privacy and confidence levels.
    eta : float, optional
        Mirror-descent step size; defaults to sqrt(2 ln A / (H^2 K)).
    bonus_scale : float
        Multiplier on the exploration bonus.
    random_state : int or None
    store_values : bool
        Keep the per-episode Q and V tables in ``episodes_``.

    Attributes
    ----------
    episodes_ : list of EpisodeArtifacts
    policy_ : ndarray of shape (H, S, A)
        Policy after the final improvement step.
    precision_ : PrecisionLevels
    """

    def __init__(self, n_episodes=1000, privatizer="central", epsilon=1.0, delta=0.1, eta=None,
                 bonus_scale=1.0, random_state=None, store_values=False):
        self.n_episodes = n_episodes
        self.privatizer = privatizer
        self.epsilon = epsilon
        self.delta = delta
        self.eta = eta
        self.bonus_scale = bonus_scale
        self.random_state = random_state
        self.store_values = store_values

    def fit(self, env, callback=None):
        self._check_env(env)
        env_rng, priv_rng = self._seeds()
        self.privatizer_ = self._make_privatizer(env, priv_rng)
        self.precision_ = self.privatizer_.precision_levels()
        self.eta_ = self.eta if self.eta is not None else default_learning_rate(
            env.n_actions, env.horizon, self.n_episodes)
        self.episodes_, self.policy_ = run_private_ucb_po(
            env, self.privatizer_, self.n_episodes, self.delta, self.eta_, self.bonus_scale,
            env_rng, self.store_values, callback, return_policy=True)
        return self


class PrivateUCBVI(_PrivateLearner):
    """Optimistic value iteration with privatized counts and greedy policies.

    Parameters are those of :class:`PrivateUCBPO` without ``eta``.
    ``policy_`` is the greedy policy computed from the counts released after
    the last episode.
    """

    def __init__(self, n_episodes=1000, privatizer="central", epsilon=1.0, delta=0.1,
                 bonus_scale=1.0, random_state=None, store_values=False):
        self.n_episodes = n_episodes
        self.privatizer = privatizer
        self.epsilon = epsilon
        self.delta = delta
        self.bonus_scale = bonus_scale
        self.random_state = random_state
        self.store_values = store_values

    def fit(self, env, callback=None):
        self._check_env(env)
        env_rng, priv_rng = self._seeds()
        self.privatizer_ = self._make_privatizer(env, priv_rng)
        self.precision_ = self.privatizer_.precision_levels()
        self.episodes_, self.policy_ = run_private_ucb_vi(
            env, self.privatizer_, self.n_episodes, self.delta, self.bonus_scale, env_rng,
            self.store_values, callback, return_policy=True)
        return self


LEARNERS = {"po": PrivateUCBPO, "vi": PrivateUCBVI}

