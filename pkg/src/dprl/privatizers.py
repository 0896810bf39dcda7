"""Privatizers turning per-episode visit statistics into released counts.

Three mechanisms share one interface (``ingest`` once per finished episode,
``release`` before the next one, ``precision_levels`` for the bonuses):

* ``IdentityPrivatizer`` releases exact counts (no privacy).
* ``CentralPrivatizer`` runs one K-bounded binary-tree counter per statistic
  cell (joint DP).
* ``LocalPrivatizer`` perturbs every per-episode cell with Laplace noise
  before aggregation (local DP).
"""

from __future__ import annotations

import csv
import math

import numpy as np
from sklearn.base import BaseEstimator

from .mdp import Trajectory
from .statistics import PrecisionLevels, PrivateCounts, VisitStatistics
from .validation import check_delta, check_positive_float, check_positive_int

MECHANISMS = ("identity", "central", "local")


def dyadic_cover(n):
    """Disjoint dyadic intervals covering ``[1, n]``, largest first.

    >>> dyadic_cover(7)
    [(1, 4), (5, 6), (7, 7)]
    """
    cover = []
    start = 1
    for level in reversed(range(int(n).bit_length())):
        if n >> level & 1:
            cover.append((start, start + (1 << level) - 1))
            start += 1 << level
    return cover


def laplace_from_uniform(u, scale):
    """Inverse CDF of the centred Laplace distribution evaluated at ``u`` in (0, 1)."""
    u = np.asarray(u, dtype=float) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_sample(scale, rng, size=None):
    """Draw Laplace(``scale``) variates from one uniform each."""
    scale = check_positive_float(scale, "scale")
    u = rng.random(size)
    # rng.random() is in [0, 1); u == 0 would map to -inf
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    out = laplace_from_uniform(u, scale)
    return float(out) if size is None else out


def laplace_noise(scale, shape, rng):
    return laplace_sample(scale, rng, size=shape)


def zero_noise(scale, shape, rng):
    """Test hook: a noise source that always returns zeros."""
    return np.zeros(shape)


def tree_depth(n_episodes):
    """Number of tree levels a leaf can belong to, ``ceil(log2(K + 1))``.

    This equals ``ceil(log2 K)`` except at powers of two, where the root node
    covering all K episodes adds one level.  It also bounds the number of
    nodes summed by any release.
    """
    return check_positive_int(n_episodes, "n_episodes").bit_length()


class BinaryTreeCounter:
    """K-bounded binary mechanism over a stream of arrays of fixed ``shape``.

    Each array cell is an independent counter.  Only the noisy P-sums still
    needed for future prefix releases are kept: one per tree level.

    Parameters
    ----------
    capacity : int
        Maximum number of items K.
    noise_scale : float
        Laplace scale applied to every P-sum node.
    shape : tuple
        Shape of each streamed item.
    rng : numpy.random.Generator
    noise : callable, optional
        ``noise(scale, shape, rng)``; defaults to Laplace noise.
    log_noise : bool
        Record every node's noise draw in ``noise_log``.
    """

    def __init__(self, capacity, noise_scale, shape=(), rng=None, noise=None, log_noise=False):
        self.capacity = check_positive_int(capacity, "capacity")
        self.noise_scale = check_positive_float(noise_scale, "noise_scale")
        self.shape = tuple(shape)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.noise = noise or laplace_noise
        levels = self.capacity.bit_length()
        self._exact = np.zeros((levels,) + self.shape)
        self._noisy = np.zeros((levels,) + self.shape)
        self.n_items = 0
        self.noise_log = [] if log_noise else None

    def add(self, item):
        if self.n_items >= self.capacity:
            raise ValueError(f"counter capacity {self.capacity} exhausted")
        self.n_items = t = self.n_items + 1
        level = (t & -t).bit_length() - 1
        exact = self._exact[:level].sum(axis=0) + item
        self._exact[:level] = 0.0
        self._noisy[:level] = 0.0
        noise = np.asarray(self.noise(self.noise_scale, self.shape, self.rng), dtype=float)
        self._exact[level] = exact
        self._noisy[level] = exact + noise
        if self.noise_log is not None:
            self.noise_log.append(((t - (1 << level) + 1, t), noise.copy()))
        return self

    def live_levels(self):
        return [j for j in range(self._noisy.shape[0]) if self.n_items >> j & 1]

    def prefix_sum(self):
        """Noisy sum of all items so far, from ``popcount(n_items)`` stored nodes."""
        levels = self.live_levels()
        if not levels:
            return np.zeros(self.shape)
        return self._noisy[levels].sum(axis=0)


def precision_levels(mechanism, epsilon, delta, n_episodes, horizon, n_states, n_actions,
                     total_steps=None):
    """Precision levels ``(E1, E2)`` certified by each mechanism.

    ``total_steps`` defaults to ``n_episodes * horizon``.  Logs are natural,
    except that the central bound uses the tree depth in place of ``log K`` so
    that it matches the noise the tree actually adds.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown privatizer {mechanism!r}; expected one of {MECHANISMS}")
    if mechanism == "identity":
        return PrecisionLevels(0.0, 0.0)
    epsilon = check_positive_float(epsilon, "epsilon")
    delta = check_delta(delta)
    K, H, S, A = n_episodes, horizon, n_states, n_actions
    T = K * H if total_steps is None else total_steps
    log_1 = math.log(6 * S * A * T / delta)
    log_2 = math.log(6 * S * S * A * T / delta)
    if mechanism == "central":
        spread = 8 * tree_depth(K) ** 3
    else:
        spread = 8 * K
    scale = 3 * H / epsilon
    return PrecisionLevels(scale * math.sqrt(spread * log_1), scale * math.sqrt(spread * log_2))


def _as_increments(episode, n_states, n_actions):
    if isinstance(episode, Trajectory):
        return VisitStatistics.zeros(len(episode), n_states, n_actions).accumulate(episode)
    return episode


class Privatizer(BaseEstimator):
    """Common bookkeeping for all mechanisms.

    Parameters
    ----------
    n_episodes, horizon, n_states, n_actions : int
        Problem dimensions; ``n_episodes`` is K.
    epsilon : float
        Privacy level.
    delta : float
        Confidence level for the precision levels.
    random_state : int, Generator or None
    noise : callable, optional
        Replacement noise source ``noise(scale, shape, rng)``.
    """

    mechanism = None

    def __init__(self, n_episodes, horizon, n_states, n_actions, epsilon=1.0, delta=0.1,
                 random_state=None, noise=None):
        self.n_episodes = n_episodes
        self.horizon = horizon
        self.n_states = n_states
        self.n_actions = n_actions
        self.epsilon = epsilon
        self.delta = delta
        self.random_state = random_state
        self.noise = noise

    def _validate(self):
        check_positive_int(self.n_episodes, "n_episodes")
        for name in ("horizon", "n_states", "n_actions"):
            check_positive_int(getattr(self, name), name)
        check_positive_float(self.epsilon, "epsilon")
        check_delta(self.delta)

    def _shapes(self):
        base = (self.horizon, self.n_states, self.n_actions)
        return base, base + (self.n_states,)

    def reset(self):
        self._validate()
        self.rng_ = np.random.default_rng(self.random_state)
        self.n_ingested_ = 0
        self._init_state()
        return self

    def _check_ready(self):
        if not hasattr(self, "n_ingested_"):
            self.reset()

    def ingest(self, episode, k=None):
        """Absorb episode ``k`` (1-based; defaults to the next one).

        ``episode`` is a :class:`Trajectory` or its per-episode
        :class:`VisitStatistics` increments.
        """
        self._check_ready()
        expected = self.n_ingested_ + 1
        if k is not None and k != expected:
            raise ValueError(f"episode {k} ingested out of order; expected episode {expected}")
        if expected > self.n_episodes:
            raise ValueError(f"privatizer configured for {self.n_episodes} episodes")
        self._ingest(_as_increments(episode, self.n_states, self.n_actions))
        self.n_ingested_ = expected
        return self

    def release(self, k=None):
        """Counts released at the start of episode ``k`` (requires k-1 ingested episodes)."""
        self._check_ready()
        if k is not None and k - 1 != self.n_ingested_:
            raise ValueError(
                f"release for episode {k} needs {k - 1} ingested episodes, have {self.n_ingested_}"
            )
        return self._release()

    def precision_levels(self, total_steps=None):
        return precision_levels(self.mechanism, self.epsilon, self.delta, self.n_episodes,
                                self.horizon, self.n_states, self.n_actions, total_steps)


class IdentityPrivatizer(Privatizer):
    """Releases the exact counts."""

    mechanism = "identity"

    def _init_state(self):
        self.stats_ = VisitStatistics.zeros(self.horizon, self.n_states, self.n_actions)

    def _ingest(self, inc):
        self.stats_.N += inc.N
        self.stats_.C += inc.C
        self.stats_.Ntrans += inc.Ntrans

    def _release(self):
        return PrivateCounts.from_stats(self.stats_)


class CentralPrivatizer(Privatizer):
    """One binary-tree counter per cell of N, C and Ntrans.

    Each node gets Laplace noise of scale ``3 H d / epsilon`` with ``d = tree_depth(K)``.
    Set ``log_noise=True`` to keep every node draw in ``noise_logs_``.
    """

    mechanism = "central"

    def __init__(self, n_episodes, horizon, n_states, n_actions, epsilon=1.0, delta=0.1,
                 random_state=None, noise=None, log_noise=False):
        super().__init__(n_episodes, horizon, n_states, n_actions, epsilon, delta,
                         random_state, noise)
        self.log_noise = log_noise

    @property
    def noise_scale(self):
        return 3 * self.horizon * tree_depth(self.n_episodes) / self.epsilon

    def _init_state(self):
        scalar, trans = self._shapes()

        def counter(shape):
            return BinaryTreeCounter(self.n_episodes, self.noise_scale, shape, self.rng_,
                                     self.noise, self.log_noise)

        self.counters_ = {"N": counter(scalar), "C": counter(scalar), "Ntrans": counter(trans)}

    @property
    def noise_logs_(self):
        return {name: c.noise_log for name, c in self.counters_.items()}

    def _ingest(self, inc):
        for name, counter in self.counters_.items():
            counter.add(getattr(inc, name))

    def _release(self):
        return PrivateCounts(**{name: c.prefix_sum() for name, c in self.counters_.items()})

    def write_noise_log(self, path):
        """Dump every logged node draw as ``statistic,start,end,step,state,action,next_state,noise``."""
        if not self.log_noise:
            raise ValueError("noise log disabled; construct with log_noise=True")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("statistic", "start", "end", "step", "state", "action",
                             "next_state", "noise"))
            for name, log in self.noise_logs_.items():
                for (start, end), noise in log:
                    for idx in np.ndindex(noise.shape):
                        cell = idx if len(idx) == 4 else (*idx, "")
                        writer.writerow((name, start, end, *cell, repr(float(noise[idx]))))


class LocalPrivatizer(Privatizer):
    """Adds independent Laplace(3H/epsilon) noise to every per-episode cell."""

    mechanism = "local"

    @property
    def noise_scale(self):
        return 3 * self.horizon / self.epsilon

    def _init_state(self):
        self.sums_ = PrivateCounts.zeros(self.horizon, self.n_states, self.n_actions)

    def _ingest(self, inc):
        noise = self.noise or laplace_noise
        b = self.noise_scale
        # every cell is perturbed, visited or not
        for name in ("N", "C", "Ntrans"):
            value = getattr(inc, name)
            perturbed = value + noise(b, value.shape, self.rng_)
            setattr(self.sums_, name, getattr(self.sums_, name) + perturbed)

    def _release(self):
        return PrivateCounts(self.sums_.N.copy(), self.sums_.C.copy(), self.sums_.Ntrans.copy())


_REGISTRY = {
    "identity": IdentityPrivatizer,
    "central": CentralPrivatizer,
    "local": LocalPrivatizer,
}


def make_privatizer(mechanism, n_episodes, horizon, n_states, n_actions, epsilon=1.0,
                    delta=0.1, random_state=None, **kwargs):
    try:
        cls = _REGISTRY[mechanism]
    except KeyError:
        raise ValueError(f"unknown privatizer {mechanism!r}; expected one of {MECHANISMS}") from None
    return cls(n_episodes, horizon, n_states, n_actions, epsilon=epsilon, delta=delta,
               random_state=random_state, **kwargs).reset()
