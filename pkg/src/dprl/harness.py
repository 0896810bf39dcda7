"""Multi-seed regret sweeps: configuration, exact regret, CSV output and plots.

Regret is evaluated exactly by dynamic programming on the true MDP, so the
curves carry only the randomness of the learners themselves.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import LEARNERS, default_learning_rate
from .mdp import RolloutEnv, build_riverswim, initial_values, load_mdp, optimal_values
from .privatizers import MECHANISMS, precision_levels
from .statistics import PrecisionLevels

OUTPUT_DIR_ENV = "DPRL_OUTPUT_DIR"
CSV_HEADER = ("episode", "mean_cum_regret", "std_cum_regret")
SEED_CSV_HEADER = ("episode", "regret", "cum_regret")

# Bonus multipliers and PO step-size multiplier tuned on RiverSwim at K = 3000.
TUNED_BONUS_SCALE = {"po": 0.01, "vi": 0.04}
TUNED_ETA_MULTIPLIER = {"po": 10.0}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    ``bonus_scale``, ``eta`` and ``eta_multiplier`` accept either a single
    value or a mapping from algorithm name to value.  ``eta`` wins over
    ``eta_multiplier``, which scales the default PO learning rate.
    """

    environment: str = "riverswim"
    algorithm: tuple = ("po", "vi")
    privatizer: tuple = ("identity", "central", "local")
    epsilon: tuple = (0.2, 2.0, 20.0)
    delta: float = 0.1
    K: int = 3000
    num_seeds: int = 10
    base_seed: int = 0
    output_dir: str | None = None
    plot: bool = True
    bonus_scale: object = field(default_factory=lambda: dict(TUNED_BONUS_SCALE))
    eta: object = None
    eta_multiplier: object = field(default_factory=lambda: dict(TUNED_ETA_MULTIPLIER))
    debug_dump: bool = False

    def __post_init__(self):
        validate_config(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a JSON object of key/value pairs")
        known = {f for f in cls.__dataclass_fields__}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown key")
        data = dict(data)
        for key in ("algorithm", "privatizer", "epsilon"):
            if key in data and not isinstance(data[key], (list, tuple)):
                data[key] = [data[key]]
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self):
        out = asdict(self)
        for key in ("algorithm", "privatizer", "epsilon"):
            out[key] = list(out[key])
        return out

    def with_overrides(self, **overrides):
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return type(self).from_dict(merged)

    def resolved_output_dir(self):
        return Path(self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "results")

    def runs(self):
        """Configuration specs in a fixed order; identity runs ignore epsilon."""
        specs = []
        for alg in self.algorithm:
            for priv in self.privatizer:
                for eps in ((None,) if priv == "identity" else self.epsilon):
                    specs.append(RunSpec(alg, priv, eps))
        return specs

    def seeds(self):
        return [self.base_seed + i for i in range(self.num_seeds)]


def _per_algorithm(value, alg, default):
    if isinstance(value, dict):
        return value.get(alg, default)
    return default if value is None else value


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_config(cfg):
    if not isinstance(cfg.environment, str) or not cfg.environment:
        raise ConfigError("environment", "expected 'riverswim' or a path to an MDP JSON file")
    if not cfg.algorithm:
        raise ConfigError("algorithm", "at least one algorithm required")
    for alg in cfg.algorithm:
        if alg not in LEARNERS:
            raise ConfigError("algorithm", f"unknown algorithm {alg!r}, expected one of "
                                           f"{sorted(LEARNERS)}")
    if not cfg.privatizer:
        raise ConfigError("privatizer", "at least one privatizer required")
    for priv in cfg.privatizer:
        if priv not in MECHANISMS:
            raise ConfigError("privatizer", f"unknown privatizer {priv!r}, expected one of "
                                            f"{list(MECHANISMS)}")
    if not cfg.epsilon:
        raise ConfigError("epsilon", "at least one value required")
    for eps in cfg.epsilon:
        if not _is_number(eps) or not np.isfinite(eps) or eps <= 0:
            raise ConfigError("epsilon", f"every value must be a positive number, got {eps!r}")
    if not _is_number(cfg.delta) or not 0 < cfg.delta <= 1:
        raise ConfigError("delta", f"must lie in (0, 1], got {cfg.delta!r}")
    for key in ("K", "num_seeds"):
        value = getattr(cfg, key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(key, f"must be an integer >= 1, got {value!r}")
    if not isinstance(cfg.base_seed, int) or isinstance(cfg.base_seed, bool) or cfg.base_seed < 0:
        raise ConfigError("base_seed", f"must be a nonnegative integer, got {cfg.base_seed!r}")
    if cfg.output_dir is not None and not isinstance(cfg.output_dir, str):
        raise ConfigError("output_dir", "must be a string path")
    for key in ("plot", "debug_dump"):
        if not isinstance(getattr(cfg, key), bool):
            raise ConfigError(key, "must be true or false")
    for key, allow_zero in (("bonus_scale", True), ("eta", False), ("eta_multiplier", False)):
        value = getattr(cfg, key)
        values = value.items() if isinstance(value, dict) else [(None, value)]
        for alg, v in values:
            if alg is not None and alg not in LEARNERS:
                raise ConfigError(key, f"unknown algorithm {alg!r} in mapping")
            if v is None and key != "bonus_scale":
                continue
            if not _is_number(v) or not np.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
                raise ConfigError(key, f"must be a {'nonnegative' if allow_zero else 'positive'} "
                                       f"number, got {v!r}")


def load_config(path):
    """Read an :class:`ExperimentConfig` from a JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"malformed JSON in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def desk_config(**overrides):
    """RiverSwim sweep at K = 3000 with 10 seeds and tuned scales."""
    return ExperimentConfig().with_overrides(**overrides)


def full_scale_config(**overrides):
    """RiverSwim sweep at K = 20000 with 20 seeds."""
    return ExperimentConfig(K=20_000, num_seeds=20).with_overrides(**overrides)


def quick_config(**overrides):
    """Small smoke sweep finishing in seconds."""
    return ExperimentConfig(K=200, num_seeds=2, epsilon=(1.0,)).with_overrides(**overrides)


@dataclass(frozen=True)
class RunSpec:
    algorithm: str
    privatizer: str
    epsilon: float | None

    @property
    def config_id(self):
        if self.epsilon is None:
            return f"{self.algorithm}_{self.privatizer}"
        return f"{self.algorithm}_{self.privatizer}_eps{self.epsilon:g}"

    @property
    def label(self):
        name = {"identity": "non-private", "central": "JDP", "local": "LDP"}[self.privatizer]
        text = f"{self.algorithm.upper()} {name}"
        return text if self.epsilon is None else f"{text} eps={self.epsilon:g}"


@dataclass
class RegretCurve:
    increments: np.ndarray
    cumulative: np.ndarray
    seed: int | None = None
    config_id: str | None = None


@dataclass
class AggregateResult:
    """Mean and standard deviation (over seeds, ddof=0) of cumulative regret."""

    config_id: str
    label: str
    mean: np.ndarray
    std: np.ndarray
    seeds: tuple = ()
    curves: list = field(default_factory=list, repr=False)

    @property
    def episodes(self):
        return np.arange(1, len(self.mean) + 1)


def make_environment(environment):
    if environment == "riverswim":
        return build_riverswim()
    return load_mdp(environment)


def regret_curve(artifacts, mdp, seed=None, config_id=None):
    """Exact per-episode regret of the policies played in ``artifacts``."""
    if not artifacts:
        raise ValueError("no episodes to evaluate")
    policies = np.stack([a.policy for a in artifacts])
    expected = (mdp.horizon, mdp.n_states, mdp.n_actions)
    if policies.shape[1:] != expected:
        raise ValueError(f"policy dimensions {policies.shape[1:]} do not match MDP {expected}")
    v_star = optimal_values(mdp)[0][0, mdp.initial_state]
    increments = initial_values(mdp, policies) - v_star
    return RegretCurve(increments, np.cumsum(increments), seed, config_id)


def _learner(cfg, spec, seed, mdp):
    cls = LEARNERS[spec.algorithm]
    params = dict(
        n_episodes=cfg.K,
        privatizer=spec.privatizer,
        epsilon=1.0 if spec.epsilon is None else spec.epsilon,
        delta=cfg.delta,
        bonus_scale=_per_algorithm(cfg.bonus_scale, spec.algorithm, 1.0),
        random_state=seed,
    )
    if spec.algorithm == "po":
        eta = _per_algorithm(cfg.eta, "po", None)
        if eta is None:
            mult = _per_algorithm(cfg.eta_multiplier, "po", 1.0)
            eta = mult * default_learning_rate(mdp.n_actions, mdp.horizon, cfg.K)
        params["eta"] = eta
    return cls(**params)


def _debug_path(cfg, spec, seed):
    return cfg.resolved_output_dir() / "debug" / f"{spec.config_id}_seed{seed}.csv"


def _run_one(task):
    cfg, spec, seed = task
    mdp = make_environment(cfg.environment)
    learner = _learner(cfg, spec, seed, mdp)
    if cfg.debug_dump:
        path = _debug_path(cfg, spec, seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            dump = DebugDump(fh)
            learner.fit(RolloutEnv(mdp), callback=dump)
    else:
        learner.fit(RolloutEnv(mdp))
    return regret_curve(learner.episodes_, mdp, seed, spec.config_id).increments


class DebugDump:
    """Callback writing released counts and bonuses per episode as CSV rows."""

    header = ("episode", "step", "state", "action", "count", "cost_sum", "bonus")

    def __init__(self, fh):
        self.writer = csv.writer(fh, lineterminator="\n")
        self.writer.writerow(self.header)

    def __call__(self, k, counts, beta, Q, V, policy):
        H, S, A = counts.N.shape
        idx = np.indices((H, S, A)).reshape(3, -1).T
        rows = zip(idx, counts.N.ravel(), counts.C.ravel(), beta.ravel())
        self.writer.writerows((k, h, s, a, repr(float(n)), repr(float(c)), repr(float(b)))
                              for (h, s, a), n, c, b in rows)


def run_experiment(cfg, jobs=1):
    """Run every (configuration, seed) pair and aggregate per configuration.

    Runs are independent; with ``jobs > 1`` they execute in a process pool and
    results are reassembled in a fixed order, so output never depends on
    scheduling.
    """
    make_environment(cfg.environment)  # surface a bad environment file before any work
    specs, seeds = cfg.runs(), cfg.seeds()
    tasks = [(cfg, spec, seed) for spec in specs for seed in seeds]
    if jobs is None or jobs <= 1:
        outputs = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_one, tasks))
    results = []
    for i, spec in enumerate(specs):
        incs = outputs[i * len(seeds):(i + 1) * len(seeds)]
        curves = [RegretCurve(r, np.cumsum(r), s, spec.config_id) for r, s in zip(incs, seeds)]
        results.append(aggregate(curves, spec.config_id, spec.label))
    return results


def aggregate(curves, config_id, label):
    cum = np.stack([c.cumulative for c in curves])
    return AggregateResult(
        config_id=config_id,
        label=label,
        mean=cum.mean(axis=0),
        std=cum.std(axis=0),
        seeds=tuple(c.seed for c in curves),
        curves=list(curves),
    )


def _fmt(x):
    return repr(float(x))


def write_csv(result, path):
    """Write ``episode,mean_cum_regret,std_cum_regret`` rows for one configuration."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for k, m, s in zip(result.episodes, result.mean, result.std):
                writer.writerow((int(k), _fmt(m), _fmt(s)))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def write_seed_csv(curve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SEED_CSV_HEADER)
        for k, (r, c) in enumerate(zip(curve.increments, curve.cumulative), start=1):
            writer.writerow((k, _fmt(r), _fmt(c)))


def read_csv(path, label=None):
    """Parse a file written by :func:`write_csv` back into an AggregateResult."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        rows = [(int(e), float(m), float(s)) for e, m, s in reader]
    episodes = [r[0] for r in rows]
    if episodes != list(range(1, len(rows) + 1)):
        raise ValueError(f"{path}: episodes must run 1..n without gaps")
    return AggregateResult(path.stem, label or path.stem, np.array([r[1] for r in rows]),
                           np.array([r[2] for r in rows]))


def read_seed_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != SEED_CSV_HEADER:
            raise ValueError(f"{path}: unexpected header")
        rows = [(float(r), float(c)) for _, r, c in reader]
    inc = np.array([r[0] for r in rows])
    return RegretCurve(inc, np.array([r[1] for r in rows]))


def write_results(results, cfg, out_dir=None):
    """Write aggregate CSVs, per-seed CSVs and ``manifest.json``; return the paths."""
    out = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    (out / "seeds").mkdir(parents=True, exist_ok=True)
    written = []
    for res in results:
        path = out / f"{res.config_id}.csv"
        write_csv(res, path)
        written.append(path)
        for curve in res.curves:
            write_seed_csv(curve, out / "seeds" / f"{res.config_id}_seed{curve.seed}.csv")
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": cfg.seeds(),
        "configurations": {r.config_id: {"label": r.label, "file": f"{r.config_id}.csv"}
                           for r in results},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return written


def emit_plot(results, path, title=None):
    """Plot mean cumulative regret with shaded +-1 std bands to an SVG file."""
    if not results:
        raise ValueError("emit_plot needs at least one result")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for res in results:
        x = res.episodes
        (line,) = ax.plot(x, res.mean, label=res.label, linewidth=1.4)
        ax.fill_between(x, res.mean - res.std, res.mean + res.std, color=line.get_color(),
                        alpha=0.2, linewidth=0)
    ax.set_xlabel("Episode")
    ax.set_ylabel("Cumulative regret")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    try:
        with matplotlib.rc_context({"svg.hashsalt": "dprl", "svg.fonttype": "none"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def emit_sweep_plots(results, out_dir):
    """One SVG per algorithm, comparing all privatizers and epsilons."""
    paths = []
    for alg in dict.fromkeys(r.config_id.split("_")[0] for r in results):
        subset = [r for r in results if r.config_id.split("_")[0] == alg]
        path = Path(out_dir) / f"regret_{alg}.svg"
        emit_plot(subset, path, title=f"Private UCB-{alg.upper()} on the benchmark MDP")
        paths.append(path)
    return paths


def precision_table(cfg):
    """Certified precision levels (E1, E2) of every private configuration."""
    mdp = make_environment(cfg.environment)
    table = {}
    for spec in cfg.runs():
        if spec.epsilon is None:
            table[spec.config_id] = PrecisionLevels()
            continue
        table[spec.config_id] = precision_levels(spec.privatizer, spec.epsilon, cfg.delta, cfg.K,
                                                 mdp.horizon, mdp.n_states, mdp.n_actions)
    return table


def summarize(results):
    """Final-episode mean and std per configuration, as printable lines."""
    return [f"{r.config_id:<24} R(K)={r.mean[-1]:10.2f} +- {r.std[-1]:8.2f}" for r in results]

