"""Single runs, the three sweeps, and their CSV/SVG outputs."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .caching import Policy
from .config import ExperimentConfig
from .marl import MarlTrainer
from .metrics import running_average_eta
from .sim import Environment

log = logging.getLogger(__name__)

ALL_POLICIES = (Policy.MARL, Policy.LRU, Policy.LFU, Policy.FIFO)


@dataclass
class RunResult:
    policy: Policy
    seed: int
    eta: np.ndarray  # per delivered cycle
    n_eval: int
    trainer: MarlTrainer | None = field(default=None, repr=False)
    env: Environment | None = field(default=None, repr=False)
    training_log: list = field(default_factory=list, repr=False)
    epochs: list = field(default_factory=list)

    @property
    def eval_eta(self) -> float:
        """Mean eta over the evaluation window (the whole run if it has none)."""
        window = self.eta[-self.n_eval:] if self.n_eval else self.eta
        return float(window.mean())


def make_environment(cfg: ExperimentConfig, seed: int) -> Environment:
    topo = cfg.topology.build(seed)
    return Environment(topo, cfg.channel, cfg.workload, cfg.capacity, seed)


def run_single(cfg: ExperimentConfig, policy, seed: int, evaluate: bool = True,
               keep_state: bool = False, checkpoint_dir=None, replay=None) -> RunResult:
    """Simulate ``cfg.n_cycles + 1`` request cycles under one policy.

    The learner trains for ``n_cycles - n_eval`` transitions and then acts
    greedily without updates for ``n_eval`` cycles; with ``evaluate=False``
    it trains throughout. Baselines just run every cycle. ``replay`` maps
    cycle numbers to request arrays and replaces the generated workload.
    """
    policy = Policy(policy)
    env = make_environment(cfg, seed)
    n_eval = cfg.n_eval if evaluate else 0
    total = cfg.n_cycles + 1
    trainer = None
    training_log = []

    def requests_for(cycle):
        return None if replay is None else replay[cycle]

    if policy is Policy.MARL:
        trainer = MarlTrainer(env, cfg.marl)
        n_train = cfg.n_cycles - n_eval
        for _ in range(total - n_eval):
            e = trainer.step(learn=True, replay=requests_for(env.cycle + 1))
            if e is not None:
                training_log.append(e)
        assert len(training_log) == n_train
        for _ in range(n_eval):
            trainer.step(learn=False, greedy=True, replay=requests_for(env.cycle + 1))
        etas = np.array([o.eta for o in trainer.outcomes])
        if checkpoint_dir is not None:
            trainer.save(Path(checkpoint_dir) / f"marl_seed{seed}.pkl")
            trainer.export_networks(Path(checkpoint_dir) / f"marl_seed{seed}")
    else:
        etas = np.empty(total)
        for t in range(total):
            reqs = env.next_requests(requests_for(env.cycle + 1))
            etas[t] = env.deliver(reqs).eta
            env.baseline_update(policy, reqs)
            env.record(reqs)

    epochs = [(e.start_cycle, e.beta) for e in env.workload.epochs]
    return RunResult(policy, seed, etas, n_eval, trainer if keep_state else None,
                     env if keep_state else None, training_log, epochs)


def _run_point(args):
    cfg, policy, seed, evaluate = args
    r = run_single(cfg, policy, seed, evaluate=evaluate)
    return r.policy, r.seed, r.eval_eta, r.eta, r.epochs


def _map(fn, tasks, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


@dataclass
class SweepResult:
    axis_name: str
    rows: list  # (axis value, policy, seed, eta)

    def mean(self, axis_value, policy) -> float:
        vals = [e for a, p, s, e in self.rows if a == axis_value and p == Policy(policy)]
        return float(np.mean(vals))

    def band(self, axis_value, policy) -> tuple[float, float]:
        """Mean +/- one standard error over seeds."""
        vals = np.array([e for a, p, s, e in self.rows if a == axis_value and p == Policy(policy)])
        half = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return float(vals.mean() - half), float(vals.mean() + half)

    def axis_values(self):
        return sorted({a for a, *_ in self.rows})

    def policies(self):
        seen = []
        for _, p, _, _ in self.rows:
            if p not in seen:
                seen.append(p)
        return seen

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis", "policy", "seed", "eta"])
            for a, p, s, e in self.rows:
                w.writerow([repr(float(a)), p.value, s, repr(float(e))])

    def plot(self, path, xlabel: str) -> None:
        _line_plot(path, xlabel, "eta (%)", {
            p.value: (self.axis_values(), [self.mean(a, p) for a in self.axis_values()])
            for p in self.policies()
        })


def _policies(policies) -> list[Policy]:
    return list(ALL_POLICIES) if policies in (None, "all") else [Policy(p) for p in policies]


def _sweep(points, cfg: ExperimentConfig, policies, axis_name: str) -> SweepResult:
    tasks = [(pcfg, p, s, True) for _, pcfg in points for p in _policies(policies) for s in cfg.seeds]
    axis = [a for a, _ in points for _ in _policies(policies) for _ in cfg.seeds]
    out = _map(_run_point, tasks, cfg.jobs)
    rows = [(a, p, s, e) for a, (p, s, e, _, _) in zip(axis, out)]
    return SweepResult(axis_name, rows)


def run_beta_sweep(cfg: ExperimentConfig, policies=None) -> SweepResult:
    """Evaluation-window eta for every Zipf exponent in ``cfg.betas``."""
    cap = cfg.sweep_beta_capacity or cfg.capacity
    points = [(b, cfg.with_workload(beta=b).replace(capacity=cap, cache_ratio=None)) for b in cfg.betas]
    return _sweep(points, cfg, policies, "beta")


def run_cache_ratio_sweep(cfg: ExperimentConfig, policies=None) -> SweepResult:
    """Evaluation-window eta for every cache ratio in ``cfg.ratios`` at ``cfg.ratio_beta``."""
    base = cfg.with_workload(beta=cfg.ratio_beta)
    points = [(r, base.replace(cache_ratio=r)) for r in cfg.ratios]
    return _sweep(points, cfg, policies, "cache_ratio")


@dataclass
class DriftResult:
    eta_bar: dict  # (policy, seed) -> running mean series
    epochs: dict  # seed -> [(start_cycle, beta), ...]

    def mean_series(self, policy) -> np.ndarray:
        series = [v for (p, _), v in self.eta_bar.items() if p == Policy(policy)]
        return np.mean(series, axis=0)

    def write_csv(self, path, per_seed_path=None) -> None:
        policies = []
        for p, _ in self.eta_bar:
            if p not in policies:
                policies.append(p)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "policy", "eta_bar"])
            for p in policies:
                for t, v in enumerate(self.mean_series(p)):
                    w.writerow([t, p.value, repr(float(v))])
        if per_seed_path is not None:
            with open(per_seed_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["cycle", "policy", "seed", "eta_bar"])
                for (p, s), series in self.eta_bar.items():
                    for t, v in enumerate(series):
                        w.writerow([t, p.value, s, repr(float(v))])

    def write_epochs(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "start_cycle", "beta"])
            for s, epochs in self.epochs.items():
                for start, beta in epochs:
                    w.writerow([s, start, repr(float(beta))])

    def plot(self, path) -> None:
        curves = {}
        for p, _ in self.eta_bar:
            y = self.mean_series(p)
            curves[p.value] = (list(range(len(y))), list(y))
        _line_plot(path, "cycle", "running mean eta (%)", curves)


def run_drift_experiment(cfg: ExperimentConfig, policies=None) -> DriftResult:
    """Popularity changes every ``drift_period`` cycles; the learner never stops training."""
    dcfg = cfg.with_workload(drift_enabled=True, drift_period=cfg.drift_period).replace(
        n_cycles=cfg.drift_period * cfg.drift_epochs - 1)
    tasks = [(dcfg, p, s, False) for p in _policies(policies) for s in cfg.seeds]
    out = _map(_run_point, tasks, cfg.jobs)
    eta_bar, epochs = {}, {}
    for p, s, _, etas, ep in out:
        eta_bar[(p, s)] = running_average_eta(etas)
        epochs[s] = ep
    return DriftResult(eta_bar, epochs)


def _line_plot(path, xlabel, ylabel, curves) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "edgecache"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (x, y) in curves.items():
        ax.plot(x, y, marker="o" if len(x) < 20 else None, label=name.upper())
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
