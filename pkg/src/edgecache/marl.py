"""Decentralised actors with a centralised critic for cooperative caching.

Each station is an agent choosing between keeping its cache and replacing
one cached file with the file one of its users just requested. A single
critic scores the concatenated feature windows of all stations; its one-step
TD error drives both the critic (semi-gradient on the squared error) and
every actor (policy gradient on log-probability).

Transition timing: the action chosen in cycle ``t`` is rewarded with the
mean delay reduction of cycle ``t + 1``'s deliveries, so each transition is
completed one cycle after its action.
"""
from __future__ import annotations

import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .caching import action_space_size, apply_action, decode_action
from .nn import Mlp, TrainingFault, masked_softmax, sgd_step
from .sim import Environment

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Hyperparams:
    gamma: float = 0.95
    actor_rate: float = 0.2
    critic_rate: float = 1e-3
    temperature: float = 1.0
    head: str = "scored"  # "scored" or "dense"
    scorer_hidden: tuple[int, ...] = (16, 16)
    actor_hidden: tuple[int, ...] = (128, 64)
    critic_hidden: tuple[int, ...] = (256, 128)
    reward_scale: float | None = None  # frames; None -> expected all-miss delay

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.actor_rate < 1 or not 0 < self.critic_rate < 1:
            raise ValueError("learning rates must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.head not in ("scored", "dense"):
            raise ValueError(f"unknown actor head {self.head!r}")


def _zero_output_layer(net: Mlp) -> Mlp:
    net.weights[-1][...] = 0.0
    net.biases[-1][...] = 0.0
    return net


@dataclass
class Decision:
    """Everything needed to sample an action and later differentiate its log-probability."""

    logits: np.ndarray
    probs: np.ndarray
    acts: list = field(repr=False)
    slot_files: np.ndarray | None = None
    request_files: np.ndarray | None = None
    duplicate: np.ndarray | None = None


class Agent:
    """Actor of one station.

    The default ``scored`` head runs a small network over each file's
    (short, medium, long) window features to give every file a keep-score;
    replacing cached file ``c`` with requested file ``r`` gets logit
    ``score[r] - score[c]`` and keeping the cache gets 0. Requests already in
    the cache can only produce a no-op, so their logits are pinned to 0 too.
    The ``dense`` head maps the full ``3 M`` observation straight to one
    logit per action.
    """

    def __init__(self, station_id: int, catalog_size: int, cache_len: int, n_connectable: int,
                 hp: Hyperparams, rng):
        self.station_id = station_id
        self.catalog_size = catalog_size
        self.cache_len = cache_len
        self.n_connectable = n_connectable
        self.n_actions = action_space_size(cache_len, n_connectable)
        self.hp = hp
        if hp.head == "scored":
            sizes = [3, *hp.scorer_hidden, 1]
        else:
            sizes = [3 * catalog_size, *hp.actor_hidden, self.n_actions]
        self.net = _zero_output_layer(Mlp(sizes, rng))

    def decide(self, file_features: np.ndarray, slot_files, request_files) -> Decision:
        """Action distribution for the current cache contents and requests.

        ``file_features`` is the ``(M, 3)`` matrix from the station's windows.
        """
        tau = self.hp.temperature
        if self.hp.head == "dense":
            z = self.net.forward(file_features.T.ravel())
            logits = z / tau
            return Decision(logits, masked_softmax(logits), self.net.activations())

        scores = self.net.forward(file_features)[:, 0]
        slots = np.asarray(slot_files, dtype=int)
        reqs = np.asarray(request_files, dtype=int)
        slot_scores = np.zeros(self.cache_len)
        slot_scores[: len(slots)] = scores[slots]
        dup = np.isin(reqs, slots)
        diff = scores[reqs][None, :] - slot_scores[:, None]
        diff[:, dup] = 0.0
        logits = np.concatenate(([0.0], diff.ravel())) / tau
        return Decision(logits, masked_softmax(logits), self.net.activations(), slots, reqs, dup)

    def select_action(self, decision: Decision, rng, greedy: bool = False) -> tuple[int, float]:
        """Sample (or argmax) an action id; returns ``(nu, log_prob)``."""
        if greedy:
            nu = int(np.argmax(decision.logits))
        else:
            nu = int(min(np.searchsorted(np.cumsum(decision.probs), rng.random(), side="right"),
                         self.n_actions - 1))
        return nu, float(np.log(decision.probs[nu]))

    def log_prob_grads(self, decision: Decision, nu: int) -> list[np.ndarray]:
        """Gradient of ``log pi(nu | o)`` w.r.t. the actor parameters."""
        g = -decision.probs.copy()
        g[nu] += 1.0
        g /= self.hp.temperature
        if self.hp.head == "dense":
            return self.net.backward(g, decision.acts)
        gd = g[1:].reshape(self.cache_len, self.n_connectable)
        gd[:, decision.duplicate] = 0.0
        gscore = np.zeros(self.catalog_size)
        np.add.at(gscore, decision.request_files, gd.sum(axis=0))
        n = len(decision.slot_files)
        np.add.at(gscore, decision.slot_files, -gd[:n].sum(axis=1))
        return self.net.backward(gscore[:, None], decision.acts)

    def actor_update(self, decision: Decision, nu: int, delta: float, rate: float) -> None:
        """``theta <- theta + rate * delta * grad log pi(nu | o)``."""
        if delta == 0.0:
            return
        grads = self.log_prob_grads(decision, nu)
        sgd_step(self.net.params(), [delta * g for g in grads], rate, "ascend")


class Critic:
    """State-value network over the concatenated observations of all agents."""

    def __init__(self, n_inputs: int, hp: Hyperparams, rng):
        self.gamma = hp.gamma
        self.net = _zero_output_layer(Mlp([n_inputs, *hp.critic_hidden, 1], rng))

    def value(self, x) -> float:
        return float(self.net.forward(x, cache=False)[0])

    def td_error(self, reward: float, x, x_next) -> float:
        return reward + self.gamma * self.value(x_next) - self.value(x)

    def loss_grads(self, reward: float, x, x_next) -> tuple[float, list[np.ndarray]]:
        """TD error and the semi-gradient of its square (target held fixed)."""
        target = reward + self.gamma * self.value(x_next)
        v = float(self.net.forward(x)[0])
        delta = target - v
        grads = self.net.backward(np.array([1.0]))
        return delta, [-2.0 * delta * g for g in grads]

    def update(self, reward: float, x, x_next, rate: float) -> float:
        """One descent step on the squared TD error; returns the pre-update error."""
        delta, grads = self.loss_grads(reward, x, x_next)
        if delta != 0.0:
            sgd_step(self.net.params(), grads, rate, "descend")
        return delta


@dataclass
class LogEntry:
    cycle: int  # cycle in which the action was taken
    reward: float
    delta: float
    eta: float  # eta of the deliveries that produced the reward


@dataclass
class _Pending:
    cycle: int
    x: np.ndarray
    choices: list  # (agent, decision, nu)


class MarlTrainer:
    """Runs the actor-critic loop over an :class:`Environment`."""

    def __init__(self, env: Environment, hp: Hyperparams | None = None):
        self.env = env
        self.hp = hp or Hyperparams()
        self.rng = env.streams.policy
        topo = env.topology
        self.agents = [
            Agent(i, env.catalog_size, env.capacity, len(env.connectable[i]), self.hp, self.rng)
            for i in range(topo.n_stations)
        ]
        self.critic = Critic(3 * env.catalog_size * topo.n_stations, self.hp, self.rng)
        self.reward_scale = self.hp.reward_scale or env.mean_miss_frames()
        self.pending: _Pending | None = None
        self.outcomes = []

    def act(self, requests, greedy: bool) -> list:
        env = self.env
        choices = []
        for agent, cache in zip(self.agents, env.caches):
            reqs = env.requested_by_station(requests, agent.station_id)
            dec = agent.decide(env.windows.file_features(agent.station_id), cache.slots, reqs)
            nu, _ = agent.select_action(dec, self.rng, greedy)
            apply_action(cache, decode_action(nu, agent.cache_len, agent.n_connectable), reqs, env.cycle)
            choices.append((agent, dec, nu))
        return choices

    def step(self, learn: bool = True, greedy: bool = False, replay=None) -> LogEntry | None:
        """One operation cycle; returns the completed transition's log entry, if any."""
        env = self.env
        requests = env.next_requests(replay)
        outcome = env.deliver(requests)
        self.outcomes.append(outcome)
        env.record(requests)
        x = env.windows.global_state()
        entry = None
        if learn and self.pending is not None:
            p = self.pending
            reward = outcome.delta_d / self.reward_scale
            delta = self.critic.update(reward, p.x, x, self.hp.critic_rate)
            for agent, dec, nu in p.choices:
                agent.actor_update(dec, nu, delta, self.hp.actor_rate)
            entry = LogEntry(p.cycle, reward, delta, outcome.eta)
        choices = self.act(requests, greedy)
        self.pending = _Pending(env.cycle, x, choices) if learn else None
        return entry

    def run(self, n_cycles: int, learn: bool = True, greedy: bool = False,
            checkpoint_dir=None, checkpoint_every: int = 0) -> list[LogEntry]:
        """Advance ``n_cycles`` transitions (learning) or cycles (evaluation).

        The very first learning call also runs the initial cycle that
        produces the first pending transition. With ``checkpoint_every > 0``
        the full state is pickled to ``checkpoint_dir/cycle_<t>.pkl`` after
        every that many cycles.
        """
        entries = []
        if n_cycles <= 0:
            return entries
        try:
            if learn and self.pending is None:
                self.step(learn=True, greedy=greedy)
            for _ in range(n_cycles):
                e = self.step(learn=learn, greedy=greedy)
                if e is not None:
                    entries.append(e)
                if checkpoint_dir is not None and checkpoint_every > 0 and (self.env.cycle + 1) % checkpoint_every == 0:
                    self.save(Path(checkpoint_dir) / f"cycle_{self.env.cycle}.pkl")
        except TrainingFault:
            if checkpoint_dir is not None:
                path = Path(checkpoint_dir) / "fault.pkl"
                self.save(path)
                log.error("training fault; state written to %s", path)
            raise
        return entries

    # -- checkpoints ----------------------------------------------------------

    def save(self, path) -> None:
        """Pickle the complete run state (networks, caches, windows, RNG streams)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            pickle.dump({"version": CHECKPOINT_VERSION, "trainer": self}, fh)

    @staticmethod
    def load(path) -> "MarlTrainer":
        with open(path, "rb") as fh:
            data = pickle.load(fh)
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        return data["trainer"]

    def export_networks(self, directory) -> None:
        """Write each actor and the critic as JSON weight files."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for agent in self.agents:
            agent.net.save(d / f"actor_{agent.station_id}.json")
        self.critic.net.save(d / "critic.json")


def train(trainer: MarlTrainer, n_cycles: int, checkpoint_dir=None, checkpoint_every: int = 0) -> list[LogEntry]:
    """Run ``n_cycles`` learning transitions and return their log."""
    return trainer.run(n_cycles, learn=True, checkpoint_dir=checkpoint_dir, checkpoint_every=checkpoint_every)
