import numpy as np
import pytest

from edgecache.channel import ChannelParams
from edgecache.marl import Agent, Critic, Hyperparams, MarlTrainer, train
from edgecache.nn import TrainingFault
from edgecache.sim import Environment
from edgecache.topology import generate_topology
from edgecache.workload import WorkloadConfig


def small_env(capacity=3, seed=0, m=12, beta=1.2):
    topo = generate_topology(seed, 2, 5, 2200.0)
    return Environment(topo, ChannelParams(), WorkloadConfig(catalog_size=m, beta=beta), capacity, seed)


def make_agent(head, seed=0, m=6, cache_len=2, n_conn=3, **hp):
    agent = Agent(0, m, cache_len, n_conn, Hyperparams(head=head, **hp), np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 100)
    for p in agent.net.params():
        p[...] = rng.normal(scale=0.5, size=p.shape)
    return agent


def decision_for(agent, seed=1):
    rng = np.random.default_rng(seed)
    feats = rng.random((agent.catalog_size, 3))
    slots = np.array([0, 1])
    reqs = np.array([2, 1, 4])  # file 1 is already cached
    return agent.decide(feats, slots, reqs), (feats, slots, reqs)


def log_prob(agent, inputs, nu):
    return np.log(agent.decide(*inputs).probs[nu])


@pytest.mark.parametrize("head", ["scored", "dense"])
def test_greedy_is_argmax(head):
    agent = make_agent(head)
    dec, _ = decision_for(agent)
    nu, logp = agent.select_action(dec, np.random.default_rng(0), greedy=True)
    assert nu == int(np.argmax(dec.logits))
    assert logp == pytest.approx(np.log(dec.probs[nu]))


def test_zero_logit_head_samples_uniformly():
    agent = Agent(0, 6, 2, 3, Hyperparams(), np.random.default_rng(0))  # fresh: zero output layer
    dec, _ = decision_for(agent)
    assert np.allclose(dec.logits, 0.0)
    rng = np.random.default_rng(5)
    counts = np.bincount([agent.select_action(dec, rng)[0] for _ in range(100_000)], minlength=agent.n_actions)
    assert np.all(np.abs(counts / 100_000 - 1 / agent.n_actions) < 0.02)


def test_scored_logits_structure():
    agent = make_agent("scored")
    dec, (feats, slots, reqs) = decision_for(agent)
    scores = agent.net.forward(feats)[:, 0]
    assert dec.logits[0] == 0.0
    for e in range(2):
        for u in range(3):
            nu = 1 + e * 3 + u
            expected = 0.0 if reqs[u] in slots else scores[reqs[u]] - scores[slots[e]]
            assert dec.logits[nu] == pytest.approx(expected)


@pytest.mark.parametrize("head", ["scored", "dense"])
@pytest.mark.parametrize("nu", [0, 1, 5])
def test_log_prob_gradient_matches_finite_differences(head, nu):
    agent = make_agent(head, temperature=0.7)
    dec, inputs = decision_for(agent)
    grads = agent.log_prob_grads(dec, nu)
    h = 1e-6
    for p, g in zip(agent.net.params(), grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = log_prob(agent, inputs, nu)
            p[idx] = old - h
            down = log_prob(agent, inputs, nu)
            p[idx] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - g[idx]) <= 1e-6 + 1e-4 * abs(fd)


@pytest.mark.parametrize("head", ["scored", "dense"])
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_actor_step_moves_probability(head, sign):
    agent = make_agent(head)
    dec, inputs = decision_for(agent)
    nu = 4
    before = dec.probs[nu]
    agent.actor_update(dec, nu, sign * 1.0, 1e-3)
    after = agent.decide(*inputs).probs[nu]
    assert (after - before) * sign > 0


def test_actor_zero_delta_is_noop():
    agent = make_agent("scored")
    dec, _ = decision_for(agent)
    before = [p.copy() for p in agent.net.params()]
    agent.actor_update(dec, 3, 0.0, 0.5)
    assert all(np.array_equal(a, b) for a, b in zip(before, agent.net.params()))


def fresh_critic(n=8, gamma=0.9, seed=0):
    return Critic(n, Hyperparams(gamma=gamma, critic_hidden=(6, 5)), np.random.default_rng(seed))


def test_td_error_examples():
    rng = np.random.default_rng(0)
    x, x2 = rng.random(8), rng.random(8)
    critic = fresh_critic()
    assert critic.td_error(0.7, x, x2) == pytest.approx(0.7)  # V == 0 at init
    critic.net.biases[-1][...] = 2.5  # V == 2.5 everywhere
    assert critic.td_error(0.0, x, x2) == pytest.approx((0.9 - 1.0) * 2.5)
    critic.gamma = 0.0
    assert critic.td_error(1.0, x, x2) == pytest.approx(1.0 - 2.5)


def test_critic_zero_delta_unchanged():
    critic = fresh_critic()
    x = np.ones(8)
    before = [p.copy() for p in critic.net.params()]
    critic.update(0.0, x, x, 0.1)  # V == 0 and r == 0 -> delta == 0
    assert all(np.array_equal(a, b) for a, b in zip(before, critic.net.params()))


def test_critic_semi_gradient_matches_finite_differences():
    critic = fresh_critic(seed=3)
    rng = np.random.default_rng(4)
    for p in critic.net.params():
        p[...] = rng.normal(scale=0.3, size=p.shape)
    x, x2, r = rng.random(8), rng.random(8), 0.4
    target = r + critic.gamma * critic.value(x2)
    delta, grads = critic.loss_grads(r, x, x2)
    h = 1e-6
    for p, g in zip(critic.net.params(), grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = (target - critic.value(x)) ** 2
            p[idx] = old - h
            down = (target - critic.value(x)) ** 2
            p[idx] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - g[idx]) <= 1e-7 + 1e-4 * abs(fd)


def test_critic_converges_on_frozen_transition():
    critic = fresh_critic(seed=1)
    rng = np.random.default_rng(2)
    x, x2, r = rng.random(8), rng.random(8), 0.8
    target_net = critic.net.copy()  # target held fixed: evaluate V(x2) with frozen weights
    target = r + critic.gamma * float(target_net.forward(x2)[0])
    errs = []
    for _ in range(2000):
        v = critic.value(x)
        errs.append((target - v) ** 2)
        critic.net.forward(x)
        grads = critic.net.backward(np.array([1.0]))
        from edgecache.nn import sgd_step
        sgd_step(critic.net.params(), [-2.0 * (target - v) * g for g in grads], 0.01, "descend")
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6


def test_train_zero_cycles():
    trainer = MarlTrainer(small_env())
    before = [p.copy() for a in trainer.agents for p in a.net.params()]
    assert train(trainer, 0) == []
    after = [p for a in trainer.agents for p in a.net.params()]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


def test_train_log_length_and_finiteness():
    trainer = MarlTrainer(small_env())
    log = train(trainer, 50)
    assert len(log) == 50
    assert all(np.isfinite([e.reward, e.delta, e.eta]).all() for e in log)


def test_reward_is_next_cycle_delay_reduction():
    trainer = MarlTrainer(small_env())
    log = train(trainer, 30)
    by_cycle = {o.cycle: o for o in trainer.outcomes}
    for e in log:
        assert e.reward * trainer.reward_scale == pytest.approx(by_cycle[e.cycle + 1].delta_d)
        assert e.eta == pytest.approx(by_cycle[e.cycle + 1].eta)


def test_zero_rewards_leave_parameters_untouched():
    trainer = MarlTrainer(small_env(capacity=0))  # nothing cached: every delivery is a miss
    before = [p.copy() for net in [trainer.critic.net] + [a.net for a in trainer.agents] for p in net.params()]
    log = train(trainer, 40)
    assert all(e.reward == 0.0 and e.delta == 0.0 for e in log)
    after = [p for net in [trainer.critic.net] + [a.net for a in trainer.agents] for p in net.params()]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


def test_caches_stay_within_capacity():
    trainer = MarlTrainer(small_env(capacity=4))
    for _ in range(100):
        trainer.step()
        for c in trainer.env.caches:
            c.check()
        phi = trainer.env.phi()
        assert (phi.sum(axis=1) <= 4).all()
        assert all(set(np.flatnonzero(phi[i])) == set(c.slots) for i, c in enumerate(trainer.env.caches))


def test_checkpoint_resume_is_exact(tmp_path):
    straight = MarlTrainer(small_env(seed=3))
    log_a = train(straight, 40)

    first = MarlTrainer(small_env(seed=3))
    log_b = train(first, 20)
    first.save(tmp_path / "ck.pkl")
    resumed = MarlTrainer.load(tmp_path / "ck.pkl")
    log_b += train(resumed, 20)
    assert [(e.cycle, e.reward, e.delta) for e in log_a] == [(e.cycle, e.reward, e.delta) for e in log_b]
    for a, b in zip(straight.agents, resumed.agents):
        assert all(np.array_equal(p, q) for p, q in zip(a.net.params(), b.net.params()))


def test_fault_writes_checkpoint(tmp_path):
    trainer = MarlTrainer(small_env())
    train(trainer, 2)
    trainer.agents[0].net.weights[-1][...] = np.nan
    trainer.hp.actor_rate = 0.5
    with pytest.raises(TrainingFault):
        train(trainer, 20, checkpoint_dir=tmp_path)
    assert (tmp_path / "fault.pkl").exists()


def test_export_networks(tmp_path):
    trainer = MarlTrainer(small_env())
    trainer.export_networks(tmp_path)
    assert (tmp_path / "critic.json").exists()
    assert (tmp_path / "actor_1.json").exists()


def test_hyperparameter_ranges():
    with pytest.raises(ValueError):
        Hyperparams(gamma=1.0)
    with pytest.raises(ValueError):
        Hyperparams(actor_rate=0.0)
    with pytest.raises(ValueError):
        Hyperparams(head="wide")


def test_periodic_checkpoint_resumes_exactly(tmp_path):
    straight = MarlTrainer(small_env(seed=4))
    log_a = train(straight, 30)
    trainer = MarlTrainer(small_env(seed=4))
    log_b = train(trainer, 30, checkpoint_dir=tmp_path, checkpoint_every=10)
    assert sorted(p.name for p in tmp_path.glob("cycle_*.pkl")) == ["cycle_19.pkl", "cycle_29.pkl", "cycle_9.pkl"]
    resumed = MarlTrainer.load(tmp_path / "cycle_19.pkl")
    tail = train(resumed, 11)  # the initial cycle logs nothing, so 19 transitions precede cycle 19's save
    assert [(e.reward, e.delta) for e in tail] == [(e.reward, e.delta) for e in log_a[19:]]
    assert [(e.reward, e.delta) for e in log_b] == [(e.reward, e.delta) for e in log_a]
