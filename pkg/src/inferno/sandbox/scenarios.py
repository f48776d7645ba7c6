"""Scenario library and experiment harness.

``run_scenario`` wires a world, its agents and a schedule together and
returns ``(trace, metrics)``. Worlds and agents draw from separate
generators spawned from the scenario seed, so a random-policy baseline run
with the same seed faces the same world randomness stream.
"""

from __future__ import annotations

import numpy as np

from inferno.empathy import (
    HarmModel,
    HarmPreference,
    OtherAgentHypothesis,
    TheoryOfMind,
    first_law_efe,
    bin_index,
    harm_bin_edges,
    learn_auxiliary_preferences,
)
from inferno.errors import ConfigurationError
from inferno.genmodel import (
    Bounds,
    canonical_form,
    canonical_key,
    describe,
    hyperparams_from_model,
    instantiate_flat,
    random_spec,
)
from inferno.inference import DataBatch, infer_states
from inferno.planning import (
    ScheduleConfig,
    enumerate_policies,
    predict_states,
    run_agent,
    select_action,
)
from inferno.sandbox import models
from inferno.sandbox.config import Scenario
from inferno.sandbox.targets import TargetAgent
from inferno.sandbox.worlds import Blanket, PomdpWorld
from inferno.structure import (
    ParticlePosterior,
    ScoreCache,
    ScoreConfig,
    SearchConfig,
    StructureParticle,
    init_posterior,
    search_step,
)
from inferno.trace import EpisodeTrace


def streams(seed):
    """Independent ``(world, agent)`` generators for one seed."""
    world_seq, agent_seq = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(world_seq), np.random.default_rng(agent_seq)


def search_config(sc):
    s = sc.search
    return SearchConfig(
        n_particles=s.get("n_particles", 8),
        bounds=Bounds(s.get("max_factors", 3), s.get("max_card", 4)),
        restart_prob=float(s.get("restart_prob", 0.0)),
        min_data_for_bmr=s.get("min_data_for_bmr", 200),
        score=ScoreConfig(
            concentration=float(s.get("concentration", 1.0)),
            kappa=float(s.get("kappa", 1.0)),
            restarts=s.get("restarts", 3),
            seed=sc.seed,
        ),
    )


def schedule_config(sc, **defaults):
    merged = {**defaults, **sc.schedule}
    return ScheduleConfig(**merged)


class _Metered:
    """World wrapper that records the agent's actions for the harness."""

    def __init__(self, world, world_rng):
        self.world = world
        self.rng = world_rng
        self.observation_cards = world.observation_cards
        self.action_card = world.action_card

    def reset(self, _agent_rng):
        return self.world.reset(self.rng)

    def step(self, action, _agent_rng):
        return self.world.step(action, self.rng)


def _random_episode(world, steps, world_rng, agent_rng):
    """Random-policy rollout; returns observations and actions."""
    obs = world.reset(world_rng)
    observations, actions = [list(obs)], []
    for t in range(steps):
        a = int(agent_rng.integers(world.action_card))
        actions.append(a)
        if t < steps - 1:
            observations.append(list(world.step(a, world_rng)))
    return observations, actions


# ---------------------------------------------------------------------------
# single-agent scenarios


def _single_particle(spec, hyper, data_seen=0):
    particle = StructureParticle(spec, hyper, 0.0, 0.0, hyper)
    return ParticlePosterior([particle], np.ones(1), data_seen)


def _bandit(sc, world_rng, agent_rng):
    world_model = models.bandit_model(tuple(sc.param("p_reward")))
    known = hyperparams_from_model(world_model)
    flat = instantiate_flat(world_model.spec)
    hyper = known.replace_tables([known.a[0], flat.a[1]] + known.b + known.d)
    prefs = [np.zeros(3), np.array([0.0, float(sc.param("reward_pref"))])]
    posterior = _single_particle(world_model.spec, hyper)
    env = Blanket(_Metered(PomdpWorld(world_model, "bandit"), world_rng))
    trace, posterior = run_agent(env, posterior, schedule_config(sc), agent_rng, sc.steps, prefs=prefs,
                                 metadata={"scenario": sc.name, "seed": sc.seed})
    good = int(np.argmax(sc.param("p_reward"))) if sc.steps else 0
    metrics = _bandit_metrics(trace.column("observation"), trace.column("action"), good)
    if sc.baseline and sc.steps:
        w_rng, a_rng = streams(sc.seed)
        obs, acts = _random_episode(PomdpWorld(world_model), sc.steps, w_rng, a_rng)
        metrics.update({f"baseline_{k}": v for k, v in _bandit_metrics(obs, acts, good).items()})
    return trace, metrics, posterior


def _bandit_metrics(observations, actions, good):
    if not actions:
        return {}
    half = len(actions) // 2
    rewards = [o[1] for o in observations[1:]] + [0]
    late = actions[half:]
    return {
        "preferred_outcome_rate": float(np.mean([r == 1 for r in rewards[:len(actions) - 1]] or [0.0])),
        "good_arm_rate": float(np.mean([a == good for a in late])),
    }


def _tmaze(sc, world_rng, agent_rng):
    world_model = models.tmaze_model(sc.param("cue_validity"), sc.param("reward_validity"))
    posterior = _single_particle(world_model.spec, hyperparams_from_model(world_model))
    prefs = [np.zeros(4), np.zeros(3), np.array([0.0, 1.0, -1.0]) * float(sc.param("reward_pref"))]
    env = Blanket(_Metered(PomdpWorld(world_model, "tmaze"), world_rng))
    schedule = schedule_config(sc, param_every=10**9, action_temperature=0.0)
    trace, posterior = run_agent(env, posterior, schedule, agent_rng, sc.steps, prefs=prefs,
                                 metadata={"scenario": sc.name, "seed": sc.seed})
    actions = trace.column("action")
    metrics = {}
    if actions:
        metrics = {"first_action": actions[0], "cue_first": float(actions[0] == models.TMAZE_CUE)}
    return trace, metrics, posterior


def _seed_specs(cards, action_card, cfg, rng, exclude=()):
    """Distinct random structures, none in the canonical classes of ``exclude``."""
    seeds, keys = [], {canonical_key(x) for x in exclude}
    for _ in range(1000):
        if len(seeds) >= cfg.n_particles:
            break
        s = random_spec(rng, cfg.bounds, cards, action_card)
        if canonical_key(s) not in keys:
            keys.add(canonical_key(s))
            seeds.append(s)
    return seeds


def _structure_world(sc, world_rng, agent_rng, switch_model=None):
    acc, stay = float(sc.param("accuracy")), tuple(sc.param("stay"))
    true_model = models.recovery_model(acc, stay)
    world = PomdpWorld(true_model, sc.name)
    cfg = search_config(sc)
    cache = ScoreCache(cfg.score)
    spec = true_model.spec
    seeds = _seed_specs(spec.modality_cards, spec.action_card, cfg, agent_rng, exclude=[spec])
    first = world.reset(world_rng)
    data = DataBatch([list(first)])
    posterior = init_posterior(seeds, data, cfg, cache)
    switch_step = sc.param("switch_step") if switch_model is not None else None

    class _World:
        observation_cards = world.observation_cards
        action_card = world.action_card
        t = 0

        def reset(self, _rng):
            return first

        def step(self, action, _rng):
            self.t += 1
            if switch_step is not None and self.t == switch_step:
                world.replace_model(switch_model)
            return world.step(action, world_rng)

    schedule = schedule_config(sc, param_every=10, structure_every=50, horizon=1)
    trace, posterior = run_agent(Blanket(_World()), posterior, schedule, agent_rng, sc.steps,
                                 search_cfg=cfg, cache=cache,
                                 metadata={"scenario": sc.name, "seed": sc.seed})
    labels = {"true": describe(canonical_form(true_model.spec))}
    if switch_model is not None:
        labels["switched"] = describe(canonical_form(switch_model.spec))
    metrics = {}
    if len(trace):
        for name, label in labels.items():
            metrics[f"weight_curve_{name}"] = [
                float(sum(w for l, w in zip(r["labels"], r["weights"]) if l == label)) for r in trace.records
            ]
        metrics["free_energy_curve"] = [
            float(r["free_energy"][int(np.argmax(r["weights"]))]) for r in trace.records
        ]
        metrics["final_weight_true"] = metrics["weight_curve_true"][-1]
    return trace, metrics, posterior


def _structure_recovery(sc, world_rng, agent_rng):
    return _structure_world(sc, world_rng, agent_rng)


def _switching(sc, world_rng, agent_rng):
    acc, stay = float(sc.param("accuracy")), tuple(sc.param("stay"))
    return _structure_world(sc, world_rng, agent_rng, models.switched_model(acc, stay))


# ---------------------------------------------------------------------------
# empathy scenarios


class RescueWorld:
    """Target that may fall into danger; the empath may rescue it.

    The empath observes what the target observes (its status) and the
    target's command (0 none, 1 help), chosen by the target's own planning.
    The target's free energy on each observation is its ground-truth harm.
    """

    def __init__(self, world_model, target):
        self.process = PomdpWorld(world_model, "rescue")
        self.target = target
        self.command = None

    observation_cards = property(lambda self: (2, 2))
    action_card = 2

    def _observe(self, rng):
        status = self.process.state[0]
        self.target.observe((status,))
        self.command = self.target.act(rng)
        return (status, self.command)

    def reset(self, rng):
        self.target.reset()
        self.process.reset(rng)
        self.process.state = [models.SAFE]
        return self._observe(rng)

    def step(self, action, rng):
        self.process.transition(action, rng)
        return self._observe(rng)


def _target(sc, prefs=(0.0, -3.0)):
    model = models.target_self_model(prefs)
    return TargetAgent(model, temperature=float(sc.param("target_temperature")))


def _hypotheses(sc, true_prefs=(0.0, -3.0)):
    temp = float(sc.param("target_temperature"))
    hyps = [OtherAgentHypothesis(models.target_self_model(true_prefs), assumed_temperature=temp, name="true")]
    wrong = sc.param("wrong_prefs")
    if wrong is not None:
        hyps.append(OtherAgentHypothesis(models.target_self_model(tuple(wrong)),
                                         assumed_temperature=temp, name="alternative"))
    return hyps


def harm_model_for(hypothesis, belief, command, horizon=1, n_bins=8):
    """Deterministic harm per world status: the target's surprise at seeing that status."""
    model = hypothesis.params
    qs = predict_states(model, belief, command)
    pred = model.A[0] @ qs[0]
    with np.errstate(divide="ignore"):
        harm = -np.log(pred)
    harm = np.minimum(harm, 50.0)
    edges = harm_bin_edges(max(model.spec.modality_cards) * horizon, n_bins, float(harm.max()) + 1e-9)
    return HarmModel.from_values((0,), harm, edges)


def run_empath(sc, world_rng, agent_rng, policy=None, hypotheses=None, aux=False):
    """Empath episode in the rescue world; returns ``(trace, tom, target_harm, aux_pairs)``."""
    policy = policy or sc.param("policy")
    world_model = models.rescue_world_model(sc.param("p_fall"), sc.param("p_rescue"),
                                            sc.param("p_recover"), sc.param("command_accuracy"))
    world = RescueWorld(world_model, _target(sc))
    hypotheses = hypotheses or _hypotheses(sc)
    tom = TheoryOfMind(hypotheses)
    horizon = int(sc.param("horizon"))
    policies = enumerate_policies(world_model.spec.action_card, horizon)
    trace = EpisodeTrace(metadata={"scenario": sc.name, "seed": sc.seed, "policy": policy})
    aux_pairs = []
    if sc.steps <= 0:
        return trace, tom, [], aux_pairs
    obs = world.reset(world_rng)
    prior = world_model.D
    for step in range(sc.steps):
        belief = infer_states(world_model, DataBatch([list(obs)]), initial=prior).current()
        tom.update((obs[0],), obs[1])
        estimate = tom.harm(window=1)
        best = tom.hypotheses[int(np.argmax(tom.posterior))]
        hm = harm_model_for(best, tom.traces[int(np.argmax(tom.posterior))][-1].belief, obs[1], horizon)
        pref = HarmPreference(hm.edges, float(sc.param("decay")))
        reports = [(pi, first_law_efe(world_model, [belief[0]], pi, hm, pref)) for pi in policies]
        if policy == "first_law":
            action = select_action(reports, float(sc.param("empath_temperature")), agent_rng)
        elif policy == "random":
            action = int(agent_rng.integers(world_model.spec.action_card))
        else:
            raise ConfigurationError(f"unknown empath policy {policy!r}")
        chosen = min((r for pi, r in reports if pi.actions[0] == action), key=lambda r: r.total)
        record = {
            "step": step,
            "observation": [int(o) for o in obs],
            "action": int(action),
            "first_law": chosen.as_dict(),
            "harm": [{
                "target": 0,
                "point": estimate.point_estimate,
                "true": world.target.harm[-1],
                "bins": [float(e) for e in estimate.bins],
                "distribution": [float(p) for p in estimate.distribution],
            }],
            "hypothesis_posterior": [float(p) for p in tom.posterior],
        }
        if aux:
            record["aux"] = int(action != obs[1])
        trace.append(record)
        command = obs[1]
        prior = predict_states(world_model, belief, action)
        obs = world.step(action, world_rng)
        if aux:
            aux_pairs.append((int(action != command), world.target.harm[-1]))
    return trace, tom, world.target.harm[:sc.steps], aux_pairs


def _rescue(sc, world_rng, agent_rng):
    trace, tom, harm, _ = run_empath(sc, world_rng, agent_rng)
    metrics = {}
    if harm:
        metrics["mean_harm"] = float(np.mean(harm))
        metrics["harm_curve"] = [float(h) for h in harm]
    if sc.baseline and sc.steps:
        w_rng, a_rng = streams(sc.seed)
        _, _, base, _ = run_empath(sc, w_rng, a_rng, policy="random")
        metrics["baseline_mean_harm"] = float(np.mean(base))
        metrics["baseline_harm_curve"] = [float(h) for h in base]
    return trace, metrics, None


def obedience_training(sc, world_rng, agent_rng):
    """Train auxiliary preferences over (command followed, command ignored)."""
    episodes = int(sc.param("episodes"))
    traces, last = [], EpisodeTrace(metadata={"scenario": sc.name, "seed": sc.seed})
    for _ in range(episodes):
        last, _, _, pairs = run_empath(sc, world_rng, agent_rng, aux=True)
        traces.append(pairs)
    # realized harm is binned on the usual grid (binary status outcome) before counting, so a
    # successful rescue and a calm step share the lowest bin
    pooled = [h for tr in traces for _, h in tr]
    edges = harm_bin_edges(2, top=max(pooled, default=None))
    binned = [[(o, bin_index(edges, h)) for o, h in tr] for tr in traces]
    C = learn_auxiliary_preferences(np.log(np.full(2, 0.5)), binned, float(sc.param("rate")))
    return last, C, traces


def _obedience(sc, world_rng, agent_rng):
    trace, C, traces = obedience_training(sc, world_rng, agent_rng)
    metrics = {}
    if sc.steps:
        metrics = {"pref_followed": float(C[0]), "pref_ignored": float(C[1]),
                   "follow_rate": float(np.mean([o == 0 for tr in traces for o, _ in tr]))}
    return trace, metrics, None


def _phenotype(sc, world_rng, agent_rng):
    trace, tom, harm, _ = run_empath(sc, world_rng, agent_rng)
    metrics = {}
    if len(trace):
        curve = [r["hypothesis_posterior"][0] for r in trace.records]
        metrics["posterior_true_curve"] = curve
        metrics["final_posterior_true"] = curve[-1]
        above = [i for i, p in enumerate(curve) if p > 0.9]
        metrics["first_step_above_0.9"] = above[0] if above else -1
    return trace, metrics, None


_RUNNERS = {
    "bandit": _bandit,
    "tmaze": _tmaze,
    "structure_recovery": _structure_recovery,
    "switching": _switching,
    "rescue": _rescue,
    "obedience": _obedience,
    "phenotype": _phenotype,
}


def run_scenario(sc):
    """Run one scenario; returns ``(trace, metrics)``."""
    trace, metrics, _ = execute_scenario(sc)
    return trace, metrics


def execute_scenario(sc):
    """Like :func:`run_scenario`, also returning the final structure posterior (or None)."""
    if sc.name not in _RUNNERS:
        raise ConfigurationError(f"scenario {sc.name!r} is not a simulation scenario")
    if sc.name == "switching" and not 0 < sc.param("switch_step"):
        raise ConfigurationError("switch_step must be positive")
    if sc.name == "bandit" and len(sc.param("p_reward")) != 2:
        raise ConfigurationError("p_reward needs one probability per arm")
    if sc.steps <= 0:
        return EpisodeTrace(metadata={"scenario": sc.name, "seed": sc.seed}), {}, None
    world_rng, agent_rng = streams(sc.seed)
    return _RUNNERS[sc.name](sc, world_rng, agent_rng)


def learn_structure(sc, data, exclude=()):
    """Static structure learning on a fixed batch.

    Seeds ``n_particles`` random structures sized to the data, then runs
    search sweeps until the particle set stops changing or the
    ``search_steps`` budget (default 16) runs out. Returns
    ``(posterior, sweeps)`` where ``sweeps`` lists the posterior after each
    sweep. Structures in the canonical classes of ``exclude`` are never seeded.
    """
    cfg = search_config(sc)
    cards = tuple(int(data.observations[:, m].max()) + 1 for m in range(data.observations.shape[1]))
    action_card = int(data.actions.max()) + 1 if data.actions.size else 1
    _, agent_rng = streams(sc.seed)
    seeds = _seed_specs(cards, action_card, cfg, agent_rng, exclude)
    cache = ScoreCache(cfg.score)
    posterior = init_posterior(seeds, data, cfg, cache)
    sweeps = [posterior]
    for _ in range(int(sc.search.get("search_steps", 16))):
        nxt = search_step(posterior, data, agent_rng, cfg, cache)
        changed = [q.key for q in nxt.particles] != [q.key for q in posterior.particles]
        posterior = nxt
        sweeps.append(posterior)
        if not changed:
            break
    return posterior, sweeps


def random_bmr_case(rng, shape=(4, 3), n_draws=20):
    """Random Dirichlet prior, simulated counts and a perturbed reduced prior.

    Reduced counts stay above 0.6 of the prior so the Monte-Carlo weights
    have finite variance. Returns ``(posterior, prior, reduced)``.
    """
    prior = rng.uniform(0.5, 2.0, shape)
    theta = np.apply_along_axis(rng.dirichlet, 0, prior)
    counts = np.stack([rng.multinomial(n_draws, theta[:, j]) for j in range(shape[1])], axis=1)
    reduced = prior * rng.uniform(0.6, 1.5, shape)
    return prior + counts, prior, reduced


def recovery_data(n_obs, seed, accuracy=0.9, stay=(0.9, 0.8)):
    """``n_obs`` observations of the structure-recovery world (no actions)."""
    world_rng, _ = streams(seed)
    world = PomdpWorld(models.recovery_model(accuracy, stay))
    obs = [world.reset(world_rng)] + [world.step(0, world_rng) for _ in range(n_obs - 1)]
    return DataBatch([list(o) for o in obs])


def structure_recovery_trial(n_obs, seed, n_particles=8, search_steps=16):
    """Batch structure recovery from seeds that exclude the true class.

    Returns ``(weight on the true canonical class, final posterior)``.
    """
    true_spec = models.recovery_model().spec
    sc = Scenario("structure_learn", seed=seed,
                  search={"n_particles": n_particles, "restart_prob": 0.0, "search_steps": search_steps})
    posterior, _ = learn_structure(sc, recovery_data(n_obs, seed), exclude=[true_spec])
    return posterior.weight_of(true_spec), posterior
