"""Expected free energy, action selection and the multi-scale agent loop.

Policies are scored by rolling the current state beliefs forward through the
expected transition model (factorwise, one action per step) and comparing
the predicted outcomes with the preferred outcome distribution
``softmax(C)``. Risk plus ambiguity gives the total; expected utility and
information gain are reported alongside.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from inferno.errors import ConfigurationError, PlannerTooLargeError, ShapeError
from inferno.genmodel import GenerativeModel, HyperParams, expected_model
from inferno.inference import DataBatch, infer_states, update_parameters
from inferno.prob import TEMPERATURE_FLOOR, entropy, kl_divergence, log_softmax, sample_categorical, softmax
from inferno.structure import ScoreCache, SearchConfig, reduce_particle, reweight, search_step
from inferno.trace import EpisodeTrace

POLICY_BOUND = 4096


@dataclass(frozen=True)
class Policy:
    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.actions) < 1:
            raise ShapeError("a policy needs at least one action")


@dataclass
class EFEReport:
    risk: float
    ambiguity: float
    expected_utility: float
    info_gain: float
    total: float

    def as_dict(self):
        return {
            "risk": self.risk,
            "ambiguity": self.ambiguity,
            "expected_utility": self.expected_utility,
            "info_gain": self.info_gain,
            "total": self.total,
        }


def point_model(params):
    if isinstance(params, HyperParams):
        return expected_model(params)
    if isinstance(params, GenerativeModel):
        return params
    raise TypeError("params must be HyperParams or GenerativeModel")


def current_states(belief):
    """Latest per-factor marginals from a BeliefState or a list of vectors."""
    if hasattr(belief, "marginals"):
        return [np.asarray(q[-1], dtype=float) for q in belief.marginals]
    return [np.asarray(q, dtype=float) for q in belief]


def predict_states(model, qs, action):
    """One-step factorwise prediction ``E[B] q`` under ``action``."""
    spec = model.spec
    out = []
    for f, t in enumerate(spec.transition_edges):
        b = model.B[f][..., action] if t.action_dependent else model.B[f]
        b = np.tensordot(b, qs[f], axes=([1], [0]))
        for p in t.parents:
            b = np.tensordot(b, qs[p], axes=([1], [0]))
        out.append(b / b.sum())
    return out


def predict_outcomes(model, qs):
    """Per modality ``(predicted outcome distribution, expected column entropy)``."""
    spec = model.spec
    out = []
    for m, edges in enumerate(spec.likelihood_edges):
        a = model.A[m]
        qo = a
        h = -np.sum(np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0), axis=0)
        for f in edges:
            qo = np.tensordot(qo, qs[f], axes=([1], [0]))
            h = np.tensordot(h, qs[f], axes=([0], [0]))
        out.append((qo / qo.sum(), float(h)))
    return out


def expected_free_energy(params, belief, policy, prefs=None):
    """Score ``policy`` from the current beliefs.

    Per step and modality: risk ``KL[q(o) || softmax(C)]``, ambiguity the
    expected entropy of the likelihood columns, expected utility
    ``E_q(o)[ln softmax(C)]`` and information gain ``H[q(o)] - ambiguity``.
    """
    if not isinstance(policy, Policy):
        policy = Policy(policy)
    model = point_model(params)
    prefs = model.C if prefs is None else prefs
    log_pref = [log_softmax(c) for c in prefs]
    pref = [np.exp(lp) for lp in log_pref]
    qs = current_states(belief)
    risk = amb = eu = ig = 0.0
    for a in policy.actions:
        if not 0 <= a < model.spec.action_card:
            raise ShapeError(f"action {a} outside [0, {model.spec.action_card})")
        qs = predict_states(model, qs, a)
        for m, (qo, h) in enumerate(predict_outcomes(model, qs)):
            risk += kl_divergence(qo, pref[m])
            amb += h
            eu += float(qo @ log_pref[m])
            ig += max(entropy(qo) - h, 0.0)
    return EFEReport(risk, amb, eu, ig, risk + amb)


def enumerate_policies(action_card, horizon, bound=POLICY_BOUND):
    if horizon < 1:
        raise ShapeError("horizon must be at least 1")
    if action_card ** horizon > bound:
        raise PlannerTooLargeError(f"{action_card}^{horizon} policies exceed the bound {bound}")
    return [Policy(p) for p in itertools.product(range(action_card), repeat=horizon)]


def evaluate_policies(params, belief, prefs=None, horizon=1, bound=POLICY_BOUND):
    """``(Policy, EFEReport)`` for every policy, in lexicographic order."""
    spec = params.spec
    return [
        (pi, expected_free_energy(params, belief, pi, prefs))
        for pi in enumerate_policies(spec.action_card, horizon, bound)
    ]


def policy_distribution(reports, temperature=1.0, log_prior=None):
    if not reports:
        raise ValueError("no policies to choose from")
    logits = -np.array([r.total for _, r in reports])
    if log_prior is not None:
        logits = logits + np.asarray(log_prior, dtype=float) * max(temperature, TEMPERATURE_FLOOR)
    return softmax(logits, temperature if temperature > TEMPERATURE_FLOOR else 0.0)


def action_probabilities(reports, action_card, temperature=1.0):
    """Marginal probability of each first action under the policy softmax."""
    probs = policy_distribution(reports, temperature)
    out = np.zeros(action_card)
    for (pi, _), p in zip(reports, probs):
        out[pi.actions[0]] += p
    return out


def select_action(reports, temperature, rng, log_prior=None):
    """Sample a policy from ``softmax(-G / temperature)`` and return its first action.

    At or below the temperature floor the argmin policy (lowest index on
    ties) is taken without consuming randomness.
    """
    if not reports:
        raise ValueError("no policies to choose from")
    if temperature <= TEMPERATURE_FLOOR:
        totals = np.array([r.total for _, r in reports])
        if log_prior is not None:
            totals = totals - np.asarray(log_prior)
        return reports[int(np.argmin(totals))][0].actions[0]
    probs = policy_distribution(reports, temperature, log_prior)
    return reports[sample_categorical(probs, rng)][0].actions[0]


# ---------------------------------------------------------------------------
# agent loop


@dataclass
class ScheduleConfig:
    """How often each level of inference runs, in steps.

    ``None`` for ``structure_every`` or ``reduce_every`` disables that level.
    """

    param_every: int = 1
    structure_every: int = None
    reduce_every: int = None
    horizon: int = 1
    action_temperature: float = 1.0
    state_every: int = 1
    weight_threshold: float = 1e-4
    learning_rate: float = 1.0

    def __post_init__(self):
        if self.state_every != 1:
            raise ConfigurationError("state inference runs every step")
        ladder = [self.param_every, self.structure_every, self.reduce_every]
        finite = [x for x in ladder if x is not None]
        if any(x < 1 for x in finite) or self.horizon < 1:
            raise ConfigurationError("schedule periods and horizon must be positive")
        inf = [math.inf if x is None else x for x in ladder]
        if not inf[0] <= inf[1] <= inf[2]:
            raise ConfigurationError("need param_every <= structure_every <= reduce_every")
        if self.action_temperature < 0:
            raise ConfigurationError("action_temperature must be nonnegative")


def _due(step, every):
    return every is not None and (step + 1) % every == 0


@dataclass
class _ParticleState:
    """Filtering bookkeeping for one particle.

    ``priors[t]`` is the predicted state distribution used before observing
    step ``t``; ``window_start`` is the first step not yet learned from.
    """

    belief: list = None
    priors: dict = field(default_factory=dict)
    window_start: int = 0


def _check_env(env, posterior):
    for q in posterior.particles:
        if tuple(env.observation_cards) != q.spec.modality_cards or env.action_card != q.spec.action_card:
            raise ConfigurationError(
                f"environment spaces {tuple(env.observation_cards)}/{env.action_card} do not match "
                f"structure {q.spec.label or q.spec.modality_cards}"
            )


def run_agent(env, posterior, schedule, rng, steps, prefs=None, search_cfg=None, cache=None,
              extras=None, metadata=None):
    """Perception, learning, structure search and reduction around one environment.

    ``env`` exposes only ``observation_cards``, ``action_card``,
    ``reset(rng)`` and ``act(action, rng)``; the loop reads observations and
    writes actions, nothing else. ``extras(step, observation, action)`` may
    return fields merged into each record (harm estimates, for example).
    Returns ``(trace, posterior)``.
    """
    _check_env(env, posterior)
    trace = EpisodeTrace(metadata=dict(metadata or {}))
    if steps <= 0:
        return trace, posterior
    search_cfg = search_cfg or SearchConfig(restart_prob=0.0)
    cache = cache or ScoreCache(search_cfg.score)
    cards = tuple(env.observation_cards)
    prefs = [np.zeros(c) for c in cards] if prefs is None else [np.asarray(c, dtype=float) for c in prefs]
    states = [_ParticleState() for _ in posterior.particles]
    observations, actions = [], []
    obs = env.reset(rng)
    for step in range(steps):
        observations.append([int(o) for o in obs])
        data = DataBatch(observations, actions)
        for q, w, st in zip(posterior.particles, posterior.weights, states):
            if w < schedule.weight_threshold and step > 0:
                # dormant particles neither filter nor learn until revived
                st.belief, st.window_start = None, step + 1
            elif st.belief is None and step > 0:
                _catch_up(q, st, data)
            else:
                _filter(q, st, data, step)
        if _due(step, schedule.param_every):
            posterior, states = _learn(posterior, states, data, step, schedule)
        if _due(step, schedule.structure_every):
            posterior = search_step(posterior, data, rng, search_cfg, cache)
            states = [_fresh_state(q, data) for q in posterior.particles]
        if _due(step, schedule.reduce_every) and data.T >= search_cfg.min_data_for_bmr:
            posterior = _reduce(posterior)
        i_best = int(np.argmax(posterior.weights))
        best = posterior.particles[i_best]
        if states[i_best].belief is None:
            _catch_up(best, states[i_best], data)
        reports = evaluate_policies(best.hyper, states[i_best].belief, prefs, schedule.horizon)
        action = select_action(reports, schedule.action_temperature, rng)
        chosen = min((r for pi, r in reports if pi.actions[0] == action), key=lambda r: r.total)
        record = {
            "step": step,
            "observation": observations[-1],
            "action": int(action),
            "free_energy": [float(q.free_energy) for q in posterior.particles],
            "weights": [float(w) for w in posterior.weights],
            "labels": [q.spec.label for q in posterior.particles],
            "efe": chosen.as_dict(),
        }
        if extras is not None:
            record.update(extras(step, observations[-1], int(action)))
        trace.append(record)
        actions.append(int(action))
        if step < steps - 1:
            obs = env.act(action, rng)
    return trace, posterior


def _filter(particle, st, data, step):
    model = point_model(particle.hyper)
    if step == 0 or st.belief is None:
        prior = model.D
    else:
        prior = predict_states(model, st.belief, int(data.actions[step - 1]))
    st.priors[step] = prior
    st.belief = infer_states(particle.hyper, data.window(step), initial=prior).current()


def _catch_up(particle, st, data):
    """Rebuild the filtering prior and belief of a skipped particle by smoothing."""
    step = data.T - 1
    beliefs = infer_states(particle.hyper, data)
    model = point_model(particle.hyper)
    if step == 0:
        st.priors[step] = model.D
    else:
        st.priors[step] = predict_states(model, beliefs.at(step - 1), int(data.actions[step - 1]))
    st.belief = beliefs.current()
    st.window_start = step


def _fresh_state(particle, data):
    beliefs = particle.beliefs
    if beliefs is None or beliefs.T != data.T:
        beliefs = infer_states(particle.hyper, data)
    st = _ParticleState(beliefs.current(), {}, data.T)
    model = point_model(particle.hyper)
    step = data.T - 1
    if step == 0:
        st.priors[step] = model.D
    else:
        st.priors[step] = predict_states(model, beliefs.at(step - 1), int(data.actions[step - 1]))
    return st


def _learn(posterior, states, data, step, schedule):
    """Add counts for the steps since the last update.

    The window reaches one step back so the transition into it is counted;
    that step's outcome was counted before and is skipped.
    """
    particles, new_states = [], []
    for q, st in zip(posterior.particles, states):
        start = st.window_start
        lo = start - 1 if start - 1 in st.priors else start
        if start > step or lo not in st.priors:
            particles.append(q)
            new_states.append(st)
            continue
        window = data.window(lo, step + 1)
        beliefs = infer_states(q.hyper, window, initial=st.priors[lo])
        hyper = update_parameters(q.hyper, beliefs, window, schedule.learning_rate,
                                  learn_initial=start == 0, learn_from=start - lo)
        particles.append(type(q)(q.spec, hyper, q.free_energy, q.log_structure_prior, q.prior, None))
        st.priors = {t: v for t, v in st.priors.items() if t >= step}
        st.window_start = step + 1
        new_states.append(st)
    return type(posterior)(particles, posterior.weights, posterior.data_seen), new_states


def _reduce(posterior):
    particles = [reduce_particle(q)[0] for q in posterior.particles]
    return reweight(type(posterior)(particles, posterior.weights, posterior.data_seen))
