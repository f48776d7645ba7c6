"""Inference about another agent and planning around its harm.

A target agent is described by hypotheses: copies of a generative model that
differ in preferences or structure. Replaying the target's perception under
each hypothesis gives its beliefs, its free energy (harm, in nats) and a
likelihood for every action it took, assuming it picks actions from
``softmax(-G / temperature)``. The empath plans on the predicted distribution
of the target's harm, binned, against an exponentially decaying preference
over harm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from inferno.errors import ShapeError
from inferno.inference import DataBatch, infer_states, variational_free_energy
from inferno.planning import (
    EFEReport,
    Policy,
    action_probabilities,
    current_states,
    evaluate_policies,
    point_model,
    predict_states,
)
from inferno.prob import entropy, kl_divergence, log_softmax, normalize

ACTION_FLOOR = 1e-12
N_HARM_BINS = 8


@dataclass
class OtherAgentHypothesis:
    """One candidate model of the target: parameters, preferences, temperature."""

    params: object
    prefs: list = None
    assumed_temperature: float = 1.0
    horizon: int = 1
    name: str = ""
    posterior_belief_trace: list = field(default=None, repr=False)

    def __post_init__(self):
        spec = self.params.spec
        if self.prefs is None:
            self.prefs = [np.asarray(c, dtype=float) for c in self.params.C]
        self.prefs = [np.asarray(c, dtype=float) for c in self.prefs]
        if len(self.prefs) != spec.num_modalities or any(
            c.shape != (k,) for c, k in zip(self.prefs, spec.modality_cards)
        ):
            raise ShapeError("preferences do not match the hypothesis modalities")
        if self.assumed_temperature <= 0:
            raise ValueError("assumed_temperature must be positive")

    @property
    def spec(self):
        return self.params.spec


@dataclass
class ReplayStep:
    prior: list
    belief: list
    free_energy: float
    action_probs: np.ndarray


@dataclass
class TargetRecord:
    """What the empath saw of the target: its observations and the action it took after each."""

    observations: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=np.int64))
        self.actions = np.asarray(self.actions, dtype=np.int64).ravel()
        if self.observations.shape[0] != self.actions.shape[0]:
            raise ShapeError("one action per observed step is required")

    @property
    def T(self):
        return self.observations.shape[0]


def replay(hypothesis, record):
    """Filter the target's perception under ``hypothesis``, step by step."""
    tom = TheoryOfMind([hypothesis])
    for o, a in zip(record.observations, record.actions):
        tom.update(o, a)
    return tom.traces[0]


def action_log_likelihood(steps, actions):
    total = 0.0
    for st, a in zip(steps, actions):
        p = st.action_probs[a] if 0 <= a < st.action_probs.size else 0.0
        total += float(np.log(max(p, ACTION_FLOOR)))
    return total


def infer_other(hypotheses, record, prior=None, return_traces=False):
    """Posterior over hypotheses from the target's observed choices.

    Each hypothesis replays the target's perception; an observed action
    scores the summed probability of the policies that start with it,
    floored at 1e-12 so unsupported actions never raise.
    """
    if not hypotheses:
        raise ValueError("at least one hypothesis is required")
    tom = TheoryOfMind(hypotheses, prior)
    for o, act in zip(record.observations, record.actions):
        tom.update(o, act)
    for h, tr in zip(hypotheses, tom.traces):
        h.posterior_belief_trace = tr
    post, traces = tom.posterior, tom.traces
    return (post, traces) if return_traces else post


class TheoryOfMind:
    """Incremental version of :func:`infer_other` for online use.

    ``update`` adds one observed step of the target (its observation and the
    action it then took) to every hypothesis replay.
    """

    def __init__(self, hypotheses, prior=None):
        if not hypotheses:
            raise ValueError("at least one hypothesis is required")
        self.hypotheses = list(hypotheses)
        self.log_prior = np.zeros(len(hypotheses)) if prior is None else np.log(np.asarray(prior, dtype=float))
        self.loglik = np.zeros(len(hypotheses))
        self.traces = [[] for _ in hypotheses]
        self.observations, self.actions = [], []

    @property
    def posterior(self):
        return np.exp(log_softmax(self.loglik + self.log_prior))

    def record(self):
        return TargetRecord(self.observations, self.actions)

    def update(self, observation, action):
        self.observations.append([int(o) for o in observation])
        self.actions.append(int(action))
        for i, h in enumerate(self.hypotheses):
            model = point_model(h.params)
            tr = self.traces[i]
            if not tr:
                prior = [d.copy() for d in model.D]
            else:
                a = self.actions[-2]
                prior = predict_states(model, tr[-1].belief, a) if 0 <= a < model.spec.action_card else tr[-1].belief
            batch = DataBatch([self.observations[-1]])
            b = infer_states(h.params, batch, initial=prior)
            f = variational_free_energy(b, h.params, batch, initial=prior).total
            belief = b.current()
            reports = evaluate_policies(h.params, belief, h.prefs, h.horizon)
            probs = action_probabilities(reports, model.spec.action_card, h.assumed_temperature)
            tr.append(ReplayStep(prior, belief, float(f), probs))
            self.loglik[i] += action_log_likelihood([tr[-1]], [int(action)])
        return self.posterior

    def harm(self, window=1, k_max=None, n_bins=N_HARM_BINS):
        return estimate_harm(self.posterior, self.hypotheses, self.record(), window, self.traces, k_max, n_bins)


# ---------------------------------------------------------------------------
# harm


def harm_bin_edges(k_max, n_bins=N_HARM_BINS, top=None):
    """Equal-width bins on ``[0, ln k_max]``; the top edge stretches to ``top`` if larger."""
    hi = float(np.log(k_max))
    if top is not None and top > hi:
        hi = float(top)
    if hi <= 0:
        hi = 1.0
    return np.linspace(0.0, hi, n_bins + 1)


def bin_index(edges, value):
    idx = int(np.searchsorted(edges, value, side="right")) - 1
    return min(max(idx, 0), len(edges) - 2)


@dataclass
class HarmEstimate:
    bins: np.ndarray
    distribution: np.ndarray
    point_estimate: float
    per_hypothesis: np.ndarray = None


def windowed_harm(hypothesis, record, steps, window):
    """Free energy of the last ``window`` observations, starting from the filtering prior."""
    T = record.T
    start = T - window
    batch = DataBatch(record.observations[start:], record.actions[start:T - 1])
    prior = steps[start].prior
    b = infer_states(hypothesis.params, batch, initial=prior)
    return float(variational_free_energy(b, hypothesis.params, batch, initial=prior).total)


def estimate_harm(posterior, hypotheses, record, window, traces=None, k_max=None, n_bins=N_HARM_BINS):
    """Posterior mixture of the target's windowed free energy, binned.

    ``k_max`` defaults to the largest modality cardinality times the window.
    """
    if window < 1:
        raise ValueError("empty harm window")
    if window > record.T:
        raise ValueError("window exceeds the observed steps")
    posterior = np.asarray(posterior, dtype=float)
    if traces is None:
        traces = [replay(h, record) for h in hypotheses]
    harms = np.array([windowed_harm(h, record, tr, window) for h, tr in zip(hypotheses, traces)])
    if k_max is None:
        k_max = max(max(h.spec.modality_cards) for h in hypotheses) * window
    finite = harms[np.isfinite(harms)]
    edges = harm_bin_edges(k_max, n_bins, finite.max() if finite.size else None)
    dist = np.zeros(n_bins)
    for w, x in zip(posterior, harms):
        dist[bin_index(edges, x) if np.isfinite(x) else n_bins - 1] += w
    return HarmEstimate(edges, dist, float(posterior @ harms), harms)


@dataclass
class HarmPreference:
    """Exponentially decaying preference over harm bins."""

    edges: np.ndarray
    decay_rate: float = 1.0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        if self.edges.ndim != 1 or self.edges.size < 2 or np.any(np.diff(self.edges) <= 0):
            raise ShapeError("bin edges must be ascending")
        if not self.decay_rate > 0:
            raise ValueError("decay_rate must be positive")

    @property
    def centres(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def log_probs(self):
        return log_softmax(-self.decay_rate * self.centres)

    @property
    def probs(self):
        return np.exp(self.log_probs)


@dataclass
class HarmModel:
    """``table[bin, *states of factors]``: probability of each harm bin given world states."""

    factors: tuple
    table: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        self.factors = tuple(int(f) for f in self.factors)
        self.table = np.asarray(self.table, dtype=float)
        self.edges = np.asarray(self.edges, dtype=float)
        if self.table.ndim != 1 + len(self.factors):
            raise ShapeError("harm table needs one axis per harm factor")
        if self.table.shape[0] != self.edges.size - 1:
            raise ShapeError("harm table rows do not match the bins")
        if np.any(np.diff(self.edges) <= 0):
            raise ShapeError("bin edges must be ascending")
        if np.any(self.table < 0) or not np.allclose(self.table.sum(axis=0), 1.0, atol=1e-9):
            raise ShapeError("harm table columns must be distributions")

    @classmethod
    def from_values(cls, factors, harm, edges):
        """Deterministic harm model from a harm value per joint state."""
        harm = np.asarray(harm, dtype=float)
        table = np.zeros((len(edges) - 1,) + harm.shape)
        for idx in np.ndindex(*harm.shape):
            table[(bin_index(edges, harm[idx]),) + idx] = 1.0
        return cls(factors, table, edges)


_L = "abcdefghijklmn"


@dataclass
class HarmPrediction:
    """Per-step predicted harm-bin distributions and observation ambiguity."""

    edges: np.ndarray
    distributions: list
    ambiguities: list


def predict_harm(params, belief, policy, harm_model):
    if not isinstance(policy, Policy):
        policy = Policy(policy)
    model = point_model(params)
    spec = model.spec
    qs = current_states(belief)
    dists, ambs = [], []
    for a in policy.actions:
        qs = predict_states(model, qs, a)
        hsub = "z" + "".join(_L[f] for f in harm_model.factors)
        q_bin = np.einsum(f"{hsub},{','.join(_L[f] for f in harm_model.factors)}->z",
                          harm_model.table, *[qs[f] for f in harm_model.factors])
        q_bin = q_bin / q_bin.sum()
        amb = 0.0
        for m, edges in enumerate(spec.likelihood_edges):
            union = sorted(set(edges) | set(harm_model.factors))
            asub = "y" + "".join(_L[f] for f in edges)
            joint = np.einsum(
                f"{asub},{hsub},{','.join(_L[f] for f in union)}->zy",
                model.A[m], harm_model.table, *[qs[f] for f in union],
            )
            for k in range(joint.shape[0]):
                if q_bin[k] > 0:
                    amb += q_bin[k] * entropy(joint[k] / joint[k].sum())
        dists.append(q_bin)
        ambs.append(float(amb))
    return HarmPrediction(harm_model.edges, dists, ambs)


def _harm_report(predictions, prefs):
    risk = amb = eu = 0.0
    for pred, pref in zip(predictions, prefs):
        if pred.edges.shape != pref.edges.shape or not np.allclose(pred.edges, pref.edges, rtol=0, atol=1e-12):
            raise ShapeError("harm bin grids differ")
        lp = pref.log_probs
        for q, h in zip(pred.distributions, pred.ambiguities):
            risk += kl_divergence(q, np.exp(lp))
            amb += h
            eu += float(q @ lp)
    return risk, amb, eu


def first_law_efe(params, belief, policy, harm_model, pref):
    """Expected free energy over the target's harm only.

    Risk is ``KL[q(harm bin) || pref]``; ambiguity is the expected entropy of
    the empath's observations given the harm bin; information gain is the
    mutual information between observations and harm bin. Summed over the
    policy's steps.
    """
    pred = predict_harm(params, belief, policy, harm_model)
    risk, amb, eu = _harm_report([pred], [pref])
    ig = _harm_information(params, belief, policy, harm_model)
    return EFEReport(risk, amb, eu, ig, risk + amb)


def _harm_information(params, belief, policy, harm_model):
    if not isinstance(policy, Policy):
        policy = Policy(policy)
    model = point_model(params)
    qs = current_states(belief)
    pred = predict_harm(params, qs, policy, harm_model)
    total = 0.0
    for a, amb in zip(policy.actions, pred.ambiguities):
        qs = predict_states(model, qs, a)
        h_o = 0.0
        for m, edges in enumerate(model.spec.likelihood_edges):
            qo = model.A[m]
            for f in edges:
                qo = np.tensordot(qo, qs[f], axes=([1], [0]))
            h_o += entropy(qo / qo.sum())
        total += max(h_o - amb, 0.0)
    return float(total)


def multi_target_first_law(predictions, prefs):
    """Risk and ambiguity summed over targets under a factorized joint preference."""
    if not predictions or len(predictions) != len(prefs):
        raise ValueError("one preference per target prediction is required")
    edges = predictions[0].edges
    for p in list(predictions) + list(prefs):
        if p.edges.shape != edges.shape or not np.allclose(p.edges, edges, rtol=0, atol=1e-12):
            raise ShapeError("harm bin grids differ between targets")
    risk, amb, eu = _harm_report(predictions, prefs)
    return EFEReport(risk, amb, eu, 0.0, risk + amb)


# ---------------------------------------------------------------------------
# auxiliary preferences


def learn_auxiliary_preferences(C, traces, rate=1.0):
    """Shift auxiliary-outcome preferences toward outcomes seen with low target harm.

    ``traces`` is a list of episodes, each a sequence of ``(outcome, harm)``
    pairs. Each step scores how low its harm sits in the pooled harms: the
    fraction of pooled steps with higher harm plus half of those tied
    (the below-quantile indicator averaged over all quantiles, so a tied
    mode at the median does not swallow the signal). Each outcome's
    Laplace-smoothed mean score enters the log preferences scaled by
    ``rate``, and the result is renormalized.
    """
    C = np.asarray(C, dtype=float)
    steps = [(int(o), float(h)) for tr in traces for o, h in tr]
    if rate == 0 or not steps:
        return C.copy()
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    outcomes = np.array([o for o, _ in steps])
    harms = np.array([h for _, h in steps])
    if np.any(outcomes < 0) or np.any(outcomes >= C.size):
        raise ShapeError("auxiliary outcome outside the preference table")
    ordered = np.sort(harms)
    below = np.searchsorted(ordered, harms, side="left")
    above = harms.size - np.searchsorted(ordered, harms, side="right")
    ties = harms.size - below - above
    low = (above + 0.5 * ties) / harms.size
    n = np.bincount(outcomes, minlength=C.size).astype(float)
    k = np.bincount(outcomes, weights=low, minlength=C.size)
    freq = (k + 1.0) / (n + 2.0)
    return log_softmax(C + rate * np.log(freq))


def flat_preferences(card):
    return np.log(normalize(np.ones(card)))
