"""State inference, parameter learning and free energy for a fixed structure.

The approximate posterior over hidden states factorizes across factors; each
factor keeps an exact Markov-chain posterior over time (marginals plus
consecutive-pair marginals), updated by forward-backward against the expected
log potentials of every other factor. Parameters enter through expected log
values under Dirichlet beliefs, or through plain logs for a point model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import gammaln, logsumexp

from inferno.errors import (
    ImpossibleObservationError,
    OracleTooLargeError,
    ShapeError,
)
from inferno.genmodel import GenerativeModel, HyperParams, StructureSpec, TransitionEdges
from inferno.prob import dirichlet_expected_log, dirichlet_kl, xlogy

LOG_FLOOR = -1000.0
ORACLE_BOUND = 1_000_000

_PREV = "abcdefghijklmn"
_NEXT = "ABCDEFGHIJKLMN"


@dataclass
class DataBatch:
    """Observations (one index per modality per step) and the actions between steps."""

    observations: np.ndarray
    actions: np.ndarray = None

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.int64)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2 or obs.shape[0] < 1:
            raise ShapeError("observations must have at least one timestep")
        acts = np.zeros(obs.shape[0] - 1, dtype=np.int64) if self.actions is None else np.asarray(self.actions, dtype=np.int64)
        if acts.ndim != 1 or acts.shape[0] != obs.shape[0] - 1:
            raise ShapeError(f"expected {obs.shape[0] - 1} actions, got {acts.shape}")
        self.observations = obs
        self.actions = acts

    @property
    def T(self):
        return self.observations.shape[0]

    def window(self, start, stop=None):
        stop = self.T if stop is None else stop
        return DataBatch(self.observations[start:stop], self.actions[start:max(stop - 1, start)])


def check_batch(spec, data):
    problems = []
    if data.observations.shape[1] != spec.num_modalities:
        problems.append(
            f"{data.observations.shape[1]} observation columns for {spec.num_modalities} modalities"
        )
    else:
        for m, card in enumerate(spec.modality_cards):
            col = data.observations[:, m]
            if np.any(col < 0) or np.any(col >= card):
                problems.append(f"modality {m} observation out of range [0, {card})")
    if np.any(data.actions < 0) or np.any(data.actions >= spec.action_card):
        problems.append(f"action out of range [0, {spec.action_card})")
    if problems:
        raise ShapeError("; ".join(problems))


@dataclass
class BeliefState:
    """Per-factor posterior marginals ``marginals[f][t]`` and consecutive-pair
    marginals ``pairwise[f][t][next, prev]`` (``None`` means independent)."""

    marginals: list
    pairwise: list = None
    converged: bool = True
    iterations: int = 0
    final_free_energy: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def T(self):
        return self.marginals[0].shape[0]

    def at(self, t):
        return [m[t] for m in self.marginals]

    def current(self):
        return self.at(-1)

    def pairs(self, f):
        if self.pairwise is not None and self.pairwise[f] is not None:
            return self.pairwise[f]
        q = self.marginals[f]
        return q[1:, :, None] * q[:-1, None, :]


@dataclass
class FreeEnergyReport:
    total: float
    accuracy: float
    complexity_states: float
    complexity_params: float


@dataclass
class InferenceConfig:
    tol: float = 1e-8
    max_iters: int = 256


# ---------------------------------------------------------------------------
# chain kernel


@numba.njit(cache=True)
def _lse(x):
    m = x.max()
    if m == -np.inf:
        return -np.inf
    return m + np.log(np.exp(x - m).sum())


@numba.njit(cache=True)
def _chain_kernel(unary, pair):
    """Forward-backward on a chain.

    ``unary[t, i]`` are log potentials, ``pair[t, j, i]`` the log potential
    for moving from state ``i`` at ``t`` to ``j`` at ``t + 1``.
    """
    T, K = unary.shape
    la = np.empty((T, K))
    lb = np.zeros((T, K))
    la[0] = unary[0]
    tmp = np.empty(K)
    for t in range(1, T):
        for j in range(K):
            for i in range(K):
                tmp[i] = la[t - 1, i] + pair[t - 1, j, i]
            la[t, j] = _lse(tmp) + unary[t, j]
    log_z = _lse(la[T - 1])
    for t in range(T - 2, -1, -1):
        for i in range(K):
            for j in range(K):
                tmp[j] = pair[t, j, i] + unary[t + 1, j] + lb[t + 1, j]
            lb[t, i] = _lse(tmp)
    marg = np.zeros((T, K))
    pairs = np.zeros((max(T - 1, 0), K, K))
    if log_z == -np.inf:
        return marg, pairs, log_z
    for t in range(T):
        for i in range(K):
            marg[t, i] = np.exp(la[t, i] + lb[t, i] - log_z)
        s = marg[t].sum()
        marg[t] /= s
    for t in range(T - 1):
        for j in range(K):
            for i in range(K):
                pairs[t, j, i] = np.exp(la[t, i] + pair[t, j, i] + unary[t + 1, j] + lb[t + 1, j] - log_z)
        s = pairs[t].sum()
        pairs[t] /= s
    return marg, pairs, log_z


def chain_posterior(unary, pair):
    """Exact chain posterior: ``(marginals, pair_marginals, log_normalizer)``."""
    unary = np.ascontiguousarray(unary, dtype=float)
    pair = np.ascontiguousarray(pair, dtype=float).reshape(
        max(unary.shape[0] - 1, 0), unary.shape[1], unary.shape[1]
    )
    return _chain_kernel(unary, pair)


# ---------------------------------------------------------------------------
# log parameter tables


@dataclass
class _LogTables:
    A: list
    B: list
    D: list


def _log_tables(params, initial=None):
    if isinstance(params, HyperParams):
        lnA = [dirichlet_expected_log(a) for a in params.a]
        lnB = [dirichlet_expected_log(b) for b in params.b]
        lnD = [dirichlet_expected_log(d) for d in params.d]
    elif isinstance(params, GenerativeModel):
        with np.errstate(divide="ignore"):
            lnA = [np.log(a) for a in params.A]
            lnB = [np.log(b) for b in params.B]
            lnD = [np.log(d) for d in params.D]
    else:
        raise TypeError("params must be HyperParams or GenerativeModel")
    if initial is not None:
        with np.errstate(divide="ignore"):
            lnD = [np.log(np.asarray(q, dtype=float)) for q in initial]
    return _LogTables(lnA, lnB, lnD)


def _obs_slices(spec, lnA, data):
    return [lnA[m][data.observations[:, m]] for m in range(spec.num_modalities)]


def _trans_slices(spec, lnB, data):
    T = data.T
    out = []
    for g, t in enumerate(spec.transition_edges):
        if t.action_dependent:
            out.append(np.moveaxis(lnB[g], -1, 0)[data.actions])
        else:
            out.append(np.broadcast_to(lnB[g], (T - 1,) + lnB[g].shape))
    return out


def _a_sub(spec, m):
    return "z" + "".join(_PREV[f] for f in spec.likelihood_edges[m])


def _b_sub(spec, g):
    t = spec.transition_edges[g]
    return "z" + _NEXT[g] + _PREV[g] + "".join(_PREV[p] for p in t.parents)


def _floored(x):
    return np.maximum(x, LOG_FLOOR)


def _expected(table, sub, operands, out):
    """einsum with a -inf-safe expectation: returns (finite part, mass on -inf)."""
    finite = np.isfinite(table)
    if finite.all():
        return np.einsum(f"{sub},{','.join(s for s, _ in operands)}->{out}" if operands else f"{sub}->{out}",
                         table, *[o for _, o in operands]), None
    safe = np.where(finite, table, 0.0)
    mask = (~finite).astype(float)
    spec_str = f"{sub},{','.join(s for s, _ in operands)}->{out}" if operands else f"{sub}->{out}"
    return np.einsum(spec_str, safe, *[o for _, o in operands]), np.einsum(
        spec_str, mask, *[o for _, o in operands]
    )


class _Problem:
    """Precomputed log potentials for one (params, data) pair."""

    def __init__(self, params, data, initial=None):
        spec = params.spec
        check_batch(spec, data)
        self.spec = spec
        self.data = data
        self.T = data.T
        logs = _log_tables(params, initial)
        self.raw_obs = _obs_slices(spec, logs.A, data)
        self.raw_trans = _trans_slices(spec, logs.B, data)
        self.raw_init = logs.D
        self.obs = [_floored(x) for x in self.raw_obs]
        self.trans = [_floored(x) for x in self.raw_trans]
        self.init = [_floored(x) for x in logs.D]
        self.children = {f: [g for g, t in enumerate(spec.transition_edges) if f in t.parents]
                         for f in range(spec.num_factors)}
        for m, sl in enumerate(self.raw_obs):
            flat = sl.reshape(self.T, -1)
            bad = np.flatnonzero(~np.isfinite(flat).any(axis=1) | (flat.max(axis=1) == -np.inf))
            if bad.size:
                raise ImpossibleObservationError(
                    f"observation {int(data.observations[bad[0], m])} of modality {m} at step "
                    f"{int(bad[0])} has zero probability under every state"
                )

    def factor_potentials(self, f, marg, pair):
        spec = self.spec
        T = self.T
        c = spec.factor_cards[f]
        unary = np.zeros((T, c))
        unary[0] += self.init[f]
        for m, edges in enumerate(spec.likelihood_edges):
            if f not in edges:
                continue
            ops = [("z" + _PREV[g], marg[g]) for g in edges if g != f]
            unary += np.einsum(
                f"{_a_sub(spec, m)}{''.join(',' + s for s, _ in ops)}->z{_PREV[f]}",
                self.obs[m], *[o for _, o in ops],
            )
        if T > 1:
            t_f = spec.transition_edges[f]
            ops = [("z" + _PREV[p], marg[p][:-1]) for p in t_f.parents]
            pairwise = np.einsum(
                f"{_b_sub(spec, f)}{''.join(',' + s for s, _ in ops)}->z{_NEXT[f]}{_PREV[f]}",
                self.trans[f], *[o for _, o in ops],
            )
            for g in self.children[f]:
                t_g = spec.transition_edges[g]
                ops = [("z" + _NEXT[g] + _PREV[g], pair[g])]
                ops += [("z" + _PREV[p], marg[p][:-1]) for p in t_g.parents if p != f]
                unary[:-1] += np.einsum(
                    f"{_b_sub(spec, g)}{''.join(',' + s for s, _ in ops)}->z{_PREV[f]}",
                    self.trans[g], *[o for _, o in ops],
                )
        else:
            pairwise = np.zeros((0, c, c))
        return unary, pairwise

    def energy_terms(self, marg, pair):
        """Expected log initial/transition (state prior) and likelihood terms, raw logs."""
        spec = self.spec
        prior_term = 0.0
        impossible = False
        for f in range(spec.num_factors):
            q0 = marg[f][0]
            lnd = self.raw_init[f]
            bad = (q0 > 0) & ~np.isfinite(lnd)
            if bad.any():
                impossible = True
            prior_term += float(np.sum(np.where(q0 > 0, q0 * np.where(np.isfinite(lnd), lnd, 0.0), 0.0)))
        if self.T > 1:
            for g, t in enumerate(spec.transition_edges):
                ops = [("z" + _NEXT[g] + _PREV[g], pair[g])]
                ops += [("z" + _PREV[p], marg[p][:-1]) for p in t.parents]
                val, mass = _expected(self.raw_trans[g], _b_sub(spec, g), ops, "")
                prior_term += float(val)
                if mass is not None and float(mass) > 0:
                    impossible = True
        accuracy = 0.0
        for m, edges in enumerate(spec.likelihood_edges):
            ops = [("z" + _PREV[g], marg[g]) for g in edges]
            val, mass = _expected(self.raw_obs[m], _a_sub(spec, m), ops, "")
            accuracy += float(val)
            if mass is not None and float(mass) > 0:
                impossible = True
        return prior_term, accuracy, impossible


def _neg_entropy(marg, pair):
    total = 0.0
    for f, q in enumerate(marg):
        T = q.shape[0]
        if pair is not None and pair[f] is not None and T > 1:
            total += float(np.sum(xlogy(pair[f], pair[f])))
            if T > 2:
                total -= float(np.sum(xlogy(q[1:-1], q[1:-1])))
        else:
            total += float(np.sum(xlogy(q, q)))
    return total


def _free_energy(problem, marg, pair, complexity_params=0.0):
    neg_h = _neg_entropy(marg, pair)
    full_pair = [
        pair[f] if pair is not None and pair[f] is not None
        else marg[f][1:, :, None] * marg[f][:-1, None, :]
        for f in range(len(marg))
    ]
    prior_term, accuracy, impossible = problem.energy_terms(marg, full_pair)
    if impossible:
        return FreeEnergyReport(float("inf"), float("-inf"), float("inf"), complexity_params)
    cs = neg_h - prior_term
    return FreeEnergyReport(cs + complexity_params - accuracy, accuracy, cs, complexity_params)


def _params_kl(params, prior):
    if prior is None or not isinstance(params, HyperParams):
        return 0.0
    return sum(dirichlet_kl(q, p) for q, p in zip(params.tables(), prior.tables()))


# ---------------------------------------------------------------------------
# public operations


def _initial_beliefs(spec, T, rng=None):
    marg, pair = [], []
    for c in spec.factor_cards:
        if rng is None:
            q = np.full((T, c), 1.0 / c)
        else:
            q = rng.dirichlet(np.ones(c), size=T)
        marg.append(q)
        pair.append(q[1:, :, None] * q[:-1, None, :])
    return marg, pair


def infer_states(params, data, cfg=None, initial=None, init=None, rng=None):
    """Coordinate-ascent posterior over hidden states.

    ``params`` is a :class:`HyperParams` (expected-log parameters) or a
    :class:`GenerativeModel` (point parameters). ``initial`` optionally
    replaces the initial-state distribution with given per-factor vectors
    (used for filtering and windows). ``init`` seeds the sweep with an earlier
    :class:`BeliefState`; otherwise marginals start uniform, or random when a
    generator ``rng`` is supplied. The free energy recorded per sweep is
    evaluated with ``params`` as both posterior and prior over parameters.
    """
    cfg = cfg or InferenceConfig()
    spec = params.spec
    problem = _Problem(params, data, initial)
    T = data.T
    if init is not None:
        marg = [np.array(q, dtype=float) for q in init.marginals]
        pair = [np.array(init.pairs(f), dtype=float) for f in range(spec.num_factors)]
    else:
        marg, pair = _initial_beliefs(spec, T, rng)
    history = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        change = 0.0
        for f in range(spec.num_factors):
            unary, pairwise = problem.factor_potentials(f, marg, pair)
            q, qq, log_z = chain_posterior(unary, pairwise)
            if not np.isfinite(log_z):
                raise ImpossibleObservationError(f"factor {f} has no feasible trajectory")
            change = max(change, float(np.max(np.abs(q - marg[f]))))
            marg[f] = q
            pair[f] = qq
        history.append(_free_energy(problem, marg, pair).total)
        if change < cfg.tol:
            converged = True
            break
    final = history[-1]
    if isinstance(params, GenerativeModel) and not np.isfinite(final):
        raise ImpossibleObservationError("observations have zero probability under the model")
    return BeliefState(marg, pair, converged, it, final, history)


def variational_free_energy(beliefs, params, data, prior=None, initial=None):
    """Free energy of ``beliefs`` with accuracy/complexity split.

    ``params`` plays the role of the approximate posterior over parameters
    (Dirichlet) or fixes them (point model); ``prior`` is the Dirichlet prior
    for the parameter complexity term, defaulting to ``params`` itself.
    """
    problem = _Problem(params, data, initial)
    return _free_energy(problem, beliefs.marginals, beliefs.pairwise, _params_kl(params, prior))


def _onehot(idx, n):
    out = np.zeros((len(idx), n))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def expected_counts(spec, beliefs, data, learn_initial=True, learn_from=0):
    """Expected sufficient statistics, one array per a/b/d table."""
    marg = beliefs.marginals
    a_stats = []
    for m, edges in enumerate(spec.likelihood_edges):
        obs = _onehot(data.observations[learn_from:, m], spec.modality_cards[m])
        ops = [marg[g][learn_from:] for g in edges]
        sub = "zx," + ",".join("z" + _PREV[g] for g in edges)
        a_stats.append(np.einsum(f"{sub}->x{''.join(_PREV[g] for g in edges)}", obs, *ops))
    b_stats = []
    for g, t in enumerate(spec.transition_edges):
        shape = spec.b_shape(g)
        if data.T < 2:
            b_stats.append(np.zeros(shape))
            continue
        ops = [beliefs.pairs(g)] + [marg[p][:-1] for p in t.parents]
        subs = ["z" + _NEXT[g] + _PREV[g]] + ["z" + _PREV[p] for p in t.parents]
        out = _NEXT[g] + _PREV[g] + "".join(_PREV[p] for p in t.parents)
        if t.action_dependent:
            ops.append(_onehot(data.actions, spec.action_card))
            subs.append("zy")
            out += "y"
        b_stats.append(np.einsum(f"{','.join(subs)}->{out}", *ops))
    d_stats = [q[0].copy() if learn_initial else np.zeros_like(q[0]) for q in marg]
    return a_stats + b_stats + d_stats


def update_parameters(h, beliefs, data, rate=1.0, learn_initial=True, learn_from=0):
    """Add ``rate``-scaled expected counts to every Dirichlet table.

    ``learn_from`` skips likelihood statistics for earlier steps (context
    steps whose outcomes were already counted); ``learn_initial`` controls
    whether the first step informs the initial-state counts.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if len(beliefs.marginals) != h.spec.num_factors or beliefs.T != data.T:
        raise ShapeError("beliefs do not match the hyperparameters and data")
    for f, q in enumerate(beliefs.marginals):
        if q.shape[1] != h.spec.factor_cards[f]:
            raise ShapeError(f"belief factor {f} has the wrong cardinality")
    if rate == 0:
        return h
    stats = expected_counts(h.spec, beliefs, data, learn_initial, learn_from)
    return h.replace_tables([t + rate * s for t, s in zip(h.tables(), stats)])


# ---------------------------------------------------------------------------
# exact oracles


def joint_model(model):
    """Collapse a factorial point model into an equivalent single-factor model."""
    spec = model.spec
    cards = spec.factor_cards
    states = np.array(list(np.ndindex(*cards)), dtype=np.int64).reshape(-1, len(cards))
    S = states.shape[0]
    A = []
    for m, edges in enumerate(spec.likelihood_edges):
        A.append(model.A[m][(slice(None),) + tuple(states[:, f] for f in edges)])
    any_action = any(t.action_dependent for t in spec.transition_edges)
    U = spec.action_card
    B = np.ones((S, S, U))
    nxt = lambda f: states[:, f][:, None, None]  # noqa: E731
    prv = lambda f: states[:, f][None, :, None]  # noqa: E731
    acts = np.arange(U)[None, None, :]
    for g, t in enumerate(spec.transition_edges):
        idx = (nxt(g), prv(g)) + tuple(prv(p) for p in t.parents)
        if t.action_dependent:
            idx += (acts,)
        B = B * np.broadcast_to(model.B[g][idx], (S, S, U))
    if not any_action:
        B = B[:, :, 0]
    D = np.ones(S)
    for f in range(len(cards)):
        D = D * model.D[f][states[:, f]]
    jspec = StructureSpec(
        (S,), spec.modality_cards, tuple((0,) for _ in spec.modality_cards),
        (TransitionEdges(any_action),), spec.action_card, spec.label + "+joint",
    )
    return GenerativeModel(jspec, A, [B], model.C, [D], model.E), states


def _joint_chain(model, data, initial=None):
    check_batch(model.spec, data)
    jm, states = joint_model(model)
    if initial is not None:
        D = np.ones(states.shape[0])
        for f, q in enumerate(initial):
            D = D * np.asarray(q)[states[:, f]]
        jm = GenerativeModel(jm.spec, jm.A, jm.B, jm.C, [D], jm.E)
    problem = _Problem(jm, data)
    unary = np.zeros((data.T, states.shape[0]))
    unary[0] += problem.raw_init[0]
    for sl in problem.raw_obs:
        unary += sl
    pair = problem.raw_trans[0] if data.T > 1 else np.zeros((0, states.shape[0], states.shape[0]))
    marg, pairs, log_z = chain_posterior(unary, pair)
    return jm, states, marg, pairs, log_z


def exact_point_log_evidence(model, data, initial=None):
    """``ln P(o | actions, theta)`` by the forward algorithm on the joint state space."""
    return float(_joint_chain(model, data, initial)[4])


def exact_state_posterior(model, data, initial=None):
    """Exact smoothed per-factor marginals under a point model."""
    spec = model.spec
    jm, states, marg, pairs, log_z = _joint_chain(model, data, initial)
    if not np.isfinite(log_z):
        raise ImpossibleObservationError("observations have zero probability under the model")
    per_marg, per_pair = [], []
    for f, c in enumerate(spec.factor_cards):
        proj = _onehot(states[:, f], c)
        per_marg.append(marg @ proj)
        per_pair.append(np.einsum("tji,jn,ip->tnp", pairs, proj, proj))
    return BeliefState(per_marg, per_pair, True, 1, -float(log_z), [-float(log_z)])


def exact_joint_posterior(model, data, initial=None):
    """Exact posterior over the collapsed joint state: ``(joint_model, BeliefState)``."""
    jm, states, marg, pairs, log_z = _joint_chain(model, data, initial)
    if not np.isfinite(log_z):
        raise ImpossibleObservationError("observations have zero probability under the model")
    return jm, BeliefState([marg], [pairs], True, 1, -float(log_z), [-float(log_z)])


def _polya_columns(alpha, counts):
    """sum over columns of ln B(alpha + n) - ln B(alpha); counts shape (N, K, C)."""
    a = alpha.reshape(alpha.shape[0], -1)
    return (
        gammaln(a[None] + counts).sum(axis=1) - gammaln(a.sum(axis=0)[None] + counts.sum(axis=1))
        - (gammaln(a).sum(axis=0) - gammaln(a.sum(axis=0)))[None]
    ).sum(axis=1)


def exact_log_evidence(h, data, bound=ORACLE_BOUND, chunk=50_000):
    """``ln P(o | actions, m)`` with states and Dirichlet parameters marginalized.

    Enumerates every joint hidden trajectory; along each one the parameters
    integrate out in closed form (Polya / Dirichlet-multinomial), which
    equals chaining sequential Dirichlet-categorical predictive updates.
    """
    spec = h.spec
    check_batch(spec, data)
    cards = spec.factor_cards
    states = np.array(list(np.ndindex(*cards)), dtype=np.int64).reshape(-1, len(cards))
    S, T = states.shape[0], data.T
    n_traj = S ** T
    if n_traj > bound:
        raise OracleTooLargeError(f"{n_traj} joint trajectories exceed the oracle bound {bound}")
    obs, acts = data.observations, data.actions
    results = []
    for start in range(0, n_traj, chunk):
        idx = np.arange(start, min(start + chunk, n_traj))
        traj = np.stack(np.unravel_index(idx, (S,) * T), axis=1) if T > 1 else idx[:, None]
        fs = states[traj]  # (N, T, F)
        N = idx.size
        logp = np.zeros(N)
        rows = np.arange(N)
        for m, edges in enumerate(spec.likelihood_edges):
            alpha = h.a[m]
            K = alpha.shape[0]
            C = alpha.size // K
            counts = np.zeros((N, K * C))
            col_shape = alpha.shape[1:]
            for t in range(T):
                col = np.ravel_multi_index(tuple(fs[:, t, f] for f in edges), col_shape)
                np.add.at(counts, (rows, obs[t, m] * C + col), 1.0)
            logp += _polya_columns(alpha, counts.reshape(N, K, C))
        for g, tr in enumerate(spec.transition_edges):
            if T < 2:
                break
            alpha = h.b[g]
            K = alpha.shape[0]
            C = alpha.size // K
            counts = np.zeros((N, K * C))
            col_shape = alpha.shape[1:]
            for t in range(1, T):
                parts = [fs[:, t - 1, g]] + [fs[:, t - 1, p] for p in tr.parents]
                if tr.action_dependent:
                    parts.append(np.full(N, acts[t - 1]))
                col = np.ravel_multi_index(tuple(parts), col_shape)
                np.add.at(counts, (rows, fs[:, t, g] * C + col), 1.0)
            logp += _polya_columns(alpha, counts.reshape(N, K, C))
        for f in range(len(cards)):
            alpha = h.d[f]
            counts = _onehot(fs[:, 0, f], cards[f])[:, :, None]
            logp += _polya_columns(alpha[:, None], counts)
        results.append(logsumexp(logp))
    return float(logsumexp(results))


def brute_force_trajectories(spec, T):
    """Iterate over every joint hidden trajectory (tuples of per-factor state tuples)."""
    single = list(itertools.product(*(range(c) for c in spec.factor_cards)))
    return itertools.product(single, repeat=T)
