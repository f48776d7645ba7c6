"""Particle posterior over structures and Bayesian model reduction.

A :class:`ParticlePosterior` holds a few candidate structures, each fitted by
variational Bayes-EM on the data seen so far and weighted by
``softmax(-free_energy + log_structure_prior)``. :func:`search_step` moves
every particle to its best one-move neighbour when that improves its score.
Model reduction rescores alternative (sparser) Dirichlet priors in closed form
from one fitted posterior.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from inferno.errors import DomainError, EmptyPosteriorError, ImpossibleObservationError, InconsistencyError
from inferno.genmodel import (
    Bounds,
    HyperParams,
    canonical_form,
    canonical_key,
    check_spec,
    describe,
    enumerate_neighbors,
    instantiate_flat,
    log_structure_prior,
    random_spec,
)
from inferno.inference import (
    BeliefState,
    InferenceConfig,
    check_batch,
    infer_states,
    update_parameters,
    variational_free_energy,
)
from inferno.prob import log_multivariate_beta


@dataclass
class StructureParticle:
    spec: object
    hyper: HyperParams
    free_energy: float
    log_structure_prior: float
    prior: HyperParams = None
    beliefs: BeliefState = field(default=None, compare=False, repr=False)

    @property
    def objective(self):
        """``free_energy - log_structure_prior`` (lower is better)."""
        return self.free_energy - self.log_structure_prior

    @property
    def key(self):
        return canonical_key(self.spec)


@dataclass
class ParticlePosterior:
    particles: list
    weights: np.ndarray
    data_seen: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    def best(self):
        """Weight-maximal particle (lowest index on ties)."""
        return self.particles[int(np.argmax(self.weights))]

    def weight_of(self, spec):
        key = canonical_key(spec)
        return float(sum(w for p, w in zip(self.particles, self.weights) if p.key == key))


@dataclass
class ScoreConfig:
    concentration: float = 1.0
    kappa: float = 1.0
    restarts: int = 3
    max_outer: int = 64
    tol: float = 1e-5
    seed: int = 0
    inference: InferenceConfig = field(default_factory=lambda: InferenceConfig(tol=1e-6, max_iters=64))


@dataclass
class SearchConfig:
    n_particles: int = 8
    bounds: Bounds = field(default_factory=Bounds)
    min_gain: float = 1e-6
    restart_prob: float = 0.05
    min_data_for_bmr: int = 200
    score: ScoreConfig = field(default_factory=ScoreConfig)


def _spec_seed(seed, spec):
    digest = hashlib.sha256(repr((int(seed), canonical_key(spec))).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _initial_beliefs(spec, data, rng, seeded, sharpness=0.7):
    """Symmetry-breaking start for one restart.

    Seeded starts copy the observations of one randomly chosen attached
    modality into each factor through a random value-to-state map; other
    starts draw sparse random beliefs.
    """
    T = data.T
    marg = []
    for f, c in enumerate(spec.factor_cards):
        mods = [m for m, e in enumerate(spec.likelihood_edges) if f in e]
        if not seeded or not mods:
            marg.append(rng.dirichlet(np.full(c, 0.3), size=T))
            continue
        m = mods[int(rng.integers(len(mods)))]
        k = spec.modality_cards[m]
        mapping = rng.permutation(max(c, k))[:k] % c
        q = np.full((T, c), (1.0 - sharpness) / c)
        q[np.arange(T), mapping[data.observations[:, m]]] += sharpness
        marg.append(q)
    return BeliefState(marg, None)


def _fit_once(prior, data, cfg, rng, seeded):
    beliefs = _initial_beliefs(prior.spec, data, rng, seeded)
    h = update_parameters(prior, beliefs, data)
    f_prev = np.inf
    for _ in range(cfg.max_outer):
        beliefs = infer_states(h, data, cfg.inference, init=beliefs)
        h = update_parameters(prior, beliefs, data)
        f = variational_free_energy(beliefs, h, data, prior=prior).total
        if abs(f_prev - f) < cfg.tol:
            break
        f_prev = f
    return h, f, beliefs


def score_structure(spec, data, cfg=None, prior=None):
    """Fit Dirichlet posteriors for ``spec`` on ``data`` by variational Bayes-EM.

    Hidden-state labels start symmetric under a flat prior, so each restart
    seeds the first parameter update from asymmetric state beliefs (two of
    every three from the observations, the rest random); the restart with
    the lowest free energy wins. Seeds derive from ``cfg.seed`` and the
    canonical structure so scores do not depend on call order. Observations
    that are impossible under the structure give ``free_energy = inf``.
    """
    cfg = cfg or ScoreConfig()
    check_spec(spec)
    check_batch(spec, data)
    if prior is None:
        prior = instantiate_flat(spec, cfg.concentration)
    rng = np.random.default_rng(_spec_seed(cfg.seed, spec))
    best = None
    for r in range(max(cfg.restarts, 1)):
        try:
            h, f, beliefs = _fit_once(prior, data, cfg, rng, seeded=r % 3 != 2)
        except ImpossibleObservationError:
            continue
        if best is None or f < best[1]:
            best = (h, f, beliefs)
    lp = log_structure_prior(spec, cfg.kappa)
    if best is None:
        return StructureParticle(spec, prior, float("inf"), lp, prior)
    return StructureParticle(spec, best[0], float(best[1]), lp, prior, best[2])


def _weights(particles):
    if not particles:
        raise EmptyPosteriorError("a particle posterior needs at least one particle")
    logits = np.array([-p.free_energy + p.log_structure_prior for p in particles], dtype=float)
    finite = np.isfinite(logits)
    if not finite.any():
        return np.full(len(particles), 1.0 / len(particles))
    w = np.zeros(len(particles))
    z = logits[finite] - logits[finite].max()
    e = np.exp(z)
    w[finite] = e / e.sum()
    return w


def reweight(p):
    """Recompute weights as ``softmax(-free_energy + log_structure_prior)``.

    Particles at ``+inf`` free energy get weight zero; if every particle is
    infinite the weights are uniform.
    """
    return ParticlePosterior(list(p.particles), _weights(p.particles), p.data_seen)


def _data_fingerprint(data):
    return hashlib.sha256(data.observations.tobytes() + b"|" + data.actions.tobytes()).hexdigest()


class ScoreCache:
    """Memo of structure scores keyed by canonical class and data content."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._store = {}

    def score(self, spec, data):
        key = (canonical_key(spec), _data_fingerprint(data))
        if key not in self._store:
            canon = canonical_form(spec)
            self._store[key] = score_structure(canon.with_label(describe(canon)), data, self.cfg)
        return self._store[key]

    def clear(self):
        self._store.clear()


def init_posterior(specs, data, cfg=None, cache=None):
    """Score distinct (canonical) specs on ``data`` and weight them."""
    cfg = cfg or SearchConfig()
    cache = cache or ScoreCache(cfg.score)
    particles, seen = [], set()
    for spec in specs:
        key = canonical_key(spec)
        if key in seen:
            continue
        seen.add(key)
        particles.append(cache.score(spec, data))
    return reweight(ParticlePosterior(particles, np.zeros(len(particles)), data.T))


def insert_particle(p, particle):
    """Add ``particle`` unless its canonical class is already present."""
    if any(q.key == particle.key for q in p.particles):
        return p
    return reweight(ParticlePosterior(list(p.particles) + [particle], np.zeros(0), p.data_seen))


def search_step(p, data, rng, cfg=None, cache=None):
    """One greedy local-move sweep over every particle.

    Each particle proposes its best neighbour when that lowers
    ``free_energy - log_structure_prior`` by more than ``cfg.min_gain``.
    Proposals are granted in ascending objective order (a particle that
    stays put wins ties); a particle whose target is taken falls back to its
    best free option among its current spec and its neighbours, so the
    particles stay pairwise distinct. With probability ``cfg.restart_prob``
    the worst particle is replaced by a random structure.
    """
    cfg = cfg or SearchConfig()
    cache = cache or ScoreCache(cfg.score)
    if not p.particles:
        raise EmptyPosteriorError("a particle posterior needs at least one particle")
    current = [cache.score(q.spec, data) if p.data_seen != data.T else q for q in p.particles]
    options = []
    for q in current:
        scored = [cache.score(s, data) for s in enumerate_neighbors(q.spec, cfg.bounds)]
        ranked = sorted(scored, key=lambda s: s.objective)
        best = ranked[0] if ranked else None
        propose = best is not None and best.objective < q.objective - cfg.min_gain
        options.append((q, propose, [best] if propose else [], sorted([q] + ranked, key=lambda s: s.objective)))
    order = sorted(
        range(len(current)),
        key=lambda i: (
            options[i][2][0].objective if options[i][1] else options[i][0].objective,
            1 if options[i][1] else 0,
            i,
        ),
    )
    occupied, chosen = set(), [None] * len(current)
    for i in order:
        q, _, first, fallback = options[i]
        for cand in first + fallback:
            if cand.key not in occupied:
                chosen[i] = cand
                occupied.add(cand.key)
                break
        else:
            chosen[i] = None
    survivors = [c for c in chosen if c is not None]
    u = rng.random()
    if survivors and u < cfg.restart_prob:
        worst = max(range(len(survivors)), key=lambda i: (survivors[i].objective, i))
        occupied.discard(survivors[worst].key)
        ref = survivors[worst].spec
        for _ in range(32):
            spec = random_spec(rng, cfg.bounds, ref.modality_cards, ref.action_card)
            if canonical_key(spec) not in occupied:
                survivors[worst] = cache.score(spec, data)
                break
        occupied.add(survivors[worst].key)
    return reweight(ParticlePosterior(survivors, np.zeros(0), data.T))


def write_weights_csv(p, path):
    """Weights table: particle label, free energy, log prior, weight."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "free_energy", "log_prior", "weight"])
        for q, w in zip(p.particles, p.weights):
            writer.writerow([q.spec.label or describe(q.spec), repr(float(q.free_energy)),
                             repr(float(q.log_structure_prior)), repr(float(w))])


# ---------------------------------------------------------------------------
# Bayesian model reduction


def bmr_log_evidence_ratio(posterior, prior, reduced_prior, axis=0):
    """Closed-form ``ln P_reduced(d) - ln P(d)`` for Dirichlet-categorical data.

    All arguments are count arrays of one shape; columns run along ``axis``
    and the result sums over columns. Data counts are ``posterior - prior``.
    """
    q = np.asarray(posterior, dtype=float)
    p = np.asarray(prior, dtype=float)
    r = np.asarray(reduced_prior, dtype=float)
    if not (q.shape == p.shape == r.shape):
        raise DomainError(f"shape mismatch {q.shape}, {p.shape}, {r.shape}")
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise DomainError("reduced prior counts must be positive")
    n = q - p
    if np.any(n < -1e-9 * np.maximum(1.0, np.abs(q))):
        raise InconsistencyError("posterior counts fall below the prior")
    n = np.maximum(n, 0.0)
    value = (
        log_multivariate_beta(r + n, axis=axis)
        - log_multivariate_beta(r, axis=axis)
        - log_multivariate_beta(q, axis=axis)
        + log_multivariate_beta(p, axis=axis)
    )
    return float(np.sum(value))


def bmr_monte_carlo(posterior, prior, reduced_prior, n_samples, rng, axis=0, chunk=100_000,
                    return_log_weights=False):
    """Monte-Carlo estimate of :func:`bmr_log_evidence_ratio` and its standard error.

    Draws parameters from the fitted posterior and averages the prior ratio
    ``p_reduced(theta) / p(theta)``; the log of that mean estimates the
    evidence ratio. The standard error of the log mean uses the delta
    method, ``sd(w) / (sqrt(n) * mean(w))``. Returns ``(estimate, se)``, plus
    the per-sample log weights when ``return_log_weights`` is set.
    """
    q = np.moveaxis(np.asarray(posterior, dtype=float), axis, -1)
    p = np.moveaxis(np.asarray(prior, dtype=float), axis, -1)
    r = np.moveaxis(np.asarray(reduced_prior, dtype=float), axis, -1)
    if not (q.shape == p.shape == r.shape):
        raise DomainError(f"shape mismatch {q.shape}, {p.shape}, {r.shape}")
    if np.any(r <= 0) or np.any(p <= 0) or np.any(q <= 0):
        raise DomainError("Dirichlet counts must be positive")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    K = q.shape[-1]
    q, p, r = q.reshape(-1, K), p.reshape(-1, K), r.reshape(-1, K)
    const = float(np.sum(log_multivariate_beta(p, axis=-1) - log_multivariate_beta(r, axis=-1)))
    logw = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        acc = np.full(m, const)
        for qc, pc, rc in zip(q, p, r):
            # Gamma(a) = Gamma(a + 1) * U**(1/a), taken in logs so tiny concentrations do not underflow
            lg = np.log(rng.gamma(qc + 1.0, size=(m, K))) + np.log(rng.random((m, K))) / qc
            lg_max = lg.max(axis=1, keepdims=True)
            log_theta = lg - lg_max - np.log(np.exp(lg - lg_max).sum(axis=1, keepdims=True))
            d = rc - pc
            live = d != 0
            acc += log_theta[:, live] @ d[live]
        logw[done:done + m] = acc
        done += m
    top = logw.max()
    w = np.exp(logw - top)
    mean = w.mean()
    se = w.std(ddof=1) / (np.sqrt(n_samples) * mean)
    if return_log_weights:
        return float(top + np.log(mean)), float(se), logw
    return float(top + np.log(mean)), float(se)


def data_counts(particle):
    return [q - p for q, p in zip(particle.hyper.tables(), particle.prior.tables())]


def bmr_reduce(particle, candidates, counts=None):
    """Pick the reduced prior with the largest evidence gain.

    The particle's own prior is the identity candidate (index 0, gain 0).
    Returns ``(posterior, gain)`` with ``posterior = reduced_prior + counts``;
    gains within 1e-12 of each other go to the lowest index.
    """
    counts = data_counts(particle) if counts is None else [np.asarray(c, dtype=float) for c in counts]
    base = particle.prior.tables()
    family = [particle.prior] + list(candidates)
    gains = []
    for cand in family:
        if cand.spec != particle.spec:
            raise DomainError("candidate prior does not match the particle structure")
        gains.append(sum(
            bmr_log_evidence_ratio(p + n, p, r) for p, n, r in zip(base, counts, cand.tables())
        ))
    gains = np.array(gains)
    top = gains.max()
    idx = int(np.flatnonzero(gains >= top - 1e-12)[0])
    chosen = family[idx]
    posterior = chosen.replace_tables([r + n for r, n in zip(chosen.tables(), counts)])
    return posterior, float(gains[idx]) if idx else 0.0


def shrinkage_candidates(prior, counts, eps=1e-3, threshold=0.5):
    """Reduced priors that shrink unused pathways toward ``eps``.

    For every column holding data, entries whose data count is below
    ``threshold`` are set to ``eps`` (one candidate per such column), plus
    one candidate applying every column shrinkage at once.
    """
    base = [t.copy() for t in prior.tables()]
    singles, combined = [], [t.copy() for t in base]
    for k, (t, n) in enumerate(zip(base, counts)):
        cols_t = t.reshape(t.shape[0], -1)
        cols_n = np.asarray(n).reshape(t.shape[0], -1)
        for j in range(cols_t.shape[1]):
            col_n = cols_n[:, j]
            low = col_n < threshold
            if col_n.sum() < threshold or not low.any() or low.all():
                continue
            tables = [x.copy() for x in base]
            flat = tables[k].reshape(t.shape[0], -1)
            flat[low, j] = eps
            singles.append(prior.replace_tables(tables))
            combined[k].reshape(t.shape[0], -1)[low, j] = eps
    out = singles
    if len(singles) > 1:
        out = singles + [prior.replace_tables(combined)]
    return out


def reduce_particle(particle, eps=1e-3, threshold=0.5):
    """Apply the best shrinkage candidate; free energy drops by the gain."""
    if particle.prior is None or not np.isfinite(particle.free_energy):
        return particle, 0.0
    counts = data_counts(particle)
    posterior, gain = bmr_reduce(particle, shrinkage_candidates(particle.prior, counts, eps, threshold), counts)
    if gain <= 0:
        return particle, 0.0
    reduced_prior = posterior.replace_tables([q - n for q, n in zip(posterior.tables(), counts)])
    return (
        StructureParticle(particle.spec, posterior, particle.free_energy - gain,
                          particle.log_structure_prior, reduced_prior, particle.beliefs),
        gain,
    )
