import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inferno.errors import DomainError, EmptyPosteriorError, InconsistencyError
from inferno.genmodel import (
    Bounds,
    HyperParams,
    StructureSpec,
    canonical_key,
    enumerate_neighbors,
    instantiate_flat,
)
from inferno.inference import DataBatch, exact_log_evidence
from inferno.sandbox.models import recovery_model
from inferno.sandbox.scenarios import recovery_data
from inferno.structure import (
    ParticlePosterior,
    ScoreCache,
    ScoreConfig,
    SearchConfig,
    StructureParticle,
    bmr_log_evidence_ratio,
    bmr_monte_carlo,
    bmr_reduce,
    data_counts,
    init_posterior,
    insert_particle,
    reduce_particle,
    reweight,
    score_structure,
    search_step,
    shrinkage_candidates,
    write_weights_csv,
)

TRUE = recovery_model().spec
SHARED = StructureSpec((2, 2), (2, 2), ((0,), (0,)))
NEAR = StructureSpec((2, 2), (2, 2), ((0,), (0, 1)))
NEAR2 = StructureSpec((2, 2), (2, 2), ((0, 1), (1,)))
ONE = StructureSpec((2,), (2, 2), ((0,), (0,)))


def fake(spec, f, lp=0.0):
    h = instantiate_flat(spec)
    return StructureParticle(spec, h, f, lp, h)


@pytest.fixture(scope="module")
def data():
    return recovery_data(120, seed=3)


class TestScore:
    def test_true_spec_finite(self, data):
        q = score_structure(TRUE, data)
        assert np.isfinite(q.free_energy)
        assert q.log_structure_prior == -4.0  # two factors, two edges, binary cards
        assert q.prior is not None and q.beliefs is not None

    def test_missing_parent_scores_worse(self):
        # identity likelihoods: each outcome copies its own hidden factor exactly
        spec = StructureSpec((2, 2), (2, 2), ((0,), (1,)))
        rng = np.random.default_rng(0)
        s = np.zeros((200, 2), dtype=int)
        for t in range(1, 200):
            s[t] = np.where(rng.random(2) < 0.9, s[t - 1], 1 - s[t - 1])
        d = DataBatch(s)
        lacking = StructureSpec((2, 2), (2, 2), ((0,), (0,)))
        assert score_structure(lacking, d).free_energy > score_structure(spec, d).free_energy

    def test_deterministic_and_order_free(self, data):
        cfg = ScoreConfig(seed=4)
        a = score_structure(SHARED, data, cfg)
        score_structure(TRUE, data, cfg)
        b = score_structure(SHARED, data, cfg)
        assert a.free_energy == b.free_energy


class TestReweight:
    def test_examples(self):
        p = reweight(ParticlePosterior([fake(TRUE, 5.0), fake(SHARED, 5.0)], [0, 0]))
        np.testing.assert_allclose(p.weights, [0.5, 0.5], rtol=0, atol=1e-15)
        p = reweight(ParticlePosterior([fake(TRUE, 5.0), fake(SHARED, 5.0 + math.log(2))], [0, 0]))
        np.testing.assert_allclose(p.weights, [2 / 3, 1 / 3], rtol=0, atol=1e-12)
        p = reweight(ParticlePosterior([fake(TRUE, 5.0), fake(SHARED, math.inf)], [0, 0]))
        np.testing.assert_array_equal(p.weights, [1.0, 0.0])
        p = reweight(ParticlePosterior([fake(TRUE, math.inf), fake(SHARED, math.inf)], [0, 0]))
        np.testing.assert_array_equal(p.weights, [0.5, 0.5])

    def test_prior_enters(self):
        p = reweight(ParticlePosterior([fake(TRUE, 5.0, -1.0), fake(SHARED, 5.0, 0.0)], [0, 0]))
        np.testing.assert_allclose(p.weights, [1 / (1 + math.e), math.e / (1 + math.e)], rtol=0, atol=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyPosteriorError):
            reweight(ParticlePosterior([], []))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.randoms())
    def test_softmax_and_equivariance(self, scores, rnd):
        parts = [fake(TRUE, f, lp=-0.5 * i) for i, f in enumerate(scores)]
        w = reweight(ParticlePosterior(parts, [])).weights
        logits = np.array([-q.free_energy + q.log_structure_prior for q in parts])
        expect = np.exp(logits - logits.max())
        np.testing.assert_allclose(w, expect / expect.sum(), rtol=0, atol=1e-12)
        order = list(range(len(parts)))
        rnd.shuffle(order)
        w2 = reweight(ParticlePosterior([parts[i] for i in order], [])).weights
        np.testing.assert_allclose(w2, w[order], rtol=0, atol=1e-15)


class TestSearch:
    def test_insert_rejects_duplicate(self, data):
        cache = ScoreCache(ScoreConfig())
        p = init_posterior([TRUE], data, cache=cache)
        swapped = StructureSpec((2, 2), (2, 2), ((1,), (0,)))
        assert len(insert_particle(p, cache.score(swapped, data)).particles) == 1
        assert len(init_posterior([TRUE, swapped], data, cache=cache).particles) == 1

    def test_moves_to_true_neighbour(self, data):
        cfg = SearchConfig(n_particles=1, restart_prob=0.0, bounds=Bounds(2, 2))
        cache = ScoreCache(cfg.score)
        assert canonical_key(TRUE) in {canonical_key(n) for n in enumerate_neighbors(NEAR, cfg.bounds)}
        # paired-score oracle: the true structure beats the start and every other neighbour
        scores = {canonical_key(n): cache.score(n, data).objective for n in enumerate_neighbors(NEAR, cfg.bounds)}
        assert min(scores, key=scores.get) == canonical_key(TRUE)
        assert scores[canonical_key(TRUE)] < cache.score(NEAR, data).objective
        p = init_posterior([NEAR], data, cfg, cache)
        p = search_step(p, data, np.random.default_rng(0), cfg, cache)
        assert p.particles[0].key == canonical_key(TRUE)

    def test_fixed_point_and_distinct(self, data):
        cfg = SearchConfig(restart_prob=0.0, bounds=Bounds(2, 2))
        cache = ScoreCache(cfg.score)
        # both particles want to move to the true structure; only one may
        p = init_posterior([NEAR, NEAR2], data, cfg, cache)
        objectives = [q.objective for q in p.particles]
        p = search_step(p, data, np.random.default_rng(0), cfg, cache)
        keys = [q.key for q in p.particles]
        assert len(set(keys)) == len(keys) == 2
        assert canonical_key(TRUE) in keys
        assert sorted(q.objective for q in p.particles)[0] <= min(objectives)
        for _ in range(3):
            before = [q.key for q in p.particles]
            p = search_step(p, data, np.random.default_rng(1), cfg, cache)
            if [q.key for q in p.particles] == before:
                break
        again = search_step(p, data, np.random.default_rng(2), cfg, cache)
        assert [q.key for q in again.particles] == [q.key for q in p.particles]
        np.testing.assert_array_equal(again.weights, p.weights)

    def test_objectives_never_increase_without_restart(self, data):
        cfg = SearchConfig(restart_prob=0.0, bounds=Bounds(2, 3))
        cache = ScoreCache(cfg.score)
        start = [StructureSpec((3,), (2, 2), ((0,), (0,))), SHARED]
        p = init_posterior(start, data, cfg, cache)
        before = sorted(q.objective for q in p.particles)
        after = sorted(q.objective for q in search_step(p, data, np.random.default_rng(0), cfg, cache).particles)
        assert all(a <= b + 1e-12 for a, b in zip(after, before))

    def test_restart_replaces_worst(self, data):
        cfg = SearchConfig(restart_prob=1.0, bounds=Bounds(2, 2))
        cache = ScoreCache(cfg.score)
        p = init_posterior([TRUE, SHARED], data, cfg, cache)
        q = search_step(p, data, np.random.default_rng(0), cfg, cache)
        keys = [x.key for x in q.particles]
        assert len(set(keys)) == len(keys)

    def test_weights_csv(self, data, tmp_path):
        p = init_posterior([TRUE, SHARED], data)
        write_weights_csv(p, tmp_path / "w.csv")
        rows = list(csv.reader(open(tmp_path / "w.csv")))
        assert rows[0] == ["label", "free_energy", "log_prior", "weight"]
        assert len(rows) == 3
        assert sum(float(r[3]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-12)


class TestBMR:
    def test_identity(self):
        q, p = np.array([3.0, 1.0]), np.array([1.0, 1.0])
        assert bmr_log_evidence_ratio(q, p, p) == 0.0

    def test_hand_case(self):
        # P(0,0 | Dir(2,1)) / P(0,0 | Dir(1,1)) = (2/3 * 3/4) / (1/2 * 2/3) = 3/2
        value = bmr_log_evidence_ratio([3.0, 1.0], [1.0, 1.0], [2.0, 1.0])
        assert value == pytest.approx(math.log(1.5), abs=1e-15)

    def test_hand_case_enumeration(self):
        spec = StructureSpec((1,), (2,), ((0,),))
        base = HyperParams(spec, [np.array([[1.0], [1.0]])], [np.ones((1, 1))], [np.ones(1)])
        reduced = base.replace_tables([np.array([[2.0], [1.0]]), np.ones((1, 1)), np.ones(1)])
        d = DataBatch([[0], [0]])
        diff = exact_log_evidence(reduced, d) - exact_log_evidence(base, d)
        assert bmr_log_evidence_ratio([3.0, 1.0], [1.0, 1.0], [2.0, 1.0]) == pytest.approx(diff, abs=1e-9)

    def test_hand_case_monte_carlo(self):
        est, se = bmr_monte_carlo([3.0, 1.0], [1.0, 1.0], [2.0, 1.0], 10**6, np.random.default_rng(0))
        assert abs(est - math.log(1.5)) <= 3 * se
        assert se < 1e-3

    def test_errors(self):
        with pytest.raises(InconsistencyError):
            bmr_log_evidence_ratio([1.0, 1.0], [2.0, 1.0], [1.0, 1.0])
        with pytest.raises(DomainError):
            bmr_log_evidence_ratio([3.0, 1.0], [1.0, 1.0], [0.0, 1.0])
        with pytest.raises(DomainError):
            bmr_log_evidence_ratio([3.0, 1.0], [1.0, 1.0], [1.0, 1.0, 1.0])

    @given(st.integers(0, 2**32 - 1))
    def test_columns_sum(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.2, 3, (3, 4))
        q = p + rng.integers(0, 5, (3, 4))
        r = rng.uniform(0.2, 3, (3, 4))
        total = sum(bmr_log_evidence_ratio(q[:, j], p[:, j], r[:, j]) for j in range(4))
        assert bmr_log_evidence_ratio(q, p, r) == pytest.approx(total, abs=1e-12)
        np.testing.assert_allclose(bmr_log_evidence_ratio(q.T, p.T, r.T, axis=1),
                                   bmr_log_evidence_ratio(q, p, r), rtol=0, atol=1e-12)


def _observed_particle(counts, prior=1.0):
    spec = StructureSpec((1,), (len(counts),), ((0,),))
    p = instantiate_flat(spec, prior)
    q = p.replace_tables([p.a[0] + np.asarray(counts, float)[:, None], p.b[0], p.d[0]])
    return StructureParticle(spec, q, 10.0, 0.0, p)


class TestReduce:
    def test_identity_when_all_worse(self):
        part = _observed_particle([5.0, 5.0])
        worse = part.prior.replace_tables([np.array([[1e-3], [1.0]]), part.prior.b[0], part.prior.d[0]])
        post, gain = bmr_reduce(part, [worse])
        assert gain == 0.0
        np.testing.assert_array_equal(post.a[0], part.hyper.a[0])

    def test_structural_zero_gains(self):
        # outcome 2 never occurs; shrinking its pseudo-count raises the evidence
        part = _observed_particle([6.0, 4.0, 0.0])
        cands = shrinkage_candidates(part.prior, data_counts(part))
        assert len(cands) == 1 and cands[0].a[0][2, 0] == 1e-3
        post, gain = bmr_reduce(part, cands)
        assert gain > 0
        d = DataBatch([[0]] * 6 + [[1]] * 4)
        oracle = exact_log_evidence(cands[0], d) - exact_log_evidence(part.prior, d)
        assert gain == pytest.approx(oracle, abs=1e-9)
        np.testing.assert_allclose(post.a[0][:, 0], [7.0, 5.0, 1e-3], rtol=0, atol=1e-15)

    def test_tie_lowest_index(self):
        part = _observed_particle([5.0, 0.0, 0.0])
        eps = 1e-3
        first = part.prior.replace_tables([np.array([[1.0], [eps], [1.0]]), part.prior.b[0], part.prior.d[0]])
        second = part.prior.replace_tables([np.array([[1.0], [1.0], [eps]]), part.prior.b[0], part.prior.d[0]])
        post, gain = bmr_reduce(part, [first, second])
        assert gain > 0
        assert post.a[0][1, 0] == eps and post.a[0][2, 0] == 1.0
        post, gain = bmr_reduce(part, [second, first])
        assert post.a[0][2, 0] == eps and post.a[0][1, 0] == 1.0
        post, gain = bmr_reduce(part, [part.prior])
        assert gain == 0.0
        np.testing.assert_array_equal(post.a[0], part.hyper.a[0])

    @given(st.integers(0, 2**32 - 1))
    def test_data_counts_preserved(self, seed):
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, 4, size=4).astype(float)
        part = _observed_particle(counts, prior=float(rng.uniform(0.3, 2)))
        cands = shrinkage_candidates(part.prior, data_counts(part))
        post, gain = bmr_reduce(part, cands)
        assert gain >= 0
        chosen = [c for c in [part.prior] + cands
                  if np.allclose(post.a[0] - c.a[0], counts[:, None], rtol=0, atol=1e-12)]
        assert chosen

    def test_reduce_particle(self):
        part = _observed_particle([6.0, 4.0, 0.0])
        new, gain = reduce_particle(part)
        assert gain > 0
        assert new.free_energy == pytest.approx(part.free_energy - gain, abs=1e-12)
        for a, b in zip(data_counts(new), data_counts(part)):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        same, zero = reduce_particle(_observed_particle([3.0, 3.0]))
        assert zero == 0.0 and same.free_energy == 10.0

    def test_shrinkage_combined(self):
        spec = StructureSpec((2,), (3,), ((0,),))
        prior = instantiate_flat(spec)
        counts = [np.array([[4.0, 0.0], [0.0, 3.0], [0.0, 0.0]]), np.zeros((2, 2)), np.zeros(2)]
        cands = shrinkage_candidates(prior, counts)
        assert len(cands) == 3
        np.testing.assert_array_equal(cands[-1].a[0], [[1.0, 1e-3], [1e-3, 1.0], [1e-3, 1e-3]])
