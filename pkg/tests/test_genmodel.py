import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inferno.errors import ShapeError, ValidationError
from inferno.genmodel import (
    Bounds,
    GenerativeModel,
    HyperParams,
    StructureSpec,
    TransitionEdges,
    canonical_form,
    canonical_key,
    check_spec,
    complexity,
    enumerate_neighbors,
    expected_model,
    instantiate_flat,
    log_structure_prior,
    random_spec,
    single_moves,
    validate,
)
from inferno.prob import columns_valid


def minimal():
    return StructureSpec((2,), (2,), ((0,),))


def two_factor():
    return StructureSpec((2, 3), (2, 2), ((0,), (1,)), (TransitionEdges(True), TransitionEdges()), 2)


def _permute(spec, order):
    """Spec whose new factor i is old factor order[i], edges left unsorted."""
    new = {old: i for i, old in enumerate(order)}
    return StructureSpec(
        tuple(spec.factor_cards[o] for o in order),
        spec.modality_cards,
        tuple(tuple(new[f] for f in e) for e in spec.likelihood_edges),
        tuple(TransitionEdges(spec.transition_edges[o].action_dependent,
                              tuple(new[p] for p in spec.transition_edges[o].parents)) for o in order),
        spec.action_card,
    )


specs = st.builds(
    lambda seed, nf, na: random_spec(np.random.default_rng(seed), Bounds(nf, 4), (2, 3, 2), na),
    st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3),
)


class TestValidate:
    def test_examples(self):
        assert validate(minimal()) == []
        problems = validate(StructureSpec((2,), (2,), ((7,),)))
        assert any(p.startswith("dangling-edge") for p in problems)
        problems = validate(StructureSpec((2,), (), ()))
        assert any(p.startswith("missing-modality") for p in problems)

    def test_reports_every_violation(self):
        spec = StructureSpec((2, 2), (2, 2), ((), (0, 0)), (TransitionEdges(False, (0,)), TransitionEdges(False, (5, 5))))
        kinds = {p.split(":")[0] for p in validate(spec)}
        assert kinds >= {"orphan-modality", "duplicate-edge", "self-parent", "duplicate-parent", "dangling-edge"}

    def test_check_spec_raises(self):
        with pytest.raises(ValidationError):
            check_spec(StructureSpec((2,), (2,), ((3,),)))


class TestHyperParams:
    def test_instantiate_flat(self):
        h = instantiate_flat(minimal(), 1.0)
        assert all(np.all(t == 1.0) for t in h.tables())
        h = instantiate_flat(StructureSpec((3,), (3,), ((0,),)), 0.5)
        assert all(np.all(t == 0.5) for t in h.tables())
        assert h.a[0].shape == (3, 3) and h.b[0].shape == (3, 3) and h.d[0].shape == (3,)

    def test_instantiate_flat_invalid(self):
        with pytest.raises(ValidationError):
            instantiate_flat(StructureSpec((2,), (2,), ((4,),)))
        with pytest.raises(ValueError):
            instantiate_flat(minimal(), 0.0)

    def test_expected_model_examples(self):
        spec = minimal()
        h = HyperParams(spec, [np.array([[9.0, 1.0], [1.0, 1.0]])], [np.ones((2, 2))], [np.ones(2)],
                        C=[np.array([0.0, 2.0])])
        m = expected_model(h)
        np.testing.assert_allclose(m.A[0][:, 0], [0.9, 0.1], rtol=0, atol=1e-15)
        np.testing.assert_allclose(m.A[0][:, 1], [0.5, 0.5], rtol=0, atol=1e-15)
        np.testing.assert_array_equal(m.C[0], [0.0, 2.0])
        flat = expected_model(instantiate_flat(two_factor()))
        for t in flat.A + flat.B:
            np.testing.assert_allclose(t, np.full_like(t, 1.0 / t.shape[0]), rtol=0, atol=1e-15)

    @given(specs, st.integers(0, 2**32 - 1))
    def test_expected_model_columns_valid(self, spec, seed):
        rng = np.random.default_rng(seed)
        h = instantiate_flat(spec)
        h = h.replace_tables([rng.uniform(1e-3, 50.0, t.shape) for t in h.tables()])
        m = expected_model(h)
        assert all(columns_valid(t, 1e-12) for t in m.A + m.B + m.D)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            HyperParams(minimal(), [np.ones((2, 3))], [np.ones((2, 2))], [np.ones(2)])
        with pytest.raises(ValidationError):
            HyperParams(minimal(), [np.zeros((2, 2))], [np.ones((2, 2))], [np.ones(2)])

    def test_generative_model_checks(self):
        with pytest.raises(ShapeError):
            GenerativeModel(minimal(), [np.eye(3)], [np.eye(2)])
        with pytest.raises(ValidationError):
            GenerativeModel(minimal(), [np.eye(2)], [np.eye(2)], [np.array([0.0, np.inf])])


class TestPrior:
    def test_complexity(self):
        # 2 factors + (2 likelihood + 1 action) edges + (0 + 1) extra card
        assert complexity(two_factor()) == 6
        assert log_structure_prior(two_factor(), kappa=0.5) == -3.0


class TestCanonical:
    def test_examples(self):
        spec = StructureSpec((2, 2), (2, 2), ((0,), (1,)))
        swapped = _permute(spec, [1, 0])
        assert canonical_form(swapped) == canonical_form(spec)
        canon = canonical_form(spec)
        assert canonical_form(canon) == canon

    def test_three_factor_all_permutations(self):
        spec = StructureSpec((2, 3, 2), (2, 3), ((0, 1), (2,)),
                             (TransitionEdges(True, (1,)), TransitionEdges(), TransitionEdges(False, (0,))), 2)
        forms = {canonical_form(_permute(spec, list(p))) for p in itertools.permutations(range(3))}
        assert len(forms) == 1

    def test_distinct_structures_differ(self):
        a = StructureSpec((2, 2), (2, 2), ((0,), (1,)))
        b = StructureSpec((2, 2), (2, 2), ((0,), (0,)))
        assert canonical_key(a) != canonical_key(b)

    @given(specs, st.permutations(range(3)))
    def test_idempotent_and_invariant(self, spec, perm):
        order = [p for p in perm if p < spec.num_factors]
        canon = canonical_form(spec)
        assert canonical_form(canon) == canon
        assert canonical_form(_permute(spec, order)) == canon


class TestNeighbors:
    def test_minimal_tight_bounds(self):
        neigh = enumerate_neighbors(minimal(), Bounds(max_factors=1, max_card=2))
        assert neigh == []
        neigh = enumerate_neighbors(minimal(), Bounds(max_factors=1, max_card=3))
        assert [n.factor_cards for n in neigh] == [(3,)]

    def test_no_add_factor_at_bound(self):
        spec = StructureSpec((2, 2), (2,), ((0, 1),))
        for n in enumerate_neighbors(spec, Bounds(max_factors=2)):
            assert n.num_factors <= 2

    def test_hand_enumeration(self):
        # add-factor 1; cardinality: f0 up, f1 up, f1 down = 3; add-edge o0<-f1, o1<-f0 = 2;
        # toggle action on f0, f1 = 2. No removable factor, no removable edge.
        spec = two_factor()
        names = sorted(n for n, _ in single_moves(spec, Bounds(3, 4)))
        assert names == sorted([
            "add-factor", "inc-card-0", "inc-card-1", "dec-card-1",
            "add-edge-0-1", "add-edge-1-0", "toggle-action-0", "toggle-action-1",
        ])
        neigh = enumerate_neighbors(spec, Bounds(3, 4))
        assert len(neigh) == 8
        assert len({canonical_key(n) for n in neigh}) == 8

    @given(specs)
    def test_valid_unique_and_reversible(self, spec):
        bounds = Bounds(3, 4)
        neigh = enumerate_neighbors(spec, bounds)
        keys = [canonical_key(n) for n in neigh]
        assert len(set(keys)) == len(keys)
        assert canonical_key(spec) not in keys
        for n in neigh:
            assert validate(n) == []
        for name, cand in single_moves(spec, bounds):
            if name.startswith("add-edge") and not validate(cand):
                back = {canonical_key(x) for x in enumerate_neighbors(cand, bounds)}
                assert canonical_key(spec) in back
