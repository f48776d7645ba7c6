"""Structures, generative models and Dirichlet hyperparameters.

A structure is a factorial, first-order POMDP layout: hidden factors with
cardinalities, observation modalities wired to subsets of factors, and per
factor transition wiring (own previous state, optional parent factors,
optional action dependence). Table axis conventions:

* ``A[m]``: ``(modality_cards[m], *cards of likelihood_edges[m])``
* ``B[f]``: ``(card_f, card_f, *cards of parents, [action_card])``; axis 0 is
  the next state, axis 1 the previous state of the same factor
* ``D[f]``: ``(card_f,)``
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from inferno.errors import ShapeError, ValidationError
from inferno.prob import columns_valid, normalize_columns


@dataclass(frozen=True)
class TransitionEdges:
    action_dependent: bool = False
    parents: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "action_dependent", bool(self.action_dependent))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))


@dataclass(frozen=True)
class StructureSpec:
    factor_cards: tuple[int, ...]
    modality_cards: tuple[int, ...]
    likelihood_edges: tuple[tuple[int, ...], ...]
    transition_edges: tuple[TransitionEdges, ...] = None
    action_card: int = 1
    label: str = field(default="", compare=False)

    def __post_init__(self):
        fc = tuple(int(c) for c in self.factor_cards)
        object.__setattr__(self, "factor_cards", fc)
        object.__setattr__(self, "modality_cards", tuple(int(c) for c in self.modality_cards))
        object.__setattr__(
            self, "likelihood_edges", tuple(tuple(int(f) for f in e) for e in self.likelihood_edges)
        )
        trans = self.transition_edges
        if trans is None:
            trans = tuple(TransitionEdges() for _ in fc)
        trans = tuple(
            t if isinstance(t, TransitionEdges) else TransitionEdges(*t) for t in trans
        )
        object.__setattr__(self, "transition_edges", trans)
        object.__setattr__(self, "action_card", int(self.action_card))

    @property
    def num_factors(self):
        return len(self.factor_cards)

    @property
    def num_modalities(self):
        return len(self.modality_cards)

    def a_shape(self, m):
        return (self.modality_cards[m],) + tuple(self.factor_cards[f] for f in self.likelihood_edges[m])

    def b_shape(self, f):
        t = self.transition_edges[f]
        shape = (self.factor_cards[f], self.factor_cards[f])
        shape += tuple(self.factor_cards[p] for p in t.parents)
        if t.action_dependent:
            shape += (self.action_card,)
        return shape

    def with_label(self, label):
        return StructureSpec(
            self.factor_cards,
            self.modality_cards,
            self.likelihood_edges,
            self.transition_edges,
            self.action_card,
            label,
        )


def validate(spec):
    """Return a list of every violated structural invariant (empty if valid)."""
    problems = []
    nf, nm = len(spec.factor_cards), len(spec.modality_cards)
    if nf == 0:
        problems.append("missing-factor: at least one hidden factor is required")
    if nm == 0:
        problems.append("missing-modality: at least one observation modality is required")
    for f, c in enumerate(spec.factor_cards):
        if c < 1:
            problems.append(f"bad-cardinality: factor {f} has cardinality {c}")
    for m, c in enumerate(spec.modality_cards):
        if c < 1:
            problems.append(f"bad-cardinality: modality {m} has cardinality {c}")
    if spec.action_card < 1:
        problems.append(f"bad-cardinality: action_card is {spec.action_card}")
    if len(spec.likelihood_edges) != nm:
        problems.append(
            f"edge-count: {len(spec.likelihood_edges)} likelihood edge lists for {nm} modalities"
        )
    for m, edges in enumerate(spec.likelihood_edges):
        if len(edges) == 0:
            problems.append(f"orphan-modality: modality {m} has no parent factor")
        for f in edges:
            if not 0 <= f < nf:
                problems.append(f"dangling-edge: modality {m} references factor {f}")
        if len(set(edges)) != len(edges):
            problems.append(f"duplicate-edge: modality {m} lists a factor twice")
    if len(spec.transition_edges) != nf:
        problems.append(
            f"edge-count: {len(spec.transition_edges)} transition entries for {nf} factors"
        )
    for f, t in enumerate(spec.transition_edges):
        if len(set(t.parents)) != len(t.parents):
            problems.append(f"duplicate-parent: factor {f} lists a transition parent twice")
        for p in t.parents:
            if p == f:
                problems.append(f"self-parent: factor {f} lists itself as a transition parent")
            elif not 0 <= p < nf:
                problems.append(f"dangling-edge: factor {f} transition references factor {p}")
    return problems


def check_spec(spec):
    problems = validate(spec)
    if problems:
        raise ValidationError(problems)
    return spec


def num_edges(spec):
    return (
        sum(len(e) for e in spec.likelihood_edges)
        + sum(len(t.parents) for t in spec.transition_edges)
        + sum(int(t.action_dependent) for t in spec.transition_edges)
    )


def complexity(spec):
    """Description-length surrogate: factors + edges + sum(card - 2)."""
    return spec.num_factors + num_edges(spec) + sum(c - 2 for c in spec.factor_cards)


def log_structure_prior(spec, kappa=1.0):
    """Unnormalized ``ln P(m) = -kappa * complexity(m)``."""
    return -kappa * complexity(spec)


# ---------------------------------------------------------------------------
# canonical form


def _relabel(spec, order):
    """Spec whose new factor ``i`` is old factor ``order[i]``."""
    new_index = {old: new for new, old in enumerate(order)}
    edges = tuple(tuple(sorted(new_index[f] for f in e)) for e in spec.likelihood_edges)
    trans = tuple(
        TransitionEdges(
            spec.transition_edges[old].action_dependent,
            tuple(sorted(new_index[p] for p in spec.transition_edges[old].parents)),
        )
        for old in order
    )
    cards = tuple(spec.factor_cards[old] for old in order)
    return StructureSpec(cards, spec.modality_cards, edges, trans, spec.action_card, spec.label)


def _encode(spec):
    return (
        spec.factor_cards,
        spec.modality_cards,
        spec.action_card,
        spec.likelihood_edges,
        tuple((t.action_dependent, t.parents) for t in spec.transition_edges),
    )


def _attachment_signature(spec, f):
    return tuple(m for m, e in enumerate(spec.likelihood_edges) if f in e)


def canonical_form(spec):
    """Permutation-invariant representative of a structure.

    Factors are sorted by (cardinality, sorted modality-attachment signature);
    ties are broken by the lexicographically smallest encoding over the
    permutations of each tied group. Likelihood edges come out sorted.
    """
    keys = [(spec.factor_cards[f], _attachment_signature(spec, f)) for f in range(spec.num_factors)]
    groups = {}
    for f in sorted(range(spec.num_factors), key=lambda f: keys[f]):
        groups.setdefault(keys[f], []).append(f)
    ordered_groups = [groups[k] for k in sorted(groups)]
    best, best_code = None, None
    for perm in itertools.product(*(itertools.permutations(g) for g in ordered_groups)):
        order = [f for group in perm for f in group]
        candidate = _relabel(spec, order)
        code = _encode(candidate)
        if best_code is None or code < best_code:
            best, best_code = candidate, code
    return best


def canonical_key(spec):
    """Hashable identity of the canonical class (labels ignored)."""
    return _encode(canonical_form(spec))


def describe(spec):
    """Short human-readable label, e.g. ``f2a.2|o0:0,o1:1``."""
    factors = ".".join(
        f"{c}{'a' if t.action_dependent else ''}{'p' + ''.join(map(str, t.parents)) if t.parents else ''}"
        for c, t in zip(spec.factor_cards, spec.transition_edges)
    )
    edges = ",".join(f"o{m}:{''.join(map(str, e))}" for m, e in enumerate(spec.likelihood_edges))
    return f"f{factors}|{edges}"


# ---------------------------------------------------------------------------
# neighbourhood


@dataclass(frozen=True)
class Bounds:
    max_factors: int = 3
    max_card: int = 4
    min_card: int = 2


def _with(spec, factor_cards=None, likelihood_edges=None, transition_edges=None):
    return StructureSpec(
        spec.factor_cards if factor_cards is None else tuple(factor_cards),
        spec.modality_cards,
        spec.likelihood_edges if likelihood_edges is None else tuple(likelihood_edges),
        spec.transition_edges if transition_edges is None else tuple(transition_edges),
        spec.action_card,
        spec.label,
    )


def _remove_factor(spec, f):
    remap = {old: (old if old < f else old - 1) for old in range(spec.num_factors) if old != f}
    cards = [c for i, c in enumerate(spec.factor_cards) if i != f]
    edges = [tuple(remap[g] for g in e) for e in spec.likelihood_edges]
    trans = [
        TransitionEdges(t.action_dependent, tuple(remap[p] for p in t.parents))
        for i, t in enumerate(spec.transition_edges)
        if i != f
    ]
    return _with(spec, cards, edges, trans)


def _factor_unused(spec, f):
    if any(f in e for e in spec.likelihood_edges):
        return False
    return not any(f in t.parents for i, t in enumerate(spec.transition_edges) if i != f)


def single_moves(spec, bounds=Bounds()):
    """Yield ``(move_name, new_spec)`` for every one-step move (before dedup)."""
    nf = spec.num_factors
    if nf < bounds.max_factors and bounds.min_card <= 2 <= bounds.max_card:
        yield "add-factor", _with(
            spec,
            spec.factor_cards + (2,),
            transition_edges=spec.transition_edges + (TransitionEdges(),),
        )
    for f in range(nf):
        if nf > 1 and _factor_unused(spec, f):
            yield f"remove-factor-{f}", _remove_factor(spec, f)
    for f in range(nf):
        c = spec.factor_cards[f]
        if c < bounds.max_card:
            cards = list(spec.factor_cards)
            cards[f] = c + 1
            yield f"inc-card-{f}", _with(spec, cards)
        if c > bounds.min_card:
            cards = list(spec.factor_cards)
            cards[f] = c - 1
            yield f"dec-card-{f}", _with(spec, cards)
    for m, e in enumerate(spec.likelihood_edges):
        for f in range(nf):
            edges = list(spec.likelihood_edges)
            if f in e:
                if len(e) > 1:
                    edges[m] = tuple(g for g in e if g != f)
                    yield f"remove-edge-{m}-{f}", _with(spec, likelihood_edges=edges)
            else:
                edges[m] = tuple(sorted(e + (f,)))
                yield f"add-edge-{m}-{f}", _with(spec, likelihood_edges=edges)
    if spec.action_card > 1:
        for f in range(nf):
            trans = list(spec.transition_edges)
            t = trans[f]
            trans[f] = TransitionEdges(not t.action_dependent, t.parents)
            yield f"toggle-action-{f}", _with(spec, transition_edges=trans)


def enumerate_neighbors(spec, bounds=Bounds()):
    """All valid specs one move away, deduplicated up to canonical form.

    Returned specs are in canonical form and sorted by canonical encoding, so
    the order is deterministic.
    """
    own = canonical_key(spec)
    seen = {}
    for _, candidate in single_moves(spec, bounds):
        if validate(candidate):
            continue
        if any(c > bounds.max_card or c < 1 for c in candidate.factor_cards):
            continue
        canon = canonical_form(candidate)
        key = _encode(canon)
        if key != own and key not in seen:
            seen[key] = canon.with_label(describe(canon))
    return [seen[k] for k in sorted(seen)]


def random_spec(rng, bounds, modality_cards, action_card):
    """Draw a random valid spec within ``bounds`` from an injected generator."""
    nf = int(rng.integers(1, bounds.max_factors + 1))
    cards = [int(rng.integers(bounds.min_card, bounds.max_card + 1)) for _ in range(nf)]
    edges = []
    for _ in modality_cards:
        mask = rng.random(nf) < 0.5
        if not mask.any():
            mask[int(rng.integers(nf))] = True
        edges.append(tuple(int(f) for f in np.flatnonzero(mask)))
    trans = [TransitionEdges(bool(action_card > 1 and rng.random() < 0.5)) for _ in range(nf)]
    spec = canonical_form(StructureSpec(cards, modality_cards, edges, trans, action_card))
    return spec.with_label(describe(spec))


# ---------------------------------------------------------------------------
# parameter containers


def _as_tables(xs):
    return [np.array(x, dtype=float) for x in xs]


def _default_prefs(spec, C):
    if C is None:
        return [np.zeros(c) for c in spec.modality_cards]
    return _as_tables(C)


@dataclass
class GenerativeModel:
    """Point-parameter factorial POMDP: likelihoods, transitions, log preferences,
    initial-state distributions and an optional policy prior."""

    spec: StructureSpec
    A: list
    B: list
    C: list = None
    D: list = None
    E: np.ndarray = None

    def __post_init__(self):
        check_spec(self.spec)
        self.A = _as_tables(self.A)
        self.B = _as_tables(self.B)
        self.C = _default_prefs(self.spec, self.C)
        if self.D is None:
            self.D = [np.full(c, 1.0 / c) for c in self.spec.factor_cards]
        self.D = _as_tables(self.D)
        if self.E is not None:
            self.E = np.asarray(self.E, dtype=float)
        _check_shapes(self.spec, self.A, self.B, self.D, self.C)
        for name, tables in (("A", self.A), ("B", self.B), ("D", self.D)):
            for i, t in enumerate(tables):
                if not columns_valid(t):
                    raise ValidationError([f"{name}[{i}] columns are not probability vectors"])
        for m, c in enumerate(self.C):
            if not np.all(np.isfinite(c)):
                raise ValidationError([f"C[{m}] has non-finite entries"])


@dataclass
class HyperParams:
    """Dirichlet counts mirroring every table of a :class:`GenerativeModel`.

    ``C`` and ``E`` are configuration carried along unchanged.
    """

    spec: StructureSpec
    a: list
    b: list
    d: list
    C: list = None
    E: np.ndarray = None

    def __post_init__(self):
        check_spec(self.spec)
        self.a = _as_tables(self.a)
        self.b = _as_tables(self.b)
        self.d = _as_tables(self.d)
        self.C = _default_prefs(self.spec, self.C)
        if self.E is not None:
            self.E = np.asarray(self.E, dtype=float)
        _check_shapes(self.spec, self.a, self.b, self.d, self.C)
        for t in self.tables():
            if not np.all(np.isfinite(t)) or np.any(t <= 0):
                raise ValidationError(["Dirichlet counts must be positive and finite"])

    def tables(self):
        """All count tables in a fixed order: a..., b..., d..."""
        return list(self.a) + list(self.b) + list(self.d)

    def replace_tables(self, tables):
        na, nb = len(self.a), len(self.b)
        tables = list(tables)
        return HyperParams(
            self.spec, tables[:na], tables[na:na + nb], tables[na + nb:], self.C, self.E
        )


def _check_shapes(spec, A, B, D, C):
    problems = []
    if len(A) != spec.num_modalities:
        problems.append(f"expected {spec.num_modalities} likelihood tables, got {len(A)}")
    else:
        for m, t in enumerate(A):
            if t.shape != spec.a_shape(m):
                problems.append(f"A[{m}] has shape {t.shape}, expected {spec.a_shape(m)}")
    if len(B) != spec.num_factors:
        problems.append(f"expected {spec.num_factors} transition tables, got {len(B)}")
    else:
        for f, t in enumerate(B):
            if t.shape != spec.b_shape(f):
                problems.append(f"B[{f}] has shape {t.shape}, expected {spec.b_shape(f)}")
    if len(D) != spec.num_factors:
        problems.append(f"expected {spec.num_factors} initial-state vectors, got {len(D)}")
    else:
        for f, t in enumerate(D):
            if t.shape != (spec.factor_cards[f],):
                problems.append(f"D[{f}] has shape {t.shape}")
    if len(C) != spec.num_modalities:
        problems.append(f"expected {spec.num_modalities} preference vectors, got {len(C)}")
    else:
        for m, c in enumerate(C):
            if c.shape != (spec.modality_cards[m],):
                problems.append(f"C[{m}] has shape {c.shape}")
    if problems:
        raise ShapeError("; ".join(problems))


def instantiate_flat(spec, concentration=1.0, C=None, E=None):
    """Symmetric (maximum-entropy) Dirichlet hyperparameters for ``spec``."""
    check_spec(spec)
    if not concentration > 0:
        raise ValueError("concentration must be positive")
    return HyperParams(
        spec,
        [np.full(spec.a_shape(m), float(concentration)) for m in range(spec.num_modalities)],
        [np.full(spec.b_shape(f), float(concentration)) for f in range(spec.num_factors)],
        [np.full(c, float(concentration)) for c in spec.factor_cards],
        C,
        E,
    )


def expected_model(h):
    """Dirichlet-mean point model."""
    return GenerativeModel(
        h.spec,
        [normalize_columns(a) for a in h.a],
        [normalize_columns(b) for b in h.b],
        h.C,
        [d / d.sum() for d in h.d],
        h.E,
    )


def hyperparams_from_model(model, concentration=1e6, floor=1e-6):
    """Sharp Dirichlet counts centred on a point model.

    ``floor`` keeps counts strictly positive where the model has zeros.
    """
    scale = lambda t: np.asarray(t) * concentration + floor  # noqa: E731
    return HyperParams(
        model.spec,
        [scale(a) for a in model.A],
        [scale(b) for b in model.B],
        [scale(d) for d in model.D],
        model.C,
        model.E,
    )
