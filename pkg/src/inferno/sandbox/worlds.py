"""Simulated external processes.

Every world is a factorial POMDP (or, for the grid, equivalent to one) that
holds its hidden state privately. Agents reach it only through a
:class:`Blanket`, which exposes the observation and action spaces, ``reset``
and ``act`` and nothing else.
"""

from __future__ import annotations

import numpy as np

from inferno.errors import ShapeError
from inferno.genmodel import GenerativeModel, StructureSpec, TransitionEdges
from inferno.prob import sample_categorical


class PomdpWorld:
    """External process driven by a point generative model."""

    def __init__(self, model, name="world"):
        self.model = model
        self.name = name
        self.state = None

    @property
    def observation_cards(self):
        return self.model.spec.modality_cards

    @property
    def action_card(self):
        return self.model.spec.action_card

    def sense(self, rng):
        spec = self.model.spec
        return tuple(
            sample_categorical(self.model.A[m][(slice(None),) + tuple(self.state[f] for f in edges)], rng)
            for m, edges in enumerate(spec.likelihood_edges)
        )

    def reset(self, rng):
        self.state = [sample_categorical(d, rng) for d in self.model.D]
        return self.sense(rng)

    def transition(self, action, rng):
        spec = self.model.spec
        if not 0 <= int(action) < spec.action_card:
            raise ShapeError(f"action {action} outside [0, {spec.action_card})")
        nxt = []
        for f, t in enumerate(spec.transition_edges):
            idx = (slice(None), self.state[f]) + tuple(self.state[p] for p in t.parents)
            if t.action_dependent:
                idx += (int(action),)
            nxt.append(sample_categorical(self.model.B[f][idx], rng))
        self.state = nxt

    def step(self, action, rng):
        self.transition(action, rng)
        return self.sense(rng)

    def replace_model(self, model):
        """Swap the process model (same factors); the hidden state carries over."""
        if model.spec.factor_cards != self.model.spec.factor_cards:
            raise ShapeError("replacement model must keep the factor layout")
        self.model = model


MOVES = {0: (0, -1), 1: (0, 1), 2: (-1, 0), 3: (1, 0), 4: (0, 0)}


class GridWorld:
    """Grid with walls; actions up, down, left, right, stay.

    With probability ``slip`` a move fails and the agent stays put. The
    single observation is the cell index ``y * width + x``.
    """

    def __init__(self, width, height, walls=(), slip=0.0, start=(0, 0)):
        if not 0 <= slip <= 1:
            raise ValueError("slip must lie in [0, 1]")
        self.width, self.height = int(width), int(height)
        self.walls = {tuple(w) for w in walls}
        self.slip = float(slip)
        self.start = tuple(start)
        if self.start in self.walls or not self._inside(self.start):
            raise ValueError("start cell must be free and inside the grid")
        self.position = None
        self.slipped = False

    observation_cards = property(lambda self: (self.width * self.height,))
    action_card = 5

    def _inside(self, cell):
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def index(self, cell):
        return cell[1] * self.width + cell[0]

    def target_cell(self, cell, action):
        if action not in MOVES:
            raise ShapeError(f"action {action} outside [0, 5)")
        dx, dy = MOVES[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        if not self._inside(nxt) or nxt in self.walls:
            return cell
        return nxt

    def reset(self, rng):
        self.position = self.start
        return (self.index(self.position),)

    def step(self, action, rng):
        nxt = self.target_cell(self.position, int(action))
        self.slipped = rng.random() < self.slip
        if not self.slipped:
            self.position = nxt
        return (self.index(self.position),)

    def to_model(self):
        """Equivalent one-factor POMDP over cells."""
        n = self.width * self.height
        B = np.zeros((n, n, 5))
        for y in range(self.height):
            for x in range(self.width):
                i = self.index((x, y))
                for a in range(5):
                    j = self.index(self.target_cell((x, y), a))
                    B[j, i, a] += 1.0 - self.slip
                    B[i, i, a] += self.slip
        D = np.zeros(n)
        D[self.index(self.start)] = 1.0
        spec = StructureSpec((n,), (n,), ((0,),), (TransitionEdges(True),), 5, "grid")
        return GenerativeModel(spec, [np.eye(n)], [B], None, [D])


class Blanket:
    """The only view an agent gets of a world: spaces, ``reset`` and ``act``."""

    __slots__ = ("observation_cards", "action_card", "reset", "act")

    def __init__(self, world):
        self.observation_cards = tuple(world.observation_cards)
        self.action_card = int(world.action_card)
        self.reset = lambda rng: tuple(int(o) for o in world.reset(rng))
        self.act = lambda action, rng: tuple(int(o) for o in world.step(action, rng))
