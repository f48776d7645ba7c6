"""Target agents living inside the external process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from inferno.inference import DataBatch, infer_states, variational_free_energy
from inferno.planning import evaluate_policies, predict_states, select_action


@dataclass
class TargetAgent:
    """Agent acting from its own generative model, or from a fixed script.

    ``observe`` filters one observation and returns the agent's free energy
    for it, which is its harm for that step.
    """

    model: object
    prefs: list = None
    temperature: float = 1.0
    horizon: int = 1
    script: list = None
    belief: list = field(default=None, init=False)
    last_action: int = field(default=None, init=False)
    harm: list = field(default_factory=list, init=False)
    steps: int = field(default=0, init=False)

    def __post_init__(self):
        if self.prefs is None:
            self.prefs = [np.asarray(c, dtype=float) for c in self.model.C]

    def reset(self):
        self.belief, self.last_action, self.harm, self.steps = None, None, [], 0

    def observe(self, observation):
        if self.belief is None:
            prior = [d.copy() for d in self.model.D]
        else:
            prior = predict_states(self.model, self.belief, self.last_action or 0)
        batch = DataBatch([list(observation)])
        b = infer_states(self.model, batch, initial=prior)
        f = float(variational_free_energy(b, self.model, batch, initial=prior).total)
        self.belief = b.current()
        self.harm.append(f)
        return f

    def predictive(self, action=None):
        """Outcome distributions the agent expects at its next step."""
        a = self.last_action if action is None else action
        qs = predict_states(self.model, self.belief, a or 0) if self.belief is not None else self.model.D
        out = []
        for m, edges in enumerate(self.model.spec.likelihood_edges):
            qo = self.model.A[m]
            for f in edges:
                qo = np.tensordot(qo, qs[f], axes=([1], [0]))
            out.append(qo)
        return out

    def act(self, rng):
        if self.script:
            action = int(self.script[self.steps % len(self.script)])
        else:
            reports = evaluate_policies(self.model, self.belief, self.prefs, self.horizon)
            action = int(select_action(reports, self.temperature, rng))
        self.last_action = action
        self.steps += 1
        return action


def scripted_target_step(target, observation, rng):
    """Let ``target`` perceive ``observation`` and return ``(action, harm)``."""
    harm = target.observe(observation)
    return target.act(rng), harm
