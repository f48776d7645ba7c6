"""Generative models of the scenario worlds.

Each builder returns a :class:`GenerativeModel` for the external process;
agents usually start from the same structure with some tables unknown.
"""

from __future__ import annotations

import numpy as np

from inferno.genmodel import GenerativeModel, StructureSpec, TransitionEdges


def _moves(card, targets):
    """Deterministic action-dependent transition: action ``a`` leads to ``targets[a]``."""
    B = np.zeros((card, card, len(targets)))
    for a, j in enumerate(targets):
        B[j, :, a] = 1.0
    return B


def bandit_model(p_reward=(0.8, 0.2)):
    """Two arms. States: start, left arm, right arm; outcomes: position and reward."""
    spec = StructureSpec((3,), (3, 2), ((0,), (0,)), (TransitionEdges(True),), 2, "bandit")
    reward = np.array([[1.0, 1 - p_reward[0], 1 - p_reward[1]], [0.0, p_reward[0], p_reward[1]]])
    return GenerativeModel(spec, [np.eye(3), reward], [_moves(3, [1, 2])], None, [np.array([1.0, 0, 0])])


TMAZE_CENTRE, TMAZE_LEFT, TMAZE_RIGHT, TMAZE_CUE = range(4)


def tmaze_model(cue_validity=0.95, reward_validity=0.8):
    """T-maze with an informative cue.

    Factors: location (centre, left, right, cue) moved by the action, and a
    static context (reward on the left or the right). Outcomes: location,
    cue (none, points-left, points-right) and reward (none, win, loss).
    Arms are absorbing.
    """
    spec = StructureSpec(
        (4, 2), (4, 3, 3), ((0,), (0, 1), (0, 1)),
        (TransitionEdges(True), TransitionEdges(False)), 4, "tmaze",
    )
    B_loc = np.zeros((4, 4, 4))
    for a in range(4):
        for s in range(4):
            j = s if s in (TMAZE_LEFT, TMAZE_RIGHT) else a
            B_loc[j, s, a] = 1.0
    cue = np.zeros((3, 4, 2))
    cue[0, :, :] = 1.0
    cue[:, TMAZE_CUE, 0] = [0.0, cue_validity, 1 - cue_validity]
    cue[:, TMAZE_CUE, 1] = [0.0, 1 - cue_validity, cue_validity]
    rew = np.zeros((3, 4, 2))
    rew[0, :, :] = 1.0
    for arm, ctx_good in ((TMAZE_LEFT, 0), (TMAZE_RIGHT, 1)):
        for ctx in (0, 1):
            p = reward_validity if ctx == ctx_good else 1 - reward_validity
            rew[:, arm, ctx] = [0.0, p, 1 - p]
    D = [np.array([1.0, 0, 0, 0]), np.array([0.5, 0.5])]
    return GenerativeModel(spec, [np.eye(4), cue, rew], [B_loc, np.eye(2)], None, D)


def tmaze_parameters(rng):
    """Draw ``(cue_validity, reward_validity)`` with the cue the better signal.

    Both channels are symmetric binary reports of the context, so the cue
    carries more information than an arm's outcome exactly when its validity
    is further from one half. Draws keep ``cue_validity >= 0.85 > 0.8 >=
    reward_validity``.
    """
    return float(rng.uniform(0.85, 1.0)), float(rng.uniform(0.55, 0.8))


CAUTION_START, CAUTION_GOOD, CAUTION_GREAT, CAUTION_TRAP = range(4)
CAUTION_SAFE, CAUTION_GAMBLE = 0, 1


def caution_model(p_great, p_trap):
    """Safe action reaches a good state; the gamble reaches great or trap at even odds.

    Preferences over the four observed states put ``p_good`` midway between
    ``p_great`` and ``p_trap``, so the two actions have the same expected
    preference probability and differ only in spread.
    """
    p_good = 0.5 * (p_great + p_trap)
    p_start = 1.0 - p_great - p_trap - p_good
    if p_start <= 0:
        raise ValueError("preference probabilities leave no mass for the start state")
    spec = StructureSpec((4,), (4,), ((0,),), (TransitionEdges(True),), 2, "caution")
    B = np.zeros((4, 4, 2))
    B[CAUTION_GOOD, :, CAUTION_SAFE] = 1.0
    B[CAUTION_GREAT, :, CAUTION_GAMBLE] = 0.5
    B[CAUTION_TRAP, :, CAUTION_GAMBLE] = 0.5
    prefs = np.log(np.array([p_start, p_good, p_great, p_trap]))
    return GenerativeModel(spec, [np.eye(4)], [B], [prefs], [np.eye(4)[CAUTION_START]])


def caution_parameters(rng):
    """Draw ``(p_great, p_trap)`` in the mode-seeking regime.

    With an identity likelihood the safe action has lower risk exactly when
    ``(p_great + p_trap) / 2 > 2 sqrt(p_great p_trap)``, i.e. when
    ``p_great / p_trap > (2 + sqrt 3)^2`` (about 13.9). Draws keep the ratio
    above 15.
    """
    p_trap = float(rng.uniform(0.001, 0.02))
    p_great = float(rng.uniform(0.3, 0.45))
    return p_great, p_trap


def recovery_model(accuracy=0.9, stay=(0.9, 0.8)):
    """Two independent binary hidden factors, each seen through its own binary outcome."""
    spec = StructureSpec((2, 2), (2, 2), ((0,), (1,)), None, 1, "recovery")
    A = [np.array([[accuracy, 1 - accuracy], [1 - accuracy, accuracy]])] * 2
    B = [np.array([[stay[0], 1 - stay[1]], [1 - stay[0], stay[1]]]),
         np.array([[stay[1], 1 - stay[0]], [1 - stay[1], stay[0]]])]
    return GenerativeModel(spec, A, B)


def switched_model(accuracy=0.9, stay=(0.9, 0.8)):
    """Recovery world after the switch: the second outcome now reports the first factor."""
    base = recovery_model(accuracy, stay)
    spec = StructureSpec((2, 2), (2, 2), ((0,), (0,)), None, 1, "switched")
    return GenerativeModel(spec, base.A, base.B, None, base.D)


SAFE, DANGER = 0, 1
IDLE, RESCUE = 0, 1


def rescue_world_model(p_fall=0.2, p_rescue=0.9, p_recover=0.05, command_accuracy=0.8):
    """Empath's view of the rescue world.

    One hidden factor (target safe or in danger) driven by the empath's
    action (idle or rescue); outcomes are the target's status and the
    target's command (none or help), which mostly mirrors its status.
    """
    spec = StructureSpec((2,), (2, 2), ((0,), (0,)), (TransitionEdges(True),), 2, "rescue")
    B = np.zeros((2, 2, 2))
    B[:, SAFE, IDLE] = B[:, SAFE, RESCUE] = [1 - p_fall, p_fall]
    B[:, DANGER, IDLE] = [p_recover, 1 - p_recover]
    B[:, DANGER, RESCUE] = [p_rescue, 1 - p_rescue]
    cmd = np.array([[command_accuracy, 1 - command_accuracy], [1 - command_accuracy, command_accuracy]])
    return GenerativeModel(spec, [np.eye(2), cmd], [B], None, [np.array([1.0, 0.0])])


def target_self_model(prefs=(0.0, -3.0), expect_safe=0.95, help_works=0.9):
    """The target's own model: it expects to stay safe and that calling for help works."""
    spec = StructureSpec((2,), (2,), ((0,),), (TransitionEdges(True),), 2, "target")
    B = np.zeros((2, 2, 2))
    B[:, SAFE, 0] = B[:, SAFE, 1] = [expect_safe, 1 - expect_safe]
    B[:, DANGER, 0] = [0.1, 0.9]
    B[:, DANGER, 1] = [help_works, 1 - help_works]
    return GenerativeModel(spec, [np.eye(2)], [B], [np.asarray(prefs, dtype=float)],
                           [np.array([expect_safe, 1 - expect_safe])])
