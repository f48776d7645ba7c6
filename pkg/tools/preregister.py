"""Pre-registered oracle runs that fix the data-dependent acceptance thresholds.

Run once; the printed thresholds are frozen as constants in
tests/test_acceptance.py. Oracle runs use seeds 1000-1019, disjoint from the
acceptance seeds 0-19.

    python3 tools/preregister.py [recovery|rescue|phenotype|obedience|all]
"""

import json
import sys
import time

import numpy as np

from inferno.sandbox.config import parse_config
from inferno.sandbox.scenarios import run_scenario, structure_recovery_trial

ORACLE_SEEDS = range(1000, 1020)
RECOVERY_GRID = (100, 200, 300, 400, 600, 800)
RECOVERY_SEEDS = range(1000, 1003)


def _sc(name, seed, steps, **extra):
    return parse_config({"schema": "inferno-config/1", "scenario": name, "seed": seed, "steps": steps, **extra})


def recovery():
    """Smallest grid N at which every oracle seed puts >= 0.9 on the true class."""
    for n in RECOVERY_GRID:
        t = time.time()
        weights = [structure_recovery_trial(n, s)[0] for s in RECOVERY_SEEDS]
        print(f"  N={n}: weights {np.round(weights, 4).tolist()} ({time.time() - t:.0f}s)", flush=True)
        if min(weights) >= 0.9:
            return {"recovery_n_obs": n, "oracle_weights": weights}
    return {"recovery_n_obs": None}


def rescue(steps=100):
    """Harm margin: half the mean paired (baseline - empath) difference on the oracle seeds."""
    diffs = []
    for s in ORACLE_SEEDS:
        _, m = run_scenario(_sc("rescue", s, steps, baseline=True))
        diffs.append(m["baseline_mean_harm"] - m["mean_harm"])
    wins = sum(d > 0 for d in diffs)
    mean_diff = float(np.mean(diffs))
    return {"rescue_steps": steps, "oracle_wins": wins, "oracle_mean_diff": mean_diff,
            "oracle_diffs": diffs, "rescue_margin": 0.5 * mean_diff}


def obedience(steps=200, grid=(1, 2, 4, 8)):
    """Training budget: the fewest 200-step episodes ordering every oracle seed."""
    for episodes in grid:
        ordered = []
        for s in ORACLE_SEEDS:
            _, m = run_scenario(_sc("obedience", s, steps, params={"episodes": episodes}))
            ordered.append(m["pref_followed"] > m["pref_ignored"])
        print(f"  episodes={episodes}: {sum(ordered)}/20 ordered", flush=True)
        if all(ordered):
            return {"obedience_steps": steps, "obedience_episodes": episodes}
    return {"obedience_episodes": None}


def phenotype(steps=60):
    """Step budget: the largest first-crossing step on the oracle seeds, plus half again."""
    firsts = []
    for s in ORACLE_SEEDS:
        _, m = run_scenario(_sc("phenotype", s, steps))
        firsts.append(m["first_step_above_0.9"])
    if min(firsts) < 0:
        return {"phenotype_steps": None, "oracle_first_steps": firsts}
    return {"phenotype_steps": int(np.ceil(1.5 * (max(firsts) + 1))), "oracle_first_steps": firsts}


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    out = {}
    for name, fn in (("recovery", recovery), ("rescue", rescue), ("phenotype", phenotype),
                     ("obedience", obedience)):
        if which in (name, "all"):
            print(name, flush=True)
            out.update(fn())
    print(json.dumps(out, indent=1))
