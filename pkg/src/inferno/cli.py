"""Command-line interface: ``inferno <subcommand> [options]``.

Subcommands write their outputs into ``--out`` (default ``out``):

``structure-learn``  posterior.json, weights.csv, sweeps.csv, weights.png
``agent``            trace.jsonl, metrics.csv, posterior.json, actions.png
                     (plus weights.png and free_energy.png for structure scenarios)
``empathy``          trace.jsonl, metrics.csv, harm.png (and posterior.png for phenotype)
``bmr-demo``         bmr.csv, bmr.png
``validate``         diagnostics only

``--emit-plotdata`` adds ``plotdata/<curve>.csv`` for every plotted curve.
Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from inferno import modelio, plotting
from inferno.errors import ConfigurationError, InfernoError, ModelFormatError
from inferno.inference import DataBatch
from inferno.sandbox.config import check_config, load_config, parse_config
from inferno.sandbox.scenarios import execute_scenario, learn_structure, random_bmr_case
from inferno.structure import bmr_log_evidence_ratio, bmr_monte_carlo, write_weights_csv
from inferno.trace import validate_lines

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
AGENT_SCENARIOS = ("bandit", "tmaze", "structure_recovery", "switching")
EMPATHY_SCENARIOS = ("rescue", "obedience", "phenotype")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _nonneg(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return value


def _positive(text):
    value = _nonneg(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser():
    parser = _Parser(prog="inferno", description="Discrete active inference with structure learning.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario config (JSON)")
        p.add_argument("--seed", type=_nonneg, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--steps", type=_nonneg, help="override the step budget")
        p.add_argument("--particles", type=_positive, help="override the number of structure particles")
        p.add_argument("--emit-plotdata", action="store_true", help="write per-curve CSV files")

    common(sub.add_parser("structure-learn", help="learn structure from a static data file"))
    common(sub.add_parser("agent", help="run a single-agent scenario"))
    common(sub.add_parser("empathy", help="run a First-Law (empathy) scenario"))
    bmr = sub.add_parser("bmr-demo", help="closed-form vs Monte-Carlo model reduction")
    common(bmr, config_required=False)
    bmr.add_argument("--samples", type=_positive, default=200_000, help="Monte-Carlo samples per case")
    bmr.add_argument("--cases", type=_positive, default=5, help="number of random cases")
    val = sub.add_parser("validate", help="check config, model and trace files")
    val.add_argument("files", nargs="*", help="files to check")
    val.add_argument("--config", action="append", default=[], help="config file to check")
    return parser


# ---------------------------------------------------------------------------
# output helpers


def _scalar(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def write_metrics_csv(metrics, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key in sorted(metrics):
            if _scalar(metrics[key]):
                writer.writerow([key, repr(float(metrics[key]))])


def _write_plotdata(out, curves):
    d = out / "plotdata"
    d.mkdir(exist_ok=True)
    for name, ys in curves.items():
        with open(d / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "value"])
            for i, y in enumerate(ys):
                writer.writerow([i, repr(float(y))])


def _scenario(args, allowed):
    sc = load_config(args.config)
    if sc.name not in allowed:
        raise ConfigurationError(f"scenario {sc.name!r} is not available here; use one of {', '.join(allowed)}")
    if args.seed is not None:
        sc.seed = args.seed
    if args.steps is not None:
        sc.steps = args.steps
    if args.particles is not None:
        sc.search["n_particles"] = args.particles
    return sc


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_structure_learn(args):
    sc = _scenario(args, ("structure_learn",))
    data = modelio.load(Path(sc.base_dir) / sc.data)
    if not isinstance(data, DataBatch):
        raise ConfigurationError(f"{sc.data}: expected a model file of kind data")
    out = _out_dir(args)
    posterior, sweeps = learn_structure(sc, data)
    modelio.save(posterior, out / "posterior.json")
    write_weights_csv(posterior, out / "weights.csv")
    with open(out / "sweeps.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep", "label", "free_energy", "weight"])
        for i, p in enumerate(sweeps):
            for q, w in zip(p.particles, p.weights):
                writer.writerow([i, q.spec.label, repr(float(q.free_energy)), repr(float(w))])
    labels = [q.spec.label for q in posterior.particles]
    plotting.plot_bars(labels, posterior.weights, out / "weights.png", "structure posterior", "weight")
    if args.emit_plotdata:
        curves = {"best_free_energy": [min(q.free_energy for q in p.particles) for p in sweeps]}
        _write_plotdata(out, curves)
    best = posterior.best()
    print(f"best structure {best.spec.label} weight {posterior.weights.max():.6f} "
          f"free energy {best.free_energy:.6f} after {len(sweeps) - 1} sweeps")
    return EXIT_OK


def _run(args, allowed):
    sc = _scenario(args, allowed)
    out = _out_dir(args)
    trace, metrics, posterior = execute_scenario(sc)
    trace.write_jsonl(out / "trace.jsonl")
    write_metrics_csv(metrics, out / "metrics.csv")
    if posterior is not None:
        modelio.save(posterior, out / "posterior.json")
    curves = {k: v for k, v in metrics.items() if isinstance(v, list)}
    return sc, out, trace, metrics, curves


def cmd_agent(args):
    sc, out, trace, metrics, curves = _run(args, AGENT_SCENARIOS)
    actions = {"action": trace.column("action")}
    plotting.plot_curves(actions, out / "actions.png", f"{sc.name}: actions", ylabel="action")
    weights = {k[len("weight_curve_"):]: v for k, v in curves.items() if k.startswith("weight_curve_")}
    if weights:
        plotting.plot_curves(weights, out / "weights.png", f"{sc.name}: structure weights", ylabel="weight")
    if "free_energy_curve" in curves:
        plotting.plot_curves({"free energy": curves["free_energy_curve"]}, out / "free_energy.png",
                             f"{sc.name}: free energy of the leading particle", ylabel="nats")
    if args.emit_plotdata:
        _write_plotdata(out, {**actions, **curves})
    print(f"{sc.name}: {len(trace)} steps; " + ", ".join(
        f"{k}={metrics[k]:.6g}" for k in sorted(metrics) if _scalar(metrics[k])))
    return EXIT_OK


def cmd_empathy(args):
    sc, out, trace, metrics, curves = _run(args, EMPATHY_SCENARIOS)
    harm = {"target_harm": [r["harm"][0]["true"] for r in trace.records]}
    if "baseline_harm_curve" in curves:
        harm["baseline_harm"] = curves["baseline_harm_curve"]
    plotting.plot_curves(harm, out / "harm.png", f"{sc.name}: target harm", ylabel="nats")
    if "posterior_true_curve" in curves:
        plotting.plot_curves({"true hypothesis": curves["posterior_true_curve"]}, out / "posterior.png",
                             "hypothesis posterior", ylabel="probability")
    if args.emit_plotdata:
        _write_plotdata(out, {**harm, **curves})
    print(f"{sc.name}: {len(trace)} steps; " + ", ".join(
        f"{k}={metrics[k]:.6g}" for k in sorted(metrics) if _scalar(metrics[k])))
    return EXIT_OK


def cmd_bmr_demo(args):
    seed = 0
    if args.config:
        sc = load_config(args.config)
        seed = sc.seed
    if args.seed is not None:
        seed = args.seed
    out = _out_dir(args)
    rng = np.random.default_rng(seed)
    rows, first = [], None
    for case in range(args.cases):
        q, p, r = random_bmr_case(rng)
        exact = bmr_log_evidence_ratio(q, p, r)
        est, se, logw = bmr_monte_carlo(q, p, r, args.samples, rng, return_log_weights=True)
        rows.append([case, exact, est, se, (est - exact) / se])
        if first is None:
            first = (exact, np.logaddexp.accumulate(logw) - np.log(np.arange(1, logw.size + 1)))
    with open(out / "bmr.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["case", "closed_form", "monte_carlo", "standard_error", "z"])
        for row in rows:
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
    plotting.plot_estimate(first[1], first[0], out / "bmr.png", "case 0")
    if args.emit_plotdata:
        _write_plotdata(out, {"bmr_running_estimate": first[1]})
    for row in rows:
        print(f"case {row[0]}: closed form {row[1]:.6f}  Monte Carlo {row[2]:.6f} +/- {row[3]:.6f}  z {row[4]:+.2f}")
    return EXIT_OK


def _check_file(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        n = validate_lines(text.splitlines())
        return f"trace with {n} steps"
    doc = json.loads(text)
    if isinstance(doc, dict) and "schema" in doc:
        problems = check_config(doc)
        if problems:
            raise ConfigurationError("; ".join(problems))
        parse_config(doc, path.parent)
        return f"config for scenario {doc['scenario']}"
    obj = modelio.deserialize(text)
    return f"model file ({type(obj).__name__})"


def cmd_validate(args):
    files = list(args.config) + list(args.files)
    if not files:
        raise UsageError("nothing to validate")
    failed = 0
    for f in files:
        try:
            print(f"{f}: ok, {_check_file(f)}")
        except (InfernoError, ValueError, OSError) as exc:
            failed += 1
            print(f"{f}: invalid: {exc}", file=sys.stderr)
    if failed:
        return EXIT_CONFIG
    return EXIT_OK


COMMANDS = {
    "structure-learn": cmd_structure_learn,
    "agent": cmd_agent,
    "empathy": cmd_empathy,
    "bmr-demo": cmd_bmr_demo,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"inferno: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, ModelFormatError) as exc:
        print(f"inferno: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfernoError, OSError, ValueError) as exc:
        print(f"inferno: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

