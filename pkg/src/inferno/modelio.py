"""Model file format ``inferno-model/1``.

A model file is a JSON document. The top-level object always carries
``"format": "inferno-model/1"`` and a ``"kind"`` naming the payload:

``spec``
    ``{"spec": SPEC}``
``model``
    ``{"spec": SPEC, "A": [TABLE], "B": [TABLE], "C": [[float]], "D": [[float]], "E": [float] | null}``
``hyperparams``
    ``{"spec": SPEC, "a": [TABLE], "b": [TABLE], "d": [[float]], "C": [[float]], "E": [float] | null}``
``data``
    ``{"observations": [[int]], "actions": [int]}``
``posterior``
    ``{"data_seen": int, "particles": [{"spec", "hyper", "prior", "free_energy",
    "log_structure_prior", "weight"}]}``

where ``SPEC`` is ``{"label", "factor_cards", "modality_cards", "action_card",
"likelihood_edges", "transitions": [{"action_dependent", "parents"}]}`` and a
``TABLE`` is ``{"shape": [int], "data": [float]}`` with data in row-major
order. Floats are written with 17 significant digits so every value
round-trips exactly; non-finite floats are written as the strings
``"inf"``, ``"-inf"`` and ``"nan"``.
"""

import json

import numpy as np

from inferno.errors import InfernoError, ModelFormatError
from inferno.genmodel import GenerativeModel, HyperParams, StructureSpec, TransitionEdges

FORMAT_TAG = "inferno-model/1"


# ---------------------------------------------------------------------------
# emitter


def _fmt_float(x):
    x = float(x)
    if np.isnan(x):
        return '"nan"'
    if np.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = "%.17g" % x
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def _is_scalar(x):
    return x is None or isinstance(x, (bool, int, float, str, np.integer, np.floating))


def _fmt_scalar(x):
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return _fmt_float(x)
    return json.dumps(x)


def _emit(obj, indent=0):
    pad = "  " * indent
    if _is_scalar(obj):
        return _fmt_scalar(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_emit(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    obj = list(obj)
    if all(_is_scalar(x) for x in obj):
        return "[" + ", ".join(_fmt_scalar(x) for x in obj) + "]"
    items = [f"{pad}  {_emit(x, indent + 1)}" for x in obj]
    return "[\n" + ",\n".join(items) + "\n" + pad + "]"


def _table(arr):
    arr = np.asarray(arr, dtype=float)
    return {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel(order="C")]}


def _spec_doc(spec):
    return {
        "label": spec.label,
        "factor_cards": list(spec.factor_cards),
        "modality_cards": list(spec.modality_cards),
        "action_card": spec.action_card,
        "likelihood_edges": [list(e) for e in spec.likelihood_edges],
        "transitions": [
            {"action_dependent": t.action_dependent, "parents": list(t.parents)}
            for t in spec.transition_edges
        ],
    }


def _vecs(xs):
    return [[float(v) for v in np.asarray(x).ravel()] for x in xs]


def _opt_vec(x):
    return None if x is None else [float(v) for v in np.asarray(x).ravel()]


def _model_doc(model):
    return {
        "spec": _spec_doc(model.spec),
        "A": [_table(a) for a in model.A],
        "B": [_table(b) for b in model.B],
        "C": _vecs(model.C),
        "D": _vecs(model.D),
        "E": _opt_vec(model.E),
    }


def _hyper_doc(h):
    return {
        "spec": _spec_doc(h.spec),
        "a": [_table(a) for a in h.a],
        "b": [_table(b) for b in h.b],
        "d": _vecs(h.d),
        "C": _vecs(h.C),
        "E": _opt_vec(h.E),
    }


def serialize(obj):
    """Serialize a spec, model, hyperparams, data batch or particle posterior."""
    # imported here to avoid a cycle: inference/structure import genmodel only
    from inferno.inference import DataBatch
    from inferno.structure import ParticlePosterior

    doc = {"format": FORMAT_TAG}
    if isinstance(obj, StructureSpec):
        doc["kind"] = "spec"
        doc["spec"] = _spec_doc(obj)
    elif isinstance(obj, GenerativeModel):
        doc["kind"] = "model"
        doc.update(_model_doc(obj))
    elif isinstance(obj, HyperParams):
        doc["kind"] = "hyperparams"
        doc.update(_hyper_doc(obj))
    elif isinstance(obj, DataBatch):
        doc["kind"] = "data"
        doc["observations"] = [[int(v) for v in row] for row in obj.observations]
        doc["actions"] = [int(a) for a in obj.actions]
    elif isinstance(obj, ParticlePosterior):
        doc["kind"] = "posterior"
        doc["data_seen"] = int(obj.data_seen)
        doc["particles"] = [
            {
                "spec": _spec_doc(p.spec),
                "hyper": _hyper_doc(p.hyper),
                "prior": None if p.prior is None else _hyper_doc(p.prior),
                "free_energy": float(p.free_energy),
                "log_structure_prior": float(p.log_structure_prior),
                "weight": float(w),
            }
            for p, w in zip(obj.particles, obj.weights)
        ]
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return _emit(doc) + "\n"


# ---------------------------------------------------------------------------
# parser


def _get(doc, key, path, kind=None):
    if not isinstance(doc, dict):
        raise ModelFormatError("expected an object", path)
    if key not in doc:
        raise ModelFormatError(f"missing field {key!r}", path)
    value = doc[key]
    where = f"{path}.{key}" if path else key
    if kind is not None and not isinstance(value, kind):
        raise ModelFormatError(f"expected {getattr(kind, '__name__', kind)}", where)
    return value


def _float(x, path):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelFormatError("expected a number", path)
    return float(x)


def _int_list(xs, path):
    if not isinstance(xs, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in xs):
        raise ModelFormatError("expected a list of integers", path)
    return [int(x) for x in xs]


def _parse_spec(doc, path):
    label = _get(doc, "label", path, str)
    fc = _int_list(_get(doc, "factor_cards", path), f"{path}.factor_cards")
    mc = _int_list(_get(doc, "modality_cards", path), f"{path}.modality_cards")
    ac = _get(doc, "action_card", path, int)
    edges_doc = _get(doc, "likelihood_edges", path, list)
    edges = [_int_list(e, f"{path}.likelihood_edges[{i}]") for i, e in enumerate(edges_doc)]
    trans = []
    for i, t in enumerate(_get(doc, "transitions", path, list)):
        where = f"{path}.transitions[{i}]"
        trans.append(
            TransitionEdges(
                _get(t, "action_dependent", where, bool),
                _int_list(_get(t, "parents", where), f"{where}.parents"),
            )
        )
    return StructureSpec(fc, mc, edges, trans, ac, label)


def _parse_table(doc, path):
    shape = _int_list(_get(doc, "shape", path), f"{path}.shape")
    data = _get(doc, "data", path, list)
    values = [_float(x, f"{path}.data[{i}]") for i, x in enumerate(data)]
    if int(np.prod(shape)) != len(values):
        raise ModelFormatError(f"{len(values)} values for shape {shape}", f"{path}.data")
    return np.array(values, dtype=float).reshape(shape)


def _parse_vecs(xs, path):
    if not isinstance(xs, list):
        raise ModelFormatError("expected a list", path)
    out = []
    for i, v in enumerate(xs):
        if not isinstance(v, list):
            raise ModelFormatError("expected a list", f"{path}[{i}]")
        out.append(np.array([_float(x, f"{path}[{i}][{j}]") for j, x in enumerate(v)]))
    return out


def _parse_opt_vec(x, path):
    if x is None:
        return None
    if not isinstance(x, list):
        raise ModelFormatError("expected a list or null", path)
    return np.array([_float(v, f"{path}[{i}]") for i, v in enumerate(x)])


def _parse_model(doc, path=""):
    p = lambda k: f"{path}.{k}" if path else k  # noqa: E731
    spec = _parse_spec(_get(doc, "spec", path, dict), p("spec"))
    return GenerativeModel(
        spec,
        [_parse_table(t, f"{p('A')}[{i}]") for i, t in enumerate(_get(doc, "A", path, list))],
        [_parse_table(t, f"{p('B')}[{i}]") for i, t in enumerate(_get(doc, "B", path, list))],
        _parse_vecs(_get(doc, "C", path), p("C")),
        _parse_vecs(_get(doc, "D", path), p("D")),
        _parse_opt_vec(_get(doc, "E", path), p("E")),
    )


def _parse_hyper(doc, path=""):
    p = lambda k: f"{path}.{k}" if path else k  # noqa: E731
    spec = _parse_spec(_get(doc, "spec", path, dict), p("spec"))
    return HyperParams(
        spec,
        [_parse_table(t, f"{p('a')}[{i}]") for i, t in enumerate(_get(doc, "a", path, list))],
        [_parse_table(t, f"{p('b')}[{i}]") for i, t in enumerate(_get(doc, "b", path, list))],
        _parse_vecs(_get(doc, "d", path), p("d")),
        _parse_vecs(_get(doc, "C", path), p("C")),
        _parse_opt_vec(_get(doc, "E", path), p("E")),
    )


def deserialize(text):
    """Parse a model file. Raises :class:`ModelFormatError` with a location."""
    from inferno.inference import DataBatch
    from inferno.structure import ParticlePosterior, StructureParticle

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    fmt = _get(doc, "format", "")
    if fmt != FORMAT_TAG:
        raise ModelFormatError(f"unsupported format tag {fmt!r}", "format")
    kind = _get(doc, "kind", "", str)
    try:
        if kind == "spec":
            return _parse_spec(_get(doc, "spec", "", dict), "spec")
        if kind == "model":
            return _parse_model(doc)
        if kind == "hyperparams":
            return _parse_hyper(doc)
        if kind == "data":
            obs = _get(doc, "observations", "", list)
            rows = [_int_list(r, f"observations[{i}]") for i, r in enumerate(obs)]
            actions = _int_list(_get(doc, "actions", ""), "actions")
            return DataBatch(rows, actions)
        if kind == "posterior":
            particles, weights = [], []
            for i, pd in enumerate(_get(doc, "particles", "", list)):
                where = f"particles[{i}]"
                spec = _parse_spec(_get(pd, "spec", where, dict), f"{where}.spec")
                hyper = _parse_hyper(_get(pd, "hyper", where, dict), f"{where}.hyper")
                prior_doc = _get(pd, "prior", where)
                prior = None if prior_doc is None else _parse_hyper(prior_doc, f"{where}.prior")
                particles.append(
                    StructureParticle(
                        spec,
                        hyper,
                        _float(_get(pd, "free_energy", where), f"{where}.free_energy"),
                        _float(_get(pd, "log_structure_prior", where), f"{where}.log_structure_prior"),
                        prior,
                    )
                )
                weights.append(_float(_get(pd, "weight", where), f"{where}.weight"))
            return ParticlePosterior(particles, np.array(weights), _get(doc, "data_seen", "", int))
    except ModelFormatError:
        raise
    except (InfernoError, ValueError, TypeError) as exc:
        raise ModelFormatError(str(exc), kind) from None
    raise ModelFormatError(f"unknown kind {kind!r}", "kind")


def save(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(obj))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())
