"""File formats: model JSON, observation/state text files, config schemas.

Models are schema-versioned JSON so files identify themselves; sequences
are plain delimited text (one observation per line) so they stream. All
writers are deterministic: sorted keys, stable float repr. State labels
are 1-based in every file and 0-based everywhere in memory.
"""

import json

import numpy as np

from .core import ObservationSequence, TransitionModel
from .emissions.discrete import DiscreteEmissionTable, NegBinEmission
from .emissions.kernel import KernelEmission
from .emissions.mixture import (
    BinomialComponent,
    DiracAtZero,
    GaussianComponent,
    MixtureEmission,
    PoissonComponent,
    TriangularComponent,
)
from .errors import DataFileError, InputError, ModelFileError, NPHMMError
from .model import HMMModel

MODEL_SCHEMA = "nphmm-model/1"


# ------------------------------------------------------------- model files

def _component_to_dict(comp):
    if comp.family == "poisson":
        return {"family": "poisson", "rate": float(comp.rate)}
    if comp.family == "gaussian":
        return {
            "family": "gaussian",
            "mean": np.atleast_1d(comp.mean).tolist(),
            "var": float(comp.var),
        }
    if comp.family == "binomial":
        return {"family": "binomial", "trials": int(comp.trials),
                "p": float(comp.p)}
    if comp.family == "dirac0":
        return {"family": "dirac0"}
    if comp.family == "triangular":
        return {"family": "triangular", "size": int(comp.size)}
    raise ModelFileError(f"cannot serialize component family {comp.family!r}")


def _component_from_dict(payload):
    family = payload.get("family")
    if family == "poisson":
        return PoissonComponent(rate=payload["rate"])
    if family == "gaussian":
        mean = np.asarray(payload["mean"], dtype=float)
        return GaussianComponent(mean=mean, var=payload["var"])
    if family == "binomial":
        return BinomialComponent(trials=payload["trials"], p=payload["p"])
    if family == "dirac0":
        return DiracAtZero()
    if family == "triangular":
        return TriangularComponent(size=payload["size"])
    raise ModelFileError(f"unknown component family {family!r}")


def _emission_to_dict(emission):
    if isinstance(emission, DiscreteEmissionTable):
        return {"family": "np", "probs": emission.probs.tolist()}
    if isinstance(emission, NegBinEmission):
        return {"family": "nb", "r": emission.r.tolist(),
                "p": emission.p.tolist()}
    if isinstance(emission, MixtureEmission):
        return {
            "family": "mixture",
            "psi": emission.psi.tolist(),
            "psi_mask": (
                None if emission.psi_mask is None
                else np.asarray(emission.psi_mask).astype(int).tolist()
            ),
            "components": [
                _component_to_dict(c) for c in emission.components
            ],
        }
    if isinstance(emission, KernelEmission):
        return {
            "family": "kernel",
            "kernel_id": emission.kernel_id,
            "bandwidth": float(emission.bandwidth),
            "anchors": emission.anchors.tolist(),
            "weights": emission.weights.tolist(),
        }
    raise ModelFileError(
        f"cannot serialize emission type {type(emission).__name__}"
    )


def _emission_from_dict(payload):
    family = payload.get("family")
    if family == "np":
        return DiscreteEmissionTable(np.asarray(payload["probs"], dtype=float))
    if family == "nb":
        return NegBinEmission(
            r=np.asarray(payload["r"], dtype=float),
            p=np.asarray(payload["p"], dtype=float),
        )
    if family == "mixture":
        mask = payload.get("psi_mask")
        return MixtureEmission(
            psi=np.asarray(payload["psi"], dtype=float),
            components=[
                _component_from_dict(c) for c in payload["components"]
            ],
            psi_mask=None if mask is None else np.asarray(mask, dtype=bool),
        )
    if family == "kernel":
        return KernelEmission(
            anchors=np.asarray(payload["anchors"], dtype=float),
            bandwidth=payload["bandwidth"],
            weights=np.asarray(payload["weights"], dtype=float),
            kernel_id=payload["kernel_id"],
        )
    raise ModelFileError(f"unknown emission family {family!r}")


def model_to_dict(model):
    return {
        "schema": MODEL_SCHEMA,
        "k": model.k,
        "init": model.trans.init.tolist(),
        "q": model.trans.q.tolist(),
        "emission": _emission_to_dict(model.emission),
    }


def model_from_dict(payload):
    """Rebuild a model, re-running every constructor validation."""
    if not isinstance(payload, dict):
        raise ModelFileError("model file must hold a JSON object")
    schema = payload.get("schema")
    if schema != MODEL_SCHEMA:
        raise ModelFileError(
            f"unsupported model schema {schema!r} (expected {MODEL_SCHEMA!r})"
        )
    try:
        trans = TransitionModel(
            init=np.asarray(payload["init"], dtype=float),
            q=np.asarray(payload["q"], dtype=float),
        )
        emission = _emission_from_dict(payload["emission"])
        model = HMMModel(trans=trans, emission=emission)
    except KeyError as exc:
        raise ModelFileError(f"model file missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    if model.k != payload["k"]:
        raise ModelFileError(
            f"declared k={payload['k']} but parameters imply k={model.k}"
        )
    return model


def save_model(model, path):
    payload = json.dumps(model_to_dict(model), indent=2, sort_keys=True)
    with open(path, "w") as fh:
        fh.write(payload + "\n")


def load_model(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return model_from_dict(payload)
    except NPHMMError as exc:
        raise ModelFileError(f"{path}: {exc}") from exc


# -------------------------------------------------------------- data files

def _tokenize(line):
    return line.replace(",", " ").split()


def _looks_numeric(tokens):
    try:
        [float(t) for t in tokens]
        return True
    except ValueError:
        return False


def read_data(path):
    """Parse a data file into an :class:`ObservationSequence`.

    One observation per line: a single integer column is count data, one
    or more float columns are real-valued (vector) data. An optional
    non-numeric first line is treated as a header. Errors carry 1-based
    line numbers.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows = []
    width = None
    integer_syntax = True
    for lineno, line in enumerate(lines, start=1):
        tokens = _tokenize(line)
        if not tokens:
            continue
        if lineno == 1 and not _looks_numeric(tokens):
            continue  # header
        if not _looks_numeric(tokens):
            raise DataFileError(f"{path}:{lineno}: non-numeric value in {line!r}")
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise DataFileError(
                f"{path}:{lineno}: expected {width} column(s), got {len(tokens)}"
            )
        if any(("." in t) or ("e" in t.lower()) for t in tokens):
            integer_syntax = False
        rows.append([float(t) for t in tokens])
    if not rows:
        raise DataFileError(f"{path}: no observations found")
    values = np.asarray(rows)
    if width == 1:
        values = values[:, 0]
        if integer_syntax and np.all(values >= 0):
            return ObservationSequence(values.astype(np.int64))
    return ObservationSequence(values, kind="real")


def write_data(obs, path):
    values = obs.values if isinstance(obs, ObservationSequence) else np.asarray(obs)
    with open(path, "w") as fh:
        if values.ndim == 1:
            if np.issubdtype(values.dtype, np.integer):
                fh.write("\n".join(str(int(v)) for v in values) + "\n")
            else:
                fh.write("\n".join(repr(float(v)) for v in values) + "\n")
        else:
            for row in values:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_states(path):
    """State label file -> 0-based path (labels are 1-based on disk)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    labels = []
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        if not token:
            continue
        if lineno == 1 and not _looks_numeric([token]):
            continue
        try:
            value = int(token)
        except ValueError as exc:
            raise DataFileError(
                f"{path}:{lineno}: state label must be an integer, got {token!r}"
            ) from exc
        if value < 1:
            raise DataFileError(
                f"{path}:{lineno}: state labels are 1-based, got {value}"
            )
        labels.append(value - 1)
    if not labels:
        raise DataFileError(f"{path}: no state labels found")
    return np.asarray(labels, dtype=np.int64)


def write_states(labels, path):
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(v) + 1) for v in labels) + "\n")


# ------------------------------------------------------------ config files

def scheme_from_dict(payload):
    """RegionScheme from its JSON form (1-based state labels)."""
    from .sim import RegionScheme

    try:
        dist_map = payload["distributions"]
        k = len(dist_map)
        distributions = []
        for label in range(1, k + 1):
            entry = dist_map[str(label)]
            values = np.asarray(sorted(int(v) for v in entry), dtype=np.int64)
            probs = np.asarray([entry[str(v)] for v in values], dtype=float)
            distributions.append((values, probs))
        regions = [
            (int(state) - 1, int(length)) for state, length in payload["regions"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed region scheme: {exc}") from exc
    return RegionScheme(regions=regions, distributions=distributions)


def scheme_to_dict(scheme):
    return {
        "regions": [[state + 1, length] for state, length in scheme.regions],
        "distributions": {
            str(j + 1): {
                str(int(v)): float(p) for v, p in zip(values, probs)
            }
            for j, (values, probs) in enumerate(scheme.distributions)
        },
    }


def fit_options_from_dict(payload):
    """FitOptions from a benchmark/CLI config entry."""
    from .em import FitOptions
    from .emissions.discrete import PenaltySpec

    kw = {}
    if "family" in payload:
        kw["family"] = payload["family"]
    if "lambda" in payload or "alpha" in payload:
        kw["penalty"] = PenaltySpec(
            lam=float(payload.get("lambda", 1.0)),
            alpha=float(payload.get("alpha", 2.0)),
        )
    for src, dst in [
        ("max_iter", "max_iter"), ("tol", "tol"), ("starts", "n_starts"),
        ("seed", "seed"), ("component_family", "component_family"),
        ("components", "n_components"), ("trials", "trials"),
        ("kernel", "kernel_id"), ("bandwidth", "bandwidth"),
        ("inner_iters", "inner_iters"),
    ]:
        if src in payload:
            kw[dst] = payload[src]
    return FitOptions(**kw)


def bench_config_from_dict(payload):
    from .sim import BenchmarkConfig

    try:
        models = [
            (entry["name"], fit_options_from_dict(entry))
            for entry in payload["models"]
        ]
        kw = {
            "models": models,
            "replicates": int(payload.get("replicates", 20)),
            "seed": int(payload.get("seed", 0)),
            "decoders": tuple(payload.get("decoders", ("viterbi", "map"))),
        }
        if "scheme" in payload:
            kw["scheme"] = scheme_from_dict(payload["scheme"])
        if "model" in payload:
            kw["model"] = model_from_dict(payload["model"])
            kw["n"] = int(payload["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed benchmark config: {exc}") from exc
    return BenchmarkConfig(**kw)


def load_json_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
