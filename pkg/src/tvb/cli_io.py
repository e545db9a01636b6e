"""Dataset ingestion, run configuration and result emission for the CLI."""

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bmlr import BmlrDataset
from .errors import SchemaError


class InputError(SchemaError):
    """Unreadable or missing input file."""

    category = "io"


# ---------------------------------------------------------------------------
# datasets


def load_faithful():
    """The bundled Old Faithful data: 272 rows of (eruptions, waiting)."""
    with resources.files("tvb").joinpath("data/faithful.csv").open() as fh:
        return read_table(fh)[1]


def read_table(source, delimiter=","):
    """Read a delimited numeric table with a header row.

    Returns ``(header, values)``. Raises SchemaError on an empty, ragged or
    non-finite table.
    """
    lines = [ln.strip() for ln in source if ln.strip()]
    if not lines:
        raise SchemaError("input is empty")
    header = [h.strip() for h in lines[0].split(delimiter)]
    rows = []
    for n, ln in enumerate(lines[1:], start=2):
        cells = ln.split(delimiter)
        if len(cells) != len(header):
            raise SchemaError(f"line {n}: expected {len(header)} fields, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise SchemaError(f"line {n}: {exc}") from None
    if not rows:
        raise SchemaError("input has a header but no rows")
    values = np.array(rows, dtype=float)
    if not np.isfinite(values).all():
        raise SchemaError("input contains non-finite values")
    return header, values


def read_table_file(path, delimiter=","):
    try:
        with open(path) as fh:
            return read_table(fh, delimiter)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def file_digest(path):
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def grouped_dataset(header, values, id_column="id", response_column="y"):
    """Split a long table into BMLR units by its dataset-id column.

    Every other column is a covariate. Units appear in order of first
    occurrence of their id.
    """
    for name in (id_column, response_column):
        if name not in header:
            raise SchemaError(f"column {name!r} not found; header is {header}")
    i_id, i_y = header.index(id_column), header.index(response_column)
    cov = [j for j in range(len(header)) if j not in (i_id, i_y)]
    if not cov:
        raise SchemaError("no covariate columns")
    ids = values[:, i_id]
    _, first = np.unique(ids, return_index=True)
    order = ids[np.sort(first)]
    ys, Xs = [], []
    for u in order:
        rows = values[ids == u]
        ys.append(rows[:, i_y])
        Xs.append(rows[:, cov])
    return BmlrDataset(ys, Xs)


def pooled_noise_precision(dataset):
    """Pooled precision of per-unit least-squares residuals.

    Units with fewer observations than covariates are skipped.
    """
    rss, dof = 0.0, 0
    for y, X in zip(dataset.responses, dataset.designs):
        J, p = X.shape
        if J <= p:
            continue
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        res = y - X @ coef
        rss += float(res @ res)
        dof += J - p
    if dof == 0 or rss <= 0.0:
        raise SchemaError("cannot estimate the noise precision; set 'lam' in the config")
    return dof / rss


# ---------------------------------------------------------------------------
# configuration

_COMMON = {"seed": int, "workers": int, "out": str}
_FIT = {
    "K": int,
    "omega": float,
    "tol": float,
    "max_iter": int,
    "init": str,
    "prior": dict,
}
_GMM_FIT = {**_FIT, "strict_paper_eq13": bool}
_BMLR_FIT = {**_FIT, "lam": float, "id_column": str, "response_column": str}
_CAL = {
    "model": str,
    "K": int,
    "tol": float,
    "max_iter": int,
    "prior": dict,
    "lam": float,
    "id_column": str,
    "response_column": str,
    "strict_paper_eq13": bool,
    "grid": str,
    "B": int,
    "alpha": float,
    "shared_split": bool,
    "max_fail_frac": float,
    "table": str,
}
_SEQ = {"mode": str, "functional": str, "seq": dict}
SCHEMAS = {
    "fit-gmm": {**_COMMON, **_GMM_FIT},
    "fit-bmlr": {**_COMMON, **_BMLR_FIT},
    "build-table": {**_COMMON, **_CAL},
    "calibrate": {**_COMMON, **_CAL, **_SEQ},
    "analyze-faithful": {**_COMMON, "grid": str, "B": int, "alpha": float, "mode": str, "shared_split": bool, "seq": dict},
    "simulate": {
        **_COMMON,
        "design": str,
        "N": int,
        "J": int,
        "pi": float,
        "mu1": list,
        "mu2": list,
        "Sigma": list,
        "tau": list,
        "snr": float,
        "snr_norm_convention": str,
        "replications": int,
        "methods": list,
        "B": int,
        "grid": str,
        "alpha": float,
        "shared_split": bool,
        "seq": dict,
    },
}
_PRIOR_KEYS = {
    "gmm": {"alpha0", "m0", "beta0", "W0", "nu0"},
    "bmlr": {"alpha0", "a0", "b0", "lam"},
}
_SEQ_KEYS = {"c", "max_iter", "eps", "delta", "eta0"}


def load_config(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return cfg


def validate_config(command, cfg):
    """Check keys and value types against the command schema.

    Unknown keys are rejected. Integers are accepted where floats are
    expected. Returns a new dict.
    """
    schema = SCHEMAS[command]
    unknown = sorted(set(cfg) - set(schema))
    if unknown:
        raise SchemaError(f"unknown config keys for {command}: {', '.join(unknown)}")
    out = {}
    for key, value in cfg.items():
        want = schema[key]
        if value is None:
            continue
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if want is int and isinstance(value, bool) or not isinstance(value, want):
            raise SchemaError(f"config key {key!r} must be of type {want.__name__}")
        out[key] = value
    if "prior" in out:
        model = "bmlr" if command == "fit-bmlr" else out.get("model", "gmm")
        bad = sorted(set(out["prior"]) - _PRIOR_KEYS[model])
        if bad:
            raise SchemaError(f"unknown prior keys: {', '.join(bad)}")
    if "seq" in out:
        bad = sorted(set(out["seq"]) - _SEQ_KEYS)
        if bad:
            raise SchemaError(f"unknown seq keys: {', '.join(bad)}")
    return out


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# emission


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def canonical_json(obj, indent=None):
    return json.dumps(_plain(obj), sort_keys=True, indent=indent)


_NOT_RESULT = ("out", "table", "workers")


def provenance(command, cfg, seeds, inputs=None):
    """Everything needed to rerun a command: version, resolved config, seeds, input digests.

    Output paths and the worker count do not change results and are left out,
    so reruns into different files stay byte-identical.
    """
    cfg = {k: v for k, v in cfg.items() if k not in _NOT_RESULT}
    return {
        "command": command,
        "version": __version__,
        "config": _plain(cfg),
        "config_hash": config_hash(cfg),
        "seeds": _plain(seeds),
        "inputs": inputs or {},
    }


def write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from None


def emit(payload, out=None):
    """Write ``payload`` as indented JSON to ``out``, or return it when ``out`` is None."""
    text = canonical_json(payload, indent=2) + "\n"
    if out is not None:
        write_text(out, text)
    return text
