"""Versioned JSON artifacts and plain SVG export."""

import json

import numpy as np


class SchemaError(ValueError):
    """Artifact has an unexpected or missing schema version."""


def check_version(doc, expected):
    got = doc.get("version") if isinstance(doc, dict) else None
    if got != expected:
        raise SchemaError(f"expected schema {expected!r}, got {got!r}")


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc):
    """Deterministic JSON text (sorted keys, fixed float repr)."""
    return json.dumps(doc, sort_keys=True, default=_default, indent=1) + "\n"


def save(path, doc):
    with open(path, "w") as fh:
        fh.write(dumps(doc))


def load(path, expected=None):
    with open(path) as fh:
        doc = json.load(fh)
    if expected is not None:
        check_version(doc, expected)
    return doc


def complex_array(re, im):
    return np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)


def split_complex(z):
    z = np.asarray(z, dtype=complex)
    return {"re": z.real.tolist(), "im": z.imag.tolist()}
