"""Manifests, feature files and configuration."""

from dataclasses import asdict, dataclass, fields
import json
import math
import os
from pathlib import Path

import numpy as np

from .exceptions import FeatureFileError
from .features import FeatureVector

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SEED_ENV = "SCRIPTRACE_SEED"
STYLES = ("slow", "medium", "fast")
SPLITS = ("train", "val", "test")


@dataclass
class ManifestRecord:
    sample_id: str
    writer_id: str
    style: str
    split: str = None
    parent_page_id: str = None
    variant_index: int = 0
    image_path: str = None
    elapsed_seconds: float = None
    half: str = None

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.elapsed_seconds is not None and not self.elapsed_seconds > 0:
            raise ValueError("elapsed_seconds must be positive")


def write_manifest(records, path):
    seen = set()
    with open(path, "w") as fh:
        for rec in records:
            if rec.sample_id in seen:
                raise ValueError(f"duplicate sample id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_manifest(path):
    names = {f.name for f in fields(ManifestRecord)}
    out, seen = [], set()
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                unknown = set(raw) - names
                if unknown:
                    raise ValueError(f"unknown fields {sorted(unknown)}")
                rec = ManifestRecord(**raw)
            except (ValueError, TypeError) as exc:
                raise FeatureFileError(f"bad manifest record: {exc}", n) from exc
            if rec.sample_id in seen:
                raise FeatureFileError(f"duplicate sample id {rec.sample_id!r}", n)
            seen.add(rec.sample_id)
            out.append(rec)
    return out


# ---------------------------------------------------------------------------
# feature files


@dataclass
class FeatureFileRecord:
    sample_id: str
    patch_id: str
    family: str
    dim: int
    values: list

    def to_vector(self):
        vid = self.sample_id if self.patch_id == "page" else f"{self.sample_id}/{self.patch_id}"
        return FeatureVector(vid, self.family, np.asarray(self.values, dtype=float))


def write_features(records, path):
    """Write ``FeatureFileRecord`` objects (or ``(sample_id, patch_id,
    FeatureVector)`` triples) as JSON lines."""
    family = dim = None
    with open(path, "w") as fh:
        for rec in records:
            if not isinstance(rec, FeatureFileRecord):
                sid, pid, vec = rec
                rec = FeatureFileRecord(sid, pid, vec.family, vec.dim, np.asarray(vec.values).tolist())
            family = family or rec.family
            dim = dim or rec.dim
            if rec.family != family or rec.dim != dim:
                raise ValueError("all records of one feature file must share family and dim")
            fh.write(json.dumps(asdict(rec)) + "\n")


def read_features(path, unit_norm=False, known_ids=None):
    """Parse and validate a feature file.

    Parameters
    ----------
    unit_norm : bool
        Rescale every vector to unit Euclidean norm (zero vectors are kept).
    known_ids : iterable of str, optional
        Manifest sample ids; records naming any other sample are rejected.
    """
    known = set(known_ids) if known_ids is not None else None
    out = []
    family = dim = None
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FeatureFileError(f"invalid JSON: {exc.msg}", n) from None
            try:
                rec = FeatureFileRecord(
                    str(raw["sample_id"]), str(raw.get("patch_id", "page")),
                    str(raw["family"]), int(raw["dim"]), raw["values"],
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FeatureFileError(f"malformed record: {exc}", n) from None
            vals = np.asarray(rec.values, dtype=float)
            label = f"record {rec.sample_id}/{rec.patch_id}"
            if vals.ndim != 1 or vals.size != rec.dim:
                raise FeatureFileError(f"{label} declares dim {rec.dim} but has {vals.size} values", n)
            if not np.all(np.isfinite(vals)):
                raise FeatureFileError(f"{label} has non-finite values", n)
            family = family or rec.family
            dim = dim if dim is not None else rec.dim
            if rec.family != family or rec.dim != dim:
                raise FeatureFileError(
                    f"{label} has family/dim {rec.family}/{rec.dim}, file uses {family}/{dim}", n
                )
            if known is not None and rec.sample_id not in known:
                raise FeatureFileError(f"{label} names unknown sample id", n)
            if unit_norm:
                norm = float(np.linalg.norm(vals))
                if norm > 0:
                    vals = vals / norm
            rec.values = vals
            out.append(rec)
    return out


def ingest_features(path, unit_norm=False, known_ids=None):
    return [r.to_vector() for r in read_features(path, unit_norm, known_ids)]


# ---------------------------------------------------------------------------
# configuration


def load_config(path=None):
    """Read a TOML or JSON configuration file (``{}`` when ``path`` is None)."""
    if path is None:
        return {}
    p = Path(path)
    if p.suffix.lower() == ".toml":
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p) as fh:
        return json.load(fh)


def resolve_seed(seed):
    """The ``SCRIPTRACE_SEED`` environment variable overrides ``seed``."""
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return int(env)
    return int(seed)


def json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def format_float(x, digits=6):
    """Stable text form for report files."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"
