"""Small shared helpers: strict dataclass loading, canonical hashing, seed derivation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Any, Mapping, Type, TypeVar

from .errors import ValidationError

T = TypeVar("T")


def dataclass_from_dict(cls: Type[T], data: Mapping[str, Any], context: str = "") -> T:
    """Build a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(data, Mapping):
        raise ValidationError(f"{context or cls.__name__}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValidationError(f"{context or cls.__name__}: unknown key(s) {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValidationError(f"{context or cls.__name__}: {exc}") from exc


def canonical_json(obj: Any) -> str:
    """Deterministic JSON for hashing: sorted keys, no whitespace."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def stable_hash(obj: Any) -> str:
    """sha256 hex digest of the canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def derive_seed(*parts: Any) -> int:
    """A reproducible 31-bit seed from arbitrary labeled parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF
