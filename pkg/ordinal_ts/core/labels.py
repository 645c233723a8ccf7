"""
Ordered label space: the class domain, its present/missing partition and the
label distance that defines the target geometry of the embedding.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class UnknownClassError(ValueError):
    """Raised when a class identifier is not part of the label domain."""


class LabelDistanceKind(str, Enum):
    """Label distance variants."""
    ABSOLUTE = "absolute"
    SQUARED = "squared"
    EXP_DECIBEL = "exp_decibel"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LabelSpace:
    """
    Ordered class domain S split into present classes N and missing classes M.

    Classes are opaque strings; ``ordinals`` carries their integer positions and
    ``domain`` is always stored in increasing ordinal order.
    """
    domain: Tuple[str, ...]
    ordinals: Tuple[int, ...]
    missing: FrozenSet[str] = frozenset()
    label_distance: LabelDistanceKind = LabelDistanceKind.ABSOLUTE
    custom_table: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        """Validate the partition, the ordinals and a custom table if given."""
        if len(self.domain) != len(self.ordinals):
            raise ValueError(
                f"Got {len(self.domain)} classes but {len(self.ordinals)} ordinal positions"
            )
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"Duplicate class identifiers in domain {self.domain}")
        if any(b <= a for a, b in zip(self.ordinals, self.ordinals[1:])):
            raise ValueError(f"Ordinal positions must be strictly increasing, got {self.ordinals}")

        object.__setattr__(self, "missing", frozenset(self.missing))
        object.__setattr__(self, "label_distance", LabelDistanceKind(self.label_distance))

        unknown = self.missing - set(self.domain)
        if unknown:
            raise UnknownClassError(f"Missing classes {sorted(unknown)} are not in the domain")
        if len(self.present) < 2:
            raise ValueError(
                f"At least two present classes are required, got {list(self.present)}"
            )

        if self.label_distance is LabelDistanceKind.CUSTOM:
            if self.custom_table is None:
                raise ValueError("Custom label distance requires a table")
            table = np.array(self.custom_table, dtype=float)
            n = len(self.domain)
            if table.shape != (n, n):
                raise ValueError(f"Custom table must be {n}x{n}, got {table.shape}")
            if not np.all(np.diag(table) == 0):
                raise ValueError("Custom table must have a zero diagonal")
            if not np.array_equal(table, table.T):
                raise ValueError("Custom table must be symmetric")
            off = table[~np.eye(n, dtype=bool)]
            if np.any(off <= 0):
                raise ValueError("Custom table must be positive off the diagonal")
            table.setflags(write=False)
            object.__setattr__(self, "custom_table", table)

        object.__setattr__(self, "_index", {c: k for k, c in enumerate(self.domain)})

    @classmethod
    def from_names(
        cls,
        names: Sequence[str],
        ordinals: Optional[Sequence[int]] = None,
        missing: Iterable[str] = (),
        label_distance: LabelDistanceKind = LabelDistanceKind.ABSOLUTE,
        custom_table: Optional[np.ndarray] = None,
    ) -> "LabelSpace":
        """
        Build a label space from class names.

        Args:
            names: Class identifiers
            ordinals: Ordinal positions; defaults to 1..|S| in the given order
            missing: Classes absent from training
            label_distance: Distance kind
            custom_table: Dense |S|x|S| table for the custom kind, indexed like ``names``

        Returns:
            LabelSpace sorted by ordinal position
        """
        names = [str(n) for n in names]
        if ordinals is None:
            ordinals = list(range(1, len(names) + 1))
        if len(ordinals) != len(names):
            raise ValueError(f"Got {len(names)} names but {len(ordinals)} ordinals")

        order = sorted(range(len(names)), key=lambda k: ordinals[k])
        table = None
        if custom_table is not None:
            raw = np.asarray(custom_table, dtype=float)
            table = raw[np.ix_(order, order)]

        return cls(
            domain=tuple(names[k] for k in order),
            ordinals=tuple(int(ordinals[k]) for k in order),
            missing=frozenset(missing),
            label_distance=LabelDistanceKind(label_distance),
            custom_table=table,
        )

    @property
    def present(self) -> Tuple[str, ...]:
        """Present classes N in ordinal order."""
        return tuple(c for c in self.domain if c not in self.missing)

    @property
    def missing_ordered(self) -> Tuple[str, ...]:
        """Missing classes M in ordinal order."""
        return tuple(c for c in self.domain if c in self.missing)

    def __len__(self) -> int:
        return len(self.domain)

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        """Position of ``label`` in the domain."""
        try:
            return self._index[label]
        except KeyError:
            raise UnknownClassError(f"Class {label!r} is not in the label domain {list(self.domain)}") from None

    def ordinal(self, label: str) -> int:
        """Ordinal position of ``label``."""
        return self.ordinals[self.index(label)]

    def is_missing(self, label: str) -> bool:
        self.index(label)
        return label in self.missing

    def with_missing(self, missing: Iterable[str]) -> "LabelSpace":
        """Same domain and distance with a new present/missing partition."""
        return LabelSpace(
            domain=self.domain,
            ordinals=self.ordinals,
            missing=frozenset(missing),
            label_distance=self.label_distance,
            custom_table=self.custom_table,
        )

    def distance(self, i: str, j: str) -> float:
        """Label distance D_y between classes ``i`` and ``j``."""
        return label_distance(self, i, j)

    def distance_matrix(
        self,
        rows: Optional[Sequence[str]] = None,
        cols: Optional[Sequence[str]] = None,
    ) -> np.ndarray:
        """Matrix of D_y values, rows and columns default to the full domain."""
        rows = self.domain if rows is None else rows
        cols = self.domain if cols is None else cols
        return np.array([[label_distance(self, r, c) for c in cols] for r in rows], dtype=float)

    def to_dict(self) -> Dict[str, object]:
        """JSON-friendly description used in resolved configs."""
        payload: Dict[str, object] = {
            "classes": list(self.domain),
            "ordinals": list(self.ordinals),
            "missing": list(self.missing_ordered),
            "label_distance": self.label_distance.value,
        }
        if self.custom_table is not None:
            payload["custom_table"] = self.custom_table.tolist()
        return payload


def label_distance(space: LabelSpace, i: str, j: str) -> float:
    """
    Distance between two classes under the space's label distance.

    Args:
        space: Label space
        i: First class
        j: Second class

    Returns:
        Non-negative distance, zero iff ``i == j``
    """
    a, b = space.index(i), space.index(j)
    if a == b:
        return 0.0

    oi, oj = space.ordinals[a], space.ordinals[b]
    kind = space.label_distance
    if kind is LabelDistanceKind.ABSOLUTE:
        return float(abs(oi - oj))
    if kind is LabelDistanceKind.SQUARED:
        return float((oi - oj) ** 2)
    if kind is LabelDistanceKind.EXP_DECIBEL:
        return float(abs(10.0 ** (oi / 10.0) - 10.0 ** (oj / 10.0)))
    return float(space.custom_table[a, b])


def parse_class_spec(spec: str) -> Tuple[List[str], List[int]]:
    """
    Parse a command-line class list.

    ``"low,mid,high"`` gets ordinals 1..3; ``"low:1,mid:5,high:9"`` sets them explicitly.
    """
    names: List[str] = []
    ordinals: List[int] = []
    items = [item.strip() for item in spec.split(",") if item.strip()]
    for position, item in enumerate(items, start=1):
        if ":" in item:
            name, value = item.rsplit(":", 1)
            try:
                ordinals.append(int(value))
            except ValueError:
                raise ValueError(f"Ordinal for class {name!r} must be an integer, got {value!r}") from None
            names.append(name.strip())
        else:
            names.append(item)
            ordinals.append(position)
    if not names:
        raise ValueError("Class list is empty")
    return names, ordinals
