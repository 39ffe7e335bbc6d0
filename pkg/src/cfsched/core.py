"""Domain types, instance validation and the PFAM family file format.

Users are 0-based throughout: user ``i`` here is user ``i + 1`` in the usual
1-based ``[n]`` notation. A partition is stored as its assignment column
(``assignment[i]`` is the slot of user ``i``), so decoding is a table lookup.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from cfsched.errors import DimensionMismatch, InvalidParams, MalformedFile

__all__ = [
    "ActivityPattern",
    "CodeParams",
    "FeedbackMessage",
    "InvalidParams",
    "MalformedFile",
    "Partition",
    "PartitionFamily",
    "Schedule",
    "deserialize_family",
    "entry_width",
    "serialize_family",
    "validate",
]


@dataclass(frozen=True)
class CodeParams:
    """A scheduling instance: ``k`` of ``n`` users into ``b`` slots, at most ``m`` per slot."""

    n: int
    k: int
    b: int
    m: int = 1

    def __post_init__(self):
        validate(self)

    @property
    def collision_free(self) -> bool:
        return self.m == 1


def validate(params: CodeParams) -> None:
    """Raise :class:`InvalidParams` naming the first violated constraint."""
    n, k, b, m = params.n, params.k, params.b, params.m
    for name, value in (("n", n), ("k", k), ("b", b), ("m", m)):
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
            raise InvalidParams(f"{name} must be an integer, got {value!r}")
    if k < 1:
        raise InvalidParams(f"k<1 (k={k})")
    if k > n:
        raise InvalidParams(f"k>n (k={k}, n={n})")
    if b < 1:
        raise InvalidParams(f"b<1 (b={b})")
    if m < 1:
        raise InvalidParams(f"m<1 (m={m})")
    if k > m * b:
        raise InvalidParams(f"k>m·b (k={k}, m·b={m * b}): no schedule can exist")


@dataclass(frozen=True)
class ActivityPattern:
    """A set of ``k`` active users, kept as a strictly increasing tuple."""

    users: tuple[int, ...]
    n: int | None = None

    def __post_init__(self):
        users = tuple(int(u) for u in self.users)
        if any(a >= b for a, b in zip(users, users[1:])):
            users = tuple(sorted(set(users)))
            if len(users) != len(self.users):
                raise InvalidParams(f"duplicate users in pattern {tuple(self.users)}")
        if users and users[0] < 0:
            raise InvalidParams(f"negative user index {users[0]}")
        if self.n is not None and users and users[-1] >= self.n:
            raise InvalidParams(f"user {users[-1]} out of range for n={self.n}")
        object.__setattr__(self, "users", users)

    @classmethod
    def parse(cls, text: str, n: int | None = None) -> "ActivityPattern":
        """Parse comma-separated 0-based indices, e.g. ``"1,3"``."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        try:
            users = [int(p) for p in parts]
        except ValueError as exc:
            raise InvalidParams(f"cannot parse pattern {text!r}") from exc
        return cls(tuple(users), n)

    @property
    def k(self) -> int:
        return len(self.users)

    def __iter__(self):
        return iter(self.users)

    def __len__(self):
        return len(self.users)

    def __str__(self):
        return ",".join(map(str, self.users))


@dataclass(frozen=True)
class Partition:
    """A b-partition of ``[0, n)`` given by the slot of every user.

    Empty slots are allowed.
    """

    assignment: tuple[int, ...]
    b: int

    def __post_init__(self):
        assignment = tuple(int(s) for s in self.assignment)
        if self.b < 1:
            raise InvalidParams(f"b<1 (b={self.b})")
        if not assignment:
            raise InvalidParams("partition must cover at least one user")
        lo, hi = min(assignment), max(assignment)
        if lo < 0 or hi >= self.b:
            raise InvalidParams(f"slot index out of range [0,{self.b}): {lo if lo < 0 else hi}")
        object.__setattr__(self, "assignment", assignment)

    @classmethod
    def from_subsets(cls, subsets: Sequence[Iterable[int]], n: int) -> "Partition":
        slot = [-1] * n
        for j, subset in enumerate(subsets):
            for i in subset:
                if slot[i] != -1:
                    raise InvalidParams(f"user {i} appears in two subsets")
                slot[i] = j
        if -1 in slot:
            raise InvalidParams(f"user {slot.index(-1)} is in no subset")
        return cls(tuple(slot), len(subsets))

    @property
    def n(self) -> int:
        return len(self.assignment)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.asarray(self.assignment, dtype=np.int64)
        a.setflags(write=False)
        return a

    def subsets(self) -> list[frozenset[int]]:
        out: list[set[int]] = [set() for _ in range(self.b)]
        for i, j in enumerate(self.assignment):
            out[j].add(i)
        return [frozenset(s) for s in out]

    def sizes(self) -> list[int]:
        return np.bincount(self.array, minlength=self.b).tolist()

    def slot(self, user: int) -> int:
        if not 0 <= user < self.n:
            raise DimensionMismatch(f"user {user} outside [0,{self.n})")
        return self.assignment[user]


@dataclass(frozen=True)
class PartitionFamily:
    """The ordered codebook shared by the base station and every user."""

    partitions: tuple[Partition, ...]

    def __post_init__(self):
        parts = tuple(self.partitions)
        if not parts:
            raise InvalidParams("family must contain at least one partition (T>=1)")
        n, b = parts[0].n, parts[0].b
        for t, p in enumerate(parts):
            if p.n != n or p.b != b:
                raise InvalidParams(
                    f"partition {t} has (n={p.n}, b={p.b}), expected (n={n}, b={b})"
                )
        object.__setattr__(self, "partitions", parts)

    @classmethod
    def from_matrix(cls, matrix, b: int) -> "PartitionFamily":
        """Build from a ``T x n`` array of slot indices."""
        rows = np.asarray(matrix)
        if rows.ndim != 2:
            raise InvalidParams("family matrix must be 2-D (T x n)")
        fam = cls(tuple(Partition(tuple(row.tolist()), b) for row in rows))
        return fam

    @property
    def T(self) -> int:
        return len(self.partitions)

    @property
    def n(self) -> int:
        return self.partitions[0].n

    @property
    def b(self) -> int:
        return self.partitions[0].b

    @cached_property
    def matrix(self) -> np.ndarray:
        a = np.array([p.assignment for p in self.partitions], dtype=np.int64)
        a.setflags(write=False)
        return a

    def __len__(self):
        return self.T

    def __getitem__(self, t):
        return self.partitions[t]

    def __iter__(self):
        return iter(self.partitions)


@dataclass(frozen=True)
class Schedule:
    """Slot chosen for each active user after decoding."""

    slot_of: Mapping[int, int] = field(default_factory=dict)

    def load(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for s in self.slot_of.values():
            counts[s] = counts.get(s, 0) + 1
        return counts

    def is_valid(self, m: int = 1) -> bool:
        return all(c <= m for c in self.load().values())


@dataclass(frozen=True)
class FeedbackMessage:
    index: int
    T: int | None = None

    def __post_init__(self):
        if self.index < 0 or (self.T is not None and self.index >= self.T):
            raise InvalidParams(f"feedback index {self.index} outside [0,{self.T})")


# ---------------------------------------------------------------------------
# PFAM binary format

MAGIC = b"PFAM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBBQIIB")
_DTYPES = {1: "<u1", 2: "<u2", 4: "<u4"}


def entry_width(b: int) -> int:
    """Smallest entry width in bytes (1, 2 or 4) that can hold ``b - 1``."""
    top = b - 1
    if top < 1 << 8:
        return 1
    if top < 1 << 16:
        return 2
    if top < 1 << 32:
        return 4
    raise InvalidParams(f"b={b} does not fit the 32-bit entry width")


def serialize_family(family: PartitionFamily) -> bytes:
    if family.T >= 1 << 32:
        raise InvalidParams(f"T={family.T} exceeds the 32-bit family size cap")
    width = entry_width(family.b)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, family.n, family.b, family.T, width)
    body = family.matrix.astype(_DTYPES[width]).tobytes(order="C")
    return header + body


def deserialize_family(data: bytes) -> PartitionFamily:
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise MalformedFile(f"file too short for header ({len(data)} < {_HEADER.size} bytes)")
    magic, version, flags, n, b, T, width = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFile(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedFile(f"unsupported format version {version}")
    if flags != 0:
        raise MalformedFile(f"unknown flags 0x{flags:02x}")
    if width not in _DTYPES:
        raise MalformedFile(f"bad entry width {width * 8} bits")
    if n < 1 or b < 1 or T < 1:
        raise MalformedFile(f"degenerate header n={n} b={b} T={T}")
    expected = T * n * width
    body = data[_HEADER.size :]
    if len(body) != expected:
        raise MalformedFile(f"body is {len(body)} bytes, header implies {expected}")
    matrix = np.frombuffer(body, dtype=_DTYPES[width]).reshape(T, n)
    if matrix.size and int(matrix.max()) >= b:
        raise MalformedFile(f"slot entry {int(matrix.max())} >= b={b}")
    return PartitionFamily.from_matrix(matrix.astype(np.int64), b)
