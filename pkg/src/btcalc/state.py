"""Finite world models, predicates and the region (state-set) algebra.

States are packed into dense integer indices using mixed radix, the first
declared variable being the least significant digit.  A :class:`Region` is a
bitset over those indices stored in a Python ``int``, so intersections and
unions are word-parallel.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

MAX_STATES = 1 << 24
MAX_ENUM_VALUES = 16

Value = Union[bool, str]
State = int


class ModelError(ValueError):
    """Malformed model declaration."""


class EnumerationRefused(ModelError):
    """The state space is too large for exhaustive analysis."""


class NameResolutionError(ModelError):
    """A predicate or action refers to an unknown variable or value."""


class ModelMismatch(ValueError):
    """Two regions over different models were combined."""


@dataclass(frozen=True, slots=True)
class Variable:
    name: str
    values: tuple[Value, ...] = (False, True)

    def __post_init__(self) -> None:
        if not self.values:
            raise ModelError(f"variable {self.name!r} has an empty domain")
        if len(set(self.values)) != len(self.values):
            raise ModelError(f"variable {self.name!r} has duplicate values")
        if not self.is_bool and len(self.values) > MAX_ENUM_VALUES:
            raise ModelError(
                f"enum {self.name!r} has {len(self.values)} values (max {MAX_ENUM_VALUES})"
            )

    @classmethod
    def boolean(cls, name: str) -> "Variable":
        return cls(name, (False, True))

    @classmethod
    def enum(cls, name: str, values: Iterable[str]) -> "Variable":
        return cls(name, tuple(values))

    @property
    def is_bool(self) -> bool:
        return self.values == (False, True)

    @property
    def size(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# predicates


class Predicate:
    """Boolean expression over model variables.

    ``region`` gives the set-level meaning and ``evaluate`` the pointwise one;
    the two are computed independently so either can serve as an oracle for
    the other.
    """

    __slots__ = ()

    def region(self, model: "WorldModel") -> "Region":
        return Region(model, self._bits(model))

    def _bits(self, model: "WorldModel") -> int:
        raise NotImplementedError

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        raise NotImplementedError

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def __and__(self, other: "Predicate") -> "Predicate":
        return And((self, other))

    def __or__(self, other: "Predicate") -> "Predicate":
        return Or((self, other))

    def __invert__(self) -> "Predicate":
        return Not(self)

    def __str__(self) -> str:
        return self.to_text()

    def to_text(self, prec: int = 0) -> str:
        raise NotImplementedError


@dataclass(frozen=True, slots=True)
class Const(Predicate):
    value: bool

    def _bits(self, model: "WorldModel") -> int:
        return model.full_bits if self.value else 0

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return self.value

    def variables(self) -> frozenset[str]:
        return frozenset()

    def to_text(self, prec: int = 0) -> str:
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True, slots=True)
class Var(Predicate):
    """A boolean variable used as a proposition."""

    name: str

    def _bits(self, model: "WorldModel") -> int:
        var = model.variable(self.name)
        if not var.is_bool:
            raise NameResolutionError(
                f"enum variable {self.name!r} used as a proposition; compare it with '=='"
            )
        return model.literal_bits(self.name, True)

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return assignment[self.name] is True

    def variables(self) -> frozenset[str]:
        return frozenset((self.name,))

    def to_text(self, prec: int = 0) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Eq(Predicate):
    name: str
    value: Value

    def _bits(self, model: "WorldModel") -> int:
        return model.literal_bits(self.name, self.value)

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return assignment[self.name] == self.value and type(assignment[self.name]) is type(self.value)

    def variables(self) -> frozenset[str]:
        return frozenset((self.name,))

    def to_text(self, prec: int = 0) -> str:
        value = ("true" if self.value else "false") if isinstance(self.value, bool) else self.value
        text = f"{self.name} == {value}"
        return f"({text})" if prec > 3 else text


@dataclass(frozen=True, slots=True)
class Not(Predicate):
    arg: Predicate

    def _bits(self, model: "WorldModel") -> int:
        return model.full_bits & ~self.arg._bits(model)

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return not self.arg.evaluate(assignment)

    def variables(self) -> frozenset[str]:
        return self.arg.variables()

    def to_text(self, prec: int = 0) -> str:
        return "!" + self.arg.to_text(4)


@dataclass(frozen=True, slots=True)
class And(Predicate):
    args: tuple[Predicate, ...]

    def _bits(self, model: "WorldModel") -> int:
        bits = model.full_bits
        for arg in self.args:
            bits &= arg._bits(model)
        return bits

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return all(arg.evaluate(assignment) for arg in self.args)

    def variables(self) -> frozenset[str]:
        return frozenset().union(*(a.variables() for a in self.args))

    def to_text(self, prec: int = 0) -> str:
        if not self.args:
            return "true"
        text = " && ".join(arg.to_text(3) for arg in self.args)
        return f"({text})" if prec > 2 else text


@dataclass(frozen=True, slots=True)
class Or(Predicate):
    args: tuple[Predicate, ...]

    def _bits(self, model: "WorldModel") -> int:
        bits = 0
        for arg in self.args:
            bits |= arg._bits(model)
        return bits

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return any(arg.evaluate(assignment) for arg in self.args)

    def variables(self) -> frozenset[str]:
        return frozenset().union(*(a.variables() for a in self.args))

    def to_text(self, prec: int = 0) -> str:
        if not self.args:
            return "false"
        text = " || ".join(arg.to_text(2) for arg in self.args)
        return f"({text})" if prec > 1 else text


def pred_values(model: "WorldModel", pred: Predicate) -> None:
    """Check that literals name existing values and propositions are boolean."""
    if isinstance(pred, Var):
        if not model.variable(pred.name).is_bool:
            raise NameResolutionError(
                f"enum variable {pred.name!r} used as a proposition; compare it with '=='"
            )
    elif isinstance(pred, Eq):
        model.value_index(pred.name, pred.value)
    elif isinstance(pred, Not):
        pred_values(model, pred.arg)
    elif isinstance(pred, (And, Or)):
        for arg in pred.args:
            pred_values(model, arg)


def conj(*preds: Predicate) -> Predicate:
    """Conjunction; the empty conjunction is ``true``."""
    if not preds:
        return TRUE
    if len(preds) == 1:
        return preds[0]
    return And(tuple(preds))


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True, slots=True)
class Assign:
    """``var := value`` or ``var := if condition then value else otherwise``."""

    var: str
    value: Value
    condition: Predicate | None = None
    otherwise: Value | None = None


@dataclass(frozen=True)
class ActionSpec:
    """A deterministic, total action: conditional assignments applied at once.

    ``preconditions`` and ``post`` are only descriptive for the state model;
    synthesis and the DSL use them.
    """

    id: str
    assignments: tuple[Assign, ...] = ()
    preconditions: tuple[Predicate, ...] = ()
    post: Predicate | None = None

    def apply(self, assignment: Mapping[str, Value]) -> dict[str, Value]:
        out = dict(assignment)
        for a in self.assignments:
            if a.condition is None or a.condition.evaluate(assignment):
                out[a.var] = a.value
            else:
                out[a.var] = a.otherwise
        return out


# ---------------------------------------------------------------------------
# model


class WorldModel:
    """Ordered variables plus named actions over the product state space."""

    def __init__(
        self,
        variables: Sequence[Variable],
        actions: Iterable[ActionSpec] = (),
        name: str = "model",
    ) -> None:
        self.name = name
        self.variables: tuple[Variable, ...] = tuple(variables)
        self._index: dict[str, int] = {}
        for i, var in enumerate(self.variables):
            if var.name in self._index:
                raise ModelError(f"duplicate variable {var.name!r}")
            self._index[var.name] = i
        strides = []
        size = 1
        for var in self.variables:
            strides.append(size)
            size *= var.size
        self.strides: tuple[int, ...] = tuple(strides)
        self.size = size
        self._full_bits: int | None = None
        self.actions: dict[str, ActionSpec] = {}
        for action in actions:
            self._check_action(action)
            if action.id in self.actions:
                raise ModelError(f"duplicate action {action.id!r}")
            self.actions[action.id] = action
        self._literal_cache: dict[tuple[str, Value], int] = {}
        self._succ_cache: dict[str, np.ndarray] = {}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorldModel):
            return NotImplemented
        return self is other or (
            self.variables == other.variables and self.actions == other.actions
        )

    def __hash__(self) -> int:
        return hash(self.variables)

    def __repr__(self) -> str:
        return f"WorldModel({self.name!r}, {len(self.variables)} vars, {self.size} states)"

    def with_actions(self, actions: Iterable[ActionSpec]) -> "WorldModel":
        """Copy of this model with some actions added or replaced."""
        merged = dict(self.actions)
        for action in actions:
            merged[action.id] = action
        return WorldModel(self.variables, merged.values(), self.name)

    # -- lookup ---------------------------------------------------------

    def variable(self, name: str) -> Variable:
        try:
            return self.variables[self._index[name]]
        except KeyError:
            raise NameResolutionError(f"unknown variable {name!r}") from None

    def value_index(self, name: str, value: Value) -> int:
        var = self.variable(name)
        for i, v in enumerate(var.values):
            if v == value and type(v) is type(value):
                return i
        raise NameResolutionError(f"{value!r} is not a value of {name!r}")

    def _check_action(self, action: ActionSpec) -> None:
        seen = set()
        for a in action.assignments:
            if a.var in seen:
                raise ModelError(f"action {action.id!r} assigns {a.var!r} twice")
            seen.add(a.var)
            self.value_index(a.var, a.value)
            if a.condition is not None:
                self._check_names(a.condition)
                self.value_index(a.var, a.otherwise)
        for pred in action.preconditions:
            self._check_names(pred)
        if action.post is not None:
            self._check_names(action.post)

    def _check_names(self, pred: Predicate) -> None:
        for name in pred.variables():
            self.variable(name)
        pred_values(self, pred)

    # -- packing --------------------------------------------------------

    def pack(self, assignment: Mapping[str, Value]) -> State:
        index = 0
        for var, stride in zip(self.variables, self.strides):
            if var.name not in assignment:
                raise NameResolutionError(f"assignment misses variable {var.name!r}")
            index += self.value_index(var.name, assignment[var.name]) * stride
        extra = set(assignment) - set(self._index)
        if extra:
            raise NameResolutionError(f"unknown variables {sorted(extra)}")
        return index

    def unpack(self, state: State) -> dict[str, Value]:
        if not 0 <= state < self.size:
            raise ValueError(f"state index {state} out of range")
        out = {}
        for var in self.variables:
            state, digit = divmod(state, var.size)
            out[var.name] = var.values[digit]
        return out

    def states(self) -> range:
        self.require_enumerable()
        return range(self.size)

    def require_enumerable(self) -> None:
        if self.size > MAX_STATES:
            raise EnumerationRefused(
                f"model has {self.size} states, exhaustive analysis is limited to {MAX_STATES}"
            )

    # -- regions --------------------------------------------------------

    @property
    def full_bits(self) -> int:
        if self._full_bits is None:
            self.require_enumerable()
            self._full_bits = (1 << self.size) - 1
        return self._full_bits

    @property
    def full(self) -> "Region":
        return Region(self, self.full_bits)

    @property
    def empty(self) -> "Region":
        return Region(self, 0)

    def literal_bits(self, name: str, value: Value) -> int:
        key = (name, value)
        cached = self._literal_cache.get(key)
        if cached is not None:
            return cached
        self.require_enumerable()
        i = self._index.get(name)
        if i is None:
            raise NameResolutionError(f"unknown variable {name!r}")
        digit = self.value_index(name, value)
        stride = self.strides[i]
        period = stride * self.variables[i].size
        block = ((1 << stride) - 1) << (digit * stride)
        reps = self.size // period
        repeat = ((1 << (period * reps)) - 1) // ((1 << period) - 1)
        bits = block * repeat
        self._literal_cache[key] = bits
        return bits

    def region(self, pred: Predicate) -> "Region":
        return pred.region(self)

    def region_of(self, states: Iterable[State]) -> "Region":
        bits = 0
        for s in states:
            bits |= 1 << s
        return Region(self, bits)

    def digits(self, name: str) -> np.ndarray:
        i = self._index[name]
        idx = np.arange(self.size, dtype=np.int64)
        return (idx // self.strides[i]) % self.variables[i].size

    # -- transitions ----------------------------------------------------

    def successors(self, action_id: str) -> np.ndarray:
        """Successor index of every state under ``action_id``."""
        table = self._succ_cache.get(action_id)
        if table is not None:
            return table
        self.require_enumerable()
        try:
            action = self.actions[action_id]
        except KeyError:
            raise NameResolutionError(f"unknown action {action_id!r}") from None
        idx = np.arange(self.size, dtype=np.int64)
        new = idx.copy()
        for a in action.assignments:
            i = self._index[a.var]
            stride = self.strides[i]
            old_digit = (idx // stride) % self.variables[i].size
            then_digit = self.value_index(a.var, a.value)
            if a.condition is None:
                new_digit = np.full(self.size, then_digit, dtype=np.int64)
            else:
                mask = a.condition.region(self).to_array()
                else_digit = self.value_index(a.var, a.otherwise)
                new_digit = np.where(mask, then_digit, else_digit)
            new += (new_digit - old_digit) * stride
        new.setflags(write=False)
        self._succ_cache[action_id] = new
        return new

    def apply(self, action_id: str, state: State) -> State:
        return int(self.successors(action_id)[state])


def enumerate_states(model: WorldModel) -> list[dict[str, Value]]:
    """All assignments, in packed-index order."""
    return [model.unpack(s) for s in model.states()]


def region_from_predicate(model: WorldModel, pred: Predicate) -> "Region":
    return pred.region(model)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True, slots=True, eq=False)
class Region:
    model: WorldModel
    bits: int = field(default=0)

    def _check(self, other: "Region") -> None:
        if self.model is not other.model and self.model != other.model:
            raise ModelMismatch("regions belong to different models")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Region):
            return NotImplemented
        self._check(other)
        return self.bits == other.bits

    def __hash__(self) -> int:
        return hash(self.bits)

    def __and__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.model, self.bits & other.bits)

    def __or__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.model, self.bits | other.bits)

    def __sub__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.model, self.bits & ~other.bits)

    def __invert__(self) -> "Region":
        return Region(self.model, self.model.full_bits & ~self.bits)

    def __contains__(self, state: object) -> bool:
        return isinstance(state, int) and (self.bits >> state) & 1 == 1

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __bool__(self) -> bool:
        return self.bits != 0

    def __iter__(self) -> Iterator[State]:
        bits = self.bits
        while bits:
            low = bits & -bits
            yield low.bit_length() - 1
            bits ^= low

    def __le__(self, other: "Region") -> bool:
        return self.issubset(other)

    def __repr__(self) -> str:
        return f"Region({len(self)}/{self.model.size} states)"

    def issubset(self, other: "Region") -> bool:
        self._check(other)
        return self.bits & ~other.bits == 0

    def isdisjoint(self, other: "Region") -> bool:
        self._check(other)
        return self.bits & other.bits == 0

    def first(self) -> State | None:
        if not self.bits:
            return None
        return (self.bits & -self.bits).bit_length() - 1

    def to_array(self) -> np.ndarray:
        n = self.model.size
        raw = self.bits.to_bytes((n + 7) // 8, "little")
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n].astype(bool)

    @classmethod
    def from_array(cls, model: WorldModel, mask: np.ndarray) -> "Region":
        packed = np.packbits(np.asarray(mask, dtype=bool), bitorder="little")
        return cls(model, int.from_bytes(packed.tobytes(), "little"))


_OPS = {
    "intersect": operator.and_,
    "union": operator.or_,
    "difference": operator.sub,
}


def region_algebra(a: Region, b: Region | None, op: str) -> Region:
    """Apply a named set operation; ``complement`` ignores ``b``."""
    if op == "complement":
        if b is not None:
            a._check(b)
        return ~a
    try:
        return _OPS[op](a, b)
    except KeyError:
        raise ValueError(f"unknown region operation {op!r}") from None


def union_all(model: WorldModel, regions: Iterable[Region]) -> Region:
    return reduce(operator.or_, regions, model.empty)


def intersect_all(model: WorldModel, regions: Iterable[Region]) -> Region:
    return reduce(operator.and_, regions, model.full)
