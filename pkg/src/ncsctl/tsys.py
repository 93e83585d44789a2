"""Finite transition systems over measurement bursts.

States are aggregates: the block of consecutive sampled measurements one
loop iteration produces (a *burst*), together with the input value held
while those samples were taken.  Initial configurations, which carry a bare
state and the reference input, use a separate shape flag so they never
collide with genuine one-sample bursts.

Outputs drop the held input: two aggregates look the same to the outside
world exactly when their bursts agree.  The output pseudometric compares
bursts elementwise in the max norm and declares bursts of different length
incomparable, a verdict callers must branch on explicitly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import OutputClash


class _Incomparable:
    """Sentinel for output distances between different-length bursts."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INCOMPARABLE"


INCOMPARABLE = _Incomparable()


def burst_distance(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]):
    """Max-norm distance between equal-length bursts, else INCOMPARABLE."""
    if len(a) != len(b):
        return INCOMPARABLE
    worst = 0.0
    for xa, xb in zip(a, b):
        for va, vb in zip(xa, xb):
            d = abs(va - vb)
            if d > worst:
                worst = d
    return worst


@dataclass(frozen=True)
class AggregateState:
    """One iteration's worth of loop state.

    ``burst`` is a tuple of sampled states (each a tuple of floats);
    ``held`` is the index of the input applied while they were produced,
    or -1 for states (such as specification states) that carry no input.
    ``initial_form`` marks pre-first-iteration configurations.
    """

    burst: tuple[tuple[float, ...], ...]
    held: int = -1
    initial_form: bool = False

    @property
    def n(self) -> int:
        return len(self.burst)

    @property
    def last(self) -> tuple[float, ...]:
        return self.burst[-1]

    def output(self) -> tuple[tuple[float, ...], ...]:
        return self.burst

    def key(self) -> bytes:
        head = b"I" if self.initial_form else b"B"
        arr = np.asarray(self.burst, dtype=np.float64)
        return head + self.held.to_bytes(4, "little", signed=True) + arr.tobytes()

    @staticmethod
    def from_arrays(burst: Iterable[np.ndarray], held: int = -1, initial_form: bool = False) -> "AggregateState":
        tup = tuple(tuple(float(v) for v in x) for x in burst)
        return AggregateState(tup, held, initial_form)


@dataclass
class FiniteSystem:
    """Explicit transition system with interned states.

    ``inputs`` holds the transition labels (any hashable values; systems
    meant to be composed must agree on labels).  Transitions are stored as
    a forward map ``(state id, input id) -> sorted destination ids``; a
    reverse index is built on first use.
    """

    inputs: list
    states: list[AggregateState] = field(default_factory=list)
    initial: set[int] = field(default_factory=set)
    name: str = ""

    def __post_init__(self):
        self._key_to_id: dict[bytes, int] = {s.key(): i for i, s in enumerate(self.states)}
        self._trans: dict[tuple[int, int], tuple[int, ...]] = {}
        self._reverse: dict[int, list[tuple[int, int]]] | None = None

    # -- construction -------------------------------------------------------

    def intern(self, s: AggregateState) -> int:
        k = s.key()
        i = self._key_to_id.get(k)
        if i is None:
            i = len(self.states)
            self.states.append(s)
            self._key_to_id[k] = i
        return i

    def lookup(self, s: AggregateState) -> int | None:
        return self._key_to_id.get(s.key())

    def add_transition(self, src: int, input_id: int, dst: int) -> None:
        key = (src, input_id)
        cur = self._trans.get(key)
        if cur is None:
            self._trans[key] = (dst,)
        elif dst not in cur:
            self._trans[key] = tuple(sorted(cur + (dst,)))
        self._reverse = None

    def set_post(self, src: int, input_id: int, dsts: Sequence[int]) -> None:
        if dsts:
            self._trans[(src, input_id)] = tuple(sorted(set(dsts)))
            self._reverse = None

    # -- queries --------------------------------------------------------------

    def n_states(self) -> int:
        return len(self.states)

    def n_transitions(self) -> int:
        return sum(len(v) for v in self._trans.values())

    def post(self, src: int, input_id: int) -> tuple[int, ...]:
        return self._trans.get((src, input_id), ())

    def enabled(self, src: int) -> list[int]:
        return [u for u in range(len(self.inputs)) if (src, u) in self._trans]

    def transitions(self) -> Iterator[tuple[int, int, int]]:
        for (src, u), dsts in self._trans.items():
            for d in dsts:
                yield src, u, d

    def output_of(self, i: int):
        return self.states[i].output()

    def is_nonblocking(self) -> bool:
        return all(self.enabled(i) for i in range(len(self.states)))

    def blocking_states(self) -> list[int]:
        return [i for i in range(len(self.states)) if not self.enabled(i)]

    def predecessors(self, dst: int) -> list[tuple[int, int]]:
        """(src, input id) pairs with a transition into ``dst``."""
        if self._reverse is None:
            rev: dict[int, list[tuple[int, int]]] = {}
            for (src, u), dsts in self._trans.items():
                for d in dsts:
                    rev.setdefault(d, []).append((src, u))
            self._reverse = rev
        return self._reverse.get(dst, [])

    # -- algebra ----------------------------------------------------------------

    def is_subsystem_of(self, other: "FiniteSystem") -> bool:
        """States, initials, and transitions all embed into ``other`` (matched
        by canonical state key; labels by equality)."""
        if [repr(v) for v in self.inputs] != [repr(v) for v in other.inputs]:
            # allow a label subset, matched by value
            label_map = {}
            other_labels = {repr(v): j for j, v in enumerate(other.inputs)}
            for u, v in enumerate(self.inputs):
                j = other_labels.get(repr(v))
                if j is None:
                    return False
                label_map[u] = j
        else:
            label_map = {u: u for u in range(len(self.inputs))}
        id_map = {}
        for i, s in enumerate(self.states):
            j = other.lookup(s)
            if j is None:
                return False
            id_map[i] = j
        for i in self.initial:
            if id_map[i] not in other.initial:
                return False
        for src, u, dst in self.transitions():
            if id_map[dst] not in other.post(id_map[src], label_map[u]):
                return False
        return True

    def union(self, other: "FiniteSystem") -> "FiniteSystem":
        """Componentwise union; shared state keys must agree on output."""
        if [repr(v) for v in self.inputs] != [repr(v) for v in other.inputs]:
            raise ValueError("union requires identical input label lists")
        out = FiniteSystem(inputs=list(self.inputs), name=f"{self.name}|{other.name}")
        for s in self.states:
            out.intern(s)
        for s in other.states:
            i = out.lookup(s)
            if i is not None and out.states[i].output() != s.output():
                raise OutputClash(f"state key collision with differing outputs")
            out.intern(s)
        for i in self.initial:
            out.initial.add(out.intern(self.states[i]))
        for i in other.initial:
            out.initial.add(out.intern(other.states[i]))
        for src, u, dst in self.transitions():
            out.add_transition(out.intern(self.states[src]), u, out.intern(self.states[dst]))
        for src, u, dst in other.transitions():
            out.add_transition(out.intern(other.states[src]), u, out.intern(other.states[dst]))
        return out

    # -- serialization ------------------------------------------------------------

    FORMAT_VERSION = 1

    def serialize(self) -> str:
        """Line-oriented text form, stable across runs.

        Header records counts and the input labels; states are listed in id
        order with shape flag, held index, and burst values; transitions one
        per line as ``src input dst``.
        """
        buf = io.StringIO()
        buf.write(f"# tsys v{self.FORMAT_VERSION}\n")
        buf.write(f"name {self.name}\n")
        buf.write(f"inputs {len(self.inputs)}\n")
        for v in self.inputs:
            buf.write(f"input {_label_str(v)}\n")
        buf.write(f"states {len(self.states)}\n")
        for s in self.states:
            flag = "i" if s.initial_form else "b"
            vals = " ".join(
                " ".join(f"{v:.17g}" for v in x) for x in s.burst
            )
            buf.write(f"state {flag} {s.held} {s.n} {len(s.burst[0])} {vals}\n")
        buf.write("initial " + " ".join(str(i) for i in sorted(self.initial)) + "\n")
        ts = sorted(self.transitions())
        buf.write(f"transitions {len(ts)}\n")
        for src, u, dst in ts:
            buf.write(f"t {src} {u} {dst}\n")
        return buf.getvalue()

    @staticmethod
    def deserialize(text: str) -> "FiniteSystem":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# tsys v"):
            raise ValueError("not a tsys serialization")
        version = int(lines[0].split("v")[-1])
        if version != FiniteSystem.FORMAT_VERSION:
            raise ValueError(f"unsupported tsys version {version}")
        pos = 1
        name = lines[pos].split(" ", 1)[1] if " " in lines[pos] else ""
        pos += 1
        n_inputs = int(lines[pos].split()[1])
        pos += 1
        inputs = []
        for _ in range(n_inputs):
            inputs.append(_label_parse(lines[pos].split(" ", 1)[1]))
            pos += 1
        sys = FiniteSystem(inputs=inputs, name=name)
        n_states = int(lines[pos].split()[1])
        pos += 1
        for _ in range(n_states):
            parts = lines[pos].split()
            pos += 1
            flag, held, n, d = parts[1], int(parts[2]), int(parts[3]), int(parts[4])
            vals = [float(v) for v in parts[5:]]
            burst = tuple(
                tuple(vals[i * d : (i + 1) * d]) for i in range(n)
            )
            sys.intern(AggregateState(burst, held, flag == "i"))
        init_parts = lines[pos].split()[1:]
        sys.initial = {int(v) for v in init_parts}
        pos += 1
        n_trans = int(lines[pos].split()[1])
        pos += 1
        for _ in range(n_trans):
            _, src, u, dst = lines[pos].split()
            sys.add_transition(int(src), int(u), int(dst))
            pos += 1
        return sys


def _label_str(v) -> str:
    if isinstance(v, tuple):
        return "vec " + " ".join(f"{float(x):.17g}" for x in v)
    return "str " + str(v)


def _label_parse(s: str):
    kind, rest = s.split(" ", 1) if " " in s else (s, "")
    if kind == "vec":
        return tuple(float(v) for v in rest.split())
    return rest
