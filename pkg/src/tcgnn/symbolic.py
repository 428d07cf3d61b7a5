"""Linear depth expressions over the opaque depth constants of FPN primitives."""
from __future__ import annotations

import re
from dataclasses import dataclass

SYMBOLS = ("d_std", "d_plus", "d_times", "d_exp", "d_sqrt")

# metered tag -> symbol it is charged
TAG_SYMBOL = {
    "add": "d_std",
    "mul": "d_std",
    "div": "d_std",
    "le": "d_std",
    "sum": "d_plus",
    "prod": "d_times",
    "exp": "d_exp",
    "sqrt": "d_sqrt",
    "rsqrt": "d_sqrt",
}


@dataclass(frozen=True, slots=True)
class Depth:
    """``sum(coeff[i] * SYMBOLS[i]) + const`` with non-negative integer coefficients."""

    coeffs: tuple[int, ...] = (0,) * len(SYMBOLS)
    const: int = 0

    @classmethod
    def of(cls, const: int = 0, **terms: int) -> Depth:
        unknown = set(terms) - set(SYMBOLS)
        if unknown:
            raise ValueError(f"unknown depth symbols {sorted(unknown)}")
        return cls(tuple(terms.get(s, 0) for s in SYMBOLS), const)

    @classmethod
    def symbol(cls, name: str) -> Depth:
        return cls.of(**{name: 1})

    @classmethod
    def tag(cls, tag: str) -> Depth:
        return cls.symbol(TAG_SYMBOL[tag])

    def __add__(self, other: Depth | int) -> Depth:
        if isinstance(other, int):
            return Depth(self.coeffs, self.const + other)
        return Depth(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)),
                     self.const + other.const)

    __radd__ = __add__

    def __rmul__(self, k: int) -> Depth:
        return Depth(tuple(k * c for c in self.coeffs), k * self.const)

    def dominates(self, other: Depth) -> bool:
        return self.const >= other.const and all(
            a >= b for a, b in zip(self.coeffs, other.coeffs))

    @property
    def is_integer(self) -> bool:
        return not any(self.coeffs)

    def __int__(self) -> int:
        if not self.is_integer:
            raise TypeError(f"symbolic depth {self} is not an integer")
        return self.const

    def evaluate(self, **values: int) -> int:
        return sum(c * values[s] for c, s in zip(self.coeffs, SYMBOLS)) + self.const

    def __str__(self) -> str:
        parts = []
        for c, s in zip(self.coeffs, SYMBOLS):
            if c == 1:
                parts.append(s)
            elif c:
                parts.append(f"{c}*{s}")
        if self.const or not parts:
            parts.append(str(self.const))
        return " + ".join(parts)

    @classmethod
    def parse(cls, text: str) -> Depth:
        terms: dict[str, int] = {}
        const = 0
        for part in text.split("+"):
            part = part.strip()
            m = re.fullmatch(r"(?:(\d+)\s*\*\s*)?([a-z_]+)", part)
            if m:
                terms[m.group(2)] = terms.get(m.group(2), 0) + int(m.group(1) or 1)
            elif part.isdigit():
                const += int(part)
            else:
                raise ValueError(f"cannot parse depth term {part!r}")
        return cls.of(const, **terms)


def frontier(items) -> list[Depth]:
    """Non-dominated elements of a collection of depths."""
    out: list[Depth] = []
    for d in items:
        if any(o.dominates(d) for o in out):
            continue
        out = [o for o in out if not d.dominates(o)]
        out.append(d)
    return out
