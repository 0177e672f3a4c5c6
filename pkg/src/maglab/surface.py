"""Disk-model hyperbolic geometry and the genus-2 octagon group.

Isometries are unit-determinant matrices [[a, b], [conj(b), conj(a)]] acting
on the open unit disk by z -> (a z + b) / (conj(b) z + conj(a)).  The group
of deck transformations is generated by four hyperbolic translations pairing
opposite sides of the regular octagon centered at the origin, with one
relator of length eight discovered numerically at startup and then frozen.

Free homotopy classes are cyclically reduced words over the alphabet
a, b, c, d with uppercase inverses.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstructionError, InputError, ResourceError

GENERATOR_LETTERS = "abcd"
ALPHABET = "abcdABCD"

#: Trace of each octagon generator, 2(1 + sqrt 2).
GENERATOR_TRACE = 2.0 * (1.0 + math.sqrt(2.0))
#: Hyperbolic displacement of each generator, also the systole of the surface.
SYSTOLE = 2.0 * math.acosh(1.0 + math.sqrt(2.0))

_DEFAULT_ENUM_CAP = 100_000


@dataclass(frozen=True)
class MobiusTransform:
    """Disk isometry [[a, b], [conj b, conj a]] with |a|^2 - |b|^2 = 1."""

    a: complex
    b: complex

    @staticmethod
    def identity() -> "MobiusTransform":
        return MobiusTransform(1.0 + 0.0j, 0.0j)

    @staticmethod
    def translation(length: float, direction: complex) -> "MobiusTransform":
        """Hyperbolic translation through the origin along a unit direction."""
        half = 0.5 * length
        return MobiusTransform(math.cosh(half), math.sinh(half) * direction)

    @staticmethod
    def to_origin(z: complex) -> "MobiusTransform":
        """Isometry sending z to 0 (and fixing the direction through 0)."""
        s = 1.0 / math.sqrt(1.0 - abs(z) ** 2)
        return MobiusTransform(s, -s * z)

    def det_defect(self) -> float:
        return abs(abs(self.a) ** 2 - abs(self.b) ** 2 - 1.0)

    @property
    def trace(self) -> float:
        # a + conj(a); imaginary parts cancel for this matrix shape
        return 2.0 * self.a.real

    def __matmul__(self, other: "MobiusTransform") -> "MobiusTransform":
        return MobiusTransform(
            self.a * other.a + self.b * np.conj(other.b),
            self.a * other.b + self.b * np.conj(other.a),
        )

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(np.conj(self.a), -self.b)

    def apply(self, z):
        """Apply to a point or array of points in the open disk."""
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) >= 1.0):
            raise InputError("point outside the open unit disk")
        return (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))

    def derivative(self, z):
        """Complex derivative of the map at z (unit determinant form)."""
        z = np.asarray(z, dtype=complex)
        den = np.conj(self.b) * z + np.conj(self.a)
        return 1.0 / (den * den)

    def apply_tangent(self, z, v):
        """Push forward a tangent vector v at z; returns (image, pushed v)."""
        return self.apply(z), self.derivative(z) * np.asarray(v, dtype=complex)

    def sign_normalized(self) -> "MobiusTransform":
        """Flip the sign so Re(a) > 0; +/-M act identically on the disk."""
        if self.a.real < 0:
            return MobiusTransform(-self.a, -self.b)
        return self

    def distance_to(self, other: "MobiusTransform") -> float:
        return max(abs(self.a - other.a), abs(self.b - other.b))

    def is_identity(self, tol: float = 1e-10) -> bool:
        n = self.sign_normalized()
        return abs(n.a - 1.0) < tol and abs(n.b) < tol


def hyperbolic_distance(z, w):
    """Distance in the disk model: cosh d = 1 + 2|z-w|^2 / ((1-|z|^2)(1-|w|^2))."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(z) >= 1.0) or np.any(np.abs(w) >= 1.0):
        raise InputError("hyperbolic_distance requires points inside the open disk")
    num = np.abs(z - w) ** 2
    den = (1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2)
    return np.arccosh(1.0 + 2.0 * num / den)


def mobius_apply(T: MobiusTransform, z):
    return T.apply(z)


def translation_length(T: MobiusTransform) -> float:
    """2 arccosh(|tr|/2) for a hyperbolic element; errors otherwise."""
    half_tr = abs(T.trace) / 2.0
    if half_tr <= 1.0 + 1e-12:
        raise InputError("element is not hyperbolic (|trace| <= 2)")
    return 2.0 * math.acosh(half_tr)


def geodesic_step(z: complex, v: complex, s: float) -> tuple[complex, complex]:
    """Advance (z, v) by arclength s along the geodesic; v is a direction.

    Exact closed form: translate z to the origin, move radially, translate
    back.  The returned v is the unit (Euclidean-normalized) direction of
    the geodesic at the new point.
    """
    M = MobiusTransform.to_origin(z)
    u = M.derivative(z) * v
    u /= abs(u)
    zeta = math.tanh(0.5 * s) * u
    Mi = M.inverse()
    z2 = Mi.apply(zeta)
    v2 = Mi.derivative(zeta) * u
    return complex(z2), complex(v2 / abs(v2))


# ---------------------------------------------------------------------------
# Words and free homotopy classes
# ---------------------------------------------------------------------------


def _check_letters(letters: str) -> None:
    bad = set(letters) - set(ALPHABET)
    if bad:
        raise InputError(f"invalid word letters: {sorted(bad)!r}")


def invert_word(letters: str) -> str:
    _check_letters(letters)
    return letters[::-1].swapcase()


def free_reduce(letters: str) -> str:
    _check_letters(letters)
    out: list[str] = []
    for ch in letters:
        if out and out[-1] == ch.swapcase():
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def cyclic_reduce(letters: str) -> str:
    """Freely reduce, then strip cancelling first/last pairs."""
    w = free_reduce(letters)
    while len(w) >= 2 and w[0] == w[-1].swapcase():
        w = w[1:-1]
        w = free_reduce(w)
    return w


def canonical_class(letters: str) -> str:
    """Canonical conjugacy representative: cyclic reduction, minimal rotation."""
    w = cyclic_reduce(letters)
    if not w:
        return w
    return min(w[i:] + w[:i] for i in range(len(w)))


@dataclass(frozen=True)
class Word:
    """A word over the octagon alphabet; canonical means cyclically reduced
    minimal rotation (a conjugacy-class representative)."""

    letters: str
    canonical: bool = False

    @staticmethod
    def parse(letters: str) -> "Word":
        _check_letters(letters)
        return Word(letters, letters == canonical_class(letters) and letters != "")

    def canonicalized(self) -> "Word":
        return Word(canonical_class(self.letters), True)

    def inverse(self) -> "Word":
        return Word.parse(invert_word(self.letters))

    def __str__(self) -> str:
        return self.letters


# ---------------------------------------------------------------------------
# The octagon group
# ---------------------------------------------------------------------------


class _MatrixSet:
    """Tolerance-based set of sign-normalized Mobius matrices."""

    def __init__(self, tol: float = 1e-6):
        self.tol = tol
        self._cells: dict[tuple[int, int, int, int], list[MobiusTransform]] = {}

    def _key(self, T: MobiusTransform):
        t = self.tol
        return (round(T.a.real / t), round(T.a.imag / t),
                round(T.b.real / t), round(T.b.imag / t))

    def add(self, T: MobiusTransform) -> bool:
        """Insert; returns False if an equal element is already present."""
        T = T.sign_normalized()
        k = self._key(T)
        for dk in itertools.product((-1, 0, 1), repeat=4):
            cell = self._cells.get((k[0] + dk[0], k[1] + dk[1], k[2] + dk[2], k[3] + dk[3]))
            if cell:
                for other in cell:
                    if T.distance_to(other) < 1e-8:
                        return False
        self._cells.setdefault(k, []).append(T)
        return True


class FuchsianGroup:
    """Genus-2 surface group: regular octagon, opposite-side pairing."""

    def __init__(self, generators, relator: Word, enum_cap: int = _DEFAULT_ENUM_CAP):
        self.generators = list(generators)
        self.relator = relator
        self.systole = SYSTOLE
        self.enum_cap = enum_cap
        self._letter_map = {}
        for letter, T in zip(GENERATOR_LETTERS, self.generators):
            self._letter_map[letter] = T
            self._letter_map[letter.upper()] = T.inverse()
        self._enumerated: list[tuple[Word, MobiusTransform, float]] = []
        self._enum_radius = -1.0

    @property
    def letter_transforms(self) -> dict[str, MobiusTransform]:
        return dict(self._letter_map)

    def word_to_matrix(self, word) -> MobiusTransform:
        letters = word.letters if isinstance(word, Word) else word
        _check_letters(letters)
        M = MobiusTransform.identity()
        for ch in letters:
            M = M @ self._letter_map[ch]
        return M

    # -- enumeration ---------------------------------------------------

    def elements_within(self, radius: float):
        """All (word, transform, displacement) with d(0, g.0) <= radius.

        Breadth-first over reduced words with displacement pruning; results
        are cached and grown on demand.
        """
        if radius > self._enum_radius:
            self._enumerate(radius)
        return [e for e in self._enumerated if e[2] <= radius + 1e-12]

    def _enumerate(self, radius: float) -> None:
        margin = SYSTOLE + 0.5  # quasi-geodesic slack for prefixes
        seen = _MatrixSet()
        ident = MobiusTransform.identity()
        seen.add(ident)
        kept = [(Word("", True), ident, 0.0)]
        frontier = [("", ident)]
        while frontier:
            new_frontier = []
            for letters, M in frontier:
                last = letters[-1] if letters else ""
                for ch in ALPHABET:
                    if last and ch == last.swapcase():
                        continue
                    M2 = M @ self._letter_map[ch]
                    disp = float(hyperbolic_distance(0j, M2.apply(0j)))
                    if disp > radius + margin:
                        continue
                    if not seen.add(M2):
                        continue
                    if disp <= radius + 1e-12:
                        kept.append((Word.parse(letters + ch), M2.sign_normalized(), disp))
                    if len(kept) > self.enum_cap:
                        raise ResourceError(
                            f"group enumeration exceeded cap {self.enum_cap} at radius {radius}")
                    new_frontier.append((letters + ch, M2))
            frontier = new_frontier
        kept.sort(key=lambda e: (round(e[2], 10), e[0].letters))
        self._enumerated = kept
        self._enum_radius = radius

    def orbit_of(self, center: complex, radius: float) -> np.ndarray:
        """Orbit points g.center with d(0, g.center) <= radius, as an array."""
        d0 = float(hyperbolic_distance(0j, center))
        pts = []
        for _, T, _ in self.elements_within(radius + d0 + 1e-9):
            p = complex(T.apply(center))
            if float(hyperbolic_distance(0j, p)) <= radius + 1e-12:
                pts.append(p)
        return np.array(sorted(pts, key=lambda p: (round(abs(p), 14), p.real, p.imag)),
                        dtype=complex)

    # -- deck normalization ---------------------------------------------

    def reduce_to_domain(self, z: complex, max_steps: int = 200
                         ) -> tuple[complex, MobiusTransform]:
        """Translate z into the Dirichlet domain (the octagon) about 0.

        Greedy reduction: apply whichever generator strictly decreases the
        distance to the origin.  The octagon's sides are exactly the
        generator bisectors, so no generator improves iff z is inside.
        """
        acc = MobiusTransform.identity()
        cosh_best = 1.0 + 2.0 * abs(z) ** 2 / (1.0 - abs(z) ** 2)
        for _ in range(max_steps):
            best = None
            for T in self._letter_map.values():
                z2 = complex(T.apply(z))
                c2 = 1.0 + 2.0 * abs(z2) ** 2 / (1.0 - abs(z2) ** 2)
                if c2 < cosh_best - 1e-14:
                    best = (c2, z2, T)
                    cosh_best = c2
            if best is None:
                return z, acc
            _, z, T = best
            acc = T @ acc
        raise ResourceError("deck reduction did not terminate")


def _relator_candidates():
    """Length-8 relator orderings for the standard octagon pairings."""
    for perm in itertools.permutations(range(4)):
        for signs in itertools.product((1, -1), repeat=4):
            first = [GENERATOR_LETTERS[k] if s > 0 else GENERATOR_LETTERS[k].upper()
                     for k, s in zip(perm, signs)]
            second = [c.swapcase() for c in first]
            yield "".join(first + second)  # alternating form
    for perm in itertools.permutations(range(4)):
        a, b, c, d = (GENERATOR_LETTERS[m] for m in perm)
        yield a + b + a.upper() + b.upper() + c + d + c.upper() + d.upper()


@lru_cache(maxsize=1)
def standard_group() -> FuchsianGroup:
    """The octagon group: generators translate by 2 arccosh(1+sqrt 2) along
    directions k pi/4, k = 0..3, pairing opposite sides of the octagon."""
    gens = []
    for k in range(4):
        direction = cmath.exp(1j * k * math.pi / 4.0)
        gens.append(MobiusTransform(1.0 + math.sqrt(2.0),
                                    math.sqrt(2.0 + 2.0 * math.sqrt(2.0)) * direction))
    group = FuchsianGroup(gens, Word("", False))
    relator = None
    for cand in _relator_candidates():
        if len(cyclic_reduce(cand)) != 8:
            continue  # freely reducible orderings are vacuous
        M = group.word_to_matrix(cand).sign_normalized()
        if abs(M.a - 1.0) < 1e-10 and abs(M.b) < 1e-10:
            relator = Word(cand, False)
            break
    if relator is None:
        raise ConstructionError("no octagon pairing ordering yields a +/- identity relator")
    group.relator = relator
    return group


def enumerate_group(group: FuchsianGroup, radius: float):
    """Public wrapper: (Word, MobiusTransform) pairs with displacement <= radius."""
    if radius < 0:
        raise InputError("enumeration radius must be nonnegative")
    return [(w, T) for (w, T, _) in group.elements_within(radius)]


def shortest_words(group: FuchsianGroup, count: int, max_length: int = 4) -> list[str]:
    """Canonical class representatives of the `count` geometrically shortest
    nontrivial free homotopy classes (w and w^-1 kept distinct)."""
    classes: dict[str, float] = {}
    for n in range(1, max_length + 1):
        for tup in itertools.product(ALPHABET, repeat=n):
            w = "".join(tup)
            c = canonical_class(w)
            if c != w or not c:
                continue
            M = group.word_to_matrix(c)
            if abs(M.trace) <= 2.0 + 1e-9:
                continue
            classes[c] = translation_length(M)
    ranked = sorted(classes.items(), key=lambda kv: (round(kv[1], 12), kv[0]))
    if count > len(ranked):
        raise InputError(f"only {len(ranked)} classes up to word length {max_length}")
    return [w for w, _ in ranked[:count]]
