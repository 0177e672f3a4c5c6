"""Group-invariant fields on the surface with analytic jets.

Scalars are sums of orbit-averaged compactly supported bumps plus a
constant.  Because every bump radius is capped below half the systole, at
most one orbit translate contributes at any point, so the averaging sum is
finite and the invariance is exact, not truncated.

One-forms are built as sums c_i * u_i dv_i of invariant scalars (plus an
optional exact part d(phi)), which makes them genuine 1-forms on the closed
surface: the field strength integrates to zero by construction.

The metric is conformal to the curvature -1 disk metric:
g = e^{2f} * 4/(1-|z|^2)^2 * (dx^2 + dy^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .jets import Jet, acosh1p_sq_derivs, bump_profile_derivs, poly_abs2_diff, \
    poly_one_minus_abs2
from .surface import FuchsianGroup, MobiusTransform, hyperbolic_distance

#: Largest allowed bump radius; below half the systole so orbit sums stay
#: single-translate and exactly invariant.
MAX_BUMP_RADIUS = 1.0

#: Default hyperbolic radius inside which fields are evaluated.  Covers the
#: octagon, the flow's deck-normalization buffer, and loop-descent slack.
DEFAULT_EVAL_RADIUS = 3.4


@dataclass(frozen=True)
class _Bump:
    center: complex
    radius: float
    amplitude: float
    orbit: np.ndarray  # contributing translates of the center


class ScalarField:
    """Invariant scalar: constant + sum of orbit-averaged bumps."""

    def __init__(self, group: FuchsianGroup | None, bumps=(), constant: float = 0.0,
                 eval_radius: float = DEFAULT_EVAL_RADIUS):
        self.group = group
        self.constant = float(constant)
        self.eval_radius = float(eval_radius)
        self._max_abs = math.tanh(0.5 * (self.eval_radius + 1e-9))
        self.bumps: list[_Bump] = list(bumps)

    @staticmethod
    def zero(group=None) -> "ScalarField":
        return ScalarField(group, (), 0.0)

    def is_zero(self) -> bool:
        return not self.bumps and self.constant == 0.0

    def spec(self) -> dict:
        return {
            "constant": self.constant,
            "bumps": [{"center": [b.center.real, b.center.imag],
                       "radius": b.radius, "amplitude": b.amplitude}
                      for b in self.bumps],
        }

    def _guard(self, z: np.ndarray) -> None:
        if self.bumps and np.any(np.abs(z) > self._max_abs):
            raise InputError(
                f"field evaluated beyond its radius {self.eval_radius}; "
                "construct it with a larger eval_radius")

    def jet(self, z, order: int) -> Jet:
        z = np.asarray(z, dtype=complex).ravel()
        self._guard(z)
        out = Jet.const(np.full(z.size, self.constant), order, z.size)
        one_minus = 1.0 - (z.real**2 + z.imag**2)
        for bump in self.bumps:
            if bump.orbit.size == 0 or bump.amplitude == 0.0:
                continue
            w = bump.orbit
            d2 = np.abs(z[:, None] - w[None, :]) ** 2
            s = (2.0 * d2) / (one_minus[:, None] * (1.0 - np.abs(w)[None, :] ** 2))
            jsel = np.argmin(s, axis=1)
            smin = s[np.arange(z.size), jsel]
            s_thresh = math.cosh(bump.radius) - 1.0
            idx = np.nonzero(smin < s_thresh)[0]
            if idx.size == 0:
                continue
            zs = z[idx]
            ws = w[jsel[idx]]
            u = poly_abs2_diff(zs, ws, order)
            arec = poly_one_minus_abs2(zs, order).reciprocal()
            sj = (u * arec) * (2.0 / (1.0 - np.abs(ws) ** 2))
            y = sj.compose(acosh1p_sq_derivs(sj.value, order))
            chi = y.compose(bump_profile_derivs(y.value, bump.radius, order))
            out.c[:, idx] += bump.amplitude * chi.c
        return out

    def values(self, z) -> np.ndarray:
        return self.jet(z, 0).value

    # -- algebra --------------------------------------------------------

    def scaled(self, c: float) -> "ScalarField":
        f = ScalarField(self.group, (), c * self.constant, self.eval_radius)
        f.bumps = [_Bump(b.center, b.radius, c * b.amplitude, b.orbit) for b in self.bumps]
        return f

    def with_constant_added(self, c: float) -> "ScalarField":
        f = ScalarField(self.group, self.bumps, self.constant + c, self.eval_radius)
        return f

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if self.group is not None and other.group is not None \
                and self.group is not other.group:
            raise InputError("cannot add fields over different groups")
        return ScalarField(self.group or other.group,
                           list(self.bumps) + list(other.bumps),
                           self.constant + other.constant,
                           min(self.eval_radius, other.eval_radius))


def averaged_bump(center, radius: float, amplitude: float,
                  group: FuchsianGroup, eval_radius: float = DEFAULT_EVAL_RADIUS
                  ) -> ScalarField:
    """Invariant bump: amplitude * sum over the orbit of a smooth profile
    supported in the given hyperbolic radius around the center."""
    if radius > MAX_BUMP_RADIUS:
        raise InputError(f"bump radius {radius} exceeds the cap {MAX_BUMP_RADIUS}")
    if radius <= 0:
        raise InputError("bump radius must be positive")
    center = complex(center[0], center[1]) if isinstance(center, (tuple, list)) \
        else complex(center)
    if abs(center) >= 1.0:
        raise InputError("bump center must lie inside the open disk")
    orbit = group.orbit_of(center, eval_radius + radius + 0.1)
    field = ScalarField(group, (), 0.0, eval_radius)
    field.bumps = [_Bump(center, float(radius), float(amplitude), orbit)]
    return field


class OneFormField:
    """alpha = sum c_i u_i dv_i + sum e_j d(phi_j), all scalars invariant."""

    def __init__(self, pairs=(), exacts=()):
        self.pairs = [(u, v, float(c)) for (u, v, c) in pairs]
        self.exacts = [(phi, float(c)) for (phi, c) in exacts]

    @staticmethod
    def zero() -> "OneFormField":
        return OneFormField()

    def is_zero(self) -> bool:
        return not self.pairs and not self.exacts

    def component_jets(self, z, order: int) -> tuple[Jet, Jet]:
        z = np.asarray(z, dtype=complex).ravel()
        a1 = Jet.zero(order, z.size)
        a2 = Jet.zero(order, z.size)
        for u, v, c in self.pairs:
            uj = u.jet(z, order)
            vj = v.jet(z, order + 1)
            a1 = a1 + (uj * vj.dx()) * c
            a2 = a2 + (uj * vj.dy()) * c
        for phi, c in self.exacts:
            pj = phi.jet(z, order + 1)
            a1 = a1 + pj.dx() * c
            a2 = a2 + pj.dy() * c
        return a1, a2

    def values(self, z) -> tuple[np.ndarray, np.ndarray]:
        a1, a2 = self.component_jets(z, 0)
        return a1.value, a2.value

    def evaluate_on(self, z, vec) -> np.ndarray:
        """alpha_z(vec) for complex tangent vectors."""
        a1, a2 = self.values(z)
        vec = np.asarray(vec, dtype=complex)
        return a1 * vec.real + a2 * vec.imag

    def curl_jet(self, z, order: int) -> Jet:
        """Jet of the dalpha coefficient (dalpha = curl dx^dy).

        Exact parts cancel analytically (d d phi = 0) and are skipped, so
        gauge terms never perturb the field strength numerically.
        """
        z = np.asarray(z, dtype=complex).ravel()
        out = Jet.zero(order, z.size)
        for u, v, c in self.pairs:
            uj = u.jet(z, order + 1)
            vj = v.jet(z, order + 1)
            out = out + (uj.dx() * vj.dy() - uj.dy() * vj.dx()) * c
        return out

    def pullback_values(self, T: MobiusTransform, z) -> tuple[np.ndarray, np.ndarray]:
        """(T^* alpha) components at z, for invariance checks."""
        z = np.asarray(z, dtype=complex).ravel()
        zi = T.apply(z)
        dT = T.derivative(z)
        a1, a2 = self.values(zi)
        # alpha(T z)(dT . e_k): dT is a conformal (complex) linear map
        b1 = a1 * dT.real + a2 * dT.imag
        b2 = a1 * (-dT.imag) + a2 * dT.real
        return b1, b2

    # -- algebra --------------------------------------------------------

    def scaled(self, c: float) -> "OneFormField":
        return OneFormField([(u, v, c * cf) for u, v, cf in self.pairs],
                            [(p, c * cf) for p, cf in self.exacts])

    def __add__(self, other: "OneFormField") -> "OneFormField":
        return OneFormField(self.pairs + other.pairs, self.exacts + other.exacts)

    def with_exact(self, phi: ScalarField, coeff: float = 1.0) -> "OneFormField":
        return OneFormField(self.pairs, self.exacts + [(phi, coeff)])

    def spec(self) -> dict:
        return {
            "pairs": [{"u": u.spec(), "v": v.spec(), "coeff": c}
                      for u, v, c in self.pairs],
            "exact_parts": [{"phi": p.spec(), "coeff": c} for p, c in self.exacts],
        }


def exact_one_form(phi: ScalarField, coeff: float = 1.0) -> OneFormField:
    return OneFormField((), [(phi, coeff)])


class ConformalMetric:
    """g = e^{2f} g_hyp on the disk, with analytic Christoffels and curvature."""

    def __init__(self, f: ScalarField):
        self.f = f

    @staticmethod
    def hyperbolic(group=None) -> "ConformalMetric":
        return ConformalMetric(ScalarField.zero(group))

    def lam2_jet(self, z, order: int) -> Jet:
        z = np.asarray(z, dtype=complex).ravel()
        arec = poly_one_minus_abs2(z, order).reciprocal()
        ef = (self.f.jet(z, order) * 2.0).exp()
        return (arec * arec) * ef * 4.0

    def lam_values(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).ravel()
        return 2.0 * np.exp(self.f.values(z)) / (1.0 - np.abs(z) ** 2)

    def phi_jet(self, z, order: int) -> Jet:
        """Jet of log(conformal factor), phi = f + log 2 - log(1 - |z|^2)."""
        z = np.asarray(z, dtype=complex).ravel()
        a = poly_one_minus_abs2(z, order)
        return self.f.jet(z, order) + (math.log(2.0) - a.log())

    def christoffel_jets(self, z, order: int):
        """The six independent symbols as jets, from the conformal formula."""
        pj = self.phi_jet(z, order + 1)
        px, py = pj.dx(), pj.dy()
        return {
            (0, 0, 0): px, (0, 0, 1): py, (0, 1, 1): -px,
            (1, 0, 0): -py, (1, 0, 1): px, (1, 1, 1): py,
        }

    def christoffels(self, z) -> np.ndarray:
        """Values Gamma[k, i, j] at each point, shape (2, 2, 2, N)."""
        z = np.asarray(z, dtype=complex).ravel()
        jets = self.christoffel_jets(z, 0)
        out = np.empty((2, 2, 2, z.size))
        for (k, i, j), jet in jets.items():
            out[k, i, j] = jet.value
            out[k, j, i] = jet.value
        return out

    def gaussian_curvature(self, z) -> np.ndarray:
        """K = e^{-2f} (-1 - lap_hyp f)."""
        z = np.asarray(z, dtype=complex).ravel()
        fj = self.f.jet(z, 2)
        lap = fj.deriv(2, 0) + fj.deriv(0, 2)
        lap_hyp = 0.25 * (1.0 - np.abs(z) ** 2) ** 2 * lap
        return np.exp(-2.0 * fj.value) * (-1.0 - lap_hyp)

    # -- pointwise linear algebra ----------------------------------------

    def inner(self, z, v, w) -> np.ndarray:
        lam2 = self.lam2_jet(z, 0).value
        v = np.asarray(v, dtype=complex)
        w = np.asarray(w, dtype=complex)
        return lam2 * (v.real * w.real + v.imag * w.imag)

    def norm(self, z, v) -> np.ndarray:
        return self.lam_values(z) * np.abs(np.asarray(v, dtype=complex))

    def raise_form(self, z, q1, q2) -> np.ndarray:
        """Covector (q1, q2) to a complex tangent vector."""
        lam2 = self.lam2_jet(z, 0).value
        return (np.asarray(q1) + 1j * np.asarray(q2)) / lam2

    def lower_vector(self, z, v) -> tuple[np.ndarray, np.ndarray]:
        lam2 = self.lam2_jet(z, 0).value
        v = np.asarray(v, dtype=complex)
        return lam2 * v.real, lam2 * v.imag

    def scaled(self, c: float) -> "ConformalMetric":
        """The metric c * g (volume scales by c in dimension 2)."""
        if c <= 0:
            raise InputError("metric scaling must be positive")
        return ConformalMetric(self.f.with_constant_added(0.5 * math.log(c)))


class SymTensorField:
    """Invariant symmetric 2-tensor: sum of u dv (.) dw products plus
    scalar multiples of a conformal metric tensor."""

    def __init__(self, products=(), metric_multiples=()):
        # products: (u, v, w, coeff); metric_multiples: (scalar|None, metric, coeff)
        self.products = [(u, v, w, float(c)) for (u, v, w, c) in products]
        self.metric_multiples = [(s, m, float(c)) for (s, m, c) in metric_multiples]

    @staticmethod
    def zero() -> "SymTensorField":
        return SymTensorField()

    @staticmethod
    def metric_multiple(metric: ConformalMetric, scalar: ScalarField | None = None,
                        coeff: float = 1.0) -> "SymTensorField":
        return SymTensorField((), [(scalar, metric, coeff)])

    def is_zero(self) -> bool:
        return not self.products and not self.metric_multiples

    def component_jets(self, z, order: int) -> tuple[Jet, Jet, Jet]:
        z = np.asarray(z, dtype=complex).ravel()
        p11 = Jet.zero(order, z.size)
        p12 = Jet.zero(order, z.size)
        p22 = Jet.zero(order, z.size)
        for u, v, w, c in self.products:
            uj = u.jet(z, order)
            vx, vy = (j := v.jet(z, order + 1)).dx(), j.dy()
            wx, wy = (j := w.jet(z, order + 1)).dx(), j.dy()
            p11 = p11 + (uj * (vx * wx)) * c
            p12 = p12 + (uj * (vx * wy + vy * wx)) * (0.5 * c)
            p22 = p22 + (uj * (vy * wy)) * c
        for s, metric, c in self.metric_multiples:
            lj = metric.lam2_jet(z, order)
            term = lj * c if s is None else (s.jet(z, order) * lj) * c
            p11 = p11 + term
            p22 = p22 + term
        return p11, p12, p22

    def values(self, z):
        p11, p12, p22 = self.component_jets(z, 0)
        return p11.value, p12.value, p22.value

    def evaluate_on(self, z, vec) -> np.ndarray:
        """p_z(vec, vec) for complex tangent vectors."""
        p11, p12, p22 = self.values(z)
        vec = np.asarray(vec, dtype=complex)
        x, y = vec.real, vec.imag
        return p11 * x * x + 2.0 * p12 * x * y + p22 * y * y

    def scaled(self, c: float) -> "SymTensorField":
        return SymTensorField([(u, v, w, c * cf) for u, v, w, cf in self.products],
                              [(s, m, c * cf) for s, m, cf in self.metric_multiples])


# ---------------------------------------------------------------------------
# Operation wrappers (module-level names for the public surface)
# ---------------------------------------------------------------------------


def christoffel(metric: ConformalMetric, z) -> np.ndarray:
    return metric.christoffels(z)


def gaussian_curvature(metric: ConformalMetric, z) -> np.ndarray:
    return metric.gaussian_curvature(z)


def exterior_derivative(alpha: OneFormField, z) -> np.ndarray:
    """Coefficient of dalpha against dx^dy."""
    return alpha.curl_jet(z, 0).value


def raise_index(metric: ConformalMetric, z, q1, q2):
    return metric.raise_form(z, q1, q2)


def lower_index(metric: ConformalMetric, z, v):
    return metric.lower_vector(z, v)


def inner_product(metric: ConformalMetric, z, v, w):
    return metric.inner(z, v, w)


def scalar_invariance_defect(field: ScalarField, group: FuchsianGroup,
                             points, letters: str = "abcd") -> float:
    """Max |f(g z) - f(z)| over the points and the given generators."""
    points = np.asarray(points, dtype=complex).ravel()
    vals = field.values(points)
    worst = 0.0
    for ch in letters:
        T = group.letter_transforms[ch]
        worst = max(worst, float(np.max(np.abs(field.values(T.apply(points)) - vals))))
    return worst
