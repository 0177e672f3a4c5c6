"""Magnetic flow on the unit tangent bundle and the injectivity criteria.

The magnetic system pairs the conformal metric with a 1-form; the field
strength b is the ratio of the 2-form dalpha to the Riemannian area form.
With the standard orientation of the disk the Lorentz force is
Y(v) = b * J v, J the rotation by +90 degrees, and trajectories satisfy

    zdot = v,    vdot = -2 phi_z v^2 + i b v,

in complex disk coordinates, phi the log conformal factor.  Integration is
classical fixed-step RK4 with per-step speed renormalization; trajectories
are translated back into the fundamental octagon whenever they cross a
buffer radius, with the applied deck transformations accumulated so covering
space data is exactly recoverable.

A test-only harness prescribes a constant b on the universal cover, where
constant-curvature circles provide closed-form oracles; such a field cannot
exist on the closed surface (the field strength integrates to zero there).
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import FundamentalDomain
from .errors import InputError, NumericalError
from .fields import ConformalMetric, OneFormField
from .surface import FuchsianGroup, MobiusTransform

#: Hyperbolic radius beyond which flowing trajectories are deck-normalized.
NORMALIZE_RADIUS = 2.8
_NORMALIZE_ABS = math.tanh(NORMALIZE_RADIUS / 2.0)
_BLOWUP_ABS = 1.0 - 1e-12


@dataclass(frozen=True)
class PhasePoint:
    """Point of the unit tangent bundle: base point and unit velocity."""

    z: complex
    v: complex


@dataclass
class IntegratorSettings:
    n_steps: int = 10_000
    h: float | None = None  # absolute step cap; overrides n_steps when set
    max_T: float = 500.0

    def steps_for(self, T: float) -> int:
        if self.h is not None:
            n = int(math.ceil(T / self.h))
        else:
            n = self.n_steps
        n = max(n, 16)
        return n + (n % 2)  # even interval count for Simpson rules


@dataclass
class SolverSettings:
    loop_points: int = 1024
    grad_tol: float = 1e-8
    max_iter: int = 5000
    method: str = "lbfgs"  # or "gd"
    newton_tol: float = 1e-10
    newton_accept: float = 1e-8
    max_newton: int = 30
    max_shoot_period: float = 14.0  # beyond this, single shooting is ill-conditioned
    stored_samples: int = 2049


@dataclass
class MagneticSystem:
    metric: ConformalMetric
    alpha: OneFormField
    group: FuchsianGroup | None = None
    domain: FundamentalDomain | None = None
    prescribed_b: float | None = None
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    label: str = ""

    def describe(self) -> dict:
        return {
            "label": self.label,
            "metric": self.metric.f.spec(),
            "one_form": self.alpha.spec(),
            "prescribed_b": self.prescribed_b,
            "integrator": {"n_steps": self.integrator.n_steps, "h": self.integrator.h},
            "solver": {"loop_points": self.solver.loop_points,
                       "grad_tol": self.solver.grad_tol,
                       "method": self.solver.method},
        }

    @property
    def system_id(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    # -- pointwise quantities -----------------------------------------

    def b_values(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).ravel()
        if self.prescribed_b is not None:
            return np.full(z.size, float(self.prescribed_b))
        if self.alpha.is_zero():
            return np.zeros(z.size)
        lam2 = self.metric.lam2_jet(z, 0).value
        return self.alpha.curl_jet(z, 0).value / lam2

    def b_gradient(self, z) -> tuple[np.ndarray, np.ndarray]:
        """(b_x, b_y) spatial gradient of the field strength."""
        z = np.asarray(z, dtype=complex).ravel()
        if self.prescribed_b is not None or self.alpha.is_zero():
            return np.zeros(z.size), np.zeros(z.size)
        bj = self.alpha.curl_jet(z, 1) * self.metric.lam2_jet(z, 1).reciprocal()
        return bj.deriv(1, 0), bj.deriv(0, 1)

    def phase_point(self, z, v) -> PhasePoint:
        """Unit-speed phase point; renormalizes the velocity."""
        z = complex(z)
        v = complex(v)
        speed = float(self.metric.norm(z, v))
        if speed == 0.0:
            raise InputError("zero velocity cannot be normalized")
        return PhasePoint(z, v / speed)


def lorentz_force(sys: MagneticSystem, z, v) -> np.ndarray:
    """Y(v) = b J v; the defining identity is dalpha(v, w) = g(w, Y v)."""
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    return 1j * sys.b_values(z).reshape(z.shape) * v


def deck_normalize(group: FuchsianGroup, p: PhasePoint
                   ) -> tuple[PhasePoint, MobiusTransform]:
    """Translate a phase point into the fundamental octagon."""
    z, T = group.reduce_to_domain(p.z)
    if T.is_identity(1e-15):
        return p, MobiusTransform.identity()
    v = complex(T.derivative(p.z)) * p.v
    return PhasePoint(complex(z), v), T


@dataclass
class FlowResult:
    end: PhasePoint
    deck: MobiusTransform
    speed_drift: float
    times: np.ndarray | None = None
    z_samples: np.ndarray | None = None
    v_samples: np.ndarray | None = None
    jump_steps: np.ndarray | None = None


class _BatchFlow:
    """Fixed-step RK4 over a batch of phase points with per-element periods."""

    def __init__(self, sys: MagneticSystem, Z0, V0, T, n_steps: int,
                 dense: bool = False, normalize: bool = True):
        self.sys = sys
        self.Z = np.array(Z0, dtype=complex).ravel().copy()
        self.V = np.array(V0, dtype=complex).ravel().copy()
        self.T = np.asarray(T, dtype=float).ravel()
        if np.any(self.T > sys.integrator.max_T):
            raise InputError(f"period exceeds integrator max_T {sys.integrator.max_T}")
        self.k = self.Z.size
        self.n = n_steps
        self.h = self.T / n_steps
        self.normalize = normalize and sys.group is not None
        self.dense = dense
        self.deck_a = np.ones(self.k, dtype=complex)
        self.deck_b = np.zeros(self.k, dtype=complex)
        self.drift = np.zeros(self.k)
        if dense:
            self.Zs = np.empty((n_steps + 1, self.k), dtype=complex)
            self.Vs = np.empty((n_steps + 1, self.k), dtype=complex)
            self.jumps: list[tuple[int, int]] = []

    def _coeffs(self, Z):
        sys = self.sys
        fj = sys.metric.f.jet(Z, 1)
        A = 1.0 - (Z.real**2 + Z.imag**2)
        fz = 0.5 * (fj.deriv(1, 0) - 1j * fj.deriv(0, 1))
        phz = fz + np.conj(Z) / A
        lam = 2.0 * np.exp(fj.value) / A
        if sys.prescribed_b is not None:
            b = sys.prescribed_b
        elif sys.alpha.is_zero():
            b = 0.0
        else:
            b = sys.alpha.curl_jet(Z, 0).value / (lam * lam)
        return lam, phz, b

    @staticmethod
    def _acc(phz, b, V):
        return -2.0 * phz * V * V + 1j * b * V

    def _renorm(self, lam):
        speed = lam * np.abs(self.V)
        np.maximum(self.drift, np.abs(speed - 1.0), out=self.drift)
        self.V /= speed

    def _deck_events(self, step: int):
        over = np.abs(self.Z) > _NORMALIZE_ABS
        if not np.any(over):
            return
        group = self.sys.group
        for i in np.nonzero(over)[0]:
            z2, Tr = group.reduce_to_domain(complex(self.Z[i]))
            if Tr.is_identity(1e-15):
                continue
            self.V[i] = complex(Tr.derivative(self.Z[i])) * self.V[i]
            self.Z[i] = complex(z2)
            a, b = self.deck_a[i], self.deck_b[i]
            self.deck_a[i] = Tr.a * a + Tr.b * np.conj(b)
            self.deck_b[i] = Tr.a * b + Tr.b * np.conj(a)
            if self.dense:
                self.jumps.append((step, int(i)))

    def run(self):
        h = self.h
        if self.dense:
            self.Zs[0], self.Vs[0] = self.Z, self.V
        for step in range(self.n):
            lam, phz, b = self._coeffs(self.Z)
            self._renorm(lam)
            if self.dense:  # store the renormalized state
                self.Zs[step] = self.Z
                self.Vs[step] = self.V
            Z, V = self.Z, self.V
            k1z = V
            k1v = self._acc(phz, b, V)
            _, phz2, b2 = self._coeffs(Z + 0.5 * h * k1z)
            k2z = V + 0.5 * h * k1v
            k2v = self._acc(phz2, b2, k2z)
            _, phz3, b3 = self._coeffs(Z + 0.5 * h * k2z)
            k3z = V + 0.5 * h * k2v
            k3v = self._acc(phz3, b3, k3z)
            _, phz4, b4 = self._coeffs(Z + h * k3z)
            k4z = V + h * k3v
            k4v = self._acc(phz4, b4, k4z)
            self.Z = Z + (h / 6.0) * (k1z + 2 * k2z + 2 * k3z + k4z)
            self.V = V + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
            if self.normalize:
                self._deck_events(step + 1)
            if np.any(np.abs(self.Z) >= _BLOWUP_ABS):
                raise NumericalError(
                    "trajectory reached the disk boundary; no deck re-entry")
        lam, _, _ = self._coeffs(self.Z)
        self._renorm(lam)
        if self.dense:
            self.Zs[self.n], self.Vs[self.n] = self.Z, self.V
        return self


def flow(sys: MagneticSystem, p: PhasePoint, T: float, n_steps: int | None = None,
         dense: bool = False, normalize: bool = True) -> FlowResult:
    """Integrate the magnetic flow for time T from a phase point."""
    if not math.isfinite(T) or T < 0:
        raise InputError("flow time must be finite and nonnegative")
    n = n_steps if n_steps is not None else sys.integrator.steps_for(T)
    bf = _BatchFlow(sys, [p.z], [p.v], [T], n, dense=dense, normalize=normalize).run()
    deck = MobiusTransform(complex(bf.deck_a[0]), complex(bf.deck_b[0]))
    result = FlowResult(
        end=PhasePoint(complex(bf.Z[0]), complex(bf.V[0])),
        deck=deck,
        speed_drift=float(bf.drift[0]),
    )
    if dense:
        result.times = np.linspace(0.0, T, n + 1)
        result.z_samples = bf.Zs[:, 0].copy()
        result.v_samples = bf.Vs[:, 0].copy()
        result.jump_steps = np.array(sorted(s for s, _ in bf.jumps), dtype=int)
    return result


# ---------------------------------------------------------------------------
# Curvature criteria
# ---------------------------------------------------------------------------


def _unit_and_perp(sys: MagneticSystem, z, v):
    z = np.asarray(z, dtype=complex).ravel()
    v = np.asarray(v, dtype=complex).ravel()
    speed = sys.metric.norm(z, v)
    if np.any(np.abs(speed - 1.0) > 1e-10):
        warnings.warn("non-unit direction normalized", stacklevel=3)
        v = v / speed
    return z, v, 1j * v


def magnetic_sectional(sys: MagneticSystem, z, v, w=None) -> np.ndarray:
    """Magnetic sectional curvature of the plane (v, w), w a unit normal.

    In two dimensions the only transverse direction is J v (up to sign and
    the value is even in w), so w defaults to J v.
    """
    z, v, jv = _unit_and_perp(sys, z, v)
    if w is None:
        w = jv
    else:
        w = np.asarray(w, dtype=complex).ravel()
        speed = sys.metric.norm(z, w)
        if np.any(np.abs(speed - 1.0) > 1e-10):
            warnings.warn("non-unit normal normalized", stacklevel=2)
            w = w / speed
        if np.any(np.abs(sys.metric.inner(z, v, w)) > 1e-8):
            warnings.warn("normal direction is not orthogonal to v", stacklevel=2)
    K = sys.metric.gaussian_curvature(z)
    b = sys.b_values(z)
    bx, by = sys.b_gradient(z)
    db_w = bx * w.real + by * w.imag
    g_jv_w = sys.metric.inner(z, jv, w)
    g_vw = sys.metric.inner(z, v, w)
    riem = K * (1.0 - g_vw**2)
    return riem + db_w * g_jv_w + 0.25 * b * b + 0.75 * (b * g_jv_w) ** 2


def dp_k(sys: MagneticSystem, z, v) -> np.ndarray:
    """Pointwise criterion integrand: sup over unit normals of
    2 R(w,v,v,w) + g(Yv, w)^2 + (n+3)|Yw|^2 - 2 g((grad_w Y)(v), w), n = 2.

    The display's derivative term is read as the covariant derivative of Y
    in the transverse direction w.
    """
    z, v, jv = _unit_and_perp(sys, z, v)
    K = sys.metric.gaussian_curvature(z)
    b = sys.b_values(z)
    bx, by = sys.b_gradient(z)
    vals = []
    for w in (jv, -jv):
        g_jv_w = sys.metric.inner(z, jv, w)
        db_w = bx * w.real + by * w.imag
        vals.append(2.0 * K + (b * g_jv_w) ** 2 + 5.0 * b * b - 2.0 * db_w * g_jv_w)
    return np.maximum(vals[0], vals[1])


def crit_dp_from_samples(k_values: np.ndarray, T: float) -> float:
    """T * integral of max(0, k) over a period, from uniform samples
    (composite Simpson; sample count must be odd)."""
    k_values = np.maximum(np.asarray(k_values, dtype=float), 0.0)
    n = k_values.size - 1
    if n % 2:
        raise InputError("Simpson rule needs an even interval count")
    h = T / n
    integral = (h / 3.0) * (k_values[0] + k_values[-1]
                            + 4.0 * k_values[1:-1:2].sum()
                            + 2.0 * k_values[2:-1:2].sum())
    return float(T * integral)


def crit_dp(sys: MagneticSystem, orbit) -> tuple[float, bool]:
    """Closed-orbit criterion: T * int max(0, k) <= 4 along the orbit."""
    if not orbit.refined:
        raise InputError("crit_dp requires a refined orbit")
    k_vals = dp_k(sys, orbit.z_samples, orbit.v_samples)
    value = crit_dp_from_samples(k_vals, orbit.period)
    return value, value <= 4.0


#: Coefficient (n/2 - 1 + 2/(n+2)) at n = 2.
CRIT_B_COEFF = 0.5


def crit_b_margin(sys: MagneticSystem, points, n_angles: int = 16
                  ) -> tuple[float, bool]:
    """Worst value over the grid of sec_v(w) + 1/2 g(w, Yv)^2, w = J v.

    Negative margin certifies the sectional-curvature criterion.  The
    quantifier is restricted to w orthogonal to v (the only section in two
    dimensions); with w = v the expression is nonnegative for any nonzero
    field and the criterion would be vacuous.
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size == 0:
        raise InputError("empty evaluation grid")
    K = sys.metric.gaussian_curvature(z)
    b = sys.b_values(z)
    bx, by = sys.b_gradient(z)
    lam = sys.metric.lam_values(z)
    worst = -np.inf
    for j in range(n_angles):
        theta = 2.0 * math.pi * j / n_angles
        w = 1j * np.exp(1j * theta) / lam  # unit normal to v = e^{i theta}/lam
        val = K + (bx * w.real + by * w.imag) + (1.0 + CRIT_B_COEFF) * b * b
        worst = max(worst, float(np.max(val)))
    return worst, worst < 0.0


def constant_b_system(b: float, metric: ConformalMetric | None = None,
                      integrator: IntegratorSettings | None = None) -> MagneticSystem:
    """Universal-cover harness with a prescribed constant field strength.

    Test-only: an exact system on the closed surface cannot have constant
    nonzero b, so these systems carry no group and never deck-normalize.
    """
    return MagneticSystem(
        metric=metric or ConformalMetric.hyperbolic(),
        alpha=OneFormField.zero(),
        group=None,
        domain=None,
        prescribed_b=float(b),
        integrator=integrator or IntegratorSettings(),
        label=f"constant-b={b}",
    )
