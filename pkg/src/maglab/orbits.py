"""Closed magnetic geodesics and the marked action spectrum.

Pipeline per free homotopy class: seed a discrete loop on the axis of the
class's deck transformation, descend the discrete time-free action, then
polish with Newton shooting against the flow.

Loops are stored in surface charts: every point sits inside (a buffer of)
the fundamental octagon, and each segment carries a deck transition mapping
the next point into the current chart.  This keeps all coordinates far from
the disk boundary for arbitrarily long words; the homotopy class lives in
the transition sequence, whose ordered product is conjugate to the class's
deck transformation.

Shooting solves phi_T(p) = H p (H the loop holonomy) as a 3x3 Newton system
in (transversal offset, direction angle, period); the time-shift gauge is
fixed by constraining the base point to a transversal.  Single shooting on
an Anosov flow conditions like e^T, so periods beyond a configured horizon
are left at the descent solution and flagged unrefined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .dynamics import MagneticSystem, PhasePoint, _BatchFlow, _NORMALIZE_ABS, crit_dp
from .errors import ConstructionError, InputError, StagnationError
from .surface import (MobiusTransform, Word, cyclic_reduce, canonical_class,
                      geodesic_step, translation_length)

_RECHART_ABS = math.tanh(2.95 / 2.0)


@dataclass
class DiscreteLoop:
    """Polygonal loop in surface charts with deck transitions per segment."""

    word: str
    points: np.ndarray            # (M,) complex, chart-local
    trans: list[MobiusTransform]  # segment i continues to trans[i](points[i+1])
    period: float

    @property
    def size(self) -> int:
        return self.points.size

    def continuations(self) -> np.ndarray:
        """Chart-i coordinates of the segment endpoints trans[i](z_{i+1})."""
        z_next = np.roll(self.points, -1)
        ta = np.array([t.a for t in self.trans])
        tb = np.array([t.b for t in self.trans])
        return (ta * z_next + tb) / (np.conj(tb) * z_next + np.conj(ta))

    def transition_derivatives(self) -> np.ndarray:
        """d trans[i] / dz evaluated at points[i+1]."""
        z_next = np.roll(self.points, -1)
        ta = np.array([t.a for t in self.trans])
        tb = np.array([t.b for t in self.trans])
        den = np.conj(tb) * z_next + np.conj(ta)
        return 1.0 / (den * den)

    def holonomy(self, start: int = 0) -> MobiusTransform:
        """Ordered transition product from `start`; conjugate to the class."""
        H = MobiusTransform.identity()
        for i in range(self.size):
            H = H @ self.trans[(start + i) % self.size]
        return H

    def rotated(self, start: int) -> "DiscreteLoop":
        idx = (np.arange(self.size) + start) % self.size
        return DiscreteLoop(self.word, self.points[idx],
                            [self.trans[i] for i in idx], self.period)


def _axis_through_origin_frame(M: MobiusTransform) -> tuple[complex, complex]:
    """Foot of the perpendicular from 0 to the axis of M, and the unit
    tangent of the axis there, oriented toward the attracting endpoint."""
    a, b = M.a, M.b
    if abs(b) < 1e-14:
        raise InputError("element fixes the origin; no axis frame")
    c2, c1, c0 = np.conj(b), np.conj(a) - a, -b
    disc = np.sqrt(c1 * c1 - 4.0 * c2 * c0)
    roots = [(-c1 + disc) / (2.0 * c2), (-c1 - disc) / (2.0 * c2)]
    # attracting endpoint: |derivative| < 1
    derivs = [1.0 / abs(np.conj(b) * xi + np.conj(a)) ** 2 for xi in roots]
    xi_plus = roots[0] if derivs[0] < 1.0 else roots[1]
    xi_minus = roots[1] if derivs[0] < 1.0 else roots[0]
    if abs(xi_plus + xi_minus) < 1e-9:
        foot = 0.0j
        tangent = xi_plus / abs(xi_plus)
    else:
        A = np.array([[xi_plus.real, xi_plus.imag],
                      [xi_minus.real, xi_minus.imag]])
        cx, cy = np.linalg.solve(A, np.array([1.0, 1.0]))
        c = complex(cx, cy)
        r = math.sqrt(abs(c) ** 2 - 1.0)
        foot = c * (abs(c) - r) / abs(c)
        t = 1j * (foot - c)
        t /= abs(t)
        if (np.conj(t) * (xi_plus - foot)).real < 0:
            t = -t
        tangent = t
    return complex(foot), complex(tangent)


def _match_closing_element(group, z0: complex, target: complex,
                           tol: float = 1e-8) -> MobiusTransform | None:
    """The (unique) deck element sending z0 to the target, if one exists.

    Both points sit well inside the disk, so the element is short and is
    found in the cached enumeration; forming it this way sidesteps the
    ill-conditioned product of large deck matrices for long words.
    """
    for _, T, _ in group.elements_within(5.6):
        if abs(complex(T.apply(z0)) - target) < tol:
            return T
    return None


def initial_loop(sys: MagneticSystem, word: str, n_points: int | None = None
                 ) -> DiscreteLoop:
    """Seed loop: equally spaced points along the axis of the class, walked
    in surface charts, with T set to the translation length."""
    if sys.group is None:
        raise InputError("closed orbits need a surface group")
    wred = cyclic_reduce(word)
    if not wred:
        raise InputError("contractible classes carry no minimizer")
    M = n_points if n_points is not None else sys.solver.loop_points
    if M < 16:
        raise InputError("loops need at least 16 points")
    Mw = sys.group.word_to_matrix(wred)
    length = translation_length(Mw)
    foot, tangent = _axis_through_origin_frame(Mw)
    ds = length / M
    for attempt_shift in (0.0, 0.5, 1.0 / 3.0):
        z, t = foot, tangent
        if attempt_shift:
            z, t = geodesic_step(z, t, attempt_shift * ds)
        start = z
        z2, g0 = sys.group.reduce_to_domain(z)
        if not g0.is_identity(1e-15):
            t = complex(g0.derivative(start)) * t
            t /= abs(t)
        z = complex(z2)
        z0 = z
        points = [z0]
        trans: list[MobiusTransform] = []
        for i in range(M):
            y, t2 = geodesic_step(z, t, ds)
            if i == M - 1:
                # close against the start chart by matching a deck element
                tau = _match_closing_element(sys.group, z0, y)
                if tau is None:
                    break
                trans.append(tau)
                return DiscreteLoop(wred, np.array(points, dtype=complex),
                                    trans, length)
            if abs(y) > _NORMALIZE_ABS:
                z2, nu = sys.group.reduce_to_domain(y)
                t2 = complex(nu.derivative(y)) * t2
                trans.append(nu.inverse())
                z = complex(z2)
            else:
                trans.append(MobiusTransform.identity())
                z = y
            t = t2 / abs(t2)
            points.append(z)
    raise ConstructionError(f"axis walk for {wred!r} failed to close")


def _action_terms(sys: MagneticSystem, loop: DiscreteLoop):
    z = loop.points
    w = loop.continuations()
    mid = 0.5 * (z + w)
    delta = w - z
    lam2j = sys.metric.lam2_jet(mid, 1)
    a1j, a2j = sys.alpha.component_jets(mid, 1)
    return z, w, mid, delta, lam2j, (a1j, a2j)


def discrete_action(sys: MagneticSystem, loop: DiscreteLoop) -> float:
    """Midpoint discretization of the time-free action of the loop."""
    _, _, _, delta, lam2j, (a1j, a2j) = _action_terms(sys, loop)
    h = loop.period / loop.size
    kinetic = float(np.sum(lam2j.value * np.abs(delta) ** 2)) / (2.0 * h)
    work = float(np.sum(a1j.value * delta.real + a2j.value * delta.imag))
    return kinetic + 0.5 * loop.period - work


def _gradient_parts(sys: MagneticSystem, loop: DiscreteLoop, pts: np.ndarray):
    """Kinetic and 1-form work terms with their analytic point gradients.

    Returns (Q, W, gQ, gW) where the discrete action at period T is
    (M Q)/(2T) + T/2 - W and the gradients are complex per-point.
    """
    work_loop = DiscreteLoop(loop.word, pts, loop.trans, loop.period)
    _, _, _, delta, lam2j, (a1j, a2j) = _action_terms(sys, work_loop)
    lam2 = lam2j.value
    glam2 = lam2j.deriv(1, 0) + 1j * lam2j.deriv(0, 1)
    a1, a2 = a1j.value, a2j.value
    ga1 = a1j.deriv(1, 0) + 1j * a1j.deriv(0, 1)
    ga2 = a2j.deriv(1, 0) + 1j * a2j.deriv(0, 1)

    absd2 = np.abs(delta) ** 2
    Q = float(np.sum(lam2 * absd2))
    W = float(np.sum(a1 * delta.real + a2 * delta.imag))

    dQ_ddelta = 2.0 * lam2 * delta
    dQ_dmid = absd2 * glam2
    dW_ddelta = a1 + 1j * a2
    dW_dmid = delta.real * ga1 + delta.imag * ga2

    tder = work_loop.transition_derivatives()
    gQ = -dQ_ddelta + 0.5 * dQ_dmid \
        + np.roll(np.conj(tder) * (dQ_ddelta + 0.5 * dQ_dmid), 1)
    gW = -dW_ddelta + 0.5 * dW_dmid \
        + np.roll(np.conj(tder) * (dW_ddelta + 0.5 * dW_dmid), 1)
    return Q, W, gQ, gW


def _reduced_action_and_grad(sys: MagneticSystem, loop: DiscreteLoop,
                             pts: np.ndarray):
    """Action minimized over the period in closed form, with its analytic
    gradient in the loop points.  Optimal T equals the discrete length."""
    Q, W, gQ, gW = _gradient_parts(sys, loop, pts)
    M = pts.size
    T_opt = math.sqrt(M * Q)
    value = T_opt - W
    grad = (M / (2.0 * T_opt)) * gQ - gW
    return value, grad, T_opt


#: Euclidean wall keeping descent iterates inside the field-evaluation region.
_WALL_ABS = math.tanh(3.2 / 2.0)


def _banded_hessian(sys: MagneticSystem, loop: DiscreteLoop, pts: np.ndarray,
                    T: float):
    """Fixed-period Hessian of the discrete action, assembled analytically.

    Per segment S = k L(m)|d|^2 - a(m).d with k = M/(2T), m the midpoint
    and d the chord; points couple only to their neighbors, through the
    segment transition maps (whose curvature contributes a second-order
    warp term).  Analytic assembly matters: the Hessian has a near-null
    time-shift mode that finite differences cannot resolve through their
    roundoff floor.
    """
    import scipy.sparse

    M = pts.size
    k = M / (2.0 * T)
    work = DiscreteLoop(loop.word, pts, loop.trans, loop.period)
    z = pts
    w = work.continuations()
    mid = 0.5 * (z + w)
    delta = w - z

    lam2j = sys.metric.lam2_jet(mid, 2)
    a1j, a2j = sys.alpha.component_jets(mid, 2)
    L = lam2j.value
    Lx, Ly = lam2j.deriv(1, 0), lam2j.deriv(0, 1)
    Lxx, Lxy, Lyy = lam2j.deriv(2, 0), lam2j.deriv(1, 1), lam2j.deriv(0, 2)
    a1, a2 = a1j.value, a2j.value
    a1x, a1y = a1j.deriv(1, 0), a1j.deriv(0, 1)
    a2x, a2y = a2j.deriv(1, 0), a2j.deriv(0, 1)
    a1xx, a1xy, a1yy = a1j.deriv(2, 0), a1j.deriv(1, 1), a1j.deriv(0, 2)
    a2xx, a2xy, a2yy = a2j.deriv(2, 0), a2j.deriv(1, 1), a2j.deriv(0, 2)

    dx, dy = delta.real, delta.imag
    d2 = dx * dx + dy * dy

    def mat(m11, m12, m21, m22):
        return np.array([[m11, m12], [m21, m22]])

    # second-derivative blocks in (delta, mid) coordinates, shape (2, 2, M)
    S_dd = mat(2 * k * L, np.zeros(M), np.zeros(M), 2 * k * L)
    S_dm = mat(2 * k * dx * Lx - a1x, 2 * k * dx * Ly - a1y,
               2 * k * dy * Lx - a2x, 2 * k * dy * Ly - a2y)
    S_md = S_dm.transpose(1, 0, 2)
    S_mm = mat(k * d2 * Lxx - dx * a1xx - dy * a2xx,
               k * d2 * Lxy - dx * a1xy - dy * a2xy,
               k * d2 * Lxy - dx * a1xy - dy * a2xy,
               k * d2 * Lyy - dx * a1yy - dy * a2yy)

    H_zz = S_dd - 0.5 * (S_dm + S_md) + 0.25 * S_mm
    H_zw = -S_dd - 0.5 * S_dm + 0.5 * S_md + 0.25 * S_mm
    H_ww = S_dd + 0.5 * (S_dm + S_md) + 0.25 * S_mm

    # chain the w side through the transitions: w = tau(z_next)
    z_next = np.roll(pts, -1)
    ta = np.array([t.a for t in work.trans])
    tb = np.array([t.b for t in work.trans])
    den = np.conj(tb) * z_next + np.conj(ta)
    tp = 1.0 / (den * den)          # tau'
    tpp = -2.0 * np.conj(tb) / den**3  # tau''
    J = mat(tp.real, -tp.imag, tp.imag, tp.real)

    def matmul(A, B):
        return np.einsum("ijm,jkm->ikm", A, B)

    H_zn = matmul(H_zw, J)  # couples z_i to z_{i+1}
    H_nn = matmul(J.transpose(1, 0, 2), matmul(H_ww, J))
    # warp of the transition: gradient at w times tau''
    Gw = (2 * k * L * dx + 0.5 * (k * d2 * Lx - dx * a1x - dy * a2x) - a1) \
        + 1j * (2 * k * L * dy + 0.5 * (k * d2 * Ly - dx * a1y - dy * a2y) - a2)
    Kc = np.conj(Gw) * tpp
    H_nn = H_nn + mat(Kc.real, -Kc.imag, -Kc.imag, -Kc.real)

    idx = np.arange(M)
    nxt = (idx + 1) % M
    rows, cols, vals = [], [], []
    for r in range(2):
        for c in range(2):
            rows.append(2 * idx + r)
            cols.append(2 * idx + c)
            vals.append(H_zz[r, c] + np.roll(H_nn[r, c], 1))
            rows.append(2 * idx + r)
            cols.append(2 * nxt + c)
            vals.append(H_zn[r, c])
            rows.append(2 * nxt + r)
            cols.append(2 * idx + c)
            vals.append(H_zn[c, r])
    return scipy.sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * M, 2 * M))


def _polish_newton(sys: MagneticSystem, loop: DiscreteLoop, pts: np.ndarray,
                   gtol: float, max_rounds: int = 15):
    """Drive the reduced gradient below gtol with exact coupled Newton.

    Line-search descent cannot verify decreases below the machine
    resolution of the action value, which floors its gradient near 1e-6;
    Newton on the stationarity system has no such floor.  The reduced
    Hessian is the banded fixed-period Hessian minus an analytic rank-one
    period coupling, so each step costs two sparse solves
    (Sherman-Morrison) on the factorized band.
    """
    import scipy.sparse.linalg as spla

    M = pts.size

    def grad_state(p):
        Q, W, gQ, gW = _gradient_parts(sys, loop, p)
        T = math.sqrt(M * Q)
        g = (M / (2.0 * T)) * gQ - gW
        return Q, T, gQ, g, float(np.max(np.abs(g)))

    def pack(v):
        return np.column_stack([v.real, v.imag]).ravel()

    best = pts
    Q, T, gQ, g, best_norm = grad_state(best)
    for _ in range(max_rounds):
        if best_norm < gtol:
            break
        H = _banded_hessian(sys, loop, best, T)
        n2 = 2 * M
        # time-shift null vector by inverse iteration on a weakly
        # regularized factorization (the mode is numerically null: sampling
        # a smooth closed curve pins the phase only below roundoff)
        try:
            lu_reg = spla.splu(H + 1e-9 * scipy.sparse.identity(n2, format="csc"))
            vshift = pack((np.roll(best, -1) - best))
            for _ in range(3):
                vshift = lu_reg.solve(vshift)
                vshift /= np.linalg.norm(vshift)
        except RuntimeError:
            break
        # coupled Newton in (points, period) with the shift mode deflated:
        # bordered system [[H, u, v], [u^T, beta, 0], [v^T, 0, 0]]
        u = pack(-(M / (2.0 * T * T)) * gQ)
        beta = M * Q / T**3
        A = scipy.sparse.bmat(
            [[H, u[:, None], vshift[:, None]],
             [u[None, :], [[beta]], None],
             [vshift[None, :], None, [[0.0]]]], format="csc")
        rhs = np.concatenate([pack(-g), [0.0, 0.0]])
        try:
            sol = spla.splu(A).solve(rhs)
        except RuntimeError:
            break
        sx = sol[:n2].reshape(-1, 2)
        s = sx[:, 0] + 1j * sx[:, 1]
        cap = float(np.max(np.abs(s)))
        if cap > 0.02:
            s *= 0.02 / cap
        improved = False
        for damp in (1.0, 0.5, 0.25):
            cand = best + damp * s
            if np.any(np.abs(cand) > _WALL_ABS):
                continue
            Qc, Tc, gQc, gc, gn = grad_state(cand)
            if gn < best_norm:
                best, Q, T, gQ, g, best_norm = cand, Qc, Tc, gQc, gc, gn
                improved = True
                break
        if not improved:
            break
    return best, best_norm


def minimize_action(sys: MagneticSystem, loop: DiscreteLoop) -> DiscreteLoop:
    """Descend the discrete action jointly in (points, period).

    The period is eliminated in closed form (its optimum is the discrete
    length).  Point positions descend with L-BFGS on the analytic gradient
    (plain gradient descent with backtracking when configured), then a
    banded Newton polish takes the gradient sup-norm to the solver
    tolerance, which line searches alone cannot reach in double precision.
    """
    method = sys.solver.method
    gtol = sys.solver.grad_tol
    maxiter = sys.solver.max_iter

    def pack(pts):
        return np.column_stack([pts.real, pts.imag]).ravel()

    def unpack(x):
        xy = x.reshape(-1, 2)
        return xy[:, 0] + 1j * xy[:, 1]

    def fun(x):
        pts = unpack(x)
        over = np.abs(pts) ** 2 - _WALL_ABS**2
        if np.any(over > 0):
            # hard wall: reject the trial step, push back inward
            excess = np.maximum(over, 0.0)
            gpen = 2e6 * excess * pts
            return 1e6 + 1e6 * float(excess.sum()), pack(gpen)
        value, grad, _ = _reduced_action_and_grad(sys, loop, pts)
        return value, pack(grad)

    x0 = pack(loop.points)
    if method == "lbfgs":
        res = scipy.optimize.minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-18, "maxcor": 25})
        x = np.asarray(res.x)
    elif method == "gd":
        x = x0
        value, grad = fun(x)
        step = 1.0
        bad_streak = 0
        for _ in range(maxiter):
            g = grad
            if np.max(np.abs(g)) < 1e-6:
                break  # at the line-search resolution floor; polish takes over
            improved = False
            for _ in range(60):
                xn = x - step * g
                vn, gn = fun(xn)
                if vn < value - 1e-16:
                    x, value, grad = xn, vn, gn
                    step *= 1.5
                    improved = True
                    break
                step *= 0.5
            if improved:
                bad_streak = 0
            else:
                bad_streak += 1
                if bad_streak >= 50:
                    raise StagnationError(
                        "gradient descent made no progress for 50 iterations",
                        {"value": value, "grad_inf": float(np.max(np.abs(g))),
                         "word": loop.word})
    else:
        raise InputError(f"unknown descent method {method!r}")

    # The chord discretization is chart-dependent at O(h^2), so rechart
    # first when points drifted out, then polish in the final charts.
    work = DiscreteLoop(loop.word, unpack(x), loop.trans, loop.period)
    gnorm = math.inf
    for _ in range(3):
        if np.any(np.abs(work.points) > _RECHART_ABS):
            work = rechart_loop(sys, work)
        pts, gnorm = _polish_newton(sys, work, work.points, gtol)
        work = DiscreteLoop(loop.word, pts, work.trans, work.period)
        if not np.any(np.abs(pts) > _RECHART_ABS):
            break
    if gnorm > 100 * gtol:
        raise StagnationError(
            "action descent stalled above gradient tolerance",
            {"grad_inf": gnorm, "word": loop.word, "method": method})
    _, _, T_opt = _reduced_action_and_grad(sys, work, work.points)
    return DiscreteLoop(loop.word, work.points, work.trans, T_opt)


def rechart_loop(sys: MagneticSystem, loop: DiscreteLoop) -> DiscreteLoop:
    """Re-normalize every point into the octagon and rebuild transitions."""
    group = sys.group
    new_pts = np.empty_like(loop.points)
    normalizers = []
    for i, z in enumerate(loop.points):
        z2, nu = group.reduce_to_domain(complex(z))
        new_pts[i] = z2
        normalizers.append(nu)
    new_trans = []
    for i in range(loop.size):
        nxt = (i + 1) % loop.size
        new_trans.append(normalizers[i] @ loop.trans[i] @ normalizers[nxt].inverse())
    return DiscreteLoop(loop.word, new_pts, new_trans, loop.period)


# ---------------------------------------------------------------------------
# Newton shooting
# ---------------------------------------------------------------------------


@dataclass
class ClosedOrbit:
    """Refined periodic magnetic geodesic for one free homotopy class."""

    word: str
    system_id: str
    initial: PhasePoint
    period: float
    action: float
    length: float
    alpha_integral: float
    el_residual: float
    speed_drift: float
    closure_residual: float
    refined: bool
    failure: str | None = None
    times: np.ndarray | None = None
    z_samples: np.ndarray | None = None
    v_samples: np.ndarray | None = None
    crit_dp_value: float | None = None


class _ShootProblem:
    def __init__(self, sys: MagneticSystem, loop: DiscreteLoop):
        self.sys = sys
        start = int(np.argmin(np.abs(loop.points)))
        self.loop = loop.rotated(start)
        self.word = loop.word
        self.H = self.loop.holonomy()
        self.z_ref = complex(self.loop.points[0])
        w0 = complex(self.loop.continuations()[0])
        d = w0 - self.z_ref
        self.theta0 = math.atan2(d.imag, d.real)
        self.normal = 1j * np.exp(1j * self.theta0)
        self.T0 = loop.period
        self.n_steps = sys.integrator.steps_for(self.T0)
        self.x = np.array([0.0, self.theta0, self.T0])
        self.residual = np.full(3, np.inf)
        self.done = False
        self.fail: str | None = None

    def phase(self, x) -> tuple[complex, complex]:
        z0 = self.z_ref + x[0] * self.normal
        lam = float(self.sys.metric.lam_values(np.array([z0]))[0])
        v0 = np.exp(1j * x[1]) / lam
        return complex(z0), complex(v0)

    def residual_from(self, z_end, v_end, deck_a, deck_b, x):
        """Match the endpoint back to the start chart and form F(x)."""
        z0, _ = self.phase(x)
        candidates = [MobiusTransform.identity()]
        candidates += list(self.sys.group.letter_transforms.values())
        best = None
        for S in candidates:
            zq = complex(S.apply(z_end))
            d = abs(zq - z0)
            if best is None or d < best[0]:
                best = (d, S)
        _, S = best
        zq, vq = S.apply_tangent(z_end, v_end)
        deck = S @ MobiusTransform(deck_a, deck_b)
        dtheta = math.atan2(vq.imag, vq.real) - x[1]
        dtheta = (dtheta + math.pi) % (2.0 * math.pi) - math.pi
        F = np.array([zq.real - z0.real, zq.imag - z0.imag, dtheta])
        class_ok = (deck @ self.H).sign_normalized().distance_to(
            MobiusTransform.identity()) < 0.2
        return F, complex(zq), complex(vq), class_ok


def _flow_states(sys, states, T_list, n_steps):
    Z0 = np.array([s[0] for s in states], dtype=complex)
    V0 = np.array([s[1] for s in states], dtype=complex)
    bf = _BatchFlow(sys, Z0, V0, np.asarray(T_list, dtype=float), n_steps).run()
    return bf


def refine_orbits(sys: MagneticSystem, loops: list[DiscreteLoop]
                  ) -> list[ClosedOrbit]:
    """Newton-refine minimized loops into closed orbits (batched)."""
    problems = [_ShootProblem(sys, lp) for lp in loops]
    for p in problems:
        if p.T0 > sys.solver.max_shoot_period:
            p.done = True
            p.fail = "period beyond single-shooting horizon"

    groups: dict[int, list[_ShootProblem]] = {}
    for p in problems:
        if not p.done:
            groups.setdefault(p.n_steps, []).append(p)

    delta = 1e-6
    for n_steps, probs in groups.items():
        active = list(probs)
        for _ in range(sys.solver.max_newton):
            if not active:
                break
            states, times = [], []
            for p in active:
                xs = [p.x,
                      p.x + np.array([delta, 0, 0]),
                      p.x + np.array([0, delta, 0]),
                      p.x + np.array([0, 0, delta * max(1.0, p.x[2])])]
                for x in xs:
                    states.append(p.phase(x))
                    times.append(x[2])
            bf = _flow_states(sys, states, times, n_steps)
            still = []
            for idx, p in enumerate(active):
                cols = []
                Fs = []
                ok = True
                for j in range(4):
                    k = 4 * idx + j
                    x = [p.x,
                         p.x + np.array([delta, 0, 0]),
                         p.x + np.array([0, delta, 0]),
                         p.x + np.array([0, 0, delta * max(1.0, p.x[2])])][j]
                    F, _, _, class_ok = p.residual_from(
                        bf.Z[k], bf.V[k], bf.deck_a[k], bf.deck_b[k], x)
                    ok = ok and class_ok
                    Fs.append(F)
                if not ok:
                    p.done = True
                    p.fail = "trajectory left the homotopy class"
                    continue
                F0 = Fs[0]
                p.residual = F0
                if np.max(np.abs(F0)) < sys.solver.newton_tol:
                    p.done = True
                    continue
                steps = [delta, delta, delta * max(1.0, p.x[2])]
                J = np.column_stack([(Fs[1 + m] - F0) / steps[m] for m in range(3)])
                try:
                    dx = np.linalg.solve(J, -F0)
                except np.linalg.LinAlgError:
                    p.done = True
                    p.fail = "singular shooting Jacobian"
                    continue
                scale = 1.0
                norm0 = np.max(np.abs(F0))
                # damped update, re-evaluated in a small batch below
                p._pending = (dx, scale, norm0)
                still.append(p)
            # damping: accept full step, halve while the residual grows
            for p in still:
                dx, scale, norm0 = p._pending
                for _ in range(5):
                    x_try = p.x + scale * dx
                    if x_try[2] <= 0:
                        scale *= 0.5
                        continue
                    bf1 = _flow_states(sys, [p.phase(x_try)], [x_try[2]], n_steps)
                    F, _, _, class_ok = p.residual_from(
                        bf1.Z[0], bf1.V[0], bf1.deck_a[0], bf1.deck_b[0], x_try)
                    if class_ok and (np.max(np.abs(F)) < norm0 or scale < 0.2):
                        p.x = x_try
                        p.residual = F
                        break
                    scale *= 0.5
                else:
                    p.done = True
                    p.fail = "Newton damping exhausted"
            active = [p for p in active if not p.done]
        for p in active:
            if np.max(np.abs(p.residual)) > sys.solver.newton_accept:
                p.done = True
                p.fail = "Newton did not reach the acceptance residual"

    return [_assemble_orbit(sys, p, lp) for p, lp in zip(problems, loops)]


def _fd4(values: np.ndarray, stride: int, h: float) -> np.ndarray:
    """Fourth-order centered first derivative on a uniform grid."""
    s = stride
    num = (-values[4 * s:] + 8.0 * values[3 * s:-s]
           - 8.0 * values[s:-3 * s] + values[:-4 * s])
    return num / (12.0 * s * h)


def _assemble_orbit(sys: MagneticSystem, p: _ShootProblem, loop: DiscreteLoop
                    ) -> ClosedOrbit:
    refined = p.fail is None and np.max(np.abs(p.residual)) <= sys.solver.newton_accept
    if not refined:
        # descent-level fallback: loop data, no samples
        work = DiscreteLoop(loop.word, loop.points, loop.trans, loop.period)
        action = discrete_action(sys, work)
        w = work.continuations()
        mid = 0.5 * (loop.points + w)
        delta = w - loop.points
        lam = sys.metric.lam_values(mid)
        a1, a2 = sys.alpha.values(mid)
        length = float(np.sum(lam * np.abs(delta)))
        alpha_integral = float(np.sum(a1 * delta.real + a2 * delta.imag))
        z0 = complex(loop.points[0])
        v0 = (w[0] - loop.points[0])
        return ClosedOrbit(
            word=loop.word, system_id=sys.system_id,
            initial=sys.phase_point(z0, v0),
            period=loop.period, action=action, length=length,
            alpha_integral=alpha_integral,
            el_residual=math.nan, speed_drift=math.nan,
            closure_residual=float(np.max(np.abs(p.residual)))
            if np.all(np.isfinite(p.residual)) else math.nan,
            refined=False, failure=p.fail or "unrefined")

    T = float(p.x[2])
    n = p.n_steps
    z0, v0 = p.phase(p.x)
    bf = _BatchFlow(sys, [z0], [v0], [T], n, dense=True).run()
    Z = bf.Zs[:, 0]
    V = bf.Vs[:, 0]
    h = T / n

    lam = sys.metric.lam_values(Z)
    speed = lam * np.abs(V)
    a1, a2 = sys.alpha.values(Z)
    along = a1 * V.real + a2 * V.imag

    def simpson(y):
        return (h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())

    alpha_integral = float(simpson(along))
    length = float(simpson(speed))
    energy = float(simpson(0.5 * speed**2))
    action = energy + 0.5 * T - alpha_integral

    # local Euler-Lagrange residual, masked around deck-normalization jumps
    stride = max(1, n // 1000)
    fj = sys.metric.f.jet(Z, 1)
    A = 1.0 - np.abs(Z) ** 2
    phz = 0.5 * (fj.deriv(1, 0) - 1j * fj.deriv(0, 1)) + np.conj(Z) / A
    b = sys.b_values(Z)
    vdot = _fd4(V, stride, h)
    core = slice(2 * stride, n + 1 - 2 * stride)
    res = np.abs(vdot + 2.0 * phz[core] * V[core] ** 2 - 1j * b[core] * V[core])
    res *= lam[core]
    mask = np.ones(res.size, dtype=bool)
    jumps = sorted(s for s, _ in bf.jumps)
    for s in jumps:
        lo = max(0, s - 2 * stride - 2 * stride)
        hi = min(res.size, s)
        mask[lo:hi] = False
    el_residual = float(np.max(res[mask])) if np.any(mask) else math.nan

    stride_store = 1
    target = sys.solver.stored_samples - 1
    for d in range(max(1, n // target), 0, -1):
        if (n // 2) % d == 0:
            stride_store = d
            break
    orbit = ClosedOrbit(
        word=loop.word, system_id=sys.system_id,
        initial=PhasePoint(z0, v0), period=T,
        action=action, length=length, alpha_integral=alpha_integral,
        el_residual=el_residual, speed_drift=float(bf.drift[0]),
        closure_residual=float(np.max(np.abs(p.residual))),
        refined=True,
        times=np.arange(0, n + 1, stride_store) * h,
        z_samples=Z[::stride_store].copy(),
        v_samples=V[::stride_store].copy(),
    )
    return orbit


# ---------------------------------------------------------------------------
# Spectrum assembly
# ---------------------------------------------------------------------------


@dataclass
class Spectrum:
    system_id: str
    entries: list[dict]

    def entry(self, word: str) -> dict:
        canon = canonical_class(word)
        for e in self.entries:
            if e["word"] == canon:
                return e
        raise KeyError(word)


def solve_class(sys: MagneticSystem, word: str, n_points: int | None = None
                ) -> ClosedOrbit:
    """Full pipeline for a single class: seed, descend, refine."""
    loop = initial_loop(sys, word, n_points)
    loop = minimize_action(sys, loop)
    return refine_orbits(sys, [loop])[0]


def _class_entry(sys: MagneticSystem, orbit: ClosedOrbit,
                 with_crit_dp: bool = True) -> dict:
    entry = {
        "word": orbit.word,
        "action": orbit.action,
        "length": orbit.length,
        "period": orbit.period,
        "el_residual": orbit.el_residual,
        "refined": orbit.refined,
    }
    if with_crit_dp and orbit.refined:
        value, _ = crit_dp(sys, orbit)
        orbit.crit_dp_value = value
        entry["crit_dp"] = value
    else:
        entry["crit_dp"] = math.nan
    if orbit.failure:
        entry["error"] = orbit.failure
    return entry


def marked_spectrum(sys: MagneticSystem, words, jobs: int = 1,
                    with_crit_dp: bool = True, n_points: int | None = None
                    ) -> tuple[Spectrum, list[ClosedOrbit]]:
    """Action-minimizing orbit per canonical class, plus the spectrum table."""
    canon: list[str] = []
    for w in words:
        c = canonical_class(w.letters if isinstance(w, Word) else w)
        if not c:
            raise InputError("spectrum words must be noncontractible")
        if c not in canon:
            canon.append(c)

    if jobs > 1:
        import concurrent.futures
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            orbits = list(pool.map(_solve_class_job,
                                   [(sys, w, n_points) for w in canon]))
    else:
        loops = []
        for w in canon:
            loops.append(minimize_action(sys, initial_loop(sys, w, n_points)))
        orbits = refine_orbits(sys, loops)

    entries = [_class_entry(sys, orb, with_crit_dp) for orb in orbits]
    return Spectrum(sys.system_id, entries), orbits


def _solve_class_job(args):
    sys, word, n_points = args
    return solve_class(sys, word, n_points)
