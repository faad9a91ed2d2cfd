"""Normal extremal flow of the (sub-)Riemannian kinetic Hamiltonians.

For a metric given by a Gram matrix W on the distribution frame X_1..X_m,
h(p, q) = (1/2) u^T W(q)^{-1} u with quasi-impulses u_i = p(X_i(q)). Hamilton's
equations are evaluated with exact symbolic q-derivatives of the frame and the
Gram matrix; no finite differencing enters the right-hand side.
"""

import csv

import numpy as np
from scipy.integrate import solve_ivp

from . import expr as ex

_BOUNDARY_EPS = 1e-12


def quasi_impulses(model, frame, lam):
    """u_i = p(X_i) for the columns of `frame` (default: the model frame)."""
    q, p = lam
    if frame is None:
        frame = model.frame_at(tuple(q))
    return np.asarray(p, dtype=float) @ np.asarray(frame, dtype=float)


def hamiltonian(model, metric_tag, lam):
    """Kinetic energy (1/2) |p restricted to D|^2 in the dual metric norm."""
    q, p = lam
    q = tuple(q)
    m = model.m
    ED = model.frame_at(q)[:, :m]
    u = np.asarray(p, dtype=float) @ ED
    W = model.gram_at(q, metric_tag)
    return 0.5 * float(u @ np.linalg.solve(W, u))


def hamiltonian_rhs(model, metric_tag, q, p):
    """(dq/dt, dp/dt) for the canonical flow of h."""
    qt = tuple(q)
    m = model.m
    E = model.frame_at(qt)
    dE = model.dframe_at(qt)
    W = model.gram_at(qt, metric_tag)
    dW = model.dgram_at(qt, metric_tag)
    ED = E[:, :m]
    u = p @ ED
    v = np.linalg.solve(W, u)
    qdot = ED @ v
    pdot = np.empty(model.n)
    for k in range(model.n):
        pdot[k] = 0.5 * (v @ dW[k] @ v) - (p @ dE[k][:, :m]) @ v
    return qdot, pdot


class Trajectory:
    def __init__(self, t, q, p, h, clipped, t_exit=None, aux=None):
        self.t = t          # (N,)
        self.q = q          # (N, n)
        self.p = p          # (N, n)
        self.h = h          # (N,)
        self.clipped = clipped
        self.t_exit = t_exit
        self.aux = aux      # accumulated aux_rate integral, if requested

    @property
    def end(self):
        return self.q[-1], self.p[-1]


def integrate(model, metric_tag, lam0, T, tol=1e-10, max_step=1e-2,
              samples=None, aux_rate=None):
    """Integrate the extremal from lam0 = (q0, p0) over time T (sign allowed).

    Stops (clipped=True) when the base point reaches the domain boundary.
    aux_rate(q, p) -> float, when given, is integrated along the flow and the
    total is returned in Trajectory.aux.
    """
    q0, p0 = lam0
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    n = model.n
    if T == 0:
        raise ValueError("integration time must be nonzero")
    if not model.in_domain(q0):
        raise ValueError("initial point outside the model domain")

    with_aux = aux_rate is not None

    def rhs(_t, y):
        q, p = y[:n], y[n:2 * n]
        qdot, pdot = hamiltonian_rhs(model, metric_tag, q, p)
        if with_aux:
            return np.concatenate([qdot, pdot, [aux_rate(q, p)]])
        return np.concatenate([qdot, pdot])

    def hit_boundary(_t, y):
        return model.boundary_distance(y[:n]) - _BOUNDARY_EPS

    hit_boundary.terminal = True

    y0 = np.concatenate([q0, p0, [0.0]] if with_aux else [q0, p0])
    t_eval = np.linspace(0.0, T, samples) if samples else None
    # RK45 leaks ~1e-9 of energy per unit time at tol 1e-10; the 8th order
    # stepper keeps |dh| within the advertised tolerance
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=tol, atol=tol,
                    max_step=max_step, events=[hit_boundary], t_eval=t_eval,
                    dense_output=False)
    if sol.status == -1:
        raise RuntimeError("integration failed: %s" % sol.message)

    clipped = sol.status == 1
    t_exit = float(sol.t_events[0][0]) if clipped and len(sol.t_events[0]) else None
    t = sol.t
    q = sol.y[:n].T.copy()
    p = sol.y[n:2 * n].T.copy()
    if t.size == 0:
        # immediate boundary hit; report the initial state only
        t = np.array([0.0])
        q = q0[None, :].copy()
        p = p0[None, :].copy()
    h = np.array([hamiltonian(model, metric_tag, (q[i], p[i])) for i in range(len(t))])
    aux = None
    if with_aux:
        aux = float(sol.y[2 * n, -1]) if sol.y.shape[1] else 0.0
    return Trajectory(t, q, p, h, clipped, t_exit, aux)


def initial_covector(model, metric_tag, q, v, transverse=None):
    """Phase point lam0 = (q, p) whose extremal starts with velocity v.

    v is a coordinate-components vector required to lie in D(q); the covector
    is fixed on D by the metric and on the transverse fields by `transverse`
    (defaults to zero quasi-impulses there).
    """
    q = tuple(np.asarray(q, dtype=float))
    v = np.asarray(v, dtype=float)
    n, m = model.n, model.m
    E = model.frame_at(q)
    ED = E[:, :m]
    coeff, residual, *_ = np.linalg.lstsq(ED, v, rcond=None)
    if np.linalg.norm(ED @ coeff - v) > 1e-9 * max(1.0, np.linalg.norm(v)):
        raise ValueError("velocity does not lie in the distribution at %s" % (list(q),))
    u = model.gram_at(q, metric_tag) @ coeff
    trans = np.zeros(n - m) if transverse is None else np.asarray(transverse, dtype=float)
    if trans.shape != (n - m,):
        raise ValueError("transverse part must have length %d" % (n - m))
    p = np.linalg.solve(E.T, np.concatenate([u, trans]))
    return np.array(q), p


def arc_length(model, metric_tag, traj):
    """Metric length of the projected curve, trapezoid rule on the samples."""
    m = model.m
    speeds = []
    for i in range(len(traj.t)):
        qt = tuple(traj.q[i])
        ED = model.frame_at(qt)[:, :m]
        u = traj.p[i] @ ED
        W = model.gram_at(qt, metric_tag)
        v = np.linalg.solve(W, u)
        speeds.append(np.sqrt(max(v @ W @ v, 0.0)))
    return float(np.trapezoid(speeds, traj.t))


def write_trajectory_csv(traj, fh):
    """Columns: t, q_1..q_n, p_1..p_n, h."""
    n = traj.q.shape[1]
    writer = csv.writer(fh)
    writer.writerow(["t"] + ["q_%d" % (i + 1) for i in range(n)]
                    + ["p_%d" % (i + 1) for i in range(n)] + ["h"])
    for i in range(len(traj.t)):
        writer.writerow(["%.17g" % traj.t[i]]
                        + ["%.17g" % v for v in traj.q[i]]
                        + ["%.17g" % v for v in traj.p[i]]
                        + ["%.17g" % traj.h[i]])
