"""Orbital transport of extremals and the end-to-end equivalence verdict.

The orbital map sends a gram1 extremal covector to the gram2 covector whose
extremal traces the same base curve: on the distribution part it rescales the
adapted quasi-impulses by the eigenvalues over a = sqrt(sum alpha_i^2 u_i^2),
and in corank one the transverse component is pinned by the quotient of the
obstruction polynomial R_j by Q_{j,m+1}. The matched gram2 flow time is the
integral of a along the gram1 extremal. verify_equivalence samples covectors,
transports them, integrates both flows and compares the base curves.
"""

import numpy as np

from . import expr as ex
from .geometry import classify_distribution
from .hamiltonian import integrate, hamiltonian
from .pair import (AdaptedFrame, AdaptedFrameError, fiber_Q, fiber_R,
                   intrinsic_P)

_TINY = 1e-12


class OrbitalMapError(Exception):
    pass


class OrbitalResult:
    def __init__(self, lam2, phi, u, a, jbar):
        self.lam2 = lam2
        self.phi = phi
        self.u = u
        self.a = a
        self.jbar = jbar        # 1-based row used for the transverse component


def _transverse_phi(model, frame, q, u, a, jbar=None):
    """Phi_{m+1} = R_j / (alpha_j Q_{j,m+1} a) using the strongest row j."""
    m = model.m
    data = frame.point_data(q)
    qvals = []
    for j in range(1, m + 1):
        qvals.append(fiber_Q(model, frame, q, j, m + 1).evaluate(u))
    if jbar is None:
        jbar = int(np.argmax(np.abs(qvals))) + 1
    qv = qvals[jbar - 1]
    scale = float(np.max(np.abs(data.cbar))) * float(np.linalg.norm(u[:m])) + _TINY
    if abs(qv) <= 1e-9 * scale:
        raise OrbitalMapError(
            "transverse component undefined: Q_{j,m+1} vanishes on this covector "
            "(abnormal cone); exclude such samples")
    rv = fiber_R(model, frame, q, jbar).evaluate(u)
    return rv / (data.alphas[jbar - 1] * qv * a), jbar


def orbital_map(model, frame, lam, jbar=None):
    """gram2 covector whose extremal has the same trace as the gram1 extremal."""
    q, p = lam
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n, m = model.n, model.m
    data = frame.point_data(q)
    u = p @ data.A
    a_sq = float(np.sum(data.alpha_sq * u[:m] ** 2))
    if a_sq <= _TINY * max(1.0, float(np.dot(p, p))):
        raise OrbitalMapError("covector annihilates the distribution at %s" % (list(q),))
    a = np.sqrt(a_sq)
    phi = np.empty(n)
    phi[:m] = data.alpha_sq * u[:m] / a
    used_jbar = None
    if n > m:
        phi[m], used_jbar = _transverse_phi(model, frame, q, u, a, jbar)
    p2 = np.linalg.solve(data.A.T, phi)
    return OrbitalResult((q, p2), phi, u, a, used_jbar)


class IdentityReport:
    def __init__(self, res_first, res_second, jbar, a):
        self.res_first = res_first      # per j = 1..m
        self.res_second = res_second    # per s = m+1..n
        self.jbar = jbar
        self.a = a

    @property
    def max_residual(self):
        vals = list(self.res_first) + list(self.res_second)
        return max(vals) if vals else 0.0


def check_orbital_identities(model, frame, lam, flow_step=1e-5, flow_tol=1e-12):
    """Residuals of the two first-order identities behind the orbital map.

    First family (j = 1..m):   alpha_j sum_{k>m} Q_jk Phi_k = R_j / a.
    Second family (s = m+1..n): d/dt Phi_s - sum_{k>m} Q_sk Phi_k
                                = (1/a) sum_{k<=m} Q_sk alpha_k u_k,
    with d/dt along the gram1 extremal (central difference of the flow).
    """
    q, p = lam
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n, m = model.n, model.m
    data = frame.point_data(q)
    u = p @ data.A
    a = np.sqrt(float(np.sum(data.alpha_sq * u[:m] ** 2)))
    if a <= _TINY:
        raise OrbitalMapError("covector annihilates the distribution")

    jbar = None
    phi_trans = []
    if n > m:
        val, jbar = _transverse_phi(model, frame, q, u, a)
        phi_trans.append(val)

    res_first = []
    for j in range(1, m + 1):
        lhs = 0.0
        for k_off, pv in enumerate(phi_trans):
            Qjk = fiber_Q(model, frame, q, j, m + 1 + k_off)
            lhs += data.alphas[j - 1] * Qjk.evaluate(u) * pv
        rhs = fiber_R(model, frame, q, j).evaluate(u) / a
        res_first.append(abs(lhs - rhs))

    res_second = []
    if n > m:
        plus = integrate(model, 1, (q, p), flow_step, tol=flow_tol).end
        minus = integrate(model, 1, (q, p), -flow_step, tol=flow_tol).end

        def phi_s_at(lam_pt):
            qq = np.asarray(lam_pt[0], dtype=float)
            pp = np.asarray(lam_pt[1], dtype=float)
            dat = frame.point_data(qq)
            uu = pp @ dat.A
            aa = np.sqrt(float(np.sum(dat.alpha_sq * uu[:m] ** 2)))
            val, _ = _transverse_phi(model, frame, qq, uu, aa, jbar)
            return val

        dphi = (phi_s_at(plus) - phi_s_at(minus)) / (2.0 * flow_step)
        s = m + 1
        coupling = fiber_Q(model, frame, q, s, s).evaluate(u) * phi_trans[0]
        source = 0.0
        for k in range(1, m + 1):
            source += fiber_Q(model, frame, q, s, k).evaluate(u) * data.alphas[k - 1] * u[k - 1]
        res_second.append(abs(dphi - coupling - source / a))

    return IdentityReport(res_first, res_second, jbar, a)


# ---------------------------------------------------------------------------
# end-to-end verification

def _polyline_distances(points, poly):
    seg_a = poly[:-1]
    seg_v = poly[1:] - seg_a
    denom = np.maximum((seg_v * seg_v).sum(axis=1), 1e-300)
    out = np.empty(len(points))
    for i, pt in enumerate(points):
        ap = pt - seg_a
        t = np.clip((ap * seg_v).sum(axis=1) / denom, 0.0, 1.0)
        proj = seg_a + t[:, None] * seg_v
        out[i] = np.sqrt(((pt - proj) ** 2).sum(axis=1).min())
    return out


class SampleOutcome:
    def __init__(self, index, status, q0=None, deviation=None, endpoint_gap=None,
                 T_used=None, T2=None, drift1=None, drift2=None, note=""):
        self.index = index
        self.status = status            # verified | truncated | clipped | frame-error | degenerate
        self.q0 = q0
        self.deviation = deviation
        self.endpoint_gap = endpoint_gap
        self.T_used = T_used
        self.T2 = T2
        self.drift1 = drift1
        self.drift2 = drift2
        self.note = note

    def as_dict(self):
        out = {"index": self.index, "status": self.status}
        if self.q0 is not None:
            out["q0"] = [float(v) for v in self.q0]
        for name in ("deviation", "endpoint_gap", "T_used", "T2", "drift1", "drift2"):
            val = getattr(self, name)
            if val is not None:
                out[name] = float(val)
        if self.note:
            out["note"] = self.note
        return out


class VerificationReport:
    def __init__(self, verdict, samples, config, counts, max_deviation, max_drift,
                 excluded_resamples):
        self.verdict = verdict          # pass | fail | inconclusive
        self.samples = samples
        self.config = config
        self.counts = counts
        self.max_deviation = max_deviation
        self.max_drift = max_drift
        self.excluded_resamples = excluded_resamples

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "config": self.config,
            "counts": self.counts,
            "max_deviation": (float(self.max_deviation)
                              if self.max_deviation is not None else None),
            "max_energy_drift": (float(self.max_drift)
                                 if self.max_drift is not None else None),
            "excluded_resamples": self.excluded_resamples,
            "samples": [s.as_dict() for s in self.samples],
        }


_DEFAULT_SAMPLING = {
    "count": 50,
    "seed": 7,
    "T": 0.3,
    "tol_curve": 1e-6,
    "integrator_tol": 1e-10,
    "curve_samples": 601,
    "margin": 0.15,
    "transverse_sigma": 1.0,
}


def verify_equivalence(model, sampling=None, exclusions=None):
    """Sample gram1 extremals, transport them, and compare the base curves.

    Verdict: fail if any verified sample deviates beyond tol_curve, pass when
    at least half of the requested samples verify below it, inconclusive
    otherwise. Clipped runs are retried on 80% of the pre-exit window when
    that keeps a quarter of the horizon, else skipped.
    """
    cfg = dict(_DEFAULT_SAMPLING)
    if sampling:
        unknown = set(sampling) - set(cfg)
        if unknown:
            raise ValueError("unknown sampling keys: %s" % sorted(unknown))
        cfg.update(sampling)
    exclusions = dict(exclusions or {})
    cone = exclusions.pop("abnormal_cone", None)
    if exclusions:
        raise ValueError("unknown exclusion keys: %s" % sorted(exclusions))

    n, m = model.n, model.m
    count = int(cfg["count"])
    T = float(cfg["T"])
    tol_curve = float(cfg["tol_curve"])
    itol = float(cfg["integrator_tol"])
    S = int(cfg["curve_samples"])
    rng = np.random.default_rng(int(cfg["seed"]))

    abnormal_fn = None
    if cone is not None:
        if n - m == 1:
            cls = classify_distribution(model)
            if cls.abnormal_coeffs is not None:
                abnormal_fn = ex.compile_exprs(cls.abnormal_coeffs, name="_abn")
        if abnormal_fn is None:
            cone = None  # no abnormal direction to exclude

    def sample_covector():
        """Unit-energy gram1 covector with Gaussian transverse impulses."""
        excluded = 0
        for _ in range(200):
            q = model.sample_point(rng, margin=float(cfg["margin"]))
            z = rng.normal(size=m)
            nz = np.linalg.norm(z)
            trans = rng.normal(size=n - m) * float(cfg["transverse_sigma"])
            if nz < 1e-12:
                continue
            qt = tuple(q)
            W1 = model.gram_at(qt, 1)
            L = np.linalg.cholesky(W1)
            u = L @ (z / nz)
            if cone is not None:
                v = np.linalg.solve(W1, u)
                b = np.asarray(abnormal_fn(qt), dtype=float)
                nb = np.sqrt(b @ W1 @ b)
                if nb > 1e-12:
                    cosang = abs(v @ W1 @ b) / (np.sqrt(v @ W1 @ v) * nb)
                    if cosang > np.cos(cone):
                        excluded += 1
                        continue
            E = model.frame_at(qt)
            p = np.linalg.solve(E.T, np.concatenate([u, trans]))
            return q, p, excluded
        raise RuntimeError("could not draw an admissible covector "
                           "(exclusion cone too wide or domain too tight)")

    def a_rate(q, p):
        return np.sqrt(max(intrinsic_P(model, (q, p)), 0.0))

    samples = []
    max_dev = None
    max_drift = None
    excluded_total = 0
    counts = {"requested": count, "verified": 0, "truncated": 0, "clipped": 0,
              "frame_errors": 0, "degenerate": 0}

    for idx in range(count):
        q0, p0, excl = sample_covector()
        excluded_total += excl
        status_note = ""

        g1 = integrate(model, 1, (q0, p0), T, tol=itol, samples=S, aux_rate=a_rate)
        T_used = T
        truncated = False
        if g1.clipped:
            t_avail = g1.t_exit if g1.t_exit is not None else (
                g1.t[-1] if len(g1.t) else 0.0)
            T_used = 0.8 * t_avail if T > 0 else -0.8 * abs(t_avail)
            if abs(T_used) < 0.25 * abs(T) or abs(T_used) < 1e-9:
                samples.append(SampleOutcome(idx, "clipped", q0,
                                             note="usable window %.3g below a quarter "
                                                  "of the horizon" % t_avail))
                counts["clipped"] += 1
                continue
            truncated = True
            g1 = integrate(model, 1, (q0, p0), T_used, tol=itol, samples=S,
                           aux_rate=a_rate)

        try:
            frame = AdaptedFrame(model, center=q0)
            lam2 = orbital_map(model, frame, (q0, p0)).lam2
        except (AdaptedFrameError, OrbitalMapError) as exc:
            samples.append(SampleOutcome(idx, "frame-error", q0, note=str(exc)))
            counts["frame_errors"] += 1
            continue

        T2 = g1.aux  # signed: backward horizons accumulate a negative total
        if T2 is None or abs(T2) < 1e-12:
            samples.append(SampleOutcome(idx, "degenerate", q0,
                                         note="matched flow time vanished"))
            counts["degenerate"] += 1
            continue
        g2 = integrate(model, 2, lam2, T2, tol=itol, samples=S)
        if len(g2.t) < 2:
            samples.append(SampleOutcome(idx, "degenerate", q0,
                                         note="gram2 extremal left the domain at once"))
            counts["degenerate"] += 1
            continue

        dev = float(np.max(_polyline_distances(g2.q, g1.q)))
        endpoint_gap = float(np.linalg.norm(g2.q[-1] - g1.q[-1]))
        drift1 = float(np.max(np.abs(g1.h - g1.h[0])))
        drift2 = float(np.max(np.abs(g2.h - g2.h[0])))
        status = "truncated" if truncated else "verified"
        if g2.clipped:
            status_note = "gram2 leg clipped at %.3g" % (g2.t_exit or g2.t[-1])
        samples.append(SampleOutcome(idx, status, q0, dev, endpoint_gap, T_used,
                                     T2, drift1, drift2, status_note))
        counts["verified"] += 1
        if truncated:
            counts["truncated"] += 1
        max_dev = dev if max_dev is None else max(max_dev, dev)
        drift = max(drift1, drift2)
        max_drift = drift if max_drift is None else max(max_drift, drift)

    if max_dev is not None and max_dev > tol_curve:
        verdict = "fail"
    elif counts["verified"] < 0.5 * count:
        verdict = "inconclusive"
    else:
        verdict = "pass"

    config = dict(cfg)
    if cone is not None:
        config["abnormal_cone"] = float(cone)
    return VerificationReport(verdict, samples, config, counts, max_dev, max_drift,
                              excluded_total)
