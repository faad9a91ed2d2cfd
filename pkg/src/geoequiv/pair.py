"""Pointwise analysis of a metric pair: transition operator, adapted frames,
and the fiberwise polynomial conditions that obstruct geodesic equivalence.

Conventions. The transition operator at q is S = W1^{-1} W2 in any frame of D;
it is self-adjoint for gram1, its eigenvalues are written alpha_i^2 with
alpha_i > 0 and are returned ascending. An adapted frame consists of
gram1-orthonormal eigenfields X_1..X_m of S plus, for corank one, a completion
X_{m+1} = [X_a, X_b] of two distribution fields (a bracket stays inside the
square of the distribution). The rescaled frame divides X_i by alpha_i for
i <= m. Structure-function arrays are indexed naturally:
c[a, b, k] = coefficient of X_{k+1} in [X_{a+1}, X_{b+1}].

Fiber variables u_i = p(X_i) are quasi-impulses of the adapted frame; all
fiber polynomials live in u_1..u_n.
"""

import itertools

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from . import expr as ex
from .geometry import StructureFunctions

_CLUSTER_TOL = 1e-7
_FD_STEP = 1e-3
_DIV_TOL = 1e-8
_GAUGE_MIN_SV = 0.2


class AdaptedFrameError(Exception):
    pass


def _cluster_indices(lams, tol):
    groups = [[0]]
    for i in range(1, len(lams)):
        if lams[i] - lams[i - 1] <= tol * max(1.0, abs(lams[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return tuple(tuple(g) for g in groups)


class TransitionData:
    def __init__(self, q, S, eigenvalues, vectors, clusters, gram1, gram2):
        self.q = np.asarray(q, dtype=float)
        self.S = S
        self.eigenvalues = eigenvalues      # ascending alpha_i^2
        self.alphas = np.sqrt(eigenvalues)
        self.vectors = vectors              # columns, W1-orthonormal
        self.clusters = clusters
        self.N = len(clusters)
        self.gram1 = gram1
        self.gram2 = gram2


def transition_operator(model, q, cluster_tol=_CLUSTER_TOL):
    qt = tuple(np.asarray(q, dtype=float))
    W1 = model.gram_at(qt, 1)
    W2 = model.gram_at(qt, 2)
    lams, V = sla.eigh(W2, W1)
    if lams[0] <= 0:
        raise ValueError("transition operator not positive at %s" % (list(qt),))
    S = np.linalg.solve(W1, W2)
    return TransitionData(q, S, lams, V, _cluster_indices(lams, cluster_tol), W1, W2)


class RegularityReport:
    def __init__(self, q, radius, N_center, N_values, regular, samples_used,
                 gap_min=None, witness=None, N_witness=None):
        self.q = q
        self.radius = radius
        self.N_center = N_center
        self.N_values = N_values
        self.regular = regular
        self.samples_used = samples_used
        self.gap_min = gap_min          # smallest relative split-gap found
        self.witness = witness          # point where clusters merge, if any
        self.N_witness = N_witness


def _split_gap(model, q, boundaries, cluster_tol):
    """Smallest relative gap across the center's cluster boundaries at q."""
    if not model.in_domain(q):
        return np.inf
    try:
        W1 = model.gram_at(tuple(q), 1)
        W2 = model.gram_at(tuple(q), 2)
        lams = sla.eigh(W2, W1, eigvals_only=True)
    except (ValueError, ex.EvalDomainError, np.linalg.LinAlgError):
        return np.inf
    scale = max(np.max(np.abs(lams)), 1e-300)
    return min((lams[b] - lams[b - 1]) / scale for b in boundaries)


def regularity_probe(model, q, radius, samples=40, seed=0, cluster_tol=_CLUSTER_TOL,
                     refine=True):
    """Is the number of distinct eigenvalues locally constant near q?

    Random ball samples catch N increasing (a cluster splitting away from
    the center). A collision, where split eigenvalues merge somewhere in the
    ball, usually happens on a measure-zero set, so on top of the sampling
    the smallest cluster-boundary gap is minimized over the ball; when the
    minimized gap collapses below cluster_tol the merge point is reported as
    the witness.
    """
    q = np.asarray(q, dtype=float)
    td = transition_operator(model, q, cluster_tol)
    Nc = td.N
    rng = np.random.default_rng(seed)
    values = {Nc}
    used = 0
    kept = []
    for _ in range(samples * 4):
        if used >= samples:
            break
        direction = rng.normal(size=model.n)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        point = q + direction / norm * radius * rng.random() ** (1.0 / model.n)
        if not model.in_domain(point):
            continue
        try:
            values.add(transition_operator(model, point, cluster_tol).N)
            kept.append(point)
        except ValueError:
            values.add(-1)
        used += 1

    gap_min = None
    witness = None
    N_witness = None
    boundaries = [grp[0] for grp in td.clusters[1:]]
    if refine and boundaries:
        objective = lambda p: _split_gap(model, p, boundaries, cluster_tol)
        lo = np.maximum(q - radius, model.domain_min)
        hi = np.minimum(q + radius, model.domain_max)
        starts = [q] + kept[:3]
        if kept:
            starts.append(min(kept, key=objective))
        best_p, best_g = q, objective(q)
        for start in starts:
            res = minimize(objective, np.clip(start, lo, hi), method="Nelder-Mead",
                           bounds=list(zip(lo, hi)),
                           options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 400})
            cand = np.asarray(res.x)
            # keep the iterate inside the probed ball
            off = cand - q
            dist = np.linalg.norm(off)
            if dist > radius:
                cand = q + off * (radius / dist)
            g = objective(cand)
            if g < best_g:
                best_p, best_g = cand, g
        gap_min = float(best_g) if np.isfinite(best_g) else None
        if best_g < cluster_tol:
            witness = best_p
            try:
                N_witness = transition_operator(model, best_p, cluster_tol).N
            except ValueError:
                N_witness = -1
            values.add(N_witness)
    return RegularityReport(q, radius, Nc, tuple(sorted(values)),
                            len(values) == 1, used, gap_min, witness, N_witness)


# ---------------------------------------------------------------------------
# adapted frame with a deterministic smooth gauge

class AdaptedPoint:
    """Everything the fiber formulas need at one base point."""

    __slots__ = ("q", "A", "Vg", "alphas", "alpha_sq", "grad_alpha_sq",
                 "clusters", "W1", "W2", "c", "cbar")

    def __init__(self, **kw):
        for key, val in kw.items():
            setattr(self, key, val)


class AdaptedFrame:
    """Eigenfields of the transition operator, gauge-fixed around a center.

    The gauge projects a reference eigenbasis (eigh at the center) onto the
    spectral subspaces at the query point and re-orthonormalizes for gram1;
    this is smooth wherever the eigenvalue multiplicities stay those of the
    center. Queries raise AdaptedFrameError on cluster mismatch or when the
    projection degenerates (query too far from the center).
    """

    def __init__(self, model, center=None, region=None, cluster_tol=_CLUSTER_TOL,
                 fd_step=_FD_STEP):
        self.model = model
        self.region = region
        if center is None:
            if region is not None:
                lo, hi = region
                center = 0.5 * (np.asarray(lo, dtype=float) + np.asarray(hi, dtype=float))
            else:
                center = model.center()
        self.center = np.asarray(center, dtype=float)
        self.cluster_tol = cluster_tol
        self.fd_step = fd_step
        td = transition_operator(model, self.center, cluster_tol)
        self.reference = td.vectors
        self.clusters = td.clusters
        self.center_eigenvalues = td.eigenvalues
        self._point_cache = {}

        n, m = model.n, model.m
        if n - m not in (0, 1):
            raise AdaptedFrameError("adapted frames support corank 0 or 1 only")
        self.completion_exprs = None
        self._completion_fn = None
        if n - m == 1:
            sf = StructureFunctions(model)
            E = model.frame_at(tuple(self.center))
            best, best_val = None, 0.0
            for (a, b), br in sf.bracket_exprs.items():
                if a >= m or b >= m:
                    continue
                vals = np.array([ex.evaluate(c, tuple(self.center)) for c in br])
                coeff = np.linalg.solve(E, vals)
                t = abs(coeff[m])
                if t > best_val:
                    best, best_val = (a, b), t
            if best is None or best_val < 1e-8:
                raise AdaptedFrameError(
                    "no distribution bracket leaves D near %s; completion undefined"
                    % (list(self.center),))
            self.completion_pair = best
            self.completion_exprs = sf.bracket_exprs[best]
            self._completion_fn = ex.compile_exprs(self.completion_exprs, name="_completion")

    # -- pointwise frame ---------------------------------------------------

    def at(self, q):
        """(A, Vg, lams): full frame matrix, gauge-fixed eigenvectors, eigenvalues."""
        qt = tuple(np.asarray(q, dtype=float))
        model = self.model
        n, m = model.n, model.m
        W1 = model.gram_at(qt, 1)
        W2 = model.gram_at(qt, 2)
        lams, V = sla.eigh(W2, W1)
        if lams[0] <= 0:
            raise AdaptedFrameError("transition operator not positive at %s" % (list(qt),))
        clusters = _cluster_indices(lams, self.cluster_tol)
        if tuple(len(c) for c in clusters) != tuple(len(c) for c in self.clusters):
            raise AdaptedFrameError(
                "eigenvalue multiplicity changes between %s and %s; shrink the region"
                % (list(self.center), list(qt)))
        Vg = np.empty_like(V)
        for idx in clusters:
            idx = list(idx)
            B = V[:, idx]
            C = B.T @ W1 @ self.reference[:, idx]
            sv = np.linalg.svd(C, compute_uv=False)
            if sv[-1] < _GAUGE_MIN_SV:
                raise AdaptedFrameError(
                    "gauge reference degenerate at %s (eigenvectors rotated too far "
                    "from the center %s)" % (list(qt), list(self.center)))
            block = B @ C
            # gram1 Gram-Schmidt within the cluster
            for a in range(block.shape[1]):
                for b in range(a):
                    block[:, a] -= (block[:, b] @ W1 @ block[:, a]) * block[:, b]
                block[:, a] /= np.sqrt(block[:, a] @ W1 @ block[:, a])
            Vg[:, idx] = block
        E = model.frame_at(qt)
        A = np.empty((n, n))
        A[:, :m] = E[:, :m] @ Vg
        if n > m:
            A[:, m] = self._completion_fn(qt)
        return A, Vg, lams, clusters, W1, W2

    def frame_matrix(self, q, rescaled=False):
        A, _, lams, _, _, _ = self.at(q)
        if rescaled:
            A = A.copy()
            A[:, :self.model.m] /= np.sqrt(lams)[None, :]
        return A

    # -- full point data (with finite-difference structure functions) ------

    def point_data(self, q):
        qt = tuple(np.asarray(q, dtype=float))
        cached = self._point_cache.get(qt)
        if cached is not None:
            return cached
        model = self.model
        n, m = model.n, model.m
        A, Vg, lams, clusters, W1, W2 = self.at(qt)

        # exact eigenvalue gradients from the pencil derivative
        dW1 = model.dgram_at(qt, 1)
        dW2 = model.dgram_at(qt, 2)
        grad = np.empty((m, n))
        for idx in clusters:
            for k in range(n):
                val = 0.0
                for i in idx:
                    v = Vg[:, i]
                    val += v @ (dW2[k] - lams[i] * dW1[k]) @ v
                val /= len(idx)
                for i in idx:
                    grad[i, k] = val

        # structure functions of the adapted and rescaled frames, 4th-order FD
        h = self.fd_step
        alph = np.sqrt(lams)

        def frames(point):
            Ap, _, lp, _, _, _ = self.at(point)
            Abar = Ap.copy()
            Abar[:, :m] /= np.sqrt(lp)[None, :]
            return Ap, Abar

        dA = np.empty((n, n, n))
        dAbar = np.empty((n, n, n))
        for k in range(n):
            step = np.zeros(n)
            step[k] = h
            Ap1, Bp1 = frames(qt + step)
            Am1, Bm1 = frames(qt - step)
            Ap2, Bp2 = frames(qt + 2 * step)
            Am2, Bm2 = frames(qt - 2 * step)
            dA[k] = (8.0 * (Ap1 - Am1) - (Ap2 - Am2)) / (12.0 * h)
            dAbar[k] = (8.0 * (Bp1 - Bm1) - (Bp2 - Bm2)) / (12.0 * h)

        Abar = A.copy()
        Abar[:, :m] /= alph[None, :]

        def structure(Amat, dAmat):
            c = np.zeros((n, n, n))
            cols = []
            pairs = list(itertools.combinations(range(n), 2))
            for a, b in pairs:
                vec = np.zeros(n)
                for k in range(n):
                    vec += Amat[k, a] * dAmat[k][:, b] - Amat[k, b] * dAmat[k][:, a]
                cols.append(vec)
            sol = np.linalg.solve(Amat, np.stack(cols, axis=1))
            for col, (a, b) in enumerate(pairs):
                c[a, b, :] = sol[:, col]
                c[b, a, :] = -sol[:, col]
            return c

        data = AdaptedPoint(q=np.asarray(qt), A=A, Vg=Vg, alphas=alph, alpha_sq=lams,
                            grad_alpha_sq=grad, clusters=clusters, W1=W1, W2=W2,
                            c=structure(A, dA), cbar=structure(Abar, dAbar))
        if len(self._point_cache) > 256:
            self._point_cache.clear()
        self._point_cache[qt] = data
        return data

    def impulses(self, lam):
        """Quasi-impulses of the adapted frame at lam = (q, p)."""
        q, p = lam
        data = self.point_data(q)
        return np.asarray(p, dtype=float) @ data.A

    def field_derivative(self, data, i, j):
        """X_{i+1}(alpha_{j+1}^2) from the exact eigenvalue gradient."""
        return float(data.grad_alpha_sq[j] @ data.A[:, i])


def adapted_frame(model, region=None, center=None, cluster_tol=_CLUSTER_TOL):
    return AdaptedFrame(model, center=center, region=region, cluster_tol=cluster_tol)


# ---------------------------------------------------------------------------
# homogeneous fiber polynomials

class FiberPolynomial:
    """Homogeneous polynomial in u_1..u_nvars, dense over exponent tuples."""

    def __init__(self, nvars, degree, coeffs=None):
        self.nvars = nvars
        self.degree = degree
        self.coeffs = dict(coeffs) if coeffs else {}

    @staticmethod
    def basis(nvars, degree):
        out = []
        for combo in itertools.combinations_with_replacement(range(nvars), degree):
            expo = [0] * nvars
            for i in combo:
                expo[i] += 1
            out.append(tuple(expo))
        return out

    def add_term(self, expo, coef):
        if coef == 0.0:
            return
        cur = self.coeffs.get(expo, 0.0) + coef
        if cur == 0.0:
            self.coeffs.pop(expo, None)
        else:
            self.coeffs[expo] = cur

    def add_monomial(self, indices, coef):
        expo = [0] * self.nvars
        for i in indices:
            expo[i] += 1
        self.add_term(tuple(expo), coef)

    def __add__(self, other):
        assert (self.nvars, self.degree) == (other.nvars, other.degree)
        out = FiberPolynomial(self.nvars, self.degree, self.coeffs)
        for expo, coef in other.coeffs.items():
            out.add_term(expo, coef)
        return out

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, factor):
        return FiberPolynomial(self.nvars, self.degree,
                               {e: c * factor for e, c in self.coeffs.items()})

    def __mul__(self, other):
        out = FiberPolynomial(self.nvars, self.degree + other.degree)
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                out.add_term(tuple(a + b for a, b in zip(e1, e2)), c1 * c2)
        return out

    def evaluate(self, u):
        total = 0.0
        for expo, coef in self.coeffs.items():
            val = coef
            for i, e in enumerate(expo):
                if e:
                    val *= u[i] ** e
            total += val
        return total

    def vector(self, basis):
        return np.array([self.coeffs.get(e, 0.0) for e in basis])

    def norm(self):
        return float(np.sqrt(sum(c * c for c in self.coeffs.values())))

    def max_abs_coeff(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def __repr__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for expo in sorted(self.coeffs, reverse=True):
            factors = []
            for i, e in enumerate(expo):
                if e == 1:
                    factors.append("u%d" % (i + 1))
                elif e > 1:
                    factors.append("u%d^%d" % (i + 1, e))
            mono = "*".join(factors) if factors else "1"
            parts.append("%.6g*%s" % (self.coeffs[expo], mono))
        return " + ".join(parts)


def fiber_P(model, frame, q):
    """Squared transported norm: sum alpha_i^2 u_i^2 in the adapted frame."""
    data = frame.point_data(q)
    out = FiberPolynomial(model.n, 2)
    for i in range(model.m):
        out.add_monomial((i, i), data.alpha_sq[i])
    return out


def fiber_hP(model, frame, q):
    """Derivative of fiber_P along the gram1 Hamiltonian flow (cubic in u)."""
    data = frame.point_data(q)
    n, m = model.n, model.m
    out = FiberPolynomial(n, 3)
    for i in range(m):
        for j in range(m):
            out.add_monomial((i, j, j), frame.field_derivative(data, i, j))
            for k in range(n):
                # coefficient of X_k in [X_i, X_j], adapted frame
                cval = data.c[i, j, k]
                if cval:
                    out.add_monomial((i, j, k), 2.0 * cval * data.alpha_sq[j])
    return out


def intrinsic_P(model, lam):
    """Frame-independent value of fiber_P: (W1^{-1}u)^T W2 (W1^{-1}u)."""
    q, p = lam
    qt = tuple(q)
    m = model.m
    ED = model.frame_at(qt)[:, :m]
    u = np.asarray(p, dtype=float) @ ED
    w = np.linalg.solve(model.gram_at(qt, 1), u)
    return float(w @ model.gram_at(qt, 2) @ w)


class DivisibilityResult:
    def __init__(self, holds, residual, quotient, numerator, divisor):
        self.holds = holds
        self.residual = residual        # relative least-squares residual
        self.quotient = quotient        # linear coefficient vector, or None
        self.numerator = numerator
        self.divisor = divisor


def _divide(numerator, divisor_polys):
    """Least-squares division: min over linear combos L of ||num - sum L_i * div_i||."""
    nvars, degree = numerator.nvars, numerator.degree
    basis = FiberPolynomial.basis(nvars, degree)
    b = numerator.vector(basis)
    cols = [dp.vector(basis) for dp in divisor_polys]
    M = np.stack(cols, axis=1)
    scale = np.linalg.norm(b)
    if scale == 0.0:
        return 0.0, np.zeros(len(divisor_polys))
    sol, *_ = np.linalg.lstsq(M, b, rcond=None)
    residual = np.linalg.norm(M @ sol - b) / scale
    return float(residual), sol


def _linear_monomials(nvars, count):
    out = []
    for i in range(count):
        mono = FiberPolynomial(nvars, 1)
        mono.add_monomial((i,), 1.0)
        out.append(mono)
    return out


def first_divisibility(model, frame, q, tol=_DIV_TOL):
    """Does fiber_P divide its Hamiltonian derivative (quotient linear in u)?"""
    P = fiber_P(model, frame, q)
    hP = fiber_hP(model, frame, q)
    monos = _linear_monomials(model.n, model.n)
    residual, sol = _divide(hP, [mono * P for mono in monos])
    return DivisibilityResult(residual <= tol, residual, sol, hP, P)


def fiber_R(model, frame, q, j):
    """Quadratic obstruction polynomial R_j (1-based j <= m).

    Valid once first divisibility holds; assembled from the adapted-frame
    structure functions and exact eigenvalue derivatives.
    """
    data = frame.point_data(q)
    n, m = model.n, model.m
    if not 1 <= j <= m:
        raise ValueError("j must be in 1..%d" % m)
    jj = j - 1
    a2 = data.alpha_sq
    out = FiberPolynomial(n, 2)
    for i in range(m):
        if i == jj:
            continue
        # (alpha_j^2 - alpha_i^2) c_{ji}^i - (1/2) X_j(alpha_i^2), times u_i^2
        cjii = data.c[i, jj, i]
        out.add_monomial((i, i), (a2[jj] - a2[i]) * cjii
                         - 0.5 * frame.field_derivative(data, jj, i))
        # (alpha_i^2 / 2 alpha_j^2) X_i(alpha_j^4 / alpha_i^2), times u_i u_j
        di_j = frame.field_derivative(data, i, jj)
        di_i = frame.field_derivative(data, i, i)
        deriv = (2.0 * a2[jj] * di_j * a2[i] - a2[jj] ** 2 * di_i) / a2[i] ** 2
        out.add_monomial((i, jj), deriv / (2.0 * a2[jj]) * a2[i])
    for i in range(m):
        for k in range(m):
            if k == i:
                continue
            out.add_monomial((i, k), (a2[jj] - a2[k]) * data.c[i, jj, k])
        for k in range(m, n):
            out.add_monomial((i, k), a2[jj] * data.c[i, jj, k])
    return out


def fiber_Q(model, frame, q, j, k):
    """Linear polynomial Q_{jk} = sum_i cbar_{ji}^k alpha_i u_i (1-based j, k)."""
    data = frame.point_data(q)
    n, m = model.n, model.m
    if not (1 <= j <= n and 1 <= k <= n):
        raise ValueError("indices must be in 1..%d" % n)
    out = FiberPolynomial(n, 1)
    for i in range(m):
        cval = data.cbar[i, j - 1, k - 1]
        if cval:
            out.add_monomial((i,), cval * data.alphas[i])
    return out


class SecondDivisibilityResult:
    def __init__(self, per_j, holds, residual, quotients, spread, transverse_r, diagnostics=""):
        self.per_j = per_j              # list of (j, residual, holds, quotient)
        self.holds = holds
        self.residual = residual        # max over applicable j
        self.quotients = quotients      # j -> r vector (quotient / alpha_j)
        self.spread = spread            # max pairwise difference of r vectors
        self.transverse_r = transverse_r  # j -> (r_{m+1}, alpha_j^2)
        self.diagnostics = diagnostics


def second_divisibility(model, frame, q, tol=_DIV_TOL):
    """Is every R_j divisible by Q_{j,m+1} with a linear quotient?

    Also reports the per-j quotient over alpha_j, whose j-independence and
    transverse coefficient are what the equivalence theory actually pins down.
    """
    n, m = model.n, model.m
    if n - m != 1:
        raise ValueError("second divisibility applies to corank-one models")
    data = frame.point_data(q)
    mono = _linear_monomials(n, m + 1)
    per_j, quotients, transverse_r = [], {}, {}
    scale = float(np.max(np.abs(data.cbar))) + 1e-30
    applicable = 0
    worst = 0.0
    for j in range(1, m + 1):
        Qj = fiber_Q(model, frame, q, j, m + 1)
        if Qj.norm() <= 1e-10 * scale:
            per_j.append((j, None, None, None))
            continue
        applicable += 1
        Rj = fiber_R(model, frame, q, j)
        residual, sol = _divide(Rj, [mi * Qj for mi in mono])
        ok = residual <= tol
        per_j.append((j, residual, ok, sol))
        worst = max(worst, residual)
        r = sol / data.alphas[j - 1]
        quotients[j] = r
        transverse_r[j] = (float(r[m]), float(data.alpha_sq[j - 1]))
    if applicable == 0:
        return SecondDivisibilityResult(per_j, True, 0.0, {}, 0.0, {},
                                        "no usable Q_{j,m+1} at this point")
    spread = 0.0
    rs = list(quotients.values())
    base = max(1.0, max(np.linalg.norm(r) for r in rs))
    for a in range(len(rs)):
        for b in range(a + 1, len(rs)):
            spread = max(spread, float(np.linalg.norm(rs[a] - rs[b])) / base)
    holds = all(ok for (_, _, ok, _) in per_j if ok is not None)
    return SecondDivisibilityResult(per_j, holds, worst, quotients, spread, transverse_r)


# ---------------------------------------------------------------------------
# pointwise eigenvalue/structure relations

class CorReport:
    def __init__(self, checks, max_residual, details):
        self.checks = checks            # name -> max abs residual (None if vacuous)
        self.max_residual = max_residual
        self.details = details          # name -> list of (indices, residual)

    def __repr__(self):
        return "CorReport(max=%r, %r)" % (self.max_residual, self.checks)


def relations_cor(model, frame, q, bracket_tol=1e-6):
    """Pointwise identities every geodesically equivalent pair must satisfy.

    eigenvalue-transport: X_i(alpha_j^2/alpha_i^2) = 2 c_{ji}^j (1 - alpha_j^2/alpha_i^2)
    ratio-invariance:     X_i(alpha_j^2/alpha_i) = 0 for split alpha_i, alpha_j
    pair-invariance:      X_i(alpha_j/alpha_k) = 0 for alpha_j, alpha_k split from alpha_i
    cyclic:               cyclic sum of (alpha^2 gaps) * structure functions = 0
    bracket-equality:     [X_i, X_j] leaving D forces alpha_i = alpha_j
    transverse-constancy: alpha shared by all fields whose bracket leaves D
                          must be annihilated by those fields
    """
    data = frame.point_data(q)
    n, m = model.n, model.m
    a2 = data.alpha_sq
    alph = data.alphas
    cluster_of = {}
    for sidx, idx in enumerate(data.clusters):
        for i in idx:
            cluster_of[i] = sidx

    def X(i, j):
        return frame.field_derivative(data, i, j)

    details = {name: [] for name in ("eigenvalue-transport", "ratio-invariance",
                                     "pair-invariance", "cyclic", "bracket-equality",
                                     "transverse-constancy")}

    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            # X_i(a_j^2 / a_i^2) - 2 c_{ji}^j (1 - a_j^2 / a_i^2)
            lhs = (X(i, j) * a2[i] - a2[j] * X(i, i)) / a2[i] ** 2
            rhs = 2.0 * data.c[i, j, j] * (1.0 - a2[j] / a2[i])
            details["eigenvalue-transport"].append(((i + 1, j + 1), abs(lhs - rhs)))
            if cluster_of[i] != cluster_of[j]:
                val = (X(i, j) * alph[i] - a2[j] * X(i, i) / (2.0 * alph[i])) / a2[i]
                details["ratio-invariance"].append(((i + 1, j + 1), abs(val)))

    for i in range(m):
        for j in range(m):
            for k in range(m):
                if cluster_of.get(j) == cluster_of.get(i) or cluster_of.get(k) == cluster_of.get(i):
                    continue
                dj = X(i, j) / (2.0 * alph[j])
                dk = X(i, k) / (2.0 * alph[k])
                val = (dj * alph[k] - alph[j] * dk) / a2[k]
                details["pair-invariance"].append(((i + 1, j + 1, k + 1), abs(val)))

    for i, j, k in itertools.combinations(range(m), 3):
        val = ((a2[j] - a2[i]) * data.c[i, j, k]
               + (a2[j] - a2[k]) * data.c[k, j, i]
               + (a2[i] - a2[k]) * data.c[k, i, j])
        details["cyclic"].append(((i + 1, j + 1, k + 1), abs(val)))

    transverse_fields = set()
    cscale = float(np.max(np.abs(data.c))) + 1e-30
    for i in range(m):
        for j in range(i + 1, m):
            t = float(np.linalg.norm(data.c[i, j, m:n]))
            if t > bracket_tol * cscale:
                details["bracket-equality"].append(((i + 1, j + 1), abs(alph[i] - alph[j])))
                transverse_fields.update((i, j))

    if transverse_fields:
        sidx = cluster_of[next(iter(transverse_fields))]
        bar = sorted(data.clusters[sidx])
        for jf in bar:
            details["transverse-constancy"].append(((jf + 1,), abs(X(jf, bar[0]))))

    checks = {}
    overall = 0.0
    for name, entries in details.items():
        if entries:
            worst = max(rv for _, rv in entries)
            checks[name] = worst
            overall = max(overall, worst)
        else:
            checks[name] = None
    return CorReport(checks, overall, details)
