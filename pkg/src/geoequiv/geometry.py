"""Geometric model container and frame calculus.

A model is a coordinate box with a global frame X_1..X_n of the tangent bundle
whose first m fields span the distribution D, plus two symmetric positive
Gram matrices gram1/gram2 giving the metrics on D in that frame. Everything
symbolic is an expr.Expr tree over the model coordinates; pointwise numerics
go through compiled evaluators cached on the model.

Frame matrices are stored column-wise: frame_at(q)[:, i] are the coordinate
components of X_{i+1}. Structure function arrays use the natural indexing
c[a, b, k] = coefficient of X_{k+1} in [X_{a+1}, X_{b+1}].
"""

import itertools
import json
import re

import numpy as np

from . import expr as ex

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")

_DET_TOL = 1e-10


class ManifestError(Exception):
    """Malformed model manifest; message names the offending field path."""


class ModelValidationError(Exception):
    """Structurally valid manifest whose data fails pointwise checks."""


class GeometryModel:
    def __init__(self, coords, rank, frame, gram1, gram2, domain_min, domain_max, meta=None):
        self.coords = tuple(coords)
        self.rank = int(rank)
        self.frame = tuple(tuple(row) for row in frame)      # frame[i] = field i components
        self.gram1 = tuple(tuple(row) for row in gram1)
        self.gram2 = tuple(tuple(row) for row in gram2)
        self.domain_min = np.asarray(domain_min, dtype=float)
        self.domain_max = np.asarray(domain_max, dtype=float)
        self.meta = dict(meta) if meta else {}
        self._cache = {}

    @property
    def n(self):
        return len(self.coords)

    @property
    def m(self):
        return self.rank

    # -- compiled pointwise evaluators ------------------------------------

    def _compiled(self, key, exprs):
        fn = self._cache.get(key)
        if fn is None:
            fn = ex.compile_exprs(exprs, name="_" + key)
            self._cache[key] = fn
        return fn

    def frame_at(self, q):
        """n x n matrix, column i = components of X_{i+1} at q."""
        n = self.n
        fn = self._compiled("frame", [self.frame[i][j] for i in range(n) for j in range(n)])
        vals = fn(q)
        E = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                E[j, i] = vals[i * n + j]
        return E

    def dframe_at(self, q):
        """dE[k] = coordinate partial d/dq_k of frame_at, shape (n, n, n)."""
        n = self.n
        key = "dframe"
        if key + "_exprs" not in self._cache:
            self._cache[key + "_exprs"] = [
                ex.differentiate(self.frame[i][j], k)
                for k in range(n) for i in range(n) for j in range(n)]
        fn = self._compiled(key, self._cache[key + "_exprs"])
        vals = fn(q)
        dE = np.empty((n, n, n))
        idx = 0
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    dE[k, j, i] = vals[idx]
                    idx += 1
        return dE

    def _gram_exprs(self, tag):
        return self.gram1 if tag == 1 else self.gram2

    def gram_at(self, q, tag):
        m = self.m
        g = self._gram_exprs(tag)
        fn = self._compiled("gram%d" % tag, [g[i][j] for i in range(m) for j in range(m)])
        vals = fn(q)
        return np.asarray(vals, dtype=float).reshape(m, m)

    def dgram_at(self, q, tag):
        m, n = self.m, self.n
        g = self._gram_exprs(tag)
        key = "dgram%d" % tag
        if key + "_exprs" not in self._cache:
            self._cache[key + "_exprs"] = [
                ex.differentiate(g[i][j], k)
                for k in range(n) for i in range(m) for j in range(m)]
        fn = self._compiled(key, self._cache[key + "_exprs"])
        vals = np.asarray(fn(q), dtype=float)
        return vals.reshape(n, m, m)

    # -- domain helpers -----------------------------------------------------

    def in_domain(self, q, margin=0.0):
        q = np.asarray(q, dtype=float)
        pad = margin * (self.domain_max - self.domain_min)
        return bool(np.all(q >= self.domain_min + pad) and np.all(q <= self.domain_max - pad))

    def boundary_distance(self, q):
        q = np.asarray(q, dtype=float)
        return float(min(np.min(q - self.domain_min), np.min(self.domain_max - q)))

    def sample_point(self, rng, margin=0.15):
        lo = self.domain_min + margin * (self.domain_max - self.domain_min)
        hi = self.domain_max - margin * (self.domain_max - self.domain_min)
        return lo + rng.random(self.n) * (hi - lo)

    def center(self):
        return 0.5 * (self.domain_min + self.domain_max)

    def probe_grid(self, per_axis=3, margin=0.1):
        lo = self.domain_min + margin * (self.domain_max - self.domain_min)
        hi = self.domain_max - margin * (self.domain_max - self.domain_min)
        axes = [np.linspace(lo[k], hi[k], per_axis) for k in range(self.n)]
        return [np.array(p) for p in itertools.product(*axes)]


# ---------------------------------------------------------------------------
# manifest IO

def _require(cond, path, message):
    if not cond:
        raise ManifestError("%s: %s" % (path, message))


def _parse_matrix(rows, coords, path, shape):
    _require(isinstance(rows, list) and len(rows) == shape[0], path,
             "expected a list of %d rows" % shape[0])
    out = []
    for i, row in enumerate(rows):
        _require(isinstance(row, list) and len(row) == shape[1], "%s[%d]" % (path, i),
                 "expected a list of %d entries" % shape[1])
        parsed = []
        for j, cell in enumerate(row):
            cellpath = "%s[%d][%d]" % (path, i, j)
            if isinstance(cell, (int, float)) and not isinstance(cell, bool):
                parsed.append(ex.Const(cell))
                continue
            _require(isinstance(cell, str), cellpath, "expected an expression string or number")
            try:
                parsed.append(ex.parse(cell, coords))
            except ex.ExprSyntaxError as exc:
                raise ManifestError("%s: %s" % (cellpath, exc)) from exc
        out.append(tuple(parsed))
    return tuple(out)


def from_manifest(doc):
    """Build a GeometryModel from a manifest dict; errors name field paths."""
    _require(isinstance(doc, dict), "$", "manifest must be a JSON object")
    known = {"coords", "rank", "frame", "gram1", "gram2", "domain", "meta"}
    for key in doc:
        _require(key in known, key, "unknown manifest key")
    for key in ("coords", "rank", "frame", "gram1", "gram2", "domain"):
        _require(key in doc, key, "missing required key")

    coords = doc["coords"]
    _require(isinstance(coords, list) and coords, "coords", "expected a nonempty list")
    for i, name in enumerate(coords):
        _require(isinstance(name, str) and _IDENT_RE.match(name), "coords[%d]" % i,
                 "coordinate names must be identifiers")
        _require(name not in ex._FUNCTIONS, "coords[%d]" % i,
                 "coordinate name shadows the function %r" % name)
    _require(len(set(coords)) == len(coords), "coords", "duplicate coordinate names")
    coords = tuple(coords)
    n = len(coords)

    rank = doc["rank"]
    _require(isinstance(rank, int) and not isinstance(rank, bool), "rank", "expected an integer")
    _require(1 <= rank <= n, "rank", "must satisfy 1 <= rank <= %d" % n)

    frame = _parse_matrix(doc["frame"], coords, "frame", (n, n))
    gram1 = _parse_matrix(doc["gram1"], coords, "gram1", (rank, rank))
    gram2 = _parse_matrix(doc["gram2"], coords, "gram2", (rank, rank))

    dom = doc["domain"]
    _require(isinstance(dom, dict), "domain", "expected an object with min/max")
    for key in ("min", "max"):
        _require(key in dom, "domain.%s" % key, "missing")
        arr = dom[key]
        _require(isinstance(arr, list) and len(arr) == n, "domain.%s" % key,
                 "expected a list of %d numbers" % n)
        for i, v in enumerate(arr):
            _require(isinstance(v, (int, float)) and not isinstance(v, bool),
                     "domain.%s[%d]" % (key, i), "expected a number")
    lo = [float(v) for v in dom["min"]]
    hi = [float(v) for v in dom["max"]]
    for i in range(n):
        _require(lo[i] < hi[i], "domain", "min[%d] must be < max[%d]" % (i, i))

    meta = doc.get("meta")
    if meta is not None:
        _require(isinstance(meta, dict), "meta", "expected an object")
    return GeometryModel(coords, rank, frame, gram1, gram2, lo, hi, meta)


def to_manifest(model):
    def render(rows):
        return [[ex.to_string(cell, model.coords) for cell in row] for row in rows]

    doc = {
        "coords": list(model.coords),
        "rank": model.rank,
        "frame": render(model.frame),
        "gram1": render(model.gram1),
        "gram2": render(model.gram2),
        "domain": {"min": [float(v) for v in model.domain_min],
                   "max": [float(v) for v in model.domain_max]},
    }
    if model.meta:
        doc["meta"] = model.meta
    return doc


def load_model(path, validate=True):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError("invalid JSON: %s" % exc) from exc
    model = from_manifest(doc)
    if validate:
        validate_model(model)
    return model


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(to_manifest(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate_model(model, per_axis=3):
    """Pointwise sanity on a probe grid: frame nondegenerate, Grams SPD."""
    for q in model.probe_grid(per_axis=per_axis, margin=0.05):
        qt = tuple(q)
        try:
            E = model.frame_at(qt)
        except ex.EvalDomainError as exc:
            raise ModelValidationError("frame undefined at %s: %s" % (list(q), exc)) from exc
        scale = max(1.0, float(np.max(np.abs(E))) ** model.n)
        if abs(np.linalg.det(E)) < _DET_TOL * scale:
            raise ModelValidationError("frame degenerate at %s (|det| = %g)"
                                       % (list(q), abs(np.linalg.det(E))))
        for tag in (1, 2):
            try:
                W = model.gram_at(qt, tag)
            except ex.EvalDomainError as exc:
                raise ModelValidationError("gram%d undefined at %s: %s"
                                           % (tag, list(q), exc)) from exc
            if not np.allclose(W, W.T, rtol=1e-9, atol=1e-12 * max(1.0, np.max(np.abs(W)))):
                raise ModelValidationError("gram%d not symmetric at %s" % (tag, list(q)))
            try:
                np.linalg.cholesky(W)
            except np.linalg.LinAlgError:
                raise ModelValidationError("gram%d not positive definite at %s"
                                           % (tag, list(q))) from None


# ---------------------------------------------------------------------------
# frame calculus

def lie_bracket(X, Y, n):
    """[X, Y] componentwise for coordinate component tuples of length n."""
    out = []
    for k in range(n):
        acc = ex.ZERO
        for j in range(n):
            acc = ex.add(acc, ex.sub(ex.mul(X[j], ex.differentiate(Y[k], j)),
                                     ex.mul(Y[j], ex.differentiate(X[k], j))))
        out.append(acc)
    return tuple(out)


class StructureFunctions:
    """Structure functions of the model frame.

    at(q)[a, b, k] is the coefficient of X_{k+1} in [X_{a+1}, X_{b+1}];
    brackets are exact symbolic fields, the frame solve is pointwise.
    """

    def __init__(self, model):
        self.model = model
        n = model.n
        self.bracket_exprs = {}
        flat = []
        for a in range(n):
            for b in range(a + 1, n):
                br = lie_bracket(model.frame[a], model.frame[b], n)
                self.bracket_exprs[(a, b)] = br
                flat.extend(br)
        self._pairs = sorted(self.bracket_exprs)
        self._fn = ex.compile_exprs(flat, name="_brackets") if flat else None

    def brackets_at(self, q):
        n = self.model.n
        out = {}
        if self._fn is None:
            return out
        vals = self._fn(q)
        for idx, pair in enumerate(self._pairs):
            out[pair] = np.asarray(vals[idx * n:(idx + 1) * n], dtype=float)
        return out

    def at(self, q):
        n = self.model.n
        E = self.model.frame_at(q)
        brackets = self.brackets_at(q)
        c = np.zeros((n, n, n))
        if not brackets:
            return c
        pairs = self._pairs
        rhs = np.stack([brackets[p] for p in pairs], axis=1)
        sol = np.linalg.solve(E, rhs)
        for col, (a, b) in enumerate(pairs):
            c[a, b, :] = sol[:, col]
            c[b, a, :] = -sol[:, col]
        return c


def structure_functions(model):
    return StructureFunctions(model)


# ---------------------------------------------------------------------------
# symbolic determinants, annihilator, classification

def _sym_det(rows):
    k = len(rows)
    if k == 0:
        return ex.ONE
    if k == 1:
        return rows[0][0]
    if k == 2:
        return ex.sub(ex.mul(rows[0][0], rows[1][1]), ex.mul(rows[0][1], rows[1][0]))
    acc = ex.ZERO
    for i in range(k):
        minor = [[rows[r][c] for c in range(1, k)] for r in range(k) if r != i]
        term = ex.mul(rows[i][0], _sym_det(minor))
        acc = ex.add(acc, term) if i % 2 == 0 else ex.sub(acc, term)
    return acc


def annihilator(model):
    """Covector omega with omega(X_i) = 0 for i < n and omega(X_n) = det(frame).

    Row n of the adjugate of the frame matrix, as expressions; any positive
    rescaling works for rank/kernel questions downstream.
    """
    n = model.n
    # symbolic frame matrix by rows: entry [r][c] = component r of field c
    M = [[model.frame[c][r] for c in range(n)] for r in range(n)]
    omega = []
    for j in range(n):
        minor = [[M[r][c] for c in range(n - 1)] for r in range(n) if r != j]
        sign = (-1) ** ((n - 1) + j)
        d = _sym_det(minor)
        omega.append(d if sign > 0 else ex.neg(d))
    return tuple(omega)


def _sym_pfaffian(A):
    k = len(A)
    if k == 0:
        return ex.ONE
    if k % 2 == 1:
        return ex.ZERO
    if k == 2:
        return A[0][1]
    acc = ex.ZERO
    for j in range(1, k):
        keep = [r for r in range(k) if r not in (0, j)]
        sub = [[A[r][c] for c in keep] for r in keep]
        term = ex.mul(A[0][j], _sym_pfaffian(sub))
        acc = ex.add(acc, term) if (j - 1) % 2 == 0 else ex.sub(acc, term)
    return acc


class Classification:
    def __init__(self, tag, omega=None, omega_rank=None, abnormal_coeffs=None,
                 abnormal=None, diagnostics=""):
        self.tag = tag
        self.omega = omega
        self.omega_rank = omega_rank
        self.abnormal_coeffs = abnormal_coeffs
        self.abnormal = abnormal
        self.diagnostics = diagnostics

    def __repr__(self):
        return "Classification(%r, rank=%r)" % (self.tag, self.omega_rank)


def classify_distribution(model, samples=7, seed=0, tol=1e-8):
    """Pointwise type of D: full tangent bundle, contact, quasi-contact, other.

    Uses the two-form d(omega) restricted to D, computed exactly through
    Omega_ab = -omega([X_a, X_b]) (the omega(X) terms are constant multiples
    of delta_{.,n}, so their derivatives along D drop out).
    """
    n, m = model.n, model.m
    if m == n:
        return Classification("full", diagnostics="distribution equals the tangent bundle")
    if m != n - 1:
        raise ValueError("classification implemented for corank 0 or 1 only")

    omega = annihilator(model)
    sf = StructureFunctions(model)
    Omega = [[ex.ZERO] * m for _ in range(m)]
    for a in range(m):
        for b in range(a + 1, m):
            br = sf.bracket_exprs[(a, b)]
            val = ex.ZERO
            for k in range(n):
                val = ex.add(val, ex.mul(omega[k], br[k]))
            Omega[a][b] = ex.neg(val)
            Omega[b][a] = val

    fn = ex.compile_exprs([Omega[a][b] for a in range(m) for b in range(m)], name="_Omega")
    rng = np.random.default_rng(seed)
    points = [model.center()] + [model.sample_point(rng) for _ in range(samples)]
    ranks = set()
    for q in points:
        vals = np.asarray(fn(tuple(q)), dtype=float).reshape(m, m)
        s = np.linalg.svd(vals, compute_uv=False)
        top = s[0] if s.size else 0.0
        ranks.add(int(np.sum(s > tol * max(top, 1e-30))) if top > 0 else 0)

    if len(ranks) != 1:
        return Classification("other", omega=omega, omega_rank=None,
                              diagnostics="restricted two-form rank varies over probes: %s"
                                          % sorted(ranks))
    r = ranks.pop()
    if m % 2 == 0 and r == m:
        return Classification("contact", omega=omega, omega_rank=r)
    if m % 2 == 1 and r == m - 1:
        coeffs = tuple(_sym_pfaffian([[Omega[x][y] for y in range(m) if y != a]
                                      for x in range(m) if x != a])
                       if a % 2 == 0 else
                       ex.neg(_sym_pfaffian([[Omega[x][y] for y in range(m) if y != a]
                                             for x in range(m) if x != a]))
                       for a in range(m))
        field = []
        for comp in range(n):
            acc = ex.ZERO
            for a in range(m):
                acc = ex.add(acc, ex.mul(coeffs[a], model.frame[a][comp]))
            field.append(acc)
        return Classification("quasi-contact", omega=omega, omega_rank=r,
                              abnormal_coeffs=coeffs, abnormal=tuple(field))
    return Classification("other", omega=omega, omega_rank=r,
                          diagnostics="restricted two-form rank %d on rank-%d distribution" % (r, m))


# ---------------------------------------------------------------------------
# symbolic orthonormalization

class OrthonormalFrame:
    def __init__(self, fields, coeffs):
        self.fields = fields    # m tuples of n Expr (coordinate components)
        self.coeffs = coeffs    # m tuples of m Expr (in terms of X_1..X_m)


def orthonormalize(model):
    """Gram-Schmidt over gram1, symbolic; returns fields and frame coefficients."""
    m, n = model.m, model.n
    g = model.gram1

    def inner(a, b):
        acc = ex.ZERO
        for i in range(m):
            if ex.is_zero(a[i]):
                continue
            for j in range(m):
                if ex.is_zero(b[j]):
                    continue
                acc = ex.add(acc, ex.mul(ex.mul(a[i], b[j]), g[i][j]))
        return acc

    coeffs = []
    for s in range(m):
        w = [ex.ONE if i == s else ex.ZERO for i in range(m)]
        for t in range(s):
            proj = inner(w, coeffs[t])
            w = [ex.sub(w[i], ex.mul(proj, coeffs[t][i])) for i in range(m)]
        norm = ex.sqrt(inner(w, w))
        coeffs.append(tuple(ex.div(w[i], norm) for i in range(m)))

    fields = []
    for s in range(m):
        comp = []
        for k in range(n):
            acc = ex.ZERO
            for i in range(m):
                acc = ex.add(acc, ex.mul(coeffs[s][i], model.frame[i][k]))
            comp.append(acc)
        fields.append(tuple(comp))
    return OrthonormalFrame(tuple(fields), tuple(coeffs))
