import numpy as np
import pytest

from geoequiv.hamiltonian import hamiltonian
from geoequiv.pair import AdaptedFrame
from geoequiv.verifier import (OrbitalMapError, orbital_map,
                               check_orbital_identities, verify_equivalence)
from geoequiv.constructors import (build_dini, build_gendini_case1,
                                   build_quasi_contact)

from conftest import heisenberg


# ------------------------------------------------------------- orbital map

def test_orbital_map_lands_on_unit_level():
    # the transported covector always sits on the gram2 half-level set
    cases = [
        (build_dini("1+x1/10", "2+x2/10"), (0.1, 0.2)),
        (build_quasi_contact({"beta": "exp(t)", "C1": 1.0, "C2": 1.0}),
         (0.05, -0.02, 0.01, 0.03)),
    ]
    rng = np.random.default_rng(13)
    for m, q in cases:
        fr = AdaptedFrame(m, center=np.array(q))
        for _ in range(5):
            p = rng.normal(size=m.n)
            res = orbital_map(m, fr, (np.array(q), p))
            assert hamiltonian(m, 2, res.lam2) == pytest.approx(0.5, abs=1e-10)
            assert res.a > 0


def test_orbital_map_scale_invariant_direction():
    # scaling p scales a but the transported covector is unchanged
    m = build_dini("1+x1/10", "2+x2/10")
    q = np.array([0.1, 0.2])
    fr = AdaptedFrame(m, center=q)
    p = np.array([0.4, -0.9])
    r1 = orbital_map(m, fr, (q, p))
    r2 = orbital_map(m, fr, (q, 3.0 * p))
    assert r2.a == pytest.approx(3.0 * r1.a, rel=1e-12)
    assert np.allclose(r2.lam2[1], r1.lam2[1], atol=1e-12)


def test_orbital_map_rejects_annihilating_covector():
    m = heisenberg()
    fr = AdaptedFrame(m, center=np.zeros(3))
    q = np.zeros(3)
    p = np.array([0.0, 0.0, 2.0])      # kills X1, X2 at the origin
    with pytest.raises(OrbitalMapError, match="annihilates"):
        orbital_map(m, fr, (q, p))


def test_orbital_map_abnormal_cone_raises():
    # covector along the characteristic direction: every Q_{j,m+1} vanishes
    m = build_quasi_contact({"beta": "exp(t)", "C1": 1.0, "C2": 1.0})
    q = np.array([0.05, -0.02, 0.01, 0.03])
    fr = AdaptedFrame(m, center=q)
    data = fr.point_data(tuple(q))
    u = np.zeros(4)
    u[0] = 1.0                          # adapted field of the split eigenvalue
    p = np.linalg.solve(data.A.T, u)
    with pytest.raises(OrbitalMapError, match="abnormal"):
        orbital_map(m, fr, (q, p))


# -------------------------------------------------------- orbital identities

def test_identities_hold_on_equivalent_pairs():
    cases = [
        (build_dini("1+x1/10", "2+x2/10"), (0.1, 0.2), (0.7, -0.4)),
        (build_gendini_case1("1 - u", "1 + v"), (0.25, 0.4), (0.6, 0.3)),
        (build_quasi_contact({"beta": "exp(t)", "C1": 1.0, "C2": 1.0}),
         (0.05, -0.02, 0.01, 0.03), (0.5, -0.3, 0.8, 0.2)),
    ]
    for m, q, p in cases:
        fr = AdaptedFrame(m, center=np.array(q))
        rep = check_orbital_identities(m, fr, (np.array(q), np.array(p)))
        assert rep.max_residual < 1e-6, (m.meta.get("generator"), rep.res_first,
                                         rep.res_second)


def test_identities_split_conformal_contact():
    # conformal rescaling satisfies the pointwise family but breaks the
    # flow-transport one
    m = heisenberg("1 + x^2 + y^2")
    q = np.array([0.2, 0.3, 0.0])
    p = np.array([0.3, -0.8, 1.1])
    fr = AdaptedFrame(m, center=q)
    rep = check_orbital_identities(m, fr, (q, p))
    assert max(rep.res_first) < 1e-9
    assert rep.res_second[0] > 1e-3


# ---------------------------------------------------------------- verify

def test_verify_passes_proportional_pairs():
    for c in ("0.5", "2"):
        rep = verify_equivalence(heisenberg(c), sampling={"count": 8})
        assert rep.verdict == "pass", rep.as_dict()["counts"]
        assert rep.max_deviation < 1e-8


def test_verify_passes_dini():
    rep = verify_equivalence(build_dini("1+x1/10", "2+x2/10"),
                             sampling={"count": 8})
    assert rep.verdict == "pass"
    assert rep.max_deviation < 1e-6
    assert rep.counts["verified"] >= 4


def test_verify_fails_conformal_contact():
    rep = verify_equivalence(heisenberg("1 + x^2 + y^2"), sampling={"count": 8})
    assert rep.verdict == "fail"
    assert rep.max_deviation > 1e-6


def test_verify_quasi_contact_with_cone_exclusion():
    m = build_quasi_contact({"beta": "exp(t)", "C1": 1.0, "C2": 1.0})
    rep = verify_equivalence(m, sampling={"count": 8},
                             exclusions={"abnormal_cone": 0.1})
    assert rep.verdict == "pass", rep.as_dict()["counts"]
    assert rep.max_deviation < 1e-6
    assert rep.config["abnormal_cone"] == pytest.approx(0.1)


def test_verify_is_deterministic():
    m = build_dini("1+x1/10", "2+x2/10")
    a = verify_equivalence(m, sampling={"count": 5}).as_dict()
    b = verify_equivalence(m, sampling={"count": 5}).as_dict()
    assert a == b
    c = verify_equivalence(m, sampling={"count": 5, "seed": 8}).as_dict()
    assert c["samples"][0]["q0"] != a["samples"][0]["q0"]


def test_verify_truncates_on_tight_domain():
    # flat pair, straight unit-speed lines: a long horizon exits the box
    m = build_dini(1.0, 2.0)
    rep = verify_equivalence(m, sampling={"count": 8, "T": 0.5})
    assert rep.verdict == "pass"
    assert rep.counts["truncated"] >= 1
    # an enormous horizon leaves too little usable window on every sample
    rep = verify_equivalence(m, sampling={"count": 6, "T": 50.0})
    assert rep.verdict == "inconclusive"
    assert rep.counts["verified"] < 3


def test_verify_rejects_unknown_config():
    m = build_dini(1.0, 2.0)
    with pytest.raises(ValueError, match="sampling"):
        verify_equivalence(m, sampling={"bogus": 1})
    with pytest.raises(ValueError, match="exclusion"):
        verify_equivalence(m, exclusions={"bogus": 1})


def test_report_dict_shape():
    m = build_dini("1+x1/10", "2+x2/10")
    rep = verify_equivalence(m, sampling={"count": 4})
    doc = rep.as_dict()
    assert set(doc) == {"verdict", "config", "counts", "max_deviation",
                        "max_energy_drift", "excluded_resamples", "samples"}
    assert doc["counts"]["requested"] == 4
    assert len(doc["samples"]) == 4
    assert doc["config"]["T"] == pytest.approx(0.3)
    for s in doc["samples"]:
        assert s["status"] in {"verified", "truncated", "clipped",
                               "frame-error", "degenerate"}
