import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from subflow.domain import build_chart, integrate
from subflow.errors import PreconditionError, UnsupportedTargetError, ValidationError
from subflow.fields import horizontal_differential, pullback_covariant_derivative
from subflow.flow import FlowOptions, flow_until, initial_map
from subflow.stability import (basis_vector, conformal_field, hessian_min_eigenvalue, instability_certificate,
                               leung_sum, random_section, rayleigh_minimize, sphere_index_identity,
                               stability_probe)
from subflow.target import Target, make_potential
from subflow.variational import index_form, index_form_polarized, total_energy

finite = st.floats(-10, 10, allow_nan=False)


@pytest.fixture(scope="module")
def wrapped8():
    """Critical map into S^3 reached by flowing the wrap map on an 8^3 grid."""
    c = build_chart("twisted-torus", (8, 8, 8))
    t = Target("sphere", 3)
    G = make_potential("constant", t)
    f, _, status = flow_until(initial_map("wrap", c, t), G, FlowOptions(dt=0.05, tol=1e-4))
    assert status == "converged"
    return f, G


@settings(max_examples=100)
@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
def test_conformal_pointwise_algebra(y, a):
    """|v|^2 + phi^2 = 1, and summed over a basis, sum phi^2 = 1 and sum |v|^2 = n."""
    if np.linalg.norm(y) < 1e-3 or np.linalg.norm(a) < 1e-3:
        return
    y = y / np.linalg.norm(y)
    a = a / np.linalg.norm(a)
    phi = a @ y
    v = a - phi * y
    assert abs(v @ y) < 1e-12
    assert v @ v + phi**2 == pytest.approx(1.0, abs=1e-12)
    phis = np.array([basis_vector(4, s) @ y for s in range(4)])
    vs = [basis_vector(4, s) - p * y for s, p in enumerate(phis)]
    assert np.sum(phis**2) == pytest.approx(1.0, abs=1e-12)
    assert sum(u @ u for u in vs) == pytest.approx(3.0, abs=1e-12)


def test_conformal_field_examples(random_pair):
    f, _ = random_pair
    cf = conformal_field(f, [0, 0, 1.0])
    np.testing.assert_array_equal(cf.phi, f.values[2])
    assert np.max(np.abs(np.sum(cf.v.values * f.values, axis=0))) < 1e-15
    np.testing.assert_allclose(np.sum(cf.v.values**2, axis=0) + cf.phi**2, 1.0, atol=1e-14)
    with pytest.raises(ValidationError):
        conformal_field(f, [0, 0, 2.0])
    with pytest.raises(ValidationError):
        conformal_field(f, [0, 1.0])


def test_conformal_derivative_against_stencil():
    """The exact rule nabla v = -phi df agrees with the discrete pull-back derivative."""
    errs = []
    for n in (16, 32):
        c = build_chart("twisted-torus", (n, n, n))
        f = initial_map("random-smooth", c, Target("sphere", 2), seed=3)
        cf = conformal_field(f, [0.6, 0.0, 0.8])
        dfs = horizontal_differential(f)
        exact = cf.covariant_derivatives(dfs)
        errs.append(max(np.max(np.abs(pullback_covariant_derivative(f, cf.v, A).values - exact[A])) for A in range(2)))
    assert errs[1] < errs[0] / 8


def test_conformal_needs_sphere(twisted8):
    f = initial_map("constant", twisted8, Target("flat", 3))
    with pytest.raises(UnsupportedTargetError):
        conformal_field(f, [1.0, 0, 0])
    with pytest.raises(UnsupportedTargetError):
        leung_sum(f, make_potential("constant", f.target))


@pytest.mark.parametrize("kind", ["constant", "height", "squared-distance"])
def test_sphere_index_identity_on_any_map(random_pair, kind):
    f, _ = random_pair
    G = make_potential(kind, f.target)
    for s in range(3):
        chk = sphere_index_identity(f, G, basis_vector(3, s))
        assert chk.ok, chk


@pytest.mark.parametrize("n", [2, 3, 4])
def test_leung_sum_reduction(twisted8, n):
    t = Target("sphere", n)
    f = initial_map("random-smooth", twisted8, t, seed=n)
    for kind in ("constant", "height"):
        L = leung_sum(f, make_potential(kind, t))
        assert L.ok, L
        assert len(L.per_direction) == n + 1


def test_leung_sum_vanishes_for_s2(wrapped8):
    f, _ = wrapped8
    g = f.__class__(f.chart, Target("sphere", 2), f.values[:3].copy())
    L = leung_sum(g, make_potential("constant", g.target))
    assert abs(L.sum_direct) < 1e-10 * L.scale


def test_certificate_on_wrapped_map(wrapped8):
    f, G = wrapped8
    v = instability_certificate(f, G)
    assert v.verdict == "unstable-certified"
    assert v.witness_ref.startswith("conformal:")
    assert v.min_index < 0
    assert index_form(f, v.witness, G) == pytest.approx(v.min_index, rel=1e-6)


def test_certificate_precondition(random_pair):
    f, _ = random_pair
    with pytest.raises(PreconditionError):
        instability_certificate(f, make_potential("constant", f.target))


def test_probe_examples(twisted8, s2):
    G = make_potential("height", s2)
    south = initial_map("constant", twisted8, s2, point=[0, 0, -1.0])
    north = initial_map("constant", twisted8, s2)
    assert stability_probe(south, G, 0).verdict == "inconclusive"
    ok = stability_probe(south, G, 30, seed=2)
    assert ok.verdict == "stable-probed" and ok.probes == 30 and ok.min_index > 0
    # oscillating random sections carry enough kinetic energy to hide the
    # instability at the north pole; a constant section exposes it
    assert stability_probe(north, G, 30, seed=2).verdict == "stable-probed"
    const = north.section(np.broadcast_to(np.array([1.0, 0, 0]).reshape(3, 1, 1, 1), north.values.shape).copy())
    bad = stability_probe(north, G, 30, seed=2, extra=[const])
    assert bad.verdict == "unstable-certified" and bad.witness_ref == "probe:0"
    assert bad.min_index == pytest.approx(-twisted8.volume)


def test_probe_thread_count_does_not_matter(twisted8, s2, monkeypatch):
    f = initial_map("random-smooth", twisted8, s2, seed=1)
    G = make_potential("squared-distance", s2)
    monkeypatch.setenv("SUBFLOW_THREADS", "1")
    a = stability_probe(f, G, 12, seed=4, slack=np.inf)
    monkeypatch.setenv("SUBFLOW_THREADS", "4")
    b = stability_probe(f, G, 12, seed=4, slack=np.inf)
    assert a.min_index == b.min_index and a.verdict == b.verdict


def test_hessian_min_eigenvalue(twisted8, s2):
    G = make_potential("height", s2)
    assert hessian_min_eigenvalue(initial_map("constant", twisted8, s2), G) == pytest.approx(1.0)
    assert hessian_min_eigenvalue(initial_map("constant", twisted8, s2, point=[0, 0, -1.0]), G) == pytest.approx(-1.0)
    flat = Target("flat", 3)
    q = make_potential("ambient-quadratic", flat, coef=-1.0)
    assert hessian_min_eigenvalue(initial_map("constant", twisted8, flat), q) == pytest.approx(-2.0)


@pytest.mark.parametrize("point,expected", [([0, 0, 1.0], -1.0), ([0, 0, -1.0], 1.0)])
def test_rayleigh_constant_maps(twisted8, s2, point, expected):
    """At the poles the lowest eigensections are the constant ones, with eigenvalue -/+1."""
    G = make_potential("height", s2)
    f = initial_map("constant", twisted8, s2, point=point)
    lam, V = rayleigh_minimize(f, G, 60, seed=1)
    assert lam == pytest.approx(expected, abs=1e-8)
    assert integrate(f.chart, np.sum(V.values**2, axis=0)) == pytest.approx(1.0)
    assert index_form_polarized(f, V, V, G) == pytest.approx(lam, abs=1e-12)


def test_rayleigh_is_monotone(random_pair):
    f, _ = random_pair
    G = make_potential("squared-distance", f.target)
    lams = [rayleigh_minimize(f, G, k, seed=3)[0] for k in (1, 3, 9)]
    assert lams[0] >= lams[1] >= lams[2]
    with pytest.raises(ValidationError):
        rayleigh_minimize(f, G, 0)


def test_random_section_is_tangent(random_pair):
    f, _ = random_pair
    V = random_section(f, np.random.default_rng(0))
    assert np.max(np.abs(np.sum(V.values * f.values, axis=0))) < 1e-14
    assert total_energy(f, make_potential("constant", f.target)) > 0
