import numpy as np
import pytest

from hjblab.coefficients import (
    ActionSet,
    CoefficientError,
    make_bang_bang,
    make_counterexample,
    bang_bang_actions,
)
from hjblab.grids import build_grid, field_from_function, spatial_gradient
from hjblab.hamiltonian import (
    Policy,
    SlackSchedule,
    constant_policy,
    ham_min,
    select_policy,
    truncate_action_set,
)


@pytest.fixture
def torus():
    return build_grid("torus", 1, (-1.0, 1.0), 16, 1.0, 4)


def test_ham_min_bang_bang(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    val, idx = ham_min(0.0, 0.25, 2.0, bb, aset)
    # b = a, f = dist^2: min over {-1, 1} of 2a + 0.0625 is at a = -1
    assert idx == 0
    assert val == pytest.approx(-2.0 + 0.25**2)


def test_ham_min_zero_gradient_tie_break(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    val, idx = ham_min(0.0, 0.5, 0.0, bb, aset)
    assert idx == 0  # lowest index on ties
    assert val == pytest.approx(0.25)


def test_ham_min_counterexample_diagonal():
    g = build_grid("box", 1, (-6.0, 6.0), 25, 1.0, 4)
    ce = make_counterexample(g)
    nodes = g.space_axis(0)
    aset = ActionSet(nodes)
    x = nodes[14]  # a node, positive gradient below
    val, idx = ham_min(0.0, x, 2.0, ce, aset)
    assert nodes[idx] == x  # picks a = x, switching the drift off
    assert val == pytest.approx(x**2)


def test_lower_envelope(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    rng = np.random.default_rng(3)
    for _ in range(25):
        x = rng.uniform(-1, 1)
        p = rng.normal() * 3
        val, _ = ham_min(0.1, x, p, bb, aset)
        for ia in range(len(aset)):
            b, f = bb.eval(0.1, x, aset.action(ia))
            assert val <= b[0] * p + f + 1e-15


def test_concavity_in_p(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    rng = np.random.default_rng(9)
    for _ in range(50):
        x = rng.uniform(-1, 1)
        p1, p2 = rng.normal(size=2) * 4
        lam = rng.uniform()
        h1, _ = ham_min(0.0, x, p1, bb, aset)
        h2, _ = ham_min(0.0, x, p2, bb, aset)
        hmid, _ = ham_min(0.0, x, lam * p1 + (1 - lam) * p2, bb, aset)
        assert hmid >= lam * h1 + (1 - lam) * h2 - 1e-12


def test_select_policy_single_action(torus):
    bb = make_bang_bang(torus)
    single = ActionSet(np.array([1.0]))
    grad = field_from_function(torus, lambda t, X: np.zeros(X.shape[:-1]))
    grad_vec = spatial_gradient(grad)
    pol = select_policy(grad_vec, bb, single)
    assert np.all(pol.indices == 0)


def test_select_policy_sign_rule(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    u = field_from_function(torus, lambda t, X: X[..., 0] ** 2)
    grad = spatial_gradient(u)
    pol = select_policy(grad, bb, aset)
    x = torus.space_axis(0)
    interior = np.abs(np.abs(x) - 1.0) > 0.1  # away from the periodic seam
    # argmin of a * p over {-1, +1} is -sign(p) = -sign(2x)
    expected = np.where(x[interior] > 0, 0, 1)
    assert np.array_equal(pol.indices[0][interior], expected)


def test_selector_ignores_slack(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    u = field_from_function(torus, lambda t, X: X[..., 0] ** 2)
    grad = spatial_gradient(u)
    p_exact = select_policy(grad, bb, aset)
    p_slack = select_policy(grad, bb, aset, slack=SlackSchedule(delta=1.0, k=0))
    assert np.array_equal(p_exact.indices, p_slack.indices)


def test_selector_realizes_ham_min(torus):
    bb = make_bang_bang(torus)
    aset = bang_bang_actions()
    u = field_from_function(torus, lambda t, X: np.sin(np.pi * X[..., 0]))
    grad = spatial_gradient(u)
    pol = select_policy(grad, bb, aset)
    X = torus.points()
    for n, t in enumerate(torus.times()):
        for i in range(torus.nx[0]):
            p = grad.values[n, i, 0]
            val, _ = ham_min(t, X[i], p, bb, aset)
            a = aset.action(pol.indices[n, i])
            b, f = bb.eval(t, X[i], a)
            assert b[0] * p + f == pytest.approx(val, abs=1e-15)


def test_truncate_action_set():
    aset = ActionSet(np.array([1.0, 2.0, 3.0]))
    t2 = truncate_action_set(aset, 2)
    assert list(t2.values) == [1.0, 2.0] and t2.truncated
    t5 = truncate_action_set(aset, 5)
    assert np.array_equal(t5.values, aset.values)
    with pytest.raises(CoefficientError):
        truncate_action_set(aset, 0)


def test_slack_schedule():
    s = SlackSchedule(delta=1.0, k=3)
    assert s.value(0.0) == pytest.approx(2.0**-3)
    assert s.value(1.0) == pytest.approx(2.0**-3 / 2.0)
    assert s.value(0.0, k=4) == pytest.approx(2.0**-4)  # halves in k
    assert s.check_exponent(dim=1, p=4)  # delta=1 > 1/8
    with pytest.raises(CoefficientError):
        SlackSchedule(delta=0.0)


def test_policy_validation(torus):
    aset = bang_bang_actions()
    good = constant_policy(torus, aset, 1)
    assert np.all(good.actions() == 1.0)
    with pytest.raises(CoefficientError):
        Policy(torus, np.full((torus.n_levels,) + torus.space_shape, 2), aset)
    with pytest.raises(CoefficientError):
        Policy(torus, np.zeros((2, 3)), aset)


def test_policy_csv(tmp_path, torus):
    pol = constant_policy(torus, bang_bang_actions(), 0)
    path = tmp_path / "policy.csv"
    pol.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,action_index"
    assert len(lines) == 1 + torus.n_levels * torus.nx[0]
    assert lines[1].endswith(",0")
