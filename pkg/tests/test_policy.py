import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pifo.errors import UsageError
from pifo.nn.tensor import Tensor, backward, no_grad
from pifo.policy import (LOG_STD_INIT, GaussianPolicy, ValueNet, entropy, log_prob, policy_forward,
                         sample_action)

from oracles import FD_RTOL, central_difference, gaussian_log_density, relative_errors

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def proprio(seed=0, in_dim=4, act=2):
    return GaussianPolicy.create("proprio", in_dim, act, seed)


def test_architecture_and_log_std_init():
    p = proprio()
    shapes = {k: v.shape for k, v in p.params.items()}
    assert shapes == {"policy/fc0/weight": (64, 4), "policy/fc0/bias": (64,),
                      "policy/fc1/weight": (64, 64), "policy/fc1/bias": (64,),
                      "policy/fc2/weight": (2, 64), "policy/fc2/bias": (2,),
                      "policy/log_std": (2,)}
    np.testing.assert_array_equal(p.log_std.data, [LOG_STD_INIT] * 2)
    v = GaussianPolicy.create("vision", 0, 1, 0)
    assert v.params["policy/conv0/weight"].shape == (8, 4, 8, 8)
    assert v.params["policy/conv1/weight"].shape == (16, 8, 4, 4)
    assert v.params["policy/fc0/weight"].shape == (64, 16 * 6 * 6)
    assert all(k.startswith("value/") for k in ValueNet.create("proprio", 4, 0).params)


def test_zero_final_layer_gives_zero_mean():
    p = proprio()
    p.params["policy/fc2/weight"].data[:] = 0.0
    mean, _ = p.forward(np.random.default_rng(0).normal(size=(5, 4)))
    np.testing.assert_array_equal(mean.data, np.zeros((5, 2)))


def test_forward_deterministic_and_kind_checked():
    p = proprio()
    x = np.arange(4.0)
    np.testing.assert_array_equal(p.forward(x)[0].data, p.forward(x)[0].data)
    with pytest.raises(UsageError):
        p.forward(np.zeros((2, 4, 64, 64)))
    with pytest.raises(UsageError):
        GaussianPolicy.create("vision", 0, 1, 0).forward(np.zeros((3, 4)))
    with pytest.raises(UsageError):
        GaussianPolicy.create("pixels", 4, 1, 0)


def test_vision_policy_forward_shapes():
    p = GaussianPolicy.create("vision", 0, 2, 1)
    frames = np.random.default_rng(1).integers(0, 2, size=(3, 4, 64, 64)).astype(float)
    mean, log_std = p.forward(frames)
    assert mean.shape == (3, 2) and log_std.shape == (2,)
    assert np.all(np.isfinite(mean.data))
    v = ValueNet.create("vision", 0, 1).forward(frames)
    assert v.shape == (3,)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-4, 1.0))
def test_mean_is_lipschitz_with_operator_norm_bound(seed, scale):
    rng = np.random.default_rng(seed)
    p = proprio(seed % 1000)
    weights = [p.params[f"policy/fc{i}/weight"].data for i in range(3)]
    lip = np.prod([np.linalg.norm(w, 2) for w in weights])  # tanh is 1-Lipschitz
    x = rng.normal(size=4)
    d = rng.normal(size=4) * scale
    with no_grad():
        a, b = p.forward(x)[0].data, p.forward(x + d)[0].data
    assert np.linalg.norm(a - b) <= lip * np.linalg.norm(d) * (1 + 1e-12)


def test_sample_action_degenerate_and_seeded():
    mean = np.array([0.3, -1.2])
    np.testing.assert_array_equal(sample_action(mean, np.array([-np.inf, -np.inf]),
                                                np.random.default_rng(0)), mean)
    a = sample_action(mean, np.zeros(2), np.random.default_rng(5))
    b = sample_action(mean, np.zeros(2), np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_sample_action_moments_within_clt_bound():
    n = 100_000
    mean, log_std = np.array([0.5, -2.0]), np.array([-0.3, 0.4])
    rng = np.random.default_rng(9)
    s = sample_action(np.tile(mean, (n, 1)), log_std, rng)
    std = np.exp(log_std)
    assert np.all(np.abs(s.mean(0) - mean) < 4 * std / math.sqrt(n))
    # std of the sample std is about sigma / sqrt(2n)
    assert np.all(np.abs(s.std(0) - std) < 4 * std / math.sqrt(2 * n))


def test_log_prob_closed_forms():
    assert log_prob(Tensor([[0.0]]), Tensor([0.0]), np.array([[0.0]])).item() == pytest.approx(
        -HALF_LOG_2PI, abs=1e-15)
    mu, ls = np.array([[0.7, -0.2]]), np.array([0.1, -0.4])
    sigma = np.exp(ls)
    base = log_prob(Tensor(mu), Tensor(ls), mu).item()
    shifted = log_prob(Tensor(mu), Tensor(ls), mu + np.array([[sigma[0], 0.0]])).item()
    assert shifted == pytest.approx(base - 0.5, abs=1e-14)
    rng = np.random.default_rng(2)
    for _ in range(20):
        m, l, a = rng.normal(size=3), rng.normal(size=3) * 0.5, rng.normal(size=3)
        ref = gaussian_log_density(a, m, np.exp(l))
        assert log_prob(Tensor(m[None]), Tensor(l), a[None]).item() == pytest.approx(ref, rel=1e-13)


def test_log_density_integrates_to_one():
    mu, ls = np.array([0.4, -0.7]), np.array([-0.2, 0.3])
    sig = np.exp(ls)
    g0 = np.linspace(mu[0] - 9 * sig[0], mu[0] + 9 * sig[0], 601)
    g1 = np.linspace(mu[1] - 9 * sig[1], mu[1] + 9 * sig[1], 601)
    A, B = np.meshgrid(g0, g1, indexing="ij")
    acts = np.stack([A.ravel(), B.ravel()], axis=1)
    dens = np.exp(log_prob(Tensor(np.tile(mu, (len(acts), 1))), Tensor(ls), acts).data)
    total = np.trapezoid(np.trapezoid(dens.reshape(A.shape), g1, axis=1), g0)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_entropy_closed_forms_and_monte_carlo():
    assert entropy(Tensor([0.0])).item() == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-15)
    ls = np.array([0.2, -1.0, 0.5])
    assert (entropy(Tensor(ls + math.log(2))).item() - entropy(Tensor(ls)).item()
            == pytest.approx(3 * math.log(2), abs=1e-13))
    n = 100_000
    rng = np.random.default_rng(4)
    mu = np.array([1.0, -2.0, 0.0])
    a = sample_action(np.tile(mu, (n, 1)), ls, rng)
    lp = log_prob(Tensor(np.tile(mu, (n, 1))), Tensor(ls), a).data
    assert abs(-lp.mean() - entropy(Tensor(ls)).item()) < 4 * lp.std() / math.sqrt(n)


def test_entropy_independent_of_mean():
    p = proprio()
    ls = p.log_std
    before = entropy(ls).item()
    p.params["policy/fc2/bias"].data[:] += 3.0
    assert entropy(p.log_std).item() == before


def test_log_prob_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    p = proprio(3)
    for name in p.params:
        p.params[name].data[:] += rng.normal(scale=0.05, size=p.params[name].shape)
    obs, act = rng.normal(size=(8, 4)), rng.normal(size=(8, 2))
    names = list(p.params)

    def loss():
        mean, ls = policy_forward(p, obs)
        return log_prob(mean, ls, act).sum()

    backward(loss(), p.params)
    for n in names:
        arr = p.params[n].data
        idx = rng.choice(arr.size, size=min(10, arr.size), replace=False)

        def f():
            with no_grad():
                return loss().item()

        num = central_difference(f, arr, idx)
        assert relative_errors(p.params[n].grad.reshape(-1)[idx], num).max() < FD_RTOL, n
