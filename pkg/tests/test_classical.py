import numpy as np
import pytest

from qpolgrad import classical
from qpolgrad.classical import MlpParams, MlpPolicy, MlpSpec, forward, grad_log_policy, preset
from qpolgrad.errors import ConfigError, ContractError
from qpolgrad.vqpolicy import softmax_policy


def test_preset_shapes_and_parameter_counts():
    assert preset("cartpole").layer_sizes == (4, 128, 2)
    assert preset("acrobot").layer_sizes == (6, 32, 3)
    assert preset("qcontrol").layer_sizes == (4, 16, 2)
    assert preset("cartpole").n_params == 768
    assert preset("acrobot").n_params == 288
    assert preset("qcontrol").n_params == 96


def test_preset_unknown_name():
    with pytest.raises(ConfigError):
        preset("lunarlander")


def test_spec_validation():
    with pytest.raises(ContractError):
        MlpSpec((4,))
    with pytest.raises(ContractError):
        MlpSpec((4, 2), dropout_p=1.0)


def test_zero_weights_give_uniform_policy():
    spec = MlpSpec((4, 8, 3))
    params = MlpParams.from_flat(spec, np.zeros(spec.n_params))
    prefs = forward(spec, params, np.array([1.0, -2.0, 0.5, 3.0]))
    np.testing.assert_allclose(prefs, np.zeros(3))
    np.testing.assert_allclose(softmax_policy(prefs, 1.0), np.full(3, 1 / 3))


def test_scalar_chain_hand_evaluation():
    # 1-1-1 net, hidden weight 2, output weight w: input 3 -> relu(6) -> 6w
    spec = MlpSpec((1, 1, 1))
    for w_out in (0.5, -1.25):
        params = MlpParams([np.array([[2.0]]), np.array([[w_out]])])
        out = forward(spec, params, np.array([3.0]))
        assert out[0] == pytest.approx(6.0 * w_out)


def test_flatten_roundtrip():
    rng = np.random.default_rng(0)
    spec = preset("acrobot")
    params = MlpParams.glorot(spec, rng)
    flat = params.flatten()
    assert flat.shape == (288,)
    rebuilt = MlpParams.from_flat(spec, flat)
    for a, b in zip(params.weights, rebuilt.weights):
        np.testing.assert_array_equal(a, b)


def fd_log_policy(spec, params, x, action, h=1e-5):
    flat = params.flatten()
    g = np.empty_like(flat)
    for j in range(len(flat)):
        up = flat.copy()
        up[j] += h
        dn = flat.copy()
        dn[j] -= h
        lp_up = np.log(softmax_policy(forward(spec, MlpParams.from_flat(spec, up), x), 1.0)[action])
        lp_dn = np.log(softmax_policy(forward(spec, MlpParams.from_flat(spec, dn), x), 1.0)[action])
        g[j] = (lp_up - lp_dn) / (2 * h)
    return g


def test_backward_matches_finite_differences_small_net():
    rng = np.random.default_rng(1)
    spec = MlpSpec((4, 3, 2))
    for _ in range(100):
        params = MlpParams.glorot(spec, rng)
        x = rng.normal(size=4)
        action = int(rng.integers(2))
        got = grad_log_policy(spec, params, x, action)
        want = fd_log_policy(spec, params, x, action)
        assert np.max(np.abs(got - want)) < 1e-6


@pytest.mark.parametrize("name", ["cartpole", "acrobot", "qcontrol"])
def test_backward_matches_finite_differences_presets(name):
    rng = np.random.default_rng(2)
    spec = preset(name)
    for _ in range(3):
        params = MlpParams.glorot(spec, rng)
        x = rng.normal(size=spec.layer_sizes[0])
        action = int(rng.integers(spec.layer_sizes[-1]))
        got = grad_log_policy(spec, params, x, action)
        want = fd_log_policy(spec, params, x, action)
        assert np.max(np.abs(got - want)) < 1e-6


def test_symmetric_output_rows_give_opposite_output_gradients():
    # identical output rows -> pi = (1/2, 1/2); the output-layer block of
    # grad log pi(a0) is the negative of grad log pi(a1)
    rng = np.random.default_rng(3)
    spec = MlpSpec((3, 5, 2))
    w1 = rng.normal(size=(5, 3))
    row = rng.normal(size=5)
    params = MlpParams([w1, np.stack([row, row])])
    x = rng.normal(size=3)
    g0 = grad_log_policy(spec, params, x, 0)[-10:].reshape(2, 5)
    g1 = grad_log_policy(spec, params, x, 1)[-10:].reshape(2, 5)
    np.testing.assert_allclose(g0, -g1, atol=1e-12)


def test_zero_input_zeroes_first_layer_gradient():
    rng = np.random.default_rng(4)
    spec = MlpSpec((4, 6, 2))
    params = MlpParams.glorot(spec, rng)
    g = grad_log_policy(spec, params, np.zeros(4), 1)
    np.testing.assert_array_equal(g[: 4 * 6], np.zeros(24))


def test_eval_mode_is_deterministic_with_dropout_configured():
    rng = np.random.default_rng(5)
    spec = MlpSpec((4, 16, 2), dropout_p=0.2)
    params = MlpParams.glorot(spec, rng)
    x = rng.normal(size=4)
    a = forward(spec, params, x, mode="eval")
    b = forward(spec, params, x, mode="eval")
    np.testing.assert_array_equal(a, b)


def test_dropout_expectation_matches_eval_forward():
    # inverted dropout is mean-preserving: averaging many train-mode outputs
    # approaches the eval output, per output coordinate, within 3 sigma
    rng = np.random.default_rng(6)
    spec = MlpSpec((4, 16, 2), dropout_p=0.2)
    params = MlpParams.glorot(spec, rng)
    x = rng.normal(size=4)
    exact = forward(spec, params, x, mode="eval")
    n = 10**4
    draws = np.stack([forward(spec, params, x, mode="train", rng=rng) for _ in range(n)])
    mean = draws.mean(axis=0)
    sem = draws.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(mean - exact) <= 3 * sem + 1e-12)


def test_train_mode_requires_rng_with_dropout():
    spec = MlpSpec((2, 3, 2), dropout_p=0.5)
    params = MlpParams.glorot(spec, np.random.default_rng(7))
    with pytest.raises(ContractError):
        forward(spec, params, np.zeros(2), mode="train")


def test_policy_batch_grads_match_single():
    rng = np.random.default_rng(8)
    spec = preset("qcontrol")
    policy = MlpPolicy(spec, MlpParams.glorot(spec, rng))
    obs = [rng.normal(size=4) for _ in range(6)]
    actions = rng.integers(2, size=6)
    batch = policy.grad_log_batch(obs, actions)
    for i, (o, a) in enumerate(zip(obs, actions)):
        np.testing.assert_allclose(batch[i], policy.grad_log(o, int(a)), atol=1e-12)


def test_score_identity_classical():
    rng = np.random.default_rng(9)
    spec = MlpSpec((4, 8, 3))
    for _ in range(25):
        policy = MlpPolicy(spec, MlpParams.glorot(spec, rng))
        x = rng.normal(size=4)
        probs = policy.probabilities(x)
        total = np.zeros(spec.n_params)
        for a in range(3):
            total += probs[a] * policy.grad_log(x, a)
        np.testing.assert_allclose(total, 0.0, atol=1e-8)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    spec = preset("cartpole")
    policy = MlpPolicy(spec, MlpParams.glorot(spec, rng))
    path = tmp_path / "classical.json"
    policy.save(path)
    loaded = MlpPolicy.load(path)
    assert loaded.spec == policy.spec
    x = rng.normal(size=4)
    np.testing.assert_allclose(loaded.probabilities(x), policy.probabilities(x), atol=1e-15)

    import json

    data = json.loads(path.read_text())
    assert set(data) == {"weights", "spec"}
