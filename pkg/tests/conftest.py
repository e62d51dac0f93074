import numpy as np
import pytest

from freeway_dqn import nn


def random_net(rng, architecture="plain", hidden=nn.Activation.RELU, obs_dim=None, n_actions=None):
    """Small random network with non-zero biases (keeps ReLU units away from exact ties)."""
    obs_dim = obs_dim or int(rng.integers(2, 6))
    n_actions = n_actions or int(rng.integers(2, 5))
    if architecture == "plain":
        dims = [obs_dim, *rng.integers(2, 7, size=int(rng.integers(0, 3))).tolist(), n_actions]
        net = nn.make_plain(dims, rng, hidden=hidden)
    else:
        t = int(rng.integers(3, 7))
        net = nn.make_dueling([obs_dim, t], [t, int(rng.integers(2, 5)), 1],
                              [t, int(rng.integers(2, 5)), n_actions], rng, hidden=hidden)
    for stack in net.stack_names:
        for b in net.biases[stack]:
            b[:] = rng.normal(scale=0.3, size=b.shape)
    return net


def flat(grads):
    return np.concatenate([g.ravel() for g in grads.arrays()])


def linear_net(weights, biases):
    """Single LINEAR layer plain net with the given (rows = outputs) weight matrix."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    spec = nn.LayerSpec(w.shape[1], w.shape[0], nn.Activation.LINEAR)
    return nn.QNetworkParams(nn.Architecture.PLAIN, {"layers": [spec]}, {"layers": [w]}, {"layers": [b]})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
