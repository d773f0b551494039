import numpy as np
import pytest

from polargrad.envs import TabularMDP, max_of_two_quadratics, qtran_matrix_game


@pytest.fixture
def matrix_game():
    return qtran_matrix_game()


@pytest.fixture
def mtq_game():
    return max_of_two_quadratics()


def deterministic_chain(n_states=3, n=2, actions=2, gamma=0.9, seed=3):
    """Deterministic-transition chain MDP with random rewards.

    Determinism makes the TD fixed point an exact linear system, which the
    critic tests solve independently.
    """
    rng = np.random.default_rng(seed)
    A = actions**n
    P = np.zeros((n_states, A, n_states))
    for s in range(n_states):
        for a in range(A):
            P[s, a, (s + a + 1) % n_states] = 1.0
    r = rng.uniform(-1.0, 1.0, (n_states, A))
    return TabularMDP(n=n, state_count=n_states, action_count=actions, gamma=gamma,
                      transition=P, reward=r, initial_state=0, horizon=20)


def stochastic_mdp(n_states=2, n=2, actions=2, gamma=0.9, seed=5):
    rng = np.random.default_rng(seed)
    A = actions**n
    P = rng.dirichlet(np.ones(n_states), size=(n_states, A))
    r = rng.uniform(-1.0, 1.0, (n_states, A))
    return TabularMDP(n=n, state_count=n_states, action_count=actions, gamma=gamma,
                      transition=P, reward=r, initial_state=0, horizon=20)


@pytest.fixture
def chain_mdp():
    return deterministic_chain()


@pytest.fixture
def two_state_mdp():
    return stochastic_mdp()
