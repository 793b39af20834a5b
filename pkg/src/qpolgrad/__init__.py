"""Quantum policy-gradient reinforcement learning, self-contained on numpy.

Subpackages:

- qsim: dense statevector simulation for <= 8 qubits
- vqpolicy: variational softmax policy and parameter-shift gradients
- envs: CartPole, Acrobot, and single-qubit state-preparation control
- reinforce: trajectory collection, baseline, gradient estimator, Adam
- classical: bias-free ReLU network baselines with manual backprop
- analysis: Fisher spectrum diagnostics and sample-complexity bounds
- config / cli: experiment configuration, presets, and the command line
"""

from .errors import ConfigError, ContractError, NumericalError

__all__ = ["ConfigError", "ContractError", "NumericalError"]

__version__ = "0.1.0"
