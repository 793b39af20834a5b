"""Variational softmax policy over a shallow quantum circuit.

The policy pipeline: classical features are angle-encoded into qubits (or a
quantum state is consumed directly), a layered hardware-efficient ansatz (or
a single U3 gate) is applied, per-action preferences are read out as Pauli-Z
expectations, and a trainable inverse temperature sharpens the softmax.

Gradients with respect to circuit angles use the two-term parameter-shift
rule: every trainable angle sits in exactly one Pauli rotation (the U3 gate
is a Z-Y-Z chain, so its three angles qualify), hence
d<a>/d(theta_j) = (<a>(theta_j + pi/2) - <a>(theta_j - pi/2)) / 2 exactly.
The inverse-temperature gradient is analytic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .errors import ContractError

ARCHITECTURES = ("layered", "single_u3")
ENCODINGS = ("angle_rx", "none")

NORM_FLOOR = 1e-8


@dataclass(frozen=True)
class CircuitSpec:
    """Static description of the policy circuit."""

    n_qubits: int
    n_layers: int
    n_actions: int
    architecture: str = "layered"
    encoding: str = "angle_rx"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ContractError(f"unknown architecture {self.architecture!r}")
        if self.encoding not in ENCODINGS:
            raise ContractError(f"unknown encoding {self.encoding!r}")
        if not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ContractError(f"n_qubits must be in [1, {qsim.MAX_QUBITS}]")
        if self.architecture == "layered":
            if self.n_layers < 1:
                raise ContractError("layered ansatz needs n_layers >= 1")
            if self.n_actions > self.n_qubits:
                raise ContractError("qubit-efficient measurement needs n_actions <= n_qubits")
        else:
            if self.n_qubits != 1 or self.n_actions != 2:
                raise ContractError("single_u3 requires exactly 1 qubit and 2 actions")

    @property
    def n_params(self) -> int:
        """Circuit angle count (excludes the inverse temperature)."""
        if self.architecture == "single_u3":
            return 3
        return 2 * self.n_qubits * self.n_layers

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "n_layers": self.n_layers,
            "n_actions": self.n_actions,
            "architecture": self.architecture,
            "encoding": self.encoding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitSpec":
        return cls(**d)


@dataclass
class PolicyParams:
    """Trainable state: flat angle vector plus inverse temperature."""

    theta: np.ndarray
    beta: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 1 or not np.all(np.isfinite(self.theta)):
            raise ContractError("theta must be a finite 1-d vector")
        if not np.isfinite(self.beta):
            raise ContractError("beta must be finite")

    def vector(self) -> np.ndarray:
        """Full trainable vector; beta is the last entry."""
        return np.append(self.theta, self.beta)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "PolicyParams":
        vec = np.asarray(vec, dtype=float)
        return cls(theta=vec[:-1].copy(), beta=float(vec[-1]))


class FeatureNormalizer:
    """Online L-infinity feature scaling onto [-pi, pi].

    Keeps a per-feature running absolute maximum (floored at a small
    constant) that never decreases over a run.
    """

    def __init__(self, n_features: int, running_abs_max=None):
        if running_abs_max is None:
            self.running_abs_max = np.full(n_features, NORM_FLOOR)
        else:
            self.running_abs_max = np.maximum(np.asarray(running_abs_max, dtype=float), NORM_FLOOR)
            if self.running_abs_max.shape != (n_features,):
                raise ContractError("running_abs_max length must equal n_features")

    @property
    def n_features(self) -> int:
        return len(self.running_abs_max)

    def observe(self, features: np.ndarray) -> None:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.n_features:
            raise ContractError("feature count mismatch in normalizer")
        absmax = np.abs(features) if features.ndim == 1 else np.abs(features).max(axis=0)
        self.running_abs_max = np.maximum(self.running_abs_max, absmax)

    def rescale(self, features: np.ndarray) -> np.ndarray:
        """Scale already-observed features to angles in [-pi, pi]."""
        return np.asarray(features, dtype=float) * (np.pi / self.running_abs_max)

    def normalize(self, features: np.ndarray) -> np.ndarray:
        self.observe(features)
        return self.rescale(features)

    def copy(self) -> "FeatureNormalizer":
        return FeatureNormalizer(self.n_features, self.running_abs_max.copy())

    def merge(self, other: "FeatureNormalizer") -> None:
        self.running_abs_max = np.maximum(self.running_abs_max, other.running_abs_max)


def encode(features: np.ndarray, normalizer: FeatureNormalizer) -> qsim.Statevector:
    """Angle-encode one feature vector: RX(normalized feature) per qubit."""
    features = np.asarray(features, dtype=float)
    if features.shape != (normalizer.n_features,):
        raise ContractError("encode expects one feature per qubit")
    angles = normalizer.normalize(features)
    state = qsim.init_zero(len(angles))
    for i, angle in enumerate(angles):
        state = qsim.apply_gate(state, qsim.Gate("RX", (float(angle),), i))
    return state


def encoded_rows(angles: np.ndarray) -> np.ndarray:
    """Product states for a batch of RX-encoding angle rows, shape (T, 2**n).

    RX(a)|0> = [cos(a/2), -i sin(a/2)]; the full register state is the
    tensor product over qubits with qubit 0 as the most significant factor.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    t = angles.shape[0]
    rows = np.ones((t, 1), dtype=complex)
    for q in range(angles.shape[1]):
        half = angles[:, q] / 2
        factor = np.stack([np.cos(half), -1j * np.sin(half)], axis=1)
        rows = (rows[:, :, None] * factor[:, None, :]).reshape(t, -1)
    return rows


def build_ansatz(spec: CircuitSpec, params: PolicyParams) -> list[qsim.Gate]:
    """Gate list of the trainable block.

    Layered: per layer, RY then RZ on each qubit (parameters consumed in
    layer-major, qubit-major order), then the entangling cascade
    CNOT(control=i, target=(i+l) mod n) for i = 0..n-1 in layer l (1-based),
    skipping self-loops. single_u3: one U3 on qubit 0, no entanglers.
    """
    theta = params.theta
    if len(theta) != spec.n_params:
        raise ContractError(
            f"{spec.architecture} spec needs {spec.n_params} parameters, got {len(theta)}"
        )
    if spec.architecture == "single_u3":
        return [qsim.Gate("U3", (float(theta[0]), float(theta[1]), float(theta[2])), 0)]
    gates: list[qsim.Gate] = []
    n = spec.n_qubits
    idx = 0
    for layer in range(1, spec.n_layers + 1):
        for q in range(n):
            gates.append(qsim.Gate("RY", (float(theta[idx]),), q))
            gates.append(qsim.Gate("RZ", (float(theta[idx + 1]),), q))
            idx += 2
        for q in range(n):
            tgt = (q + layer) % n
            if tgt != q:
                gates.append(qsim.Gate("CNOT", (), tgt, q))
    return gates


def _measured_qubits(spec: CircuitSpec) -> range:
    return range(spec.n_actions if spec.architecture == "layered" else 1)


def _z_values_rows(rows: np.ndarray, spec: CircuitSpec) -> np.ndarray:
    """<sigma_z> per measured qubit for row-batched states, shape (T, |A|)."""
    n = spec.n_qubits
    probs = (np.abs(rows) ** 2).reshape(rows.shape[0], *([2] * n))
    zs = []
    for q in _measured_qubits(spec):
        other = tuple(i for i in range(1, n + 1) if i != 1 + q)
        marg = probs.sum(axis=other) if other else probs
        zs.append(marg[:, 0] - marg[:, 1])
    z = np.stack(zs, axis=1)
    if spec.architecture == "single_u3":
        return np.concatenate([z, -z], axis=1)
    return z


def _prepare_input(spec, x, normalizer):
    """Resolve the policy input to a Statevector ready for the ansatz."""
    if spec.encoding == "angle_rx":
        if normalizer is None:
            raise ContractError("angle_rx encoding requires a FeatureNormalizer")
        return encode(np.asarray(x, dtype=float), normalizer)
    if not isinstance(x, qsim.Statevector):
        raise ContractError("encoding 'none' expects a Statevector input")
    if x.n_qubits != spec.n_qubits:
        raise ContractError("input state qubit count does not match the circuit")
    return x


def preferences(
    spec: CircuitSpec,
    params: PolicyParams,
    x,
    *,
    normalizer: FeatureNormalizer | None = None,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-action preferences <a_i>: Z expectations of the measured qubits.

    shots = 0 gives exact expectations; shots > 0 draws finite-shot
    estimates (one Z estimate per measured qubit; the single_u3 pair is one
    measurement with its sign flipped).
    """
    state = _prepare_input(spec, x, normalizer)
    out = qsim.apply_circuit(state, build_ansatz(spec, params))
    if shots:
        if rng is None:
            raise ContractError("shot mode needs an rng")
        vals = np.array([qsim.sample_z(out, q, shots, rng) for q in _measured_qubits(spec)])
    else:
        vals = np.array([qsim.expectation_z(out, q) for q in _measured_qubits(spec)])
    if spec.architecture == "single_u3":
        return np.array([vals[0], -vals[0]])
    return vals


def softmax_policy(prefs: np.ndarray, beta: float) -> np.ndarray:
    """Action probabilities exp(beta * pref) / sum, computed in log-space."""
    z = beta * np.asarray(prefs, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _all_action_grads(spec, params, x, normalizer, shots, rng) -> np.ndarray:
    """Parameter-shift gradients of every action preference, shape (k, |A|)."""
    grads = np.empty((spec.n_params, spec.n_actions))
    for j in range(spec.n_params):
        shifted = params.theta.copy()
        shifted[j] += np.pi / 2
        plus = preferences(spec, PolicyParams(shifted, params.beta), x,
                           normalizer=normalizer, shots=shots, rng=rng)
        shifted[j] -= np.pi
        minus = preferences(spec, PolicyParams(shifted, params.beta), x,
                            normalizer=normalizer, shots=shots, rng=rng)
        grads[j] = 0.5 * (plus - minus)
    return grads


def grad_preference(
    spec: CircuitSpec,
    params: PolicyParams,
    x,
    action: int,
    *,
    normalizer: FeatureNormalizer | None = None,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """d<a>/d(theta) via the parameter-shift rule, length k."""
    if not 0 <= action < spec.n_actions:
        raise ContractError(f"action {action} out of range")
    return _all_action_grads(spec, params, x, normalizer, shots, rng)[:, action]


def grad_log_policy(
    spec: CircuitSpec,
    params: PolicyParams,
    x,
    action: int,
    *,
    normalizer: FeatureNormalizer | None = None,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Gradient of log pi(action | x) over (theta, beta), length k + 1.

    theta block: beta * (g_a - sum_b pi_b g_b); beta entry (analytic):
    <a> - sum_b pi_b <b>.
    """
    if not 0 <= action < spec.n_actions:
        raise ContractError(f"action {action} out of range")
    prefs = preferences(spec, params, x, normalizer=normalizer, shots=shots, rng=rng)
    probs = softmax_policy(prefs, params.beta)
    grads = _all_action_grads(spec, params, x, normalizer, shots, rng)
    gtheta = params.beta * (grads[:, action] - grads @ probs)
    gbeta = prefs[action] - prefs @ probs
    return np.append(gtheta, gbeta)


class QuantumPolicy:
    """Trainable policy bundling circuit spec, parameters, and normalizer.

    Exact mode (shots = 0) is the training default and has a fast batched
    path: the ansatz is a fixed unitary per parameter vector, so batches of
    encoded states are pushed through cached 2**n x 2**n operators.
    """

    kind = "quantum"

    def __init__(self, spec: CircuitSpec, params: PolicyParams,
                 normalizer: FeatureNormalizer | None = None, shots: int = 0):
        if spec.encoding == "angle_rx" and normalizer is None:
            normalizer = FeatureNormalizer(spec.n_qubits)
        self.spec = spec
        self.params = params
        self.normalizer = normalizer
        self.shots = shots
        self._rowop_theta: np.ndarray | None = None
        self._rowop: np.ndarray | None = None

    # -- trainable vector ---------------------------------------------------
    @property
    def n_trainable(self) -> int:
        return self.spec.n_params + 1

    def get_vector(self) -> np.ndarray:
        return self.params.vector()

    def set_vector(self, vec: np.ndarray) -> None:
        self.params = PolicyParams.from_vector(vec)
        self._rowop = None

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def parameter_count(self) -> int:
        return self.n_trainable

    # -- evaluation ---------------------------------------------------------
    def _row_operator(self, theta: np.ndarray) -> np.ndarray:
        gates = build_ansatz(self.spec, PolicyParams(theta, self.params.beta))
        return qsim.circuit_row_operator(gates, self.spec.n_qubits)

    def _cached_row_operator(self) -> np.ndarray:
        if self._rowop is None or not np.array_equal(self._rowop_theta, self.params.theta):
            self._rowop = self._row_operator(self.params.theta)
            self._rowop_theta = self.params.theta.copy()
        return self._rowop

    def _obs_features(self, obs) -> np.ndarray:
        return np.asarray(obs.features if hasattr(obs, "features") else obs, dtype=float)

    def _obs_state(self, obs) -> qsim.Statevector:
        state = obs.quantum_state if hasattr(obs, "quantum_state") else obs
        if not isinstance(state, qsim.Statevector):
            raise ContractError("policy with encoding 'none' needs a quantum state observation")
        return state

    def _encode_batch(self, observations) -> np.ndarray:
        """Row-stacked input states, shape (T, 2**n). Updates the normalizer."""
        if self.spec.encoding == "none":
            return np.stack([self._obs_state(o).amplitudes for o in observations])
        feats = np.stack([self._obs_features(o) for o in observations])
        self.normalizer.observe(feats)
        return encoded_rows(feats * (np.pi / self.normalizer.running_abs_max))

    def _prefs_rows(self, enc: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return _z_values_rows(enc @ self._row_operator(theta), self.spec)

    def preferences_for(self, obs, rng: np.random.Generator | None = None) -> np.ndarray:
        x = self._obs_features(obs) if self.spec.encoding == "angle_rx" else self._obs_state(obs)
        if self.shots:
            return preferences(self.spec, self.params, x,
                               normalizer=self.normalizer, shots=self.shots, rng=rng)
        # exact fast path through the cached ansatz operator
        enc = self._encode_batch([obs])
        return _z_values_rows(enc @ self._cached_row_operator(), self.spec)[0]

    def probabilities(self, obs, rng: np.random.Generator | None = None) -> np.ndarray:
        return softmax_policy(self.preferences_for(obs, rng), self.params.beta)

    def grad_log(self, obs, action: int, rng: np.random.Generator | None = None) -> np.ndarray:
        x = self._obs_features(obs) if self.spec.encoding == "angle_rx" else self._obs_state(obs)
        return grad_log_policy(self.spec, self.params, x, action,
                               normalizer=self.normalizer, shots=self.shots, rng=rng)

    def grad_log_batch(self, observations, actions, rng: np.random.Generator | None = None) -> np.ndarray:
        """Log-policy gradients for T (observation, action) pairs: (T, k+1).

        Exact mode evaluates each of the 2k shifted circuits once for the
        whole batch. Observations are assumed already seen by the
        normalizer (true after a rollout); unseen features are folded in
        before scaling.
        """
        actions = np.asarray(actions, dtype=int)
        if self.shots:
            return np.stack([self.grad_log(o, int(a), rng) for o, a in zip(observations, actions)])
        enc = self._encode_batch(observations)
        t = enc.shape[0]
        k = self.spec.n_params
        prefs = self._prefs_rows(enc, self.params.theta)
        probs = softmax_policy(prefs, self.params.beta)
        grads = np.empty((t, k, self.spec.n_actions))
        for j in range(k):
            shifted = self.params.theta.copy()
            shifted[j] += np.pi / 2
            plus = self._prefs_rows(enc, shifted)
            shifted[j] -= np.pi
            minus = self._prefs_rows(enc, shifted)
            grads[:, j, :] = 0.5 * (plus - minus)
        rows = np.arange(t)
        g_taken = grads[rows, :, actions]
        g_mean = np.einsum("tka,ta->tk", grads, probs)
        gtheta = self.params.beta * (g_taken - g_mean)
        gbeta = prefs[rows, actions] - np.einsum("ta,ta->t", prefs, probs)
        return np.concatenate([gtheta, gbeta[:, None]], axis=1)

    # -- persistence ----------------------------------------------------------
    def to_checkpoint(self) -> dict:
        return {
            "theta": self.params.theta.tolist(),
            "beta": self.params.beta,
            "norm_abs_max": (self.normalizer.running_abs_max.tolist()
                             if self.normalizer is not None else []),
            "spec": self.spec.to_dict(),
        }

    @classmethod
    def from_checkpoint(cls, data: dict, shots: int = 0) -> "QuantumPolicy":
        spec = CircuitSpec.from_dict(data["spec"])
        params = PolicyParams(np.asarray(data["theta"], dtype=float), float(data["beta"]))
        normalizer = None
        if spec.encoding == "angle_rx":
            stored = data.get("norm_abs_max") or None
            normalizer = FeatureNormalizer(spec.n_qubits, stored)
        return cls(spec, params, normalizer, shots=shots)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(), fh, indent=1)

    @classmethod
    def load(cls, path, shots: int = 0) -> "QuantumPolicy":
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh), shots=shots)
