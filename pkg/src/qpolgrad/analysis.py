"""Trainability diagnostics and sample-complexity calculators.

The empirical Fisher information matrix of a policy is the average outer
product of its log-policy gradients over visited state-action pairs; a
spectrum concentrated at zero signals a flat (barren) optimization
landscape. Eigenvalues come from a cyclic Jacobi sweep, which is provably
convergent for symmetric matrices and comfortably handles the largest
policy here (768 parameters).

The closed-form calculators bound (a) how many sampled trajectories make
the policy-gradient estimate epsilon-accurate with probability 1 - delta,
and (b) how many circuit repetitions the shot-based gradient needs; both
grow only logarithmically in the parameter count. `hoeffding_validate`
checks bound (b) empirically against exact expectations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .errors import ContractError, NumericalError
from .vqpolicy import CircuitSpec, PolicyParams, QuantumPolicy, preferences


@dataclass
class FisherMatrix:
    """k x k symmetric PSD information matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ContractError("Fisher matrix must be square")
        if not np.allclose(self.matrix, self.matrix.T, atol=1e-10):
            raise ContractError("Fisher matrix must be symmetric")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray  # sorted descending
    trace: float
    bin_edges: np.ndarray  # leading underflow bin, then logarithmic bins
    densities: np.ndarray  # histogram densities; integrate to 1


def fisher_matrix(policy, states, actions, include_beta: bool = True) -> FisherMatrix:
    """Empirical Fisher matrix (1/T) sum_t g_t g_t^T from (state, action) pairs.

    `include_beta=False` restricts a quantum policy's gradient to the circuit
    angles; classical policies always use their full weight gradient.
    """
    if len(states) == 0 or len(states) != len(actions):
        raise ContractError("fisher_matrix needs equal-length, non-empty state/action lists")
    g = policy.grad_log_batch(states, np.asarray(actions, dtype=int))
    if not include_beta and policy.kind == "quantum":
        g = g[:, :-1]
    f = g.T @ g / g.shape[0]
    return FisherMatrix((f + f.T) / 2)


def jacobi_eigenvalues(matrix: np.ndarray, tol: float = 1e-10,
                       max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps annihilate each off-diagonal entry in turn until the
    off-diagonal Frobenius norm drops below `tol`. Returns eigenvalues
    sorted in descending order.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError("jacobi_eigenvalues needs a square matrix")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ContractError("jacobi_eigenvalues needs a symmetric matrix")
    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy()
    sqrt = math.sqrt
    off_diag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off2 = float(np.sum(a[off_diag] ** 2))
        if sqrt(off2) < tol:
            return np.sort(np.diag(a))[::-1].copy()
        # annihilating entries below this threshold cannot move the sweep
        # forward meaningfully; skipping them is the classic speedup
        skip = sqrt(off2) / (n * n) * 1e-2
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                app, aqq = a[p, p], a[q, q]
                diff = aqq - app
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    phi = diff / (2.0 * apq)
                    t = 1.0 / (abs(phi) + sqrt(phi * phi + 1.0))
                    if phi < 0.0:
                        t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                new_p = col_p - s * (col_q + tau * col_p)
                new_q = col_q + s * (col_p - tau * col_q)
                a[:, p] = new_p
                a[p, :] = new_p
                a[:, q] = new_q
                a[q, :] = new_q
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
    raise NumericalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def spectrum(f: FisherMatrix, n_bins: int = 50) -> SpectrumReport:
    """Eigenvalues, trace, and a log-binned eigenvalue density.

    The first bin is an explicit underflow bin [0, 1e-12) collecting
    (numerically) zero eigenvalues; the remaining `n_bins` bins are
    logarithmic up to the largest eigenvalue.
    """
    eigenvalues = jacobi_eigenvalues(f.matrix)
    top = max(float(eigenvalues[0]) if eigenvalues.size else 0.0, 1e-11)
    edges = np.concatenate([[0.0], np.geomspace(1e-12, top, n_bins + 1)])
    clipped = np.clip(eigenvalues, 0.0, top)
    counts, _ = np.histogram(clipped, bins=edges)
    widths = np.diff(edges)
    densities = counts / counts.sum() / widths
    return SpectrumReport(eigenvalues, float(np.trace(f.matrix)), edges, densities)


# ---------------------------------------------------------------------------
# sample-complexity bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundInputs:
    """Quantities entering the gradient-estimation bounds."""

    beta: float
    r_max: float
    horizon: int
    gamma: float
    epsilon: float
    delta: float
    k: int
    n_actions: int = 2

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ContractError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ContractError("delta must be in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ContractError("gamma must be in (0, 1]")
        if self.horizon < 1 or self.k < 1 or self.n_actions < 1:
            raise ContractError("horizon, k, and n_actions must be >= 1")


def lemma1_samples(b: BoundInputs) -> tuple[float, float]:
    """(trajectory bound N, sample bound N*T) for an epsilon-accurate gradient.

    N = 8 beta^2 R_max^2 T^2 / (eps^2 (gamma-1)^4) * ln(2k/delta); each
    trajectory contributes T visited states.
    """
    if b.gamma == 1.0:
        raise ContractError("the trajectory bound diverges at gamma = 1")
    n = (8.0 * b.beta**2 * b.r_max**2 * b.horizon**2
         / (b.epsilon**2 * (b.gamma - 1.0) ** 4) * math.log(2.0 * b.k / b.delta))
    return n, n * b.horizon


def lemma2_shots(b: BoundInputs, n_samples: float) -> tuple[float, float]:
    """(shots per observable-gradient, total shots over the whole estimator).

    One parameter's preference gradient needs n = (4/eps^2) ln(2k/delta)
    shots (two shifted evaluations of n/2 each); the full estimator repeats
    this for |A| observables at each of `n_samples` visited states.
    """
    per_observable = 4.0 / b.epsilon**2 * math.log(2.0 * b.k / b.delta)
    return per_observable, b.n_actions * n_samples * per_observable


# ---------------------------------------------------------------------------
# Monte-Carlo validation of the shot bound
# ---------------------------------------------------------------------------

@dataclass
class HoeffdingReport:
    trials: int
    failures: int
    failure_rate: float
    epsilon: float
    delta: float
    shots_per_observable: int
    max_deviation: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "failures": self.failures,
            "failure_rate": self.failure_rate,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "shots_per_observable": self.shots_per_observable,
            "max_deviation": self.max_deviation,
            "passed": self.passed,
        }


def _default_probe():
    """Fixed small configuration: the state-preparation policy three
    pulse-free steps into an episode, with frozen circuit angles."""
    spec = CircuitSpec(1, 1, 2, "single_u3", "none")
    params = PolicyParams(np.array([0.8, -0.4, 0.3]), 1.0)
    state = qsim.init_zero(1)
    h = qsim.TwoLevelHamiltonian(0.0, 1.0)
    for _ in range(3):
        state = qsim.evolve_hamiltonian(state, h, np.pi / 20)
    return spec, params, state


def hoeffding_validate(b: BoundInputs, trials: int, rng: np.random.Generator,
                       spec: CircuitSpec | None = None,
                       params: PolicyParams | None = None,
                       state: qsim.Statevector | None = None,
                       action: int = 0) -> HoeffdingReport:
    """Estimate the preference gradient with Lemma-prescribed shots, repeatedly.

    The reference is the exact parameter-shift gradient (the true mean of
    the shot estimator). A trial fails when any coordinate of the
    shot-based estimate deviates from the reference by more than epsilon;
    the bound promises a failure rate at most delta.
    """
    if spec is None or params is None or state is None:
        spec, params, state = _default_probe()
    per_observable, _ = lemma2_shots(b, 1.0)
    shots_total = int(math.ceil(per_observable))
    shots_side = max(1, int(math.ceil(shots_total / 2)))
    reference = np.empty(spec.n_params)
    for j in range(spec.n_params):
        shifted = params.theta.copy()
        shifted[j] += np.pi / 2
        plus = preferences(spec, PolicyParams(shifted, params.beta), state)[action]
        shifted[j] -= np.pi
        minus = preferences(spec, PolicyParams(shifted, params.beta), state)[action]
        reference[j] = 0.5 * (plus - minus)

    failures = 0
    max_dev = 0.0
    for _ in range(trials):
        estimate = np.empty(spec.n_params)
        for j in range(spec.n_params):
            shifted = params.theta.copy()
            shifted[j] += np.pi / 2
            plus = preferences(spec, PolicyParams(shifted, params.beta), state,
                               shots=shots_side, rng=rng)[action]
            shifted[j] -= np.pi
            minus = preferences(spec, PolicyParams(shifted, params.beta), state,
                                shots=shots_side, rng=rng)[action]
            estimate[j] = 0.5 * (plus - minus)
        dev = float(np.max(np.abs(estimate - reference)))
        max_dev = max(max_dev, dev)
        if dev > b.epsilon:
            failures += 1
    rate = failures / trials if trials else 0.0
    return HoeffdingReport(trials, failures, rate, b.epsilon, b.delta,
                           shots_total, max_dev, rate <= b.delta)


def bernoulli_hoeffding_failure_rate(p: float, epsilon: float, delta: float,
                                     trials: int, rng: np.random.Generator) -> float:
    """Textbook sanity instance: estimate a coin's bias with the Hoeffding
    sample size n = ln(2/delta) / (2 eps^2) and report how often the
    estimate misses by more than epsilon."""
    n = int(math.ceil(math.log(2.0 / delta) / (2.0 * epsilon**2)))
    failures = 0
    for _ in range(trials):
        estimate = rng.binomial(n, p) / n
        if abs(estimate - p) > epsilon:
            failures += 1
    return failures / trials if trials else 0.0
