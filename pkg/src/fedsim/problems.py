"""Federated objectives: synthetic quadratics with a controlled spectrum and
regularized logistic regression, with exact and subsampled gradient oracles.

All model points and gradients are dense 1-D float64 numpy arrays of length d.
Problems are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class ProblemError(ValueError):
    """Invalid problem parameters or client ids."""


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ProblemError(f"{what} contains non-finite entries")


# --------------------------------------------------------------------------
# client objectives
# --------------------------------------------------------------------------

class QuadraticClient:
    """Local least-squares loss  (1/n) * sum_j (a_j . x - b_j)^2  + (l2/2)||x||^2."""

    family = "quad"

    def __init__(self, features: np.ndarray, responses: np.ndarray, l2: float = 0.0):
        self.A = np.ascontiguousarray(features, dtype=np.float64)
        self.b = np.ascontiguousarray(responses, dtype=np.float64)
        if self.A.ndim != 2 or self.b.ndim != 1 or self.A.shape[0] != self.b.shape[0]:
            raise ProblemError("feature/response shape mismatch")
        if self.A.shape[0] < 1:
            raise ProblemError("client needs at least one sample")
        self.l2 = float(l2)

    @property
    def n_samples(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def value(self, x: np.ndarray) -> float:
        r = self.A @ x - self.b
        v = float(r @ r) / self.n_samples
        if self.l2:
            v += 0.5 * self.l2 * float(x @ x)
        return v

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = (2.0 / self.n_samples) * (self.A.T @ (self.A @ x - self.b))
        if self.l2:
            g = g + self.l2 * x
        return g

    def subset_gradient(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Mean of the component gradients over `idx`, regularizer added exactly."""
        A = self.A[idx]
        g = (2.0 / len(idx)) * (A.T @ (A @ x - self.b[idx]))
        if self.l2:
            g = g + self.l2 * x
        return g

    def data_hessian(self) -> np.ndarray:
        """Hessian of the data term only (excludes the l2 part)."""
        return (2.0 / self.n_samples) * (self.A.T @ self.A)


class LogRegClient:
    """Local loss  (1/n) * sum_j log(1 + exp(-y_j a_j . x))  + (l2/2)||x||^2."""

    family = "logreg"

    def __init__(self, features: np.ndarray, labels: np.ndarray, l2: float = 0.0):
        self.A = np.ascontiguousarray(features, dtype=np.float64)
        self.y = np.ascontiguousarray(labels, dtype=np.float64)
        if self.A.ndim != 2 or self.y.ndim != 1 or self.A.shape[0] != self.y.shape[0]:
            raise ProblemError("feature/label shape mismatch")
        if not np.all(np.abs(self.y) == 1.0):
            raise ProblemError("labels must be +-1")
        self.l2 = float(l2)

    @property
    def n_samples(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def value(self, x: np.ndarray) -> float:
        m = -self.y * (self.A @ x)
        # log(1+exp(m)) computed stably for large |m|
        v = float(np.mean(np.logaddexp(0.0, m)))
        if self.l2:
            v += 0.5 * self.l2 * float(x @ x)
        return v

    def gradient(self, x: np.ndarray) -> np.ndarray:
        m = -self.y * (self.A @ x)
        s = 1.0 / (1.0 + np.exp(-m))       # sigmoid(m)
        g = self.A.T @ (-self.y * s) / self.n_samples
        if self.l2:
            g = g + self.l2 * x
        return g

    def subset_gradient(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        A, y = self.A[idx], self.y[idx]
        m = -y * (A @ x)
        s = 1.0 / (1.0 + np.exp(-m))
        g = A.T @ (-y * s) / len(idx)
        if self.l2:
            g = g + self.l2 * x
        return g


ClientObjective = Union[QuadraticClient, LogRegClient]


# --------------------------------------------------------------------------
# gradient oracle
# --------------------------------------------------------------------------

FULL = "full"
NICE = "nice"


@dataclass(frozen=True)
class GradientOracle:
    """Full gradients, or SGD-NICE subsampling of a fixed fraction tau."""

    mode: str = FULL
    tau: float = 1.0

    def __post_init__(self):
        if self.mode not in (FULL, NICE):
            raise ProblemError(f"unknown oracle mode {self.mode!r}")
        if self.mode == NICE and not (0.0 < self.tau <= 1.0):
            raise ProblemError("nice fraction must lie in (0, 1]")

    def subset_size(self, n: int) -> int:
        if self.mode == FULL:
            return n
        return min(n, max(1, math.ceil(self.tau * n)))


FULL_ORACLE = GradientOracle(FULL)


# --------------------------------------------------------------------------
# problem specs (serializable; data regenerated from the seed)
# --------------------------------------------------------------------------

IID = "iid"
NON_IID = "noniid"


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative problem description; data matrices are rebuilt from the seed."""

    family: str = "quad"            # "quad" | "logreg"
    d: int = 20
    clients: int = 10
    samples: int = 50
    split: str = NON_IID
    seed: Optional[int] = None      # None -> inherit the run seed
    mu: float = 1.0                 # quad only
    L: float = 2.0                  # quad only
    l2: float = 0.0
    noise: float = 0.0              # logreg label flip probability
    weights: str = "uniform"        # "uniform" | "by-dataset-size"

    def to_dict(self) -> dict:
        return {
            "family": self.family, "d": self.d, "clients": self.clients,
            "samples": self.samples, "split": self.split, "seed": self.seed,
            "mu": self.mu, "L": self.L, "l2": self.l2, "noise": self.noise,
            "weights": self.weights,
        }

    @staticmethod
    def from_dict(data: dict) -> "ProblemSpec":
        known = {f: data[f] for f in ProblemSpec.__dataclass_fields__ if f in data}
        extra = set(data) - set(ProblemSpec.__dataclass_fields__)
        if extra:
            raise ProblemError(f"unknown problem fields: {sorted(extra)}")
        return ProblemSpec(**known)

    def build(self, default_seed: int = 0) -> "FederatedProblem":
        seed = self.seed if self.seed is not None else default_seed
        if self.family == "quad":
            return generate_quadratic_problem(
                d=self.d, mu=self.mu, L=self.L, clients=self.clients,
                samples_per_client=self.samples, split=self.split, seed=seed,
                weights=self.weights)
        if self.family == "logreg":
            return generate_logreg_problem(
                d=self.d, clients=self.clients, samples_per_client=self.samples,
                l2=self.l2, label_noise=self.noise, split=self.split, seed=seed,
                weights=self.weights)
        raise ProblemError(f"unknown problem family {self.family!r}")


def parse_problem_string(text: str) -> ProblemSpec:
    """Parse the CLI grammar, e.g. ``quad:d=20,mu=1,L=2,samples=50,split=noniid``."""
    head, _, rest = text.partition(":")
    if head not in ("quad", "logreg"):
        raise ProblemError(f"unknown problem family {head!r}")
    kwargs: dict = {"family": head}
    if rest:
        for part in rest.split(","):
            if not part:
                continue
            key, _, val = part.partition("=")
            if not val:
                raise ProblemError(f"malformed problem option {part!r}")
            key = {"lambda": "l2"}.get(key, key)
            if key in ("d", "clients", "samples", "seed"):
                kwargs[key] = int(val)
            elif key in ("mu", "L", "l2", "noise"):
                kwargs[key] = float(val)
            elif key in ("split", "weights"):
                kwargs[key] = val
            else:
                raise ProblemError(f"unknown problem option {key!r}")
    return ProblemSpec(**kwargs)


def format_problem_string(spec: ProblemSpec) -> str:
    """Inverse of :func:`parse_problem_string` (defaults omitted)."""
    default = ProblemSpec(family=spec.family)
    parts = []
    for key in ("d", "clients", "samples", "mu", "L", "l2", "noise", "split",
                "seed", "weights"):
        val = getattr(spec, key)
        if val != getattr(default, key) and val is not None:
            out = key if key != "l2" else "lambda"
            if isinstance(val, float) and val == int(val):
                val = int(val)
            parts.append(f"{out}={val}")
    return spec.family + (":" + ",".join(parts) if parts else "")


# --------------------------------------------------------------------------
# the federated problem
# --------------------------------------------------------------------------

@dataclass
class FederatedProblem:
    clients: Sequence[ClientObjective]
    weights: np.ndarray
    dim: int
    l2: float
    smoothness: float
    strong_convexity: Optional[float]
    family: str
    spec: Optional[ProblemSpec] = None

    def __post_init__(self):
        if len(self.clients) < 1:
            raise ProblemError("need at least one client")
        if any(c.dim != self.dim for c in self.clients):
            raise ProblemError("clients disagree on dimension")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.clients),) or np.any(w < 0):
            raise ProblemError("weights must be nonnegative, one per client")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ProblemError("weights must sum to 1")
        self.weights = w

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    def _client(self, client_id: int) -> ClientObjective:
        if not 0 <= client_id < self.num_clients:
            raise ProblemError(f"unknown client id {client_id}")
        return self.clients[client_id]

    def local_value(self, client_id: int, x: np.ndarray) -> float:
        _check_finite(x, "x")
        return self._client(client_id).value(x)

    def local_gradient(self, client_id: int, x: np.ndarray,
                       oracle: GradientOracle = FULL_ORACLE,
                       rng: Optional[np.random.Generator] = None,
                       ) -> tuple[np.ndarray, int]:
        """Local (possibly subsampled) gradient and the number of component
        gradient evaluations it consumed."""
        _check_finite(x, "x")
        client = self._client(client_id)
        n = client.n_samples
        if oracle.mode == FULL:
            return client.gradient(x), n
        if rng is None:
            raise ProblemError("nice oracle requires an rng handle")
        m = oracle.subset_size(n)
        idx = np.sort(rng.choice(n, size=m, replace=False))
        return client.subset_gradient(x, idx), m

    def local_gradient_pair(self, client_id: int, x1: np.ndarray, x2: np.ndarray,
                            oracle: GradientOracle = FULL_ORACLE,
                            rng: Optional[np.random.Generator] = None,
                            ) -> tuple[np.ndarray, np.ndarray, int]:
        """Gradients at two points over one shared sample subset (for
        compressed-difference estimators); returns (g1, g2, oracle_calls)."""
        client = self._client(client_id)
        n = client.n_samples
        if oracle.mode == FULL:
            return client.gradient(x1), client.gradient(x2), 2 * n
        if rng is None:
            raise ProblemError("nice oracle requires an rng handle")
        m = oracle.subset_size(n)
        idx = np.sort(rng.choice(n, size=m, replace=False))
        return client.subset_gradient(x1, idx), client.subset_gradient(x2, idx), 2 * m

    def global_value(self, x: np.ndarray) -> float:
        return float(sum(w * c.value(x) for w, c in zip(self.weights, self.clients)))

    def global_gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for w, c in zip(self.weights, self.clients):
            g += w * c.gradient(x)
        return g

    def global_hessian(self) -> np.ndarray:
        """Exact global Hessian (quadratic family only)."""
        if self.family != "quad":
            raise ProblemError("hessian available for the quadratic family only")
        H = np.zeros((self.dim, self.dim))
        for w, c in zip(self.weights, self.clients):
            H += w * c.data_hessian()
        if self.l2:
            H += self.l2 * np.eye(self.dim)
        return H

    def solve_quadratic(self) -> tuple[np.ndarray, float]:
        """Closed-form minimizer and minimum value (quadratic family only)."""
        H = self.global_hessian()
        rhs = np.zeros(self.dim)
        for w, c in zip(self.weights, self.clients):
            rhs += w * (2.0 / c.n_samples) * (c.A.T @ c.b)
        x_star = np.linalg.solve(H, rhs)
        return x_star, self.global_value(x_star)


def _client_weights(kind: str, counts: Sequence[int]) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if kind == "uniform":
        return np.full(len(counts), 1.0 / len(counts))
    if kind == "by-dataset-size":
        return counts / counts.sum()
    raise ProblemError(f"unknown weight scheme {kind!r}")


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def generate_quadratic_problem(d: int, mu: float, L: float, clients: int,
                               samples_per_client: int, split: str = NON_IID,
                               seed: int = 0, weights: str = "uniform",
                               ) -> FederatedProblem:
    """Uniform-[0,1] data rescaled by SVD so the global Hessian spectrum is
    exactly [mu, L]. IID split shares one dataset across all clients."""
    if d < 2:
        raise ProblemError("d must be >= 2 (cannot realize mu < L with one mode)")
    if not (np.isfinite(mu) and np.isfinite(L)) or mu <= 0 or L < mu:
        raise ProblemError("need L >= mu > 0 and finite")
    if clients < 1 or samples_per_client < 1:
        raise ProblemError("clients and samples_per_client must be positive")
    if split not in (IID, NON_IID):
        raise ProblemError(f"unknown split {split!r}")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF5]))
    n = samples_per_client
    if split == IID:
        if n < d:
            raise ProblemError("iid split needs samples_per_client >= d for full rank")
        A = rng.uniform(0.0, 1.0, size=(n, d))
        b = rng.uniform(0.0, 1.0, size=n)
        # global Hessian is (2/n) A^T A regardless of weights
        A = _remap_spectrum(A * math.sqrt(2.0 / n), mu, L) / math.sqrt(2.0 / n)
        client = QuadraticClient(A, b)
        objs = [client] * clients
        w = _client_weights(weights, [n] * clients)
    else:
        if clients * n < d:
            raise ProblemError("non-iid split needs clients*samples_per_client >= d")
        blocks = [rng.uniform(0.0, 1.0, size=(n, d)) for _ in range(clients)]
        bs = [rng.uniform(0.0, 1.0, size=n) for _ in range(clients)]
        w = _client_weights(weights, [n] * clients)
        scales = [math.sqrt(2.0 * w[i] / n) for i in range(clients)]
        stacked = np.vstack([s * B for s, B in zip(scales, blocks)])
        stacked = _remap_spectrum(stacked, mu, L)
        objs = []
        for i in range(clients):
            block = stacked[i * n:(i + 1) * n] / scales[i]
            objs.append(QuadraticClient(block, bs[i]))

    return FederatedProblem(
        clients=objs, weights=w, dim=d, l2=0.0, smoothness=L,
        strong_convexity=mu, family="quad",
        spec=ProblemSpec(family="quad", d=d, clients=clients, samples=n,
                         split=split, seed=seed, mu=mu, L=L, weights=weights))


def _remap_spectrum(S: np.ndarray, mu: float, L: float) -> np.ndarray:
    """Affinely remap the squared singular values of S onto [mu, L], keeping
    the singular vectors; S^T S then has eigenvalues spanning exactly [mu, L]."""
    U, sig, Vt = np.linalg.svd(S, full_matrices=False)
    lam = sig ** 2
    if len(lam) < S.shape[1]:
        raise ProblemError("rank-deficient data matrix; add samples")
    lo, hi = float(lam.min()), float(lam.max())
    if hi - lo <= 1e-12 * hi:
        if mu != L:
            raise ProblemError("degenerate spectrum cannot realize mu < L")
        new_lam = np.full_like(lam, mu)
    else:
        new_lam = mu + (lam - lo) * (L - mu) / (hi - lo)
    return U @ np.diag(np.sqrt(new_lam)) @ Vt


def generate_logreg_problem(d: int, clients: int, samples_per_client: int,
                            l2: float = 0.0, label_noise: float = 0.0,
                            split: str = NON_IID, seed: int = 0,
                            weights: str = "uniform") -> FederatedProblem:
    """Gaussian features, labels sign(a . w_true) flipped with `label_noise`."""
    if d < 1 or clients < 1 or samples_per_client < 1:
        raise ProblemError("d, clients, samples_per_client must be positive")
    if l2 < 0:
        raise ProblemError("l2 coefficient must be >= 0")
    if not 0.0 <= label_noise < 0.5:
        raise ProblemError("label_noise must lie in [0, 0.5)")
    if split not in (IID, NON_IID):
        raise ProblemError(f"unknown split {split!r}")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x16]))
    w_true = rng.normal(size=d)
    n = samples_per_client

    def make_client() -> LogRegClient:
        A = rng.normal(size=(n, d))
        y = np.where(A @ w_true >= 0.0, 1.0, -1.0)
        flips = rng.random(n) < label_noise
        y[flips] *= -1.0
        return LogRegClient(A, y, l2=l2)

    if split == IID:
        shared = make_client()
        objs = [shared] * clients
    else:
        objs = [make_client() for _ in range(clients)]

    wts = _client_weights(weights, [n] * clients)
    op_sq = max(np.linalg.norm(c.A, 2) ** 2 / c.n_samples for c in objs)
    return FederatedProblem(
        clients=objs, weights=wts, dim=d, l2=l2,
        smoothness=l2 + op_sq / 4.0, strong_convexity=l2 if l2 > 0 else None,
        family="logreg",
        spec=ProblemSpec(family="logreg", d=d, clients=clients, samples=n,
                         split=split, seed=seed, l2=l2, noise=label_noise,
                         weights=weights))
