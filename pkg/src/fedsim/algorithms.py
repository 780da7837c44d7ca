"""Pluggable algorithm hooks for the generalized federated averaging loop.

Each algorithm implements the template methods the engine drives every round:
server-state initialization, per-round broadcast, the local gradient rule, the
end-of-round client message, the server direction, and the server-state update.
All hooks are pure functions of their inputs plus explicit rng handles; the
engine owns the per-client persistent state table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .compressors import (FLOAT_BITS, CompressedMessage, CompressorSpec,
                          compress, exact_recovery, variance_bound)
from .problems import FULL_ORACLE, FederatedProblem, GradientOracle


class AlgorithmError(ValueError):
    pass


SHIFT_ZERO = "zero"
SHIFT_FULL_GRAD = "fullgrad"


@dataclass(frozen=True)
class OptimizerSpec:
    """Client/server SGD parameters shared by all algorithms."""

    client_lr: float = 1.0
    server_lr: float = 1.0
    client_momentum: float = 0.0
    server_momentum: float = 0.0
    lr_decay_factor: float = 1.0     # step-decay multiplier
    lr_decay_every: int = 0          # 0 -> constant schedule
    local_steps: int = 1
    local_epochs: Optional[int] = None
    prox_mu: float = 0.0             # fedprox only
    shift_init: str = SHIFT_ZERO
    marina_p: float = 0.5            # probability of a full-sync round
    diana_alpha: float = 0.5

    def __post_init__(self):
        if self.client_lr < 0 or self.server_lr < 0:
            raise AlgorithmError("learning rates must be nonnegative")
        if not 0.0 < self.marina_p <= 1.0:
            raise AlgorithmError("marina_p must lie in (0, 1]")
        if not 0.0 < self.diana_alpha <= 1.0:
            raise AlgorithmError("diana_alpha must lie in (0, 1]")
        if self.prox_mu < 0:
            raise AlgorithmError("prox_mu must be >= 0")
        if self.local_steps < 1:
            raise AlgorithmError("local_steps must be >= 1")
        if self.shift_init not in (SHIFT_ZERO, SHIFT_FULL_GRAD):
            raise AlgorithmError(f"unknown shift_init {self.shift_init!r}")

    def client_lr_at(self, rnd: int) -> float:
        if self.lr_decay_every > 0:
            return self.client_lr * self.lr_decay_factor ** (rnd // self.lr_decay_every)
        return self.client_lr

    def server_lr_at(self, rnd: int) -> float:
        if self.lr_decay_every > 0:
            return self.server_lr * self.lr_decay_factor ** (rnd // self.lr_decay_every)
        return self.server_lr

    def steps_for(self, n_samples: int, oracle: GradientOracle) -> int:
        """Resolve the local step count; epochs convert via the oracle's
        subset size (one epoch = one pass over the local data)."""
        if self.local_epochs is None:
            return self.local_steps
        per_epoch = max(1, round(n_samples / oracle.subset_size(n_samples)))
        return max(1, self.local_epochs * per_epoch)


def client_opt_step(x: np.ndarray, g: np.ndarray, lr: float, beta: float,
                    velocity: Optional[np.ndarray],
                    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """One local SGD(-momentum) step; velocity is reset at every round start."""
    if beta > 0.0:
        velocity = g if velocity is None else beta * velocity + g
        return x - lr * velocity, velocity
    return x - lr * g, None


def server_opt_step(x: np.ndarray, direction: np.ndarray, lr: float, beta: float,
                    velocity: Optional[np.ndarray],
                    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Global step; `direction` is always a descent direction, so we subtract."""
    if beta > 0.0:
        velocity = direction if velocity is None else beta * velocity + direction
        return x - lr * velocity, velocity
    return x - lr * direction, None


@dataclass
class ClientReply:
    client_id: int
    delta: Optional[np.ndarray] = None        # reconstructed model delta
    update: Optional[np.ndarray] = None       # reconstructed state message U_i
    new_client_state: Optional[dict] = None
    bits_up: int = 0
    oracle_calls: int = 0
    realizations: list = field(default_factory=list)


@dataclass
class ClientRoundContext:
    """Everything one client task needs for one round."""

    problem: FederatedProblem
    client_id: int
    x_start: np.ndarray               # broadcast model as received
    x_global: np.ndarray              # true server model (uncompressed)
    broadcast: dict
    client_state: dict
    opt: OptimizerSpec
    compressor: CompressorSpec
    oracle: GradientOracle
    round: int
    rng_oracle: np.random.Generator
    rng_compress: np.random.Generator


class Algorithm:
    """FedAvg behaviour; subclasses override individual hooks."""

    name = "fedavg"

    # -- server side -------------------------------------------------------

    def initialize_server_state(self, problem: FederatedProblem, x0: np.ndarray,
                                opt: OptimizerSpec, compressor: CompressorSpec,
                                rng: np.random.Generator,
                                ) -> tuple[dict, dict[int, dict]]:
        return {}, {i: {} for i in range(problem.num_clients)}

    def client_broadcast(self, server_state: dict, rnd: int,
                         rng: np.random.Generator) -> dict:
        return {}

    def server_gradient(self, replies: list[ClientReply], server_state: dict,
                        weights: np.ndarray, selected: list[int]) -> np.ndarray:
        total = sum(weights[i] for i in selected)
        acc = np.zeros_like(replies[0].delta)
        for r in replies:
            acc += weights[r.client_id] * r.delta
        return -acc / total

    def update_server_state(self, server_state: dict, replies: list[ClientReply],
                            weights: np.ndarray, selected: list[int],
                            direction: np.ndarray, num_clients: int,
                            x_old: np.ndarray) -> None:
        pass

    # -- client side -------------------------------------------------------

    def local_gradient(self, g: np.ndarray, x_local: np.ndarray, ctx:
                       ClientRoundContext) -> np.ndarray:
        return g

    def run_client(self, ctx: ClientRoundContext) -> ClientReply:
        x_end, calls, _ = self._local_steps(ctx)
        reply = ClientReply(ctx.client_id, oracle_calls=calls)
        self._attach_delta(ctx, x_end, reply)
        return reply

    # shared pieces --------------------------------------------------------

    def _local_steps(self, ctx: ClientRoundContext,
                     ) -> tuple[np.ndarray, int, Optional[np.ndarray]]:
        """tau local ClientOpt steps; returns (x_end, oracle_calls, g_first)."""
        opt = ctx.opt
        n = ctx.problem.clients[ctx.client_id].n_samples
        tau = opt.steps_for(n, ctx.oracle)
        lr = opt.client_lr_at(ctx.round)
        x = ctx.x_start.copy()
        velocity = None
        calls = 0
        g_first = None
        for _ in range(tau):
            g_raw, c = ctx.problem.local_gradient(ctx.client_id, x, ctx.oracle,
                                                  ctx.rng_oracle)
            if g_first is None:
                g_first = g_raw
            calls += c
            g = self.local_gradient(g_raw, x, ctx)
            x, velocity = client_opt_step(x, g, lr, opt.client_momentum, velocity)
        return x, calls, g_first

    def _attach_delta(self, ctx: ClientRoundContext, x_end: np.ndarray,
                      reply: ClientReply) -> None:
        msg = compress(ctx.compressor, x_end - ctx.x_start, ctx.rng_compress)
        reply.delta = msg.values
        reply.bits_up += msg.bits
        reply.realizations.append(msg.realization)


class FedProx(Algorithm):
    name = "fedprox"

    def local_gradient(self, g, x_local, ctx):
        if ctx.opt.prox_mu:
            return g + ctx.opt.prox_mu * (x_local - ctx.x_start)
        return g


class Scaffold(Algorithm):
    """Control-variate corrected local steps; shifts travel compressed."""

    name = "scaffold"
    freeze_shifts = False     # test hook: frozen shifts reduce to FedAvg

    def initialize_server_state(self, problem, x0, opt, compressor, rng):
        d = problem.dim
        client_states = {}
        c_global = np.zeros(d)
        for i in range(problem.num_clients):
            if opt.shift_init == SHIFT_FULL_GRAD:
                shift, _ = problem.local_gradient(i, x0)
            else:
                shift = np.zeros(d)
            client_states[i] = {"shift": shift}
            c_global += problem.weights[i] * shift
        return {"c": c_global}, client_states

    def client_broadcast(self, server_state, rnd, rng):
        return {"c": server_state["c"]}

    def local_gradient(self, g, x_local, ctx):
        return g + ctx.broadcast["c"] - ctx.client_state["shift"]

    def run_client(self, ctx):
        x_end, calls, _ = self._local_steps(ctx)
        reply = ClientReply(ctx.client_id, oracle_calls=calls)
        self._attach_delta(ctx, x_end, reply)
        if self.freeze_shifts:
            reply.update = np.zeros_like(x_end)
            return reply
        opt = ctx.opt
        n = ctx.problem.clients[ctx.client_id].n_samples
        tau = opt.steps_for(n, ctx.oracle)
        lr = opt.client_lr_at(ctx.round)
        if lr == 0.0:
            raise AlgorithmError("scaffold shift update needs a nonzero local lr")
        c_i = ctx.client_state["shift"]
        c_new = c_i - ctx.broadcast["c"] + (ctx.x_start - x_end) / (tau * lr)
        u_raw = c_new - c_i
        msg = compress(ctx.compressor, u_raw, ctx.rng_compress)
        reply.bits_up += msg.bits
        reply.realizations.append(msg.realization)
        # Both sides apply the same effective shift update, built only from
        # what travelled over the wire, so c stays the exact weighted mean of
        # the client shifts.  Wherever the channel is exactly invertible the
        # raw coordinate is restored; the compressed model delta doubles as a
        # second exact view (u_raw = -c - delta/(tau*lr)); lossy quantizers
        # fall back to the variance-damped unbiased estimate, which keeps the
        # shift recursion contractive.
        rec_u = exact_recovery(ctx.compressor, msg)
        if rec_u is None:
            d = ctx.x_start.shape[0]
            m = msg.values / (1.0 + variance_bound(ctx.compressor, d))
        else:
            mask_u, raw_u = rec_u
            m = np.where(mask_u, raw_u, 0.0)
            delta_msg = CompressedMessage(reply.delta, 0, reply.realizations[0])
            rec_d = exact_recovery(ctx.compressor, delta_msg)
            if rec_d is not None:
                mask_d, raw_d = rec_d
                extra = mask_d & ~mask_u
                u_from_delta = -ctx.broadcast["c"] - raw_d / (tau * lr)
                m = np.where(extra, u_from_delta, m)
        reply.update = m
        reply.new_client_state = {"shift": c_i + m}
        return reply

    def update_server_state(self, server_state, replies, weights, selected,
                            direction, num_clients, x_old):
        if self.freeze_shifts:
            return
        mean_u = sum(r.update for r in replies) / len(replies)
        server_state["c"] = server_state["c"] + \
            (len(replies) / num_clients) * mean_u


class DCGD(Algorithm):
    """Compressed gradient descent in the delta route: one local step whose
    delta carries -lr * C(g_i)."""

    name = "dcgd"

    def run_client(self, ctx):
        g, calls = ctx.problem.local_gradient(ctx.client_id, ctx.x_start,
                                              ctx.oracle, ctx.rng_oracle)
        msg = compress(ctx.compressor, g, ctx.rng_compress)
        lr = ctx.opt.client_lr_at(ctx.round)
        return ClientReply(ctx.client_id, delta=-lr * msg.values,
                           bits_up=msg.bits, oracle_calls=calls,
                           realizations=[msg.realization])


class Diana(Algorithm):
    """Compressed gradient differences against learned per-client shifts."""

    name = "diana"

    def initialize_server_state(self, problem, x0, opt, compressor, rng):
        d = problem.dim
        client_states = {}
        hbar = np.zeros(d)
        for i in range(problem.num_clients):
            if opt.shift_init == SHIFT_FULL_GRAD:
                shift, _ = problem.local_gradient(i, x0)
            else:
                shift = np.zeros(d)
            client_states[i] = {"shift": shift}
            hbar += problem.weights[i] * shift
        return {"hbar": hbar}, client_states

    def run_client(self, ctx):
        x_end, calls, g_start = self._local_steps(ctx)
        h_i = ctx.client_state["shift"]
        msg = compress(ctx.compressor, g_start - h_i, ctx.rng_compress)
        h_new = h_i + ctx.opt.diana_alpha * msg.values
        return ClientReply(ctx.client_id, update=msg.values,
                           new_client_state={"shift": h_new},
                           bits_up=msg.bits, oracle_calls=calls,
                           realizations=[msg.realization])

    def server_gradient(self, replies, server_state, weights, selected):
        mean_m = sum(r.update for r in replies) / len(replies)
        return server_state["hbar"] + mean_m

    def update_server_state(self, server_state, replies, weights, selected,
                            direction, num_clients, x_old):
        mean_m = sum(r.update for r in replies) / len(replies)
        server_state["hbar"] = server_state["hbar"] + self._alpha * mean_m

    _alpha = 0.5  # overwritten by the engine from the optimizer spec


class Marina(Algorithm):
    """Round-coin between full-gradient sync and compressed gradient
    differences of the two most recent global models."""

    name = "marina"

    def initialize_server_state(self, problem, x0, opt, compressor, rng):
        d = problem.dim
        g = np.zeros(d)
        for i in range(problem.num_clients):
            gi, _ = problem.local_gradient(i, x0)
            g += problem.weights[i] * gi
        client_states = {i: {} for i in range(problem.num_clients)}
        return {"g": g, "x_prev": x0.copy()}, client_states

    def client_broadcast(self, server_state, rnd, rng):
        full = bool(rng.random() < self._marina_p)
        server_state["_coin_full"] = full
        return {"coin": "full" if full else "compressed",
                "x_prev": server_state["x_prev"]}

    _marina_p = 0.5  # overwritten by the engine from the optimizer spec

    def run_client(self, ctx):
        opt = ctx.opt
        d = ctx.x_start.shape[0]
        if ctx.broadcast["coin"] == "full":
            g_t, calls = ctx.problem.local_gradient(ctx.client_id, ctx.x_start,
                                                    ctx.oracle, ctx.rng_oracle)
            reply = ClientReply(ctx.client_id, update=g_t, bits_up=FLOAT_BITS * d,
                                oracle_calls=calls,
                                realizations=[{"kind": "identity"}])
        else:
            g_t, g_prev, calls = ctx.problem.local_gradient_pair(
                ctx.client_id, ctx.x_start, ctx.broadcast["x_prev"],
                ctx.oracle, ctx.rng_oracle)
            msg = compress(ctx.compressor, g_t - g_prev, ctx.rng_compress)
            reply = ClientReply(ctx.client_id, update=msg.values, bits_up=msg.bits,
                                oracle_calls=calls, realizations=[msg.realization])
        reply.oracle_calls += self._extra_local_steps(ctx, g_t)
        return reply

    def _extra_local_steps(self, ctx: ClientRoundContext, g_first: np.ndarray) -> int:
        """Optional local ClientOpt iterations beyond the round-boundary
        message; they consume oracle budget but the server direction is built
        from the boundary gradients only."""
        n = ctx.problem.clients[ctx.client_id].n_samples
        tau = ctx.opt.steps_for(n, ctx.oracle)
        if tau <= 1:
            return 0
        lr = ctx.opt.client_lr_at(ctx.round)
        x, _ = client_opt_step(ctx.x_start, g_first, lr, 0.0, None)
        calls = 0
        for _ in range(tau - 1):
            g, c = ctx.problem.local_gradient(ctx.client_id, x, ctx.oracle,
                                              ctx.rng_oracle)
            calls += c
            x, _ = client_opt_step(x, g, lr, 0.0, None)
        return calls

    def server_gradient(self, replies, server_state, weights, selected):
        # weighted sums normalized by realized participation mass so partial
        # participation keeps the direction on the gradient scale
        total = sum(weights[i] for i in selected)
        acc = np.zeros_like(replies[0].update)
        for r in replies:
            acc += weights[r.client_id] * r.update
        acc /= total
        if server_state.get("_coin_full", True):
            return acc
        return server_state["g"] + acc

    def update_server_state(self, server_state, replies, weights, selected,
                            direction, num_clients, x_old):
        server_state["g"] = direction.copy()
        server_state["x_prev"] = x_old.copy()


class EF21(Algorithm):
    """Error-feedback: per-client compressed-difference trackers g_i whose
    weighted sum is the server direction."""

    name = "ef21"

    def initialize_server_state(self, problem, x0, opt, compressor, rng):
        d = problem.dim
        client_states = {}
        g = np.zeros(d)
        for i in range(problem.num_clients):
            if opt.shift_init == SHIFT_FULL_GRAD:
                grad, _ = problem.local_gradient(i, x0)
                shift = compress(compressor, grad, rng).values
            else:
                shift = np.zeros(d)
            client_states[i] = {"shift": shift}
            g += problem.weights[i] * shift
        return {"g": g}, client_states

    def run_client(self, ctx):
        x_end, calls, g_start = self._local_steps(ctx)
        g_i = ctx.client_state["shift"]
        msg = compress(ctx.compressor, g_start - g_i, ctx.rng_compress)
        return ClientReply(ctx.client_id, update=msg.values,
                           new_client_state={"shift": g_i + msg.values},
                           bits_up=msg.bits, oracle_calls=calls,
                           realizations=[msg.realization])

    def server_gradient(self, replies, server_state, weights, selected):
        acc = server_state["g"].copy()
        for r in replies:
            acc += weights[r.client_id] * r.update
        return acc

    def update_server_state(self, server_state, replies, weights, selected,
                            direction, num_clients, x_old):
        server_state["g"] = direction.copy()


ALGORITHMS = {
    "gd": Algorithm,
    "fedavg": Algorithm,
    "fedprox": FedProx,
    "scaffold": Scaffold,
    "dcgd": DCGD,
    "diana": Diana,
    "marina": Marina,
    "ef21": EF21,
}


def make_algorithm(name: str, opt: OptimizerSpec) -> Algorithm:
    try:
        cls = ALGORITHMS[name]
    except KeyError:
        raise AlgorithmError(f"unknown algorithm {name!r}; "
                             f"choose from {sorted(ALGORITHMS)}") from None
    alg = cls()
    alg.name = name
    if isinstance(alg, Marina):
        alg._marina_p = opt.marina_p
    if isinstance(alg, Diana):
        alg._alpha = opt.diana_alpha
    return alg
