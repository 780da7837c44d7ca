"""Round loop for the generalized federated averaging template.

Client tasks within a round run on a worker pool; every random draw comes
from a stream keyed by (seed, purpose, round, client), so the metric trace is
bitwise identical for any worker count.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .algorithms import (ALGORITHMS, Algorithm, ClientReply,
                         ClientRoundContext, OptimizerSpec, make_algorithm,
                         server_opt_step)
from .compressors import CompressorSpec, compress, parse_compressor
from .problems import (FULL, NICE, FederatedProblem, GradientOracle,
                       ProblemSpec)


class ConfigError(ValueError):
    pass


class RunFailed(RuntimeError):
    pass


# run lifecycle
PENDING = "pending"
RUNNING = "running"
STOPPED = "stopped"
FINISHED = "finished"
FAILED = "failed"

# rng stream purposes
_SAMPLE, _SERVER, _ORACLE, _COMPRESS, _INIT, _DOWNLINK = range(6)


def rng_stream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, purpose, *key]))


def parse_oracle(text: str) -> GradientOracle:
    if text == FULL:
        return GradientOracle(FULL)
    if text.startswith(NICE + ":"):
        return GradientOracle(NICE, tau=float(text.split(":", 1)[1]))
    raise ConfigError(f"unknown oracle {text!r} (use 'full' or 'nice:<tau>')")


def format_oracle(oracle: GradientOracle) -> str:
    if oracle.mode == FULL:
        return FULL
    return f"{NICE}:{oracle.tau}"


@dataclass(frozen=True)
class RunConfig:
    """One experiment: algorithm, optimizer, compression, problem, system."""

    algorithm: str = "fedavg"
    rounds: int = 100
    clients_per_round: Optional[int] = None    # None -> full participation
    global_lr: float = 1.0
    local_lr: float = 1.0
    local_steps: int = 1
    local_epochs: Optional[int] = None
    compressor: str = "identity"
    compressor_down: Optional[str] = None
    oracle: str = FULL
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    seed: int = 0
    threads: int = 1
    eval_every: int = 1
    group: Optional[str] = None
    comment: Optional[str] = None
    shift_init: str = "zero"
    marina_p: float = 0.5
    diana_alpha: float = 0.5
    prox_mu: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; choose from "
                f"{sorted(ALGORITHMS)}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.clients_per_round is not None:
            if not 1 <= self.clients_per_round <= self.problem.clients:
                raise ConfigError(
                    f"clients_per_round must lie in [1, {self.problem.clients}]")
        # fail fast on malformed sub-specs
        parse_compressor(self.compressor)
        if self.compressor_down is not None:
            parse_compressor(self.compressor_down)
        parse_oracle(self.oracle)
        self.optimizer_spec()

    def optimizer_spec(self) -> OptimizerSpec:
        return OptimizerSpec(
            client_lr=self.local_lr, server_lr=self.global_lr,
            local_steps=self.local_steps, local_epochs=self.local_epochs,
            prox_mu=self.prox_mu, shift_init=self.shift_init,
            marina_p=self.marina_p, diana_alpha=self.diana_alpha)

    def participants(self) -> int:
        return self.clients_per_round if self.clients_per_round is not None \
            else self.problem.clients

    def to_dict(self) -> dict:
        out = {
            "algorithm": self.algorithm, "rounds": self.rounds,
            "clients_per_round": self.clients_per_round,
            "global_lr": self.global_lr, "local_lr": self.local_lr,
            "local_steps": self.local_steps, "local_epochs": self.local_epochs,
            "compressor": self.compressor,
            "compressor_down": self.compressor_down, "oracle": self.oracle,
            "problem": self.problem.to_dict(), "seed": self.seed,
            "threads": self.threads, "eval_every": self.eval_every,
            "group": self.group, "comment": self.comment,
            "shift_init": self.shift_init, "marina_p": self.marina_p,
            "diana_alpha": self.diana_alpha, "prox_mu": self.prox_mu,
        }
        return out

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(data) - set(RunConfig.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        kwargs = dict(data)
        if "problem" in kwargs:
            prob = kwargs["problem"]
            kwargs["problem"] = (ProblemSpec.from_dict(prob)
                                 if isinstance(prob, dict) else prob)
        try:
            return RunConfig(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class MetricsRow:
    round: int
    f_global: float
    grad_norm_global: float
    train_loss_sampled: float
    oracle_calls_cum: int
    bits_up_cum: int
    bits_down_cum: int
    bits_up_round_avg_per_client: float
    clients: int
    wall_clock_s: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_dict(data: dict) -> "MetricsRow":
        return MetricsRow(**data)


@dataclass
class RunResult:
    config: RunConfig
    status: str
    rows: list[MetricsRow]
    x_final: np.ndarray
    error: Optional[str] = None
    realization_log: list = field(default_factory=list)


class StopRequested(Exception):
    pass


def sample_clients(num_clients: int, per_round: int, rnd: int, seed: int) -> list[int]:
    """Uniform without replacement, a pure function of (seed, round); sorted
    ascending so aggregation order is deterministic."""
    if per_round > num_clients:
        raise ConfigError("cannot sample more clients than exist")
    if per_round == num_clients:
        return list(range(num_clients))
    rng = rng_stream(seed, _SAMPLE, rnd)
    return sorted(int(i) for i in rng.choice(num_clients, per_round, replace=False))


def run_experiment(config: RunConfig,
                   stop_event: Optional[threading.Event] = None,
                   on_row: Optional[Callable[[MetricsRow], None]] = None,
                   problem: Optional[FederatedProblem] = None) -> RunResult:
    """Execute the full round loop; always returns a result, with status
    STOPPED / FAILED instead of raising for in-run conditions."""
    problem = problem if problem is not None else config.problem.build(config.seed)
    opt = config.optimizer_spec()
    alg = make_algorithm(config.algorithm, opt)
    oracle = parse_oracle(config.oracle)
    comp_up = parse_compressor(config.compressor)
    comp_down = (parse_compressor(config.compressor_down)
                 if config.compressor_down else None)
    seed = config.seed
    M = problem.num_clients
    n_s = config.participants()
    d = problem.dim

    x = np.zeros(d)
    server_state, client_states = alg.initialize_server_state(
        problem, x, opt, comp_up, rng_stream(seed, _INIT))
    server_velocity = None

    rows: list[MetricsRow] = []
    realization_log: list = []
    oracle_cum = 0
    bits_up_cum = 0
    bits_down_cum = 0
    status = FINISHED
    error = None
    start = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

    try:
        for t in range(config.rounds):
            if stop_event is not None and stop_event.is_set():
                status = STOPPED
                break
            selected = sample_clients(M, n_s, t, seed)
            broadcast = alg.client_broadcast(server_state, t,
                                             rng_stream(seed, _SERVER, t))
            if comp_down is not None:
                msg = compress(comp_down, x, rng_stream(seed, _DOWNLINK, t))
                x_bcast = msg.values
                bits_down_cum += msg.bits * len(selected)
            else:
                x_bcast = x

            def task(cid: int) -> ClientReply:
                ctx = ClientRoundContext(
                    problem=problem, client_id=cid, x_start=x_bcast,
                    x_global=x, broadcast=broadcast,
                    client_state=client_states[cid], opt=opt,
                    compressor=comp_up, oracle=oracle, round=t,
                    rng_oracle=rng_stream(seed, _ORACLE, t, cid),
                    rng_compress=rng_stream(seed, _COMPRESS, t, cid))
                return alg.run_client(ctx)

            if pool is not None:
                replies = list(pool.map(task, selected))
            else:
                replies = [task(cid) for cid in selected]

            direction = alg.server_gradient(replies, server_state,
                                            problem.weights, selected)
            x_new, server_velocity = server_opt_step(
                x, direction, opt.server_lr_at(t), opt.server_momentum,
                server_velocity)
            alg.update_server_state(server_state, replies, problem.weights,
                                    selected, direction, M, x_old=x)
            for r in replies:
                if r.new_client_state is not None:
                    client_states[r.client_id] = r.new_client_state
            x = x_new

            if not np.all(np.isfinite(x)):
                bad = [r.client_id for r in replies
                       if r.delta is not None and not np.all(np.isfinite(r.delta))]
                error = (f"non-finite iterate at round {t}"
                         + (f" (clients {bad})" if bad else ""))
                status = FAILED
                break

            bits_round = sum(r.bits_up for r in replies)
            oracle_cum += sum(r.oracle_calls for r in replies)
            bits_up_cum += bits_round
            realization_log.append({
                "round": t,
                "per_client": {r.client_id: r.realizations for r in replies}})

            if t % config.eval_every == 0 or t == config.rounds - 1:
                row = MetricsRow(
                    round=t,
                    f_global=problem.global_value(x),
                    grad_norm_global=float(np.linalg.norm(problem.global_gradient(x))),
                    train_loss_sampled=float(np.mean(
                        [problem.local_value(i, x) for i in selected])),
                    oracle_calls_cum=oracle_cum,
                    bits_up_cum=bits_up_cum,
                    bits_down_cum=bits_down_cum,
                    bits_up_round_avg_per_client=bits_round / len(selected),
                    clients=len(selected),
                    wall_clock_s=time.perf_counter() - start)
                rows.append(row)
                if on_row is not None:
                    on_row(row)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    return RunResult(config=config, status=status, rows=rows, x_final=x,
                     error=error, realization_log=realization_log)
