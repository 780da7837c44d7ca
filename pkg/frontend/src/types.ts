/** Mirrors of the JSON shapes served by the fedsim HTTP API. */

export interface ProblemSpec {
  family: "quad" | "logreg";
  d: number;
  clients: number;
  samples: number;
  split: "iid" | "noniid";
  seed: number | null;
  mu: number;
  L: number;
  l2: number;
  noise: number;
  weights: "uniform" | "by-dataset-size";
}

export interface RunConfig {
  algorithm: string;
  rounds: number;
  clients_per_round: number | null;
  global_lr: number;
  local_lr: number;
  local_steps: number;
  local_epochs: number | null;
  compressor: string;
  compressor_down: string | null;
  oracle: string;
  problem: ProblemSpec;
  seed: number;
  threads: number;
  eval_every: number;
  group: string | null;
  comment: string | null;
  shift_init: "zero" | "fullgrad";
  marina_p: number;
  diana_alpha: number;
  prox_mu: number;
}

export interface MetricsRow {
  round: number;
  f_global: number;
  grad_norm_global: number;
  train_loss_sampled: number;
  oracle_calls_cum: number;
  bits_up_cum: number;
  bits_down_cum: number;
  bits_up_round_avg_per_client: number;
  clients: number;
  wall_clock_s: number;
}

export type RunStatus = "pending" | "running" | "stopped" | "finished" | "failed";

export interface RunSummary {
  id: string;
  created_at: number;
  status: RunStatus;
  group: string | null;
  comment: string | null;
  algorithm: string;
  compressor: string;
  rounds_done: number;
  last_row: MetricsRow | null;
}

export interface RunRecord {
  id: string;
  created_at: number;
  status: RunStatus;
  group: string | null;
  comment: string | null;
  error: string | null;
  config: RunConfig;
  rows: MetricsRow[];
}

export interface SystemInfo {
  worker_threads_default: number;
  max_concurrent_runs: number;
  running: number;
  queued: number;
}

export const X_AXES = ["rounds", "bits", "oracle_calls", "wall_clock"] as const;
export const Y_AXES = ["f", "grad_norm", "loss"] as const;
export type XAxis = (typeof X_AXES)[number];
export type YAxis = (typeof Y_AXES)[number];
export type YScale = "linear" | "log";

export const ALGORITHMS = [
  "gd", "fedavg", "fedprox", "scaffold", "dcgd", "diana", "marina", "ef21",
] as const;

export function defaultProblem(): ProblemSpec {
  return {
    family: "quad", d: 10, clients: 10, samples: 50, split: "noniid",
    seed: null, mu: 1, L: 2, l2: 0, noise: 0, weights: "uniform",
  };
}

export function defaultConfig(): RunConfig {
  return {
    algorithm: "fedavg", rounds: 100, clients_per_round: null,
    global_lr: 1, local_lr: 1, local_steps: 1, local_epochs: null,
    compressor: "identity", compressor_down: null, oracle: "full",
    problem: defaultProblem(), seed: 0, threads: 1, eval_every: 1,
    group: null, comment: null, shift_init: "zero",
    marina_p: 0.5, diana_alpha: 0.5, prox_mu: 0,
  };
}

export function isTerminal(status: RunStatus): boolean {
  return status === "finished" || status === "stopped" || status === "failed";
}
