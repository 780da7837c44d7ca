/** Client-side validation mirroring the server's config checks, so invalid
 * forms are rejected before any request is made. The server remains the
 * authority; these rules must stay a subset of its validation. */

import { ALGORITHMS, RunConfig } from "./types.js";

export interface FieldError {
  field: string;
  message: string;
}

const COMPRESSOR_RE =
  /^(identity|natural|terngrad|bern:[0-9.eE+-]+|(randk|topk):[0-9]+%?|(dith|ndith|qsgd):[0-9]+|compose\(.+,.+\)|switch:[0-9.eE+-]+\(.+,.+\))$/;
const ORACLE_RE = /^(full|nice:[0-9.eE+-]+)$/;

export function validateConfig(config: RunConfig): FieldError[] {
  const errors: FieldError[] = [];
  const bad = (field: string, message: string) => errors.push({ field, message });

  if (!(ALGORITHMS as readonly string[]).includes(config.algorithm)) {
    bad("algorithm", `unknown algorithm '${config.algorithm}'`);
  }
  if (!Number.isInteger(config.rounds) || config.rounds < 1) {
    bad("rounds", "rounds must be an integer >= 1");
  }
  if (!Number.isInteger(config.seed) || config.seed < 0) {
    bad("seed", "seed must be an integer >= 0");
  }
  if (!Number.isInteger(config.threads) || config.threads < 1) {
    bad("threads", "threads must be an integer >= 1");
  }
  if (!Number.isInteger(config.eval_every) || config.eval_every < 1) {
    bad("eval_every", "eval every must be an integer >= 1");
  }
  if (config.clients_per_round !== null) {
    const ns = config.clients_per_round;
    if (!Number.isInteger(ns) || ns < 1 || ns > config.problem.clients) {
      bad("clients_per_round",
        `clients per round must lie in [1, ${config.problem.clients}]`);
    }
  }
  if (!(config.global_lr >= 0)) bad("global_lr", "global lr must be >= 0");
  if (!(config.local_lr >= 0)) bad("local_lr", "local lr must be >= 0");
  if (!Number.isInteger(config.local_steps) || config.local_steps < 1) {
    bad("local_steps", "local steps must be an integer >= 1");
  }
  if (config.local_epochs !== null &&
      (!Number.isInteger(config.local_epochs) || config.local_epochs < 1)) {
    bad("local_epochs", "local epochs must be an integer >= 1");
  }
  if (!(config.marina_p > 0 && config.marina_p <= 1)) {
    bad("marina_p", "marina p must lie in (0, 1]");
  }
  if (!(config.diana_alpha > 0 && config.diana_alpha <= 1)) {
    bad("diana_alpha", "diana alpha must lie in (0, 1]");
  }
  if (!(config.prox_mu >= 0)) bad("prox_mu", "prox mu must be >= 0");
  if (!COMPRESSOR_RE.test(config.compressor)) {
    bad("compressor", `unrecognized compressor '${config.compressor}'`);
  }
  if (config.compressor_down !== null &&
      !COMPRESSOR_RE.test(config.compressor_down)) {
    bad("compressor_down",
      `unrecognized compressor '${config.compressor_down}'`);
  }
  if (!ORACLE_RE.test(config.oracle)) {
    bad("oracle", "oracle must be 'full' or 'nice:<tau>'");
  }

  const p = config.problem;
  if (p.family !== "quad" && p.family !== "logreg") {
    bad("problem.family", "family must be quad or logreg");
  }
  if (!Number.isInteger(p.d) || p.d < 1) bad("problem.d", "d must be >= 1");
  if (!Number.isInteger(p.clients) || p.clients < 1) {
    bad("problem.clients", "clients must be >= 1");
  }
  if (!Number.isInteger(p.samples) || p.samples < 1) {
    bad("problem.samples", "samples must be >= 1");
  }
  if (p.seed !== null && (!Number.isInteger(p.seed) || p.seed < 0)) {
    bad("problem.seed", "problem seed must be an integer >= 0");
  }
  if (p.family === "quad") {
    if (!(p.mu > 0)) bad("problem.mu", "mu must be > 0");
    if (!(p.L >= p.mu)) bad("problem.L", "L must be >= mu");
  }
  if (!(p.l2 >= 0)) bad("problem.l2", "l2 must be >= 0");
  if (!(p.noise >= 0)) bad("problem.noise", "noise must be >= 0");
  return errors;
}
