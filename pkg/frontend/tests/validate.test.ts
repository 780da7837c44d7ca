import { describe, expect, it } from "vitest";

import { defaultConfig } from "../src/types.js";
import { validateConfig } from "../src/validate.js";

function fields(errors: ReturnType<typeof validateConfig>): string[] {
  return errors.map((e) => e.field);
}

describe("validateConfig", () => {
  it("accepts the default config", () => {
    expect(validateConfig(defaultConfig())).toEqual([]);
  });

  it("accepts the SCAFFOLD compression-study config", () => {
    const config = defaultConfig();
    config.algorithm = "scaffold";
    config.rounds = 100;
    config.global_lr = 0.5;
    config.local_lr = 1.0;
    config.compressor = "randk:40%";
    config.problem.d = 20;
    config.problem.mu = 1;
    config.problem.L = 2;
    config.clients_per_round = 10;
    config.seed = 1;
    expect(validateConfig(config)).toEqual([]);
  });

  it("rejects oversampling clients", () => {
    const config = defaultConfig();
    config.problem.clients = 10;
    config.clients_per_round = 11;
    expect(fields(validateConfig(config))).toContain("clients_per_round");
  });

  it("rejects non-positive and non-integer counts", () => {
    const config = defaultConfig();
    config.rounds = 0;
    config.threads = 1.5;
    config.eval_every = -2;
    const bad = fields(validateConfig(config));
    expect(bad).toContain("rounds");
    expect(bad).toContain("threads");
    expect(bad).toContain("eval_every");
  });

  it("rejects negative rates and out-of-range probabilities", () => {
    const config = defaultConfig();
    config.global_lr = -0.1;
    config.marina_p = 0;
    config.diana_alpha = 1.5;
    const bad = fields(validateConfig(config));
    expect(bad).toContain("global_lr");
    expect(bad).toContain("marina_p");
    expect(bad).toContain("diana_alpha");
  });

  it("rejects malformed compressor and oracle strings", () => {
    const config = defaultConfig();
    config.compressor = "zipf";
    config.oracle = "sgd";
    const bad = fields(validateConfig(config));
    expect(bad).toContain("compressor");
    expect(bad).toContain("oracle");
  });

  it("accepts the full compressor grammar", () => {
    for (const name of ["identity", "bern:0.8", "randk:40%", "randk:8",
                        "topk:2", "natural", "dith:4", "ndith:4", "qsgd:4",
                        "terngrad", "compose(natural,randk:2)",
                        "switch:0.5(identity,topk:1)"]) {
      const config = defaultConfig();
      config.compressor = name;
      expect(validateConfig(config), name).toEqual([]);
    }
  });

  it("rejects an inverted spectrum (L < mu)", () => {
    const config = defaultConfig();
    config.problem.mu = 3;
    config.problem.L = 2;
    expect(fields(validateConfig(config))).toContain("problem.L");
  });

  it("treats NaN from blank numeric inputs as invalid", () => {
    const config = defaultConfig();
    config.local_lr = NaN;
    expect(fields(validateConfig(config))).toContain("local_lr");
  });
});
