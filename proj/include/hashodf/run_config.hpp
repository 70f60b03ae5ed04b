#pragma once

#include "hashodf/field_model.hpp"
#include "hashodf/sh_basis.hpp"
#include "hashodf/training.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hashodf {

inline constexpr int kRunConfigSchema = 1;

struct RunPaths {
  std::string dwi, bvec, bval, mask, out;
};

/**
 * Resolved settings of a run. JSON form:
 *
 *   {"schema_version": 1, "profile": "hashenc-default",
 *    "model": {"encoder": {...} | null, "head": {...}, "lmax": 8},
 *    "train": {"epochs", "batch_size", "lr_head", "lr_tables", "lr_global_siren", "lambda_c",
 *              "seed", "beta1", "beta2", "eps", "shuffle", "drop_last"},
 *    "prior": {"nu", "kappa"}, "lambda_sh", "lambda_candidates": [...],
 *    "fit_level_scale", "checkpoint_every", "posterior_samples", "seed",
 *    "paths": {"dwi", "bvec", "bval", "mask", "out"}}
 *
 * Every key is optional; missing keys keep the profile's value. Unknown keys are a ConfigError.
 */
struct RunConfig {
  std::string profile = "hashenc-default";
  FieldModelConfig model;
  TrainConfig train;
  MaternParams prior;
  double lambda_sh = 0.006;
  /// Non-empty: pick lambda_c by grid search on the middle axial slice before training.
  std::vector<double> lambda_candidates;
  /// Stretch the level scale so the finest level matches the largest image dimension.
  bool fit_level_scale = false;
  /// Write a checkpoint every k epochs (0 = only at the end).
  int checkpoint_every = 0;
  int posterior_samples = 250;
  RunPaths paths;

  void validate() const;
};

std::vector<std::string> profile_names();
/// "hashenc-default", "hashenc-optimized" or "siren-baseline"; ConfigError otherwise.
RunConfig profile_config(const std::string& name);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

RunConfig load_run_config(const std::string& path);

}  // namespace hashodf
