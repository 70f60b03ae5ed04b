#include "hashodf/run_config.hpp"

#include "hashodf/checkpoint.hpp"
#include "hashodf/errors.hpp"
#include "hashodf/json_util.hpp"

#include <fstream>

namespace hashodf {

void RunConfig::validate() const {
  model.validate();
  train.validate();
  ShBasisSpec spec(model.lmax);
  matern_prior_matrix(prior, spec);
  if (!(lambda_sh >= 0.0)) throw ConfigError("lambda_sh must be >= 0");
  for (double l : lambda_candidates) {
    if (!(l >= 0.0)) throw ConfigError("lambda_candidates must be >= 0");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (posterior_samples < 1) throw ConfigError("posterior_samples must be >= 1");
  if (fit_level_scale && !model.encoder) throw ConfigError("fit_level_scale needs a grid-hash encoder");
}

std::vector<std::string> profile_names() { return {"hashenc-default", "hashenc-optimized", "siren-baseline"}; }

RunConfig profile_config(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "hashenc-default") {
    c.model.encoder = HashGridConfig{14, 6, 1.3208004876012468, 2, 20, true};
    c.model.head = MlpHeadConfig{2, 64, Activation::Sine, 30.0};
    c.train.epochs = 3000;
    c.fit_level_scale = true;
  } else if (name == "hashenc-optimized") {
    c.model.encoder = HashGridConfig{4, 80, 1.13, 8, 20, true};
    c.model.head = MlpHeadConfig{3, 128, Activation::Sine, 30.0};
    c.train.epochs = 3000;
  } else if (name == "siren-baseline") {
    c.model.encoder.reset();
    c.model.head = MlpHeadConfig{10, 1024, Activation::Sine, 30.0};
    c.train.epochs = 10000;
    c.train.lr_global_siren = 1e-6;
  } else {
    throw ConfigError("unknown profile '" + name + "' (hashenc-default, hashenc-optimized, siren-baseline)");
  }
  return c;
}

namespace {

void apply_encoder(const nlohmann::json& j, HashGridConfig& e) {
  const std::string where = "model.encoder";
  reject_unknown_keys(j, {"n_levels", "base_resolution", "level_scale", "features_per_entry", "log2_table_size", "include_coords"}, where);
  read_optional(j, "n_levels", e.n_levels, where);
  read_optional(j, "base_resolution", e.base_resolution, where);
  read_optional(j, "level_scale", e.level_scale, where);
  read_optional(j, "features_per_entry", e.features_per_entry, where);
  read_optional(j, "log2_table_size", e.log2_table_size, where);
  read_optional(j, "include_coords", e.include_coords, where);
}

void apply_model(const nlohmann::json& j, RunConfig& c) {
  const std::string where = "model";
  reject_unknown_keys(j, {"encoder", "head", "lmax"}, where);
  if (j.contains("encoder")) {
    if (j.at("encoder").is_null()) {
      c.model.encoder.reset();
      c.fit_level_scale = false;
    } else {
      if (!c.model.encoder) c.model.encoder = HashGridConfig{};
      apply_encoder(j.at("encoder"), *c.model.encoder);
      // An explicit level scale wins over the image-size rule.
      if (j.at("encoder").contains("level_scale")) c.fit_level_scale = false;
    }
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    reject_unknown_keys(h, {"depth", "width", "activation", "omega0"}, "model.head");
    read_optional(h, "depth", c.model.head.depth, "model.head");
    read_optional(h, "width", c.model.head.width, "model.head");
    read_optional(h, "omega0", c.model.head.omega0, "model.head");
    if (h.contains("activation")) {
      if (!h.at("activation").is_string()) throw ConfigError("model.head.activation: expected a string");
      c.model.head.activation = parse_activation(h.at("activation").get<std::string>());
    }
  }
  read_optional(j, "lmax", c.model.lmax, where);
}

void apply_train(const nlohmann::json& j, TrainConfig& t) {
  const std::string where = "train";
  reject_unknown_keys(j, {"epochs", "batch_size", "lr_head", "lr_tables", "lr_global_siren", "lambda_c", "seed", "beta1",
                          "beta2", "eps", "shuffle", "drop_last"},
                      where);
  read_optional(j, "epochs", t.epochs, where);
  read_optional(j, "batch_size", t.batch_size, where);
  read_optional(j, "lr_head", t.lr_head, where);
  read_optional(j, "lr_tables", t.lr_tables, where);
  read_optional(j, "lr_global_siren", t.lr_global_siren, where);
  read_optional(j, "lambda_c", t.lambda_c, where);
  read_optional(j, "seed", t.seed, where);
  read_optional(j, "beta1", t.beta1, where);
  read_optional(j, "beta2", t.beta2, where);
  read_optional(j, "eps", t.eps, where);
  read_optional(j, "shuffle", t.shuffle, where);
  read_optional(j, "drop_last", t.drop_last, where);
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"schema_version", "profile", "model", "train", "prior", "lambda_sh", "lambda_candidates",
                          "fit_level_scale", "checkpoint_every", "posterior_samples", "seed", "paths"},
                      "config");
  int version = kRunConfigSchema;
  read_optional(j, "schema_version", version, "config");
  if (version != kRunConfigSchema) throw ConfigError("config: unsupported schema_version " + std::to_string(version));
  std::string profile = "hashenc-default";
  read_optional(j, "profile", profile, "config");
  RunConfig c = profile_config(profile);
  if (j.contains("model")) apply_model(j.at("model"), c);
  if (j.contains("fit_level_scale")) read_optional(j, "fit_level_scale", c.fit_level_scale, "config");
  if (j.contains("train")) apply_train(j.at("train"), c.train);
  if (j.contains("prior")) {
    reject_unknown_keys(j.at("prior"), {"nu", "kappa"}, "prior");
    read_optional(j.at("prior"), "nu", c.prior.nu, "prior");
    read_optional(j.at("prior"), "kappa", c.prior.kappa, "prior");
  }
  read_optional(j, "lambda_sh", c.lambda_sh, "config");
  read_optional(j, "lambda_candidates", c.lambda_candidates, "config");
  read_optional(j, "checkpoint_every", c.checkpoint_every, "config");
  read_optional(j, "posterior_samples", c.posterior_samples, "config");
  read_optional(j, "seed", c.train.seed, "config");
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown_keys(p, {"dwi", "bvec", "bval", "mask", "out"}, "paths");
    read_optional(p, "dwi", c.paths.dwi, "paths");
    read_optional(p, "bvec", c.paths.bvec, "paths");
    read_optional(p, "bval", c.paths.bval, "paths");
    read_optional(p, "mask", c.paths.mask, "paths");
    read_optional(p, "out", c.paths.out, "paths");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  const auto& t = c.train;
  return nlohmann::json{
      {"schema_version", kRunConfigSchema},
      {"profile", c.profile},
      {"model", c.model},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr_head", t.lr_head},
        {"lr_tables", t.lr_tables},
        {"lr_global_siren", t.lr_global_siren},
        {"lambda_c", t.lambda_c},
        {"seed", t.seed},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"eps", t.eps},
        {"shuffle", t.shuffle},
        {"drop_last", t.drop_last}}},
      {"prior", {{"nu", c.prior.nu}, {"kappa", c.prior.kappa}}},
      {"lambda_sh", c.lambda_sh},
      {"lambda_candidates", c.lambda_candidates},
      {"fit_level_scale", c.fit_level_scale},
      {"checkpoint_every", c.checkpoint_every},
      {"posterior_samples", c.posterior_samples},
      {"paths",
       {{"dwi", c.paths.dwi}, {"bvec", c.paths.bvec}, {"bval", c.paths.bval}, {"mask", c.paths.mask}, {"out", c.paths.out}}}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace hashodf
