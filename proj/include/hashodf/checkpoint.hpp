#pragma once

#include "hashodf/field_model.hpp"

#include <json.hpp>

#include <filesystem>

namespace hashodf {

void to_json(nlohmann::json& j, const HashGridConfig& c);
void from_json(const nlohmann::json& j, HashGridConfig& c);
void to_json(nlohmann::json& j, const MlpHeadConfig& c);
void from_json(const nlohmann::json& j, MlpHeadConfig& c);
void to_json(nlohmann::json& j, const FieldModelConfig& c);
void from_json(const nlohmann::json& j, FieldModelConfig& c);

/**
 * Binary model checkpoint, version 1. All integers and reals little-endian.
 *
 *   offset  size  content
 *   0       8     magic "HODFCKPT"
 *   8       4     uint32 format version (1)
 *   12      8     uint64 byte length L of the config block
 *   20      L     UTF-8 JSON: {"model": FieldModelConfig, "metadata": {...}}
 *   20+L    8     uint64 parameter count P
 *   28+L    8*P   float64 parameters in this order:
 *                   hash tables, level 0..n-1, slot-major then feature
 *                   head layers 0..depth-1: weight row-major, then bias
 *                   W (K x r) row-major
 */
struct Checkpoint {
  FieldModel model;
  /// Free-form run metadata (grid dims, prior, training settings).
  nlohmann::json metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const FieldModel& model, const nlohmann::json& metadata);
/// FormatError on bad magic, unsupported version, truncation or inconsistent sizes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Flattened parameters in checkpoint order, and the inverse.
std::vector<double> flatten_parameters(const FieldModel& model);
void unflatten_parameters(std::span<const double> flat, FieldModel& model);

}  // namespace hashodf
