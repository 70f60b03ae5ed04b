#include "hashodf/checkpoint.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/sh_basis.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hashodf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void to_json(nlohmann::json& j, const HashGridConfig& c) {
  j = {{"n_levels", c.n_levels},
       {"base_resolution", c.base_resolution},
       {"level_scale", c.level_scale},
       {"features_per_entry", c.features_per_entry},
       {"log2_table_size", c.log2_table_size},
       {"include_coords", c.include_coords}};
}

void from_json(const nlohmann::json& j, HashGridConfig& c) {
  j.at("n_levels").get_to(c.n_levels);
  j.at("base_resolution").get_to(c.base_resolution);
  j.at("level_scale").get_to(c.level_scale);
  j.at("features_per_entry").get_to(c.features_per_entry);
  j.at("log2_table_size").get_to(c.log2_table_size);
  j.at("include_coords").get_to(c.include_coords);
}

void to_json(nlohmann::json& j, const MlpHeadConfig& c) {
  j = {{"depth", c.depth}, {"width", c.width}, {"activation", to_string(c.activation)}, {"omega0", c.omega0}};
}

void from_json(const nlohmann::json& j, MlpHeadConfig& c) {
  j.at("depth").get_to(c.depth);
  j.at("width").get_to(c.width);
  c.activation = parse_activation(j.at("activation").get<std::string>());
  j.at("omega0").get_to(c.omega0);
}

void to_json(nlohmann::json& j, const FieldModelConfig& c) {
  j = {{"head", c.head}, {"lmax", c.lmax}};
  j["encoder"] = c.encoder ? nlohmann::json(*c.encoder) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, FieldModelConfig& c) {
  j.at("head").get_to(c.head);
  j.at("lmax").get_to(c.lmax);
  if (j.at("encoder").is_null()) {
    c.encoder.reset();
  } else {
    c.encoder = j.at("encoder").get<HashGridConfig>();
  }
}

std::vector<double> flatten_parameters(const FieldModel& model) {
  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  if (const auto* enc = model.encoder()) flat.insert(flat.end(), enc->params().begin(), enc->params().end());
  for (const auto& layer : model.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) flat.push_back(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) flat.push_back(layer.bias[r]);
  }
  for (Eigen::Index r = 0; r < model.w().rows(); ++r) {
    for (Eigen::Index c = 0; c < model.w().cols(); ++c) flat.push_back(model.w()(r, c));
  }
  return flat;
}

void unflatten_parameters(std::span<const double> flat, FieldModel& model) {
  if (flat.size() != model.parameter_count()) {
    throw FormatError("parameter block holds " + std::to_string(flat.size()) + " values, model needs " +
                      std::to_string(model.parameter_count()));
  }
  std::size_t pos = 0;
  if (auto* enc = model.encoder()) {
    auto dst = enc->params();
    std::copy_n(flat.begin(), dst.size(), dst.begin());
    pos += dst.size();
  }
  for (auto& layer : model.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[pos++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = flat[pos++];
  }
  for (Eigen::Index r = 0; r < model.w().rows(); ++r) {
    for (Eigen::Index c = 0; c < model.w().cols(); ++c) model.w()(r, c) = flat[pos++];
  }
}

namespace {

constexpr char kMagic[8] = {'H', 'O', 'D', 'F', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* field) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError(std::string("checkpoint truncated while reading ") + field);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FieldModel& model, const nlohmann::json& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path.string());
  const nlohmann::json block = {{"model", model.config()}, {"metadata", metadata}};
  const std::string text = block.dump();
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto flat = flatten_parameters(model);
  write_pod<std::uint64_t>(os, flat.size());
  os.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw FormatError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint magic mismatch in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_pod<std::uint64_t>(is, "config length");
  if (length > (std::uint64_t{1} << 30)) throw FormatError("checkpoint config block length implausible");
  std::string text(length, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(length))) throw FormatError("checkpoint truncated in config block");

  nlohmann::json block;
  FieldModelConfig config;
  try {
    block = nlohmann::json::parse(text);
    config = block.at("model").get<FieldModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config block invalid: ") + e.what());
  }

  // Shape the model from its config, then overwrite every parameter.
  FieldModel model = init_model(config, 0);
  const auto count = read_pod<std::uint64_t>(is, "parameter count");
  if (count != model.parameter_count()) {
    throw FormatError("checkpoint parameter count " + std::to_string(count) + " does not match its config (" +
                      std::to_string(model.parameter_count()) + ")");
  }
  std::vector<double> flat(count);
  if (!is.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(count * sizeof(double)))) {
    throw FormatError("checkpoint truncated in parameter block");
  }
  unflatten_parameters(flat, model);
  return {std::move(model), block.value("metadata", nlohmann::json::object())};
}

}  // namespace hashodf
