#include "hashodf/encoding.hpp"

#include "hashodf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hashodf {

void HashGridConfig::validate() const {
  if (n_levels < 1) throw ConfigError("hash grid: n_levels must be >= 1");
  if (base_resolution < 2) throw ConfigError("hash grid: base_resolution must be >= 2");
  if (!(level_scale > 1.0)) throw ConfigError("hash grid: level_scale must be > 1");
  if (features_per_entry < 1) throw ConfigError("hash grid: features_per_entry must be >= 1");
  if (log2_table_size < 1 || log2_table_size > 30) throw ConfigError("hash grid: log2_table_size must be in [1, 30]");
}

int HashGridConfig::output_width() const { return n_levels * features_per_entry + (include_coords ? 3 : 0); }

double level_scale_for_finest(int n_levels, int base_resolution, int finest_resolution) {
  if (n_levels < 2) return 2.0;  // unused with a single level; any b > 1 is valid
  if (finest_resolution <= base_resolution) {
    throw ConfigError("finest resolution must exceed base resolution to derive a level scale");
  }
  return std::pow(static_cast<double>(finest_resolution) / base_resolution, 1.0 / (n_levels - 1));
}

int level_resolution(int level, const HashGridConfig& config) {
  if (level < 0 || level >= config.n_levels) {
    throw IndexError("level " + std::to_string(level) + " outside [0, " + std::to_string(config.n_levels) + ")");
  }
  // The 1e-9 guard keeps b = (N_max/N_min)^(1/(n-1)) from landing one below N_max.
  return static_cast<int>(std::floor(config.base_resolution * std::pow(config.level_scale, level) + 1e-9));
}

namespace {

std::uint64_t vertex_count(int resolution) {
  const auto side = static_cast<std::uint64_t>(resolution) + 1;
  return side * side * side;
}

inline std::uint32_t slot_of(std::uint32_t x, std::uint32_t y, std::uint32_t z, int resolution, int log2_size) {
  const std::uint64_t table = std::uint64_t{1} << log2_size;
  if (vertex_count(resolution) <= table) {
    const std::uint64_t side = static_cast<std::uint64_t>(resolution) + 1;
    return static_cast<std::uint32_t>(x + side * (y + side * z));
  }
  const std::uint32_t h = (x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u);
  return h & static_cast<std::uint32_t>(table - 1);
}

}  // namespace

std::uint32_t hash_index(const std::array<std::uint32_t, 3>& grid_coords, int level, const HashGridConfig& config) {
  return slot_of(grid_coords[0], grid_coords[1], grid_coords[2], level_resolution(level, config),
                 config.log2_table_size);
}

std::size_t level_table_entries(int level, const HashGridConfig& config) {
  const std::uint64_t table = std::uint64_t{1} << config.log2_table_size;
  return static_cast<std::size_t>(std::min(table, vertex_count(level_resolution(level, config))));
}

std::size_t hash_grid_parameter_count(const HashGridConfig& config) {
  std::size_t total = 0;
  for (int l = 0; l < config.n_levels; ++l) total += level_table_entries(l, config);
  return total * static_cast<std::size_t>(config.features_per_entry);
}

namespace {

void layout(const HashGridConfig& config, std::vector<int>& resolutions, std::vector<std::size_t>& offsets) {
  config.validate();
  offsets.assign(1, 0);
  resolutions.clear();
  for (int l = 0; l < config.n_levels; ++l) {
    resolutions.push_back(level_resolution(l, config));
    offsets.push_back(offsets.back() + level_table_entries(l, config));
  }
}

}  // namespace

HashGridState::HashGridState(const HashGridConfig& config, std::mt19937_64& rng) : config_(config) {
  layout(config_, resolutions_, offsets_);
  params_.resize(offsets_.back() * static_cast<std::size_t>(config_.features_per_entry));
  std::uniform_real_distribution<double> init(-1e-4, 1e-4);
  for (double& p : params_) p = init(rng);
}

HashGridState::HashGridState(const HashGridConfig& config, std::vector<double> params)
    : config_(config), params_(std::move(params)) {
  layout(config_, resolutions_, offsets_);
  if (params_.size() != offsets_.back() * static_cast<std::size_t>(config_.features_per_entry)) {
    throw FormatError("hash grid tables: expected " +
                      std::to_string(offsets_.back() * static_cast<std::size_t>(config_.features_per_entry)) +
                      " parameters, got " + std::to_string(params_.size()));
  }
}

std::span<double> HashGridState::entry(int level, std::uint32_t slot) {
  const auto f = static_cast<std::size_t>(config_.features_per_entry);
  return {params_.data() + (offset(level) + slot) * f, f};
}

std::span<const double> HashGridState::entry(int level, std::uint32_t slot) const {
  const auto f = static_cast<std::size_t>(config_.features_per_entry);
  return {params_.data() + (offset(level) + slot) * f, f};
}

void HashGridState::gather(const Eigen::Vector3d& v, std::span<LevelGather> out,
                           std::vector<std::size_t>* touched) const {
  for (int d = 0; d < 3; ++d) {
    if (!(v[d] >= -1e-9 && v[d] <= 1.0 + 1e-9)) {
      throw InputError("coordinate outside the unit cube: component " + std::to_string(d) + " = " +
                       std::to_string(v[d]));
    }
  }
  for (int l = 0; l < config_.n_levels; ++l) {
    const int res = resolutions_[static_cast<std::size_t>(l)];
    std::array<std::uint32_t, 3> cell{};
    std::array<double, 3> frac{};
    for (int d = 0; d < 3; ++d) {
      const double x = std::clamp(v[d], 0.0, 1.0) * res;
      const int i = std::min(static_cast<int>(std::floor(x)), res - 1);
      cell[d] = static_cast<std::uint32_t>(i);
      frac[d] = x - i;
    }
    LevelGather& g = out[static_cast<std::size_t>(l)];
    for (int c = 0; c < 8; ++c) {
      const std::uint32_t dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      g.slot[c] = slot_of(cell[0] + dx, cell[1] + dy, cell[2] + dz, res, config_.log2_table_size);
      g.weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
      if (touched) touched->push_back(offset(l) + g.slot[c]);
    }
  }
}

void HashGridState::encode(const Eigen::Vector3d& v, std::span<double> out, std::vector<std::size_t>* touched) const {
  const int f = config_.features_per_entry;
  if (out.size() != static_cast<std::size_t>(config_.output_width())) {
    throw InputError("encode: output span has wrong width");
  }
  std::vector<LevelGather> g(static_cast<std::size_t>(config_.n_levels));
  gather(v, g, touched);
  std::fill(out.begin(), out.end(), 0.0);
  for (int l = 0; l < config_.n_levels; ++l) {
    double* block = out.data() + static_cast<std::size_t>(l * f);
    const LevelGather& lg = g[static_cast<std::size_t>(l)];
    for (int c = 0; c < 8; ++c) {
      const auto e = entry(l, lg.slot[c]);
      for (int j = 0; j < f; ++j) block[j] += lg.weight[c] * e[static_cast<std::size_t>(j)];
    }
  }
  if (config_.include_coords) {
    const std::size_t base = static_cast<std::size_t>(config_.n_levels * f);
    out[base] = v.x();
    out[base + 1] = v.y();
    out[base + 2] = v.z();
  }
}

Eigen::VectorXd HashGridState::encode(const Eigen::Vector3d& v) const {
  Eigen::VectorXd out(config_.output_width());
  encode(v, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

Eigen::MatrixXd HashGridState::encode_batch(const Eigen::Matrix3Xd& coords, std::vector<LevelGather>* gathers) const {
  const int f = config_.features_per_entry;
  const auto levels = static_cast<std::size_t>(config_.n_levels);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(config_.output_width(), coords.cols());
  std::vector<LevelGather> local;
  std::vector<LevelGather>& g = gathers ? *gathers : local;
  g.resize(levels * static_cast<std::size_t>(coords.cols()));
  for (Eigen::Index i = 0; i < coords.cols(); ++i) {
    std::span<LevelGather> pg(g.data() + static_cast<std::size_t>(i) * levels, levels);
    gather(coords.col(i), pg);
    double* col = out.col(i).data();
    for (int l = 0; l < config_.n_levels; ++l) {
      double* block = col + l * f;
      const LevelGather& lg = pg[static_cast<std::size_t>(l)];
      const double* base = params_.data() + offset(l) * static_cast<std::size_t>(f);
      for (int c = 0; c < 8; ++c) {
        const double* e = base + static_cast<std::size_t>(lg.slot[c]) * static_cast<std::size_t>(f);
        for (int j = 0; j < f; ++j) block[j] += lg.weight[c] * e[j];
      }
    }
    if (config_.include_coords) out.col(i).tail<3>() = coords.col(i);
  }
  return out;
}

std::vector<TableGradEntry> HashGridState::encode_gradient(const Eigen::Vector3d& v,
                                                           std::span<const double> upstream) const {
  const int f = config_.features_per_entry;
  if (upstream.size() < static_cast<std::size_t>(config_.n_levels * f)) {
    throw InputError("encode_gradient: upstream gradient narrower than the encoded table block");
  }
  std::vector<TableGradEntry> grads;
  if (std::all_of(upstream.begin(), upstream.end(), [](double u) { return u == 0.0; })) return grads;

  std::vector<LevelGather> g(static_cast<std::size_t>(config_.n_levels));
  gather(v, g);
  for (int l = 0; l < config_.n_levels; ++l) {
    const LevelGather& lg = g[static_cast<std::size_t>(l)];
    for (int c = 0; c < 8; ++c) {
      if (lg.weight[c] == 0.0) continue;
      // Corners can share a slot under hashing; merge them into one entry.
      auto it = std::find_if(grads.begin(), grads.end(),
                             [&](const TableGradEntry& e) { return e.level == l && e.slot == lg.slot[c]; });
      if (it == grads.end()) {
        grads.push_back({l, lg.slot[c], std::vector<double>(static_cast<std::size_t>(f), 0.0)});
        it = std::prev(grads.end());
      }
      for (int j = 0; j < f; ++j) {
        it->grad[static_cast<std::size_t>(j)] += lg.weight[c] * upstream[static_cast<std::size_t>(l * f + j)];
      }
    }
  }
  return grads;
}

void HashGridState::accumulate_gradient(std::span<const LevelGather> gathers, const Eigen::MatrixXd& upstream,
                                        std::span<double> grad) const {
  const int f = config_.features_per_entry;
  const auto levels = static_cast<std::size_t>(config_.n_levels);
  if (grad.size() != params_.size()) throw InputError("accumulate_gradient: buffer size mismatch");
  for (Eigen::Index i = 0; i < upstream.cols(); ++i) {
    const double* up = upstream.col(i).data();
    for (std::size_t l = 0; l < levels; ++l) {
      const LevelGather& lg = gathers[static_cast<std::size_t>(i) * levels + l];
      double* base = grad.data() + offset(static_cast<int>(l)) * static_cast<std::size_t>(f);
      const double* u = up + l * static_cast<std::size_t>(f);
      for (int c = 0; c < 8; ++c) {
        double* e = base + static_cast<std::size_t>(lg.slot[c]) * static_cast<std::size_t>(f);
        for (int j = 0; j < f; ++j) e[j] += lg.weight[c] * u[j];
      }
    }
  }
}

}  // namespace hashodf
