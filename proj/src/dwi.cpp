#include "hashodf/dwi.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/log.hpp"
#include "hashodf/nifti.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace hashodf {

namespace {

std::vector<std::vector<double>> read_rows(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": not a number: '" + tok + "'");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

GradientTable load_gradients(const std::filesystem::path& bvec, const std::filesystem::path& bval) {
  auto vec_rows = read_rows(bvec);
  const auto val_rows = read_rows(bval);
  std::vector<double> bvals;
  for (const auto& r : val_rows) bvals.insert(bvals.end(), r.begin(), r.end());
  const std::size_t m = bvals.size();
  if (m == 0) throw FormatError(bval.string() + ": empty");

  std::vector<Eigen::Vector3d> vectors;
  if (vec_rows.size() == 3 && vec_rows[0].size() == m && vec_rows[1].size() == m && vec_rows[2].size() == m) {
    for (std::size_t i = 0; i < m; ++i) vectors.emplace_back(vec_rows[0][i], vec_rows[1][i], vec_rows[2][i]);
  } else if (vec_rows.size() == m && std::all_of(vec_rows.begin(), vec_rows.end(), [](const auto& r) { return r.size() == 3; })) {
    for (const auto& r : vec_rows) vectors.emplace_back(r[0], r[1], r[2]);
  } else {
    throw FormatError(bvec.string() + ": expected 3 rows of " + std::to_string(m) + " values to match " + bval.string());
  }

  GradientTable table;
  std::vector<double> weighted_b;
  for (std::size_t i = 0; i < m; ++i) {
    const double norm = vectors[i].norm();
    if (!std::isfinite(norm) || !std::isfinite(bvals[i])) throw FormatError("non-finite gradient entry " + std::to_string(i));
    if (norm == 0.0 || bvals[i] < 1.0) {
      table.b0_index.push_back(static_cast<int>(i));
      continue;
    }
    table.directions.push_back(vectors[i] / norm);
    table.dwi_index.push_back(static_cast<int>(i));
    weighted_b.push_back(bvals[i]);
  }
  if (table.directions.size() < 6) {
    throw InputError("gradient table has " + std::to_string(table.directions.size()) + " weighted directions; need >= 6");
  }
  const auto [lo, hi] = std::minmax_element(weighted_b.begin(), weighted_b.end());
  double mean = 0.0;
  for (double b : weighted_b) mean += b;
  mean /= static_cast<double>(weighted_b.size());
  if ((*hi - *lo) > 0.05 * mean) {
    throw UnsupportedError("multi-shell acquisition (b from " + std::to_string(*lo) + " to " + std::to_string(*hi) +
                           "); only single-shell data is supported");
  }
  table.b_value = mean;
  return table;
}

void save_gradients(const GradientTable& table, const std::filesystem::path& bvec, const std::filesystem::path& bval) {
  std::ofstream v(bvec), b(bval);
  if (!v || !b) throw FormatError("cannot write gradient files");
  v << std::setprecision(17);
  for (int axis = 0; axis < 3; ++axis) {
    for (int i = 0; i < table.size(); ++i) v << (i ? " " : "") << table.directions[static_cast<std::size_t>(i)][axis];
    v << '\n';
  }
  for (int i = 0; i < table.size(); ++i) b << (i ? " " : "") << table.b_value;
  b << '\n';
}

std::size_t DwiVolume::masked_count() const { return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; })); }

Mask threshold_mask(const DwiVolume& dwi, double fraction) {
  const std::size_t n = dwi.signal.voxels();
  std::vector<double> ref(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (!dwi.s0.empty()) {
      ref[v] = dwi.s0[v];
    } else {
      double sum = 0.0;
      for (int c = 0; c < dwi.signal.channels(); ++c) sum += dwi.signal.at(v, c);
      ref[v] = sum / dwi.signal.channels();
    }
    if (!std::isfinite(ref[v])) ref[v] = 0.0;
  }
  std::vector<double> sorted = ref;
  std::sort(sorted.begin(), sorted.end());
  const double p99 = sorted[static_cast<std::size_t>(0.99 * static_cast<double>(n - 1))];
  Mask mask(n, 0);
  for (std::size_t v = 0; v < n; ++v) mask[v] = ref[v] > fraction * p99 ? 1 : 0;
  return mask;
}

DwiVolume make_dwi(const Volume& image, const GradientTable& table, std::optional<Mask> mask) {
  const int total = static_cast<int>(table.dwi_index.size() + table.b0_index.size());
  DwiVolume dwi;
  dwi.gradients = table;
  if (image.channels() != total && !(table.b0_index.empty() && image.channels() == table.size())) {
    throw FormatError("image has " + std::to_string(image.channels()) + " volumes, gradient table has " +
                      std::to_string(total));
  }
  dwi.signal = image.like(table.size());
  const std::size_t n = image.voxels();
  if (!table.b0_index.empty()) {
    dwi.s0.assign(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (int b : table.b0_index) s += image.at(v, b);
      dwi.s0[v] = s / static_cast<double>(table.b0_index.size());
    }
  }
  for (int i = 0; i < table.size(); ++i) {
    const int src = table.dwi_index.empty() ? i : table.dwi_index[static_cast<std::size_t>(i)];
    for (std::size_t v = 0; v < n; ++v) {
      double y = image.at(v, src);
      if (!dwi.s0.empty()) y = dwi.s0[v] > 0.0 ? y / dwi.s0[v] : 0.0;
      dwi.signal.at(v, i) = y;
    }
  }
  if (mask) {
    if (mask->size() != n) throw FormatError("mask grid does not match the DWI grid");
    dwi.mask = std::move(*mask);
  } else {
    logger().warn("no mask given; using signal-threshold mask");
    dwi.mask = threshold_mask(dwi);
  }
  if (!dwi.s0.empty()) {
    for (std::size_t v = 0; v < n; ++v) {
      if (dwi.mask[v] && !(dwi.s0[v] > 0.0)) dwi.mask[v] = 0;
    }
  }
  std::size_t clamped = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (!dwi.mask[v]) continue;
    for (int c = 0; c < dwi.signal.channels(); ++c) {
      double& y = dwi.signal.at(v, c);
      if (!std::isfinite(y)) throw FormatError("non-finite signal inside the mask");
      if (y < 0.0) {
        y = 0.0;
        ++clamped;
      }
    }
  }
  if (clamped) logger().warn("clamped {} negative masked signal values to 0", clamped);
  if (dwi.masked_count() == 0) throw InputError("mask selects no voxels");
  return dwi;
}

Mask load_mask(const std::filesystem::path& path, const Volume& grid) {
  const NiftiImage img = load_nifti(path);
  if (!img.volume.same_grid(grid) || img.volume.channels() != 1) throw FormatError("mask grid does not match the DWI grid");
  Mask mask(img.volume.voxels());
  for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = img.volume.at(v) != 0.0 ? 1 : 0;
  return mask;
}

DwiVolume load_dwi(const std::filesystem::path& image, const std::filesystem::path& bvec,
                   const std::filesystem::path& bval, const std::optional<std::filesystem::path>& mask) {
  const NiftiImage img = load_nifti(image);
  const GradientTable table = load_gradients(bvec, bval);
  std::optional<Mask> m;
  if (mask) m = load_mask(*mask, img.volume);
  return make_dwi(img.volume, table, std::move(m));
}

TrainingSet training_set(const DwiVolume& dwi, std::vector<std::size_t>* voxels) {
  std::vector<std::size_t> index;
  TrainingSet set;
  set.coords = masked_coordinates(dwi.signal.dims, dwi.mask, &index);
  set.signals.resize(dwi.directions(), static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (int m = 0; m < dwi.directions(); ++m) set.signals(m, static_cast<Eigen::Index>(i)) = dwi.signal.at(index[i], m);
  }
  if (voxels) *voxels = std::move(index);
  return set;
}

}  // namespace hashodf
