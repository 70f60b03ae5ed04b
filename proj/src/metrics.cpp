#include "hashodf/metrics.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/sh_basis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace hashodf {

double gfa(std::span<const double> coeffs, bool* zero_input) {
  if (coeffs.empty()) throw InputError("gfa: empty coefficient vector");
  double total = 0.0;
  for (double c : coeffs) total += c * c;
  if (zero_input) *zero_input = total == 0.0;
  if (total == 0.0) return 0.0;
  const double iso = coeffs[0] * coeffs[0] / total;
  return std::sqrt(std::max(0.0, 1.0 - iso));
}

Eigen::Vector3d TensorFit::rgb() const { return (e1.cwiseAbs() * fa).cwiseMax(0.0).cwiseMin(1.0); }

double fractional_anisotropy(const Eigen::Vector3d& ev) {
  const double norm2 = ev.squaredNorm();
  if (norm2 == 0.0) return 0.0;
  const double spread = (ev[0] - ev[1]) * (ev[0] - ev[1]) + (ev[1] - ev[2]) * (ev[1] - ev[2]) +
                        (ev[2] - ev[0]) * (ev[2] - ev[0]);
  return std::sqrt(0.5 * spread / norm2);
}

DtiFitter::DtiFitter(std::span<const Eigen::Vector3d> directions, double b_value) : b_(b_value) {
  const auto m = static_cast<Eigen::Index>(directions.size());
  if (m < 6) throw InputError("dti_fit needs at least 6 gradient directions, got " + std::to_string(m));
  if (!(b_value > 0.0)) throw InputError("dti_fit: b-value must be > 0");
  Eigen::MatrixXd design(m, 6);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = directions[static_cast<std::size_t>(i)];
    design.row(i) << g.x() * g.x(), g.y() * g.y(), g.z() * g.z(), 2 * g.x() * g.y(), 2 * g.x() * g.z(), 2 * g.y() * g.z();
  }
  design *= -b_value;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 6) throw InputError("dti_fit: gradient directions do not determine a tensor");
  pinv_ = qr.solve(Eigen::MatrixXd::Identity(m, m));
}

TensorFit DtiFitter::fit(std::span<const double> signals, double s0) const {
  if (static_cast<Eigen::Index>(signals.size()) != pinv_.cols()) throw InputError("dti_fit: signal length != M");
  if (!(s0 > 0.0)) throw InputError("dti_fit: s0 must be > 0");
  Eigen::VectorXd logs(pinv_.cols());
  for (Eigen::Index i = 0; i < logs.size(); ++i) {
    logs[i] = std::log(std::max(signals[static_cast<std::size_t>(i)], 1e-6 * s0) / s0);
  }
  const Eigen::Matrix<double, 6, 1> d = pinv_ * logs;
  TensorFit out;
  out.tensor << d[0], d[3], d[4], d[3], d[1], d[5], d[4], d[5], d[2];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(out.tensor);
  out.eigenvalues = eig.eigenvalues().reverse();
  out.e1 = eig.eigenvectors().col(2);
  for (int i = 0; i < 3; ++i) {
    if (out.e1[i] != 0.0) {
      if (out.e1[i] < 0.0) out.e1 = -out.e1;
      break;
    }
  }
  out.negative_eigenvalues = out.eigenvalues.minCoeff() < 0.0;
  out.fa = fractional_anisotropy(out.eigenvalues);
  return out;
}

TensorFit dti_fit(std::span<const double> signals, std::span<const Eigen::Vector3d> directions, double b_value,
                  double s0) {
  return DtiFitter(directions, b_value).fit(signals, s0);
}

PeakFinder::PeakFinder(SphereMesh mesh, const ShBasisSpec& spec) : mesh_(std::move(mesh)) {
  if (mesh_.vertices.size() < 642) throw InputError("peak mesh needs at least 642 vertices");
  if (mesh_.neighbors.size() != mesh_.vertices.size() || !mesh_.antipodally_symmetric()) {
    throw InputError("peak mesh must carry adjacency and be antipodally symmetric");
  }
  basis_ = eval_sh_basis(mesh_.vertices, spec);
}

std::vector<Eigen::Vector3d> PeakFinder::find(std::span<const double> coeffs, double min_separation_deg,
                                              double rel_threshold) const {
  if (static_cast<Eigen::Index>(coeffs.size()) != basis_.cols()) throw InputError("odf_peaks: coefficient length != K");
  const Eigen::VectorXd odf = basis_ * Eigen::Map<const Eigen::VectorXd>(coeffs.data(), basis_.cols());
  const double top = odf.maxCoeff();
  std::vector<int> candidates;
  std::vector<char> taken(mesh_.vertices.size(), 0);
  for (std::size_t i = 0; i < mesh_.vertices.size(); ++i) {
    const double v = odf[static_cast<Eigen::Index>(i)];
    if (taken[i] || !(v > rel_threshold * top)) continue;
    bool strict = true;
    for (int n : mesh_.neighbors[i]) {
      if (!(v > odf[n])) {
        strict = false;
        break;
      }
    }
    if (!strict) continue;
    candidates.push_back(static_cast<int>(i));
    taken[static_cast<std::size_t>(mesh_.antipode[i])] = 1;
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return odf[a] > odf[b]; });
  std::vector<Eigen::Vector3d> peaks;
  for (int c : candidates) {
    const Eigen::Vector3d& p = mesh_.vertices[static_cast<std::size_t>(c)];
    const bool separated = std::all_of(peaks.begin(), peaks.end(),
                                       [&](const Eigen::Vector3d& q) { return axis_angle_deg(p, q) >= min_separation_deg; });
    if (separated) peaks.push_back(p.normalized());
  }
  return peaks;
}

std::vector<Eigen::Vector3d> odf_peaks(std::span<const double> coeffs, const SphereMesh& mesh, const ShBasisSpec& spec,
                                       double min_separation_deg, double rel_threshold) {
  return PeakFinder(mesh, spec).find(coeffs, min_separation_deg, rel_threshold);
}

namespace {

void check_mask(const Volume& v, const Mask& mask) {
  if (mask.size() != v.voxels()) throw InputError("mask size does not match volume grid");
}

}  // namespace

Volume gfa_volume(const Volume& coeffs, const Mask& mask) {
  check_mask(coeffs, mask);
  Volume out = coeffs.like(1);
  std::vector<double> c(static_cast<std::size_t>(coeffs.channels()));
  for (std::size_t v = 0; v < coeffs.voxels(); ++v) {
    if (!mask[v]) continue;
    for (int k = 0; k < coeffs.channels(); ++k) c[static_cast<std::size_t>(k)] = coeffs.at(v, k);
    out.at(v) = gfa(c);
  }
  return out;
}

namespace {

DtiMaps fit_maps(const Volume& grid, const Mask& mask, const DtiFitter& fitter,
                 const std::function<void(std::size_t, std::vector<double>&)>& signal_of, const std::vector<double>& s0) {
  DtiMaps maps{grid.like(1), grid.like(3)};
  std::vector<double> y(static_cast<std::size_t>(fitter.directions()));
  for (std::size_t v = 0; v < grid.voxels(); ++v) {
    if (!mask[v]) continue;
    signal_of(v, y);
    const double ref = s0.empty() ? 1.0 : s0[v];
    if (!(ref > 0.0)) continue;
    const TensorFit fit = fitter.fit(y, ref);
    maps.fa.at(v) = fit.fa;
    const Eigen::Vector3d rgb = fit.rgb();
    for (int c = 0; c < 3; ++c) maps.rgb.at(v, c) = rgb[c];
  }
  return maps;
}

}  // namespace

DtiMaps dti_maps_from_coefficients(const Volume& coeffs, const Mask& mask, std::span<const Eigen::Vector3d> directions,
                                   double b_value) {
  check_mask(coeffs, mask);
  const ShBasisSpec spec = ShBasisSpec::from_size(coeffs.channels());
  const Eigen::MatrixXd op = eval_sh_basis(directions, spec) * frt_matrix(spec).asDiagonal();
  const DtiFitter fitter(directions, b_value);
  Eigen::VectorXd c(coeffs.channels());
  return fit_maps(
      coeffs, mask, fitter,
      [&](std::size_t v, std::vector<double>& y) {
        for (int k = 0; k < coeffs.channels(); ++k) c[k] = coeffs.at(v, k);
        Eigen::Map<Eigen::VectorXd>(y.data(), op.rows()) = op * c;
      },
      {});
}

DtiMaps dti_maps_from_signal(const Volume& dwi, const Mask& mask, std::span<const Eigen::Vector3d> directions,
                             double b_value, const std::vector<double>& s0) {
  check_mask(dwi, mask);
  if (dwi.channels() != static_cast<int>(directions.size())) throw InputError("DWI channel count != direction count");
  if (!s0.empty() && s0.size() != dwi.voxels()) throw InputError("s0 map size mismatch");
  const DtiFitter fitter(directions, b_value);
  return fit_maps(
      dwi, mask, fitter,
      [&](std::size_t v, std::vector<double>& y) {
        for (int m = 0; m < dwi.channels(); ++m) y[static_cast<std::size_t>(m)] = dwi.at(v, m);
      },
      s0);
}

}  // namespace hashodf
