#include "hashodf/shls.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/log.hpp"

#include <Eigen/Eigenvalues>

#include <regex>

namespace hashodf {

ShlsFitter::ShlsFitter(std::span<const Eigen::Vector3d> directions, const ShBasisSpec& spec, double lambda_sh)
    : spec_(spec) {
  if (!(lambda_sh >= 0.0)) throw ConfigError("lambda_sh must be >= 0");
  const auto m = static_cast<int>(directions.size());
  if (m < spec.size()) {
    logger().warn("SHLS with {} directions for {} coefficients; the fit relies on the penalty", m, spec.size());
  }
  const Eigen::MatrixXd phi = eval_sh_basis(directions, spec);
  Eigen::MatrixXd normal = phi.transpose() * phi;
  // Scale of the data term alone, so a large penalty does not read as ill conditioning.
  const double top = normal.diagonal().maxCoeff();
  normal.diagonal() += lambda_sh * laplace_beltrami_penalty(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * top)) {
    throw InputError("SHLS normal matrix is singular (" + std::to_string(m) + " directions, K = " +
                     std::to_string(spec.size()) + "); use lambda_sh > 0");
  }
  const Eigen::VectorXd frt_inv = frt_matrix(spec).cwiseInverse();
  solve_ = frt_inv.asDiagonal() * normal.ldlt().solve(phi.transpose());
}

Eigen::MatrixXd ShlsFitter::fit(const Eigen::MatrixXd& signals) const {
  if (signals.rows() != solve_.cols()) throw InputError("SHLS: signal length != direction count");
  return solve_ * signals;
}

Volume shls_fit(const DwiVolume& dwi, const ShBasisSpec& spec, double lambda_sh) {
  const ShlsFitter fitter(dwi.gradients.directions, spec, lambda_sh);
  std::vector<std::size_t> voxels;
  const TrainingSet set = training_set(dwi, &voxels);
  const Eigen::MatrixXd c = fitter.fit(set.signals);
  Volume out = dwi.signal.like(spec.size());
  out.intent_name = coefficient_tag(spec);
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    for (int k = 0; k < spec.size(); ++k) out.at(voxels[i], k) = c(k, static_cast<Eigen::Index>(i));
  }
  return out;
}

std::string coefficient_tag(const ShBasisSpec& spec) { return "l" + std::to_string(spec.lmax()) + ":desc07:frt1"; }

int parse_coefficient_tag(const std::string& tag) {
  static const std::regex re(R"(l(\d+):desc07:frt1)");
  std::smatch m;
  if (!std::regex_match(tag, m, re)) throw ConfigError("not an ODF coefficient volume (intent_name '" + tag + "')");
  return std::stoi(m[1].str());
}

}  // namespace hashodf
