#include "hashodf/posterior.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/log.hpp"
#include "hashodf/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace hashodf {

BasisStatistics BasisStatistics::from_basis(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& y) {
  if (xi.cols() != y.cols()) throw InputError("basis and signal column counts differ");
  BasisStatistics s;
  s.gram = xi * xi.transpose();
  s.cross = y * xi.transpose();
  s.count = xi.cols();
  return s;
}

BasisStatistics BasisStatistics::from_model(const FieldModel& model, const Eigen::Matrix3Xd& coords,
                                            const Eigen::MatrixXd& y) {
  if (coords.cols() != y.cols()) throw InputError("coordinate and signal column counts differ");
  const int r = model.rank();
  BasisStatistics s{Eigen::MatrixXd::Zero(r, r), Eigen::MatrixXd::Zero(y.rows(), r), coords.cols()};
  constexpr Eigen::Index chunk = 4096;
  for (Eigen::Index start = 0; start < coords.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, coords.cols() - start);
    const Eigen::MatrixXd xi = model.basis_columns(coords.middleCols(start, n));
    s.gram.selfadjointView<Eigen::Lower>().rankUpdate(xi);
    s.cross.noalias() += y.middleCols(start, n) * xi.transpose();
  }
  s.gram.triangularView<Eigen::StrictlyUpper>() = s.gram.transpose();
  return s;
}

namespace {

void check_variances(double sigma_e2, double sigma_w2) {
  if (!(sigma_e2 > 0.0) || !(sigma_w2 > 0.0) || !std::isfinite(sigma_e2) || !std::isfinite(sigma_w2)) {
    throw InputError("posterior variances must be finite and > 0");
  }
}

}  // namespace

Eigen::MatrixXd assemble_precision_dense(const Eigen::MatrixXd& gram, const ObservationModel& obs, double sigma_e2,
                                         double sigma_w2) {
  check_variances(sigma_e2, sigma_w2);
  if (gram.rows() != gram.cols()) throw InputError("gram matrix must be square");
  const Eigen::Index r = gram.rows();
  const Eigen::Index k = obs.basis_size();
  const Eigen::MatrixXd ata = obs.op.transpose() * obs.op;
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(k * r, k * r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      lambda.block(i * k, j * k, k, k) = (gram(i, j) / sigma_e2) * ata;
    }
    lambda.block(i * k, i * k, k, k).diagonal() += obs.prior / sigma_w2;
  }
  return lambda;
}

Eigen::MatrixXd precision_rhs(const Eigen::MatrixXd& cross, const ObservationModel& obs, double sigma_e2) {
  if (cross.rows() != obs.directions()) throw InputError("cross statistics row count != M");
  return obs.op.transpose() * cross / sigma_e2;
}

PosteriorModel::PosteriorModel(const BasisStatistics& stats, const ObservationModel& obs, double sigma_e2,
                               double sigma_w2)
    : sigma_e2_(sigma_e2), sigma_w2_(sigma_w2) {
  check_variances(sigma_e2, sigma_w2);
  const Eigen::Index r = stats.gram.rows();
  const Eigen::Index k = obs.basis_size();
  if (stats.gram.cols() != r || stats.cross.cols() != r) throw InputError("statistics shapes inconsistent");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(stats.gram);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of Xi Xi^T failed");
  u_ = eig.eigenvectors();
  // Xi Xi^T is PSD; rounding can leave tiny negative eigenvalues.
  s_ = eig.eigenvalues().cwiseMax(0.0);

  const Eigen::MatrixXd ata = obs.op.transpose() * obs.op;
  const Eigen::MatrixXd prior = (obs.prior / sigma_w2).asDiagonal();
  double trace = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) trace += prior.trace() + s_[j] / sigma_e2 * ata.trace();
  const double jitter = 1e-10 * trace / static_cast<double>(k * r);

  blocks_.reserve(static_cast<std::size_t>(r));
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::MatrixXd block = prior + (s_[j] / sigma_e2) * ata;
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) {
      logger().warn("posterior block {} not positive definite; adding jitter {:.3e}", j, jitter);
      ++jittered_;
      block.diagonal().array() += jitter;
      llt.compute(block);
      if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> be(block, Eigen::EigenvaluesOnly);
        throw NumericError("posterior precision block " + std::to_string(j) +
                           " is singular after jitter (eigenvalue range " + std::to_string(be.eigenvalues().minCoeff()) +
                           " .. " + std::to_string(be.eigenvalues().maxCoeff()) + ")");
      }
    }
    blocks_.push_back(std::move(llt));
  }

  const Eigen::MatrixXd rotated = precision_rhs(stats.cross, obs, sigma_e2) * u_;
  Eigen::MatrixXd solved(k, r);
  for (Eigen::Index j = 0; j < r; ++j) solved.col(j) = blocks_[static_cast<std::size_t>(j)].solve(rotated.col(j));
  mean_ = solved * u_.transpose();
  if (!mean_.allFinite()) {
    const double cond = (prior.diagonal().maxCoeff() + s_.maxCoeff() / sigma_e2 * ata.diagonal().maxCoeff()) /
                        std::max(prior.diagonal().minCoeff(), 1e-300);
    throw NumericError("posterior mean solve produced non-finite values (rough condition estimate " +
                       std::to_string(cond) + ")");
  }
}

Eigen::VectorXd PosteriorModel::mean_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(mean_.data(), mean_.size());
}

Eigen::MatrixXd PosteriorModel::marginal_variances() const {
  const Eigen::Index k = basis_size();
  const Eigen::Index r = rank();
  Eigen::MatrixXd block_diag(k, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const Eigen::MatrixXd inv = blocks_[static_cast<std::size_t>(j)].solve(Eigen::MatrixXd::Identity(k, k));
    block_diag.col(j) = inv.diagonal();
  }
  return block_diag * u_.cwiseAbs2().transpose();
}

Eigen::MatrixXd PosteriorModel::precision() const {
  const Eigen::Index k = basis_size();
  const Eigen::Index r = rank();
  Eigen::MatrixXd rot = Eigen::MatrixXd::Zero(k * r, k * r);
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(k * r, k * r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const auto& llt = blocks_[static_cast<std::size_t>(j)];
    diag.block(j * k, j * k, k, k) = llt.reconstructedMatrix();
    for (Eigen::Index i = 0; i < r; ++i) rot.block(i * k, j * k, k, k).diagonal().setConstant(u_(i, j));
  }
  return rot * diag * rot.transpose();
}

Eigen::MatrixXd PosteriorModel::covariance() const {
  const Eigen::Index k = basis_size();
  const Eigen::Index r = rank();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k * r, k * r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const Eigen::MatrixXd inv = blocks_[static_cast<std::size_t>(j)].solve(Eigen::MatrixXd::Identity(k, k));
    for (Eigen::Index a = 0; a < r; ++a) {
      for (Eigen::Index b = 0; b < r; ++b) cov.block(a * k, b * k, k, k) += (u_(a, j) * u_(b, j)) * inv;
    }
  }
  return cov;
}

std::vector<Eigen::MatrixXd> PosteriorModel::sample(int n_samples, std::uint64_t seed) const {
  if (n_samples < 1) throw InputError("n_samples must be >= 1");
  const Eigen::Index k = basis_size();
  const Eigen::Index r = rank();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  Eigen::MatrixXd z(k, r);
  for (int s = 0; s < n_samples; ++s) {
    for (Eigen::Index j = 0; j < r; ++j) {
      for (Eigen::Index i = 0; i < k; ++i) z(i, j) = normal(rng);
      blocks_[static_cast<std::size_t>(j)].matrixU().solveInPlace(z.col(j));
    }
    out.push_back(mean_ + z * u_.transpose());
  }
  return out;
}

UncertaintyMap gfa_uncertainty_map(const std::vector<Eigen::MatrixXd>& samples, const FieldModel& model,
                                   const Eigen::Matrix3Xd& coords) {
  if (coords.cols() == 0) throw InputError("gfa_uncertainty_map: empty voxel list");
  if (samples.size() < 2) throw InputError("gfa_uncertainty_map: needs at least two samples");
  for (const auto& w : samples) {
    if (w.rows() != model.basis_size() || w.cols() != model.rank()) throw InputError("sample shape != W shape");
  }
  const Eigen::Index n = coords.cols();
  UncertaintyMap map;
  map.samples = static_cast<int>(samples.size());
  map.ratio.assign(static_cast<std::size_t>(n), 0.0);
  map.mean_gfa.assign(static_cast<std::size_t>(n), 0.0);
  map.std_gfa.assign(static_cast<std::size_t>(n), 0.0);

  constexpr Eigen::Index chunk = 2048;
  std::vector<double> m2(static_cast<std::size_t>(chunk));
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    const Eigen::MatrixXd xi = model.basis_columns(coords.middleCols(start, len));
    std::fill(m2.begin(), m2.end(), 0.0);
    double count = 0.0;
    for (const auto& w : samples) {
      const Eigen::MatrixXd c = w * xi;
      count += 1.0;
      for (Eigen::Index i = 0; i < len; ++i) {
        const double g = gfa(std::span<const double>(c.col(i).data(), static_cast<std::size_t>(c.rows())));
        auto& mean = map.mean_gfa[static_cast<std::size_t>(start + i)];
        const double delta = g - mean;
        mean += delta / count;
        m2[static_cast<std::size_t>(i)] += delta * (g - mean);
      }
    }
    for (Eigen::Index i = 0; i < len; ++i) {
      const auto v = static_cast<std::size_t>(start + i);
      map.std_gfa[v] = std::sqrt(m2[static_cast<std::size_t>(i)] / (count - 1.0));
      map.ratio[v] = map.mean_gfa[v] > 0.0 ? map.std_gfa[v] / map.mean_gfa[v] : kUndefinedRatio;
    }
  }
  return map;
}

}  // namespace hashodf
