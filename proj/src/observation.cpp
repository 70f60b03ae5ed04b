#include "hashodf/observation.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/field_model.hpp"

namespace hashodf {

ObservationModel ObservationModel::create(std::span<const Eigen::Vector3d> directions, const ShBasisSpec& spec,
                                          const MaternParams& gamma) {
  ObservationModel m{spec, eval_sh_basis(directions, spec), frt_matrix(spec), matern_prior_matrix(gamma, spec), {}};
  m.op = signal_operator(m.phi, m.frt);
  return m;
}

ObservationModel ObservationModel::select_rows(std::span<const int> rows) const {
  ObservationModel m{spec, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), phi.cols()), frt, prior, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= phi.rows()) throw IndexError("direction row out of range");
    m.phi.row(static_cast<Eigen::Index>(i)) = phi.row(rows[i]);
  }
  m.op = signal_operator(m.phi, m.frt);
  return m;
}

}  // namespace hashodf
