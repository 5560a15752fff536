#ifndef JUMPFILTER_POSTERIOR_HPP
#define JUMPFILTER_POSTERIOR_HPP

#include <Eigen/Dense>
#include <vector>

#include "jumpfilter/errors.hpp"
#include "jumpfilter/simulate.hpp"

namespace jumpfilter {

/// Current-value marginal law on the grid nodes: row i is a probability
/// vector over the finite label set at node time i*dt. The common exchange
/// format between the filter and the reference posteriors.
struct MarginalSeries {
  Grid grid;
  Eigen::MatrixXd probs;  // (n_cells + 1) x n_labels
};

// Per-node total variation distance between two marginal series. Grids and
// label counts must agree.
inline std::vector<double> total_variation_series(const MarginalSeries& a,
                                                  const MarginalSeries& b) {
  if (!(a.grid == b.grid) || a.probs.cols() != b.probs.cols() ||
      a.probs.rows() != b.probs.rows())
    throw InvalidArgument("marginal series disagree on grid or label count");
  std::vector<double> tv(static_cast<std::size_t>(a.probs.rows()));
  for (Eigen::Index i = 0; i < a.probs.rows(); ++i)
    tv[static_cast<std::size_t>(i)] = 0.5 * (a.probs.row(i) - b.probs.row(i)).cwiseAbs().sum();
  return tv;
}

inline double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace jumpfilter

#endif
