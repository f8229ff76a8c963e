#ifndef DHRB_ASSIGNMENT_HPP
#define DHRB_ASSIGNMENT_HPP

#include <Eigen/Core>

#include <vector>

namespace dhrb {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with row/column potentials, O(n^3)). Returns column index for each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace dhrb

#endif  // DHRB_ASSIGNMENT_HPP
