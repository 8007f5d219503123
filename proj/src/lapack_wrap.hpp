#pragma once

#include <Eigen/Dense>

namespace sbtd::detail {

/// All singular values of m, descending.  Destroys the contents of m.
Eigen::VectorXd singular_values_inplace(Eigen::MatrixXd& m);

inline Eigen::VectorXd singular_values(Eigen::MatrixXd m) { return singular_values_inplace(m); }

/// QR of the first `rows` rows of `buf` (column-major, lda = buf.rows());
/// returns the min(rows, cols) x cols upper-triangular R factor.
Eigen::MatrixXd qr_r_factor(Eigen::MatrixXd& buf, Eigen::Index rows);

}  // namespace sbtd::detail
