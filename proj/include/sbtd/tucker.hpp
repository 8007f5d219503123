#pragma once

#include "sbtd/tensor.hpp"

namespace sbtd {

/// Relative singular-value threshold separating numerical rank from noise.
inline constexpr double kDefaultRankTol = 1e-10;

/// Orthogonal Tucker factorization: orthonormal factors U_d (n_d x l_d),
/// all-orthogonal core of shape l_0 x ... x l_{D-1}, and per-mode singular
/// values sigma_j^d = ||e_j^T core_(d)||, sorted decreasingly.
struct TuckerFactorization {
    std::vector<Eigen::MatrixXd> factors;
    DenseTensor core;
    std::vector<Eigen::VectorXd> mode_singular_values;
};

/// Compact HOSVD.  U_d spans the column space of unfold(t, d); singular
/// values below rel_tol * sigma_max(t_(d)) are truncated.  The core is
/// (U_0^T,...,U_{D-1}^T) . t.  Deterministic: each singular vector is signed
/// so its largest-magnitude entry is positive (ties: lowest index).
TuckerFactorization compact_hosvd(const DenseTensor& t, double rel_tol = kDefaultRankTol);

/// Sequentially truncated HOSVD: like compact_hosvd but each mode is
/// compressed before the next one is processed (ascending mode order), so
/// successive SVDs act on progressively smaller cores.
TuckerFactorization minimal_compress(const DenseTensor& t, double rel_tol = kDefaultRankTol);

/// Reconstruction (U_0,...,U_{D-1}) . core.
DenseTensor reconstruct(const TuckerFactorization& f);

/// Orthonormal basis of the complement of col(u); [u u_perp] is orthogonal.
/// u must have orthonormal columns.  rows == cols yields a rows x 0 matrix.
Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& u);

/// Per-mode ranks of the unfoldings at relative threshold rel_tol.
std::vector<Index> multilinear_rank(const DenseTensor& t, double rel_tol = kDefaultRankTol);

}  // namespace sbtd
