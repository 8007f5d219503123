#pragma once

#include "sbtd/condition.hpp"
#include "sbtd/model.hpp"

#include <cstdint>
#include <random>

namespace sbtd {

/// Parameters of the diverging two-term BTD family
///   G_N = (N kron_d (B_d + A_d/N) - N kron_d B_d) C,
/// with A_d standard normal, B_d the Q factor of a normal draw, and a random
/// orthonormal inflation to the ambient dimensions.
struct IllCondParams {
    double divergence = 10.0;                       // N, >= 1
    std::vector<Index> core_dims{2, 2, 1};          // shape of C
    std::vector<Index> block_dims{4, 4, 2};         // rows of A_d / B_d
    std::vector<Index> inflated_dims{60, 40, 40};
    std::uint64_t seed = 0;
};

struct IllCondInstance {
    Sbtd core;      // over block_dims
    Sbtd inflated;  // over inflated_dims, same cores
};

/// Deterministic under seed; redraws on degenerate draws (rank-deficient C
/// or B_d + A_d/N) and fails after too many retries.
IllCondInstance gen_illcond_btd(const IllCondParams& p);

struct TermSpec {
    CoreStructure structure = CoreStructure::FullRank;
    std::vector<Index> ranks;
};

/// Random decomposition with independent orthonormal factor blocks and
/// standard-normal cores, redrawn until every invariant of validate() holds.
Sbtd gen_random_sbtd(const std::vector<Index>& dims, const std::vector<TermSpec>& terms,
                     std::uint64_t seed);

/// Applies one random orthonormal Q_d per mode to every term's factors
/// (subspace-constrained inflation); cores are untouched.
Sbtd inflate_sbtd(const Sbtd& s, const std::vector<Index>& inflated_dims, std::uint64_t seed);

struct ProbeResult {
    Index samples = 0;
    double max_ratio = 0.0;
    double mean_ratio = 0.0;
    double kappa_ref = 0.0;
    double singular_ratio = 0.0;  // ratio at the sigma_min left singular vector
};

/// Monte-Carlo check of the first-order amplification factor: for random
/// directions delta in the Terracini column span, the least-squares
/// coefficient ratio ||x|| / ||delta|| never exceeds kappa; the smallest
/// left singular direction attains it.
ProbeResult perturbation_probe(const Sbtd& s, Index samples, std::uint64_t seed);

struct FitResult {
    Sbtd fitted;
    Index iterations = 0;
    std::vector<double> residual_history;  // accepted-step residuals, first entry = initial
};

/// Damped Gauss-Newton (Levenberg-Marquardt) on all factor and core entries,
/// minimizing 0.5 * ||target - evaluate_sum||^2.  Stops when the residual
/// norm reaches res_tol or after max_iter accepted steps.
FitResult fit_btd(const DenseTensor& target, const Sbtd& init, Index max_iter, double res_tol);

/// Residual and Jacobian of the fit objective at the given decomposition;
/// exposed for derivative checks.
Eigen::VectorXd fit_residual(const DenseTensor& target, const Sbtd& s);
Eigen::MatrixXd fit_jacobian(const Sbtd& s);

/// forward_error(truth, fitted) / (kappa(truth) * ||target - sum(fitted)||),
/// guarded to 0 when the forward error vanishes.  Requires the residual to
/// pass the <= 1e-8 filter.
double error_bound_check(const Sbtd& truth, const Sbtd& fitted, const DenseTensor& target);

namespace detail {
Eigen::MatrixXd randn_matrix(std::mt19937_64& rng, Index rows, Index cols);
Eigen::MatrixXd random_orthonormal(std::mt19937_64& rng, Index rows, Index cols);
DenseTensor randn_tensor(std::mt19937_64& rng, const std::vector<Index>& dims);
}  // namespace detail

}  // namespace sbtd
