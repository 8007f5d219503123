#pragma once

#include "sbtd/tensor.hpp"
#include "sbtd/tucker.hpp"

#include <string>

namespace sbtd {

/// Core manifold tag.  FullRank: the open set of full-multilinear-rank
/// tensors (tangent basis = canonical basis of the core space).  Rank1:
/// scalar core, all l_d = 1 (tangent basis = {1}).
enum class CoreStructure { FullRank, Rank1 };

/// One summand (U_0,...,U_{D-1}) . core with full-column-rank factors and a
/// full-multilinear-rank core.
struct TuckerTerm {
    std::vector<Eigen::MatrixXd> factors;
    DenseTensor core;
    CoreStructure structure = CoreStructure::FullRank;

    std::vector<Index> core_dims() const { return core.dims(); }
};

/// Ordered sum of Tucker terms sharing ambient dimensions.
struct Sbtd {
    std::vector<Index> ambient_dims;
    std::vector<TuckerTerm> terms;

    Index order() const { return static_cast<Index>(ambient_dims.size()); }
    Index num_terms() const { return static_cast<Index>(terms.size()); }
};

DenseTensor evaluate_term(const TuckerTerm& term);
DenseTensor evaluate_sum(const Sbtd& s);

struct TermValidation {
    std::vector<Index> factor_ranks;
    std::vector<Index> core_rank;
    std::vector<std::string> failures;
    bool ok = true;
};

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> failures;       // decomposition-level problems
    std::vector<TermValidation> terms;
    std::string describe() const;            // empty when ok
};

/// Checks every type invariant (factor column ranks, core multilinear ranks,
/// Rank1 constraints, shape agreement, finiteness).  Never mutates or throws;
/// all problems are collected in the report.
ValidationReport validate(const Sbtd& s, double rel_tol = kDefaultRankTol);

/// Equivalent term (same tensor within 1e-12 relative) with orthonormal
/// factors and all-orthogonal core; the structure tag is preserved.  Computed
/// at core scale: QR of each factor, then the HOSVD of the small transformed
/// core is folded into the factors.
TuckerTerm canonicalize_hosvd(const TuckerTerm& term);

/// Orthonormal basis of the core structure's tangent space at `core`.
/// FullRank: all prod(l_d) unit tensors in linear storage order.
/// Rank1: the single scalar tensor 1.
std::vector<DenseTensor> core_tangent_basis(CoreStructure structure, const DenseTensor& core);

/// Permutation-minimized distance min_pi sqrt(sum_r ||A_r - B_pi(r)||^2)
/// between the evaluated term tensors; the assignment is solved exactly.
double forward_error(const Sbtd& a, const Sbtd& b);

/// Exact minimum-cost assignment of an n x n cost matrix; returns the column
/// assigned to each row.
std::vector<Index> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace sbtd
