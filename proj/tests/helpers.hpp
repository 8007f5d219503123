// Shared instance builders for the unit and acceptance suites.
#pragma once

#include "sbtd/experiments.hpp"
#include "sbtd/model.hpp"

#include <random>

namespace testutil {

using namespace sbtd;

inline DenseTensor randn_tensor(std::mt19937_64& rng, const std::vector<Index>& dims) {
    return sbtd::detail::randn_tensor(rng, dims);
}

inline Eigen::MatrixXd randn(std::mt19937_64& rng, Index r, Index c) {
    return sbtd::detail::randn_matrix(rng, r, c);
}

inline Eigen::MatrixXd orthonormal(std::mt19937_64& rng, Index r, Index c) {
    return sbtd::detail::random_orthonormal(rng, r, c);
}

/// Pairwise-orthogonal (odeco-like) instance: one orthogonal matrix per mode,
/// columns partitioned across the terms.  Requires sum_r l_d^r <= n_d.
inline Sbtd gen_odeco_sbtd(const std::vector<Index>& dims, const std::vector<TermSpec>& specs,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const size_t D = dims.size();
    std::vector<Eigen::MatrixXd> pool(D);
    for (size_t d = 0; d < D; ++d) pool[d] = orthonormal(rng, dims[d], dims[d]);
    std::vector<Index> used(D, 0);
    Sbtd s;
    s.ambient_dims = dims;
    for (const TermSpec& spec : specs) {
        TuckerTerm term;
        term.structure = spec.structure;
        for (size_t d = 0; d < D; ++d) {
            const Index l = spec.ranks[d];
            if (used[d] + l > dims[d])
                throw std::invalid_argument("gen_odeco_sbtd: not enough room for orthogonal blocks");
            term.factors.push_back(pool[d].middleCols(used[d], l));
            used[d] += l;
        }
        for (int attempt = 0;; ++attempt) {
            term.core = randn_tensor(rng, spec.ranks);
            const auto r = multilinear_rank(term.core);
            bool full = true;
            for (size_t d = 0; d < D; ++d) full = full && r[d] == spec.ranks[d];
            if (full || attempt > 50) break;
        }
        s.terms.push_back(std::move(term));
    }
    return s;
}

/// Two FullRank terms sharing modes 1..D-1 and the same core, with orthogonal
/// mode-0 subspaces: ill-posed, yet the BTD lower bound evaluates to 1.
inline Sbtd gen_shared_modes_illposed(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<Index> dims{6, 4, 3};
    const std::vector<Index> ranks{2, 2, 1};
    Eigen::MatrixXd u1v1 = orthonormal(rng, 6, 4);
    std::vector<Eigen::MatrixXd> shared{Eigen::MatrixXd(), orthonormal(rng, 4, 2),
                                        orthonormal(rng, 3, 1)};
    DenseTensor core = randn_tensor(rng, ranks);
    Sbtd s;
    s.ambient_dims = dims;
    TuckerTerm a{{u1v1.leftCols(2), shared[1], shared[2]}, core, CoreStructure::FullRank};
    TuckerTerm b{{u1v1.rightCols(2), shared[1], shared[2]}, core, CoreStructure::FullRank};
    s.terms = {a, b};
    return s;
}

/// Two terms with identical factor subspaces but different cores: the
/// Kronecker blocks coincide, so the decomposition is ill-posed.
inline Sbtd gen_shared_kernel_illposed(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<Index> dims{5, 4, 3};
    const std::vector<Index> ranks{2, 2, 1};
    std::vector<Eigen::MatrixXd> factors{orthonormal(rng, 5, 2), orthonormal(rng, 4, 2),
                                         orthonormal(rng, 3, 1)};
    Sbtd s;
    s.ambient_dims = dims;
    s.terms = {TuckerTerm{factors, randn_tensor(rng, ranks), CoreStructure::FullRank},
               TuckerTerm{factors, randn_tensor(rng, ranks), CoreStructure::FullRank}};
    return s;
}

inline double rel_diff(double a, double b) {
    if (std::isinf(a) && std::isinf(b)) return 0.0;
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

/// Entrywise Gaussian noise of the given relative scale on every factor and
/// core, calibrated to each block's RMS entry size.
inline Sbtd perturb(const Sbtd& s, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Sbtd out = s;
    for (auto& term : out.terms) {
        for (auto& u : term.factors) {
            const double unit = u.norm() / std::sqrt(static_cast<double>(u.size()));
            for (Index j = 0; j < u.cols(); ++j)
                for (Index i = 0; i < u.rows(); ++i) u(i, j) += scale * unit * gauss(rng);
        }
        const double unit = norm(term.core) / std::sqrt(static_cast<double>(term.core.size()));
        for (Index i = 0; i < term.core.size(); ++i) term.core[i] += scale * unit * gauss(rng);
    }
    return out;
}

}  // namespace testutil
