#pragma once

#include "sbtd/model.hpp"

#include <memory>
#include <optional>

namespace sbtd {

struct TerraciniBlock {
    Index col_begin = 0;
    Index cols = 0;
    Index core_cols = 0;            // |B_C|: prod(l_d) for FullRank, 1 for Rank1
    std::vector<Index> mode_cols;   // l_d * (n_d - l_d) per mode
};

/// [T_1 ... T_R]: horizontal concatenation of the per-term orthonormal
/// tangent bases, with per-term column bookkeeping.
struct TerraciniMatrix {
    Eigen::MatrixXd matrix;
    std::vector<TerraciniBlock> blocks;
};

enum class CondMethod { Direct, Compressed };

struct ConditionReport {
    double kappa = 0.0;             // +inf when ill_posed
    double sigma_min = 0.0;
    CondMethod method = CondMethod::Direct;
    bool ill_posed = false;
    Index terracini_rows = 0;
    Index terracini_cols = 0;
    std::optional<std::vector<Index>> compressed_dims;
    double wall_time_s = 0.0;
};

/// Builds Terracini columns for a decomposition whose terms it canonicalizes
/// on construction.  Row blocks can be generated for a range of first-mode
/// indices at a time, so the full matrix never has to be materialized.
class TerraciniAssembler {
public:
    explicit TerraciniAssembler(const Sbtd& s);
    ~TerraciniAssembler();
    TerraciniAssembler(TerraciniAssembler&&) noexcept;

    Index rows() const;
    Index cols() const;
    const std::vector<TerraciniBlock>& blocks() const;
    const Sbtd& canonical() const;

    /// Fills `out` with the rows whose first-mode index lies in [i0_begin,
    /// i0_end); out must be (i0_end - i0_begin) * prod_{d>0} n_d by cols().
    void fill_rows(Index i0_begin, Index i0_end, Eigen::Ref<Eigen::MatrixXd> out) const;

    Eigen::MatrixXd dense() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Orthonormal tangent-space basis at a term that must already be in HOSVD
/// form (orthonormal factors, all-orthogonal core).  Columns: core block
/// first (tangent-basis order), then modes ascending, j outer / i inner for
/// the directions U_d_perp e_i (e_j / sigma_j^d)^T.
Eigen::MatrixXd term_tangent_basis(const TuckerTerm& term);

/// Canonicalizes every term and concatenates their tangent bases.
TerraciniMatrix assemble_terracini(const Sbtd& s);

/// Smallest (min{rows,cols}-th) singular value via dense SVD.
double sigma_min(const Eigen::MatrixXd& m);

/// kappa = 1 / sigma_min of the Terracini matrix.  abs_tol < 0 selects the
/// default ill-posedness threshold 1e-14 * sigma_max.
ConditionReport condition_direct(const Sbtd& s, double abs_tol = -1.0);

/// Algorithm: per mode, QR-compress the stacked factors [U_d^1 ... U_d^R]
/// when they have fewer columns than rows (otherwise the mode is left
/// untouched), map every term into the compressed subspace, and run the
/// direct computation there.  Equal to condition_direct in exact arithmetic.
ConditionReport condition_compressed(const Sbtd& s, double abs_tol = -1.0);

/// Lower bound 1 / sigma_min([kron_d U_d^1 ... kron_d U_d^R]) <= kappa_BTD.
double btd_lower_bound(const Sbtd& s, double abs_tol = -1.0);

/// True iff all cross-term, same-mode factor products vanish within tol
/// after canonicalization (the odeco-like case, where kappa = 1).
bool check_pairwise_orthogonal(const Sbtd& s, double tol = 1e-10);

/// Leading-order arithmetic-operation counts (unit constants) for the direct
/// and the compressed computation with uniform dimensions n, order D, R
/// terms of uniform block size l.
struct CostEstimate {
    double direct_ops = 0.0;
    double compressed_ops = 0.0;
};
CostEstimate cost_model(Index n, Index D, Index R, Index l);

namespace detail {
/// Singular values of the Terracini matrix via row-streamed QR panels; exact
/// up to roundoff and never holds more than ~target_panel_bytes at once.
Eigen::VectorXd streamed_terracini_singular_values(const TerraciniAssembler& assembler,
                                                   Index target_panel_bytes);
}  // namespace detail

}  // namespace sbtd
