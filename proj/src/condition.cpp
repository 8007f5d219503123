#include "sbtd/condition.hpp"

#include "lapack_wrap.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sbtd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Terracini matrices are materialized only up to this size; larger ones go
// through the row-streamed QR reduction.
constexpr Index kMaterializeBytes = 1'200'000'000;
constexpr Index kPanelBytes = 420'000'000;

struct TermContext {
    TuckerTerm term;                      // HOSVD form
    std::vector<Eigen::MatrixXd> perps;   // U_d_perp, n_d x (n_d - l_d)
    std::vector<Eigen::VectorXd> sigma;   // ||e_j^T C_(d)||, j = 1..l_d
    TerraciniBlock block;
};

TermContext make_term_context(const TuckerTerm& term, Index col_begin) {
    const Index D = term.core.order();
    if (static_cast<Index>(term.factors.size()) != D)
        throw std::invalid_argument("term_tangent_basis: one factor per mode required");
    TermContext ctx;
    ctx.term = term;
    const double core_norm = norm(term.core);
    if (core_norm == 0.0) throw std::invalid_argument("term_tangent_basis: zero core");
    for (Index d = 0; d < D; ++d) {
        const Eigen::MatrixXd& u = term.factors[static_cast<size_t>(d)];
        const Index l = u.cols();
        const double gram_dev =
            (u.transpose() * u - Eigen::MatrixXd::Identity(l, l)).cwiseAbs().maxCoeff();
        if (gram_dev > 1e-8)
            throw std::invalid_argument("term_tangent_basis: factors not orthonormal (not HOSVD form)");
        const Eigen::MatrixXd cu = unfold(term.core, d);
        Eigen::MatrixXd gram = cu * cu.transpose();
        Eigen::VectorXd sig = gram.diagonal().cwiseSqrt();
        gram.diagonal().setZero();
        if (gram.cwiseAbs().maxCoeff() > 1e-8 * core_norm * core_norm)
            throw std::invalid_argument("term_tangent_basis: core not all-orthogonal (not HOSVD form)");
        const double sig_max = sig.maxCoeff();
        if (sig.minCoeff() <= 1e-14 * sig_max)
            throw std::invalid_argument("term_tangent_basis: core is multilinear rank deficient");
        ctx.perps.push_back(orthonormal_complement(u));
        ctx.sigma.push_back(std::move(sig));
    }
    ctx.block.col_begin = col_begin;
    ctx.block.core_cols = term.structure == CoreStructure::Rank1 ? 1 : term.core.size();
    Index total = ctx.block.core_cols;
    for (Index d = 0; d < D; ++d) {
        const Index l = term.core.dim(d);
        const Index n = term.factors[static_cast<size_t>(d)].rows();
        ctx.block.mode_cols.push_back(l * (n - l));
        total += l * (n - l);
    }
    ctx.block.cols = total;
    return ctx;
}

// Columns for first-mode indices [i0b, i0e) of one term's tangent basis.
void fill_term_rows(const TermContext& ctx, Index i0b, Index i0e,
                    Eigen::Ref<Eigen::MatrixXd> out) {
    const Index D = ctx.term.core.order();
    const auto& factors = ctx.term.factors;
    const Index s = i0e - i0b;

    std::vector<Eigen::MatrixXd> mats(factors.begin(), factors.end());
    mats[0] = factors[0].middleRows(i0b, s);

    // Core block: (U_0,...,U_{D-1}) . E_j for the canonical basis tensors in
    // linear order is exactly the Kronecker product of the factors; the Rank1
    // basis {1} degenerates to the same single column.
    Index c = 0;
    out.middleCols(c, ctx.block.core_cols) = kron_all(mats);
    c += ctx.block.core_cols;

    for (Index d = 0; d < D; ++d) {
        const Index l = ctx.term.core.dim(d);
        const Index n = factors[static_cast<size_t>(d)].rows();
        const Eigen::MatrixXd& perp = ctx.perps[static_cast<size_t>(d)];
        for (Index j = 0; j < l; ++j) {
            const double inv_sigma = 1.0 / ctx.sigma[static_cast<size_t>(d)](j);
            for (Index i = 0; i < n - l; ++i) {
                Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(d == 0 ? s : n, l);
                if (d == 0)
                    dir.col(j) = perp.col(i).segment(i0b, s) * inv_sigma;
                else
                    dir.col(j) = perp.col(i) * inv_sigma;
                std::swap(mats[static_cast<size_t>(d)], dir);
                out.col(c++) = multilinear_multiply(mats, ctx.term.core).vec();
                std::swap(mats[static_cast<size_t>(d)], dir);
            }
        }
    }
}

}  // namespace

struct TerraciniAssembler::Impl {
    Sbtd canonical;
    std::vector<TermContext> contexts;
    Index rows = 0;
    Index cols = 0;
    Index row_stride = 1;  // prod_{d > 0} n_d
    std::vector<TerraciniBlock> blocks;
};

TerraciniAssembler::TerraciniAssembler(const Sbtd& s) : impl_(std::make_unique<Impl>()) {
    if (s.terms.empty())
        throw std::invalid_argument("assemble_terracini: decomposition has no terms");
    impl_->canonical.ambient_dims = s.ambient_dims;
    impl_->rows = 1;
    for (Index d : s.ambient_dims) impl_->rows *= d;
    for (size_t d = 1; d < s.ambient_dims.size(); ++d) impl_->row_stride *= s.ambient_dims[d];
    Index col = 0;
    for (const TuckerTerm& term : s.terms) {
        TuckerTerm canon = canonicalize_hosvd(term);
        for (Index d = 0; d < canon.core.order(); ++d)
            if (canon.factors[static_cast<size_t>(d)].rows() != s.ambient_dims[static_cast<size_t>(d)])
                throw std::invalid_argument("assemble_terracini: term does not match ambient dims");
        impl_->contexts.push_back(make_term_context(canon, col));
        col += impl_->contexts.back().block.cols;
        impl_->blocks.push_back(impl_->contexts.back().block);
        impl_->canonical.terms.push_back(std::move(canon));
    }
    impl_->cols = col;
}

TerraciniAssembler::~TerraciniAssembler() = default;
TerraciniAssembler::TerraciniAssembler(TerraciniAssembler&&) noexcept = default;

Index TerraciniAssembler::rows() const { return impl_->rows; }
Index TerraciniAssembler::cols() const { return impl_->cols; }
const std::vector<TerraciniBlock>& TerraciniAssembler::blocks() const { return impl_->blocks; }
const Sbtd& TerraciniAssembler::canonical() const { return impl_->canonical; }

void TerraciniAssembler::fill_rows(Index i0_begin, Index i0_end,
                                   Eigen::Ref<Eigen::MatrixXd> out) const {
    const Index n0 = impl_->canonical.ambient_dims[0];
    if (i0_begin < 0 || i0_end > n0 || i0_begin >= i0_end)
        throw std::out_of_range("fill_rows: bad first-mode range");
    if (out.rows() != (i0_end - i0_begin) * impl_->row_stride || out.cols() != impl_->cols)
        throw std::invalid_argument("fill_rows: output block has wrong shape");
    for (const TermContext& ctx : impl_->contexts)
        fill_term_rows(ctx, i0_begin, i0_end,
                       out.middleCols(ctx.block.col_begin, ctx.block.cols));
}

Eigen::MatrixXd TerraciniAssembler::dense() const {
    Eigen::MatrixXd m(rows(), cols());
    fill_rows(0, impl_->canonical.ambient_dims[0], m);
    return m;
}

Eigen::MatrixXd term_tangent_basis(const TuckerTerm& term) {
    TermContext ctx = make_term_context(term, 0);
    Index rows = 1;
    for (const auto& u : term.factors) rows *= u.rows();
    Eigen::MatrixXd out(rows, ctx.block.cols);
    fill_term_rows(ctx, 0, term.factors[0].rows(), out);
    return out;
}

TerraciniMatrix assemble_terracini(const Sbtd& s) {
    TerraciniAssembler assembler(s);
    return {assembler.dense(), assembler.blocks()};
}

double sigma_min(const Eigen::MatrixXd& m) {
    Eigen::VectorXd sv = detail::singular_values(m);
    return sv(sv.size() - 1);
}

namespace detail {

Eigen::VectorXd streamed_terracini_singular_values(const TerraciniAssembler& assembler,
                                                   Index target_panel_bytes) {
    const Index p = assembler.cols();
    const Index n0 = assembler.canonical().ambient_dims[0];
    const Index stride = assembler.rows() / n0;
    const Index budget_rows = std::max<Index>(target_panel_bytes / 8 / std::max<Index>(p, 1), 1);
    const Index i0_step = std::max<Index>(std::min((budget_rows - p) / stride, n0), 1);

    Eigen::MatrixXd stack(p + i0_step * stride, p);
    Eigen::MatrixXd r(0, p);
    for (Index i0 = 0; i0 < n0; i0 += i0_step) {
        const Index i0e = std::min(i0 + i0_step, n0);
        const Index panel_rows = (i0e - i0) * stride;
        const Index total = r.rows() + panel_rows;
        stack.topRows(r.rows()) = r;
        assembler.fill_rows(i0, i0e, stack.middleRows(r.rows(), panel_rows));
        r = qr_r_factor(stack, total);
    }
    return singular_values_inplace(r);
}

}  // namespace detail

namespace {

ConditionReport finalize_report(const Eigen::VectorXd& sv, CondMethod method, Index rows,
                                Index cols, double abs_tol, Clock::time_point t0) {
    ConditionReport rep;
    rep.method = method;
    rep.terracini_rows = rows;
    rep.terracini_cols = cols;
    rep.sigma_min = sv(sv.size() - 1);
    const double sigma_max = sv(0);
    const double tol = abs_tol >= 0.0 ? abs_tol : 1e-14 * sigma_max;
    rep.ill_posed = !(rep.sigma_min >= tol);
    rep.kappa = rep.ill_posed ? std::numeric_limits<double>::infinity() : 1.0 / rep.sigma_min;
    rep.wall_time_s = seconds_since(t0);
    return rep;
}

}  // namespace

ConditionReport condition_direct(const Sbtd& s, double abs_tol) {
    const auto t0 = Clock::now();
    TerraciniAssembler assembler(s);
    Eigen::VectorXd sv;
    if (assembler.rows() * assembler.cols() * static_cast<Index>(sizeof(double)) <=
        kMaterializeBytes) {
        Eigen::MatrixXd m = assembler.dense();
        sv = detail::singular_values_inplace(m);
    } else {
        sv = detail::streamed_terracini_singular_values(assembler, kPanelBytes);
    }
    return finalize_report(sv, CondMethod::Direct, assembler.rows(), assembler.cols(), abs_tol,
                           t0);
}

ConditionReport condition_compressed(const Sbtd& s, double abs_tol) {
    const auto t0 = Clock::now();
    const Index D = s.order();
    const Index R = s.num_terms();
    std::vector<Eigen::MatrixXd> q(static_cast<size_t>(D));  // empty => identity
    std::vector<Index> comp_dims(static_cast<size_t>(D));
    for (Index d = 0; d < D; ++d) {
        const Index n = s.ambient_dims[static_cast<size_t>(d)];
        Index stacked_cols = 0;
        for (const auto& term : s.terms) stacked_cols += term.factors[static_cast<size_t>(d)].cols();
        if (stacked_cols < n) {
            Eigen::MatrixXd stacked(n, stacked_cols);
            Index c = 0;
            for (const auto& term : s.terms) {
                const auto& u = term.factors[static_cast<size_t>(d)];
                stacked.middleCols(c, u.cols()) = u;
                c += u.cols();
            }
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
            q[static_cast<size_t>(d)] =
                qr.householderQ() * Eigen::MatrixXd::Identity(n, stacked_cols);
            comp_dims[static_cast<size_t>(d)] = stacked_cols;
        } else {
            comp_dims[static_cast<size_t>(d)] = n;
        }
    }
    Sbtd compressed;
    compressed.ambient_dims = comp_dims;
    compressed.terms.reserve(static_cast<size_t>(R));
    for (const auto& term : s.terms) {
        TuckerTerm ct;
        ct.structure = term.structure;
        ct.core = term.core;
        for (Index d = 0; d < D; ++d) {
            const auto& u = term.factors[static_cast<size_t>(d)];
            ct.factors.push_back(q[static_cast<size_t>(d)].size() == 0
                                     ? u
                                     : q[static_cast<size_t>(d)].transpose() * u);
        }
        compressed.terms.push_back(std::move(ct));
    }
    ConditionReport rep = condition_direct(compressed, abs_tol);
    rep.method = CondMethod::Compressed;
    rep.compressed_dims = comp_dims;
    rep.wall_time_s = seconds_since(t0);
    return rep;
}

double btd_lower_bound(const Sbtd& s, double abs_tol) {
    if (s.terms.empty()) throw std::invalid_argument("btd_lower_bound: no terms");
    Index cols = 0;
    for (const auto& term : s.terms) cols += term.core.size();
    Index rows = 1;
    for (Index d : s.ambient_dims) rows *= d;
    Eigen::MatrixXd k(rows, cols);
    Index c = 0;
    for (const auto& term : s.terms) {
        const TuckerTerm canon = canonicalize_hosvd(term);
        k.middleCols(c, canon.core.size()) = kron_all(canon.factors);
        c += canon.core.size();
    }
    Eigen::VectorXd sv = detail::singular_values_inplace(k);
    const double smin = sv(sv.size() - 1);
    const double tol = abs_tol >= 0.0 ? abs_tol : 1e-14 * sv(0);
    if (!(smin >= tol)) return std::numeric_limits<double>::infinity();
    return 1.0 / smin;
}

bool check_pairwise_orthogonal(const Sbtd& s, double tol) {
    std::vector<TuckerTerm> canon;
    canon.reserve(s.terms.size());
    for (const auto& term : s.terms) canon.push_back(canonicalize_hosvd(term));
    for (size_t a = 0; a < canon.size(); ++a)
        for (size_t b = a + 1; b < canon.size(); ++b)
            for (size_t d = 0; d < canon[a].factors.size(); ++d) {
                const Eigen::MatrixXd prod =
                    canon[a].factors[d].transpose() * canon[b].factors[d];
                if (prod.size() > 0 && prod.cwiseAbs().maxCoeff() > tol) return false;
            }
    return true;
}

CostEstimate cost_model(Index n, Index D, Index R, Index l) {
    if (n < 1 || D < 1 || R < 1 || l < 1)
        throw std::invalid_argument("cost_model: arguments must be positive");
    const double nd = std::pow(static_cast<double>(n), static_cast<double>(D));
    const double r2 = static_cast<double>(R) * static_cast<double>(R);
    const double d2 = static_cast<double>(D) * static_cast<double>(D);
    const double l2 = static_cast<double>(l) * static_cast<double>(l);
    const double nl = static_cast<double>(n - l);
    CostEstimate est;
    est.direct_ops = nd * r2 * std::pow(static_cast<double>(l), 2.0 * static_cast<double>(D)) +
                     nd * r2 * d2 * l2 * nl * nl;
    est.compressed_ops =
        static_cast<double>(D) * static_cast<double>(n) * r2 * l2 +
        std::pow(static_cast<double>(R), static_cast<double>(D) + 2.0) *
            std::pow(static_cast<double>(l), 3.0 * static_cast<double>(D)) +
        std::pow(static_cast<double>(R), static_cast<double>(D) + 4.0) *
            std::pow(static_cast<double>(l), static_cast<double>(D) + 4.0) * d2;
    return est;
}

}  // namespace sbtd
