#include "sbtd/model.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace sbtd {

DenseTensor evaluate_term(const TuckerTerm& term) {
    return multilinear_multiply(term.factors, term.core);
}

DenseTensor evaluate_sum(const Sbtd& s) {
    if (s.terms.empty()) throw std::invalid_argument("evaluate_sum: decomposition has no terms");
    DenseTensor acc(s.ambient_dims);
    for (const TuckerTerm& term : s.terms) {
        DenseTensor t = evaluate_term(term);
        if (t.dims() != s.ambient_dims)
            throw std::invalid_argument("evaluate_sum: term dimensions do not match ambient");
        for (Index i = 0; i < acc.size(); ++i) acc[i] += t[i];
    }
    return acc;
}

namespace {

double matrix_rank_margin(const Eigen::MatrixXd& m, Index& rank_out, double rel_tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    rank_out = 0;
    if (sv.size() == 0 || sv(0) <= 0.0) return 0.0;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++rank_out;
    return sv(sv.size() - 1) / sv(0);
}

}  // namespace

std::string ValidationReport::describe() const {
    std::ostringstream os;
    for (const auto& f : failures) os << f << "\n";
    for (size_t r = 0; r < terms.size(); ++r)
        for (const auto& f : terms[r].failures) os << "terms[" << r << "]: " << f << "\n";
    return os.str();
}

ValidationReport validate(const Sbtd& s, double rel_tol) {
    ValidationReport rep;
    auto fail = [&rep](const std::string& msg) {
        rep.failures.push_back(msg);
        rep.ok = false;
    };
    if (s.terms.empty()) fail("decomposition must contain at least one term");
    if (s.ambient_dims.empty()) fail("ambient_dims is empty");
    const Index D = s.order();

    for (size_t r = 0; r < s.terms.size(); ++r) {
        const TuckerTerm& term = s.terms[r];
        TermValidation tv;
        auto term_fail = [&](const std::string& msg) {
            tv.failures.push_back(msg);
            tv.ok = false;
            rep.ok = false;
        };
        if (static_cast<Index>(term.factors.size()) != D || term.core.order() != D) {
            term_fail("factor/core order does not match ambient order");
            rep.terms.push_back(std::move(tv));
            continue;
        }
        for (Index d = 0; d < D; ++d) {
            const Eigen::MatrixXd& u = term.factors[static_cast<size_t>(d)];
            std::ostringstream loc;
            loc << "factors[" << d << "]";
            if (u.rows() != s.ambient_dims[static_cast<size_t>(d)])
                term_fail(loc.str() + ": rows do not match ambient dimension");
            if (u.cols() != term.core.dim(d))
                term_fail(loc.str() + ": cols do not match core dimension");
            if (u.cols() > u.rows()) term_fail(loc.str() + ": more columns than rows");
            if (!u.allFinite()) term_fail(loc.str() + ": non-finite entries");
            Index rank = 0;
            matrix_rank_margin(u, rank, rel_tol);
            tv.factor_ranks.push_back(rank);
            if (u.allFinite() && rank < u.cols())
                term_fail(loc.str() + ": not full column rank");
        }
        if (!term.core.all_finite()) term_fail("core: non-finite entries");
        tv.core_rank = multilinear_rank(term.core, rel_tol);
        for (Index d = 0; d < term.core.order(); ++d)
            if (tv.core_rank[static_cast<size_t>(d)] < term.core.dim(d)) {
                std::ostringstream os;
                os << "core: mode " << d << " rank deficient";
                term_fail(os.str());
                break;
            }
        if (term.structure == CoreStructure::Rank1) {
            if (term.core.size() != 1) term_fail("rank1 term must have a 1x...x1 core");
            else if (term.core[0] == 0.0) term_fail("rank1 term core must be nonzero");
        }
        rep.terms.push_back(std::move(tv));
    }
    return rep;
}

TuckerTerm canonicalize_hosvd(const TuckerTerm& term) {
    const Index D = term.core.order();
    if (static_cast<Index>(term.factors.size()) != D)
        throw std::invalid_argument("canonicalize_hosvd: one factor per mode required");
    std::vector<Eigen::MatrixXd> qs(static_cast<size_t>(D));
    std::vector<Eigen::MatrixXd> rs(static_cast<size_t>(D));
    for (Index d = 0; d < D; ++d) {
        const Eigen::MatrixXd& u = term.factors[static_cast<size_t>(d)];
        if (u.cols() != term.core.dim(d) || u.cols() > u.rows() || !u.allFinite())
            throw std::invalid_argument("canonicalize_hosvd: invalid factor matrix");
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
        qs[static_cast<size_t>(d)] =
            qr.householderQ() * Eigen::MatrixXd::Identity(u.rows(), u.cols());
        rs[static_cast<size_t>(d)] =
            qr.matrixQR().topRows(u.cols()).triangularView<Eigen::Upper>();
    }
    // Skewness now lives in the small core; one HOSVD there finishes the job.
    DenseTensor skew_core = multilinear_multiply(rs, term.core);
    if (norm(skew_core) == 0.0)
        throw std::invalid_argument("canonicalize_hosvd: term evaluates to zero");
    TuckerFactorization f = compact_hosvd(skew_core, 1e-14);
    TuckerTerm out;
    out.structure = term.structure;
    out.core = std::move(f.core);
    out.factors.reserve(static_cast<size_t>(D));
    for (Index d = 0; d < D; ++d)
        out.factors.push_back(qs[static_cast<size_t>(d)] * f.factors[static_cast<size_t>(d)]);
    return out;
}

std::vector<DenseTensor> core_tangent_basis(CoreStructure structure, const DenseTensor& core) {
    std::vector<DenseTensor> basis;
    switch (structure) {
        case CoreStructure::Rank1: {
            if (core.size() != 1 || core[0] == 0.0)
                throw std::invalid_argument("core_tangent_basis: core does not match Rank1");
            DenseTensor one(core.dims());
            one[0] = 1.0;
            basis.push_back(std::move(one));
            break;
        }
        case CoreStructure::FullRank: {
            basis.reserve(static_cast<size_t>(core.size()));
            for (Index j = 0; j < core.size(); ++j) {
                DenseTensor e(core.dims());
                e[j] = 1.0;
                basis.push_back(std::move(e));
            }
            break;
        }
    }
    return basis;
}

// Hungarian algorithm with potentials, O(n^3).
std::vector<Index> solve_assignment(const Eigen::MatrixXd& cost) {
    const Index n = cost.rows();
    if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix not square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<size_t>(n) + 1), v(static_cast<size_t>(n) + 1);
    std::vector<Index> match(static_cast<size_t>(n) + 1, 0);  // column -> row, 1-based
    for (Index i = 1; i <= n; ++i) {
        match[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<size_t>(n) + 1, false);
        std::vector<Index> way(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = true;
            const Index i0 = match[static_cast<size_t>(j0)];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= n; ++j)
                if (!used[static_cast<size_t>(j)]) {
                    const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
                                       v[static_cast<size_t>(j)];
                    if (cur < minv[static_cast<size_t>(j)]) {
                        minv[static_cast<size_t>(j)] = cur;
                        way[static_cast<size_t>(j)] = j0;
                    }
                    if (minv[static_cast<size_t>(j)] < delta) {
                        delta = minv[static_cast<size_t>(j)];
                        j1 = j;
                    }
                }
            for (Index j = 0; j <= n; ++j)
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            j0 = j1;
        } while (match[static_cast<size_t>(j0)] != 0);
        do {
            const Index j1 = way[static_cast<size_t>(j0)];
            match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> row_to_col(static_cast<size_t>(n));
    for (Index j = 1; j <= n; ++j) row_to_col[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

double forward_error(const Sbtd& a, const Sbtd& b) {
    if (a.num_terms() != b.num_terms())
        throw std::invalid_argument("forward_error: term counts differ");
    if (a.ambient_dims != b.ambient_dims)
        throw std::invalid_argument("forward_error: ambient dimensions differ");
    const Index r = a.num_terms();
    std::vector<DenseTensor> ta, tb;
    ta.reserve(static_cast<size_t>(r));
    tb.reserve(static_cast<size_t>(r));
    for (const auto& t : a.terms) ta.push_back(evaluate_term(t));
    for (const auto& t : b.terms) tb.push_back(evaluate_term(t));
    Eigen::MatrixXd cost(r, r);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < r; ++j) {
            const double d = (ta[static_cast<size_t>(i)].vec() - tb[static_cast<size_t>(j)].vec()).squaredNorm();
            cost(i, j) = d;
        }
    const std::vector<Index> assign = solve_assignment(cost);
    double total = 0.0;
    for (Index i = 0; i < r; ++i) total += cost(i, assign[static_cast<size_t>(i)]);
    return std::sqrt(total);
}

}  // namespace sbtd
