#include "sbtd/experiments.hpp"

#include <cmath>
#include <stdexcept>

namespace sbtd {

namespace detail {

Eigen::MatrixXd randn_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
    return m;
}

Eigen::MatrixXd random_orthonormal(std::mt19937_64& rng, Index rows, Index cols) {
    if (cols > rows) throw std::invalid_argument("random_orthonormal: cols > rows");
    Eigen::MatrixXd g = randn_matrix(rng, rows, cols);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

DenseTensor randn_tensor(std::mt19937_64& rng, const std::vector<Index>& dims) {
    DenseTensor t(dims);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Index i = 0; i < t.size(); ++i) t[i] = gauss(rng);
    return t;
}

}  // namespace detail

namespace {

constexpr int kMaxRedraws = 100;

bool full_column_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    return sv.size() > 0 && sv(sv.size() - 1) > rel_tol * sv(0);
}

bool full_multilinear_rank(const DenseTensor& t, double rel_tol = 1e-10) {
    const std::vector<Index> r = multilinear_rank(t, rel_tol);
    for (Index d = 0; d < t.order(); ++d)
        if (r[static_cast<size_t>(d)] != t.dim(d)) return false;
    return true;
}

}  // namespace

IllCondInstance gen_illcond_btd(const IllCondParams& p) {
    const size_t D = p.core_dims.size();
    if (p.block_dims.size() != D || p.inflated_dims.size() != D)
        throw std::invalid_argument("gen_illcond_btd: dimension lists disagree on order");
    if (p.divergence < 1.0) throw std::invalid_argument("gen_illcond_btd: N must be >= 1");
    for (size_t d = 0; d < D; ++d) {
        if (p.core_dims[d] > p.block_dims[d] || p.block_dims[d] > p.inflated_dims[d])
            throw std::invalid_argument("gen_illcond_btd: dimensions must be nested");
    }
    std::mt19937_64 rng(p.seed);
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        DenseTensor core = detail::randn_tensor(rng, p.core_dims);
        std::vector<Eigen::MatrixXd> a(D), b(D);
        for (size_t d = 0; d < D; ++d)
            a[d] = detail::randn_matrix(rng, p.block_dims[d], p.core_dims[d]);
        for (size_t d = 0; d < D; ++d)
            b[d] = detail::random_orthonormal(rng, p.block_dims[d], p.core_dims[d]);

        bool ok = full_multilinear_rank(core);
        std::vector<Eigen::MatrixXd> perturbed(D);
        for (size_t d = 0; d < D && ok; ++d) {
            perturbed[d] = b[d] + a[d] / p.divergence;
            ok = full_column_rank(perturbed[d]) && full_column_rank(b[d]);
        }
        if (!ok) continue;

        DenseTensor plus_core = core, minus_core = core;
        for (Index i = 0; i < core.size(); ++i) {
            plus_core[i] *= p.divergence;
            minus_core[i] *= -p.divergence;
        }
        IllCondInstance inst;
        inst.core.ambient_dims = p.block_dims;
        inst.core.terms = {TuckerTerm{perturbed, plus_core, CoreStructure::FullRank},
                           TuckerTerm{b, minus_core, CoreStructure::FullRank}};

        inst.inflated.ambient_dims = p.inflated_dims;
        std::vector<Eigen::MatrixXd> q(D);
        for (size_t d = 0; d < D; ++d)
            q[d] = detail::random_orthonormal(rng, p.inflated_dims[d], p.block_dims[d]);
        for (const TuckerTerm& term : inst.core.terms) {
            TuckerTerm big = term;
            for (size_t d = 0; d < D; ++d) big.factors[d] = q[d] * term.factors[d];
            inst.inflated.terms.push_back(std::move(big));
        }
        return inst;
    }
    throw std::runtime_error("gen_illcond_btd: degenerate draw after max retries");
}

Sbtd gen_random_sbtd(const std::vector<Index>& dims, const std::vector<TermSpec>& terms,
                     std::uint64_t seed) {
    if (terms.empty()) throw std::invalid_argument("gen_random_sbtd: no terms requested");
    std::mt19937_64 rng(seed);
    Sbtd s;
    s.ambient_dims = dims;
    for (const TermSpec& spec : terms) {
        if (spec.ranks.size() != dims.size())
            throw std::invalid_argument("gen_random_sbtd: rank list order mismatch");
        for (size_t d = 0; d < dims.size(); ++d) {
            const Index l = spec.ranks[d];
            if (l < 1 || l > dims[d])
                throw std::invalid_argument("gen_random_sbtd: infeasible rank request");
            if (spec.structure == CoreStructure::Rank1 && l != 1)
                throw std::invalid_argument("gen_random_sbtd: rank1 terms need all ranks = 1");
        }
        TuckerTerm term;
        term.structure = spec.structure;
        for (size_t d = 0; d < dims.size(); ++d)
            term.factors.push_back(detail::random_orthonormal(rng, dims[d], spec.ranks[d]));
        int attempt = 0;
        do {
            if (++attempt > kMaxRedraws)
                throw std::runtime_error("gen_random_sbtd: degenerate core after max retries");
            term.core = detail::randn_tensor(rng, spec.ranks);
        } while (!full_multilinear_rank(term.core));
        s.terms.push_back(std::move(term));
    }
    return s;
}

Sbtd inflate_sbtd(const Sbtd& s, const std::vector<Index>& inflated_dims, std::uint64_t seed) {
    if (inflated_dims.size() != s.ambient_dims.size())
        throw std::invalid_argument("inflate_sbtd: order mismatch");
    std::mt19937_64 rng(seed);
    std::vector<Eigen::MatrixXd> q(inflated_dims.size());
    for (size_t d = 0; d < inflated_dims.size(); ++d) {
        if (inflated_dims[d] < s.ambient_dims[d])
            throw std::invalid_argument("inflate_sbtd: inflated dims must dominate");
        q[d] = detail::random_orthonormal(rng, inflated_dims[d], s.ambient_dims[d]);
    }
    Sbtd out;
    out.ambient_dims = inflated_dims;
    for (const TuckerTerm& term : s.terms) {
        TuckerTerm big = term;
        for (size_t d = 0; d < q.size(); ++d) big.factors[d] = q[d] * term.factors[d];
        out.terms.push_back(std::move(big));
    }
    return out;
}

ProbeResult perturbation_probe(const Sbtd& s, Index samples, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("perturbation_probe: need at least one sample");
    const TerraciniMatrix terr = assemble_terracini(s);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(terr.matrix);
    const Eigen::VectorXd& sv = svd.singularValues();
    const Index k = sv.size();
    const double smin = sv(k - 1);
    if (!(smin >= 1e-14 * sv(0)))
        throw std::invalid_argument("perturbation_probe: decomposition is ill-posed");
    ProbeResult res;
    res.samples = samples;
    res.kappa_ref = 1.0 / smin;

    // delta = U y lies in the column span with ||delta|| = ||y||; the
    // least-squares coefficients are x = V diag(1/sigma) y.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double sum = 0.0;
    for (Index t = 0; t < samples; ++t) {
        Eigen::VectorXd y(k);
        for (Index i = 0; i < k; ++i) y(i) = gauss(rng);
        const double ratio = (y.array() / sv.array()).matrix().norm() / y.norm();
        res.max_ratio = std::max(res.max_ratio, ratio);
        sum += ratio;
    }
    res.mean_ratio = sum / static_cast<double>(samples);
    res.singular_ratio = 1.0 / sv(k - 1);
    return res;
}

namespace {

struct ParamLayout {
    Index total = 0;
    // Per term: offsets of each factor block, then the core block.
    struct TermOffsets {
        std::vector<Index> factor_begin;
        Index core_begin = 0;
    };
    std::vector<TermOffsets> terms;
};

ParamLayout make_layout(const Sbtd& s) {
    ParamLayout layout;
    Index off = 0;
    for (const TuckerTerm& term : s.terms) {
        ParamLayout::TermOffsets to;
        for (const auto& u : term.factors) {
            to.factor_begin.push_back(off);
            off += u.size();
        }
        to.core_begin = off;
        off += term.core.size();
        layout.terms.push_back(std::move(to));
    }
    layout.total = off;
    return layout;
}

Eigen::VectorXd pack(const Sbtd& s, const ParamLayout& layout) {
    Eigen::VectorXd theta(layout.total);
    for (size_t r = 0; r < s.terms.size(); ++r) {
        const auto& term = s.terms[r];
        for (size_t d = 0; d < term.factors.size(); ++d) {
            const auto& u = term.factors[d];
            theta.segment(layout.terms[r].factor_begin[d], u.size()) =
                Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
        }
        theta.segment(layout.terms[r].core_begin, term.core.size()) = term.core.vec();
    }
    return theta;
}

Sbtd unpack(const Eigen::VectorXd& theta, const Sbtd& shape, const ParamLayout& layout) {
    Sbtd s = shape;
    for (size_t r = 0; r < s.terms.size(); ++r) {
        auto& term = s.terms[r];
        for (size_t d = 0; d < term.factors.size(); ++d) {
            auto& u = term.factors[d];
            Eigen::Map<Eigen::VectorXd>(u.data(), u.size()) =
                theta.segment(layout.terms[r].factor_begin[d], u.size());
        }
        auto seg = theta.segment(layout.terms[r].core_begin, term.core.size());
        for (Index i = 0; i < term.core.size(); ++i) term.core[i] = seg(i);
    }
    return s;
}

}  // namespace

Eigen::VectorXd fit_residual(const DenseTensor& target, const Sbtd& s) {
    const DenseTensor sum = evaluate_sum(s);
    if (sum.dims() != target.dims())
        throw std::invalid_argument("fit_residual: shape mismatch with target");
    return sum.vec() - target.vec();
}

Eigen::MatrixXd fit_jacobian(const Sbtd& s) {
    Index rows = 1;
    for (Index d : s.ambient_dims) rows *= d;
    const ParamLayout layout = make_layout(s);
    Eigen::MatrixXd jac(rows, layout.total);
    for (size_t r = 0; r < s.terms.size(); ++r) {
        const TuckerTerm& term = s.terms[r];
        const Index D = term.core.order();
        for (Index d = 0; d < D; ++d) {
            // d/dU_d in direction e_a e_b^T: mode-d unfolding e_a (e_b^T Y_(d))
            // where Y carries every factor except mode d.
            std::vector<Eigen::MatrixXd> mats(term.factors.begin(), term.factors.end());
            mats[static_cast<size_t>(d)] =
                Eigen::MatrixXd::Identity(term.core.dim(d), term.core.dim(d));
            const DenseTensor y = multilinear_multiply(mats, term.core);
            const Eigen::MatrixXd yd = unfold(y, d);
            const Index nd = s.ambient_dims[static_cast<size_t>(d)];
            const Index ld = term.core.dim(d);
            std::vector<Index> col_dims = y.dims();
            col_dims[static_cast<size_t>(d)] = nd;
            Eigen::MatrixXd slice = Eigen::MatrixXd::Zero(nd, yd.cols());
            for (Index b = 0; b < ld; ++b)
                for (Index a = 0; a < nd; ++a) {
                    slice.row(a) = yd.row(b);
                    jac.col(layout.terms[r].factor_begin[static_cast<size_t>(d)] + b * nd + a) =
                        fold(slice, d, col_dims).vec();
                    slice.row(a).setZero();
                }
        }
        jac.middleCols(layout.terms[r].core_begin, term.core.size()) = kron_all(term.factors);
    }
    return jac;
}

FitResult fit_btd(const DenseTensor& target, const Sbtd& init, Index max_iter, double res_tol) {
    const ParamLayout layout = make_layout(init);
    Sbtd current = init;
    Eigen::VectorXd theta = pack(current, layout);
    Eigen::VectorXd f = fit_residual(target, current);
    double res = f.norm();
    if (!std::isfinite(res)) throw std::runtime_error("fit_btd: non-finite initial residual");

    FitResult out;
    out.residual_history.push_back(res);
    if (res <= res_tol) {
        out.fitted = std::move(current);
        return out;
    }

    double lambda = -1.0;
    for (Index iter = 0; iter < max_iter && res > res_tol; ++iter) {
        const Eigen::MatrixXd jac = fit_jacobian(current);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * f;
        if (lambda < 0.0)
            lambda = 1e-4 * jtj.trace() / static_cast<double>(layout.total);

        bool accepted = false;
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal().array() += lambda;
            const Eigen::VectorXd step = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(-grad);
            const Eigen::VectorXd trial_theta = theta + step;
            const Sbtd trial = unpack(trial_theta, current, layout);
            const Eigen::VectorXd trial_f = fit_residual(target, trial);
            const double trial_res = trial_f.norm();
            if (std::isfinite(trial_res) && trial_res < res) {
                theta = trial_theta;
                current = trial;
                f = trial_f;
                res = trial_res;
                lambda /= 10.0;
                accepted = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e200) throw std::runtime_error("fit_btd: diverged");
            }
        }
        if (!accepted) break;  // no descent direction left at any damping
        out.iterations += 1;
        out.residual_history.push_back(res);
    }
    out.fitted = std::move(current);
    return out;
}

double error_bound_check(const Sbtd& truth, const Sbtd& fitted, const DenseTensor& target) {
    const double res = (evaluate_sum(fitted).vec() - target.vec()).norm();
    if (res > 1e-8)
        throw std::invalid_argument("error_bound_check: residual above the 1e-8 filter");
    const double fe = forward_error(truth, fitted);
    if (fe == 0.0) return 0.0;
    const ConditionReport rep = condition_direct(truth);
    if (rep.ill_posed)
        throw std::invalid_argument("error_bound_check: reference decomposition is ill-posed");
    return fe / (rep.kappa * res);
}

}  // namespace sbtd
