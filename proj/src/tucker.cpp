#include "sbtd/tucker.hpp"

#include <stdexcept>

namespace sbtd {

namespace {

void fix_sign_columns(Eigen::MatrixXd& u) {
    for (Index j = 0; j < u.cols(); ++j) {
        Index imax = 0;
        u.col(j).cwiseAbs().maxCoeff(&imax);
        if (u(imax, j) < 0) u.col(j) = -u.col(j);
    }
}

Index retained_rank(const Eigen::VectorXd& sv, double rel_tol) {
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    const double cut = rel_tol * sv(0);
    Index r = 0;
    while (r < sv.size() && sv(r) > cut && sv(r) > 0.0) ++r;
    return r;
}

void check_hosvd_input(const DenseTensor& t) {
    if (!t.all_finite()) throw std::invalid_argument("hosvd: tensor has non-finite entries");
    if (norm(t) == 0.0) throw std::invalid_argument("hosvd: zero tensor");
}

std::vector<Eigen::VectorXd> core_mode_norms(const DenseTensor& core) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<size_t>(core.order()));
    for (Index d = 0; d < core.order(); ++d)
        out.push_back(unfold(core, d).rowwise().norm());
    return out;
}

}  // namespace

TuckerFactorization compact_hosvd(const DenseTensor& t, double rel_tol) {
    check_hosvd_input(t);
    const Index D = t.order();
    TuckerFactorization f;
    f.factors.reserve(static_cast<size_t>(D));
    for (Index d = 0; d < D; ++d) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(unfold(t, d), Eigen::ComputeThinU);
        const Index r = retained_rank(svd.singularValues(), rel_tol);
        Eigen::MatrixXd u = svd.matrixU().leftCols(r);
        fix_sign_columns(u);
        f.factors.push_back(std::move(u));
    }
    DenseTensor core = t;
    for (Index d = 0; d < D; ++d)
        core = mode_product(core, d, f.factors[static_cast<size_t>(d)].transpose());
    f.core = std::move(core);
    f.mode_singular_values = core_mode_norms(f.core);
    return f;
}

TuckerFactorization minimal_compress(const DenseTensor& t, double rel_tol) {
    check_hosvd_input(t);
    const Index D = t.order();
    TuckerFactorization f;
    f.factors.reserve(static_cast<size_t>(D));
    DenseTensor core = t;
    for (Index d = 0; d < D; ++d) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(unfold(core, d), Eigen::ComputeThinU);
        const Index r = retained_rank(svd.singularValues(), rel_tol);
        Eigen::MatrixXd u = svd.matrixU().leftCols(r);
        fix_sign_columns(u);
        core = mode_product(core, d, u.transpose());
        f.factors.push_back(std::move(u));
    }
    f.core = std::move(core);
    f.mode_singular_values = core_mode_norms(f.core);
    return f;
}

DenseTensor reconstruct(const TuckerFactorization& f) {
    return multilinear_multiply(f.factors, f.core);
}

Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& u) {
    const Index n = u.rows(), k = u.cols();
    if (n < k) throw std::invalid_argument("orthonormal_complement: more columns than rows");
    if (k > 0) {
        const double gram_dev =
            (u.transpose() * u - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
        if (gram_dev > 1e-8)
            throw std::invalid_argument("orthonormal_complement: input columns not orthonormal");
    }
    if (n == k) return Eigen::MatrixXd(n, 0);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd perp = q.rightCols(n - k);
    fix_sign_columns(perp);
    return perp;
}

std::vector<Index> multilinear_rank(const DenseTensor& t, double rel_tol) {
    std::vector<Index> ranks(static_cast<size_t>(t.order()), 0);
    if (!t.all_finite() || norm(t) == 0.0) return ranks;
    for (Index d = 0; d < t.order(); ++d) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(unfold(t, d));
        ranks[static_cast<size_t>(d)] = retained_rank(svd.singularValues(), rel_tol);
    }
    return ranks;
}

}  // namespace sbtd
