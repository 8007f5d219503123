#include "lapack_wrap.hpp"

#include <lapacke.h>

#include <algorithm>
#include <stdexcept>

namespace sbtd::detail {

Eigen::VectorXd singular_values_inplace(Eigen::MatrixXd& m) {
    const lapack_int rows = static_cast<lapack_int>(m.rows());
    const lapack_int cols = static_cast<lapack_int>(m.cols());
    if (rows == 0 || cols == 0) throw std::invalid_argument("singular_values: empty matrix");
    // dgesdd destroys its input, so keep a copy for the (rare) dgesvd
    // fallback only when that is cheap.
    Eigen::MatrixXd backup;
    if (m.size() * static_cast<Eigen::Index>(sizeof(double)) <= (1 << 26)) backup = m;
    Eigen::VectorXd sv(std::min(m.rows(), m.cols()));
    lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', rows, cols, m.data(), rows,
                                     sv.data(), nullptr, rows, nullptr, cols);
    if (info != 0 && backup.size() > 0) {
        Eigen::VectorXd superb(std::max<Eigen::Index>(sv.size() - 1, 1));
        info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'N', 'N', rows, cols, backup.data(), rows,
                              sv.data(), nullptr, rows, nullptr, cols, superb.data());
    }
    if (info != 0) throw std::runtime_error("singular_values: SVD did not converge");
    return sv;
}

Eigen::MatrixXd qr_r_factor(Eigen::MatrixXd& buf, Eigen::Index rows) {
    const lapack_int m = static_cast<lapack_int>(rows);
    const lapack_int n = static_cast<lapack_int>(buf.cols());
    const lapack_int lda = static_cast<lapack_int>(buf.rows());
    if (m <= 0 || n <= 0 || rows > buf.rows())
        throw std::invalid_argument("qr_r_factor: bad panel shape");
    Eigen::VectorXd tau(std::min<Eigen::Index>(rows, buf.cols()));
    const lapack_int info = LAPACKE_dgeqrf(LAPACK_COL_MAJOR, m, n, buf.data(), lda, tau.data());
    if (info != 0) throw std::runtime_error("qr_r_factor: dgeqrf failed");
    const Eigen::Index k = std::min<Eigen::Index>(rows, buf.cols());
    Eigen::MatrixXd r = buf.topRows(k).triangularView<Eigen::Upper>();
    return r;
}

}  // namespace sbtd::detail
