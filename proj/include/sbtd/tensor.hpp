#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sbtd {

using Index = Eigen::Index;

/// Dense order-D tensor with "last index fastest" linear storage:
/// the entry (i_0,...,i_{D-1}) lives at offset sum_d i_d * stride_d,
/// where stride_d = prod_{d' > d} n_{d'}.  All modes are 0-based.
class DenseTensor {
public:
    DenseTensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit DenseTensor(std::vector<Index> dims);

    /// Adopts `data`, which must have exactly prod(dims) entries.
    DenseTensor(std::vector<Index> dims, std::vector<double> data);

    Index order() const { return static_cast<Index>(dims_.size()); }
    const std::vector<Index>& dims() const { return dims_; }
    Index dim(Index mode) const { return dims_[static_cast<size_t>(mode)]; }
    Index size() const { return static_cast<Index>(data_.size()); }

    double operator[](Index linear) const { return data_[static_cast<size_t>(linear)]; }
    double& operator[](Index linear) { return data_[static_cast<size_t>(linear)]; }

    double at(std::span<const Index> idx) const;
    double& at(std::span<const Index> idx);

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    /// View of the entries in linear storage order.  This is the
    /// vectorization used throughout: vec((M_0,...,M_{D-1}) . t) =
    /// (M_0 kron ... kron M_{D-1}) vec(t).
    Eigen::Map<const Eigen::VectorXd> vec() const {
        return {data_.data(), static_cast<Index>(data_.size())};
    }

    bool all_finite() const;

    bool operator==(const DenseTensor&) const = default;

private:
    std::vector<Index> dims_;
    std::vector<double> data_;
};

Index linear_offset(std::span<const Index> dims, std::span<const Index> idx);

/// Mode-d unfolding: the dim(d) x prod_{d'!=d} dim(d') matrix whose row i_d,
/// column j holds t(i_0,...,i_{D-1}); j enumerates the remaining indices in
/// ascending mode order with the last remaining mode varying fastest.  Under
/// this convention unfold((U_0,...,U_{D-1}).c, d) equals
/// U_d unfold(c,d) (U_0 kron ... skip d ... kron U_{D-1})^T.
Eigen::MatrixXd unfold(const DenseTensor& t, Index mode);

/// Inverse of unfold: fold(unfold(t, d), d, t.dims()) == t exactly.
DenseTensor fold(const Eigen::MatrixXd& m, Index mode, std::vector<Index> dims);

/// Kronecker product, block (i,j) equals a(i,j)*b.
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Kronecker product of a list of factors, ascending order.
Eigen::MatrixXd kron_all(std::span<const Eigen::MatrixXd> mats);

/// Applies m along mode d: fold(m * unfold(t, d), d, new dims).
DenseTensor mode_product(const DenseTensor& t, Index mode, const Eigen::MatrixXd& m);

/// (M_0,...,M_{D-1}) . t, applied as successive mode products in ascending
/// mode order.  M_d must have cols == t.dim(d).
DenseTensor multilinear_multiply(std::span<const Eigen::MatrixXd> mats, const DenseTensor& t);

double inner(const DenseTensor& a, const DenseTensor& b);
double norm(const DenseTensor& a);

/// Binary ".dt" tensor file: magic "DTEN", u32 LE version (=1), u32 LE order,
/// order x u64 LE dims, prod(dims) x f64 LE values in linear storage order.
/// Round trips bit-exactly.
void write_dt(const std::string& path, const DenseTensor& t);
DenseTensor read_dt(const std::string& path);

}  // namespace sbtd
