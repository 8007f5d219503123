#include "sbtd/tensor.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>

namespace sbtd {

namespace {

Index checked_product(std::span<const Index> dims) {
    if (dims.empty()) throw std::invalid_argument("tensor order must be >= 1");
    Index n = 1;
    for (Index d : dims) {
        if (d < 1) throw std::invalid_argument("tensor dimensions must be >= 1");
        if (n > std::numeric_limits<Index>::max() / d)
            throw std::overflow_error("tensor size overflows");
        n *= d;
    }
    return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Index> dims)
    : dims_(std::move(dims)), data_(static_cast<size_t>(checked_product(dims_)), 0.0) {}

DenseTensor::DenseTensor(std::vector<Index> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_product(dims_) != static_cast<Index>(data_.size()))
        throw std::invalid_argument("data length does not match dimensions");
}

Index linear_offset(std::span<const Index> dims, std::span<const Index> idx) {
    if (dims.size() != idx.size()) throw std::invalid_argument("index order mismatch");
    Index off = 0;
    for (size_t d = 0; d < dims.size(); ++d) {
        if (idx[d] < 0 || idx[d] >= dims[d]) throw std::out_of_range("tensor index out of range");
        off = off * dims[d] + idx[d];
    }
    return off;
}

double DenseTensor::at(std::span<const Index> idx) const {
    return data_[static_cast<size_t>(linear_offset(dims_, idx))];
}

double& DenseTensor::at(std::span<const Index> idx) {
    return data_[static_cast<size_t>(linear_offset(dims_, idx))];
}

bool DenseTensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

// A linear offset splits as high*(n_d*stride_d) + i_d*stride_d + low with
// stride_d = prod_{d'>d} n_{d'}; the unfolding column is high*stride_d + low,
// which is exactly the "remaining modes ascending, last fastest" enumeration.
Eigen::MatrixXd unfold(const DenseTensor& t, Index mode) {
    const Index D = t.order();
    if (mode < 0 || mode >= D) throw std::out_of_range("unfold: mode out of range");
    Index stride = 1;
    for (Index d = mode + 1; d < D; ++d) stride *= t.dim(d);
    const Index n = t.dim(mode);
    const Index cols = t.size() / n;
    Eigen::MatrixXd m(n, cols);
    const double* src = t.data().data();
    Index linear = 0;
    for (Index high = 0; high < cols / stride; ++high)
        for (Index i = 0; i < n; ++i) {
            double* dst = &m(i, high * stride);
            for (Index low = 0; low < stride; ++low) dst[low * n] = src[linear++];
        }
    return m;
}

DenseTensor fold(const Eigen::MatrixXd& m, Index mode, std::vector<Index> dims) {
    const Index D = static_cast<Index>(dims.size());
    if (mode < 0 || mode >= D) throw std::out_of_range("fold: mode out of range");
    Index stride = 1;
    for (Index d = mode + 1; d < D; ++d) stride *= dims[static_cast<size_t>(d)];
    const Index n = dims[static_cast<size_t>(mode)];
    const Index total = checked_product(dims);
    if (m.rows() != n || m.cols() != total / n)
        throw std::invalid_argument("fold: matrix shape does not match dimensions");
    DenseTensor t(std::move(dims));
    double* dst = t.data().data();
    Index linear = 0;
    const Index cols = m.cols();
    for (Index high = 0; high < cols / stride; ++high)
        for (Index i = 0; i < n; ++i) {
            const double* src = &m(i, high * stride);
            for (Index low = 0; low < stride; ++low) dst[linear++] = src[low * n];
        }
    return t;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() > 0 && b.rows() > std::numeric_limits<Index>::max() / std::max<Index>(a.rows(), 1))
        throw std::overflow_error("kron: result dimensions overflow");
    return Eigen::kroneckerProduct(a, b);
}

Eigen::MatrixXd kron_all(std::span<const Eigen::MatrixXd> mats) {
    if (mats.empty()) throw std::invalid_argument("kron_all: empty factor list");
    Eigen::MatrixXd out = mats[0];
    for (size_t d = 1; d < mats.size(); ++d) out = kron(out, mats[d]);
    return out;
}

DenseTensor mode_product(const DenseTensor& t, Index mode, const Eigen::MatrixXd& m) {
    if (mode < 0 || mode >= t.order()) throw std::out_of_range("mode_product: mode out of range");
    if (m.cols() != t.dim(mode))
        throw std::invalid_argument("mode_product: matrix cols must equal tensor dim");
    std::vector<Index> dims = t.dims();
    dims[static_cast<size_t>(mode)] = m.rows();
    return fold(m * unfold(t, mode), mode, std::move(dims));
}

DenseTensor multilinear_multiply(std::span<const Eigen::MatrixXd> mats, const DenseTensor& t) {
    if (static_cast<Index>(mats.size()) != t.order())
        throw std::invalid_argument("multilinear_multiply: one matrix per mode required");
    DenseTensor out = t;
    for (Index d = 0; d < t.order(); ++d) out = mode_product(out, d, mats[static_cast<size_t>(d)]);
    return out;
}

double inner(const DenseTensor& a, const DenseTensor& b) {
    if (a.dims() != b.dims()) throw std::invalid_argument("inner: dimension mismatch");
    return a.vec().dot(b.vec());
}

double norm(const DenseTensor& a) { return a.vec().norm(); }

namespace {

constexpr char kMagic[4] = {'D', 'T', 'E', 'N'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_dt(const std::string& path, const DenseTensor& t) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("write_dt: cannot open " + path);
    auto put = [&](const void* p, size_t bytes) {
        if (std::fwrite(p, 1, bytes, f.get()) != bytes)
            throw std::runtime_error("write_dt: short write to " + path);
    };
    put(kMagic, 4);
    put(&kVersion, 4);
    const std::uint32_t order = static_cast<std::uint32_t>(t.order());
    put(&order, 4);
    for (Index d : t.dims()) {
        const std::uint64_t n = static_cast<std::uint64_t>(d);
        put(&n, 8);
    }
    put(t.data().data(), t.data().size() * sizeof(double));
}

DenseTensor read_dt(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("read_dt: cannot open " + path);
    auto get = [&](void* p, size_t bytes) {
        if (std::fread(p, 1, bytes, f.get()) != bytes)
            throw std::runtime_error("read_dt: truncated file " + path);
    };
    char magic[4];
    get(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("read_dt: bad magic in " + path);
    std::uint32_t version = 0, order = 0;
    get(&version, 4);
    if (version != kVersion) throw std::runtime_error("read_dt: unsupported version");
    get(&order, 4);
    if (order == 0) throw std::runtime_error("read_dt: order must be >= 1");
    std::vector<Index> dims(order);
    for (auto& d : dims) {
        std::uint64_t n = 0;
        get(&n, 8);
        d = static_cast<Index>(n);
    }
    const Index total = checked_product(dims);
    std::vector<double> data(static_cast<size_t>(total));
    get(data.data(), data.size() * sizeof(double));
    return DenseTensor(std::move(dims), std::move(data));
}

}  // namespace sbtd
