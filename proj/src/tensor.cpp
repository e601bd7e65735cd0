#include "tensor.hpp"

#include <cmath>
#include <sstream>

#include "rng.hpp"

namespace mrckg {

static size_t shape_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw Fault("negative tensor dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    if (shape.size() > 3) throw Fault("tensor rank > 3");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(shape_size(t.shape_), 0.0);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    t.require_finite("scalar");
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    Tensor t;
    t.shape_ = {static_cast<int>(values.size())};
    t.data_ = std::move(values);
    t.require_finite("vector");
    return t;
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
    if (values.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols))
        throw Fault("matrix value count does not match shape");
    Tensor t;
    t.shape_ = {rows, cols};
    t.data_ = std::move(values);
    t.require_finite("matrix");
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.data_) x = v;
    t.require_finite("full");
    return t;
}

Tensor Tensor::gaussian(std::vector<int> shape, double stddev, uint64_t seed) {
    Tensor t = zeros(std::move(shape));
    auto rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : t.data_) x = dist(rng);
    return t;
}

double Tensor::item() const {
    if (data_.size() != 1) throw Fault("item() on tensor of size " + std::to_string(data_.size()));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw Fault("non-finite values in " + what);
}

double cosine_value(const Tensor& u, const Tensor& v) {
    if (u.rank() != 1 || v.rank() != 1 || u.dim(0) != v.dim(0))
        throw Fault("cosine_value: bad inputs");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (int i = 0; i < u.dim(0); ++i) {
        uu += u.at(i) * u.at(i);
        vv += v.at(i) * v.at(i);
        uv += u.at(i) * v.at(i);
    }
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    return uv / (nu * nv);
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

}  // namespace mrckg
