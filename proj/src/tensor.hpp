#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrckg {

// Contract-violation error. Distinct from validation findings, which are
// collected into reports instead of thrown.
struct Fault : std::runtime_error {
    explicit Fault(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense 64-bit float tensor, rank 0..3. Shape is fixed at construction.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(int rows, int cols, std::vector<double> values);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor gaussian(std::vector<int> shape, double stddev, uint64_t seed);

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double item() const;  // scalar value; faults on rank > 0 with size != 1

    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    double& at(int a, int b, int c) {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    double at(int a, int b, int c) const {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    void require_finite(const std::string& what) const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);

// Cosine with a 1e-12 norm guard (returns 0 for degenerate inputs). Shared by
// the tape op and value-level caches so both produce bit-identical results.
double cosine_value(const Tensor& u, const Tensor& v);

}  // namespace mrckg
