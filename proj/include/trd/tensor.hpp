#pragma once

#include <cmath>
#include <cstdint>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace trd {

// 64-byte-aligned storage keeps vectorized kernels on identical code paths
// regardless of heap layout, which makes whole-run results bit-reproducible.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

using AlignedVec = std::vector<double, AlignedAllocator<double>>;

// Error taxonomy used across the library. Everything derives from trd::Error
// so the CLI can map config problems to exit 2 and runtime failures to exit 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct IngestionError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct MetricError : Error { using Error::Error; };
struct TrainError : Error { using Error::Error; };
struct CalibrationError : Error { using Error::Error; };
struct EvaluationError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

// Dense row-major double tensor. Rank is dynamic; the network path uses
// NCHW throughout, anomaly maps are HxW, loss scalars are {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        v_.assign(static_cast<size_t>(count(shape_)), 0.0);
    }
    Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
        v_.assign(static_cast<size_t>(count(shape_)), fill);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double& operator[](std::int64_t i) { return v_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return v_[static_cast<size_t>(i)]; }

    // NCHW accessor
    double& at(int n, int c, int h, int w) {
        return v_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    double at(int n, int c, int h, int w) const {
        return v_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    // HxW accessor
    double& at(int h, int w) { return v_[static_cast<size_t>(static_cast<std::int64_t>(h) * shape_[1] + w)]; }
    double at(int h, int w) const { return v_[static_cast<size_t>(static_cast<std::int64_t>(h) * shape_[1] + w)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double max_value() const;
    double min_value() const;
    double sum() const;
    double mean() const { return empty() ? 0.0 : sum() / static_cast<double>(size()); }

    static std::int64_t count(const Shape& s) {
        std::int64_t n = s.empty() ? 0 : 1;
        for (int d : s) n *= d;
        return n;
    }

private:
    Shape shape_;
    AlignedVec v_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace trd
