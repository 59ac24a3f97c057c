#pragma once

#include <cstdint>
#include <memory>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace camogen {

using real = double;

// 64-byte aligned allocation for every numeric buffer. With a fixed
// alignment the vectorized kernels always split loops at the same points, so
// forward passes are bit-reproducible across runs.
template <typename T, size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}
    T* allocate(size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

using AlignedVec = std::vector<real, AlignedAllocator<real>>;

// Dense row-major tensor of doubles. Handle semantics like cv::Mat: copies
// share storage, clone() deep-copies. Nothing in the forward/metric paths
// mutates a tensor it does not own; in-place mutation is reserved for
// initializers and the optimizer update.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<AlignedVec>(count(shape_), real(0))) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, real v) {
        Tensor t(std::move(shape));
        std::fill(t.data_->begin(), t.data_->end(), v);
        return t;
    }

    static Tensor from(std::vector<int> shape, const std::vector<real>& values) {
        if (count(shape) != static_cast<int64_t>(values.size()))
            throw std::invalid_argument("Tensor::from: value count does not match shape");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<AlignedVec>(values.begin(), values.end());
        return t;
    }

    static Tensor scalar(real v) { return full({1}, v); }

    bool defined() const { return static_cast<bool>(data_); }
    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return defined() ? static_cast<int64_t>(data_->size()) : 0; }

    real* data() { return data_->data(); }
    const real* data() const { return data_->data(); }

    real& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    // rank-3 (C,H,W) accessors
    real& at(int c, int y, int x) {
        return (*data_)[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    real at(int c, int y, int x) const {
        return (*data_)[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    // rank-2 (H,W) accessors
    real& at(int y, int x) { return (*data_)[static_cast<size_t>(y) * shape_[1] + x]; }
    real at(int y, int x) const { return (*data_)[static_cast<size_t>(y) * shape_[1] + x]; }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<AlignedVec>(*data_);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;
    void fill(real v) { std::fill(data_->begin(), data_->end(), v); }

    // exact elementwise equality (bit-identical contents and shape)
    bool equals(const Tensor& o) const;

    std::string shape_str() const;

private:
    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return s.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::shared_ptr<AlignedVec> data_;
};

}  // namespace camogen
