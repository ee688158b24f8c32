#pragma once

#include <cstddef>
#include <vector>

namespace sgcp {

/// Dense rows x nodes x horizon array, row-major in that order.
/// Rows are forecast origins; the horizon axis is the K-step lead.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t rows, std::size_t nodes, std::size_t horizon, double fill = 0.0)
        : rows_(rows), nodes_(nodes), horizon_(horizon), data_(rows * nodes * horizon, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t t, std::size_t i, std::size_t h) {
        return data_[(t * nodes_ + i) * horizon_ + h];
    }
    double operator()(std::size_t t, std::size_t i, std::size_t h) const {
        return data_[(t * nodes_ + i) * horizon_ + h];
    }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool same_shape(const Tensor3& other) const noexcept {
        return rows_ == other.rows_ && nodes_ == other.nodes_ && horizon_ == other.horizon_;
    }

    /// Rows [first, first + count).
    Tensor3 slice_rows(std::size_t first, std::size_t count) const;

private:
    std::size_t rows_ = 0;
    std::size_t nodes_ = 0;
    std::size_t horizon_ = 0;
    std::vector<double> data_;
};

inline Tensor3 Tensor3::slice_rows(std::size_t first, std::size_t count) const {
    Tensor3 out(count, nodes_, horizon_);
    const std::size_t stride = nodes_ * horizon_;
    for (std::size_t k = 0; k < count * stride; ++k) {
        out.data_[k] = data_[first * stride + k];
    }
    return out;
}

}  // namespace sgcp
