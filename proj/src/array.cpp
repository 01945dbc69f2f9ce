#include "fcmi/array.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace fcmi {

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw std::invalid_argument(
            fmt::format("array data length {} does not match shape {}x{}", data_.size(), rows, cols));
    }
}

Array::Array(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw std::invalid_argument("ragged initializer for Array");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Array Array::row(std::span<const double> values) {
    return Array(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

double Array::item() const {
    if (rows_ != 1 || cols_ != 1) {
        throw std::invalid_argument(fmt::format("item() on non-scalar array of shape {}", shape_string()));
    }
    return data_[0];
}

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Array::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

Array select_rows(const Array& a, std::span<const std::size_t> indices) {
    Array out(indices.size(), a.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= a.rows()) throw std::out_of_range("select_rows index out of range");
        std::copy_n(a.row_span(indices[r]).begin(), a.cols(), out.row_span(r).begin());
    }
    return out;
}

double max_abs_diff(const Array& a, const Array& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(
            fmt::format("max_abs_diff shape mismatch {} vs {}", a.shape_string(), b.shape_string()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace fcmi
