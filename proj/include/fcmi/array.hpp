#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fcmi {

/// Dense row-major matrix of doubles. Vectors are 1×n, scalars are 1×1.
class Array {
public:
    Array() = default;
    Array(std::size_t rows, std::size_t cols, double fill = 0.0);
    Array(std::size_t rows, std::size_t cols, std::vector<double> data);
    Array(std::initializer_list<std::initializer_list<double>> rows);

    static Array scalar(double v) { return Array(1, 1, v); }
    static Array row(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    bool same_shape(const Array& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Value of a 1×1 array.
    double item() const;
    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Array&, const Array&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Array select_rows(const Array& a, std::span<const std::size_t> indices);
double max_abs_diff(const Array& a, const Array& b);

}  // namespace fcmi
