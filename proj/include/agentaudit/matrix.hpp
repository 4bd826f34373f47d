#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace agentaudit {

/// Dense row-major matrix.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    T& at(std::size_t r, std::size_t c) {
        check(r, c);
        return (*this)(r, c);
    }
    const T& at(std::size_t r, std::size_t c) const {
        check(r, c);
        return (*this)(r, c);
    }

    Matrix& operator+=(const Matrix& o) {
        if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("matrix shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    const std::vector<T>& data() const { return data_; }
    bool operator==(const Matrix&) const = default;

private:
    void check(std::size_t r, std::size_t c) const {
        if (r >= rows_ || c >= cols_) throw std::out_of_range("matrix index out of range");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

}  // namespace agentaudit
