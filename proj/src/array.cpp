#include "conslearn/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace conslearn {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("array shape " + shape_to_string(shape_) + " holds " +
                             std::to_string(shape_product(shape_)) + " values, got " +
                             std::to_string(data_.size()));
    }
}

Array Array::scalar(double value) { return Array(Shape{}, std::vector<double>{value}); }

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n * d);
    for (const auto& row : rows) {
        if (row.size() != d) throw DimensionError("ragged rows in Array::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Array({n, d}, std::move(data));
}

Array Array::slice_rows(std::size_t begin, std::size_t end) const {
    if (rank() == 0 || end > shape_[0] || begin > end) {
        throw DimensionError("slice_rows out of range for " + shape_to_string(shape_));
    }
    Shape out_shape = shape_;
    out_shape[0] = end - begin;
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                            data_.begin() + static_cast<std::ptrdiff_t>(end * stride));
    return Array(std::move(out_shape), std::move(out));
}

Array Array::reshaped(Shape shape) const {
    if (shape_product(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Array(std::move(shape), data_);
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Array::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Array stack(std::span<const Array> items) {
    if (items.empty()) throw DimensionError("stack of zero arrays");
    Shape shape = items.front().shape();
    std::vector<double> data;
    data.reserve(items.size() * items.front().size());
    for (const auto& item : items) {
        if (item.shape() != shape) {
            throw DimensionError("stack: " + shape_to_string(item.shape()) + " vs " + shape_to_string(shape));
        }
        data.insert(data.end(), item.values().begin(), item.values().end());
    }
    shape.insert(shape.begin(), items.size());
    return Array(std::move(shape), std::move(data));
}

}  // namespace conslearn
