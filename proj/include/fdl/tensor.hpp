#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fdl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles; the universal value carrier.
/// Invariant: data.size() == product of shape at all times.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

/// Learnable value paired with its gradient accumulator.
/// grad accumulates additively across backward passes until zero_grad().
struct Param {
    Tensor value;
    Tensor grad;

    Param() = default;
    explicit Param(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad();
};

/// Integer class-label map, H rows by W columns.
struct LabelMap {
    std::size_t h = 0, w = 0;
    std::vector<std::int32_t> data;

    LabelMap() = default;
    LabelMap(std::size_t height, std::size_t width, std::int32_t fill = 0)
        : h(height), w(width), data(height * width, fill) {}

    std::int32_t& at(std::size_t r, std::size_t c) { return data[r * w + c]; }
    std::int32_t at(std::size_t r, std::size_t c) const { return data[r * w + c]; }
    bool operator==(const LabelMap&) const = default;
};

// ---- elementary kernels (pure forms; the tape wraps these for autodiff) ----

/// Standard matrix product of a [M,K] by [K,P]; throws DimensionError naming
/// both shapes when the inner dimensions disagree.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose2d(const Tensor& a);

/// Numerically shifted softmax along `axis`; every slice sums to 1.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Adaptive average pooling of a [C,H,W] map to [C,N,N]. Bin (i,j) averages
/// rows floor(i*H/N)..ceil((i+1)*H/N)-1 and the analogous columns.
Tensor adaptive_avg_pool(const Tensor& x, std::size_t n);

// ---- FDLT tensor file format ----
// 4-byte magic "FDLT", 1 byte rank, rank x 8-byte little-endian dims,
// then row-major 8-byte little-endian IEEE-754 doubles.

void write_fdlt(const std::filesystem::path& path, const Tensor& t);
Tensor read_fdlt(const std::filesystem::path& path);

std::string encode_fdlt(const Tensor& t);
Tensor decode_fdlt(std::string_view bytes);

}  // namespace fdl
