#include "fdl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fdl/errors.hpp"
#include "fdl/io_util.hpp"

namespace fdl {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_str(shape));
    }
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Param::zero_grad() {
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

// ---------------------------------------------------------------------------
// pure kernels
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
    Tensor c({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a.data[i * k + t];
            if (av == 0.0) continue;
            const double* brow = &b.data[t * p];
            double* crow = &c.data[i * p];
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape));
    }
    const std::size_t m = a.shape[0], n = a.shape[1];
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t.data[j * m + i] = a.data[i * n + j];
    return t;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    const std::size_t n = x.shape[axis];

    Tensor y(x.shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = x.data[base];
            for (std::size_t a = 1; a < n; ++a) mx = std::max(mx, x.data[base + a * inner]);
            double sum = 0.0;
            for (std::size_t a = 0; a < n; ++a) {
                const double e = std::exp(x.data[base + a * inner] - mx);
                y.data[base + a * inner] = e;
                sum += e;
            }
            for (std::size_t a = 0; a < n; ++a) y.data[base + a * inner] /= sum;
        }
    }
    return y;
}

Tensor adaptive_avg_pool(const Tensor& x, std::size_t n) {
    if (x.rank() != 3) {
        throw DimensionError("adaptive_avg_pool: expected [C,H,W], got " + shape_str(x.shape));
    }
    if (n == 0) throw ConfigError("adaptive_avg_pool: output size must be positive");
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor y({c, n, n});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r0 = i * h / n;
        const std::size_t r1 = ((i + 1) * h + n - 1) / n;  // exclusive
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t c0 = j * w / n;
            const std::size_t c1 = ((j + 1) * w + n - 1) / n;
            const double inv = 1.0 / static_cast<double>((r1 - r0) * (c1 - c0));
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t cc = c0; cc < c1; ++cc) acc += x.at(ch, r, cc);
                y.at(ch, i, j) = acc * inv;
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// FDLT
// ---------------------------------------------------------------------------

namespace {

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::string encode_fdlt(const Tensor& t) {
    if (t.rank() > 255) throw FormatError("FDLT: rank exceeds 255");
    std::string out;
    out.reserve(5 + 8 * t.rank() + 8 * t.size());
    out += "FDLT";
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape) put_u64_le(out, d);
    for (double v : t.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64_le(out, bits);
    }
    return out;
}

Tensor decode_fdlt(std::string_view bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 5 || std::memcmp(p, "FDLT", 4) != 0) {
        throw FormatError("FDLT: bad magic at offset 0");
    }
    const std::size_t rank = p[4];
    std::size_t off = 5;
    if (bytes.size() < off + 8 * rank) {
        throw FormatError("FDLT: truncated header at offset " + std::to_string(bytes.size()));
    }
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64_le(p + off));
        off += 8;
    }
    const std::size_t count = shape_numel(shape);
    if (bytes.size() < off + 8 * count) {
        throw FormatError("FDLT: truncated payload at offset " + std::to_string(bytes.size()) +
                          ", expected " + std::to_string(off + 8 * count) + " bytes");
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t bits = get_u64_le(p + off);
        std::memcpy(&data[i], &bits, 8);
        off += 8;
    }
    return Tensor(std::move(shape), std::move(data));
}

void write_fdlt(const std::filesystem::path& path, const Tensor& t) {
    atomic_write_bytes(path, encode_fdlt(t));
}

Tensor read_fdlt(const std::filesystem::path& path) {
    return decode_fdlt(read_bytes(path));
}

}  // namespace fdl
