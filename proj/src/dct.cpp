#include "fdl/dct.hpp"

#include <cmath>
#include <numbers>

#include "fdl/errors.hpp"

namespace fdl {

DctBasis make_basis(std::size_t n) {
    if (n == 0) throw ConfigError("make_basis: block size must be positive");
    DctBasis basis;
    basis.n = n;
    basis.basis1d = Tensor({n, n});
    const double dn = static_cast<double>(n);
    const double c0 = std::sqrt(1.0 / dn);
    const double cu = std::sqrt(2.0 / dn);
    for (std::size_t u = 0; u < n; ++u) {
        const double comp = (u == 0) ? c0 : cu;
        for (std::size_t x = 0; x < n; ++x) {
            basis.basis1d.at(u, x) =
                comp * std::cos((2.0 * static_cast<double>(x) + 1.0) *
                                static_cast<double>(u) * std::numbers::pi / (2.0 * dn));
        }
    }
    return basis;
}

Tensor dct2(const Tensor& block, const DctBasis& basis) {
    if (block.rank() != 2 || block.shape[0] != basis.n || block.shape[1] != basis.n) {
        throw DimensionError("dct2: expected [" + std::to_string(basis.n) + " x " +
                             std::to_string(basis.n) + "], got " + shape_str(block.shape));
    }
    return matmul(matmul(basis.basis1d, block), transpose2d(basis.basis1d));
}

Tensor idct2(const Tensor& spectrum, const DctBasis& basis) {
    if (spectrum.rank() != 2 || spectrum.shape[0] != basis.n || spectrum.shape[1] != basis.n) {
        throw DimensionError("idct2: expected [" + std::to_string(basis.n) + " x " +
                             std::to_string(basis.n) + "], got " + shape_str(spectrum.shape));
    }
    return matmul(matmul(transpose2d(basis.basis1d), spectrum), basis.basis1d);
}

FrequencyAssignment zigzag_order(std::size_t n) {
    if (n == 0) throw ConfigError("zigzag_order: block size must be positive");
    FrequencyAssignment a;
    a.block_size = n;
    a.components = n * n;
    a.order.reserve(a.components);
    const long last = static_cast<long>(n) - 1;
    for (long s = 0; s <= 2 * last; ++s) {
        const long lo = std::max(0L, s - last);
        const long hi = std::min(s, last);
        if (s % 2 == 1) {
            for (long r = lo; r <= hi; ++r)  // down-left
                a.order.emplace_back(static_cast<std::size_t>(r),
                                     static_cast<std::size_t>(s - r));
        } else {
            for (long r = hi; r >= lo; --r)  // up-right
                a.order.emplace_back(static_cast<std::size_t>(r),
                                     static_cast<std::size_t>(s - r));
        }
    }
    return a;
}

MultiSpectralVector multispectral_extract(const Tensor& f_spatial,
                                          const FrequencyAssignment& assignment,
                                          const DctBasis& basis) {
    if (f_spatial.rank() != 3) {
        throw DimensionError("multispectral_extract: expected [C,H,W], got " +
                             shape_str(f_spatial.shape));
    }
    const std::size_t c = f_spatial.shape[0];
    const std::size_t n = assignment.components;
    if (c % n != 0) {
        throw ConfigError("multispectral_extract: channel count " + std::to_string(c) +
                          " not divisible by component count " + std::to_string(n));
    }
    const std::size_t nb = assignment.block_size;
    const Tensor pooled = adaptive_avg_pool(f_spatial, nb);
    const std::size_t gs = c / n;

    MultiSpectralVector out;
    out.groups = n;
    out.group_size = gs;
    out.values = Tensor({c});
    for (std::size_t gi = 0; gi < n; ++gi) {
        const auto [u, v] = assignment.order[gi];
        for (std::size_t k = gi * gs; k < (gi + 1) * gs; ++k) {
            double acc = 0.0;
            for (std::size_t x = 0; x < nb; ++x) {
                double row = 0.0;
                for (std::size_t y = 0; y < nb; ++y)
                    row += pooled.at(k, x, y) * basis.basis1d.at(v, y);
                acc += basis.basis1d.at(u, x) * row;
            }
            out.values.data[k] = acc;
        }
    }
    return out;
}

}  // namespace fdl
