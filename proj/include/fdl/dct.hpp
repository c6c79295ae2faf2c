#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fdl/tensor.hpp"

namespace fdl {

/// Orthonormal 1-D DCT-II basis for block size N.
/// basis1d[u][x] = c(u) * cos((2x+1) u pi / (2N)) with c(0) = sqrt(1/N) and
/// c(u>0) = sqrt(2/N), so basis1d * basis1d^T == I.
struct DctBasis {
    std::size_t n = 0;
    Tensor basis1d;  // [N,N]
};

DctBasis make_basis(std::size_t n);

/// 2-D DCT-II of an [N,N] block, computed separably as B * X * B^T.
Tensor dct2(const Tensor& block, const DctBasis& basis);

/// Inverse transform: B^T * X * B. idct2(dct2(x)) == x up to rounding.
Tensor idct2(const Tensor& spectrum, const DctBasis& basis);

/// Mapping from channel-group index i to spectrum coordinates (u_i, v_i).
/// order[0] is always the DC pair (0,0).
struct FrequencyAssignment {
    std::size_t block_size = 0;  // N
    std::size_t components = 0;  // n == N*N
    std::vector<std::pair<std::size_t, std::size_t>> order;
};

/// JPEG zigzag traversal of the N x N grid: (0,0),(0,1),(1,0),(2,0),(1,1),...
FrequencyAssignment zigzag_order(std::size_t n);

/// Length-C vector of per-channel DCT responses; entry k belongs to frequency
/// component floor(k / group_size).
struct MultiSpectralVector {
    Tensor values;  // [C]
    std::size_t groups = 0;
    std::size_t group_size = 0;
};

/// Pools [C,H,W] features to N x N, splits channels into n consecutive groups
/// and keeps, for every channel, the single DCT coefficient assigned to its
/// group. Throws ConfigError when C is not divisible by n.
MultiSpectralVector multispectral_extract(const Tensor& f_spatial,
                                          const FrequencyAssignment& assignment,
                                          const DctBasis& basis);

}  // namespace fdl
