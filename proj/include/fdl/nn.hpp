#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fdl/tape.hpp"

namespace fdl {

/// Learnable frequency encoder parameters. The encoder maps each of the n
/// frequency groups of a multi-spectral vector to a scalar score through a
/// shared 1x1 convolution (no bias) and a per-sample group normalization,
/// softmaxes the scores into weights on the n-simplex, and rescales each
/// group by its weight.
struct LfeParams {
    std::size_t components = 0;  // n
    std::size_t group_size = 0;  // C / n
    Param lfcc_weight;           // [1, group_size]
    Param gamma;                 // [1]
    Param beta;                  // [1]

    LfeParams() = default;
    LfeParams(std::size_t n, std::size_t group_sz);
};

struct LfeNodes {
    ValueId v_prime;  // [C] reweighted vector
    ValueId weights;  // [n] simplex weights
};

/// v_freq must have length components * group_size; throws ConfigError
/// otherwise. Statistics of the normalization are taken over the n group
/// scores of the current sample, so inference needs no running state.
LfeNodes lfe_forward(Tape& tape, ValueId v_freq, LfeParams& params, double eps = 1e-5);

enum class FrequencyMode { learnable, top_k, static_all };

/// Non-learnable reference encoders: static_all passes the vector through
/// unchanged; top_k keeps the k lowest-index groups at unit weight and zeroes
/// the rest (k in [1, n]). learnable requires params and delegates to
/// lfe_forward.
ValueId lfe_variants(Tape& tape, ValueId v_freq, FrequencyMode mode, std::size_t n,
                     std::size_t k = 0, LfeParams* params = nullptr);

/// Spatial-frequency fusion parameters. Both projections must agree on the
/// output channel count; alpha starts at 0 so the fused branch is exactly
/// the identity on the spatial representation at initialization.
struct SffParams {
    Param proj_s;  // [C', C_ctx]
    Param proj_f;  // [C', C_freq]
    Param alpha;   // [1]

    SffParams() = default;
    SffParams(std::size_t fused_channels, std::size_t context_channels,
              std::size_t freq_channels);
};

struct SffNodes {
    ValueId fused;     // [C',h,w]
    ValueId affinity;  // [C',C'], every column sums to 1
    ValueId spatial;   // [C',h,w] projection of the context features
};

/// R_s = proj_s(context), R_f = proj_f(v') broadcast over the h*w positions;
/// affinity A(i,j) = softmax_i(R_s^i . R_f^j); output = alpha * (A R_s) + R_s.
SffNodes sff_forward(Tape& tape, ValueId context_feat, ValueId v_freq_prime,
                     SffParams& params);

/// A pixel is an edge iff some pixel within Chebyshev distance <= radius
/// carries a different valid class label. ignore_index pixels are never
/// edges and never make their neighbours edges.
std::vector<std::uint8_t> edge_mask(const LabelMap& labels, std::size_t radius,
                                    std::int32_t ignore_index);

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 0.01;
    std::size_t edge_radius = 1;
    std::int32_t ignore_index = -1;
    bool ohem_enabled = false;
    double ohem_keep_fraction = 0.25;
};

struct SegLossNodes {
    ValueId total;  // lambda1 * seg + lambda2 * edge
    ValueId seg;
    ValueId edge;
};

/// Cross-entropy over valid pixels (optionally OHEM-filtered to the hardest
/// ceil(keep_fraction * P)) plus cross-entropy restricted to semantic edge
/// pixels. Throws DataError when no valid pixel exists.
SegLossNodes seg_losses(Tape& tape, ValueId pred_logits, const LabelMap& labels,
                        const LossConfig& cfg);

/// CSV export of an LFE weight vector: component_index,u,v,weight.
void write_lfe_weights_csv(const std::filesystem::path& path, const Tensor& weights,
                           const FrequencyAssignment& assignment);

}  // namespace fdl
