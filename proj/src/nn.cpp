#include "fdl/nn.hpp"

#include <cmath>
#include <sstream>

#include "fdl/errors.hpp"
#include "fdl/io_util.hpp"

namespace fdl {

LfeParams::LfeParams(std::size_t n, std::size_t group_sz)
    : components(n),
      group_size(group_sz),
      lfcc_weight(Tensor({1, group_sz})),
      gamma(Tensor({1}, {1.0})),
      beta(Tensor({1})) {
    if (n < 2) throw ConfigError("LfeParams: need at least 2 frequency components");
    if (group_sz == 0) throw ConfigError("LfeParams: group size must be positive");
}

LfeNodes lfe_forward(Tape& tape, ValueId v_freq, LfeParams& params, double eps) {
    const Tensor& v = tape.value(v_freq);
    const std::size_t c = v.size();
    const std::size_t n = params.components;
    if (n == 0 || c != n * params.group_size) {
        throw ConfigError("lfe_forward: vector length " + std::to_string(c) +
                          " does not split into " + std::to_string(n) + " groups of " +
                          std::to_string(params.group_size));
    }
    // V_freq viewed as n x (C/n) x 1 x 1, scored per group, normalized over
    // the n scores, softmaxed into simplex weights.
    ValueId grouped = tape.reshape(v_freq, {n, params.group_size, 1, 1});
    ValueId scores = tape.conv1x1(grouped, tape.param(params.lfcc_weight), std::nullopt);
    ValueId normed = tape.normalize_groups(scores, tape.param(params.gamma),
                                           tape.param(params.beta), eps);
    ValueId weights = tape.softmax(tape.reshape(normed, {n}), 0);
    ValueId v_prime = tape.group_scale(v_freq, weights);
    return LfeNodes{v_prime, weights};
}

ValueId lfe_variants(Tape& tape, ValueId v_freq, FrequencyMode mode, std::size_t n,
                     std::size_t k, LfeParams* params) {
    switch (mode) {
        case FrequencyMode::learnable: {
            if (!params) throw ConfigError("lfe_variants: learnable mode needs parameters");
            return lfe_forward(tape, v_freq, *params).v_prime;
        }
        case FrequencyMode::static_all:
            return v_freq;
        case FrequencyMode::top_k: {
            if (k < 1 || k > n) {
                throw ConfigError("lfe_variants: top_k k=" + std::to_string(k) +
                                  " outside [1," + std::to_string(n) + "]");
            }
            Tensor w({n});
            for (std::size_t i = 0; i < k; ++i) w.data[i] = 1.0;
            return tape.group_scale(v_freq, tape.constant(std::move(w)));
        }
    }
    throw ConfigError("lfe_variants: unknown mode");
}

SffParams::SffParams(std::size_t fused_channels, std::size_t context_channels,
                     std::size_t freq_channels)
    : proj_s(Tensor({fused_channels, context_channels})),
      proj_f(Tensor({fused_channels, freq_channels})),
      alpha(Tensor({1})) {}

SffNodes sff_forward(Tape& tape, ValueId context_feat, ValueId v_freq_prime,
                     SffParams& params) {
    const Tensor& ctx = tape.value(context_feat);
    if (ctx.rank() != 3) {
        throw DimensionError("sff_forward: expected context [C,h,w], got " +
                             shape_str(ctx.shape));
    }
    if (params.proj_s.value.shape[0] != params.proj_f.value.shape[0]) {
        throw ConfigError("sff_forward: projection output channels disagree: " +
                          std::to_string(params.proj_s.value.shape[0]) + " vs " +
                          std::to_string(params.proj_f.value.shape[0]));
    }
    const std::size_t cp = params.proj_s.value.shape[0];
    const std::size_t h = ctx.shape[1], w = ctx.shape[2];
    const std::size_t d = h * w;

    ValueId ctx4 = tape.reshape(context_feat, {1, ctx.shape[0], h, w});
    ValueId rs4 = tape.conv1x1(ctx4, tape.param(params.proj_s), std::nullopt);
    ValueId rs = tape.reshape(rs4, {cp, d});  // spatial rows

    const std::size_t cf = tape.value(v_freq_prime).size();
    ValueId vf4 = tape.reshape(v_freq_prime, {1, cf, 1, 1});
    ValueId rf1 = tape.conv1x1(vf4, tape.param(params.proj_f), std::nullopt);
    ValueId rf = tape.broadcast_cols(tape.reshape(rf1, {cp}), d);

    // A(i,j) = softmax over i of R_s^i . R_f^j; every column sums to 1
    ValueId logits = tape.matmul(rs, tape.transpose(rf));
    ValueId affinity = tape.softmax(logits, 0);
    ValueId attended = tape.matmul(affinity, rs);
    ValueId fused2d = tape.add(tape.scale_by(attended, tape.param(params.alpha)), rs);

    SffNodes out;
    out.fused = tape.reshape(fused2d, {cp, h, w});
    out.affinity = affinity;
    out.spatial = tape.reshape(rs, {cp, h, w});
    return out;
}

std::vector<std::uint8_t> edge_mask(const LabelMap& labels, std::size_t radius,
                                    std::int32_t ignore_index) {
    if (radius == 0) throw ConfigError("edge_mask: radius must be at least 1");
    const long h = static_cast<long>(labels.h), w = static_cast<long>(labels.w);
    const long r = static_cast<long>(radius);
    std::vector<std::uint8_t> mask(labels.h * labels.w, 0);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const std::int32_t lbl = labels.at(static_cast<std::size_t>(y),
                                               static_cast<std::size_t>(x));
            if (lbl == ignore_index) continue;
            bool edge = false;
            for (long dy = -r; dy <= r && !edge; ++dy) {
                const long ny = y + dy;
                if (ny < 0 || ny >= h) continue;
                for (long dx = -r; dx <= r; ++dx) {
                    const long nx = x + dx;
                    if (nx < 0 || nx >= w) continue;
                    const std::int32_t nb = labels.at(static_cast<std::size_t>(ny),
                                                      static_cast<std::size_t>(nx));
                    if (nb != ignore_index && nb != lbl) {
                        edge = true;
                        break;
                    }
                }
            }
            if (edge) mask[static_cast<std::size_t>(y * w + x)] = 1;
        }
    }
    return mask;
}

SegLossNodes seg_losses(Tape& tape, ValueId pred_logits, const LabelMap& labels,
                        const LossConfig& cfg) {
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) {
        throw ConfigError("seg_losses: loss weights must be nonnegative");
    }
    if (cfg.ohem_keep_fraction <= 0.0 || cfg.ohem_keep_fraction > 1.0) {
        throw ConfigError("seg_losses: ohem keep fraction must lie in (0,1]");
    }
    const auto mask = edge_mask(labels, cfg.edge_radius, cfg.ignore_index);
    SegLossNodes out;
    out.seg = tape.ce_mean(pred_logits, labels, cfg.ignore_index, cfg.ohem_enabled,
                           cfg.ohem_keep_fraction);
    out.edge = tape.ce_masked(pred_logits, labels, cfg.ignore_index, mask);
    out.total = tape.add(tape.scale(out.seg, cfg.lambda1), tape.scale(out.edge, cfg.lambda2));
    return out;
}

void write_lfe_weights_csv(const std::filesystem::path& path, const Tensor& weights,
                           const FrequencyAssignment& assignment) {
    if (weights.size() != assignment.components) {
        throw DimensionError("lfe weights csv: " + std::to_string(weights.size()) +
                             " weights vs " + std::to_string(assignment.components) +
                             " components");
    }
    std::ostringstream os;
    os << "component_index,u,v,weight\n";
    for (std::size_t i = 0; i < assignment.components; ++i) {
        os << i << "," << assignment.order[i].first << "," << assignment.order[i].second << ","
           << fmt_double(weights.data[i]) << "\n";
    }
    atomic_write_bytes(path, os.str());
}

}  // namespace fdl
