#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fdl/dct.hpp"
#include "fdl/tensor.hpp"

namespace fdl {

/// Handle to a value recorded on a Tape.
struct ValueId {
    std::size_t idx = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape. Operations append nodes during the forward pass;
/// backward() replays them once in reverse creation order, single-threaded,
/// so gradient accumulation order is deterministic.
///
/// A tape is not shareable across concurrent passes; run one tape per thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    ValueId constant(Tensor t);
    /// Registers a leaf for `p`. Repeat registration of the same Param on
    /// one tape returns the same node, so shared weights accumulate.
    ValueId param(Param& p);

    const Tensor& value(ValueId id) const { return nodes_[id.idx].value; }
    const Tensor& grad(ValueId id) const { return nodes_[id.idx].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // elementwise / structural
    ValueId add(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId scale(ValueId x, double c);
    ValueId scale_by(ValueId x, ValueId scalar);  // scalar: 1-element tensor
    ValueId square(ValueId x);
    ValueId sum(ValueId x);  // -> shape {1}
    ValueId relu(ValueId x);
    ValueId reshape(ValueId x, Shape shape);
    ValueId broadcast_cols(ValueId v, std::size_t cols);  // [C] -> [C,cols]
    ValueId concat_channels(const std::vector<ValueId>& xs);  // [Ci,H,W] -> [sum,H,W]

    // linear algebra
    ValueId matmul(ValueId a, ValueId b);
    ValueId transpose(ValueId a);
    ValueId softmax(ValueId x, std::size_t axis);

    // NCHW kernels
    ValueId conv1x1(ValueId x, ValueId weight, std::optional<ValueId> bias);
    ValueId conv3x3(ValueId x, ValueId weight, ValueId bias, std::size_t stride);
    ValueId normalize_groups(ValueId x, ValueId gamma, ValueId beta, double eps);
    ValueId adaptive_avg_pool(ValueId x, std::size_t n);
    ValueId upsample_bilinear(ValueId x, std::size_t out_h, std::size_t out_w);

    // frequency ops
    /// Gathers per-channel DCT coefficients of a pooled [C,N,N] map: channel k
    /// in group i projects onto the basis function at the group's (u_i, v_i).
    ValueId multispectral(ValueId pooled, const FrequencyAssignment& assignment,
                          const DctBasis& basis);
    /// y[k] = w[k / (C/n)] * v[k]; per-frequency-group rescaling.
    ValueId group_scale(ValueId v, ValueId weights);

    // losses (mean cross-entropy over pixel subsets)
    ValueId ce_mean(ValueId logits, const LabelMap& labels, std::int32_t ignore_index,
                    bool ohem, double keep_fraction);
    ValueId ce_masked(ValueId logits, const LabelMap& labels, std::int32_t ignore_index,
                      const std::vector<std::uint8_t>& mask);

    /// Seeds d(loss)=1 (loss must be a single element) and replays the tape
    /// in reverse. Gradients are then readable via grad().
    void backward(ValueId loss);

    /// Adds scale * d(loss)/d(param) into each registered Param's grad, in
    /// registration order.
    void accumulate_param_grads(double scale = 1.0);

    /// Gradient for one Param (zeros if the param was never used here).
    Tensor param_grad(const Param& p) const;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;  // empty for leaves and constants
        const char* op = "";
    };

    ValueId push(Tensor value, const char* op, std::function<void(Tape&)> back);
    Tensor& grad_mut(ValueId id) { return nodes_[id.idx].grad; }

    std::vector<Node> nodes_;
    std::vector<std::pair<Param*, std::size_t>> leaves_;
};

/// Max over all parameter entries of |analytic - numeric| / max(1e-8,
/// |analytic| + |numeric|), with central differences at step eps. The loss
/// builder is re-run on a fresh tape for every probe, so it must be
/// deterministic. Throws NumericError if the loss is non-finite.
double grad_check(const std::function<ValueId(Tape&)>& build_loss,
                  const std::vector<Param*>& params, double eps = 1e-6);

/// Two-tier variant for composite graphs. A double-precision central
/// difference carries rounding noise of roughly ulp(loss)/(2 eps) ~ 1e-10,
/// so entries whose true gradient sits near zero cannot be certified by a
/// relative bound at all; they are instead held to an absolute one.
///   |analytic| + |numeric| >= rel_cut  ->  counted in max_rel
///   below the cut                      ->  counted in max_abs_small
struct GradCheckDetail {
    double max_rel = 0.0;
    double max_abs_small = 0.0;
    std::size_t rel_entries = 0;
    std::size_t small_entries = 0;

    bool pass(double rel_tol, double abs_tol) const {
        return max_rel < rel_tol && max_abs_small < abs_tol;
    }
};

GradCheckDetail grad_check_detailed(const std::function<ValueId(Tape&)>& build_loss,
                                    const std::vector<Param*>& params, double eps = 1e-6,
                                    double rel_cut = 1e-3);

}  // namespace fdl
