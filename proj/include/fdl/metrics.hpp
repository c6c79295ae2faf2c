#pragma once

#include <vector>

#include "fdl/tensor.hpp"

namespace fdl {

struct IouReport {
    std::vector<double> per_class;  // valid only where present[c]
    std::vector<bool> present;      // class appears in gt or pred
    double miou = 0.0;
};

/// IoU_c = TP_c / (TP_c + FP_c + FN_c) aggregated over the whole sequence;
/// classes absent from both prediction and ground truth are excluded from
/// the mean. Labels must lie in [0, classes).
IouReport evaluate_miou(const std::vector<LabelMap>& preds,
                        const std::vector<LabelMap>& gts, std::size_t classes);

/// Per-pixel argmax of [K,H,W] logits; ties resolve to the lowest class.
LabelMap argmax_labels(const Tensor& logits);

}  // namespace fdl
