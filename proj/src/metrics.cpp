#include "fdl/metrics.hpp"

#include "fdl/errors.hpp"

namespace fdl {

IouReport evaluate_miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                        std::size_t classes) {
    if (preds.size() != gts.size()) {
        throw DimensionError("evaluate_miou: " + std::to_string(preds.size()) +
                             " predictions vs " + std::to_string(gts.size()) + " labels");
    }
    if (preds.empty()) throw DataError("evaluate_miou: empty input");
    if (classes < 2) throw ConfigError("evaluate_miou: need at least 2 classes");

    std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const LabelMap& p = preds[i];
        const LabelMap& g = gts[i];
        if (p.h != g.h || p.w != g.w) {
            throw DimensionError("evaluate_miou: map " + std::to_string(i) + " is [" +
                                 std::to_string(p.h) + " x " + std::to_string(p.w) +
                                 "] vs [" + std::to_string(g.h) + " x " +
                                 std::to_string(g.w) + "]");
        }
        for (std::size_t k = 0; k < p.data.size(); ++k) {
            const std::int32_t pv = p.data[k], gv = g.data[k];
            if (pv < 0 || static_cast<std::size_t>(pv) >= classes || gv < 0 ||
                static_cast<std::size_t>(gv) >= classes) {
                throw ConfigError("evaluate_miou: label outside [0," +
                                  std::to_string(classes) + ")");
            }
            if (pv == gv) {
                ++tp[static_cast<std::size_t>(pv)];
            } else {
                ++fp[static_cast<std::size_t>(pv)];
                ++fn[static_cast<std::size_t>(gv)];
            }
        }
    }

    IouReport report;
    report.per_class.assign(classes, 0.0);
    report.present.assign(classes, false);
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t uni = tp[c] + fp[c] + fn[c];
        if (uni == 0) continue;  // absent from both prediction and ground truth
        report.present[c] = true;
        report.per_class[c] = static_cast<double>(tp[c]) / static_cast<double>(uni);
        acc += report.per_class[c];
        ++counted;
    }
    report.miou = counted ? acc / static_cast<double>(counted) : 0.0;
    return report;
}

LabelMap argmax_labels(const Tensor& logits) {
    if (logits.rank() != 3) {
        throw DimensionError("argmax_labels: expected [K,H,W], got " + shape_str(logits.shape));
    }
    const std::size_t k = logits.shape[0], h = logits.shape[1], w = logits.shape[2];
    const std::size_t hw = h * w;
    LabelMap out(h, w, 0);
    for (std::size_t p = 0; p < hw; ++p) {
        double best = logits.data[p];
        std::int32_t arg = 0;
        for (std::size_t c = 1; c < k; ++c) {
            const double v = logits.data[c * hw + p];
            if (v > best) {
                best = v;
                arg = static_cast<std::int32_t>(c);
            }
        }
        out.data[p] = arg;
    }
    return out;
}

}  // namespace fdl
