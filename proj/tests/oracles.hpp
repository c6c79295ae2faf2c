// Independent reference implementations used as test oracles. These stay
// deliberately naive (direct sums, explicit loops) and never call into the
// code paths they are checking.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "fdl/tensor.hpp"

namespace oracle {

// plain triple-loop matrix product
inline fdl::Tensor matmul(const fdl::Tensor& a, const fdl::Tensor& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
    fdl::Tensor c({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
            c.at(i, j) = acc;
        }
    return c;
}

// direct exp/sum softmax over a vector
inline std::vector<double> softmax_vec(const std::vector<double>& x) {
    double sum = 0.0;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i]);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// per-pixel matrix-vector product for a 1x1 convolution
inline fdl::Tensor conv1x1(const fdl::Tensor& x, const fdl::Tensor& w,
                           const std::vector<double>* bias) {
    const std::size_t b = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const std::size_t cout = w.shape[0];
    fdl::Tensor y({b, cout, h, wd});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < wd; ++c) {
                    double acc = bias ? (*bias)[co] : 0.0;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        acc += w.at(co, ci) * x.at(bi, ci, r, c);
                    y.at(bi, co, r, c) = acc;
                }
    return y;
}

// explicit bin-loop average pooling
inline fdl::Tensor adaptive_avg_pool(const fdl::Tensor& x, std::size_t n) {
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    fdl::Tensor y({c, n, n});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t r0 = i * h / n;
                const std::size_t r1 = static_cast<std::size_t>(
                    std::ceil(static_cast<double>((i + 1) * h) / static_cast<double>(n)));
                const std::size_t c0 = j * w / n;
                const std::size_t c1 = static_cast<std::size_t>(
                    std::ceil(static_cast<double>((j + 1) * w) / static_cast<double>(n)));
                double acc = 0.0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t cc = c0; cc < c1; ++cc) acc += x.at(ch, r, cc);
                y.at(ch, i, j) = acc / static_cast<double>((r1 - r0) * (c1 - c0));
            }
    return y;
}

// quadruple-sum 2-D DCT-II with explicit compensation factors
inline fdl::Tensor dct2(const fdl::Tensor& block) {
    const std::size_t n = block.shape[0];
    const double dn = static_cast<double>(n);
    auto comp = [&](std::size_t u) {
        return u == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
    };
    fdl::Tensor spec({n, n});
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) {
            double acc = 0.0;
            for (std::size_t x = 0; x < n; ++x)
                for (std::size_t y = 0; y < n; ++y) {
                    acc += block.at(x, y) *
                           std::cos((2.0 * x + 1.0) * u * std::numbers::pi / (2.0 * dn)) *
                           std::cos((2.0 * y + 1.0) * v * std::numbers::pi / (2.0 * dn));
                }
            spec.at(u, v) = comp(u) * comp(v) * acc;
        }
    return spec;
}

// two-pass mean/population-variance
inline std::pair<double, double> mean_var(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(xs.size());
    return {mean, var};
}

// all-pairs Chebyshev-neighbourhood edge detector
inline std::vector<std::uint8_t> edge_mask(const fdl::LabelMap& labels, long radius,
                                           std::int32_t ignore) {
    const long h = static_cast<long>(labels.h), w = static_cast<long>(labels.w);
    std::vector<std::uint8_t> mask(labels.h * labels.w, 0);
    for (long y1 = 0; y1 < h; ++y1)
        for (long x1 = 0; x1 < w; ++x1)
            for (long y2 = 0; y2 < h; ++y2)
                for (long x2 = 0; x2 < w; ++x2) {
                    if (std::max(std::labs(y1 - y2), std::labs(x1 - x2)) > radius) continue;
                    const std::int32_t a = labels.at(y1, x1);
                    const std::int32_t b = labels.at(y2, x2);
                    if (a == ignore || b == ignore) continue;
                    if (a != b) mask[static_cast<std::size_t>(y1 * w + x1)] = 1;
                }
    return mask;
}

// per-pixel log-softmax cross entropy, averaged over a pixel subset
inline double ce_mean(const fdl::Tensor& logits, const fdl::LabelMap& labels,
                      const std::vector<std::size_t>& pixels) {
    const std::size_t k = logits.shape[0];
    const std::size_t hw = logits.shape[1] * logits.shape[2];
    double acc = 0.0;
    for (std::size_t p : pixels) {
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits.data[c * hw + p]);
        acc += std::log(sum) -
               logits.data[static_cast<std::size_t>(labels.data[p]) * hw + p];
    }
    return acc / static_cast<double>(pixels.size());
}

// explicit double-loop affinity fusion: A(i,j) = softmax_i(rs_i . rf_j),
// out = alpha * (A rs) + rs
inline fdl::Tensor sff(const fdl::Tensor& rs, const fdl::Tensor& rf, double alpha) {
    const std::size_t c = rs.shape[0], d = rs.shape[1];
    fdl::Tensor a({c, c});
    for (std::size_t j = 0; j < c; ++j) {
        std::vector<double> col(c);
        for (std::size_t i = 0; i < c; ++i) {
            double dot = 0.0;
            for (std::size_t t = 0; t < d; ++t) dot += rs.at(i, t) * rf.at(j, t);
            col[i] = dot;
        }
        const double mx = *std::max_element(col.begin(), col.end());
        double sum = 0.0;
        for (double& v : col) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (std::size_t i = 0; i < c; ++i) a.at(i, j) = col[i] / sum;
    }
    fdl::Tensor out({c, d});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t t = 0; t < d; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += a.at(i, j) * rs.at(j, t);
            out.at(i, t) = alpha * acc + rs.at(i, t);
        }
    return out;
}

// per-class intersection/union counting
inline double miou(const std::vector<fdl::LabelMap>& preds,
                   const std::vector<fdl::LabelMap>& gts, std::size_t classes) {
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            for (std::size_t k = 0; k < preds[i].data.size(); ++k) {
                const bool inp = preds[i].data[k] == static_cast<std::int32_t>(c);
                const bool ing = gts[i].data[k] == static_cast<std::int32_t>(c);
                inter += inp && ing;
                uni += inp || ing;
            }
        }
        if (uni == 0) continue;
        acc += static_cast<double>(inter) / static_cast<double>(uni);
        ++counted;
    }
    return counted ? acc / static_cast<double>(counted) : 0.0;
}

}  // namespace oracle
