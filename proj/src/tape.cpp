#include "fdl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdl/errors.hpp"

namespace fdl {

ValueId Tape::push(Tensor value, const char* op, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), op});
    return ValueId{nodes_.size() - 1};
}

ValueId Tape::constant(Tensor t) {
    return push(std::move(t), "constant", {});
}

ValueId Tape::param(Param& p) {
    for (const auto& [ptr, idx] : leaves_) {
        if (ptr == &p) return ValueId{idx};
    }
    ValueId id = push(p.value, "param", {});
    leaves_.emplace_back(&p, id.idx);
    return id;
}

void Tape::backward(ValueId loss) {
    if (value(loss).size() != 1) {
        throw DimensionError("backward: loss must be a single element, got " +
                             shape_str(value(loss).shape));
    }
    for (auto& node : nodes_) node.grad = Tensor::zeros(node.value.shape);
    nodes_[loss.idx].grad.data[0] = 1.0;
    for (std::size_t i = loss.idx + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

void Tape::accumulate_param_grads(double scale) {
    for (const auto& [p, idx] : leaves_) {
        const Tensor& g = nodes_[idx].grad;
        if (g.size() == 0) continue;  // backward not run
        for (std::size_t i = 0; i < g.size(); ++i) p->grad.data[i] += scale * g.data[i];
    }
}

Tensor Tape::param_grad(const Param& p) const {
    for (const auto& [ptr, idx] : leaves_) {
        if (ptr == &p && nodes_[idx].grad.size() != 0) return nodes_[idx].grad;
    }
    return Tensor::zeros(p.value.shape);
}

// ---------------------------------------------------------------------------
// elementwise / structural
// ---------------------------------------------------------------------------

ValueId Tape::add(ValueId a, ValueId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
        throw DimensionError("add: shape mismatch " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
    }
    Tensor y(ta.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = ta.data[i] + tb.data[i];
    ValueId out{nodes_.size()};
    return push(std::move(y), "add", [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] += g.data[i];
        }
    });
}

ValueId Tape::mul(ValueId a, ValueId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
        throw DimensionError("mul: shape mismatch " + shape_str(ta.shape) + " vs " +
                             shape_str(tb.shape));
    }
    Tensor y(ta.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = ta.data[i] * tb.data[i];
    ValueId out{nodes_.size()};
    return push(std::move(y), "mul", [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data[i] += bv.data[i] * g.data[i];
            gb.data[i] += av.data[i] * g.data[i];
        }
    });
}

ValueId Tape::scale(ValueId x, double c) {
    const Tensor& tx = value(x);
    Tensor y(tx.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = c * tx.data[i];
    ValueId out{nodes_.size()};
    return push(std::move(y), "scale", [x, c, out](Tape& t) {
        const Tensor& g = t.grad(out);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += c * g.data[i];
    });
}

ValueId Tape::scale_by(ValueId x, ValueId scalar) {
    const Tensor& tx = value(x);
    const Tensor& ts = value(scalar);
    if (ts.size() != 1) {
        throw DimensionError("scale_by: scalar operand must have one element, got " +
                             shape_str(ts.shape));
    }
    const double s = ts.data[0];
    Tensor y(tx.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = s * tx.data[i];
    ValueId out{nodes_.size()};
    return push(std::move(y), "scale_by", [x, scalar, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& xv = t.value(x);
        const double sv = t.value(scalar).data[0];
        Tensor& gx = t.grad_mut(x);
        Tensor& gs = t.grad_mut(scalar);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx.data[i] += sv * g.data[i];
            acc += xv.data[i] * g.data[i];
        }
        gs.data[0] += acc;
    });
}

ValueId Tape::square(ValueId x) {
    const Tensor& tx = value(x);
    Tensor y(tx.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = tx.data[i] * tx.data[i];
    ValueId out{nodes_.size()};
    return push(std::move(y), "square", [x, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += 2.0 * xv.data[i] * g.data[i];
    });
}

ValueId Tape::sum(ValueId x) {
    const Tensor& tx = value(x);
    double acc = 0.0;
    for (double v : tx.data) acc += v;
    ValueId out{nodes_.size()};
    return push(Tensor({1}, {acc}), "sum", [x, out](Tape& t) {
        const double g = t.grad(out).data[0];
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g;
    });
}

ValueId Tape::relu(ValueId x) {
    const Tensor& tx = value(x);
    Tensor y(tx.shape);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = tx.data[i] > 0.0 ? tx.data[i] : 0.0;
    ValueId out{nodes_.size()};
    return push(std::move(y), "relu", [x, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
        }
    });
}

ValueId Tape::reshape(ValueId x, Shape shape) {
    const Tensor& tx = value(x);
    if (shape_numel(shape) != tx.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(tx.shape) + " as " +
                             shape_str(shape));
    }
    Tensor y(std::move(shape), tx.data);
    ValueId out{nodes_.size()};
    return push(std::move(y), "reshape", [x, out](Tape& t) {
        const Tensor& g = t.grad(out);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    });
}

ValueId Tape::broadcast_cols(ValueId v, std::size_t cols) {
    const Tensor& tv = value(v);
    const std::size_t c = tv.size();
    Tensor y({c, cols});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < cols; ++j) y.data[i * cols + j] = tv.data[i];
    ValueId out{nodes_.size()};
    return push(std::move(y), "broadcast_cols", [v, cols, out](Tape& t) {
        const Tensor& g = t.grad(out);
        Tensor& gv = t.grad_mut(v);
        const std::size_t c = gv.size();
        for (std::size_t i = 0; i < c; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += g.data[i * cols + j];
            gv.data[i] += acc;
        }
    });
}

ValueId Tape::concat_channels(const std::vector<ValueId>& xs) {
    if (xs.empty()) throw ConfigError("concat_channels: no inputs");
    const Tensor& first = value(xs[0]);
    if (first.rank() != 3) {
        throw DimensionError("concat_channels: expected [C,H,W], got " + shape_str(first.shape));
    }
    const std::size_t h = first.shape[1], w = first.shape[2];
    std::size_t total_c = 0;
    for (ValueId id : xs) {
        const Tensor& t = value(id);
        if (t.rank() != 3 || t.shape[1] != h || t.shape[2] != w) {
            throw DimensionError("concat_channels: spatial mismatch " + shape_str(t.shape) +
                                 " vs " + shape_str(first.shape));
        }
        total_c += t.shape[0];
    }
    Tensor y({total_c, h, w});
    std::size_t off = 0;
    for (ValueId id : xs) {
        const Tensor& t = value(id);
        std::copy(t.data.begin(), t.data.end(), y.data.begin() + static_cast<long>(off));
        off += t.size();
    }
    std::vector<ValueId> inputs = xs;
    ValueId out{nodes_.size()};
    return push(std::move(y), "concat_channels", [inputs, out](Tape& t) {
        const Tensor& g = t.grad(out);
        std::size_t off = 0;
        for (ValueId id : inputs) {
            Tensor& gx = t.grad_mut(id);
            for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g.data[off + i];
            off += gx.size();
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

ValueId Tape::matmul(ValueId a, ValueId b) {
    Tensor y = fdl::matmul(value(a), value(b));
    ValueId out{nodes_.size()};
    return push(std::move(y), "matmul", [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const std::size_t m = av.shape[0], k = av.shape[1], p = bv.shape[1];
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
                const double gv = g.data[i * p + j];
                if (gv == 0.0) continue;
                const double* brow = &bv.data[j];
                double* garow = &ga.data[i * k];
                for (std::size_t t2 = 0; t2 < k; ++t2) garow[t2] += gv * brow[t2 * p];
            }
        }
        // dB = A^T * dC
        for (std::size_t t2 = 0; t2 < k; ++t2) {
            for (std::size_t i = 0; i < m; ++i) {
                const double av2 = av.data[i * k + t2];
                if (av2 == 0.0) continue;
                const double* grow = &g.data[i * p];
                double* gbrow = &gb.data[t2 * p];
                for (std::size_t j = 0; j < p; ++j) gbrow[j] += av2 * grow[j];
            }
        }
    });
}

ValueId Tape::transpose(ValueId a) {
    Tensor y = transpose2d(value(a));
    ValueId out{nodes_.size()};
    return push(std::move(y), "transpose", [a, out](Tape& t) {
        const Tensor& g = t.grad(out);
        Tensor& ga = t.grad_mut(a);
        const std::size_t m = ga.shape[0], n = ga.shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += g.data[j * m + i];
    });
}

ValueId Tape::softmax(ValueId x, std::size_t axis) {
    Tensor y = fdl::softmax(value(x), axis);
    ValueId out{nodes_.size()};
    return push(std::move(y), "softmax", [x, axis, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& yv = t.value(out);
        Tensor& gx = t.grad_mut(x);
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= yv.shape[i];
        for (std::size_t i = axis + 1; i < yv.rank(); ++i) inner *= yv.shape[i];
        const std::size_t n = yv.shape[axis];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t a = 0; a < n; ++a)
                    dot += yv.data[base + a * inner] * g.data[base + a * inner];
                for (std::size_t a = 0; a < n; ++a) {
                    const std::size_t idx = base + a * inner;
                    gx.data[idx] += yv.data[idx] * (g.data[idx] - dot);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// NCHW kernels
// ---------------------------------------------------------------------------

ValueId Tape::conv1x1(ValueId x, ValueId weight, std::optional<ValueId> bias) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(weight);
    if (xv.rank() != 4) {
        throw DimensionError("conv1x1: expected input [B,Cin,H,W], got " + shape_str(xv.shape));
    }
    if (wv.rank() != 2 || wv.shape[1] != xv.shape[1]) {
        throw DimensionError("conv1x1: weight " + shape_str(wv.shape) +
                             " does not match input channels of " + shape_str(xv.shape));
    }
    const std::size_t bsz = xv.shape[0], cin = xv.shape[1], hw = xv.shape[2] * xv.shape[3];
    const std::size_t cout = wv.shape[0];
    if (bias && value(*bias).size() != cout) {
        throw DimensionError("conv1x1: bias " + shape_str(value(*bias).shape) +
                             " does not match output channels " + std::to_string(cout));
    }
    Tensor y({bsz, cout, xv.shape[2], xv.shape[3]});
    for (std::size_t b = 0; b < bsz; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* yrow = &y.data[(b * cout + co) * hw];
            if (bias) {
                const double bv = value(*bias).data[co];
                for (std::size_t p = 0; p < hw; ++p) yrow[p] = bv;
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double w = wv.data[co * cin + ci];
                if (w == 0.0) continue;
                const double* xrow = &xv.data[(b * cin + ci) * hw];
                for (std::size_t p = 0; p < hw; ++p) yrow[p] += w * xrow[p];
            }
        }
    }
    ValueId out{nodes_.size()};
    return push(std::move(y), "conv1x1", [x, weight, bias, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(weight);
        const std::size_t bsz = xv.shape[0], cin = xv.shape[1], hw = xv.shape[2] * xv.shape[3];
        const std::size_t cout = wv.shape[0];
        Tensor& gx = t.grad_mut(x);
        Tensor& gw = t.grad_mut(weight);
        for (std::size_t b = 0; b < bsz; ++b) {
            for (std::size_t co = 0; co < cout; ++co) {
                const double* grow = &g.data[(b * cout + co) * hw];
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double w = wv.data[co * cin + ci];
                    const double* xrow = &xv.data[(b * cin + ci) * hw];
                    double* gxrow = &gx.data[(b * cin + ci) * hw];
                    double wacc = 0.0;
                    for (std::size_t p = 0; p < hw; ++p) {
                        gxrow[p] += w * grow[p];
                        wacc += xrow[p] * grow[p];
                    }
                    gw.data[co * cin + ci] += wacc;
                }
            }
        }
        if (bias) {
            Tensor& gb = t.grad_mut(*bias);
            for (std::size_t b = 0; b < bsz; ++b) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* grow = &g.data[(b * cout + co) * hw];
                    double acc = 0.0;
                    for (std::size_t p = 0; p < hw; ++p) acc += grow[p];
                    gb.data[co] += acc;
                }
            }
        }
    });
}

ValueId Tape::conv3x3(ValueId x, ValueId weight, ValueId bias, std::size_t stride) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(weight);
    const Tensor& bv = value(bias);
    if (xv.rank() != 4) {
        throw DimensionError("conv3x3: expected input [B,Cin,H,W], got " + shape_str(xv.shape));
    }
    if (wv.rank() != 4 || wv.shape[2] != 3 || wv.shape[3] != 3 || wv.shape[1] != xv.shape[1]) {
        throw DimensionError("conv3x3: weight " + shape_str(wv.shape) +
                             " does not match input " + shape_str(xv.shape));
    }
    if (stride != 1 && stride != 2) throw ConfigError("conv3x3: stride must be 1 or 2");
    const std::size_t bsz = xv.shape[0], cin = xv.shape[1], h = xv.shape[2], w = xv.shape[3];
    const std::size_t cout = wv.shape[0];
    if (bv.size() != cout) {
        throw DimensionError("conv3x3: bias " + shape_str(bv.shape) +
                             " does not match output channels " + std::to_string(cout));
    }
    // padding 1
    const std::size_t oh = (h + 2 - 3) / stride + 1;
    const std::size_t ow = (w + 2 - 3) / stride + 1;
    Tensor y({bsz, cout, oh, ow});
    for (std::size_t b = 0; b < bsz; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* yplane = &y.data[(b * cout + co) * oh * ow];
            const double bias_v = bv.data[co];
            for (std::size_t p = 0; p < oh * ow; ++p) yplane[p] = bias_v;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* xplane = &xv.data[(b * cin + ci) * h * w];
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double wk = wv.data[((co * cin + ci) * 3 + ky) * 3 + kx];
                        if (wk == 0.0) continue;
                        // iy = oy*stride + ky - 1 must lie in [0, h)
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const long iy = static_cast<long>(oy * stride + ky) - 1;
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            double* yrow = yplane + oy * ow;
                            const double* xrow = xplane + iy * w;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const long ix = static_cast<long>(ox * stride + kx) - 1;
                                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                                yrow[ox] += wk * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    ValueId out{nodes_.size()};
    return push(std::move(y), "conv3x3", [x, weight, bias, stride, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(weight);
        const std::size_t bsz = xv.shape[0], cin = xv.shape[1], h = xv.shape[2], w = xv.shape[3];
        const std::size_t cout = wv.shape[0];
        const std::size_t oh = g.shape[2], ow = g.shape[3];
        Tensor& gx = t.grad_mut(x);
        Tensor& gw = t.grad_mut(weight);
        Tensor& gb = t.grad_mut(bias);
        for (std::size_t b = 0; b < bsz; ++b) {
            for (std::size_t co = 0; co < cout; ++co) {
                const double* gplane = &g.data[(b * cout + co) * oh * ow];
                double bacc = 0.0;
                for (std::size_t p = 0; p < oh * ow; ++p) bacc += gplane[p];
                gb.data[co] += bacc;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* xplane = &xv.data[(b * cin + ci) * h * w];
                    double* gxplane = &gx.data[(b * cin + ci) * h * w];
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const double wk = wv.data[((co * cin + ci) * 3 + ky) * 3 + kx];
                            double wacc = 0.0;
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                                const long iy = static_cast<long>(oy * stride + ky) - 1;
                                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                                const double* grow = gplane + oy * ow;
                                const double* xrow = xplane + iy * w;
                                double* gxrow = gxplane + iy * w;
                                for (std::size_t ox = 0; ox < ow; ++ox) {
                                    const long ix = static_cast<long>(ox * stride + kx) - 1;
                                    if (ix < 0 || ix >= static_cast<long>(w)) continue;
                                    gxrow[ix] += wk * grow[ox];
                                    wacc += xrow[ix] * grow[ox];
                                }
                            }
                            gw.data[((co * cin + ci) * 3 + ky) * 3 + kx] += wacc;
                        }
                    }
                }
            }
        }
    });
}

ValueId Tape::normalize_groups(ValueId x, ValueId gamma, ValueId beta, double eps) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4 || xv.shape[1] != 1 || xv.shape[2] != 1 || xv.shape[3] != 1) {
        throw DimensionError("normalize_groups: expected [n,1,1,1], got " + shape_str(xv.shape));
    }
    const std::size_t n = xv.shape[0];
    if (n < 2) {
        throw DataError("normalize_groups: need at least 2 entries for statistics, got " +
                        std::to_string(n));
    }
    if (eps <= 0.0) throw ConfigError("normalize_groups: eps must be positive");
    if (value(gamma).size() != 1 || value(beta).size() != 1) {
        throw DimensionError("normalize_groups: gamma and beta must be single elements");
    }
    double mean = 0.0;
    for (double v : xv.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xv.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    const double gm = value(gamma).data[0];
    const double bt = value(beta).data[0];
    Tensor y(xv.shape);
    for (std::size_t i = 0; i < n; ++i) y.data[i] = gm * (xv.data[i] - mean) * inv + bt;
    ValueId out{nodes_.size()};
    return push(std::move(y), "normalize_groups",
                [x, gamma, beta, mean, inv, out](Tape& t) {
                    const Tensor& g = t.grad(out);
                    const Tensor& xv = t.value(x);
                    const double gm = t.value(gamma).data[0];
                    const std::size_t n = xv.size();
                    const double dn = static_cast<double>(n);
                    Tensor& gx = t.grad_mut(x);
                    Tensor& gg = t.grad_mut(gamma);
                    Tensor& gb = t.grad_mut(beta);
                    double dgamma = 0.0, dbeta = 0.0, dvar = 0.0, dmean = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double xc = xv.data[i] - mean;
                        dgamma += g.data[i] * xc * inv;
                        dbeta += g.data[i];
                        const double dxhat = g.data[i] * gm;
                        dvar += dxhat * xc * (-0.5) * inv * inv * inv;
                        dmean += dxhat * (-inv);
                    }
                    for (std::size_t i = 0; i < n; ++i) {
                        const double xc = xv.data[i] - mean;
                        const double dxhat = g.data[i] * gm;
                        gx.data[i] += dxhat * inv + dvar * 2.0 * xc / dn + dmean / dn;
                    }
                    gg.data[0] += dgamma;
                    gb.data[0] += dbeta;
                });
}

ValueId Tape::adaptive_avg_pool(ValueId x, std::size_t n) {
    Tensor y = fdl::adaptive_avg_pool(value(x), n);
    ValueId out{nodes_.size()};
    return push(std::move(y), "adaptive_avg_pool", [x, n, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& xv = t.value(x);
        const std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t r0 = i * h / n;
            const std::size_t r1 = ((i + 1) * h + n - 1) / n;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t c0 = j * w / n;
                const std::size_t c1 = ((j + 1) * w + n - 1) / n;
                const double inv = 1.0 / static_cast<double>((r1 - r0) * (c1 - c0));
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double gv = g.data[(ch * n + i) * n + j] * inv;
                    for (std::size_t r = r0; r < r1; ++r)
                        for (std::size_t cc = c0; cc < c1; ++cc)
                            gx.data[(ch * h + r) * w + cc] += gv;
                }
            }
        }
    });
}

ValueId Tape::upsample_bilinear(ValueId x, std::size_t out_h, std::size_t out_w) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) {
        throw DimensionError("upsample_bilinear: expected [C,h,w], got " + shape_str(xv.shape));
    }
    const std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
    // half-pixel centers: src = (dst + 0.5) * in/out - 0.5, clamped at edges
    auto make_axis = [](std::size_t in, std::size_t out) {
        std::vector<std::size_t> i0(out), i1(out);
        std::vector<double> frac(out);
        for (std::size_t d = 0; d < out; ++d) {
            double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) /
                           static_cast<double>(out) -
                       0.5;
            if (s < 0.0) s = 0.0;
            const double cap = static_cast<double>(in - 1);
            if (s > cap) s = cap;
            const std::size_t lo = static_cast<std::size_t>(s);
            i0[d] = lo;
            i1[d] = std::min(lo + 1, in - 1);
            frac[d] = s - static_cast<double>(lo);
        }
        return std::tuple(i0, i1, frac);
    };
    auto [y0, y1, fy] = make_axis(h, out_h);
    auto [x0, x1, fx] = make_axis(w, out_w);
    Tensor y({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = &xv.data[ch * h * w];
        double* oplane = &y.data[ch * out_h * out_w];
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const double wy1 = fy[oy], wy0 = 1.0 - wy1;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double wx1 = fx[ox], wx0 = 1.0 - wx1;
                oplane[oy * out_w + ox] = wy0 * wx0 * plane[y0[oy] * w + x0[ox]] +
                                          wy0 * wx1 * plane[y0[oy] * w + x1[ox]] +
                                          wy1 * wx0 * plane[y1[oy] * w + x0[ox]] +
                                          wy1 * wx1 * plane[y1[oy] * w + x1[ox]];
            }
        }
    }
    ValueId out{nodes_.size()};
    return push(std::move(y), "upsample_bilinear",
                [x, out_h, out_w, y0 = y0, y1 = y1, fy = fy, x0 = x0, x1 = x1, fx = fx,
                 out](Tape& t) {
                    const Tensor& g = t.grad(out);
                    const Tensor& xv = t.value(x);
                    const std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
                    Tensor& gx = t.grad_mut(x);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        double* gplane = &gx.data[ch * h * w];
                        const double* goplane = &g.data[ch * out_h * out_w];
                        for (std::size_t oy = 0; oy < out_h; ++oy) {
                            const double wy1 = fy[oy], wy0 = 1.0 - wy1;
                            for (std::size_t ox = 0; ox < out_w; ++ox) {
                                const double wx1 = fx[ox], wx0 = 1.0 - wx1;
                                const double gv = goplane[oy * out_w + ox];
                                gplane[y0[oy] * w + x0[ox]] += wy0 * wx0 * gv;
                                gplane[y0[oy] * w + x1[ox]] += wy0 * wx1 * gv;
                                gplane[y1[oy] * w + x0[ox]] += wy1 * wx0 * gv;
                                gplane[y1[oy] * w + x1[ox]] += wy1 * wx1 * gv;
                            }
                        }
                    }
                });
}

// ---------------------------------------------------------------------------
// frequency ops
// ---------------------------------------------------------------------------

ValueId Tape::multispectral(ValueId pooled, const FrequencyAssignment& assignment,
                            const DctBasis& basis) {
    const Tensor& pv = value(pooled);
    const std::size_t n = assignment.components;
    if (pv.rank() != 3 || pv.shape[1] != assignment.block_size ||
        pv.shape[2] != assignment.block_size) {
        throw DimensionError("multispectral: expected [C," +
                             std::to_string(assignment.block_size) + "," +
                             std::to_string(assignment.block_size) + "], got " +
                             shape_str(pv.shape));
    }
    const std::size_t c = pv.shape[0];
    if (c % n != 0) {
        throw ConfigError("multispectral: channel count " + std::to_string(c) +
                          " not divisible by component count " + std::to_string(n));
    }
    const std::size_t gs = c / n;
    const std::size_t nb = assignment.block_size;
    Tensor y({c});
    for (std::size_t gi = 0; gi < n; ++gi) {
        const auto [u, v] = assignment.order[gi];
        for (std::size_t k = gi * gs; k < (gi + 1) * gs; ++k) {
            double acc = 0.0;
            for (std::size_t xx = 0; xx < nb; ++xx) {
                const double bu = basis.basis1d.at(u, xx);
                if (bu == 0.0) continue;
                double row = 0.0;
                for (std::size_t yy = 0; yy < nb; ++yy)
                    row += pv.at(k, xx, yy) * basis.basis1d.at(v, yy);
                acc += bu * row;
            }
            y.data[k] = acc;
        }
    }
    ValueId out{nodes_.size()};
    // the basis and order are captured by value: tapes may outlive callers
    Tensor basis1d = basis.basis1d;
    auto order = assignment.order;
    return push(std::move(y), "multispectral",
                [pooled, basis1d = std::move(basis1d), order = std::move(order), gs, nb,
                 out](Tape& t) {
                    const Tensor& g = t.grad(out);
                    Tensor& gp = t.grad_mut(pooled);
                    const std::size_t n = order.size();
                    for (std::size_t gi = 0; gi < n; ++gi) {
                        const auto [u, v] = order[gi];
                        for (std::size_t k = gi * gs; k < (gi + 1) * gs; ++k) {
                            const double gv = g.data[k];
                            if (gv == 0.0) continue;
                            for (std::size_t xx = 0; xx < nb; ++xx) {
                                const double bu = gv * basis1d.data[u * nb + xx];
                                for (std::size_t yy = 0; yy < nb; ++yy)
                                    gp.data[(k * nb + xx) * nb + yy] +=
                                        bu * basis1d.data[v * nb + yy];
                            }
                        }
                    }
                });
}

ValueId Tape::group_scale(ValueId v, ValueId weights) {
    const Tensor& tv = value(v);
    const Tensor& tw = value(weights);
    const std::size_t c = tv.size();
    const std::size_t n = tw.size();
    if (n == 0 || c % n != 0) {
        throw ConfigError("group_scale: vector length " + std::to_string(c) +
                          " not divisible by group count " + std::to_string(n));
    }
    const std::size_t gs = c / n;
    Tensor y(tv.shape);
    for (std::size_t k = 0; k < c; ++k) y.data[k] = tw.data[k / gs] * tv.data[k];
    ValueId out{nodes_.size()};
    return push(std::move(y), "group_scale", [v, weights, gs, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& tv = t.value(v);
        const Tensor& tw = t.value(weights);
        Tensor& gv = t.grad_mut(v);
        Tensor& gw = t.grad_mut(weights);
        for (std::size_t k = 0; k < tv.size(); ++k) {
            gv.data[k] += tw.data[k / gs] * g.data[k];
            gw.data[k / gs] += tv.data[k] * g.data[k];
        }
    });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

struct PixelLoss {
    std::size_t pixel;  // flat index into H*W
    double loss;
};

// per-pixel cross entropy with max-shifted log-sum-exp
double pixel_ce(const Tensor& logits, std::size_t hw, std::size_t pixel, std::int32_t label) {
    const std::size_t k = logits.shape[0];
    double mx = logits.data[pixel];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits.data[c * hw + pixel]);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits.data[c * hw + pixel] - mx);
    const double lse = mx + std::log(sum);
    return lse - logits.data[static_cast<std::size_t>(label) * hw + pixel];
}

void pixel_ce_backward(const Tensor& logits, Tensor& glogits, std::size_t hw,
                       std::size_t pixel, std::int32_t label, double scale) {
    const std::size_t k = logits.shape[0];
    double mx = logits.data[pixel];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits.data[c * hw + pixel]);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits.data[c * hw + pixel] - mx);
    for (std::size_t c = 0; c < k; ++c) {
        const double p = std::exp(logits.data[c * hw + pixel] - mx) / sum;
        const double ind = (static_cast<std::int32_t>(c) == label) ? 1.0 : 0.0;
        glogits.data[c * hw + pixel] += scale * (p - ind);
    }
}

void check_logits_vs_labels(const Tensor& logits, const LabelMap& labels) {
    if (logits.rank() != 3) {
        throw DimensionError("cross-entropy: expected logits [K,H,W], got " +
                             shape_str(logits.shape));
    }
    if (logits.shape[0] < 2) {
        throw ConfigError("cross-entropy: need at least 2 classes, got " +
                          std::to_string(logits.shape[0]));
    }
    if (logits.shape[1] != labels.h || logits.shape[2] != labels.w) {
        throw DimensionError("cross-entropy: logits " + shape_str(logits.shape) +
                             " do not match labels [" + std::to_string(labels.h) + " x " +
                             std::to_string(labels.w) + "]");
    }
}

}  // namespace

ValueId Tape::ce_mean(ValueId logits, const LabelMap& labels, std::int32_t ignore_index,
                      bool ohem, double keep_fraction) {
    const Tensor& lv = value(logits);
    check_logits_vs_labels(lv, labels);
    if (ohem && (keep_fraction <= 0.0 || keep_fraction > 1.0)) {
        throw ConfigError("ce_mean: keep fraction must lie in (0,1]");
    }
    const std::size_t hw = labels.h * labels.w;
    std::vector<PixelLoss> valid;
    valid.reserve(hw);
    for (std::size_t p = 0; p < hw; ++p) {
        const std::int32_t lbl = labels.data[p];
        if (lbl == ignore_index) continue;
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= lv.shape[0]) {
            throw ConfigError("ce_mean: label " + std::to_string(lbl) +
                              " outside [0," + std::to_string(lv.shape[0]) + ")");
        }
        valid.push_back({p, pixel_ce(lv, hw, p, lbl)});
    }
    if (valid.empty()) {
        throw DataError("ce_mean: no valid pixels (all carry the ignore index)");
    }
    if (ohem) {
        const std::size_t keep = static_cast<std::size_t>(
            std::ceil(keep_fraction * static_cast<double>(valid.size())));
        std::sort(valid.begin(), valid.end(), [](const PixelLoss& a, const PixelLoss& b) {
            if (a.loss != b.loss) return a.loss > b.loss;
            return a.pixel < b.pixel;
        });
        valid.resize(std::max<std::size_t>(keep, 1));
    }
    double mean = 0.0;
    for (const auto& pl : valid) mean += pl.loss;
    mean /= static_cast<double>(valid.size());

    std::vector<std::size_t> kept(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i) kept[i] = valid[i].pixel;
    std::vector<std::int32_t> lbls = labels.data;
    ValueId out{nodes_.size()};
    return push(Tensor({1}, {mean}), "ce_mean",
                [logits, kept = std::move(kept), lbls = std::move(lbls), hw, out](Tape& t) {
                    const double g = t.grad(out).data[0];
                    const Tensor& lv = t.value(logits);
                    Tensor& gl = t.grad_mut(logits);
                    const double scale = g / static_cast<double>(kept.size());
                    for (std::size_t p : kept)
                        pixel_ce_backward(lv, gl, hw, p, lbls[p], scale);
                });
}

ValueId Tape::ce_masked(ValueId logits, const LabelMap& labels, std::int32_t ignore_index,
                        const std::vector<std::uint8_t>& mask) {
    const Tensor& lv = value(logits);
    check_logits_vs_labels(lv, labels);
    const std::size_t hw = labels.h * labels.w;
    if (mask.size() != hw) {
        throw DimensionError("ce_masked: mask size " + std::to_string(mask.size()) +
                             " does not match " + std::to_string(hw) + " pixels");
    }
    std::vector<std::size_t> kept;
    double mean = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
        if (!mask[p] || labels.data[p] == ignore_index) continue;
        const std::int32_t lbl = labels.data[p];
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= lv.shape[0]) {
            throw ConfigError("ce_masked: label " + std::to_string(lbl) +
                              " outside [0," + std::to_string(lv.shape[0]) + ")");
        }
        kept.push_back(p);
        mean += pixel_ce(lv, hw, p, lbl);
    }
    if (kept.empty()) {
        // no masked pixels: the loss is 0 and carries no gradient
        return push(Tensor({1}, {0.0}), "ce_masked", {});
    }
    mean /= static_cast<double>(kept.size());
    std::vector<std::int32_t> lbls = labels.data;
    ValueId out{nodes_.size()};
    return push(Tensor({1}, {mean}), "ce_masked",
                [logits, kept = std::move(kept), lbls = std::move(lbls), hw, out](Tape& t) {
                    const double g = t.grad(out).data[0];
                    const Tensor& lv = t.value(logits);
                    Tensor& gl = t.grad_mut(logits);
                    const double scale = g / static_cast<double>(kept.size());
                    for (std::size_t p : kept)
                        pixel_ce_backward(lv, gl, hw, p, lbls[p], scale);
                });
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

double grad_check(const std::function<ValueId(Tape&)>& build_loss,
                  const std::vector<Param*>& params, double eps) {
    for (Param* p : params) p->zero_grad();
    double base_loss = 0.0;
    {
        Tape tape;
        ValueId loss = build_loss(tape);
        base_loss = tape.value(loss).data[0];
        if (!std::isfinite(base_loss)) {
            throw NumericError("grad_check: non-finite loss " + std::to_string(base_loss));
        }
        tape.backward(loss);
        tape.accumulate_param_grads();
    }
    auto eval = [&](void) -> double {
        Tape tape;
        ValueId loss = build_loss(tape);
        const double v = tape.value(loss).data[0];
        if (!std::isfinite(v)) {
            throw NumericError("grad_check: non-finite loss during probing");
        }
        return v;
    };
    double max_rel = 0.0;
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            const double hi = eval();
            p->value.data[i] = saved - eps;
            const double lo = eval();
            p->value.data[i] = saved;
            const double numeric = (hi - lo) / (2.0 * eps);
            const double analytic = p->grad.data[i];
            const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
        }
    }
    return max_rel;
}

GradCheckDetail grad_check_detailed(const std::function<ValueId(Tape&)>& build_loss,
                                    const std::vector<Param*>& params, double eps,
                                    double rel_cut) {
    for (Param* p : params) p->zero_grad();
    {
        Tape tape;
        ValueId loss = build_loss(tape);
        if (!std::isfinite(tape.value(loss).data[0])) {
            throw NumericError("grad_check_detailed: non-finite loss");
        }
        tape.backward(loss);
        tape.accumulate_param_grads();
    }
    auto eval = [&](void) -> double {
        Tape tape;
        ValueId loss = build_loss(tape);
        const double v = tape.value(loss).data[0];
        if (!std::isfinite(v)) {
            throw NumericError("grad_check_detailed: non-finite loss during probing");
        }
        return v;
    };
    GradCheckDetail detail;
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            const double hi = eval();
            p->value.data[i] = saved - eps;
            const double lo = eval();
            p->value.data[i] = saved;
            const double numeric = (hi - lo) / (2.0 * eps);
            const double analytic = p->grad.data[i];
            const double mag = std::abs(analytic) + std::abs(numeric);
            if (mag >= rel_cut) {
                detail.max_rel = std::max(detail.max_rel, std::abs(analytic - numeric) / mag);
                ++detail.rel_entries;
            } else {
                detail.max_abs_small =
                    std::max(detail.max_abs_small, std::abs(analytic - numeric));
                ++detail.small_entries;
            }
        }
    }
    return detail;
}

}  // namespace fdl
