#include "fdl/toynet.hpp"

#include <cmath>

#include "fdl/errors.hpp"
#include "fdl/rng.hpp"

namespace fdl {

std::string VariantSpec::str() const {
    switch (kind) {
        case Variant::baseline: return "baseline";
        case Variant::fdl: return "fdl";
        case Variant::static_all: return "static_all";
        case Variant::top_k: return "top_k:" + std::to_string(k);
    }
    return "?";
}

VariantSpec parse_variant(const std::string& s) {
    if (s == "baseline") return {Variant::baseline, 0};
    if (s == "fdl") return {Variant::fdl, 0};
    if (s == "static_all") return {Variant::static_all, 0};
    if (s.rfind("top_k:", 0) == 0) {
        const std::string num = s.substr(6);
        if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos) {
            throw ConfigError("invalid top_k component count in variant '" + s + "'");
        }
        const std::size_t k = std::stoull(num);
        if (k == 0) throw ConfigError("top_k component count must be positive");
        return {Variant::top_k, k};
    }
    throw ConfigError("unknown variant '" + s +
                      "' (want baseline | fdl | top_k:<K> | static_all)");
}

ToyNetConfig small_test_config() {
    ToyNetConfig cfg;
    cfg.input_size = 16;
    cfg.backbone_widths = {4, 8, 16};
    cfg.ppm_bins = {1, 2, 3, 6};
    cfg.ppm_branch_channels = 4;
    cfg.context_channels = 16;
    cfg.fusion_channels = 8;
    cfg.block_size = 2;  // n = 4 frequency components
    cfg.classes = 3;
    cfg.variant = {Variant::fdl, 0};
    return cfg;
}

namespace {

void validate(const ToyNetConfig& cfg) {
    if (cfg.backbone_widths.size() != 3) {
        throw ConfigError("toynet: exactly 3 backbone stages required (output stride 8)");
    }
    if (cfg.input_size == 0 || cfg.input_size % 8 != 0) {
        throw ConfigError("toynet: input size must be a positive multiple of 8");
    }
    if (cfg.classes < 2) throw ConfigError("toynet: need at least 2 classes");
    if (cfg.block_size == 0) throw ConfigError("toynet: block size must be positive");
    if (cfg.variant.kind != Variant::baseline) {
        const std::size_t n = cfg.components();
        if (cfg.backbone_widths.back() % n != 0) {
            throw ConfigError("toynet: backbone output channels " +
                              std::to_string(cfg.backbone_widths.back()) +
                              " not divisible by " + std::to_string(n) +
                              " frequency components");
        }
        if (cfg.variant.kind == Variant::top_k && (cfg.variant.k < 1 || cfg.variant.k > n)) {
            throw ConfigError("toynet: top_k k=" + std::to_string(cfg.variant.k) +
                              " outside [1," + std::to_string(n) + "]");
        }
    }
}

}  // namespace

ToyNet::ToyNet(ToyNetConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), init_seed_(init_seed) {
    validate(cfg_);
    basis_ = make_basis(cfg_.block_size);
    assignment_ = zigzag_order(cfg_.block_size);

    // backbone: {conv3x3 s1, relu, conv3x3 s2, relu} x 3
    std::size_t cin = 3;
    for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t cout = cfg_.backbone_widths[s];
        const std::string prefix = "backbone." + std::to_string(s) + ".";
        add_param(prefix + "conv1.weight", {cout, cin, 3, 3},
                  std::sqrt(2.0 / (static_cast<double>(cin) * 9.0)));
        add_const_param(prefix + "conv1.bias", {cout}, 0.0);
        add_param(prefix + "conv2.weight", {cout, cout, 3, 3},
                  std::sqrt(2.0 / (static_cast<double>(cout) * 9.0)));
        add_const_param(prefix + "conv2.bias", {cout}, 0.0);
        cin = cout;
    }

    const std::size_t feat_c = cfg_.backbone_widths.back();
    for (std::size_t b = 0; b < cfg_.ppm_bins.size(); ++b) {
        const std::string prefix = "ppm.branch" + std::to_string(b) + ".";
        add_param(prefix + "weight", {cfg_.ppm_branch_channels, feat_c},
                  std::sqrt(2.0 / static_cast<double>(feat_c)));
        add_const_param(prefix + "bias", {cfg_.ppm_branch_channels}, 0.0);
    }
    const std::size_t cat_c = feat_c + cfg_.ppm_bins.size() * cfg_.ppm_branch_channels;
    add_param("ppm.fuse.weight", {cfg_.context_channels, cat_c},
              std::sqrt(2.0 / static_cast<double>(cat_c)));
    add_const_param("ppm.fuse.bias", {cfg_.context_channels}, 0.0);

    const double proj_s_std = std::sqrt(1.0 / static_cast<double>(cfg_.context_channels));
    if (cfg_.variant.kind == Variant::baseline) {
        add_param("proj_s.weight", {cfg_.fusion_channels, cfg_.context_channels}, proj_s_std);
    } else {
        const std::size_t n = cfg_.components();
        const std::size_t gs = feat_c / n;
        if (cfg_.variant.kind == Variant::fdl) {
            lfe_ = std::make_unique<LfeParams>(n, gs);
            init_normal(lfe_->lfcc_weight, "lfe.lfcc.weight",
                        std::sqrt(1.0 / static_cast<double>(gs)));
            named_.emplace_back("lfe.lfcc.weight", &lfe_->lfcc_weight);
            named_.emplace_back("lfe.gamma", &lfe_->gamma);
            named_.emplace_back("lfe.beta", &lfe_->beta);
        }
        // SFF owns the spatial projection; the name matches the baseline's so
        // both variants draw identical initial values for it.
        sff_ = std::make_unique<SffParams>(cfg_.fusion_channels, cfg_.context_channels,
                                           feat_c);
        init_normal(sff_->proj_s, "proj_s.weight", proj_s_std);
        init_normal(sff_->proj_f, "proj_f.weight",
                    std::sqrt(1.0 / static_cast<double>(feat_c)));
        named_.emplace_back("proj_s.weight", &sff_->proj_s);
        named_.emplace_back("proj_f.weight", &sff_->proj_f);
        named_.emplace_back("sff.alpha", &sff_->alpha);
    }

    add_param("head.weight", {cfg_.classes, cfg_.fusion_channels},
              std::sqrt(1.0 / static_cast<double>(cfg_.fusion_channels)));
    add_const_param("head.bias", {cfg_.classes}, 0.0);
}

void ToyNet::init_normal(Param& p, const std::string& name, double std_dev) {
    Rng r(Rng::mix(init_seed_, fnv1a(name)));
    for (double& v : p.value.data) v = r.normal() * std_dev;
}

Param& ToyNet::add_param(const std::string& name, Shape shape, double init_std) {
    auto p = std::make_unique<Param>(Tensor(std::move(shape)));
    init_normal(*p, name, init_std);
    named_.emplace_back(name, p.get());
    owned_.push_back(std::move(p));
    return *owned_.back();
}

Param& ToyNet::add_const_param(const std::string& name, Shape shape, double fill) {
    auto p = std::make_unique<Param>(Tensor(std::move(shape), fill));
    named_.emplace_back(name, p.get());
    owned_.push_back(std::move(p));
    return *owned_.back();
}

std::vector<Param*> ToyNet::params() const {
    std::vector<Param*> out;
    out.reserve(named_.size());
    for (const auto& [name, p] : named_) out.push_back(p);
    return out;
}

Param& ToyNet::param(const std::string& name) {
    for (auto& [n, p] : named_) {
        if (n == name) return *p;
    }
    throw ConfigError("toynet: no parameter named '" + name + "'");
}

void ToyNet::zero_grads() {
    for (auto& [name, p] : named_) p->zero_grad();
}

ValueId ToyNet::backbone(Tape& tape, ValueId x) {
    for (std::size_t s = 0; s < 3; ++s) {
        const std::string prefix = "backbone." + std::to_string(s) + ".";
        x = tape.relu(tape.conv3x3(x, tape.param(param(prefix + "conv1.weight")),
                                   tape.param(param(prefix + "conv1.bias")), 1));
        x = tape.relu(tape.conv3x3(x, tape.param(param(prefix + "conv2.weight")),
                                   tape.param(param(prefix + "conv2.bias")), 2));
    }
    return x;
}

ValueId ToyNet::ppm(Tape& tape, ValueId feat) {
    const Tensor& fv = tape.value(feat);
    const std::size_t c = fv.shape[0], h = fv.shape[1], w = fv.shape[2];
    std::vector<ValueId> parts{feat};
    for (std::size_t b = 0; b < cfg_.ppm_bins.size(); ++b) {
        const std::size_t bin = cfg_.ppm_bins[b];
        const std::string prefix = "ppm.branch" + std::to_string(b) + ".";
        ValueId pooled = tape.adaptive_avg_pool(feat, bin);
        ValueId proj = tape.relu(tape.conv1x1(tape.reshape(pooled, {1, c, bin, bin}),
                                              tape.param(param(prefix + "weight")),
                                              tape.param(param(prefix + "bias"))));
        ValueId up = tape.upsample_bilinear(
            tape.reshape(proj, {cfg_.ppm_branch_channels, bin, bin}), h, w);
        parts.push_back(up);
    }
    ValueId cat = tape.concat_channels(parts);
    const std::size_t cat_c = tape.value(cat).shape[0];
    ValueId fused = tape.relu(tape.conv1x1(tape.reshape(cat, {1, cat_c, h, w}),
                                           tape.param(param("ppm.fuse.weight")),
                                           tape.param(param("ppm.fuse.bias"))));
    return tape.reshape(fused, {cfg_.context_channels, h, w});
}

ToyNet::Forward ToyNet::forward(Tape& tape, const Tensor& image) {
    const std::size_t s = cfg_.input_size;
    if (image.rank() != 3 || image.shape[0] != 3 || image.shape[1] != s ||
        image.shape[2] != s) {
        throw ConfigError("toynet: expected image [3," + std::to_string(s) + "," +
                          std::to_string(s) + "], got " + shape_str(image.shape));
    }
    ValueId x = tape.reshape(tape.constant(image), {1, 3, s, s});
    ValueId feat4 = backbone(tape, x);
    const Tensor& f = tape.value(feat4);
    const std::size_t fc = f.shape[1], fh = f.shape[2], fw = f.shape[3];
    ValueId feat = tape.reshape(feat4, {fc, fh, fw});
    ValueId ctx = ppm(tape, feat);

    Forward out{};
    ValueId fused{};
    if (cfg_.variant.kind == Variant::baseline) {
        ValueId ctx4 = tape.reshape(ctx, {1, cfg_.context_channels, fh, fw});
        ValueId rs = tape.conv1x1(ctx4, tape.param(param("proj_s.weight")), std::nullopt);
        fused = tape.reshape(rs, {cfg_.fusion_channels, fh, fw});
    } else {
        ValueId pooled = tape.adaptive_avg_pool(feat, cfg_.block_size);
        ValueId v_freq = tape.multispectral(pooled, assignment_, basis_);
        ValueId v_prime{};
        switch (cfg_.variant.kind) {
            case Variant::fdl: {
                LfeNodes lfe = lfe_forward(tape, v_freq, *lfe_);
                v_prime = lfe.v_prime;
                out.lfe_weights = lfe.weights;
                break;
            }
            case Variant::top_k:
                v_prime = lfe_variants(tape, v_freq, FrequencyMode::top_k,
                                       cfg_.components(), cfg_.variant.k);
                break;
            case Variant::static_all:
                v_prime = lfe_variants(tape, v_freq, FrequencyMode::static_all,
                                       cfg_.components());
                break;
            default:
                break;
        }
        SffNodes sff = sff_forward(tape, ctx, v_prime, *sff_);
        fused = sff.fused;
    }

    ValueId fused4 = tape.reshape(fused, {1, cfg_.fusion_channels, fh, fw});
    ValueId logits8 = tape.conv1x1(fused4, tape.param(param("head.weight")),
                                   tape.param(param("head.bias")));
    ValueId logits_small = tape.reshape(logits8, {cfg_.classes, fh, fw});
    out.logits = tape.upsample_bilinear(logits_small, s, s);
    return out;
}

}  // namespace fdl
