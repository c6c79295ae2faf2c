#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fdl/dct.hpp"
#include "fdl/nn.hpp"
#include "fdl/tape.hpp"

namespace fdl {

enum class Variant { baseline, fdl, top_k, static_all };

struct VariantSpec {
    Variant kind = Variant::fdl;
    std::size_t k = 0;  // used by top_k only

    std::string str() const;
};

/// Parses "baseline" | "fdl" | "static_all" | "top_k:<K>"; throws ConfigError
/// on anything else.
VariantSpec parse_variant(const std::string& s);

struct ToyNetConfig {
    std::size_t input_size = 64;                     // square input
    std::vector<std::size_t> backbone_widths = {16, 32, 64};
    std::vector<std::size_t> ppm_bins = {1, 2, 3, 6};
    std::size_t ppm_branch_channels = 16;
    std::size_t context_channels = 64;
    std::size_t fusion_channels = 64;  // C'
    std::size_t block_size = 8;        // N; frequency components n = N^2
    std::size_t classes = 4;
    VariantSpec variant{Variant::fdl, 0};

    std::size_t components() const { return block_size * block_size; }
};

/// Reduced configuration used by gradient self-checks: same architecture,
/// small enough that central differences over every parameter stay cheap.
ToyNetConfig small_test_config();

/// Segmentation network: three stride-2 backbone stages (output stride 8),
/// pyramid-pooling context, an optional frequency branch (DCT extraction,
/// frequency encoding, spatial-frequency fusion), a 1x1 classifier head and
/// bilinear x8 upsampling back to input resolution.
///
/// Parameters are initialized from streams keyed by (init_seed, name), so two
/// nets built with the same seed share bitwise-identical values for every
/// parameter name they have in common, regardless of variant.
class ToyNet {
public:
    ToyNet(ToyNetConfig cfg, std::uint64_t init_seed);
    ToyNet(ToyNet&&) = default;
    ToyNet& operator=(ToyNet&&) = default;

    struct Forward {
        ValueId logits;                       // [K,S,S]
        std::optional<ValueId> lfe_weights;   // learnable variant only
    };

    /// image must be [3,S,S] with S == config().input_size.
    Forward forward(Tape& tape, const Tensor& image);

    const ToyNetConfig& config() const { return cfg_; }
    std::uint64_t init_seed() const { return init_seed_; }
    const FrequencyAssignment& assignment() const { return assignment_; }

    /// All parameters in creation order; stable across forward passes.
    const std::vector<std::pair<std::string, Param*>>& named_params() const {
        return named_;
    }
    std::vector<Param*> params() const;
    Param& param(const std::string& name);
    void zero_grads();

private:
    Param& add_param(const std::string& name, Shape shape, double init_std);
    Param& add_const_param(const std::string& name, Shape shape, double fill);
    void init_normal(Param& p, const std::string& name, double std_dev);
    ValueId backbone(Tape& tape, ValueId x);
    ValueId ppm(Tape& tape, ValueId feat);

    ToyNetConfig cfg_;
    std::uint64_t init_seed_ = 0;
    DctBasis basis_;
    FrequencyAssignment assignment_;

    std::vector<std::unique_ptr<Param>> owned_;
    std::vector<std::pair<std::string, Param*>> named_;
    std::unique_ptr<LfeParams> lfe_;
    std::unique_ptr<SffParams> sff_;
};

}  // namespace fdl
