#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdl/tensor.hpp"

namespace fdl {

enum class SceneStyle { day, night };

SceneStyle parse_style(const std::string& s);  // "day" | "night"
std::string style_name(SceneStyle style);

/// One synthetic scene: textured axis-aligned rectangles of K-1 foreground
/// classes over a background class. The night style multiplies the base
/// rendering by a smooth random exposure field in [0.1, 2.5] and adds
/// Gaussian noise (sigma 0.02) before clipping to [0,1]; the day style is
/// the base rendering itself (exposure identically 1).
struct SynthScene {
    Tensor image;     // [3,H,W] in [0,1]
    LabelMap labels;  // every pixel holds a valid class in [0,K)
    Tensor exposure;  // [H,W] gain field applied to this scene
};

/// Fully determined by (seed, index, style): scene i draws from a stream
/// keyed by mix(seed, i), and geometry never consumes the photometric
/// stream, so matching (seed, i) scenes share identical label maps across
/// styles.
std::vector<SynthScene> synth_dataset(std::size_t count, std::uint64_t seed,
                                      SceneStyle style, std::size_t height,
                                      std::size_t width, std::size_t classes);

}  // namespace fdl
