#include "fdl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fdl/errors.hpp"
#include "fdl/rng.hpp"

namespace fdl {

SceneStyle parse_style(const std::string& s) {
    if (s == "day") return SceneStyle::day;
    if (s == "night") return SceneStyle::night;
    throw ConfigError("unknown scene style '" + s + "' (want day or night)");
}

std::string style_name(SceneStyle style) {
    return style == SceneStyle::day ? "day" : "night";
}

namespace {

constexpr std::uint64_t kPhotoSalt = 0x50484F544Full;  // photometric stream
constexpr std::uint64_t kGainGrid = 4;
constexpr double kGainMin = 0.1;
constexpr double kGainMax = 2.5;
constexpr double kNoiseSigma = 0.02;

// Base colors stay below 1 even with stripe highlights and jitter, so the
// day style never clips.
struct ClassStyle {
    double r, g, b;
    std::size_t half_period;  // 0 = flat
    bool vertical;
    double amp;
};

constexpr std::array<ClassStyle, 8> kStyles{{
    {0.18, 0.20, 0.24, 0, true, 0.0},    // background
    {0.70, 0.35, 0.30, 2, true, 0.25},   // fine vertical stripes
    {0.35, 0.65, 0.35, 4, false, 0.25},  // coarse horizontal stripes
    {0.40, 0.45, 0.75, 1, true, 0.25},   // pixel-rate vertical stripes
    {0.65, 0.60, 0.30, 8, false, 0.22},
    {0.55, 0.30, 0.60, 2, false, 0.25},
    {0.30, 0.55, 0.60, 4, true, 0.25},
    {0.60, 0.60, 0.60, 1, false, 0.25},
}};

double stripe_factor(const ClassStyle& st, std::size_t y, std::size_t x) {
    if (st.half_period == 0) return 1.0;
    const std::size_t axis = st.vertical ? x : y;
    return (axis / st.half_period) % 2 == 0 ? 1.0 + st.amp : 1.0 - st.amp;
}

// smooth multiplicative exposure: log-uniform gains on a coarse grid,
// bilinearly interpolated with half-pixel centers (convex, so the field
// stays inside [kGainMin, kGainMax])
Tensor exposure_field(Rng& rng, std::size_t h, std::size_t w) {
    std::array<double, kGainGrid * kGainGrid> grid{};
    for (double& g : grid) g = std::exp(rng.uniform(std::log(kGainMin), std::log(kGainMax)));
    Tensor field({h, w});
    for (std::size_t y = 0; y < h; ++y) {
        double sy = (static_cast<double>(y) + 0.5) * kGainGrid / static_cast<double>(h) - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(kGainGrid - 1));
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, kGainGrid - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
            double sx =
                (static_cast<double>(x) + 0.5) * kGainGrid / static_cast<double>(w) - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(kGainGrid - 1));
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, kGainGrid - 1);
            const double fx = sx - static_cast<double>(x0);
            field.at(y, x) = (1.0 - fy) * ((1.0 - fx) * grid[y0 * kGainGrid + x0] +
                                           fx * grid[y0 * kGainGrid + x1]) +
                             fy * ((1.0 - fx) * grid[y1 * kGainGrid + x0] +
                                   fx * grid[y1 * kGainGrid + x1]);
        }
    }
    return field;
}

SynthScene make_scene(std::uint64_t key, SceneStyle style, std::size_t h, std::size_t w,
                      std::size_t classes) {
    Rng geo(key);
    SynthScene scene;
    scene.labels = LabelMap(h, w, 0);

    // geometry + base rendering; never touches the photometric stream
    std::array<std::array<double, 3>, kStyles.size()> jitter{};
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t ch = 0; ch < 3; ++ch) jitter[c][ch] = geo.uniform(-0.02, 0.02);

    const std::size_t rects = 2 + geo.below(3);
    struct Rect {
        std::size_t x0, y0, x1, y1;
        std::int32_t cls;
    };
    std::vector<Rect> layout;
    for (std::size_t i = 0; i < rects; ++i) {
        const std::int32_t cls = 1 + static_cast<std::int32_t>(geo.below(classes - 1));
        const std::size_t rw = 8 * (1 + geo.below(std::min<std::size_t>(4, w / 8)));
        const std::size_t rh = 8 * (1 + geo.below(std::min<std::size_t>(4, h / 8)));
        const std::size_t x0 = 8 * geo.below((w - rw) / 8 + 1);
        const std::size_t y0 = 8 * geo.below((h - rh) / 8 + 1);
        layout.push_back({x0, y0, x0 + rw, y0 + rh, cls});
    }

    Tensor base({3, h, w});
    const std::size_t plane = h * w;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::int32_t cls = 0;
            for (const Rect& r : layout) {
                if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) cls = r.cls;
            }
            scene.labels.at(y, x) = cls;
            const ClassStyle& st = kStyles[static_cast<std::size_t>(cls)];
            const double f = stripe_factor(st, y, x);
            const auto& j = jitter[static_cast<std::size_t>(cls)];
            base.data[y * w + x] = st.r * f + j[0];
            base.data[plane + y * w + x] = st.g * f + j[1];
            base.data[2 * plane + y * w + x] = st.b * f + j[2];
        }
    }

    if (style == SceneStyle::day) {
        scene.exposure = Tensor::full({h, w}, 1.0);
        scene.image = std::move(base);
        return scene;
    }

    Rng photo(Rng::mix(key, kPhotoSalt));
    scene.exposure = exposure_field(photo, h, w);
    scene.image = Tensor({3, h, w});
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t p = 0; p < plane; ++p) {
            const double v =
                base.data[ch * plane + p] * scene.exposure.data[p] + kNoiseSigma * photo.normal();
            scene.image.data[ch * plane + p] = std::clamp(v, 0.0, 1.0);
        }
    }
    return scene;
}

}  // namespace

std::vector<SynthScene> synth_dataset(std::size_t count, std::uint64_t seed, SceneStyle style,
                                      std::size_t height, std::size_t width,
                                      std::size_t classes) {
    if (count == 0) throw ConfigError("synth_dataset: count must be positive");
    if (classes < 2 || classes > kStyles.size()) {
        throw ConfigError("synth_dataset: classes must lie in [2," +
                          std::to_string(kStyles.size()) + "]");
    }
    if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
        throw ConfigError("synth_dataset: scene sides must be positive multiples of 8");
    }
    std::vector<SynthScene> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        scenes.push_back(make_scene(Rng::mix(seed, i), style, height, width, classes));
    }
    return scenes;
}

}  // namespace fdl
