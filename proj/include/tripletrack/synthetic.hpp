#pragma once

// Seeded desk-scale tracking sequences: textured sprites moving linearly and
// bouncing off the borders, over a static noise background, with noisy
// detections (box jitter, misses, spurious boxes) and occlusion gaps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "tripletrack/errors.hpp"
#include "tripletrack/mot_io.hpp"
#include "tripletrack/random.hpp"

namespace tripletrack {

struct SynthConfig {
    std::uint64_t seed = 1;
    int frame_height = 192;
    int frame_width = 256;
    int channels = 3;
    int num_objects = 8;
    int num_frames = 300;
    double sprite_min = 24.0;  // sprite width range, pixels
    double sprite_max = 40.0;
    double aspect_min = 1.2;   // height / width
    double aspect_max = 1.8;
    double speed_min = 0.5;    // pixels per frame
    double speed_max = 2.5;
    int texture_cells = 4;          // texture is a cells x cells grid of colour blocks
    double texture_contrast = 0.35; // per-cell deviation around the base colour, in [0, 1]
    int lookalike_groups = 4;       // objects in one group share a base colour; 0 = every object its own
    double texture_scroll = 0.1;    // sideways drift of the lower half of the texture, cells per frame
    double illumination_amplitude = 0.25;  // slow per-object brightness swing
    double illumination_period = 60.0;     // frames
    double pixel_noise = 4.0;              // sensor noise std, 8-bit units
    double jitter_std = 1.5;               // detection box jitter, pixels
    double miss_rate = 0.05;
    double fp_rate = 0.3;                  // probability of one spurious box per frame
    int occlusion_count = 2;
    int occlusion_duration = 8;

    void validate() const {
        if (frame_height < 8 || frame_width < 8) throw ConfigError("frame too small");
        if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
        if (num_objects < 0) throw ConfigError("num_objects must be >= 0");
        if (num_frames < 1) throw ConfigError("num_frames must be >= 1");
        if (!(sprite_min >= 4.0) || sprite_max < sprite_min) throw ConfigError("bad sprite size range");
        if (!(aspect_min > 0.0) || aspect_max < aspect_min) throw ConfigError("bad aspect range");
        if (sprite_max >= frame_width || sprite_max * aspect_max >= frame_height)
            throw ConfigError("objects larger than the frame");
        if (speed_min < 0.0 || speed_max < speed_min) throw ConfigError("bad speed range");
        if (texture_cells < 1) throw ConfigError("texture_cells must be >= 1");
        if (lookalike_groups < 0) throw ConfigError("lookalike_groups must be >= 0");
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!unit(miss_rate) || !unit(fp_rate) || !unit(texture_contrast) || !unit(illumination_amplitude))
            throw ConfigError("rates must lie in [0, 1]");
        if (jitter_std < 0.0 || pixel_noise < 0.0) throw ConfigError("noise levels must be >= 0");
        if (occlusion_count < 0 || occlusion_duration < 0) throw ConfigError("occlusion settings must be >= 0");
        if (occlusion_count > 0 && occlusion_duration >= num_frames)
            throw ConfigError("occlusion duration must be shorter than the sequence");
        if (!(illumination_period > 0.0)) throw ConfigError("illumination_period must be > 0");
    }
};

/// Per-object appearance: texture_cells^2 RGB cells in [0, 1].
struct SpriteTexture {
    int cells = 0;
    std::vector<std::array<double, 3>> colour;

    const std::array<double, 3>& at(int cy, int cx) const { return colour[static_cast<std::size_t>(cy) * cells + cx]; }
};

/// Mean absolute per-channel difference between two textures of equal grid size.
inline double texture_difference(const SpriteTexture& a, const SpriteTexture& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.colour.size(); ++i)
        for (int c = 0; c < 3; ++c) s += std::abs(a.colour[i][c] - b.colour[i][c]);
    return s / (3.0 * static_cast<double>(a.colour.size()));
}

inline constexpr double kTextureFloor = 0.08;

struct SynthObject {
    int id = 0;  // 1-based ground-truth id
    double width = 0.0, height = 0.0;
    double x0 = 0.0, y0 = 0.0;    // initial top-left
    double vx = 0.0, vy = 0.0;
    double illumination_phase = 0.0;
    SpriteTexture texture;
    std::vector<std::pair<int, int>> hidden;  // [first, last] frame ranges with no visibility
};

struct SyntheticSequence {
    SynthConfig config;
    std::vector<SynthObject> objects;
    SequenceSource source;
};

namespace detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 1.0) * 6.0;
    const int i = static_cast<int>(std::floor(h));
    const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

inline std::array<double, 3> random_base_colour(Rng& rng) {
    return hsv_to_rgb(rng.uniform(), rng.uniform(0.4, 0.9), rng.uniform(0.45, 0.85));
}

inline SpriteTexture random_texture(const SynthConfig& cfg, const std::array<double, 3>& base, Rng& rng) {
    SpriteTexture tex;
    tex.cells = cfg.texture_cells;
    for (int k = 0; k < cfg.texture_cells * cfg.texture_cells; ++k) {
        std::array<double, 3> c{};
        for (int ch = 0; ch < 3; ++ch)
            c[ch] = std::clamp(base[ch] + cfg.texture_contrast * rng.uniform(-1.0, 1.0), 0.0, 1.0);
        tex.colour.push_back(c);
    }
    return tex;
}

// Reflects a 1-D linear motion into [0, span].
inline double bounce(double start, double velocity, int t, double span) {
    if (span <= 0.0) return 0.0;
    double p = std::fmod(start + velocity * t, 2.0 * span);
    if (p < 0.0) p += 2.0 * span;
    return p <= span ? p : 2.0 * span - p;
}

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace detail

/// Ground-truth box of an object at 0-based frame offset t (before quantisation).
inline BBox object_box(const SynthConfig& cfg, const SynthObject& o, int t) {
    return {detail::bounce(o.x0, o.vx, t, cfg.frame_width - o.width),
            detail::bounce(o.y0, o.vy, t, cfg.frame_height - o.height), o.width, o.height};
}

inline bool object_visible(const SynthObject& o, int frame) {
    for (auto [a, b] : o.hidden)
        if (frame >= a && frame <= b) return false;
    return true;
}

inline SyntheticSequence generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SyntheticSequence seq;
    seq.config = cfg;
    std::vector<std::array<double, 3>> group_colour;
    for (int g = 0; g < cfg.lookalike_groups; ++g) group_colour.push_back(detail::random_base_colour(rng));

    for (int k = 0; k < cfg.num_objects; ++k) {
        SynthObject o;
        o.id = k + 1;
        o.width = std::round(rng.uniform(cfg.sprite_min, cfg.sprite_max));
        o.height = std::round(o.width * rng.uniform(cfg.aspect_min, cfg.aspect_max));
        o.height = std::min(o.height, static_cast<double>(cfg.frame_height - 1));
        o.x0 = rng.uniform(0.0, cfg.frame_width - o.width);
        o.y0 = rng.uniform(0.0, cfg.frame_height - o.height);
        const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        o.vx = speed * std::cos(heading);
        o.vy = speed * std::sin(heading);
        o.illumination_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int attempt = 0;; ++attempt) {
            const auto base = cfg.lookalike_groups > 0
                                  ? group_colour[static_cast<std::size_t>(k % cfg.lookalike_groups)]
                                  : detail::random_base_colour(rng);
            o.texture = detail::random_texture(cfg, base, rng);
            bool distinct = true;
            for (const auto& other : seq.objects)
                if (texture_difference(o.texture, other.texture) < kTextureFloor) distinct = false;
            if (distinct || attempt > 1000) break;
        }
        seq.objects.push_back(std::move(o));
    }
    for (int e = 0; e < cfg.occlusion_count && cfg.num_objects > 0 && cfg.occlusion_duration > 0; ++e) {
        auto& o = seq.objects[rng.index(static_cast<std::uint64_t>(cfg.num_objects))];
        const int start = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.num_frames - cfg.occlusion_duration + 1)));
        o.hidden.emplace_back(start, start + cfg.occlusion_duration - 1);
    }

    // Static background: low-contrast grey noise, smoothed in 4x4 blocks.
    Image background(cfg.frame_height, cfg.frame_width, cfg.channels);
    {
        const int bh = (cfg.frame_height + 3) / 4, bw = (cfg.frame_width + 3) / 4;
        std::vector<double> blocks(static_cast<std::size_t>(bh) * bw * cfg.channels);
        for (double& v : blocks) v = rng.uniform(70.0, 150.0);
        for (int y = 0; y < cfg.frame_height; ++y)
            for (int x = 0; x < cfg.frame_width; ++x)
                for (int c = 0; c < cfg.channels; ++c)
                    background.at(y, x, c) = static_cast<std::uint8_t>(
                        blocks[(static_cast<std::size_t>(y / 4) * bw + x / 4) * cfg.channels + c]);
    }

    auto& src = seq.source;
    src.frames.reserve(static_cast<std::size_t>(cfg.num_frames));
    for (int f = 1; f <= cfg.num_frames; ++f) {
        const int t = f - 1;
        std::vector<double> canvas(background.data.begin(), background.data.end());
        std::vector<DetectionRecord> dets;

        for (const auto& o : seq.objects) {  // painter's order by id
            if (!object_visible(o, f)) continue;
            BBox box = object_box(cfg, o, t);
            box = {detail::round2(box.left), detail::round2(box.top), box.width, box.height};
            src.ground_truth.push_back({f, o.id, box, 1.0});

            const double light =
                1.0 + cfg.illumination_amplitude *
                          std::sin(2.0 * std::numbers::pi * t / cfg.illumination_period + o.illumination_phase);
            const double scroll = cfg.texture_scroll * t;
            const int px0 = static_cast<int>(std::floor(box.left)), py0 = static_cast<int>(std::floor(box.top));
            const int px1 = std::min(cfg.frame_width, static_cast<int>(std::ceil(box.right())));
            const int py1 = std::min(cfg.frame_height, static_cast<int>(std::ceil(box.bottom())));
            const int n = o.texture.cells;
            for (int y = std::max(0, py0); y < py1; ++y) {
                const int cy = std::clamp(static_cast<int>((y - box.top) / box.height * n), 0, n - 1);
                const double shift = 2 * cy >= n ? scroll : 0.0;  // lower half drifts sideways
                for (int x = std::max(0, px0); x < px1; ++x) {
                    const double u = std::clamp((x - box.left) / box.width * n, 0.0, n - 1e-9) + shift;
                    const int cx = static_cast<int>(u - n * std::floor(u / n)) % n;
                    const auto& col = o.texture.at(cy, cx);
                    for (int c = 0; c < cfg.channels; ++c) {
                        const double base = cfg.channels == 1 ? (col[0] + col[1] + col[2]) / 3.0 : col[c];
                        canvas[(static_cast<std::size_t>(y) * cfg.frame_width + x) * cfg.channels + c] =
                            255.0 * base * light;
                    }
                }
            }

            if (rng.bernoulli(cfg.miss_rate)) continue;
            BBox d = box;
            if (cfg.jitter_std > 0.0) {
                d.left += rng.normal(0.0, cfg.jitter_std);
                d.top += rng.normal(0.0, cfg.jitter_std);
                d.width = std::max(2.0, d.width + rng.normal(0.0, cfg.jitter_std));
                d.height = std::max(2.0, d.height + rng.normal(0.0, cfg.jitter_std));
            }
            d = {detail::round2(d.left), detail::round2(d.top), detail::round2(d.width), detail::round2(d.height)};
            dets.push_back({f, -1, d, detail::round2(rng.uniform(0.5, 1.0))});
        }
        if (rng.bernoulli(cfg.fp_rate)) {
            const double w = std::round(rng.uniform(cfg.sprite_min, cfg.sprite_max));
            const double h = std::round(w * rng.uniform(cfg.aspect_min, cfg.aspect_max));
            const BBox d{detail::round2(rng.uniform(0.0, cfg.frame_width - w)),
                         detail::round2(rng.uniform(0.0, std::max(0.0, cfg.frame_height - h))), w, h};
            dets.push_back({f, -1, d, detail::round2(rng.uniform(0.1, 0.6))});
        }
        // Detector output order carries no identity information.
        for (std::size_t i = dets.size(); i > 1; --i) std::swap(dets[i - 1], dets[rng.index(i)]);
        src.detections.insert(src.detections.end(), dets.begin(), dets.end());

        Image img(cfg.frame_height, cfg.frame_width, cfg.channels);
        for (std::size_t i = 0; i < canvas.size(); ++i) {
            const double v = canvas[i] + (cfg.pixel_noise > 0.0 ? rng.normal(0.0, cfg.pixel_noise) : 0.0);
            img.data[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
        src.frames.push_back(std::move(img));
    }
    return seq;
}

}  // namespace tripletrack
