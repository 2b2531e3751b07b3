#pragma once

// Flat key = value configuration with dotted section keys, e.g.
//
//     # comment
//     pipeline.mode = delta
//     trainer.learning_rate = 0.03
//     model.input_mean = 0.5,0.5,0.5
//
// Files are applied first, then command-line overrides in order. Unknown keys
// and malformed values are ConfigErrors.

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tripletrack/embedding_model.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/evaluation.hpp"
#include "tripletrack/gradcheck.hpp"
#include "tripletrack/mot_io.hpp"
#include "tripletrack/pipeline.hpp"
#include "tripletrack/synthetic.hpp"

namespace tripletrack {

struct AppConfig {
    PipelineConfig pipeline;
    SynthConfig synth;
    EvalConfig eval;
    GradcheckConfig gradcheck;

    void validate() const {
        pipeline.validate();
        synth.validate();
        eval.validate();
        plan_model(gradcheck.model);
        if (gradcheck.triplets < 1) throw ConfigError("gradcheck.triplets must be >= 1");
        if (!(gradcheck.epsilon > 0.0)) throw ConfigError("gradcheck.epsilon must be > 0");
    }
};

namespace detail {

inline std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

inline double config_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

inline long long config_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

inline bool config_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<double> config_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(config_real(key, trim_copy(item)));
    return out;
}

template <class T>
std::string show(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else {
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
        return std::string(buf, p);
    }
}

inline std::string show_reals(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + show(v[i]);
    return s;
}

// Replaces the width of the final dense layer, so that model.output_dim alone
// is enough to resize the default network.
inline void resize_output(ModelConfig& m, int n) {
    m.output_dim = n;
    for (auto it = m.layers.rbegin(); it != m.layers.rend(); ++it)
        if (it->kind == LayerKind::dense) {
            it->out_features = n;
            return;
        }
}

struct Key {
    std::function<void(AppConfig&, const std::string&)> set;
    std::function<std::string(const AppConfig&)> get;
};

inline ModelConfig& model_of(AppConfig& c, bool gradcheck) { return gradcheck ? c.gradcheck.model : c.pipeline.model; }
inline const ModelConfig& model_of(const AppConfig& c, bool gradcheck) {
    return gradcheck ? c.gradcheck.model : c.pipeline.model;
}

inline void add_model(std::map<std::string, Key>& keys, const std::string& prefix, bool gc) {
    keys[prefix + "input_height"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                         model_of(c, gc).input.height = static_cast<int>(config_int(prefix + "input_height", v));
                                     },
                                     [gc](const AppConfig& c) { return show(model_of(c, gc).input.height); }};
    keys[prefix + "input_width"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                        model_of(c, gc).input.width = static_cast<int>(config_int(prefix + "input_width", v));
                                    },
                                    [gc](const AppConfig& c) { return show(model_of(c, gc).input.width); }};
    keys[prefix + "channels"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                     model_of(c, gc).input.channels = static_cast<int>(config_int(prefix + "channels", v));
                                 },
                                 [gc](const AppConfig& c) { return show(model_of(c, gc).input.channels); }};
    keys[prefix + "layers"] = {[gc](AppConfig& c, const std::string& v) { model_of(c, gc).layers = parse_layers(v); },
                               [gc](const AppConfig& c) { return format_layers(model_of(c, gc).layers); }};
    keys[prefix + "output_dim"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                       resize_output(model_of(c, gc), static_cast<int>(config_int(prefix + "output_dim", v)));
                                   },
                                   [gc](const AppConfig& c) { return show(model_of(c, gc).output_dim); }};
    keys[prefix + "seed"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                 model_of(c, gc).seed = static_cast<std::uint64_t>(config_int(prefix + "seed", v));
                             },
                             [gc](const AppConfig& c) { return show(model_of(c, gc).seed); }};
    keys[prefix + "input_mean"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                       model_of(c, gc).input_mean = config_reals(prefix + "input_mean", v);
                                   },
                                   [gc](const AppConfig& c) { return show_reals(model_of(c, gc).input_mean); }};
    keys[prefix + "input_std"] = {[gc, prefix](AppConfig& c, const std::string& v) {
                                      model_of(c, gc).input_std = config_reals(prefix + "input_std", v);
                                  },
                                  [gc](const AppConfig& c) { return show_reals(model_of(c, gc).input_std); }};
}

}  // namespace detail

// Binds a plain field: `expr` names the member through the config `c`.
#define TRIPLETRACK_KEY(name, kind, expr)                                                                   \
    keys[name] = {[](AppConfig& c, const std::string& v) { expr = static_cast<std::remove_reference_t<decltype(expr)>>( \
                                                               detail::config_##kind(name, v)); },             \
                  [](const AppConfig& c) { return detail::show(expr); }}

/// Every recognised key with its setter and formatter.
inline const std::map<std::string, detail::Key>& config_keys() {
    static const std::map<std::string, detail::Key> table = [] {
        std::map<std::string, detail::Key> keys;
        TRIPLETRACK_KEY("tracker.gate_threshold", real, c.pipeline.tracker.gate_threshold);
        TRIPLETRACK_KEY("tracker.max_frames_unextended", int, c.pipeline.tracker.max_frames_unextended);
        TRIPLETRACK_KEY("tracker.min_track_length", int, c.pipeline.tracker.min_track_length);
        TRIPLETRACK_KEY("tracker.keep_active_short_tracks", bool, c.pipeline.tracker.keep_active_short_tracks);
        TRIPLETRACK_KEY("miner.buffer_length", int, c.pipeline.miner.buffer_length);
        TRIPLETRACK_KEY("miner.seed", int, c.pipeline.miner.seed);
        TRIPLETRACK_KEY("trainer.learning_rate", real, c.pipeline.trainer.learning_rate);
        TRIPLETRACK_KEY("trainer.margin", real, c.pipeline.trainer.margin);
        TRIPLETRACK_KEY("trainer.batch_size", int, c.pipeline.trainer.batch_size);
        TRIPLETRACK_KEY("pipeline.reset_model_per_sequence", bool, c.pipeline.reset_model_per_sequence);
        keys["pipeline.mode"] = {[](AppConfig& c, const std::string& v) { c.pipeline.mode = parse_mode(v); },
                                 [](const AppConfig& c) { return to_string(c.pipeline.mode); }};
        detail::add_model(keys, "model.", false);
        detail::add_model(keys, "gradcheck.model.", true);
        TRIPLETRACK_KEY("gradcheck.triplets", int, c.gradcheck.triplets);
        TRIPLETRACK_KEY("gradcheck.margin", real, c.gradcheck.margin);
        TRIPLETRACK_KEY("gradcheck.epsilon", real, c.gradcheck.epsilon);
        TRIPLETRACK_KEY("gradcheck.min_epsilon", real, c.gradcheck.min_epsilon);
        TRIPLETRACK_KEY("gradcheck.coordinates_per_tensor", int, c.gradcheck.coordinates_per_tensor);
        TRIPLETRACK_KEY("gradcheck.seed", int, c.gradcheck.seed);
        TRIPLETRACK_KEY("eval.iou_threshold", real, c.eval.iou_threshold);
        TRIPLETRACK_KEY("synth.seed", int, c.synth.seed);
        TRIPLETRACK_KEY("synth.frame_height", int, c.synth.frame_height);
        TRIPLETRACK_KEY("synth.frame_width", int, c.synth.frame_width);
        TRIPLETRACK_KEY("synth.channels", int, c.synth.channels);
        TRIPLETRACK_KEY("synth.num_objects", int, c.synth.num_objects);
        TRIPLETRACK_KEY("synth.num_frames", int, c.synth.num_frames);
        TRIPLETRACK_KEY("synth.sprite_min", real, c.synth.sprite_min);
        TRIPLETRACK_KEY("synth.sprite_max", real, c.synth.sprite_max);
        TRIPLETRACK_KEY("synth.aspect_min", real, c.synth.aspect_min);
        TRIPLETRACK_KEY("synth.aspect_max", real, c.synth.aspect_max);
        TRIPLETRACK_KEY("synth.speed_min", real, c.synth.speed_min);
        TRIPLETRACK_KEY("synth.speed_max", real, c.synth.speed_max);
        TRIPLETRACK_KEY("synth.texture_cells", int, c.synth.texture_cells);
        TRIPLETRACK_KEY("synth.texture_contrast", real, c.synth.texture_contrast);
        TRIPLETRACK_KEY("synth.lookalike_groups", int, c.synth.lookalike_groups);
        TRIPLETRACK_KEY("synth.texture_scroll", real, c.synth.texture_scroll);
        TRIPLETRACK_KEY("synth.illumination_amplitude", real, c.synth.illumination_amplitude);
        TRIPLETRACK_KEY("synth.illumination_period", real, c.synth.illumination_period);
        TRIPLETRACK_KEY("synth.pixel_noise", real, c.synth.pixel_noise);
        TRIPLETRACK_KEY("synth.jitter_std", real, c.synth.jitter_std);
        TRIPLETRACK_KEY("synth.miss_rate", real, c.synth.miss_rate);
        TRIPLETRACK_KEY("synth.fp_rate", real, c.synth.fp_rate);
        TRIPLETRACK_KEY("synth.occlusion_count", int, c.synth.occlusion_count);
        TRIPLETRACK_KEY("synth.occlusion_duration", int, c.synth.occlusion_duration);
        return keys;
    }();
    return table;
}

#undef TRIPLETRACK_KEY

inline void set_config_value(AppConfig& cfg, const std::string& key, const std::string& value) {
    const auto& keys = config_keys();
    auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second.set(cfg, value);
}

/// Applies "key=value" (the CLI override form).
inline void apply_override(AppConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    set_config_value(cfg, detail::trim_copy(assignment.substr(0, eq)), detail::trim_copy(assignment.substr(eq + 1)));
}

/// Applies every assignment in a config text. Blank lines and '#' comments are skipped.
inline void apply_config_text(AppConfig& cfg, std::string_view text) {
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (detail::trim(line).empty()) continue;
        try {
            apply_override(cfg, line);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

/// Every key with its current value, one "key = value" line each, sorted by key.
inline std::string format_config(const AppConfig& cfg) {
    std::string out;
    for (const auto& [k, key] : config_keys()) out += k + " = " + key.get(cfg) + "\n";
    return out;
}

inline AppConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    AppConfig cfg;
    if (!path.empty()) apply_config_text(cfg, read_text_file(path));
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

}  // namespace tripletrack
