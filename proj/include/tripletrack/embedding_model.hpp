#pragma once

// Compact convolutional descriptor generator with an analytic backward pass
// for the triplet cosine loss, trained by plain full-batch gradient descent.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tripletrack/descriptor.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/patch.hpp"
#include "tripletrack/random.hpp"
#include "tripletrack/triplet.hpp"

namespace tripletrack {

enum class LayerKind { conv, relu, maxpool, flatten, dense };

/// One stage of the network. Only the fields relevant to `kind` are used.
/// Convolutions are stride 1 with zero "same" padding and an odd kernel.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int pool = 0;
    int out_features = 0;

    static LayerSpec conv(int in, int out, int k) { return {LayerKind::conv, in, out, k, 0, 0}; }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec maxpool(int p) { return {LayerKind::maxpool, 0, 0, 0, p, 0}; }
    static LayerSpec flatten() { return {LayerKind::flatten}; }
    static LayerSpec dense(int out) { return {LayerKind::dense, 0, 0, 0, 0, out}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Layer list text form, e.g. "conv:3:8:3,relu,maxpool:2,flatten,dense:64".
inline std::string format_layers(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (const auto& l : layers) {
        if (!out.empty()) out += ',';
        switch (l.kind) {
            case LayerKind::conv:
                out += "conv:" + std::to_string(l.in_channels) + ":" + std::to_string(l.out_channels) + ":" +
                       std::to_string(l.kernel);
                break;
            case LayerKind::relu: out += "relu"; break;
            case LayerKind::maxpool: out += "maxpool:" + std::to_string(l.pool); break;
            case LayerKind::flatten: out += "flatten"; break;
            case LayerKind::dense: out += "dense:" + std::to_string(l.out_features); break;
        }
    }
    return out;
}

inline std::vector<LayerSpec> parse_layers(std::string_view text) {
    auto split = [](std::string_view s, char sep) {
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : s) {
            if (ch == sep) {
                parts.push_back(cur);
                cur.clear();
            } else if (ch != ' ' && ch != '\t') {
                cur += ch;
            }
        }
        parts.push_back(cur);
        return parts;
    };
    auto to_int = [&](const std::string& s, const std::string& item) {
        try {
            std::size_t pos = 0;
            int v = std::stoi(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("bad integer in layer '" + item + "'");
        }
    };

    std::vector<LayerSpec> layers;
    for (const auto& item : split(text, ',')) {
        auto f = split(item, ':');
        const std::string& name = f[0];
        auto arity = [&](std::size_t n) {
            if (f.size() != n + 1) throw ConfigError("layer '" + item + "' expects " + std::to_string(n) + " argument(s)");
        };
        if (name == "conv") {
            arity(3);
            layers.push_back(LayerSpec::conv(to_int(f[1], item), to_int(f[2], item), to_int(f[3], item)));
        } else if (name == "relu") {
            arity(0);
            layers.push_back(LayerSpec::relu());
        } else if (name == "maxpool") {
            arity(1);
            layers.push_back(LayerSpec::maxpool(to_int(f[1], item)));
        } else if (name == "flatten") {
            arity(0);
            layers.push_back(LayerSpec::flatten());
        } else if (name == "dense") {
            arity(1);
            layers.push_back(LayerSpec::dense(to_int(f[1], item)));
        } else {
            throw ConfigError("unknown layer '" + item + "'");
        }
    }
    return layers;
}

inline std::vector<LayerSpec> default_layers() {
    return {LayerSpec::conv(3, 8, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::conv(8, 16, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::flatten(), LayerSpec::dense(64)};
}

struct ModelConfig {
    Shape3 input{32, 32, 3};
    std::vector<LayerSpec> layers = default_layers();
    int output_dim = 64;
    std::uint64_t seed = 42;
    // Optional per-channel normalisation applied to patch pixels before the first layer.
    std::vector<double> input_mean;
    std::vector<double> input_std;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainerConfig {
    double learning_rate = 3.28e-5;
    double margin = 0.3;
    int batch_size = 20;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    }
};

/// Shape-resolved layer with its slice of the flat parameter vector.
struct LayerPlan {
    LayerSpec spec;
    Shape3 in;
    Shape3 out;
    std::size_t weight_offset = 0;
    std::size_t weight_count = 0;
    std::size_t bias_offset = 0;
    std::size_t bias_count = 0;
};

struct ModelPlan {
    std::vector<LayerPlan> layers;
    std::size_t parameter_count = 0;
};

/// Checks shape consistency and lays out the parameters. Throws ConfigError.
inline ModelPlan plan_model(const ModelConfig& cfg) {
    if (cfg.input.height < 1 || cfg.input.width < 1 || cfg.input.channels < 1)
        throw ConfigError("input shape must be positive, got " + to_string(cfg.input));
    if (cfg.output_dim < 8) throw ConfigError("output dimension must be >= 8");
    if (cfg.layers.empty()) throw ConfigError("empty layer list");
    const auto c = static_cast<std::size_t>(cfg.input.channels);
    if (!cfg.input_mean.empty() && cfg.input_mean.size() != c)
        throw ConfigError("input_mean needs one value per channel");
    if (!cfg.input_std.empty()) {
        if (cfg.input_std.size() != c) throw ConfigError("input_std needs one value per channel");
        for (double s : cfg.input_std)
            if (!(s > 0.0)) throw ConfigError("input_std entries must be > 0");
    }

    ModelPlan plan;
    Shape3 cur = cfg.input;
    bool flat = false;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerSpec& l = cfg.layers[i];
        LayerPlan lp{l, cur, cur};
        const std::string where = "layer " + std::to_string(i) + ": ";
        switch (l.kind) {
            case LayerKind::conv:
                if (flat) throw ConfigError(where + "conv after flatten");
                if (l.in_channels != cur.channels)
                    throw ConfigError(where + "conv expects " + std::to_string(l.in_channels) +
                                      " input channels but receives " + std::to_string(cur.channels));
                if (l.out_channels < 1) throw ConfigError(where + "conv needs >= 1 output channel");
                if (l.kernel < 1 || l.kernel % 2 == 0) throw ConfigError(where + "conv kernel must be odd and positive");
                lp.out = {cur.height, cur.width, l.out_channels};
                lp.weight_count = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
                lp.bias_count = static_cast<std::size_t>(l.out_channels);
                break;
            case LayerKind::relu:
                break;
            case LayerKind::maxpool:
                if (flat) throw ConfigError(where + "maxpool after flatten");
                if (l.pool < 1) throw ConfigError(where + "pool size must be >= 1");
                lp.out = {cur.height / l.pool, cur.width / l.pool, cur.channels};
                if (lp.out.height < 1 || lp.out.width < 1)
                    throw ConfigError(where + "pooling reduces " + to_string(cur) + " to nothing");
                break;
            case LayerKind::flatten:
                lp.out = {1, 1, static_cast<int>(cur.size())};
                flat = true;
                break;
            case LayerKind::dense:
                if (!flat) throw ConfigError(where + "dense requires a preceding flatten");
                if (l.out_features < 1) throw ConfigError(where + "dense needs >= 1 output");
                lp.out = {1, 1, l.out_features};
                lp.weight_count = static_cast<std::size_t>(l.out_features) * cur.size();
                lp.bias_count = static_cast<std::size_t>(l.out_features);
                break;
        }
        lp.weight_offset = offset;
        offset += lp.weight_count;
        lp.bias_offset = offset;
        offset += lp.bias_count;
        cur = lp.out;
        plan.layers.push_back(lp);
    }
    if (!flat) throw ConfigError("network output must be flattened");
    if (cur.size() != static_cast<std::size_t>(cfg.output_dim))
        throw ConfigError("network produces " + std::to_string(cur.size()) + " outputs but output_dim is " +
                          std::to_string(cfg.output_dim));
    plan.parameter_count = offset;
    return plan;
}

/// Named slice of the flat parameter vector (one weight or bias tensor).
struct TensorView {
    std::string name;
    std::size_t offset;
    std::size_t count;
};

/// All trainable values of one network, flattened, plus an update counter.
class ModelParameters {
public:
    ModelParameters() = default;
    ModelParameters(ModelConfig cfg, std::vector<double> values, std::uint64_t version = 0)
        : config_(std::move(cfg)), plan_(plan_model(config_)), values_(std::move(values)), version_(version) {
        if (values_.size() != plan_.parameter_count)
            throw DimensionError("parameter vector has " + std::to_string(values_.size()) + " values, model needs " +
                                 std::to_string(plan_.parameter_count));
    }

    const ModelConfig& config() const noexcept { return config_; }
    const ModelPlan& plan() const noexcept { return plan_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> mutable_values() noexcept { return values_; }
    std::uint64_t version() const noexcept { return version_; }
    void set_version(std::uint64_t v) noexcept { version_ = v; }

    std::vector<TensorView> tensors() const {
        std::vector<TensorView> out;
        for (std::size_t i = 0; i < plan_.layers.size(); ++i) {
            const auto& l = plan_.layers[i];
            if (l.weight_count) out.push_back({"layer" + std::to_string(i) + ".weight", l.weight_offset, l.weight_count});
            if (l.bias_count) out.push_back({"layer" + std::to_string(i) + ".bias", l.bias_offset, l.bias_count});
        }
        return out;
    }

    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const ModelParameters& a, const ModelParameters& b) {
        return a.version_ == b.version_ && a.config_ == b.config_ && a.values_ == b.values_;
    }

private:
    ModelConfig config_;
    ModelPlan plan_;
    std::vector<double> values_;
    std::uint64_t version_ = 0;
};

/// Seeded uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline ModelParameters init_model(const ModelConfig& cfg) {
    ModelPlan plan = plan_model(cfg);
    std::vector<double> values(plan.parameter_count, 0.0);
    Rng rng(cfg.seed);
    for (const auto& l : plan.layers) {
        if (!l.weight_count) continue;
        const std::size_t fan_in = l.weight_count / l.bias_count;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < l.weight_count; ++i) values[l.weight_offset + i] = rng.uniform(-bound, bound);
        for (std::size_t i = 0; i < l.bias_count; ++i) values[l.bias_offset + i] = rng.uniform(-bound, bound);
    }
    return ModelParameters(cfg, std::move(values), 0);
}

/// Threshold below which the output floor kicks in, and the constant it adds.
inline constexpr double kOutputFloorNorm = 1e-8;
inline constexpr double kOutputFloorValue = 1e-6;

/// Intermediate activations of one forward pass; index 0 is the (normalised) input.
struct ForwardTrace {
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<std::uint32_t>> pool_argmax;

    std::span<const double> output() const { return activations.back(); }
};

namespace detail {

inline void conv_forward(const LayerPlan& l, const double* params, const double* in, double* out) {
    const int H = l.in.height, W = l.in.width, C = l.in.channels, O = l.out.channels, K = l.spec.kernel, P = K / 2;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const double* weights = params + l.weight_offset;
    const double* bias = params + l.bias_offset;
    for (int o = 0; o < O; ++o) {
        double* dst_plane = out + o * hw;
        std::fill(dst_plane, dst_plane + hw, bias[o]);
        for (int c = 0; c < C; ++c) {
            const double* src_plane = in + c * hw;
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - P;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - P;
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    const double w = weights[((o * C + c) * K + ky) * K + kx];
                    for (int y = y0; y < y1; ++y) {
                        const double* src = src_plane + (y + dy) * W + dx;
                        double* dst = dst_plane + y * W;
                        for (int x = x0; x < x1; ++x) dst[x] += w * src[x];
                    }
                }
            }
        }
    }
}

// grad_in may be null (first layer).
inline void conv_backward(const LayerPlan& l, const double* params, const double* in, const double* grad_out,
                          double* grad_params, double* grad_in) {
    const int H = l.in.height, W = l.in.width, C = l.in.channels, O = l.out.channels, K = l.spec.kernel, P = K / 2;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const double* weights = params + l.weight_offset;
    double* gw = grad_params + l.weight_offset;
    double* gb = grad_params + l.bias_offset;
    for (int o = 0; o < O; ++o) {
        const double* g_plane = grad_out + o * hw;
        double bsum = 0.0;
        for (std::size_t i = 0; i < hw; ++i) bsum += g_plane[i];
        gb[o] += bsum;
        for (int c = 0; c < C; ++c) {
            const double* src_plane = in + c * hw;
            double* gin_plane = grad_in ? grad_in + c * hw : nullptr;
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - P;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - P;
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    const std::size_t widx = static_cast<std::size_t>(((o * C + c) * K + ky) * K + kx);
                    const double w = weights[widx];
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* src = src_plane + (y + dy) * W + dx;
                        const double* g = g_plane + y * W;
                        for (int x = x0; x < x1; ++x) acc += g[x] * src[x];
                        if (gin_plane) {
                            double* gi = gin_plane + (y + dy) * W + dx;
                            for (int x = x0; x < x1; ++x) gi[x] += w * g[x];
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
}

inline void maxpool_forward(const LayerPlan& l, const double* in, double* out, std::uint32_t* argmax) {
    const int H = l.in.height, W = l.in.width, C = l.in.channels, p = l.spec.pool;
    const int OH = l.out.height, OW = l.out.width;
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                std::uint32_t best = static_cast<std::uint32_t>((c * H + oy * p) * W + ox * p);
                double best_v = in[best];
                for (int dy = 0; dy < p; ++dy) {
                    for (int dx = 0; dx < p; ++dx) {
                        const auto idx = static_cast<std::uint32_t>((c * H + oy * p + dy) * W + ox * p + dx);
                        if (in[idx] > best_v) {
                            best_v = in[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(c) * OH + oy) * OW + ox;
                out[o] = best_v;
                argmax[o] = best;
            }
        }
    }
}

inline void dense_forward(const LayerPlan& l, const double* params, const double* in, double* out) {
    const std::size_t n_in = l.in.size(), n_out = l.out.size();
    const double* w = params + l.weight_offset;
    const double* b = params + l.bias_offset;
    for (std::size_t j = 0; j < n_out; ++j) {
        const double* row = w + j * n_in;
        double acc = b[j];
        for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
        out[j] = acc;
    }
}

inline void dense_backward(const LayerPlan& l, const double* params, const double* in, const double* grad_out,
                           double* grad_params, double* grad_in) {
    const std::size_t n_in = l.in.size(), n_out = l.out.size();
    const double* w = params + l.weight_offset;
    double* gw = grad_params + l.weight_offset;
    double* gb = grad_params + l.bias_offset;
    for (std::size_t j = 0; j < n_out; ++j) {
        const double g = grad_out[j];
        gb[j] += g;
        if (g == 0.0) continue;
        double* grow = gw + j * n_in;
        const double* row = w + j * n_in;
        for (std::size_t i = 0; i < n_in; ++i) grow[i] += g * in[i];
        if (grad_in)
            for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += g * row[i];
    }
}

}  // namespace detail

/// Runs the network, keeping every activation for a later backward pass.
/// The returned trace's output already has the output floor applied.
inline ForwardTrace forward_traced(const ModelParameters& params, const Patch& patch) {
    const ModelConfig& cfg = params.config();
    if (patch.shape != cfg.input)
        throw DimensionError("patch shape " + to_string(patch.shape) + " does not match model input " +
                             to_string(cfg.input));
    const ModelPlan& plan = params.plan();
    const double* theta = params.values().data();

    ForwardTrace trace;
    trace.activations.resize(plan.layers.size() + 1);
    trace.pool_argmax.resize(plan.layers.size());
    trace.activations[0] = patch.pixels;
    if (!cfg.input_mean.empty() || !cfg.input_std.empty()) {
        const std::size_t hw = static_cast<std::size_t>(cfg.input.height) * cfg.input.width;
        auto& x = trace.activations[0];
        for (int c = 0; c < cfg.input.channels; ++c) {
            const double m = cfg.input_mean.empty() ? 0.0 : cfg.input_mean[c];
            const double s = cfg.input_std.empty() ? 1.0 : cfg.input_std[c];
            for (std::size_t i = 0; i < hw; ++i) x[c * hw + i] = (x[c * hw + i] - m) / s;
        }
    }

    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        const LayerPlan& l = plan.layers[i];
        const std::vector<double>& in = trace.activations[i];
        std::vector<double>& out = trace.activations[i + 1];
        switch (l.spec.kind) {
            case LayerKind::conv:
                out.resize(l.out.size());
                detail::conv_forward(l, theta, in.data(), out.data());
                break;
            case LayerKind::relu:
                out.resize(in.size());
                for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
                break;
            case LayerKind::maxpool:
                out.resize(l.out.size());
                trace.pool_argmax[i].resize(l.out.size());
                detail::maxpool_forward(l, in.data(), out.data(), trace.pool_argmax[i].data());
                break;
            case LayerKind::flatten:
                out = in;
                break;
            case LayerKind::dense:
                out.resize(l.out.size());
                detail::dense_forward(l, theta, in.data(), out.data());
                break;
        }
    }

    auto& y = trace.activations.back();
    double sq = 0.0;
    for (double v : y) sq += v * v;
    if (std::sqrt(sq) < kOutputFloorNorm) y[0] += kOutputFloorValue;
    return trace;
}

inline Descriptor forward(const ModelParameters& params, const Patch& patch) {
    ForwardTrace t = forward_traced(params, patch);
    return Descriptor(std::move(t.activations.back()));
}

/// Accumulates d(loss)/d(theta) into grad_params given d(loss)/d(output).
inline void backward(const ModelParameters& params, const ForwardTrace& trace, std::span<const double> grad_output,
                     std::span<double> grad_params) {
    const ModelPlan& plan = params.plan();
    if (grad_params.size() != plan.parameter_count) throw DimensionError("gradient buffer has wrong size");
    if (grad_output.size() != trace.output().size()) throw DimensionError("output gradient has wrong size");
    const double* theta = params.values().data();

    std::vector<double> g(grad_output.begin(), grad_output.end());
    std::vector<double> g_in;
    for (std::size_t i = plan.layers.size(); i-- > 0;) {
        const LayerPlan& l = plan.layers[i];
        const std::vector<double>& in = trace.activations[i];
        const bool need_input_grad = i > 0;
        switch (l.spec.kind) {
            case LayerKind::conv:
                g_in.assign(need_input_grad ? in.size() : 0, 0.0);
                detail::conv_backward(l, theta, in.data(), g.data(), grad_params.data(),
                                      need_input_grad ? g_in.data() : nullptr);
                break;
            case LayerKind::relu:
                g_in.resize(in.size());
                for (std::size_t k = 0; k < in.size(); ++k) g_in[k] = in[k] > 0.0 ? g[k] : 0.0;
                break;
            case LayerKind::maxpool: {
                g_in.assign(in.size(), 0.0);
                const auto& am = trace.pool_argmax[i];
                for (std::size_t k = 0; k < am.size(); ++k) g_in[am[k]] += g[k];
                break;
            }
            case LayerKind::flatten:
                g_in = g;
                break;
            case LayerKind::dense:
                g_in.assign(need_input_grad ? in.size() : 0, 0.0);
                detail::dense_backward(l, theta, in.data(), g.data(), grad_params.data(),
                                       need_input_grad ? g_in.data() : nullptr);
                break;
        }
        std::swap(g, g_in);
    }
}

/// max{0, D_cos(anchor, positive) + m - D_cos(anchor, negative)}.
inline double triplet_cosine_loss(const Descriptor& anchor, const Descriptor& positive, const Descriptor& negative,
                                  double margin) {
    const double v = cosine_distance(anchor, positive) + margin - cosine_distance(anchor, negative);
    return v > 0.0 ? v : 0.0;
}

namespace detail {

struct CosineTerms {
    double cos;
    double na;
    double nb;
};

inline CosineTerms cosine_terms(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        sa += a[i] * a[i];
        sb += b[i] * b[i];
    }
    if (sa == 0.0 || sb == 0.0) throw InvalidDescriptorError("cosine of a zero vector");
    const double na = std::sqrt(sa), nb = std::sqrt(sb);
    return {dot / (na * nb), na, nb};
}

// out += scale * d cos(a, b) / d a
inline void add_cosine_grad(std::span<const double> a, std::span<const double> b, const CosineTerms& t, double scale,
                            std::span<double> out) {
    const double inv = 1.0 / (t.na * t.nb);
    const double self = t.cos / (t.na * t.na);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += scale * (b[i] * inv - a[i] * self);
}

}  // namespace detail

/// Hinge loss of one triplet on raw descriptor vectors, with gradients w.r.t. each vector.
/// The triplet is active only when the hinge argument is strictly positive; inactive
/// triplets leave the gradient buffers untouched.
inline double triplet_loss_with_gradient(std::span<const double> a, std::span<const double> p,
                                         std::span<const double> n, double margin, double scale,
                                         std::span<double> ga, std::span<double> gp, std::span<double> gn) {
    detail::require_same_length(a, p);
    detail::require_same_length(a, n);
    const auto ap = detail::cosine_terms(a, p);
    const auto an = detail::cosine_terms(a, n);
    // D(a,p) + m - D(a,n) = cos(a,n) - cos(a,p) + m
    const double arg = an.cos - ap.cos + margin;
    if (!(arg > 0.0)) return 0.0;
    detail::add_cosine_grad(a, n, an, scale, ga);
    detail::add_cosine_grad(a, p, ap, -scale, ga);
    detail::add_cosine_grad(p, a, {ap.cos, ap.nb, ap.na}, -scale, gp);
    detail::add_cosine_grad(n, a, {an.cos, an.nb, an.na}, scale, gn);
    return arg;
}

struct BatchEvaluation {
    double mean_loss = 0.0;
    std::vector<double> gradient;  // d(mean_loss)/d(theta)
    std::size_t active = 0;        // triplets with a positive hinge argument
};

/// Mean triplet cosine loss over the batch and its exact gradient.
inline BatchEvaluation evaluate_batch(const ModelParameters& params, const TripletBatch& batch, double margin,
                                      bool with_gradient = true) {
    BatchEvaluation ev;
    if (with_gradient) ev.gradient.assign(params.plan().parameter_count, 0.0);
    if (batch.triplets.empty()) return ev;
    const double scale = 1.0 / static_cast<double>(batch.triplets.size());
    double total = 0.0;
    for (const auto& t : batch.triplets) {
        if (!t.anchor || !t.positive || !t.negative) throw InputError("triplet with a missing patch");
        ForwardTrace ta = forward_traced(params, *t.anchor);
        ForwardTrace tp = forward_traced(params, *t.positive);
        ForwardTrace tn = forward_traced(params, *t.negative);
        const std::size_t n = ta.output().size();
        std::vector<double> ga(n, 0.0), gp(n, 0.0), gn(n, 0.0);
        const double l = triplet_loss_with_gradient(ta.output(), tp.output(), tn.output(), margin, scale, ga, gp, gn);
        total += l;
        if (l > 0.0) {
            ++ev.active;
            if (with_gradient) {
                backward(params, ta, ga, ev.gradient);
                backward(params, tp, gp, ev.gradient);
                backward(params, tn, gn, ev.gradient);
            }
        }
    }
    ev.mean_loss = total * scale;
    return ev;
}

inline double batch_loss(const ModelParameters& params, const TripletBatch& batch, double margin) {
    return evaluate_batch(params, batch, margin, false).mean_loss;
}

struct TrainResult {
    ModelParameters params;
    double mean_loss = 0.0;  // before the update
};

/// One full-batch gradient-descent step on the mean triplet cosine loss.
/// The input parameters are never modified; on divergence nothing is returned.
inline TrainResult train_batch(const ModelParameters& params, const TripletBatch& batch, const TrainerConfig& cfg) {
    cfg.validate();
    if (batch.triplets.size() != static_cast<std::size_t>(cfg.batch_size))
        throw InputError("batch holds " + std::to_string(batch.triplets.size()) + " triplets, expected " +
                         std::to_string(cfg.batch_size));
    BatchEvaluation ev = evaluate_batch(params, batch, cfg.margin);
    if (!std::isfinite(ev.mean_loss)) throw TrainingDivergenceError("non-finite batch loss");
    for (double g : ev.gradient)
        if (!std::isfinite(g)) throw TrainingDivergenceError("non-finite gradient");

    TrainResult result{params, ev.mean_loss};
    if (ev.mean_loss > 0.0) {
        auto theta = result.params.mutable_values();
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * ev.gradient[i];
        if (!result.params.all_finite()) throw TrainingDivergenceError("non-finite parameters after update");
        // Finite but huge weights can still overflow the activations; probe one triplet.
        try {
            const Triplet& probe = batch.triplets.front();
            for (const auto* p : {&probe.anchor, &probe.positive, &probe.negative}) forward(result.params, **p);
        } catch (const InvalidDescriptorError&) {
            throw TrainingDivergenceError("non-finite descriptors after update");
        }
    }
    result.params.set_version(params.version() + 1);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'T', 'T', 'C', 'K', 'P', 'T', '0', '1'};

inline std::string encode_model_config(const ModelConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "input=" << c.input.height << ' ' << c.input.width << ' ' << c.input.channels << '\n';
    os << "layers=" << format_layers(c.layers) << '\n';
    os << "output_dim=" << c.output_dim << '\n';
    os << "seed=" << c.seed << '\n';
    os << "input_mean=";
    for (double v : c.input_mean) os << v << ' ';
    os << "\ninput_std=";
    for (double v : c.input_std) os << v << ' ';
    os << '\n';
    return os.str();
}

inline ModelConfig decode_model_config(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("bad checkpoint config line", 0);
        const std::string key = line.substr(0, eq);
        std::istringstream vs(line.substr(eq + 1));
        if (key == "input") {
            vs >> c.input.height >> c.input.width >> c.input.channels;
        } else if (key == "layers") {
            c.layers = parse_layers(line.substr(eq + 1));
        } else if (key == "output_dim") {
            vs >> c.output_dim;
        } else if (key == "seed") {
            vs >> c.seed;
        } else if (key == "input_mean" || key == "input_std") {
            auto& dst = key == "input_mean" ? c.input_mean : c.input_std;
            double v;
            while (vs >> v) dst.push_back(v);
        } else {
            throw ParseError("unknown checkpoint config key '" + key + "'", 0);
        }
    }
    return c;
}

}  // namespace detail

/// Binary checkpoint: 8-byte magic, u64 config length, config text, u64 version,
/// u64 parameter count, then raw little-endian IEEE-754 doubles. Round-trips exactly.
inline void save_checkpoint(const ModelParameters& params, std::ostream& os) {
    static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");
    const std::string cfg = detail::encode_model_config(params.config());
    const std::uint64_t cfg_len = cfg.size(), version = params.version(), count = params.values().size();
    os.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
    os.write(reinterpret_cast<const char*>(&cfg_len), sizeof cfg_len);
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&count), sizeof count);
    os.write(reinterpret_cast<const char*>(params.values().data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!os) throw InputError("failed to write checkpoint");
}

inline ModelParameters load_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0)
        throw ParseError("not a model checkpoint", 0);
    std::uint64_t cfg_len = 0, version = 0, count = 0;
    is.read(reinterpret_cast<char*>(&cfg_len), sizeof cfg_len);
    if (!is || cfg_len > (1u << 20)) throw ParseError("corrupt checkpoint header", 0);
    std::string cfg(cfg_len, '\0');
    is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
    is.read(reinterpret_cast<char*>(&version), sizeof version);
    is.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!is) throw ParseError("truncated checkpoint", 0);
    ModelConfig config = detail::decode_model_config(cfg);
    if (count != plan_model(config).parameter_count) throw ParseError("checkpoint parameter count mismatch", 0);
    std::vector<double> values(count);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw ParseError("truncated checkpoint", 0);
    return ModelParameters(std::move(config), std::move(values), version);
}

inline void save_checkpoint(const ModelParameters& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open " + path + " for writing");
    save_checkpoint(params, os);
}

inline ModelParameters load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open " + path);
    return load_checkpoint(is);
}

}  // namespace tripletrack
