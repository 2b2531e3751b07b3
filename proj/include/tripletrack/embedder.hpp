#pragma once

#include <concepts>
#include <map>
#include <memory>
#include <utility>

#include "tripletrack/descriptor.hpp"
#include "tripletrack/embedding_model.hpp"
#include "tripletrack/patch.hpp"

namespace tripletrack {

/// Anything that maps a patch to a descriptor under one fixed model snapshot.
template <typename E>
concept Embedder = requires(E& e, const Patch& p) {
    { e(p) } -> std::convertible_to<Descriptor>;
};

/// Stateless: runs the network on every call.
class ModelEmbedder {
public:
    explicit ModelEmbedder(const ModelParameters& params) : params_(&params) {}

    Descriptor operator()(const Patch& p) const { return forward(*params_, p); }

private:
    const ModelParameters* params_;
};

/// Memoises descriptors by patch source (frame, detection) for as long as the
/// snapshot stays the same. Only valid when every patch with a given source is
/// the same patch, which holds for patches cut by make_frame_detections.
class CachingEmbedder {
public:
    CachingEmbedder() = default;
    explicit CachingEmbedder(std::shared_ptr<const ModelParameters> model) { set_model(std::move(model)); }

    void set_model(std::shared_ptr<const ModelParameters> model) {
        if (model != model_) cache_.clear();
        model_ = std::move(model);
    }

    const std::shared_ptr<const ModelParameters>& model() const noexcept { return model_; }

    /// Drops cached descriptors of frames before `frame`.
    void forget_before(int frame) { cache_.erase(cache_.begin(), cache_.lower_bound({frame, -1})); }

    Descriptor operator()(const Patch& p) {
        const std::pair<int, int> key{p.source.frame, p.source.detection};
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        ++misses_;
        Descriptor d = forward(*model_, p);
        cache_.emplace(key, d);
        return d;
    }

    std::size_t misses() const noexcept { return misses_; }

private:
    std::shared_ptr<const ModelParameters> model_;
    std::map<std::pair<int, int>, Descriptor> cache_;
    std::size_t misses_ = 0;
};

}  // namespace tripletrack
