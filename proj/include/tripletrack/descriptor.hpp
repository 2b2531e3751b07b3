#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tripletrack/errors.hpp"

namespace tripletrack {

/// Fixed-length embedding of a patch. Entries are finite by construction.
class Descriptor {
public:
    Descriptor() = default;
    explicit Descriptor(std::vector<double> values) : values_(std::move(values)) { check_finite(); }
    Descriptor(std::initializer_list<double> values) : values_(values) { check_finite(); }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    double norm() const noexcept {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return std::sqrt(s);
    }

    bool is_zero() const noexcept {
        for (double v : values_)
            if (v != 0.0) return false;
        return true;
    }

    friend bool operator==(const Descriptor&, const Descriptor&) = default;

private:
    void check_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidDescriptorError("descriptor has a non-finite entry");
    }

    std::vector<double> values_;
};

enum class DistanceMetric { cosine, euclidean };

namespace detail {

inline void require_same_length(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("descriptor length mismatch: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
}

}  // namespace detail

/// 1 - a.b / (|a||b|), clamped to [0, 2] against rounding.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    detail::require_same_length(a, b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw InvalidDescriptorError("cosine distance of a zero vector");
    double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    if (d < 0.0) d = 0.0;
    if (d > 2.0) d = 2.0;
    return d;
}

inline double cosine_distance(const Descriptor& a, const Descriptor& b) {
    return cosine_distance(a.values(), b.values());
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    detail::require_same_length(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double euclidean_distance(const Descriptor& a, const Descriptor& b) {
    return euclidean_distance(a.values(), b.values());
}

inline double distance(DistanceMetric metric, const Descriptor& a, const Descriptor& b) {
    return metric == DistanceMetric::cosine ? cosine_distance(a, b) : euclidean_distance(a, b);
}

}  // namespace tripletrack
