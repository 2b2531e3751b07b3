#pragma once

#include <vector>

#include "tripletrack/patch.hpp"

namespace tripletrack {

/// Two views of one object (anchor, positive) and one view of another object (negative).
struct Triplet {
    PatchPtr anchor;
    PatchPtr positive;
    PatchPtr negative;
    // Diagnostics recorded at mining time.
    double anchor_positive_distance = 0.0;
    double positive_negative_distance = 0.0;
};

struct TripletBatch {
    std::vector<Triplet> triplets;

    std::size_t size() const noexcept { return triplets.size(); }
};

}  // namespace tripletrack
