#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tripletrack/errors.hpp"

namespace tripletrack {

/// Axis-aligned box in frame pixel coordinates (MOT convention: left, top, width, height).
struct BBox {
    double left = 0.0;
    double top = 0.0;
    double width = 0.0;
    double height = 0.0;

    double right() const noexcept { return left + width; }
    double bottom() const noexcept { return top + height; }
    double area() const noexcept { return width * height; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Shape3 {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }

    friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

/// Where a patch came from: frame index (1-based, as in MOT files) and detection index within that frame.
struct PatchSource {
    int frame = 0;
    int detection = 0;

    friend bool operator==(const PatchSource&, const PatchSource&) = default;
};

/// Fixed-size crop of a detection with intensities in [0, 1].
/// Pixels are stored channel-major (c, y, x) which is the layout the model consumes.
struct Patch {
    Shape3 shape;
    std::vector<double> pixels;
    PatchSource source;
    BBox bbox;

    Patch() = default;
    Patch(Shape3 s, std::vector<double> px, PatchSource src = {}, BBox box = {})
        : shape(s), pixels(std::move(px)), source(src), bbox(box) {
        if (pixels.size() != shape.size())
            throw DimensionError("patch pixel count " + std::to_string(pixels.size()) +
                                 " does not match shape " + to_string(shape));
    }

    double at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
};

using PatchPtr = std::shared_ptr<const Patch>;

/// One detection within a frame: its patch plus the detector's confidence.
struct Detection {
    PatchPtr patch;
    double confidence = 1.0;

    const BBox& bbox() const { return patch->bbox; }
};

/// Everything the tracker and the miner see for one frame.
struct FrameDetections {
    int frame = 0;
    std::vector<Detection> detections;
};

}  // namespace tripletrack
