#pragma once

// MOTChallenge-style detection / ground-truth / result files, bilinear patch
// extraction, and on-disk sequences (MOT text files plus a raw frame dump).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tripletrack/errors.hpp"
#include "tripletrack/patch.hpp"

namespace tripletrack {

/// One row of a MOT file. id is -1 for raw detections.
struct DetectionRecord {
    int frame = 1;
    int id = -1;
    BBox box;
    double confidence = 1.0;

    friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

/// One tracker output row: frame, track id, box.
struct TrackRecord {
    int frame = 1;
    int id = 0;
    BBox box;

    friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
    friend auto operator<=>(const TrackRecord& a, const TrackRecord& b) {
        if (auto c = a.frame <=> b.frame; c != 0) return c;
        return a.id <=> b.id;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_real(std::string_view field, std::size_t line) {
    field = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
        throw ParseError("not a number: '" + std::string(field) + "'", line);
    return v;
}

inline int parse_int(std::string_view field, std::size_t line) {
    const double v = parse_real(field, line);
    if (v != std::floor(v) || std::abs(v) > 2e9) throw ParseError("not an integer: '" + std::string(field) + "'", line);
    return static_cast<int>(v);
}

}  // namespace detail

/// Parses comma-separated rows: frame, id, left, top, width, height[, conf[, x, y, z]].
/// Blank lines are skipped; anything after the confidence is ignored.
inline std::vector<DetectionRecord> parse_mot_file(std::string_view text) {
    std::vector<DetectionRecord> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = detail::trim(line);
        if (line.empty()) continue;

        std::vector<std::string_view> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() < 6) throw ParseError("expected at least 6 fields, got " + std::to_string(fields.size()), line_no);

        DetectionRecord r;
        r.frame = detail::parse_int(fields[0], line_no);
        r.id = detail::parse_int(fields[1], line_no);
        r.box = {detail::parse_real(fields[2], line_no), detail::parse_real(fields[3], line_no),
                 detail::parse_real(fields[4], line_no), detail::parse_real(fields[5], line_no)};
        if (fields.size() > 6) r.confidence = detail::parse_real(fields[6], line_no);
        if (r.frame < 1) throw ParseError("frame index must be >= 1", line_no);
        if (!(r.box.width > 0.0) || !(r.box.height > 0.0)) throw ParseError("box width and height must be positive", line_no);
        out.push_back(r);
    }
    return out;
}

inline std::vector<TrackRecord> parse_track_file(std::string_view text) {
    std::vector<TrackRecord> out;
    for (const auto& r : parse_mot_file(text)) out.push_back({r.frame, r.id, r.box});
    return out;
}

/// "frame,id,left,top,width,height,1,-1,-1,-1" per record; reals with two decimals.
inline std::string write_tracks(const std::vector<TrackRecord>& records) {
    std::string out;
    char buf[160];
    for (const auto& r : records) {
        const int n = std::snprintf(buf, sizeof buf, "%d,%d,%.2f,%.2f,%.2f,%.2f,1,-1,-1,-1\n", r.frame, r.id, r.box.left,
                                    r.box.top, r.box.width, r.box.height);
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

/// Same layout as write_tracks but keeps the detection confidence in column 7.
inline std::string write_detections(const std::vector<DetectionRecord>& records) {
    std::string out;
    char buf[160];
    for (const auto& r : records) {
        const int n = std::snprintf(buf, sizeof buf, "%d,%d,%.2f,%.2f,%.2f,%.2f,%.4f,-1,-1,-1\n", r.frame, r.id,
                                    r.box.left, r.box.top, r.box.width, r.box.height, r.confidence);
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Images and patches

/// 8-bit frame, interleaved (y, x, c).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int h, int w, int c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::uint8_t& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::uint8_t at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Crops `box` (clipped to the frame, no padding) and resizes it to target_h x target_w
/// with corner-aligned bilinear interpolation; intensities are scaled to [0, 1].
inline Patch extract_patch(const Image& frame, const BBox& box, int target_h, int target_w, PatchSource source = {}) {
    if (target_h < 1 || target_w < 1) throw DimensionError("patch target size must be positive");
    const int x0 = std::max(0, static_cast<int>(std::floor(box.left)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.top)));
    const int x1 = std::min(frame.width, static_cast<int>(std::ceil(box.right())));
    const int y1 = std::min(frame.height, static_cast<int>(std::ceil(box.bottom())));
    if (x1 <= x0 || y1 <= y0) throw ExtractionError("box lies entirely outside the frame");
    const int cw = x1 - x0, ch = y1 - y0, C = frame.channels;

    auto sample_axis = [](int origin, int extent, int target, int j) {
        if (target == 1) return origin + (extent - 1) / 2.0;
        return origin + static_cast<double>(j) * (extent - 1) / (target - 1);
    };

    std::vector<double> px(static_cast<std::size_t>(C) * target_h * target_w);
    for (int ty = 0; ty < target_h; ++ty) {
        const double sy = sample_axis(y0, ch, target_h, ty);
        const int ya = static_cast<int>(std::floor(sy));
        const int yb = std::min(ya + 1, y1 - 1);
        const double fy = sy - ya;
        for (int tx = 0; tx < target_w; ++tx) {
            const double sx = sample_axis(x0, cw, target_w, tx);
            const int xa = static_cast<int>(std::floor(sx));
            const int xb = std::min(xa + 1, x1 - 1);
            const double fx = sx - xa;
            for (int c = 0; c < C; ++c) {
                const double top = (1.0 - fx) * frame.at(ya, xa, c) + fx * frame.at(ya, xb, c);
                const double bot = (1.0 - fx) * frame.at(yb, xa, c) + fx * frame.at(yb, xb, c);
                px[(static_cast<std::size_t>(c) * target_h + ty) * target_w + tx] = ((1.0 - fy) * top + fy * bot) / 255.0;
            }
        }
    }
    return Patch({target_h, target_w, C}, std::move(px), source, box);
}

// ---------------------------------------------------------------------------
// Sequences

/// Frames plus per-frame detections and optional ground truth. Frame indices are 1-based.
struct SequenceSource {
    std::vector<Image> frames;
    std::vector<DetectionRecord> detections;
    std::vector<DetectionRecord> ground_truth;

    int num_frames() const noexcept { return static_cast<int>(frames.size()); }
    const Image& frame(int t) const { return frames.at(static_cast<std::size_t>(t - 1)); }
    bool has_ground_truth() const noexcept { return !ground_truth.empty(); }

    void validate() const {
        for (const auto& d : detections)
            if (d.frame < 1 || d.frame > num_frames())
                throw InputError("detection at frame " + std::to_string(d.frame) + " outside sequence of " +
                                 std::to_string(num_frames()) + " frames");
    }
};

/// Groups records by frame index (1-based). Result has num_frames + 1 entries; slot 0 is unused.
inline std::vector<std::vector<DetectionRecord>> group_by_frame(const std::vector<DetectionRecord>& records,
                                                                int num_frames) {
    std::vector<std::vector<DetectionRecord>> out(static_cast<std::size_t>(num_frames) + 1);
    for (const auto& r : records)
        if (r.frame >= 1 && r.frame <= num_frames) out[static_cast<std::size_t>(r.frame)].push_back(r);
    return out;
}

/// Extracts the detection patches of frame t. Boxes entirely outside the frame are skipped.
inline FrameDetections make_frame_detections(const Image& image, int t, const std::vector<DetectionRecord>& dets,
                                             const Shape3& patch_shape) {
    if (image.channels != patch_shape.channels)
        throw DimensionError("frame has " + std::to_string(image.channels) + " channels, model expects " +
                             std::to_string(patch_shape.channels));
    FrameDetections fd;
    fd.frame = t;
    for (const auto& d : dets) {
        try {
            auto patch = std::make_shared<const Patch>(extract_patch(
                image, d.box, patch_shape.height, patch_shape.width, {t, static_cast<int>(fd.detections.size())}));
            fd.detections.push_back({std::move(patch), d.confidence});
        } catch (const ExtractionError&) {
        }
    }
    return fd;
}

namespace detail {
inline constexpr char kFramesMagic[8] = {'T', 'T', 'F', 'R', 'A', 'M', 'E', 'S'};
}

/// Raw frame dump: 8-byte magic "TTFRAMES", then five little-endian u32
/// (format version = 1, frame count, height, width, channels), then every frame's
/// bytes in (y, x, c) order, frames back to back.
inline void write_frames(const std::vector<Image>& frames, std::ostream& os) {
    const std::uint32_t h = frames.empty() ? 0u : static_cast<std::uint32_t>(frames[0].height);
    const std::uint32_t w = frames.empty() ? 0u : static_cast<std::uint32_t>(frames[0].width);
    const std::uint32_t c = frames.empty() ? 0u : static_cast<std::uint32_t>(frames[0].channels);
    const std::uint32_t header[5] = {1u, static_cast<std::uint32_t>(frames.size()), h, w, c};
    os.write(detail::kFramesMagic, 8);
    for (std::uint32_t v : header) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    for (const auto& f : frames) {
        if (static_cast<std::uint32_t>(f.height) != h || static_cast<std::uint32_t>(f.width) != w ||
            static_cast<std::uint32_t>(f.channels) != c)
            throw DimensionError("all frames of a dump must share one shape");
        os.write(reinterpret_cast<const char*>(f.data.data()), static_cast<std::streamsize>(f.data.size()));
    }
    if (!os) throw InputError("failed to write frame dump");
}

inline std::vector<Image> read_frames(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kFramesMagic, 8) != 0) throw ParseError("not a frame dump", 0);
    std::uint32_t header[5];
    for (auto& v : header) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
            static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    }
    if (!is) throw ParseError("truncated frame dump header", 0);
    if (header[0] != 1u) throw ParseError("unsupported frame dump version " + std::to_string(header[0]), 0);
    std::vector<Image> frames;
    frames.reserve(header[1]);
    for (std::uint32_t i = 0; i < header[1]; ++i) {
        Image img(static_cast<int>(header[2]), static_cast<int>(header[3]), static_cast<int>(header[4]));
        is.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
        if (!is) throw ParseError("truncated frame dump at frame " + std::to_string(i + 1), 0);
        frames.push_back(std::move(img));
    }
    return frames;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open " + path.string() + " for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw InputError("failed to write " + path.string());
}

/// Sequence directory layout: det/det.txt, gt/gt.txt (optional), frames.bin.
struct SequencePaths {
    std::filesystem::path detections, ground_truth, frames;

    explicit SequencePaths(const std::filesystem::path& dir)
        : detections(dir / "det" / "det.txt"), ground_truth(dir / "gt" / "gt.txt"), frames(dir / "frames.bin") {}
};

inline void save_sequence(const SequenceSource& seq, const std::filesystem::path& dir) {
    const SequencePaths p(dir);
    write_text_file(p.detections, write_detections(seq.detections));
    if (seq.has_ground_truth()) write_text_file(p.ground_truth, write_detections(seq.ground_truth));
    std::ofstream os(p.frames, std::ios::binary);
    if (!os) throw InputError("cannot open " + p.frames.string() + " for writing");
    write_frames(seq.frames, os);
}

inline SequenceSource load_sequence(const std::filesystem::path& dir) {
    const SequencePaths p(dir);
    if (!std::filesystem::exists(p.detections)) throw InputError("missing detection file " + p.detections.string());
    if (!std::filesystem::exists(p.frames)) throw InputError("missing frame dump " + p.frames.string());
    SequenceSource seq;
    seq.detections = parse_mot_file(read_text_file(p.detections));
    if (std::filesystem::exists(p.ground_truth)) seq.ground_truth = parse_mot_file(read_text_file(p.ground_truth));
    std::ifstream is(p.frames, std::ios::binary);
    seq.frames = read_frames(is);
    seq.validate();
    return seq;
}

}  // namespace tripletrack
