#pragma once

// CLEAR-MOT scoring (MOTA, MOTP, FP, FN, identity switches) with IoU matching.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tripletrack/assignment.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/mot_io.hpp"

namespace tripletrack {

struct EvalConfig {
    double iou_threshold = 0.5;

    void validate() const {
        if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must lie in (0, 1]");
    }
};

inline double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.left, b.left);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

struct FrameEval {
    int frame = 0;
    int gt = 0;
    int matches = 0;
    int fp = 0;
    int fn = 0;
    int ids = 0;
};

struct EvalReport {
    EvalConfig config;
    std::optional<double> mota;  // empty when there is no ground truth
    double motp = 0.0;           // mean IoU of matches; 0 when nothing matched
    long fp = 0;
    long fn = 0;
    long ids = 0;
    long gt_total = 0;
    long matches = 0;
    std::vector<FrameEval> per_frame;
    std::string error;
};

/// Frame-by-frame CLEAR-MOT: correspondences from the previous frame are kept while
/// their IoU stays above threshold, the rest is matched by maximum total IoU, and a
/// GT object whose matched hypothesis id differs from its last one counts an ID switch.
inline EvalReport evaluate(const std::vector<DetectionRecord>& gt, const std::vector<TrackRecord>& hyp,
                           const EvalConfig& cfg = {}) {
    cfg.validate();
    std::map<int, std::vector<const DetectionRecord*>> gt_by_frame;
    std::map<int, std::vector<const TrackRecord*>> hyp_by_frame;
    std::set<int> frames;
    for (const auto& g : gt) {
        gt_by_frame[g.frame].push_back(&g);
        frames.insert(g.frame);
    }
    for (const auto& h : hyp) {
        hyp_by_frame[h.frame].push_back(&h);
        frames.insert(h.frame);
    }

    EvalReport rep;
    rep.config = cfg;
    std::map<int, int> previous;  // gt id -> hyp id matched in the previous frame
    std::map<int, int> last_seen;  // gt id -> hyp id of its latest match, ever
    double iou_sum = 0.0;

    for (int t : frames) {
        static const std::vector<const DetectionRecord*> no_gt;
        static const std::vector<const TrackRecord*> no_hyp;
        const auto& G = gt_by_frame.count(t) ? gt_by_frame[t] : no_gt;
        const auto& H = hyp_by_frame.count(t) ? hyp_by_frame[t] : no_hyp;
        FrameEval fe{t, static_cast<int>(G.size())};

        std::vector<int> gt_match(G.size(), -1);
        std::vector<char> hyp_used(H.size(), 0);
        std::vector<double> match_iou(G.size(), 0.0);

        // 1. keep still-valid correspondences
        for (std::size_t g = 0; g < G.size(); ++g) {
            auto it = previous.find(G[g]->id);
            if (it == previous.end()) continue;
            for (std::size_t h = 0; h < H.size(); ++h) {
                if (hyp_used[h] || H[h]->id != it->second) continue;
                const double v = iou(G[g]->box, H[h]->box);
                if (v >= cfg.iou_threshold) {
                    gt_match[g] = static_cast<int>(h);
                    hyp_used[h] = 1;
                    match_iou[g] = v;
                }
                break;
            }
        }

        // 2. maximum-IoU assignment over the rest
        std::vector<std::size_t> gi, hi;
        for (std::size_t g = 0; g < G.size(); ++g)
            if (gt_match[g] < 0) gi.push_back(g);
        for (std::size_t h = 0; h < H.size(); ++h)
            if (!hyp_used[h]) hi.push_back(h);
        if (!gi.empty() && !hi.empty()) {
            CostMatrix costs(gi.size(), hi.size());
            for (std::size_t r = 0; r < gi.size(); ++r) {
                for (std::size_t c = 0; c < hi.size(); ++c) {
                    const double v = iou(G[gi[r]]->box, H[hi[c]]->box);
                    costs(r, c) = v >= cfg.iou_threshold ? 1.0 - v : CostMatrix::forbidden;
                }
            }
            for (auto [r, c] : solve(costs).pairs) {
                const std::size_t g = gi[r], h = hi[c];
                gt_match[g] = static_cast<int>(h);
                hyp_used[h] = 1;
                match_iou[g] = 1.0 - costs(r, c);
            }
        }

        // 3. identity switches, bookkeeping
        std::map<int, int> current;
        for (std::size_t g = 0; g < G.size(); ++g) {
            if (gt_match[g] < 0) {
                ++fe.fn;
                continue;
            }
            const int gid = G[g]->id, hid = H[static_cast<std::size_t>(gt_match[g])]->id;
            auto seen = last_seen.find(gid);
            if (seen != last_seen.end() && seen->second != hid) ++fe.ids;
            last_seen[gid] = hid;
            current[gid] = hid;
            ++fe.matches;
            iou_sum += match_iou[g];
        }
        for (std::size_t h = 0; h < H.size(); ++h)
            if (!hyp_used[h]) ++fe.fp;
        previous = std::move(current);

        rep.fp += fe.fp;
        rep.fn += fe.fn;
        rep.ids += fe.ids;
        rep.gt_total += fe.gt;
        rep.matches += fe.matches;
        rep.per_frame.push_back(fe);
    }

    rep.motp = rep.matches ? iou_sum / static_cast<double>(rep.matches) : 0.0;
    if (rep.gt_total > 0)
        rep.mota = 1.0 - static_cast<double>(rep.fp + rep.fn + rep.ids) / static_cast<double>(rep.gt_total);
    else
        rep.error = "no ground-truth objects: MOTA is undefined";
    return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["config"] = {{"iou_threshold", r.config.iou_threshold}};
    j["mota"] = r.mota ? nlohmann::json(*r.mota) : nlohmann::json(nullptr);
    j["motp"] = r.motp;
    j["ids"] = r.ids;
    j["fp"] = r.fp;
    j["fn"] = r.fn;
    j["gt_total"] = r.gt_total;
    j["matches"] = r.matches;
    j["error"] = r.error.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.error);
    auto& pf = j["per_frame"] = nlohmann::json::array();
    for (const auto& f : r.per_frame)
        pf.push_back({{"frame", f.frame}, {"gt", f.gt}, {"matches", f.matches}, {"fp", f.fp}, {"fn", f.fn}, {"ids", f.ids}});
    return j;
}

inline const char* kSummaryHeader = "MOTA,MOTP,IDs,FP,FN";

/// "MOTA,MOTP,IDs,FP,FN" values for one report (MOTA empty when undefined).
inline std::string summary_row(const EvalReport& r) {
    char buf[160];
    if (r.mota)
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%ld,%ld,%ld", *r.mota, r.motp, r.ids, r.fp, r.fn);
    else
        std::snprintf(buf, sizeof buf, ",%.6f,%ld,%ld,%ld", r.motp, r.ids, r.fp, r.fn);
    return buf;
}

inline std::string summary_csv(const EvalReport& r) {
    return std::string(kSummaryHeader) + "\n" + summary_row(r) + "\n";
}

}  // namespace tripletrack
