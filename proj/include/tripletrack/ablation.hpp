#pragma once

// Runs every pipeline mode over a set of sequences with shared seeds and scores
// each run against ground truth.

#include <cstdio>
#include <string>
#include <vector>

#include "tripletrack/errors.hpp"
#include "tripletrack/evaluation.hpp"
#include "tripletrack/mot_io.hpp"
#include "tripletrack/pipeline.hpp"

namespace tripletrack {

struct NamedSequence {
    std::string name;
    SequenceSource source;
};

struct AblationRun {
    std::string sequence;
    Mode mode = Mode::delta;
    EvalReport report;
    RunStats stats;
};

/// Counts pooled over sequences: MOTA from summed errors, MOTP weighted by matches.
struct AblationRow {
    Mode mode = Mode::delta;
    long fp = 0, fn = 0, ids = 0, gt_total = 0, matches = 0;
    double iou_sum = 0.0;
    double wall_time_sec = 0.0;

    double mota() const { return gt_total ? 1.0 - static_cast<double>(fp + fn + ids) / static_cast<double>(gt_total) : 0.0; }
    double motp() const { return matches ? iou_sum / static_cast<double>(matches) : 0.0; }
};

struct AblationResult {
    std::vector<AblationRun> runs;  // sequence-major, modes in all_modes() order
    std::vector<AblationRow> rows;  // one per mode

    const AblationRun& run(const std::string& sequence, Mode m) const {
        for (const auto& r : runs)
            if (r.sequence == sequence && r.mode == m) return r;
        throw InputError("no run for " + sequence + "/" + to_string(m));
    }
};

inline AblationResult run_ablation(const std::vector<NamedSequence>& sequences, const PipelineConfig& base,
                                   const EvalConfig& eval_cfg = {}, const std::vector<Mode>& modes = all_modes()) {
    if (sequences.empty()) throw ConfigError("ablation needs at least one sequence");
    AblationResult out;
    for (Mode m : modes) out.rows.push_back({m});
    for (const auto& seq : sequences) {
        for (std::size_t k = 0; k < modes.size(); ++k) {
            PipelineConfig cfg = base;
            cfg.mode = modes[k];
            RunResult r = run_sequence(seq.source, cfg);
            EvalReport rep = evaluate(seq.source.ground_truth, r.tracks, eval_cfg);
            auto& row = out.rows[k];
            row.fp += rep.fp;
            row.fn += rep.fn;
            row.ids += rep.ids;
            row.gt_total += rep.gt_total;
            row.matches += rep.matches;
            row.iou_sum += rep.motp * static_cast<double>(rep.matches);
            row.wall_time_sec += r.stats.wall_time_sec;
            out.runs.push_back({seq.name, modes[k], std::move(rep), std::move(r.stats)});
        }
    }
    return out;
}

inline const char* kAblationHeader = "mode,MOTA,MOTP,IDs,FP,FN,wall_time_sec";

/// One row per mode. Wall time is the only column that varies between identical runs.
inline std::string ablation_csv(const AblationResult& a, bool with_timing = true) {
    std::string s = std::string(kAblationHeader) + "\n";
    char buf[200];
    for (const auto& r : a.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%ld,%ld,%ld,", to_string(r.mode).c_str(), r.mota(), r.motp(), r.ids,
                      r.fp, r.fn);
        s += buf;
        if (with_timing) {
            std::snprintf(buf, sizeof buf, "%.3f", r.wall_time_sec);
            s += buf;
        }
        s += "\n";
    }
    return s;
}

inline std::string ablation_sequences_csv(const AblationResult& a) {
    std::string s = "sequence,mode," + std::string(kSummaryHeader) + ",triplets,batches\n";
    for (const auto& r : a.runs)
        s += r.sequence + "," + to_string(r.mode) + "," + summary_row(r.report) + "," +
             std::to_string(r.stats.triplets_emitted) + "," + std::to_string(r.stats.batches_trained) + "\n";
    return s;
}

}  // namespace tripletrack
