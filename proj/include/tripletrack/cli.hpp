#pragma once

// Command implementations behind the tripletrack executable. Each returns the
// process exit code: 0 success, 1 runtime failure, 2 usage or configuration error.
// Output files are announced on `out` as "wrote <path>"; diagnostics go to `err`.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tripletrack/ablation.hpp"
#include "tripletrack/config.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/evaluation.hpp"
#include "tripletrack/gradcheck.hpp"
#include "tripletrack/mot_io.hpp"
#include "tripletrack/pipeline.hpp"
#include "tripletrack/synthetic.hpp"

namespace tripletrack::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
};

struct TrackOptions {
    CommonOptions common;
    std::filesystem::path sequence;  // sequence directory; empty with `synthetic`
    bool synthetic = false;          // generate the sequence from synth.* instead
    std::string initial_checkpoint;
    std::string checkpoint_out;
    std::string dump_triplets;
    bool with_timing = true;  // wall time makes stats.json differ between identical runs
};

struct EvaluateOptions {
    CommonOptions common;
    std::filesystem::path ground_truth;
    std::filesystem::path hypothesis;
};

struct AblateOptions {
    CommonOptions common;
    std::vector<std::filesystem::path> sequences;
    std::vector<std::uint64_t> synth_seeds;  // each adds one generated sequence
    bool with_timing = true;
};

struct GradcheckOptions {
    CommonOptions common;
    double corrupt_gradient = 0.0;  // test hook: offsets every analytic gradient entry
    double tolerance = 1e-4;
};

namespace detail {

class Outputs {
public:
    Outputs(std::filesystem::path dir, std::ostream& out) : dir_(std::move(dir)), out_(out) {}

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    void write(const std::filesystem::path& p, std::string_view text) {
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        write_text_file(p, text);
        announce(p);
    }
    void announce(const std::filesystem::path& p) { out_ << "wrote " << p.string() << "\n"; }

private:
    std::filesystem::path dir_;
    std::ostream& out_;
};

inline AppConfig resolve(const CommonOptions& o) { return load_config(o.config_path, o.overrides); }

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// Runs `body`, mapping library errors onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kRuntimeFailure;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
}

}  // namespace detail

inline int cmd_track(const TrackOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        AppConfig cfg = detail::resolve(opt.common);
        if (opt.common.seed) {
            cfg.pipeline.model.seed = *opt.common.seed;
            cfg.pipeline.miner.seed = *opt.common.seed;
        }
        if (opt.synthetic == !opt.sequence.empty())
            throw ConfigError("track needs exactly one of a sequence directory or --synthetic");
        const SequenceSource seq = opt.synthetic ? generate(cfg.synth).source : load_sequence(opt.sequence);

        std::shared_ptr<const ModelParameters> initial;
        if (!opt.initial_checkpoint.empty()) {
            initial = std::make_shared<const ModelParameters>(load_checkpoint(opt.initial_checkpoint));
            cfg.pipeline.reset_model_per_sequence = false;
        }

        std::ostringstream triplet_log;
        PipelineHooks hooks;
        if (!opt.dump_triplets.empty()) hooks.triplet_log = &triplet_log;
        const RunResult r = run_sequence(seq, cfg.pipeline, initial, hooks);

        detail::Outputs files(opt.common.out_dir, out);
        files.write(files.path("tracks.txt"), write_tracks(r.tracks));
        files.write(files.path("stats.json"), detail::dump(to_json(r.stats, opt.with_timing)));
        if (!opt.checkpoint_out.empty()) {
            save_checkpoint(*r.final_model, opt.checkpoint_out);
            files.announce(opt.checkpoint_out);
        }
        if (!opt.dump_triplets.empty()) files.write(opt.dump_triplets, triplet_log.str());
        if (r.stats.diverged) {
            err << "training diverged: " << r.stats.error << "\n";
            return static_cast<int>(kRuntimeFailure);
        }
        return static_cast<int>(kOk);
    });
}

inline int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const AppConfig cfg = detail::resolve(opt.common);
        for (const auto& p : {opt.ground_truth, opt.hypothesis})
            if (!std::filesystem::exists(p)) throw InputError("missing file " + p.string());
        const auto gt = parse_mot_file(read_text_file(opt.ground_truth));
        const auto hyp = parse_track_file(read_text_file(opt.hypothesis));
        const EvalReport rep = evaluate(gt, hyp, cfg.eval);

        detail::Outputs files(opt.common.out_dir, out);
        files.write(files.path("eval.json"), detail::dump(to_json(rep)));
        files.write(files.path("summary.csv"), summary_csv(rep));
        out << summary_csv(rep);
        if (!rep.mota) {
            err << rep.error << "\n";
            return static_cast<int>(kRuntimeFailure);
        }
        return static_cast<int>(kOk);
    });
}

inline int cmd_synth(const CommonOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        AppConfig cfg = detail::resolve(opt);
        if (opt.seed) cfg.synth.seed = *opt.seed;
        const SyntheticSequence s = generate(cfg.synth);
        save_sequence(s.source, opt.out_dir);
        const SequencePaths p(opt.out_dir);
        detail::Outputs files(opt.out_dir, out);
        files.announce(p.detections);
        files.announce(p.ground_truth);
        files.announce(p.frames);
        return static_cast<int>(kOk);
    });
}

inline int cmd_ablate(const AblateOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        AppConfig cfg = detail::resolve(opt.common);
        if (opt.common.seed) {
            cfg.pipeline.model.seed = *opt.common.seed;
            cfg.pipeline.miner.seed = *opt.common.seed;
        }
        if (opt.sequences.empty() && opt.synth_seeds.empty())
            throw ConfigError("ablate needs at least one sequence directory or --synth-seeds");

        std::vector<NamedSequence> seqs;
        for (const auto& dir : opt.sequences) seqs.push_back({dir.string(), load_sequence(dir)});
        for (std::uint64_t s : opt.synth_seeds) {
            SynthConfig sc = cfg.synth;
            sc.seed = s;
            seqs.push_back({"synth:" + std::to_string(s), generate(sc).source});
        }
        for (const auto& s : seqs)
            if (s.source.ground_truth.empty()) throw InputError("sequence " + s.name + " has no ground truth");

        const AblationResult a = run_ablation(seqs, cfg.pipeline, cfg.eval);
        detail::Outputs files(opt.common.out_dir, out);
        files.write(files.path("ablation.csv"), ablation_csv(a, opt.with_timing));
        files.write(files.path("ablation_sequences.csv"), ablation_sequences_csv(a));
        out << ablation_csv(a, opt.with_timing);
        return static_cast<int>(kOk);
    });
}

inline int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        AppConfig cfg = detail::resolve(opt.common);
        if (opt.common.seed) cfg.gradcheck.seed = *opt.common.seed;
        cfg.gradcheck.corrupt_gradient = opt.corrupt_gradient;
        const GradcheckReport rep = run_gradcheck(cfg.gradcheck);
        for (const auto& t : rep.tensors)
            out << std::left << std::setw(16) << t.name << " max relative error " << std::scientific
                << std::setprecision(3) << t.max_relative_error << "\n";
        out << "max relative error " << std::scientific << std::setprecision(3) << rep.max_relative_error
            << (rep.passed(opt.tolerance) ? " PASS" : " FAIL") << " (tolerance " << opt.tolerance << ")\n"
            << std::defaultfloat;
        return static_cast<int>(rep.passed(opt.tolerance) ? kOk : kRuntimeFailure);
    });
}

}  // namespace tripletrack::cli
