// tripletrack: online appearance-only multi-object tracking with self-supervised
// descriptor refinement.
//
//   tripletrack synth     --out seq1 --seed 3
//   tripletrack track     seq1 --out run1 --set pipeline.mode=delta
//   tripletrack evaluate  seq1/gt/gt.txt run1/tracks.txt --out run1
//   tripletrack ablate    --synth-seeds 1 2 3 --out ablation
//   tripletrack gradcheck

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tripletrack/cli.hpp"

namespace cli = tripletrack::cli;

namespace {

void add_common(CLI::App* cmd, cli::CommonOptions& o, bool with_out = true) {
    cmd->add_option("-c,--config", o.config_path, "key = value configuration file");
    cmd->add_option("-s,--set", o.overrides, "override a configuration key (key=value), repeatable");
    if (with_out) cmd->add_option("-o,--out", o.out_dir, "output directory")->capture_default_str();
    cmd->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t v) { o.seed = v; }, "seed override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online multi-object tracking with self-supervised appearance descriptors"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tripletrack 1.0.0");

    cli::TrackOptions track;
    auto* c_track = app.add_subcommand("track", "track one sequence and write tracks.txt and stats.json");
    add_common(c_track, track.common);
    c_track->add_option("sequence", track.sequence, "sequence directory (det/det.txt, frames.bin)");
    c_track->add_flag("--synthetic", track.synthetic, "generate the sequence from the synth.* settings");
    c_track->add_option("--init-checkpoint", track.initial_checkpoint, "start from this model checkpoint");
    c_track->add_option("--checkpoint", track.checkpoint_out, "write the final model here");
    c_track->add_option("--dump-triplets", track.dump_triplets, "write emitted triplets as JSON lines");
    c_track->add_flag("!--no-timing", track.with_timing, "leave wall_time_sec out of stats.json");

    cli::EvaluateOptions ev;
    auto* c_eval = app.add_subcommand("evaluate", "score a track file against ground truth");
    add_common(c_eval, ev.common);
    c_eval->add_option("ground_truth", ev.ground_truth, "ground-truth file")->required();
    c_eval->add_option("hypothesis", ev.hypothesis, "track file")->required();

    cli::CommonOptions synth;
    auto* c_synth = app.add_subcommand("synth", "generate a synthetic sequence directory");
    add_common(c_synth, synth);

    cli::AblateOptions ab;
    auto* c_ablate = app.add_subcommand("ablate", "compare delta, frozen, easy_positives and random_negatives");
    add_common(c_ablate, ab.common);
    c_ablate->add_option("sequences", ab.sequences, "sequence directories");
    c_ablate->add_option("--synth-seeds", ab.synth_seeds, "also run generated sequences with these seeds");
    c_ablate->add_flag("!--no-timing", ab.with_timing, "leave the wall time column empty");

    cli::GradcheckOptions gc;
    auto* c_grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    add_common(c_grad, gc.common, false);
    c_grad->add_option("--tolerance", gc.tolerance, "maximum accepted relative error")->capture_default_str();
    c_grad->add_option("--corrupt-gradient", gc.corrupt_gradient, "test hook: bias added to the analytic gradient");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kUsageError;
    }

    if (c_track->parsed()) return cli::cmd_track(track, std::cout, std::cerr);
    if (c_eval->parsed()) return cli::cmd_evaluate(ev, std::cout, std::cerr);
    if (c_synth->parsed()) return cli::cmd_synth(synth, std::cout, std::cerr);
    if (c_ablate->parsed()) return cli::cmd_ablate(ab, std::cout, std::cerr);
    if (c_grad->parsed()) return cli::cmd_gradcheck(gc, std::cout, std::cerr);
    return cli::kUsageError;
}
