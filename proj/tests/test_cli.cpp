// Runs the installed command-line binary end to end.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("tripletrack_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Outcome invoke(const std::string& args) const {
        const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd =
            std::string(TRIPLETRACK_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        fs::remove(out);
        fs::remove(err);
        return r;
    }

    bool empty_dir(const fs::path& p) const { return !fs::exists(p) || fs::is_empty(p); }

    fs::path dir_;
};

// Small, fast settings shared by the end-to-end runs.
const std::string kSmall =
    " -s synth.num_frames=30 -s synth.num_objects=3 -s synth.frame_height=96 -s synth.frame_width=128"
    " -s miner.buffer_length=5 -s trainer.batch_size=4";

}  // namespace

TEST_F(Cli, MissingSubcommandIsAUsageError) { EXPECT_EQ(invoke("").code, 2); }

TEST_F(Cli, HelpSucceeds) {
    const Outcome r = invoke("--help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("track"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyWritesNothing) {
    const fs::path out = dir_ / "o";
    const Outcome r = invoke("track --synthetic -s tracker.bogus=1 -o " + out.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("tracker.bogus"), std::string::npos);
    EXPECT_TRUE(empty_dir(out));
}

TEST_F(Cli, MissingSequenceNamesThePathAndWritesNothing) {
    const fs::path out = dir_ / "o", missing = dir_ / "no_such_sequence";
    const Outcome r = invoke("track " + missing.string() + " -o " + out.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing.string()), std::string::npos);
    EXPECT_TRUE(empty_dir(out));
}

TEST_F(Cli, SynthTrackEvaluate) {
    const fs::path seq = dir_ / "seq", out = dir_ / "run";
    ASSERT_EQ(invoke("synth" + kSmall + " -o " + seq.string()).code, 0);
    EXPECT_TRUE(fs::exists(seq / "det" / "det.txt"));
    EXPECT_TRUE(fs::exists(seq / "gt" / "gt.txt"));
    EXPECT_TRUE(fs::exists(seq / "frames.bin"));

    const Outcome t = invoke("track " + seq.string() + kSmall + " -o " + out.string() + " --checkpoint " +
                      (out / "model.ckpt").string() + " --dump-triplets " + (out / "triplets.jsonl").string());
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(fs::exists(out / "tracks.txt"));
    EXPECT_NE(slurp(out / "stats.json").find("batches_trained"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "model.ckpt"));
    EXPECT_FALSE(slurp(out / "triplets.jsonl").empty());

    const Outcome e = invoke("evaluate " + (seq / "gt" / "gt.txt").string() + " " + (out / "tracks.txt").string() + " -o " +
                      out.string());
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("MOTA,MOTP,IDs,FP,FN"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "eval.json"));
    EXPECT_TRUE(fs::exists(out / "summary.csv"));
}

TEST_F(Cli, TrackingTwiceIsByteIdentical) {
    const fs::path a = dir_ / "a", b = dir_ / "b";
    ASSERT_EQ(invoke("track --synthetic --seed 5" + kSmall + " -o " + a.string()).code, 0);
    ASSERT_EQ(invoke("track --synthetic --seed 5" + kSmall + " -o " + b.string()).code, 0);
    EXPECT_EQ(slurp(a / "tracks.txt"), slurp(b / "tracks.txt"));
}

TEST_F(Cli, MalformedGroundTruthIsAParseFailure) {
    const fs::path gt = dir_ / "gt.txt", hyp = dir_ / "hyp.txt";
    std::ofstream(gt) << "1,1,0,0,0,5\n";
    std::ofstream(hyp) << "1,1,0,0,5,5\n";
    const Outcome r = invoke("evaluate " + gt.string() + " " + hyp.string() + " -o " + (dir_ / "o").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 1"), std::string::npos);
}

TEST_F(Cli, AblateWithoutSequencesIsAUsageError) { EXPECT_EQ(invoke("ablate -o " + dir_.string()).code, 2); }

TEST_F(Cli, AblateWritesTheTable) {
    const Outcome r = invoke("ablate --synth-seeds 1" + kSmall + " -o " + dir_.string());
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(dir_ / "ablation.csv");
    EXPECT_EQ(csv.rfind("mode,MOTA,MOTP,IDs,FP,FN,wall_time_sec\n", 0), 0u);
    for (const char* m : {"delta", "frozen", "easy_positives", "random_negatives"})
        EXPECT_NE(csv.find(std::string("\n") + m + ","), std::string::npos) << m;
}

TEST_F(Cli, GradcheckPassesAndDetectsCorruption) {
    const std::string small = " -s gradcheck.model.output_dim=8";
    EXPECT_EQ(invoke("gradcheck" + small).code, 0);
    const Outcome bad = invoke("gradcheck" + small + " --corrupt-gradient 0.01");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}
