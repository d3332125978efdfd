#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "arr/error.hpp"
#include "arr/experiment.hpp"

using namespace arr;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
dataset = synthetic
synthetic.classes = 6
synthetic.samples_per_class = 40
synthetic.input_dim = 6
synthetic.noise_std = 0.6
stream.classes_per_experience = 2
net.hidden = 10
strategy = naive, arr
rm_size = 20
seed = 1, 2
epochs = 2
learning_rate = 0.1
mb_size = 16
)";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("arr_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool has_error(const ValidationResult& r, const std::string& needle) {
    for (const auto& e : r.errors) {
        if (e.find(needle) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TEST(ValidateConfig, OmittedInputsDefaultToZero) {
    const auto r = validate_config("strategy = arr\n");
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.config->rm_sizes, std::vector<std::size_t>{0});
    EXPECT_EQ(r.config->alphas, std::vector<std::size_t>{0});
    EXPECT_EQ(r.config->train.lambda, 0.0);
}

TEST(ValidateConfig, ZeroMinibatchIsRangeError) {
    const auto r = validate_config("mb_size = 0\n");
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(has_error(r, "mb_size"));
    EXPECT_TRUE(has_error(r, "range error"));
}

TEST(ValidateConfig, AlphaBeyondLastLayerIsIndexError) {
    const auto r = validate_config("net.hidden = 8, 8\nalpha = 0, 3\n");
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(has_error(r, "alpha"));
    EXPECT_TRUE(has_error(r, "index error"));
    EXPECT_TRUE(validate_config("net.hidden = 8, 8\nalpha = 2\n").ok());
}

TEST(ValidateConfig, ReportsEveryViolation) {
    const auto r = validate_config(
        "strategy = arr, bogus\nmb_size = 0\nlearning_rate = fast\ncolour = blue\nepochs = 2\nepochs = 3\n"
        "garbage line\nbelow_alpha_rate = 2\n");
    EXPECT_FALSE(r.ok());
    EXPECT_FALSE(r.config.has_value());
    EXPECT_TRUE(has_error(r, "bogus"));
    EXPECT_TRUE(has_error(r, "mb_size"));
    EXPECT_TRUE(has_error(r, "learning_rate"));
    EXPECT_TRUE(has_error(r, "colour"));
    EXPECT_TRUE(has_error(r, "duplicate"));
    EXPECT_TRUE(has_error(r, "line 7"));
    EXPECT_TRUE(has_error(r, "below_alpha_rate"));
    EXPECT_GE(r.errors.size(), 7u);
}

TEST(ValidateConfig, CommentsListsAndOverrides) {
    const auto r = validate_config(
        "# header\nstrategy = ewc, arr  # trailing\nseed = 3, 4, 5\nrm_size = 10, 20\newc.lambda = 50\n"
        "arr.max_f = 0.01\n");
    ASSERT_TRUE(r.ok()) << r.errors.front();
    EXPECT_EQ(r.config->cell_count(), 2u * 3 * 2);
    const auto cells = enumerate_cells(*r.config);
    ASSERT_EQ(cells.size(), 12u);
    EXPECT_EQ(cells.front().train.lambda, 50.0);
    EXPECT_EQ(cells.back().train.max_f, 0.01);
    EXPECT_EQ(cells.back().train.lambda, 0.0);
    EXPECT_EQ(cells.front().name(), "ewc_a0_rm10_s3");
}

TEST(ValidateConfig, EchoRoundTrips) {
    const auto r = validate_config(kSmall);
    ASSERT_TRUE(r.ok());
    const auto again = validate_config(r.config->echo());
    ASSERT_TRUE(again.ok()) << again.errors.front();
    EXPECT_EQ(again.config->echo(), r.config->echo());
    EXPECT_EQ(again.config->stream_signature(), r.config->stream_signature());
}

TEST(ValidateConfig, CsvNeedsPath) {
    EXPECT_TRUE(has_error(validate_config("dataset = csv\n"), "dataset.path"));
}

TEST(RunExperiment, CellsOnDiskAndDeterministic) {
    auto cfg = *validate_config(kSmall).config;
    const auto a = scratch("run_a");
    const auto b = scratch("run_b");
    RunOptions opts;
    opts.jobs = 3;
    opts.output_dir = a.string();
    const auto report = run_experiment(cfg, opts);
    EXPECT_EQ(report.cells, 4u);
    EXPECT_EQ(report.failed, 0u);
    opts.jobs = 1;
    opts.output_dir = b.string();
    run_experiment(cfg, opts);
    for (const auto* cell : {"naive_a0_rm20_s1", "naive_a0_rm20_s2", "arr_a0_rm20_s1", "arr_a0_rm20_s2"}) {
        ASSERT_TRUE(fs::exists(a / cell / "metrics.csv")) << cell;
        ASSERT_TRUE(fs::exists(a / cell / "summary.json")) << cell;
        EXPECT_FALSE(fs::exists(a / cell / "FAILED"));
        EXPECT_EQ(slurp(a / cell / "metrics.csv"), slurp(b / cell / "metrics.csv")) << cell;
        EXPECT_EQ(slurp(a / cell / "model.ckpt"), slurp(b / cell / "model.ckpt")) << cell;
    }
    EXPECT_TRUE(fs::exists(a / "comparison.csv"));
    EXPECT_TRUE(fs::exists(a / "comparison.txt"));
    EXPECT_EQ(slurp(a / "comparison.csv"), slurp(b / "comparison.csv"));
    cfg.output_dir = a.string();
    EXPECT_EQ(slurp(a / "config.txt"), cfg.echo());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(RunExperiment, SeedOverrideRunsOneSeed) {
    auto cfg = *validate_config(kSmall).config;
    const auto dir = scratch("seed_override");
    RunOptions opts;
    opts.seed_override = 42;
    opts.output_dir = dir.string();
    const auto report = run_experiment(cfg, opts);
    EXPECT_EQ(report.cells, 2u);
    EXPECT_TRUE(fs::exists(dir / "arr_a0_rm20_s42" / "summary.json"));
    fs::remove_all(dir);
}

TEST(RunCell, FailureLeavesMarkerAndSparesOthers) {
    auto cfg = *validate_config(kSmall).config;
    const auto dir = scratch("failure");
    const auto ds = build_dataset(cfg);
    auto stream = build_stream(cfg, ds);
    const auto cells = enumerate_cells(cfg);
    EXPECT_TRUE(run_cell(cfg, cells[0], stream, dir / cells[0].name()).empty());
    const auto good = slurp(dir / cells[0].name() / "metrics.csv");
    // corrupt the third experience so the second cell dies mid-stream
    stream.experiences[2].train.x = Tensor::matrix(stream.experiences[2].train.size(), 3);
    const auto msg = run_cell(cfg, cells[1], stream, dir / cells[1].name());
    EXPECT_FALSE(msg.empty());
    EXPECT_TRUE(fs::exists(dir / cells[1].name() / "FAILED"));
    EXPECT_FALSE(fs::exists(dir / cells[1].name() / "summary.json"));
    const auto partial = slurp(dir / cells[1].name() / "metrics.csv");
    EXPECT_NE(partial.find("\n2,stream_loss"), std::string::npos);
    EXPECT_EQ(partial.find("\n3,"), std::string::npos);
    EXPECT_EQ(slurp(dir / cells[0].name() / "metrics.csv"), good);
    fs::remove_all(dir);
}

TEST(CompareRuns, DuplicatedCellsHaveZeroSpread) {
    auto cfg = *validate_config(kSmall).config;
    cfg.strategies = {StrategyKind::arr};
    cfg.seeds = {1};
    const auto dir = scratch("duplicate");
    RunOptions opts;
    opts.output_dir = dir.string();
    run_experiment(cfg, opts);
    fs::copy(dir / "arr_a0_rm20_s1", dir / "arr_a0_rm20_copy");
    const auto table = compare_runs(dir);
    ASSERT_EQ(table.rows.size(), 1u);
    EXPECT_EQ(table.rows[0].runs, 2u);
    EXPECT_EQ(table.rows[0].std_fixed, 0.0);
    EXPECT_EQ(table.rows[0].std_seen, 0.0);
    fs::remove_all(dir);
}

TEST(CompareRuns, SortedDescendingWithBothProtocols) {
    auto cfg = *validate_config(kSmall).config;
    const auto dir = scratch("sorted");
    RunOptions opts;
    opts.output_dir = dir.string();
    run_experiment(cfg, opts);
    const auto table = compare_runs(dir);
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_GE(table.rows[0].mean_fixed, table.rows[1].mean_fixed);
    const auto text = table.render();
    EXPECT_NE(text.find("fixed"), std::string::npos);
    EXPECT_NE(text.find("seen"), std::string::npos);
    EXPECT_EQ(table.ranking(true).size(), 2u);
    fs::remove_all(dir);
}

TEST(CompareRuns, MismatchedStreamsAreNotComparable) {
    auto cfg = *validate_config(kSmall).config;
    const auto dir = scratch("mismatch");
    RunOptions opts;
    opts.output_dir = dir.string();
    run_experiment(cfg, opts);
    const auto path = dir / "arr_a0_rm20_s2" / "summary.json";
    nlohmann::json j;
    {
        std::ifstream in(path);
        in >> j;
    }
    j["stream_signature"] = "synthetic(other)";
    {
        std::ofstream out(path);
        out << j.dump();
    }
    EXPECT_THROW(compare_runs(dir), ComparabilityError);
    fs::remove_all(dir);
}

TEST(CompareRuns, NeedsTwoCells) {
    const auto dir = scratch("empty");
    fs::create_directories(dir);
    EXPECT_THROW(compare_runs(dir), InputError);
    EXPECT_THROW(compare_runs(dir / "missing"), InputError);
    fs::remove_all(dir);
}
