#include "support.hpp"

#include "subderm/experiment.hpp"

#include <fstream>
#include <sstream>

using namespace subderm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s)
{
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

ExperimentConfig small_config()
{
    ExperimentConfig cfg = default_config();
    cfg.trials = 2;
    cfg.policy.budget = 10;
    cfg.gt_samples = 500;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("settings round trip through their string form")
{
    ExperimentConfig cfg = default_config();
    for (const auto& key : setting_keys()) {
        const std::string v = get_setting(cfg, key);
        ExperimentConfig copy = default_config();
        apply_setting(copy, key, v);
        CHECK_MESSAGE(get_setting(copy, key) == v, key);
    }
    apply_setting(cfg, "phantom.k_skin", "1500");
    CHECK(cfg.phantom.k_skin == 1500.0);
    apply_setting(cfg, "strategy", "rs");
    CHECK(cfg.policy.strategy == Strategy::RS);
    apply_setting(cfg, "mode", "discrete");
    CHECK(cfg.policy.mode == PalpationMode::Discrete);
    apply_setting(cfg, "shape", "crescent");
    CHECK(cfg.tumor.shape == TumorShape::Crescent);

    CHECK(testing::error_code_of([&] { apply_setting(cfg, "no.such.key", "1"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([&] { apply_setting(cfg, "budget", "ten"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([&] { apply_setting(cfg, "budget", "2.5"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([&] { apply_setting(cfg, "gains.kp", "nan"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([&] { apply_setting(cfg, "strategy", "grid"); }) ==
          ErrorCode::ConfigInvalid);
}

TEST_CASE("JSON configs accept nested and flat keys")
{
    const ExperimentConfig nested =
        parse_config(R"({"phantom": {"k_skin": 1200, "surface": "flat"}, "budget": 7})");
    CHECK(nested.phantom.k_skin == 1200.0);
    CHECK(nested.phantom.surface.kind == SurfaceKind::Flat);
    CHECK(nested.policy.budget == 7);

    const ExperimentConfig flat = parse_config(R"({"phantom.k_skin": 1200, "strategy": "rs"})");
    CHECK(flat.phantom.k_skin == 1200.0);
    CHECK(flat.policy.strategy == Strategy::RS);

    CHECK(testing::error_code_of([] { parse_config("{not json"); }) == ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([] { parse_config("[1, 2]"); }) == ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([] { parse_config(R"({"bogus": 1})"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([] { parse_config(R"({"budget": [1]})"); }) ==
          ErrorCode::ConfigInvalid);
    CHECK(testing::error_code_of([] { load_config("/nonexistent-dir/c.json"); }) ==
          ErrorCode::IoError);
}

TEST_CASE("validation rejects inconsistent configs")
{
    ExperimentConfig cfg = default_config();
    CHECK_NOTHROW(cfg.validate());

    // Fat stiffer than the tumor breaks the stiffness ordering.
    ExperimentConfig bad = cfg;
    bad.phantom.k_fat = 50000.0;
    CHECK(testing::error_code_of([&] { bad.validate(); }) == ErrorCode::ConfigInvalid);

    bad = cfg;
    bad.trials = 0;
    CHECK(testing::error_code_of([&] { bad.validate(); }) == ErrorCode::ConfigInvalid);

    bad = cfg;
    bad.roi.max_xy = bad.roi.min_xy;
    CHECK(testing::error_code_of([&] { bad.validate(); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("run_experiment writes one row per trial and is reproducible")
{
    ExperimentConfig cfg = small_config();
    const fs::path a = testing::scratch_dir("exp_a");
    const fs::path b = testing::scratch_dir("exp_b");

    cfg.output_dir = a.string();
    const TrialReport ra = run_experiment(cfg);
    REQUIRE(ra.trials.size() == 2);
    CHECK(ra.trials[0].seed == 11);
    CHECK(ra.trials[1].seed == 12);
    double sum = 0.0, mx = 0.0;
    for (const auto& t : ra.trials) {
        REQUIRE(t.report.has_value());
        CHECK(t.n_probes == 10);
        CHECK(t.fscore > 0.0);
        sum += t.fscore;
        mx = std::max(mx, t.fscore);
    }
    CHECK(ra.mean_f == doctest::Approx(sum / 2));
    CHECK(ra.max_f == mx);

    for (const char* f : {"metrics.csv", "summary.csv", "timing.csv", "trajectories.jsonl",
                          "gt.ply", "recon_0.ply", "recon_1.ply"})
        CHECK_MESSAGE(fs::exists(a / f), f);
    CHECK(count_lines(slurp(a / "metrics.csv")) == 3);
    CHECK(count_lines(slurp(a / "summary.csv")) == 2);

    const std::string log = slurp(a / "trajectories.jsonl");
    CHECK(log.rfind("{\"type\":\"header\"", 0) == 0);
    CHECK(log.find("\"phase\":\"probe\"") != std::string::npos);
    CHECK(log.find("\"phase\":\"contour\"") != std::string::npos);

    cfg.output_dir = b.string();
    const TrialReport rb = run_experiment(cfg);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "trajectories.jsonl") == slurp(b / "trajectories.jsonl"));
    CHECK(rb.mean_f == ra.mean_f);
}

TEST_CASE("a failed trial is recorded and the run continues")
{
    ExperimentConfig cfg = small_config();
    cfg.policy.mode = PalpationMode::Discrete;
    cfg.policy.budget = 1;
    cfg.tumor.center_xy = Vec2(0.035, 0.0);  // outside the ROI, so no probe can find it
    const fs::path dir = testing::scratch_dir("exp_fail");
    cfg.output_dir = dir.string();
    const TrialReport rep = run_experiment(cfg);
    REQUIRE(rep.trials.size() == 2);
    for (const auto& t : rep.trials) {
        CHECK_FALSE(t.report.has_value());
        CHECK(t.failure_code == ErrorCode::EmptyReconstruction);
        CHECK(t.fscore == 0.0);
    }
    CHECK(rep.mean_f == 0.0);
    const std::string metrics = slurp(dir / "metrics.csv");
    CHECK(count_lines(metrics) == 3);
    CHECK(metrics.find("EmptyReconstruction") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "recon_0.ply"));
}

TEST_CASE("table conditions and matrix rows")
{
    ExperimentConfig base = small_config();
    const std::vector<TumorShape> shapes{TumorShape::Hemisphere, TumorShape::Crescent};
    std::vector<ExperimentConfig> conds = table_conditions(base, shapes);
    REQUIRE(conds.size() == 8);
    for (const auto& c : conds)
        CHECK(c.policy.budget == (c.tumor.shape == TumorShape::Crescent ? 80 : 50));

    for (auto& c : conds) {
        c.trials = 1;
        c.policy.budget = 6;
    }
    const fs::path dir = testing::scratch_dir("matrix");
    const MatrixReport m = run_matrix(conds, dir.string());
    CHECK(m.conditions.size() == 8);
    REQUIRE(m.rows.size() == 10);
    std::size_t combined = 0;
    for (const auto& r : m.rows) {
        if (r.combined) {
            ++combined;
            CHECK(r.condition == "combined");
            CHECK(r.palpations == 24);
        }
    }
    CHECK(combined == 2);
    CHECK(fs::exists(dir / "summary.csv"));
    CHECK(fs::exists(dir / "metrics.csv"));

    CHECK(testing::error_code_of([] { run_matrix({}, ""); }) == ErrorCode::InvalidArgument);
}

}
