// Command-line front end. Talks to the library only through the C interface.
#include "subderm/subderm.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

struct ConfigDeleter {
    void operator()(sd_config* c) const { sd_config_free(c); }
};
struct ReportDeleter {
    void operator()(sd_report* r) const { sd_report_free(r); }
};
struct MatrixDeleter {
    void operator()(sd_matrix* m) const { sd_matrix_free(m); }
};
struct CloudDeleter {
    void operator()(sd_cloud* c) const { sd_cloud_free(c); }
};
using ConfigPtr = std::unique_ptr<sd_config, ConfigDeleter>;
using ReportPtr = std::unique_ptr<sd_report, ReportDeleter>;
using MatrixPtr = std::unique_ptr<sd_matrix, MatrixDeleter>;
using CloudPtr = std::unique_ptr<sd_cloud, CloudDeleter>;

struct Failure {
    sd_status status;
};

void check(sd_status st, const char* what)
{
    if (st != SD_OK) {
        std::fprintf(stderr, "error: %s: %s\n", what, sd_last_error());
        throw Failure{st};
    }
}

struct CommonOptions {
    std::string config;
    std::optional<unsigned long long> seed;
    std::optional<int> trials;
    std::optional<int> budget;
    std::string strategy;
    std::string mode;
    std::string shape;
    std::vector<std::string> sets;

    void attach(CLI::App* app)
    {
        app->add_option("--config", config, "JSON config file (flat or nested keys)")
            ->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "base seed; trial i uses seed + i");
        app->add_option("--trials", trials, "trials per condition")->check(CLI::PositiveNumber);
        app->add_option("--budget", budget, "palpations per trial")->check(CLI::PositiveNumber);
        app->add_option("--strategy", strategy, "bo | rs")
            ->check(CLI::IsMember({"bo", "rs"}, CLI::ignore_case));
        app->add_option("--mode", mode, "cf | discrete")
            ->check(CLI::IsMember({"cf", "discrete"}, CLI::ignore_case));
        app->add_option("--shape", shape, "hemisphere | ellipsoid | crescent")
            ->check(CLI::IsMember({"hemisphere", "ellipsoid", "crescent"}, CLI::ignore_case));
        app->add_option("--set", sets, "override a config key, key=value (repeatable)");
    }

    ConfigPtr build() const
    {
        sd_config* raw = nullptr;
        if (config.empty())
            check(sd_config_new_default(&raw), "default config");
        else
            check(sd_config_load(config.c_str(), &raw), "loading config");
        ConfigPtr cfg(raw);

        auto set = [&](const char* key, const std::string& value) {
            check(sd_config_set(cfg.get(), key, value.c_str()), key);
        };
        if (seed)
            set("seed", std::to_string(*seed));
        if (trials)
            set("trials", std::to_string(*trials));
        if (budget)
            set("budget", std::to_string(*budget));
        if (!strategy.empty())
            set("strategy", strategy);
        if (!mode.empty())
            set("mode", mode);
        if (!shape.empty())
            set("shape", shape);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0)
                throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
            set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
        }
        check(sd_config_validate(cfg.get()), "config");
        return cfg;
    }
};

void print_matrix(const sd_matrix* m)
{
    std::printf("%-14s %-11s %8s %8s %6s\n", "condition", "shape", "mean_F", "max_F", "#P");
    for (size_t i = 0; i < sd_matrix_row_count(m); ++i) {
        sd_matrix_row row{};
        check(sd_matrix_row_get(m, i, &row), "matrix row");
        if (row.failed)
            std::printf("%-14s %-11s %8s %8s %6zu\n", row.condition, row.shape, "failed", "-",
                        row.palpations);
        else
            std::printf("%-14s %-11s %8.3f %8.3f %6zu\n", row.condition, row.shape, row.mean_f,
                        row.max_f, row.palpations);
    }
}

int cmd_run(const CommonOptions& opts, const std::string& out)
{
    ConfigPtr cfg = opts.build();
    if (!out.empty())
        check(sd_config_set(cfg.get(), "output_dir", out.c_str()), "output_dir");

    sd_report* raw = nullptr;
    check(sd_run_experiment(cfg.get(), &raw), "run");
    ReportPtr rep(raw);

    sd_report_summary sum{};
    check(sd_report_summary_get(rep.get(), &sum), "summary");
    std::printf("condition %s\n", sd_report_label(rep.get()));
    std::printf("%5s %9s %9s %9s %7s %7s %9s\n", "trial", "precision", "recall", "F", "#probe",
                "#tumor", "waypoints");
    for (size_t i = 0; i < sum.trials; ++i) {
        sd_trial_summary t{};
        check(sd_report_trial(rep.get(), i, &t), "trial");
        if (t.ok)
            std::printf("%5d %9.4f %9.4f %9.4f %7zu %7zu %9zu\n", t.index, t.precision, t.recall,
                        t.fscore, t.n_probes, t.n_tumor_probes, t.n_waypoints);
        else
            std::printf("%5d  failed: %s\n", t.index, sd_report_trial_failure(rep.get(), i));
    }
    std::printf("mean_F %.4f  max_F %.4f  failed %zu/%zu  wall %.2fs\n", sum.mean_f, sum.max_f,
                sum.failed, sum.trials, sum.wall_time);
    return 0;
}

int cmd_matrix(const CommonOptions& opts, const std::string& out, const std::string& shapes)
{
    ConfigPtr cfg = opts.build();
    sd_matrix* raw = nullptr;
    check(sd_run_table(cfg.get(), shapes.c_str(), out.empty() ? nullptr : out.c_str(), &raw),
          "matrix");
    MatrixPtr m(raw);
    print_matrix(m.get());
    return 0;
}

int cmd_export_gt(const CommonOptions& opts, const std::string& out)
{
    ConfigPtr cfg = opts.build();
    check(sd_export_ground_truth(cfg.get(), out.c_str()), "export-gt");
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_eval(const std::string& recon_path, const std::string& gt_path, double r)
{
    sd_cloud* raw = nullptr;
    check(sd_cloud_load_ply(recon_path.c_str(), &raw), "reading reconstruction");
    CloudPtr recon(raw);
    check(sd_cloud_load_ply(gt_path.c_str(), &raw), "reading ground truth");
    CloudPtr gt(raw);

    sd_fscore_result res{};
    check(sd_fscore(recon.get(), gt.get(), r, &res), "fscore");
    std::printf("precision %.6f\nrecall    %.6f\nF         %.6f\nn_recon   %zu\nn_gt      %zu\n",
                res.precision, res.recall, res.fscore, res.n_recon, res.n_gt);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Simulated robotic palpation: search, contour following and reconstruction scoring"};
    app.set_version_flag("--version", std::string(sd_version()));
    app.require_subcommand(1);

    CommonOptions run_opts, matrix_opts, gt_opts;
    std::string run_out, matrix_out, gt_out;
    std::string shapes = "hemisphere,crescent";

    auto* run = app.add_subcommand("run", "run one condition for N seeded trials");
    run_opts.attach(run);
    run->add_option("--out", run_out, "output directory");

    auto* matrix = app.add_subcommand("matrix", "strategy x mode sweep over tumor shapes");
    matrix_opts.attach(matrix);
    matrix->add_option("--out", matrix_out, "output directory");
    matrix->add_option("--shapes", shapes, "comma-separated shapes");

    auto* export_gt = app.add_subcommand("export-gt", "write the ground-truth tumor cloud as PLY");
    gt_opts.attach(export_gt);
    export_gt->add_option("--out", gt_out, "PLY path")->required();

    std::string recon_path, gt_path;
    double r = 0.003;
    auto* eval = app.add_subcommand("eval", "score a reconstruction PLY against a ground-truth PLY");
    eval->add_option("--recon", recon_path, "reconstructed cloud")->required()->check(CLI::ExistingFile);
    eval->add_option("--gt", gt_path, "ground-truth cloud")->required()->check(CLI::ExistingFile);
    eval->add_option("--r", r, "distance threshold in metres")->check(CLI::PositiveNumber);

    auto* keys = app.add_subcommand("keys", "list config keys and their default values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run)
            return cmd_run(run_opts, run_out);
        if (*matrix)
            return cmd_matrix(matrix_opts, matrix_out, shapes);
        if (*export_gt)
            return cmd_export_gt(gt_opts, gt_out);
        if (*eval)
            return cmd_eval(recon_path, gt_path, r);
        if (*keys) {
            sd_config* raw = nullptr;
            check(sd_config_new_default(&raw), "default config");
            ConfigPtr cfg(raw);
            for (size_t i = 0; i < sd_config_key_count(); ++i) {
                char buf[256];
                size_t needed = 0;
                check(sd_config_get(cfg.get(), sd_config_key(i), buf, sizeof buf, &needed), "get");
                std::printf("%-30s %s\n", sd_config_key(i), buf);
            }
            return 0;
        }
    } catch (const CLI::Error& e) {
        app.exit(e);
        return 2;
    } catch (const Failure& f) {
        return f.status == SD_ERR_CONFIG_INVALID || f.status == SD_ERR_INVALID_ARGUMENT ? 2 : 1;
    }
    return 0;
}
