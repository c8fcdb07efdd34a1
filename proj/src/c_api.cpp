#include "subderm/subderm.h"

#include "subderm/errors.hpp"
#include "subderm/experiment.hpp"
#include "subderm/ply_io.hpp"

#include <cstring>
#include <new>
#include <sstream>
#include <string>

struct sd_config {
    subderm::ExperimentConfig cfg;
};

struct sd_report {
    subderm::TrialReport rep;
};

struct sd_matrix {
    subderm::MatrixReport rep;
};

struct sd_cloud {
    subderm::PointCloud cloud;
};

namespace {

thread_local std::string g_last_error;

sd_status map_code(subderm::ErrorCode code)
{
    using subderm::ErrorCode;
    switch (code) {
    case ErrorCode::InvalidArgument: return SD_ERR_INVALID_ARGUMENT;
    case ErrorCode::ConfigInvalid: return SD_ERR_CONFIG_INVALID;
    case ErrorCode::EmptyRegion: return SD_ERR_EMPTY_REGION;
    case ErrorCode::NoTumor: return SD_ERR_NO_TUMOR;
    case ErrorCode::EmptyAfterFilter: return SD_ERR_EMPTY_AFTER_FILTER;
    case ErrorCode::DegenerateCloud: return SD_ERR_DEGENERATE_CLOUD;
    case ErrorCode::EmptyRoi: return SD_ERR_EMPTY_ROI;
    case ErrorCode::ResolutionTooCoarse: return SD_ERR_RESOLUTION_TOO_COARSE;
    case ErrorCode::InvalidCell: return SD_ERR_INVALID_CELL;
    case ErrorCode::SingularKernel: return SD_ERR_SINGULAR_KERNEL;
    case ErrorCode::Exhausted: return SD_ERR_EXHAUSTED;
    case ErrorCode::FrameMismatch: return SD_ERR_FRAME_MISMATCH;
    case ErrorCode::OutOfRange: return SD_ERR_OUT_OF_RANGE;
    case ErrorCode::NumericalBlowup: return SD_ERR_NUMERICAL_BLOWUP;
    case ErrorCode::NoContact: return SD_ERR_NO_CONTACT;
    case ErrorCode::EmptyReconstruction: return SD_ERR_EMPTY_RECONSTRUCTION;
    case ErrorCode::EmptyCloud: return SD_ERR_EMPTY_CLOUD;
    case ErrorCode::Empty: return SD_ERR_EMPTY;
    case ErrorCode::IoError: return SD_ERR_IO;
    }
    return SD_ERR_INTERNAL;
}

sd_status set_error(sd_status status, const std::string& msg)
{
    g_last_error = msg;
    return status;
}

template <class F>
sd_status guarded(F&& body)
{
    try {
        g_last_error.clear();
        body();
        return SD_OK;
    } catch (const subderm::Error& e) {
        return set_error(map_code(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return set_error(SD_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return set_error(SD_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(SD_ERR_INTERNAL, "unknown exception");
    }
}

#define SD_REQUIRE(cond, what)                                   \
    do {                                                         \
        if (!(cond))                                             \
            return set_error(SD_ERR_INVALID_ARGUMENT, (what));   \
    } while (0)

const std::vector<std::string>& key_list()
{
    static const std::vector<std::string> keys = subderm::setting_keys();
    return keys;
}

}  // namespace

extern "C" {

const char* sd_version(void) { return SUBDERM_VERSION_STRING; }

const char* sd_last_error(void) { return g_last_error.c_str(); }

const char* sd_status_string(sd_status status)
{
    switch (status) {
    case SD_OK: return "ok";
    case SD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SD_ERR_CONFIG_INVALID: return "invalid configuration";
    case SD_ERR_EMPTY_REGION: return "empty region";
    case SD_ERR_NO_TUMOR: return "no tumor";
    case SD_ERR_EMPTY_AFTER_FILTER: return "empty after filtering";
    case SD_ERR_DEGENERATE_CLOUD: return "degenerate cloud";
    case SD_ERR_EMPTY_ROI: return "empty ROI";
    case SD_ERR_RESOLUTION_TOO_COARSE: return "resolution too coarse";
    case SD_ERR_INVALID_CELL: return "invalid cell";
    case SD_ERR_SINGULAR_KERNEL: return "singular kernel";
    case SD_ERR_EXHAUSTED: return "search space exhausted";
    case SD_ERR_FRAME_MISMATCH: return "frame mismatch";
    case SD_ERR_OUT_OF_RANGE: return "out of range";
    case SD_ERR_NUMERICAL_BLOWUP: return "numerical blowup";
    case SD_ERR_NO_CONTACT: return "no contact";
    case SD_ERR_EMPTY_RECONSTRUCTION: return "empty reconstruction";
    case SD_ERR_EMPTY_CLOUD: return "empty cloud";
    case SD_ERR_EMPTY: return "empty input";
    case SD_ERR_IO: return "I/O error";
    case SD_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

// ---- configuration

sd_status sd_config_new_default(sd_config** out)
{
    SD_REQUIRE(out, "out is NULL");
    return guarded([&] { *out = new sd_config{subderm::default_config()}; });
}

sd_status sd_config_load(const char* path, sd_config** out)
{
    SD_REQUIRE(path && out, "path and out must be non-NULL");
    return guarded([&] { *out = new sd_config{subderm::load_config(path)}; });
}

sd_status sd_config_parse(const char* json_text, sd_config** out)
{
    SD_REQUIRE(json_text && out, "json_text and out must be non-NULL");
    return guarded([&] { *out = new sd_config{subderm::parse_config(json_text)}; });
}

sd_status sd_config_clone(const sd_config* cfg, sd_config** out)
{
    SD_REQUIRE(cfg && out, "cfg and out must be non-NULL");
    return guarded([&] { *out = new sd_config{cfg->cfg}; });
}

sd_status sd_config_set(sd_config* cfg, const char* key, const char* value)
{
    SD_REQUIRE(cfg && key && value, "cfg, key and value must be non-NULL");
    return guarded([&] { subderm::apply_setting(cfg->cfg, key, value); });
}

sd_status sd_config_get(const sd_config* cfg, const char* key, char* buf, size_t buf_len,
                        size_t* needed)
{
    SD_REQUIRE(cfg && key, "cfg and key must be non-NULL");
    std::string value;
    const sd_status st = guarded([&] { value = subderm::get_setting(cfg->cfg, key); });
    if (st != SD_OK)
        return st;
    if (needed)
        *needed = value.size() + 1;
    if (!buf || buf_len < value.size() + 1)
        return buf ? set_error(SD_ERR_OUT_OF_RANGE, "buffer too small") : SD_OK;
    std::memcpy(buf, value.c_str(), value.size() + 1);
    return SD_OK;
}

sd_status sd_config_validate(const sd_config* cfg)
{
    SD_REQUIRE(cfg, "cfg is NULL");
    return guarded([&] { cfg->cfg.validate(); });
}

size_t sd_config_key_count(void) { return key_list().size(); }

const char* sd_config_key(size_t index)
{
    return index < key_list().size() ? key_list()[index].c_str() : nullptr;
}

void sd_config_free(sd_config* cfg) { delete cfg; }

// ---- experiment

sd_status sd_run_experiment(const sd_config* cfg, sd_report** out)
{
    SD_REQUIRE(cfg && out, "cfg and out must be non-NULL");
    return guarded([&] { *out = new sd_report{subderm::run_experiment(cfg->cfg)}; });
}

sd_status sd_report_summary_get(const sd_report* report, sd_report_summary* out)
{
    SD_REQUIRE(report && out, "report and out must be non-NULL");
    const auto& r = report->rep;
    out->mean_f = r.mean_f;
    out->max_f = r.max_f;
    out->trials = r.trials.size();
    out->failed = 0;
    for (const auto& t : r.trials)
        out->failed += t.report ? 0 : 1;
    out->total_waypoints = r.total_waypoints;
    out->wall_time = r.wall_time;
    return SD_OK;
}

sd_status sd_report_trial(const sd_report* report, size_t index, sd_trial_summary* out)
{
    SD_REQUIRE(report && out, "report and out must be non-NULL");
    if (index >= report->rep.trials.size())
        return set_error(SD_ERR_OUT_OF_RANGE, "trial index out of range");
    const auto& t = report->rep.trials[index];
    *out = sd_trial_summary{};
    out->index = t.index;
    out->seed = t.seed;
    out->ok = t.report ? 1 : 0;
    out->failure = t.report ? SD_OK : map_code(t.failure_code);
    if (t.report) {
        out->precision = t.report->precision;
        out->recall = t.report->recall;
        out->n_recon = t.report->n_recon;
    }
    out->fscore = t.fscore;
    out->n_probes = t.n_probes;
    out->n_tumor_probes = t.n_tumor_probes;
    out->n_trajectories = t.n_trajectories;
    out->n_waypoints = t.n_waypoints;
    out->n_boundary = t.outcomes[static_cast<std::size_t>(subderm::Outcome::BoundaryReached)];
    out->n_timeout = t.outcomes[static_cast<std::size_t>(subderm::Outcome::Timeout)];
    out->n_lost_contact = t.outcomes[static_cast<std::size_t>(subderm::Outcome::LostContact)];
    out->min_boundary_waypoints = t.min_boundary_waypoints;
    out->boundary_radius_sum = t.boundary_radius_sum;
    out->force_bound_violations = t.force_bound_violations;
    out->max_follow_duration = t.max_follow_duration;
    out->wall_time = t.wall_time;
    return SD_OK;
}

const char* sd_report_trial_failure(const sd_report* report, size_t index)
{
    if (!report || index >= report->rep.trials.size())
        return "";
    return report->rep.trials[index].failure.c_str();
}

const char* sd_report_label(const sd_report* report)
{
    return report ? report->rep.label.c_str() : "";
}

void sd_report_free(sd_report* report) { delete report; }

// ---- matrix

sd_status sd_run_matrix(const sd_config* const* cfgs, size_t n, const char* out_dir,
                        sd_matrix** out)
{
    SD_REQUIRE(out, "out is NULL");
    SD_REQUIRE(cfgs || n == 0, "cfgs is NULL");
    return guarded([&] {
        std::vector<subderm::ExperimentConfig> list;
        for (size_t i = 0; i < n; ++i) {
            if (!cfgs[i])
                subderm::fail(subderm::ErrorCode::InvalidArgument, "NULL config in list");
            list.push_back(cfgs[i]->cfg);
        }
        *out = new sd_matrix{subderm::run_matrix(list, out_dir ? out_dir : "")};
    });
}

sd_status sd_run_table(const sd_config* base, const char* shapes_csv, const char* out_dir,
                       sd_matrix** out)
{
    SD_REQUIRE(base && shapes_csv && out, "base, shapes_csv and out must be non-NULL");
    return guarded([&] {
        std::vector<subderm::TumorShape> shapes;
        std::stringstream ss(shapes_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty())
                shapes.push_back(subderm::parse_shape(item));
        }
        const auto cfgs = subderm::table_conditions(base->cfg, shapes);
        *out = new sd_matrix{subderm::run_matrix(cfgs, out_dir ? out_dir : "")};
    });
}

size_t sd_matrix_row_count(const sd_matrix* m) { return m ? m->rep.rows.size() : 0; }

sd_status sd_matrix_row_get(const sd_matrix* m, size_t index, sd_matrix_row* out)
{
    SD_REQUIRE(m && out, "matrix and out must be non-NULL");
    if (index >= m->rep.rows.size())
        return set_error(SD_ERR_OUT_OF_RANGE, "row index out of range");
    const auto& r = m->rep.rows[index];
    out->condition = r.condition.c_str();
    out->shape = r.shape.c_str();
    out->mean_f = r.mean_f;
    out->max_f = r.max_f;
    out->palpations = r.palpations;
    out->failed = r.failed ? 1 : 0;
    out->combined = r.combined ? 1 : 0;
    return SD_OK;
}

void sd_matrix_free(sd_matrix* m) { delete m; }

// ---- clouds

sd_status sd_export_ground_truth(const sd_config* cfg, const char* path)
{
    SD_REQUIRE(cfg && path, "cfg and path must be non-NULL");
    return guarded([&] {
        cfg->cfg.validate();
        const subderm::Phantom phantom = subderm::phantom_for(cfg->cfg);
        const auto gt = subderm::ground_truth_cloud(phantom, cfg->cfg.gt_samples,
                                                    subderm::derive_seed(cfg->cfg.seed, 100));
        subderm::export_ply(gt, path);
    });
}

sd_status sd_cloud_load_ply(const char* path, sd_cloud** out)
{
    SD_REQUIRE(path && out, "path and out must be non-NULL");
    return guarded([&] { *out = new sd_cloud{subderm::load_ply(path)}; });
}

size_t sd_cloud_size(const sd_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

sd_status sd_cloud_point(const sd_cloud* cloud, size_t index, double xyz[3])
{
    SD_REQUIRE(cloud && xyz, "cloud and xyz must be non-NULL");
    if (index >= cloud->cloud.size())
        return set_error(SD_ERR_OUT_OF_RANGE, "point index out of range");
    const auto& p = cloud->cloud.points[index];
    xyz[0] = p.x();
    xyz[1] = p.y();
    xyz[2] = p.z();
    return SD_OK;
}

void sd_cloud_free(sd_cloud* cloud) { delete cloud; }

sd_status sd_fscore(const sd_cloud* recon, const sd_cloud* gt, double r, sd_fscore_result* out)
{
    SD_REQUIRE(recon && gt && out, "recon, gt and out must be non-NULL");
    return guarded([&] {
        const auto rep = subderm::fscore(recon->cloud, gt->cloud, r);
        *out = {rep.precision, rep.recall, rep.fscore, rep.n_recon, rep.n_gt};
    });
}

// ---- helpers

sd_status sd_min_jerk_offset(double t, double amplitude, double* out)
{
    SD_REQUIRE(out, "out is NULL");
    return guarded([&] { *out = subderm::min_jerk_offset(t, amplitude); });
}

sd_status sd_admissible_force(double kp, double kd, double e_thres, double period, double* out)
{
    SD_REQUIRE(out, "out is NULL");
    SD_REQUIRE(period > 0.0, "period must be positive");
    subderm::ControllerGains g;
    g.kp = subderm::Vec3::Constant(kp);
    g.kd = subderm::Vec3::Constant(kd);
    g.e_thres = e_thres;
    g.period = period;
    *out = subderm::admissible_force(g);
    return SD_OK;
}

}  // extern "C"
