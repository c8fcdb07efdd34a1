#pragma once

#include "subderm/palpation_policy.hpp"
#include "subderm/scene_registration.hpp"
#include "subderm/types.hpp"

#include <cstddef>
#include <span>

namespace subderm {

struct ReconCloud {
    PointCloud points;
    std::size_t from_probes = 0;
    std::size_t from_contour = 0;
};

struct FScoreReport {
    double precision = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
    double r = 0.0;
    std::size_t n_recon = 0;
    std::size_t n_gt = 0;
};

/// Contact points for reconstruction. Contour mode keeps waypoints whose
/// axial force reaches f_thres; discrete mode keeps the terminal contact of
/// every tumor-classified probe. Points closer than 0.2 mm are merged.
ReconCloud extract_contact_points(std::span<const PalpationTrajectory> trajectories,
                                  std::span<const ProbeResult> probes,
                                  const ProbeParams& params, double tip_radius,
                                  PalpationMode mode);

FScoreReport fscore(const PointCloud& recon, const PointCloud& gt, double r);

/// Delaunay over XY, dropping triangles with an edge longer than 3x the median.
SurfaceMesh reconstruct_mesh(const ReconCloud& cloud);

struct TrialAggregate {
    double mean = 0.0;
    double max = 0.0;
};

TrialAggregate aggregate_trials(std::span<const FScoreReport> reports);

constexpr double kDedupDistance = 0.0002;

}  // namespace subderm
