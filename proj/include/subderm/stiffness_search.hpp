#pragma once

#include "subderm/random.hpp"
#include "subderm/scene_registration.hpp"
#include "subderm/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <set>
#include <span>
#include <vector>

namespace subderm {

struct StiffnessSample {
    Cell cell;
    double k = 0.0;  // N/m
};

/// Squared-exponential kernel hyperparameters. Length scale is in cell units;
/// variances are in (N/m)^2.
struct GpHyper {
    double length_scale = 3.0;
    double signal_var = 200.0 * 200.0;
    double noise_var = 25.0;
};

struct Prediction {
    double mean = 0.0;
    double var = 0.0;  // variance, not standard deviation
};

/// SE-kernel GP over cell coordinates with a constant prior mean equal
/// to the mean of the (deduplicated) training targets.
class GPModel {
public:
    GPModel(std::vector<StiffnessSample> samples, const GpHyper& hyper);

    Prediction predict(Cell cell) const;

    const std::vector<StiffnessSample>& samples() const { return samples_; }
    const GpHyper& hyper() const { return hyper_; }
    double prior_mean() const { return prior_mean_; }
    double best_observed() const;

    double kernel(Cell a, Cell b) const;

private:
    std::vector<StiffnessSample> samples_;
    GpHyper hyper_;
    double prior_mean_ = 0.0;
    Eigen::VectorXd refined_solve(const Eigen::VectorXd& b) const;

    Eigen::MatrixXd gram_;  // kernel matrix incl. noise (and any jitter)
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
};

GPModel gp_fit(std::span<const StiffnessSample> samples, const GpHyper& hyper);
Prediction gp_predict(const GPModel& gp, Cell cell);

struct Acquisition {
    double xi = 4.0;
    double best_k = 0.0;
};

/// Closed-form EI for maximisation, sigma being the predictive standard deviation.
double expected_improvement(double mu, double sigma, const Acquisition& acq);
double expected_improvement(const GPModel& gp, Cell cell, const Acquisition& acq);

using CellSet = std::set<Cell>;

/// Argmax of EI over unvisited valid cells; exact ties broken uniformly via rng.
Cell next_cell_bo(const GPModel& gp, const SurfaceGrid& grid, const CellSet& visited,
                  const Acquisition& acq, Rng& rng);

/// Uniform draw over unvisited valid cells.
Cell next_cell_random(const SurfaceGrid& grid, const CellSet& visited, Rng& rng);

}  // namespace subderm
