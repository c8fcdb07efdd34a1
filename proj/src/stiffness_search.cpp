#include "subderm/stiffness_search.hpp"

#include "subderm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace subderm {

GPModel::GPModel(std::vector<StiffnessSample> samples, const GpHyper& hyper) : hyper_(hyper)
{
    if (samples.empty())
        fail(ErrorCode::InvalidArgument, "GP needs at least one sample");
    if (!(hyper.length_scale > 0.0) || !(hyper.signal_var > 0.0) || !(hyper.noise_var >= 0.0))
        fail(ErrorCode::InvalidArgument, "GP hyperparameters out of range");

    // Duplicate cells are averaged.
    std::map<Cell, std::pair<double, int>> merged;
    for (const auto& s : samples) {
        if (!std::isfinite(s.k))
            fail(ErrorCode::InvalidArgument, "non-finite stiffness sample");
        auto& [sum, count] = merged[s.cell];
        sum += s.k;
        ++count;
    }
    samples_.reserve(merged.size());
    for (const auto& [cell, acc] : merged)
        samples_.push_back({cell, acc.first / acc.second});

    const auto n = static_cast<Eigen::Index>(samples_.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        y(i) = samples_[i].k;
    prior_mean_ = y.mean();

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j)
            k(i, j) = k(j, i) = kernel(samples_[i].cell, samples_[j].cell);
        k(i, i) += hyper_.noise_var;
    }

    llt_.compute(k);
    if (llt_.info() != Eigen::Success) {
        k.diagonal().array() += 1e-10 * hyper_.signal_var;
        llt_.compute(k);
        if (llt_.info() != Eigen::Success)
            fail(ErrorCode::SingularKernel, "kernel matrix is not positive definite");
    }
    gram_ = std::move(k);
    alpha_ = refined_solve((y.array() - prior_mean_).matrix());
}

// Cholesky solve plus residual correction; the kernel matrix can be poorly
// conditioned when the noise variance is small next to the signal variance.
Eigen::VectorXd GPModel::refined_solve(const Eigen::VectorXd& b) const
{
    Eigen::VectorXd x = llt_.solve(b);
    for (int it = 0; it < 2; ++it)
        x += llt_.solve(b - gram_ * x);
    return x;
}

double GPModel::kernel(Cell a, Cell b) const
{
    const double du = a.u - b.u;
    const double dv = a.v - b.v;
    return hyper_.signal_var *
           std::exp(-(du * du + dv * dv) / (2.0 * hyper_.length_scale * hyper_.length_scale));
}

Prediction GPModel::predict(Cell cell) const
{
    const auto n = static_cast<Eigen::Index>(samples_.size());
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i)
        ks(i) = kernel(cell, samples_[i].cell);
    const Eigen::VectorXd z = refined_solve(ks);
    return {prior_mean_ + ks.dot(alpha_), std::max(0.0, hyper_.signal_var - ks.dot(z))};
}

double GPModel::best_observed() const
{
    double best = samples_.front().k;
    for (const auto& s : samples_)
        best = std::max(best, s.k);
    return best;
}

GPModel gp_fit(std::span<const StiffnessSample> samples, const GpHyper& hyper)
{
    return GPModel(std::vector<StiffnessSample>(samples.begin(), samples.end()), hyper);
}

Prediction gp_predict(const GPModel& gp, Cell cell) { return gp.predict(cell); }

double expected_improvement(double mu, double sigma, const Acquisition& acq)
{
    const double gain = mu - acq.best_k - acq.xi;
    if (!(sigma > 0.0))
        return std::max(0.0, gain);
    const double z = gain / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    return std::max(0.0, gain * cdf + sigma * pdf);
}

double expected_improvement(const GPModel& gp, Cell cell, const Acquisition& acq)
{
    const Prediction p = gp.predict(cell);
    return expected_improvement(p.mean, std::sqrt(p.var), acq);
}

namespace {

std::vector<Cell> open_cells(const SurfaceGrid& grid, const CellSet& visited)
{
    std::vector<Cell> out;
    for (const Cell c : grid.valid_cells()) {
        if (!visited.contains(c))
            out.push_back(c);
    }
    if (out.empty())
        fail(ErrorCode::Exhausted, "no unvisited valid cells remain");
    return out;
}

}  // namespace

Cell next_cell_bo(const GPModel& gp, const SurfaceGrid& grid, const CellSet& visited,
                  const Acquisition& acq, Rng& rng)
{
    if (gp.samples().size() < 2)
        fail(ErrorCode::InvalidArgument, "BO needs a GP fitted on at least two cells");
    const std::vector<Cell> cand = open_cells(grid, visited);
    if (cand.size() == 1)
        return cand.front();

    std::vector<Cell> best;
    double best_ei = -1.0;
    for (const Cell c : cand) {
        const double ei = expected_improvement(gp, c, acq);
        if (ei > best_ei) {
            best_ei = ei;
            best.assign(1, c);
        } else if (ei == best_ei) {
            best.push_back(c);
        }
    }
    if (best.size() == 1)
        return best.front();
    return best[rng.index(best.size())];
}

Cell next_cell_random(const SurfaceGrid& grid, const CellSet& visited, Rng& rng)
{
    const std::vector<Cell> cand = open_cells(grid, visited);
    return cand[rng.index(cand.size())];
}

}  // namespace subderm
