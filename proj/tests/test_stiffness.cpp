#include "support.hpp"

#include "subderm/stiffness_search.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace subderm;

namespace {

struct DenseOracle {
    Eigen::MatrixXd kinv;
    Eigen::VectorXd resid;
    std::vector<Cell> cells;
    GpHyper hyp;
    double mean0 = 0;

    double k(Cell a, Cell b) const
    {
        const double d2 = std::pow(a.u - b.u, 2) + std::pow(a.v - b.v, 2);
        return hyp.signal_var * std::exp(-0.5 * d2 / (hyp.length_scale * hyp.length_scale));
    }

    DenseOracle(const std::vector<StiffnessSample>& s, const GpHyper& h) : hyp(h)
    {
        const int n = static_cast<int>(s.size());
        Eigen::MatrixXd K(n, n);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            cells.push_back(s[i].cell);
            y(i) = s[i].k;
        }
        mean0 = y.mean();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                K(i, j) = k(cells[i], cells[j]) + (i == j ? h.noise_var : 0.0);
        kinv = K.fullPivLu().inverse();
        resid = y.array() - mean0;
    }

    Prediction at(Cell c) const
    {
        Eigen::VectorXd ks(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i)
            ks(i) = k(c, cells[i]);
        return {mean0 + ks.dot(kinv * resid), hyp.signal_var - ks.dot(kinv * ks)};
    }
};

std::vector<StiffnessSample> random_samples(std::mt19937_64& gen, int n, int side)
{
    std::uniform_int_distribution<int> cell(0, side - 1);
    std::uniform_real_distribution<double> k(150, 3000);
    std::set<Cell> used;
    std::vector<StiffnessSample> out;
    while (static_cast<int>(out.size()) < n) {
        const Cell c{cell(gen), cell(gen)};
        if (used.insert(c).second)
            out.push_back({c, k(gen)});
    }
    return out;
}

double bump(Cell c, Cell peak)
{
    const double d2 = std::pow(c.u - peak.u, 2) + std::pow(c.v - peak.v, 2);
    return 200.0 + 2000.0 * std::exp(-d2 / (2.0 * 16.0));
}

}  // namespace

TEST_SUITE("stiffness") {

TEST_CASE("single noise-free sample interpolates")
{
    const std::vector<StiffnessSample> s{{{2, 3}, 500.0}};
    const GPModel gp = gp_fit(s, {3.0, 1e4, 0.0});
    const Prediction p = gp_predict(gp, {2, 3});
    CHECK(p.mean == doctest::Approx(500.0));
    CHECK(p.var <= 1e-9);
    CHECK(testing::error_code_of([] { gp_fit({}, GpHyper{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("noise-free fit passes through its samples; far field reverts to the prior")
{
    std::mt19937_64 gen(12);
    const auto s = random_samples(gen, 5, 12);
    const GpHyper h{2.0, 1e6, 0.0};
    const GPModel gp = gp_fit(s, h);
    for (const auto& smp : s) {
        CHECK(std::abs(gp.predict(smp.cell).mean - smp.k) <= 1e-6);
        CHECK(gp.predict(smp.cell).var <= 1e-9 * h.signal_var);
    }
    const Prediction far = gp.predict({500, 500});
    CHECK(std::abs(far.mean - gp.prior_mean()) <= 1e-6);
    CHECK(std::abs(far.var - h.signal_var) <= 1e-6);
}

TEST_CASE("duplicate cells are averaged")
{
    const std::vector<StiffnessSample> s{{{1, 1}, 100.0}, {{1, 1}, 300.0}, {{5, 5}, 900.0}};
    const GPModel gp = gp_fit(s, {1.0, 1e4, 0.0});
    CHECK(gp.samples().size() == 2);
    CHECK(gp.predict({1, 1}).mean == doctest::Approx(200.0));
}

TEST_CASE("posterior matches a dense-solve oracle")
{
    std::mt19937_64 gen(77);
    for (int round = 0; round < 5; ++round) {
        const auto s = random_samples(gen, 50, 30);
        const GpHyper h{3.0, 40000.0, 25.0};
        const GPModel gp = gp_fit(s, h);
        const DenseOracle oracle(s, h);
        for (int v = 0; v < 30; v += 3)
            for (int u = 0; u < 30; u += 2) {
                const Prediction a = gp.predict({u, v});
                const Prediction b = oracle.at({u, v});
                CHECK(std::abs(a.mean - b.mean) <= 1e-8);
                CHECK(std::abs(a.var - std::max(0.0, b.var)) <= 1e-8);
                CHECK(a.var <= h.signal_var + 1e-9);
            }
    }
}

TEST_CASE("EI closed form corner cases")
{
    CHECK(expected_improvement(400, 0.0, {0.0, 500}) == 0.0);
    CHECK(expected_improvement(600, 0.0, {10.0, 500}) == doctest::Approx(90.0));
    CHECK(expected_improvement(10.0, 1.0, {4.0, 6.0}) ==
          doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK(expected_improvement(10.0, 1.0, {4.0, 6.0}) == doctest::Approx(0.39894).epsilon(1e-5));
}

TEST_CASE("EI is non-negative and nondecreasing in sigma")
{
    for (double gain = -50; gain <= 50; gain += 2.5) {
        double prev = 0.0;
        for (double sigma = 0.0; sigma <= 60; sigma += 0.5) {
            const double ei = expected_improvement(gain, sigma, {0.0, 0.0});
            CHECK(ei >= 0.0);
            CHECK(ei >= prev - 1e-12);
            prev = ei;
        }
    }
}

TEST_CASE("EI agrees with Monte Carlo")
{
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> mu_d(0, 1000), sd_d(1, 300), best_d(0, 1000);
    std::normal_distribution<double> z;
    int outside = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const double mu = mu_d(gen), sigma = sd_d(gen);
        const Acquisition acq{4.0, best_d(gen)};
        const int n = 200000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double g = std::max(mu + sigma * z(gen) - acq.best_k - acq.xi, 0.0);
            s += g;
            s2 += g * g;
        }
        const double mean = s / n;
        const double se = std::sqrt(std::max(s2 / n - mean * mean, 0.0) / n);
        if (std::abs(expected_improvement(mu, sigma, acq) - mean) > 3 * se + 1e-12)
            ++outside;
    }
    CHECK(outside <= 1);
}

TEST_CASE("BO selection rules")
{
    const SurfaceGrid g = testing::flat_grid(6, 6, 0.002, 0.1);
    const std::vector<StiffnessSample> s{{{0, 0}, 200.0}, {{5, 5}, 900.0}};
    const GPModel gp = gp_fit(s, GpHyper{});
    Rng rng(1);

    CellSet all;
    for (const Cell c : g.valid_cells())
        all.insert(c);
    CHECK(testing::error_code_of([&] { next_cell_bo(gp, g, all, {4.0, 900.0}, rng); }) ==
          ErrorCode::Exhausted);

    CellSet but_one = all;
    but_one.erase({0, 0});
    CHECK(next_cell_bo(gp, g, but_one, {4.0, 900.0}, rng) == Cell{0, 0});

    const GPModel single = gp_fit(std::vector<StiffnessSample>{s[0]}, GpHyper{});
    CHECK(testing::error_code_of([&] { next_cell_bo(single, g, {}, {4.0, 200.0}, rng); }) ==
          ErrorCode::InvalidArgument);

    const CellSet visited{{0, 0}, {5, 5}};
    const Cell pick = next_cell_bo(gp, g, visited, {4.0, 900.0}, rng);
    CHECK_FALSE(visited.contains(pick));
    CHECK(g.is_valid(pick));

    // Brute-force argmax.
    double best = -1;
    for (const Cell c : g.valid_cells())
        if (!visited.contains(c))
            best = std::max(best, expected_improvement(gp, c, {4.0, 900.0}));
    CHECK(expected_improvement(gp, pick, {4.0, 900.0}) == best);
}

TEST_CASE("BO homes in on a stiffness bump")
{
    const int side = 20;
    const SurfaceGrid g = testing::flat_grid(side, side, 0.002, 0.1);
    const Cell peak{10, 9};
    const GpHyper h{4.0, 1000.0 * 1000.0, 100.0};
    int hits = 0;
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(derive_seed(99, seed));
        CellSet visited;
        std::vector<StiffnessSample> samples;
        for (int i = 0; i < 10; ++i) {
            const Cell c = next_cell_random(g, visited, rng);
            visited.insert(c);
            samples.push_back({c, bump(c, peak)});
        }
        const GPModel gp = gp_fit(samples, h);
        const Acquisition acq{4.0, gp.best_observed()};
        const Cell pick = next_cell_bo(gp, g, visited, acq, rng);
        if (std::hypot(pick.u - peak.u, pick.v - peak.v) <= 2 * h.length_scale)
            ++hits;
    }
    CHECK(hits >= 8);
}

TEST_CASE("BO choice is invariant to stiffness scaling")
{
    const SurfaceGrid g = testing::flat_grid(15, 15, 0.002, 0.1);
    std::mt19937_64 gen(5);
    for (int round = 0; round < 10; ++round) {
        const auto s = random_samples(gen, 8, 15);
        const GpHyper h{3.0, 40000.0, 25.0};
        CellSet visited;
        for (const auto& smp : s)
            visited.insert(smp.cell);
        const GPModel gp = gp_fit(s, h);
        Rng r1(round);
        const Cell a = next_cell_bo(gp, g, visited, {4.0, gp.best_observed()}, r1);
        for (double c : {2.0, 0.5}) {
            auto scaled = s;
            for (auto& smp : scaled)
                smp.k *= c;
            const GpHyper hs{h.length_scale, h.signal_var * c * c, h.noise_var * c * c};
            const GPModel gps = gp_fit(scaled, hs);
            Rng r2(round);
            CHECK(next_cell_bo(gps, g, visited, {4.0 * c, gps.best_observed()}, r2) == a);
        }
    }
}

TEST_CASE("random search is uniform and deterministic")
{
    const SurfaceGrid g = testing::flat_grid(10, 10, 0.002, 0.1);
    Rng a(31), b(31);
    CellSet visited;
    for (int i = 0; i < 20; ++i) {
        const Cell ca = next_cell_random(g, visited, a);
        CHECK(ca == next_cell_random(g, visited, b));
        visited.insert(ca);
    }

    CellSet all_but;
    for (const Cell c : g.valid_cells())
        all_but.insert(c);
    all_but.erase({3, 7});
    CHECK(next_cell_random(g, all_but, a) == Cell{3, 7});
    all_but.insert({3, 7});
    CHECK(testing::error_code_of([&] { next_cell_random(g, all_but, a); }) ==
          ErrorCode::Exhausted);

    std::vector<int> counts(100, 0);
    Rng r(8);
    for (int i = 0; i < 10000; ++i) {
        const Cell c = next_cell_random(g, {}, r);
        ++counts[c.v * 10 + c.u];
    }
    const double expect = 100.0, sd = std::sqrt(10000 * 0.01 * 0.99);
    double chi2 = 0;
    for (int n : counts) {
        CHECK(std::abs(n - expect) <= 3 * sd);
        chi2 += (n - expect) * (n - expect) / expect;
    }
    CHECK(chi2 < 99 + 3 * std::sqrt(2.0 * 99));
}

}
