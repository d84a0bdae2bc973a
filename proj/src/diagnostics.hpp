#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"

namespace dmrf::diag {

using numerics::Activation;

// Machine-readable result of one verification instrument. The threshold it
// was judged against is recorded alongside the headline metric.
struct DiagnosticReport {
    std::string name;
    bool passed = false;
    double metric = 0.0;
    double threshold = 0.0;
    std::string summary;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void write_csv(const std::string& path) const;
};

struct GradCheckConfig {
    int height = 8;
    int width = 8;
    int d = 8;
    int K = 3;
    int p = 1;
    int d_c = 0;
    Activation kind = Activation::Sigmoid;
    int n_cycles = 1;
    std::uint64_t seed = 0;
    double eps = 1e-5;        // central-difference step, 64-bit
    double tolerance = 1e-4;  // max relative error
};

// Central finite differences on every parameter entry of a random instance
// against the reverse-mode gradients. Runs entirely in 64-bit.
DiagnosticReport grad_check(const GradCheckConfig& cfg);

// Smallest |pre-activation| over all unrolled visits of the grad_check
// instance; used to keep relu checks away from the kink.
double grad_check_kink_margin(const GradCheckConfig& cfg);

struct EtaSigmaConfig {
    Activation kind = Activation::Sigmoid;
    int points = 10000;
    double z_min = -10.0;  // relu checks force z_min >= 0.01
    double z_max = 10.0;
    double fd_step = 3e-8;
    double tolerance = 1e-6;
    bool randomize = false;  // random z instead of an even grid
    std::uint64_t seed = 0;
};

// |eta'(sigma(z)) - z| with eta' taken by central finite difference of eta.
DiagnosticReport eta_sigma_check(const EtaSigmaConfig& cfg);

struct MapOptimalityConfig {
    Activation kind = Activation::Sigmoid;
    int trials = 200;
    int grid_points = 10000;
    double a_min = -5.0;
    double a_max = 5.0;
    std::uint64_t seed = 0;
    double tolerance = 1e-9;  // floating-point slack; the true margin is >= 0
};

// Compares a*h - eta(h) at h = sigma(a) against a dense grid maximum.
DiagnosticReport map_optimality_check(const MapOptimalityConfig& cfg);

struct PosteriorSimConfig {
    int trials = 1000;
    int d_small = 1;  // 1 or 2; grid search must stay tractable
    int K = 2;
    double scale = 0.1;        // magnitude of the random W, R, Q entries
    double zeta_weight = 1.0;  // 0 makes the approximation exact
    int grid_points = 2000;    // per axis, over (0.001, 0.999)
    std::uint64_t seed = 0;
    double corr_threshold = 0.9;
    int threads = 0;
};

// MAP of the full conditional (emission factor included) by dense grid search
// versus the closed-form approximation h = sigma(a). Rows are scatter pairs;
// the metric is the Pearson correlation, with the mean absolute deviation
// recorded in the summary.
DiagnosticReport posterior_approx_sim(const PosteriorSimConfig& cfg);

// Mean absolute deviation between the two MAPs; used for the zeta-weight
// monotonicity sweep.
double posterior_sim_deviation(const PosteriorSimConfig& cfg);

} // namespace dmrf::diag
