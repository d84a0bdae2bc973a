#include "diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "threading.hpp"

namespace dmrf::diag {

using lattice::GridSpec;
using lattice::NodeId;
using lattice::ZigzagDecomposition;
using model::CapTape;
using model::ModelParams;
using numerics::RngStream;

void DiagnosticReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Status::Io, "cannot open " + path + " for writing");
    out << "# " << name << " metric=" << metric << " threshold=" << threshold
        << " passed=" << (passed ? 1 : 0) << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
        out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    char buf[32];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.12g", row[i]);
            out << buf << (i + 1 < row.size() ? "," : "\n");
        }
    }
    require(out.good(), Status::Io, "short write to " + path);
}

namespace {

struct GradCheckInstance {
    ModelParams<double> params;
    ZigzagDecomposition decomp;
    std::vector<double> pixels;
    std::vector<double> cond;
};

GradCheckInstance make_instance(const GradCheckConfig& cfg) {
    GradCheckInstance inst;
    RngStream rng(cfg.seed);
    RngStream init_rng = rng.split(1);
    inst.params = model::init_params<double>(cfg.d, cfg.K, cfg.p, cfg.d_c, cfg.kind, init_rng);
    const GridSpec grid(cfg.height, cfg.width);
    inst.decomp = lattice::decompose(grid, lattice::build_zigzag_order(grid));
    RngStream data_rng = rng.split(2);
    inst.pixels.resize(static_cast<std::size_t>(grid.node_count()) * cfg.p);
    for (auto& v : inst.pixels) v = data_rng.next_double();
    if (cfg.d_c > 0) {
        inst.cond.resize(static_cast<std::size_t>(grid.node_count()) * cfg.d_c);
        for (auto& v : inst.cond) v = data_rng.next_double();
    }
    return inst;
}

double instance_loss(const GradCheckInstance& inst, const ModelParams<double>& params,
                     int n_cycles) {
    const CapTape<double> tape =
        model::cap_infer<double>(std::span<const double>(inst.pixels),
                                 std::span<const double>(inst.cond), inst.decomp, params, n_cycles);
    return model::nll_loss(tape, inst.decomp, params);
}

} // namespace

DiagnosticReport grad_check(const GradCheckConfig& cfg) {
    GradCheckInstance inst = make_instance(cfg);
    const CapTape<double> tape =
        model::cap_infer<double>(std::span<const double>(inst.pixels),
                                 std::span<const double>(inst.cond), inst.decomp, inst.params,
                                 cfg.n_cycles);
    const model::Grads<double> analytic = model::backward(tape, inst.decomp, inst.params);

    DiagnosticReport rep;
    rep.name = std::string("grad_check_") + numerics::activation_name(cfg.kind) +
               (cfg.d_c > 0 ? "_conditioned" : "_unconditioned");
    rep.threshold = cfg.tolerance;
    rep.columns = {"param_block", "index", "analytic", "numeric", "rel_error"};

    double max_rel = 0.0;
    auto check_block = [&](int block_id, std::vector<double>& theta,
                           const std::vector<double>& grad) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + cfg.eps;
            const double up = instance_loss(inst, inst.params, cfg.n_cycles);
            theta[i] = saved - cfg.eps;
            const double down = instance_loss(inst, inst.params, cfg.n_cycles);
            theta[i] = saved;
            const double numeric = (up - down) / (2.0 * cfg.eps);
            const double denom = std::max({1.0, std::abs(numeric), std::abs(grad[i])});
            const double rel = std::abs(numeric - grad[i]) / denom;
            max_rel = std::max(max_rel, rel);
            rep.rows.push_back({static_cast<double>(block_id), static_cast<double>(i), grad[i],
                                numeric, rel});
        }
    };
    check_block(0, inst.params.W.data, analytic.W.data);
    check_block(1, inst.params.R.data, analytic.R.data);
    check_block(2, inst.params.Q.data, analytic.Q.data);
    if (cfg.d_c > 0) check_block(3, inst.params.S.data, analytic.S.data);

    rep.metric = max_rel;
    rep.passed = max_rel < cfg.tolerance;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: max relative error %.3e over %zu entries (tol %.1e)",
                  rep.name.c_str(), max_rel, rep.rows.size(), cfg.tolerance);
    rep.summary = buf;
    return rep;
}

double grad_check_kink_margin(const GradCheckConfig& cfg) {
    GradCheckInstance inst = make_instance(cfg);
    const CapTape<double> tape =
        model::cap_infer<double>(std::span<const double>(inst.pixels),
                                 std::span<const double>(inst.cond), inst.decomp, inst.params,
                                 cfg.n_cycles);
    const auto& m = inst.params;
    const auto& decomp = inst.decomp;
    const int n = decomp.grid.node_count();
    const int n_passes = static_cast<int>(tape.passes.size());
    double margin = std::numeric_limits<double>::infinity();
    std::vector<double> a(m.d);
    for (int t = 1; t <= n_passes; ++t) {
        const bool forward = (t % 2 == 1);
        for (NodeId u = 0; u < n; ++u) {
            std::fill(a.begin(), a.end(), 0.0);
            const auto& fresh = forward ? decomp.forward_parents[u] : decomp.backward_parents[u];
            const auto& stale = forward ? decomp.backward_parents[u] : decomp.forward_parents[u];
            for (NodeId v : fresh)
                numerics::matvec_acc(m.W, tape.passes[t - 1].state(v, m.d), std::span<double>(a));
            for (NodeId v : stale)
                if (t >= 2)
                    numerics::matvec_acc(m.W, tape.passes[t - 2].state(v, m.d),
                                         std::span<double>(a));
            for (NodeId v : decomp.forward_parents[u])
                numerics::matvec_acc(
                    m.R,
                    std::span<const double>(tape.pixels.data() + static_cast<std::size_t>(v) * m.p,
                                            static_cast<std::size_t>(m.p)),
                    std::span<double>(a));
            for (NodeId v : decomp.backward_parents[u])
                numerics::matvec_acc(
                    m.R,
                    std::span<const double>(tape.pixels.data() + static_cast<std::size_t>(v) * m.p,
                                            static_cast<std::size_t>(m.p)),
                    std::span<double>(a));
            if (m.d_c > 0)
                numerics::matvec_acc(
                    m.S,
                    std::span<const double>(tape.cond.data() + static_cast<std::size_t>(u) * m.d_c,
                                            static_cast<std::size_t>(m.d_c)),
                    std::span<double>(a));
            for (int k = 0; k < m.d; ++k) margin = std::min(margin, std::abs(a[k]));
        }
    }
    return margin;
}

DiagnosticReport eta_sigma_check(const EtaSigmaConfig& cfg) {
    require(cfg.points >= 2, Status::InvalidArg, "eta_sigma_check: need at least 2 points");
    double z_min = cfg.z_min;
    if (cfg.kind == Activation::Relu) z_min = std::max(z_min, 0.01);

    DiagnosticReport rep;
    rep.name = std::string("eta_sigma_check_") + numerics::activation_name(cfg.kind);
    rep.threshold = cfg.tolerance;
    rep.columns = {"z", "eta_prime_fd", "deviation"};

    RngStream rng(cfg.seed);
    double max_dev = 0.0;
    for (int i = 0; i < cfg.points; ++i) {
        const double z = cfg.randomize
                             ? rng.uniform(z_min, cfg.z_max)
                             : z_min + (cfg.z_max - z_min) * i / (cfg.points - 1);
        const double h = numerics::sigma_scalar(z, cfg.kind);
        const double step = cfg.fd_step;
        const double up = numerics::eta_scalar(h + step, cfg.kind);
        const double down = numerics::eta_scalar(h - step, cfg.kind);
        const double deriv = (up - down) / (2.0 * step);
        const double dev = std::abs(deriv - z);
        max_dev = std::max(max_dev, dev);
        rep.rows.push_back({z, deriv, dev});
    }
    rep.metric = max_dev;
    rep.passed = max_dev < cfg.tolerance;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: sup |eta'(sigma(z)) - z| = %.3e over %d points (tol %.1e)",
                  rep.name.c_str(), max_dev, cfg.points, cfg.tolerance);
    rep.summary = buf;
    return rep;
}

DiagnosticReport map_optimality_check(const MapOptimalityConfig& cfg) {
    require(cfg.trials >= 1 && cfg.grid_points >= 10, Status::InvalidArg,
            "map_optimality_check: bad configuration");
    DiagnosticReport rep;
    rep.name = std::string("map_optimality_") + numerics::activation_name(cfg.kind);
    rep.threshold = -cfg.tolerance;
    rep.columns = {"a", "h_map", "objective_at_map", "grid_best", "margin"};

    RngStream rng(cfg.seed);
    auto objective = [&](double a, double h) {
        return a * h - numerics::eta_scalar(h, cfg.kind);
    };
    double worst = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < cfg.trials; ++trial) {
        const double a = rng.uniform(cfg.a_min, cfg.a_max);
        const double h_map = numerics::sigma_scalar(a, cfg.kind);
        // Relu eta is defined at 0; the sigmoid grid keeps clear of the
        // boundary where eta's derivative diverges.
        const double lo = cfg.kind == Activation::Sigmoid ? 0.001 : 0.0;
        const double hi = cfg.kind == Activation::Sigmoid ? 0.999 : std::max(10.0, 2.0 * std::abs(a));
        double best = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < cfg.grid_points; ++i) {
            const double h = lo + (hi - lo) * i / (cfg.grid_points - 1);
            best = std::max(best, objective(a, h));
        }
        const double at_map = objective(a, h_map);
        const double margin = at_map - best;
        worst = std::min(worst, margin);
        rep.rows.push_back({a, h_map, at_map, best, margin});
    }
    rep.metric = worst;
    rep.passed = worst >= -cfg.tolerance;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%s: worst margin %.3e over %d trials, %d grid points (slack %.1e)",
                  rep.name.c_str(), worst, cfg.trials, cfg.grid_points, cfg.tolerance);
    rep.summary = buf;
    return rep;
}

namespace {

struct PosteriorTrial {
    double h_approx = 0.0;
    double h_full = 0.0;
};

// One random small-dimension factor setting; d in {1,2}.
PosteriorTrial run_posterior_trial(const PosteriorSimConfig& cfg, RngStream rng) {
    const int d = cfg.d_small;
    ModelParams<double> m;
    m.d = d;
    m.K = cfg.K;
    m.p = 1;
    m.d_c = 0;
    m.kind = Activation::Sigmoid;
    m.W = numerics::Mat<double>(d, d);
    m.R = numerics::Mat<double>(d, 1);
    m.Q = numerics::Mat<double>(d, model::emission_cols(cfg.K, 1));
    for (auto& w : m.W.data) w = rng.uniform(-cfg.scale, cfg.scale);
    for (auto& r : m.R.data) r = rng.uniform(-cfg.scale, cfg.scale);
    for (auto& q : m.Q.data) q = rng.uniform(-cfg.scale, cfg.scale);

    // Four neighbors on the interior of the state domain, pixels in [0,1].
    std::vector<double> a(d, 0.0);
    for (int v = 0; v < 4; ++v) {
        std::vector<double> hv(d);
        for (auto& x : hv) x = rng.uniform(0.05, 0.95);
        numerics::matvec_acc(m.W, std::span<const double>(hv), std::span<double>(a));
        const double xv = rng.next_double();
        numerics::matvec_acc(m.R, std::span<const double>(&xv, 1), std::span<double>(a));
    }
    const double x_u = rng.next_double();

    auto full_objective = [&](std::span<const double> h) {
        double val = 0.0;
        for (int k = 0; k < d; ++k)
            val += a[k] * h[k] - numerics::eta_scalar(h[k], Activation::Sigmoid);
        if (cfg.zeta_weight != 0.0) {
            const model::EmissionParams<double> e = model::emission_project(h, m);
            val += cfg.zeta_weight * model::gmm_logpdf(std::span<const double>(&x_u, 1), e);
        }
        return val;
    };

    PosteriorTrial out;
    out.h_approx = numerics::sigma_scalar(a[0], Activation::Sigmoid);

    const double lo = 0.001, hi = 0.999;
    if (d == 1) {
        double best = -std::numeric_limits<double>::infinity(), best_h = lo;
        for (int i = 0; i < cfg.grid_points; ++i) {
            const double h = lo + (hi - lo) * i / (cfg.grid_points - 1);
            const double val = full_objective(std::span<const double>(&h, 1));
            if (val > best) {
                best = val;
                best_h = h;
            }
        }
        out.h_full = best_h;
    } else {
        double best = -std::numeric_limits<double>::infinity();
        std::array<double, 2> best_h{lo, lo};
        std::array<double, 2> h{};
        for (int i = 0; i < cfg.grid_points; ++i) {
            h[0] = lo + (hi - lo) * i / (cfg.grid_points - 1);
            for (int j = 0; j < cfg.grid_points; ++j) {
                h[1] = lo + (hi - lo) * j / (cfg.grid_points - 1);
                const double val = full_objective(std::span<const double>(h.data(), 2));
                if (val > best) {
                    best = val;
                    best_h = {h[0], h[1]};
                }
            }
        }
        out.h_full = best_h[0];  // first coordinate pair for the scatter
    }
    return out;
}

} // namespace

DiagnosticReport posterior_approx_sim(const PosteriorSimConfig& cfg) {
    require(cfg.d_small == 1 || cfg.d_small == 2, Status::InvalidArg,
            "posterior_approx_sim: d_small must be 1 or 2");
    require(cfg.trials >= 2, Status::InvalidArg, "posterior_approx_sim: need at least 2 trials");

    std::vector<PosteriorTrial> trials(cfg.trials);
    RngStream base(cfg.seed);
    parallel_for(cfg.trials, resolve_threads(cfg.threads), [&](int i) {
        trials[i] = run_posterior_trial(cfg, base.split(static_cast<std::uint64_t>(i) + 1));
    });

    double mean_a = 0.0, mean_f = 0.0;
    for (const auto& t : trials) {
        mean_a += t.h_approx;
        mean_f += t.h_full;
    }
    mean_a /= cfg.trials;
    mean_f /= cfg.trials;
    double cov = 0.0, var_a = 0.0, var_f = 0.0, mad = 0.0;
    for (const auto& t : trials) {
        const double da = t.h_approx - mean_a;
        const double df = t.h_full - mean_f;
        cov += da * df;
        var_a += da * da;
        var_f += df * df;
        mad += std::abs(t.h_approx - t.h_full);
    }
    mad /= cfg.trials;
    const double denom = std::sqrt(var_a * var_f);
    const double corr = denom > 0.0 ? cov / denom : 1.0;

    DiagnosticReport rep;
    rep.name = "posterior_approx_sim";
    rep.threshold = cfg.corr_threshold;
    rep.metric = corr;
    rep.passed = corr >= cfg.corr_threshold;
    rep.columns = {"h_approx", "h_full"};
    for (const auto& t : trials) rep.rows.push_back({t.h_approx, t.h_full});
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "posterior_approx_sim: corr %.6f, mean |dev| %.3e over %d trials "
                  "(zeta %.2f, scale %.2f, threshold %.2f)",
                  corr, mad, cfg.trials, cfg.zeta_weight, cfg.scale, cfg.corr_threshold);
    rep.summary = buf;
    return rep;
}

double posterior_sim_deviation(const PosteriorSimConfig& cfg) {
    std::vector<PosteriorTrial> trials(cfg.trials);
    RngStream base(cfg.seed);
    parallel_for(cfg.trials, resolve_threads(cfg.threads), [&](int i) {
        trials[i] = run_posterior_trial(cfg, base.split(static_cast<std::uint64_t>(i) + 1));
    });
    double mad = 0.0;
    for (const auto& t : trials) mad += std::abs(t.h_approx - t.h_full);
    return mad / cfg.trials;
}

} // namespace dmrf::diag
