#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "error.hpp"
#include "lattice.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace dmrf::model {

using lattice::GridSpec;
using lattice::NodeId;
using lattice::ZigzagDecomposition;
using numerics::Activation;
using numerics::Mat;
using numerics::RngStream;

// Variance clamps for the emission head; pixels live in [0,1].
inline constexpr double kVarFloor = 1e-4;
inline constexpr double kVarCeil = 25.0;

// Per-component slice of the emission projection: 1 weight logit, p mean
// entries, p log-variance entries.
inline int emission_cols(int K, int p) { return K * (1 + 2 * p); }

template <typename T>
struct ModelParams {
    int d = 0;    // hidden dimension
    int K = 0;    // mixture components
    int p = 0;    // pixel channels
    int d_c = 0;  // conditioning dimension, 0 when unconditioned
    Activation kind = Activation::Sigmoid;

    // When set, component variances are pinned to variance_value and the
    // log-variance block of Q is ignored (not learned).
    bool fixed_variance = false;
    T variance_value = T(1);

    Mat<T> W;  // d x d, state-state
    Mat<T> R;  // d x p, state-pixel
    Mat<T> Q;  // d x K(1+2p), emission projection
    Mat<T> S;  // d x d_c, state-conditioning; empty when d_c == 0

    bool conditioned() const { return d_c > 0; }
};

// W, R, S ~ U(+-1/sqrt(d)); Q ~ U(+-0.01) so initial emissions sit near the
// uniform-mixture, zero-mean, unit-variance point.
template <typename T>
ModelParams<T> init_params(int d, int K, int p, int d_c, Activation kind, RngStream& rng) {
    require(d >= 1 && K >= 1 && (p == 1 || p == 3) && d_c >= 0, Status::InvalidArg,
            "init_params: bad dimensions");
    ModelParams<T> m;
    m.d = d;
    m.K = K;
    m.p = p;
    m.d_c = d_c;
    m.kind = kind;
    m.W = Mat<T>(d, d);
    m.R = Mat<T>(d, p);
    m.Q = Mat<T>(d, emission_cols(K, p));
    if (d_c > 0) m.S = Mat<T>(d, d_c);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& w : m.W.data) w = static_cast<T>(rng.uniform(-scale, scale));
    for (auto& r : m.R.data) r = static_cast<T>(rng.uniform(-scale, scale));
    for (auto& q : m.Q.data) q = static_cast<T>(rng.uniform(-0.01, 0.01));
    for (auto& s : m.S.data) s = static_cast<T>(rng.uniform(-scale, scale));
    return m;
}

template <typename T>
struct EmissionParams {
    int K = 0;
    int p = 0;
    std::vector<T> weights;    // K, sums to 1
    std::vector<T> means;      // K x p
    std::vector<T> variances;  // K x p, in [var_floor, var_ceil]
};

// Per-site hidden states over a grid; one buffer per unrolled pass.
template <typename T>
struct HiddenField {
    GridSpec grid;
    int pass_index = 0;
    std::vector<T> states;  // node-major, d per node

    std::span<T> state(NodeId u, int d) { return {states.data() + static_cast<std::size_t>(u) * d, static_cast<std::size_t>(d)}; }
    std::span<const T> state(NodeId u, int d) const { return {states.data() + static_cast<std::size_t>(u) * d, static_cast<std::size_t>(d)}; }
};

// Everything backward() needs: the per-pass state snapshots plus copies of the
// pixel and conditioning fields the passes read.
template <typename T>
struct CapTape {
    GridSpec grid;
    std::vector<HiddenField<T>> passes;  // pass t states at index t-1
    std::vector<T> pixels;               // node-major, p per node
    std::vector<T> cond;                 // node-major, d_c per node; empty if unconditioned
};

template <typename T>
struct Grads {
    Mat<T> W, R, Q, S;

    explicit Grads(const ModelParams<T>& m)
        : W(m.d, m.d), R(m.d, m.p), Q(m.d, emission_cols(m.K, m.p)) {
        if (m.d_c > 0) S = Mat<T>(m.d, m.d_c);
    }

    void scale(T a) {
        for (auto& x : W.data) x *= a;
        for (auto& x : R.data) x *= a;
        for (auto& x : Q.data) x *= a;
        for (auto& x : S.data) x *= a;
    }

    void add(const Grads& o) {
        numerics::axpy(T(1), std::span<const T>(o.W.data), std::span<T>(W.data));
        numerics::axpy(T(1), std::span<const T>(o.R.data), std::span<T>(R.data));
        numerics::axpy(T(1), std::span<const T>(o.Q.data), std::span<T>(Q.data));
        if (!S.empty()) numerics::axpy(T(1), std::span<const T>(o.S.data), std::span<T>(S.data));
    }
};

// raw = h^T Q, split per component into (weight logit, mean, log variance).
// Weights through softmax, variances through exp with clamping.
template <typename T>
EmissionParams<T> emission_project(std::span<const T> h, const ModelParams<T>& m) {
    require(static_cast<int>(h.size()) == m.d, Status::Dimension, "emission_project: bad state size");
    EmissionParams<T> e;
    e.K = m.K;
    e.p = m.p;
    e.weights.resize(m.K);
    e.means.resize(static_cast<std::size_t>(m.K) * m.p);
    e.variances.resize(static_cast<std::size_t>(m.K) * m.p);

    std::vector<T> raw(m.Q.cols);
    numerics::matvec_t_acc(m.Q, h, std::span<T>(raw));

    const int stride = 1 + 2 * m.p;
    std::vector<T> logits(m.K);
    for (int c = 0; c < m.K; ++c) {
        logits[c] = raw[c * stride];
        for (int j = 0; j < m.p; ++j) {
            e.means[c * m.p + j] = raw[c * stride + 1 + j];
            if (m.fixed_variance) {
                e.variances[c * m.p + j] = m.variance_value;
            } else {
                const T v = std::exp(raw[c * stride + 1 + m.p + j]);
                e.variances[c * m.p + j] = std::clamp(v, static_cast<T>(kVarFloor), static_cast<T>(kVarCeil));
            }
        }
    }
    const T lse = numerics::logsumexp(std::span<const T>(logits));
    for (int c = 0; c < m.K; ++c) e.weights[c] = std::exp(logits[c] - lse);
    return e;
}

// mu~_c = mu_c + Sigma_c (.) (R^T sum_v h_v), the diagonal covariance acting
// element-wise. `neighbor_sum` is sum_v h_v.
template <typename T>
std::vector<T> shifted_means(const EmissionParams<T>& e, std::span<const T> neighbor_sum,
                             const Mat<T>& R) {
    require(static_cast<int>(neighbor_sum.size()) == R.rows && R.cols == e.p, Status::Dimension,
            "shifted_means: shape mismatch");
    std::vector<T> shift(e.p, T(0));
    numerics::matvec_t_acc(R, neighbor_sum, std::span<T>(shift));
    std::vector<T> out(e.means);
    for (int c = 0; c < e.K; ++c)
        for (int j = 0; j < e.p; ++j) out[c * e.p + j] += e.variances[c * e.p + j] * shift[j];
    return out;
}

// Log-density of the diagonal-covariance mixture at x, with component means
// already shifted.
template <typename T>
T gmm_logpdf(std::span<const T> x, const EmissionParams<T>& e, std::span<const T> means) {
    require(static_cast<int>(x.size()) == e.p && means.size() == e.means.size(), Status::Dimension,
            "gmm_logpdf: shape mismatch");
    constexpr double kLog2Pi = 1.8378770664093454836;
    std::vector<T> terms(e.K);
    for (int c = 0; c < e.K; ++c) {
        T acc = std::log(e.weights[c]);
        for (int j = 0; j < e.p; ++j) {
            const T var = e.variances[c * e.p + j];
            const T diff = x[j] - means[c * e.p + j];
            acc -= T(0.5) * (diff * diff / var + std::log(var) + static_cast<T>(kLog2Pi));
        }
        terms[c] = acc;
    }
    return numerics::logsumexp(std::span<const T>(terms));
}

template <typename T>
T gmm_logpdf(std::span<const T> x, const EmissionParams<T>& e) {
    return gmm_logpdf(x, e, std::span<const T>(e.means));
}

// Component draw from the weights, then a diagonal Gaussian draw, clamped to
// [0,1] for image output.
template <typename T>
std::vector<T> gmm_sample(const EmissionParams<T>& e, std::span<const T> means, RngStream& rng) {
    const double u = rng.next_double();
    int comp = e.K - 1;
    double cdf = 0.0;
    for (int c = 0; c < e.K; ++c) {
        cdf += static_cast<double>(e.weights[c]);
        if (u < cdf) {
            comp = c;
            break;
        }
    }
    std::vector<T> x(e.p);
    for (int j = 0; j < e.p; ++j) {
        const double draw = static_cast<double>(means[comp * e.p + j]) +
                            std::sqrt(static_cast<double>(e.variances[comp * e.p + j])) * rng.next_normal();
        x[j] = static_cast<T>(std::clamp(draw, 0.0, 1.0));
    }
    return x;
}

template <typename T>
std::vector<T> gmm_sample(const EmissionParams<T>& e, RngStream& rng) {
    return gmm_sample(e, std::span<const T>(e.means), rng);
}

// Site-wise MAP update: h~ = sigma( sum_v (W h_v + R x_v) + S c_u ), the last
// term absent when unconditioned.
template <typename T>
std::vector<T> map_update(const std::vector<std::span<const T>>& neighbor_states,
                          const std::vector<std::span<const T>>& neighbor_pixels,
                          std::span<const T> conditioning, const ModelParams<T>& m) {
    require(neighbor_states.size() == neighbor_pixels.size(), Status::Dimension,
            "map_update: neighbor lists misaligned");
    require((conditioning.empty() && m.d_c == 0) ||
                (static_cast<int>(conditioning.size()) == m.d_c),
            Status::Dimension, "map_update: conditioning size mismatch");
    std::vector<T> a(m.d, T(0));
    for (std::size_t i = 0; i < neighbor_states.size(); ++i) {
        numerics::matvec_acc(m.W, neighbor_states[i], std::span<T>(a));
        numerics::matvec_acc(m.R, neighbor_pixels[i], std::span<T>(a));
    }
    if (m.d_c > 0) numerics::matvec_acc(m.S, conditioning, std::span<T>(a));
    std::vector<T> h(m.d);
    numerics::sigma<T>(std::span<const T>(a), m.kind, std::span<T>(h));
    return h;
}

// Coupled acyclic passes. States start at zero; pass 1 walks the zigzag order,
// pass 2 the reverse, alternating, each visit reading the latest stored value
// of every neighbor. Snapshots of every pass are retained for backprop.
template <typename T>
CapTape<T> cap_infer(std::span<const T> pixels, std::span<const T> cond,
                     const ZigzagDecomposition& decomp, const ModelParams<T>& m, int n_cycles) {
    const int n = decomp.grid.node_count();
    require(static_cast<int>(pixels.size()) == n * m.p, Status::Dimension,
            "cap_infer: pixel field size mismatch");
    require((m.d_c == 0 && cond.empty()) || static_cast<int>(cond.size()) == n * m.d_c,
            Status::Dimension, "cap_infer: conditioning field size mismatch");
    require(n_cycles >= 1, Status::InvalidArg, "cap_infer: n_cycles must be >= 1");

    CapTape<T> tape;
    tape.grid = decomp.grid;
    tape.pixels.assign(pixels.begin(), pixels.end());
    tape.cond.assign(cond.begin(), cond.end());

    std::vector<T> live(static_cast<std::size_t>(n) * m.d, T(0));
    std::vector<T> a(m.d);
    const int n_passes = 2 * n_cycles;
    tape.passes.reserve(n_passes);

    for (int t = 1; t <= n_passes; ++t) {
        const bool forward = (t % 2 == 1);
        for (int i = 0; i < n; ++i) {
            const NodeId u = forward ? decomp.order[i] : decomp.order[n - 1 - i];
            std::fill(a.begin(), a.end(), T(0));
            for (NodeId v : decomp.forward_parents[u]) {
                std::span<const T> hv(live.data() + static_cast<std::size_t>(v) * m.d, m.d);
                numerics::matvec_acc(m.W, hv, std::span<T>(a));
                std::span<const T> xv(pixels.data() + static_cast<std::size_t>(v) * m.p, m.p);
                numerics::matvec_acc(m.R, xv, std::span<T>(a));
            }
            for (NodeId v : decomp.backward_parents[u]) {
                std::span<const T> hv(live.data() + static_cast<std::size_t>(v) * m.d, m.d);
                numerics::matvec_acc(m.W, hv, std::span<T>(a));
                std::span<const T> xv(pixels.data() + static_cast<std::size_t>(v) * m.p, m.p);
                numerics::matvec_acc(m.R, xv, std::span<T>(a));
            }
            if (m.d_c > 0) {
                std::span<const T> cu(cond.data() + static_cast<std::size_t>(u) * m.d_c, m.d_c);
                numerics::matvec_acc(m.S, cu, std::span<T>(a));
            }
            T* hu = live.data() + static_cast<std::size_t>(u) * m.d;
            for (int k = 0; k < m.d; ++k) hu[k] = numerics::sigma_scalar(a[k], m.kind);
        }
        HiddenField<T> snap;
        snap.grid = decomp.grid;
        snap.pass_index = t;
        snap.states = live;
        tape.passes.push_back(std::move(snap));
    }
    return tape;
}

// Mean negative log-likelihood per pixel under the shifted-mean mixture, using
// the final pass's states over the full neighborhood.
template <typename T>
T nll_loss(const CapTape<T>& tape, const ZigzagDecomposition& decomp, const ModelParams<T>& m) {
    require(!tape.passes.empty(), Status::InvalidArg, "nll_loss: empty tape");
    require(tape.grid == decomp.grid, Status::Dimension, "nll_loss: grid mismatch");
    const int n = tape.grid.node_count();
    const HiddenField<T>& fin = tape.passes.back();
    std::vector<T> nsum(m.d);
    T total = T(0);
    for (NodeId u = 0; u < n; ++u) {
        std::fill(nsum.begin(), nsum.end(), T(0));
        for (NodeId v : decomp.forward_parents[u])
            numerics::axpy(T(1), fin.state(v, m.d), std::span<T>(nsum));
        for (NodeId v : decomp.backward_parents[u])
            numerics::axpy(T(1), fin.state(v, m.d), std::span<T>(nsum));
        const EmissionParams<T> e = emission_project(fin.state(u, m.d), m);
        const std::vector<T> mu = shifted_means(e, std::span<const T>(nsum), m.R);
        std::span<const T> xu(tape.pixels.data() + static_cast<std::size_t>(u) * m.p, m.p);
        total -= gmm_logpdf(xu, e, std::span<const T>(mu));
    }
    return total / static_cast<T>(n);
}

// Exact reverse-mode gradients of nll_loss through every unrolled visit.
// `loss_scale` multiplies the loss (training uses it for batch averaging).
template <typename T>
Grads<T> backward(const CapTape<T>& tape, const ZigzagDecomposition& decomp,
                  const ModelParams<T>& m, T loss_scale = T(1)) {
    require(!tape.passes.empty(), Status::InvalidArg, "backward: empty tape");
    require(tape.grid == decomp.grid, Status::Dimension, "backward: grid mismatch");
    const int n = tape.grid.node_count();
    require(static_cast<int>(tape.pixels.size()) == n * m.p &&
                (static_cast<int>(tape.passes.back().states.size()) == n * m.d),
            Status::Dimension, "backward: tape/params mismatch");
    const int n_passes = static_cast<int>(tape.passes.size());
    const T w_site = loss_scale / static_cast<T>(n);

    Grads<T> g(m);
    // dh[t] aligns with the state buffer after pass t; index 0 is the zero
    // initialization, whose adjoint is discarded.
    std::vector<std::vector<T>> dh(n_passes + 1);
    for (auto& buf : dh) buf.assign(static_cast<std::size_t>(n) * m.d, T(0));

    // Pass t >= 1 only; the pass-0 buffer is the all-zero initialization and
    // contributes nothing to any gradient.
    auto state_at = [&](int t, NodeId u) -> std::span<const T> {
        return tape.passes[t - 1].state(u, m.d);
    };

    const HiddenField<T>& fin = tape.passes.back();
    const int stride = 1 + 2 * m.p;
    constexpr double kLog2Pi = 1.8378770664093454836;

    // Loss layer: emission projection, softmax, variance map and the
    // shifted-mean pathway through R.
    {
        std::vector<T> nsum(m.d), raw_grad(m.Q.cols), dr(m.p), dsu(m.d);
        std::vector<T> logterms(m.K), gamma(m.K);
        for (NodeId u = 0; u < n; ++u) {
            std::fill(nsum.begin(), nsum.end(), T(0));
            for (NodeId v : decomp.forward_parents[u])
                numerics::axpy(T(1), fin.state(v, m.d), std::span<T>(nsum));
            for (NodeId v : decomp.backward_parents[u])
                numerics::axpy(T(1), fin.state(v, m.d), std::span<T>(nsum));

            const EmissionParams<T> e = emission_project(fin.state(u, m.d), m);
            std::vector<T> shift(m.p, T(0));
            numerics::matvec_t_acc(m.R, std::span<const T>(nsum), std::span<T>(shift));
            std::span<const T> xu(tape.pixels.data() + static_cast<std::size_t>(u) * m.p, m.p);

            // Posterior responsibilities.
            for (int c = 0; c < m.K; ++c) {
                T acc = std::log(e.weights[c]);
                for (int j = 0; j < m.p; ++j) {
                    const T var = e.variances[c * m.p + j];
                    const T mu = e.means[c * m.p + j] + var * shift[j];
                    const T diff = xu[j] - mu;
                    acc -= T(0.5) * (diff * diff / var + std::log(var) + static_cast<T>(kLog2Pi));
                }
                logterms[c] = acc;
            }
            const T lse = numerics::logsumexp(std::span<const T>(logterms));
            for (int c = 0; c < m.K; ++c) gamma[c] = std::exp(logterms[c] - lse);

            std::fill(raw_grad.begin(), raw_grad.end(), T(0));
            std::fill(dr.begin(), dr.end(), T(0));
            for (int c = 0; c < m.K; ++c) {
                raw_grad[c * stride] = w_site * (e.weights[c] - gamma[c]);
                for (int j = 0; j < m.p; ++j) {
                    const T var = e.variances[c * m.p + j];
                    const T mu = e.means[c * m.p + j] + var * shift[j];
                    const T diff = xu[j] - mu;
                    raw_grad[c * stride + 1 + j] = -w_site * gamma[c] * diff / var;
                    dr[j] -= w_site * gamma[c] * diff;
                    if (!m.fixed_variance) {
                        // d/d(log var) through the normalizer, the quadratic,
                        // and the shift mu~ = mu + var * r; dead when the
                        // variance sits on a clamp bound.
                        const T dvar = gamma[c] * (diff * diff / (T(2) * var * var) - T(1) / (T(2) * var) +
                                                   diff / var * shift[j]);
                        const bool clamped = (var <= static_cast<T>(kVarFloor) || var >= static_cast<T>(kVarCeil));
                        raw_grad[c * stride + 1 + m.p + j] = clamped ? T(0) : -w_site * dvar * var;
                    }
                }
            }

            // Q and the state that fed the projection.
            numerics::outer_acc(g.Q, fin.state(u, m.d), std::span<const T>(raw_grad));
            std::span<T> dhu(dh[n_passes].data() + static_cast<std::size_t>(u) * m.d, m.d);
            numerics::matvec_acc(m.Q, std::span<const T>(raw_grad), dhu);

            // R through the shift, and the neighbor-sum pathway.
            numerics::outer_acc(g.R, std::span<const T>(nsum), std::span<const T>(dr));
            std::fill(dsu.begin(), dsu.end(), T(0));
            numerics::matvec_acc(m.R, std::span<const T>(dr), std::span<T>(dsu));
            for (NodeId v : decomp.forward_parents[u]) {
                std::span<T> dhv(dh[n_passes].data() + static_cast<std::size_t>(v) * m.d, m.d);
                numerics::axpy(T(1), std::span<const T>(dsu), dhv);
            }
            for (NodeId v : decomp.backward_parents[u]) {
                std::span<T> dhv(dh[n_passes].data() + static_cast<std::size_t>(v) * m.d, m.d);
                numerics::axpy(T(1), std::span<const T>(dsu), dhv);
            }
        }
    }

    // Unrolled passes, newest first. Within a pass, nodes unwind in reverse
    // visit order so intra-pass reads settle before their producer.
    std::vector<T> da(m.d);
    for (int t = n_passes; t >= 1; --t) {
        const bool forward = (t % 2 == 1);
        for (int i = n - 1; i >= 0; --i) {
            const NodeId u = forward ? decomp.order[i] : decomp.order[n - 1 - i];
            std::span<const T> hu = state_at(t, u);
            const T* dhu = dh[t].data() + static_cast<std::size_t>(u) * m.d;
            for (int k = 0; k < m.d; ++k)
                da[k] = dhu[k] * numerics::sigma_deriv_from_value(hu[k], m.kind);

            const auto& fresh = forward ? decomp.forward_parents[u] : decomp.backward_parents[u];
            const auto& stale = forward ? decomp.backward_parents[u] : decomp.forward_parents[u];
            for (NodeId v : fresh) {
                numerics::outer_acc(g.W, std::span<const T>(da), state_at(t, v));
                std::span<T> dhv(dh[t].data() + static_cast<std::size_t>(v) * m.d, m.d);
                numerics::matvec_t_acc(m.W, std::span<const T>(da), dhv);
            }
            for (NodeId v : stale) {
                if (t - 1 >= 1) {
                    numerics::outer_acc(g.W, std::span<const T>(da), state_at(t - 1, v));
                    std::span<T> dhv(dh[t - 1].data() + static_cast<std::size_t>(v) * m.d, m.d);
                    numerics::matvec_t_acc(m.W, std::span<const T>(da), dhv);
                }
                // Pass-0 states are zero: no W gradient, no adjoint to push.
            }
            for (NodeId v : decomp.forward_parents[u]) {
                std::span<const T> xv(tape.pixels.data() + static_cast<std::size_t>(v) * m.p, m.p);
                numerics::outer_acc(g.R, std::span<const T>(da), xv);
            }
            for (NodeId v : decomp.backward_parents[u]) {
                std::span<const T> xv(tape.pixels.data() + static_cast<std::size_t>(v) * m.p, m.p);
                numerics::outer_acc(g.R, std::span<const T>(da), xv);
            }
            if (m.d_c > 0) {
                std::span<const T> cu(tape.cond.data() + static_cast<std::size_t>(u) * m.d_c, m.d_c);
                numerics::outer_acc(g.S, std::span<const T>(da), cu);
            }
        }
    }
    return g;
}

} // namespace dmrf::model
