#ifndef LOADCAST_FORECASTER_HPP
#define LOADCAST_FORECASTER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/errors.hpp"
#include "loadcast/math.hpp"
#include "loadcast/metrics.hpp"
#include "loadcast/optimizer.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

enum class TrainMode { point, quantile };

inline const char* train_mode_name(TrainMode m) {
    return m == TrainMode::point ? "point" : "quantile";
}

// Per-channel z-score statistics fitted on the training split only. sd is
// clamped to 1 for constant channels so the stored value is always positive.
struct Normalization {
    std::vector<std::string> channels;
    std::vector<double> mean;
    std::vector<double> sd;
    double target_mean = 0.0;
    double target_sd = 1.0;
};

inline constexpr std::size_t kDefaultHidden = 24;
inline const std::vector<double> kDefaultQuantiles{0.1, 0.2, 0.3, 0.4, 0.5,
                                                   0.6, 0.7, 0.8, 0.9};

// Single-layer LSTM cell plus fully-connected head. The head maps the final
// hidden state to 48 outputs (point mode) or levels x 48 (quantile mode), in
// normalized target units.
struct LstmModel {
    TrainMode mode = TrainMode::point;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = kDefaultHidden;
    std::size_t output_dim = kSlotsPerDay;

    Matrix w_i, w_f, w_o, w_c; // H x F
    Matrix u_i, u_f, u_o, u_c; // H x H
    std::vector<double> b_i, b_f, b_o, b_c; // H
    Matrix head_w;             // O x H
    std::vector<double> head_b; // O

    Normalization norm;
    std::vector<double> quantile_levels; // empty in point mode
    double residual_sd = 0.0;            // validation residual sd, demand units
    std::uint64_t seed = 0;
    std::vector<std::array<double, 3>> training_log; // epoch, train loss, val loss
};

inline constexpr const char* kLstmCheckpointVersion = "loadcast-lstm-1";

// ---------------------------------------------------------------------------
// Cell equations
// ---------------------------------------------------------------------------

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepCache {
    std::vector<double> x;      // normalized input
    std::vector<double> i, f, o, g; // gate activations (g = candidate tanh)
    std::vector<double> c, h, tanh_c;
};

namespace lstm_detail {

//   i = sig(W_i x + U_i h + b_i)   f, o analogous
//   g = tanh(W_c x + U_c h + b_c)
//   c' = f . c + i . g,  h' = o . tanh(c')
inline void step(const LstmModel& m, const double* x, const double* h_prev,
                 const double* c_prev, StepCache& cache) {
    const std::size_t hdim = m.hidden_dim;
    cache.i.assign(m.b_i.begin(), m.b_i.end());
    cache.f.assign(m.b_f.begin(), m.b_f.end());
    cache.o.assign(m.b_o.begin(), m.b_o.end());
    cache.g.assign(m.b_c.begin(), m.b_c.end());
    gemv_add(m.w_i, x, cache.i.data());
    gemv_add(m.u_i, h_prev, cache.i.data());
    gemv_add(m.w_f, x, cache.f.data());
    gemv_add(m.u_f, h_prev, cache.f.data());
    gemv_add(m.w_o, x, cache.o.data());
    gemv_add(m.u_o, h_prev, cache.o.data());
    gemv_add(m.w_c, x, cache.g.data());
    gemv_add(m.u_c, h_prev, cache.g.data());
    cache.c.resize(hdim);
    cache.h.resize(hdim);
    cache.tanh_c.resize(hdim);
    for (std::size_t j = 0; j < hdim; ++j) {
        cache.i[j] = sigmoid(cache.i[j]);
        cache.f[j] = sigmoid(cache.f[j]);
        cache.o[j] = sigmoid(cache.o[j]);
        cache.g[j] = std::tanh(cache.g[j]);
        cache.c[j] = cache.f[j] * c_prev[j] + cache.i[j] * cache.g[j];
        cache.tanh_c[j] = std::tanh(cache.c[j]);
        cache.h[j] = cache.o[j] * cache.tanh_c[j];
    }
}

} // namespace lstm_detail

// Pure single-step form: returns (h_t, c_t).
inline std::pair<std::vector<double>, std::vector<double>> lstm_step(
    const LstmModel& m, const std::vector<double>& x, const std::vector<double>& h_prev,
    const std::vector<double>& c_prev) {
    if (x.size() != m.input_dim || h_prev.size() != m.hidden_dim ||
        c_prev.size() != m.hidden_dim) {
        throw ShapeMismatch("lstm_step dimension mismatch");
    }
    StepCache cache;
    lstm_detail::step(m, x.data(), h_prev.data(), c_prev.data(), cache);
    return {cache.h, cache.c};
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace lstm_detail {

inline void normalize_window(const LstmModel& m, const Matrix& lag, Matrix& out) {
    out.ensure(lag.rows, lag.cols);
    for (std::size_t t = 0; t < lag.rows; ++t) {
        const double* src = lag.row(t);
        double* dst = out.row(t);
        for (std::size_t c = 0; c < lag.cols; ++c) {
            dst[c] = (src[c] - m.norm.mean[c]) / m.norm.sd[c];
        }
    }
}

// Gate parameters stacked into single matrices (row blocks ordered i, f, o,
// g) so the unrolled passes run as a few large, cache-friendly loops instead
// of eight small ones per step.
struct StackedGates {
    Matrix w; // 4H x F
    Matrix u; // 4H x H
    std::vector<double> b; // 4H

    void assemble(const LstmModel& m) {
        const std::size_t hdim = m.hidden_dim;
        w = Matrix(4 * hdim, m.input_dim);
        u = Matrix(4 * hdim, hdim);
        b.resize(4 * hdim);
        const Matrix* ws[4] = {&m.w_i, &m.w_f, &m.w_o, &m.w_c};
        const Matrix* us[4] = {&m.u_i, &m.u_f, &m.u_o, &m.u_c};
        const std::vector<double>* bs[4] = {&m.b_i, &m.b_f, &m.b_o, &m.b_c};
        for (int gate = 0; gate < 4; ++gate) {
            for (std::size_t j = 0; j < hdim; ++j) {
                std::copy(ws[gate]->row(j), ws[gate]->row(j) + m.input_dim,
                          w.row(gate * hdim + j));
                std::copy(us[gate]->row(j), us[gate]->row(j) + hdim, u.row(gate * hdim + j));
                b[gate * hdim + j] = (*bs[gate])[j];
            }
        }
    }
};

// per-window activations of the unrolled pass, reused across windows
struct Workspace {
    Matrix x_norm;  // T x F
    Matrix gates;   // T x 4H, activated (i, f, o, g blocks)
    Matrix c;       // T x H
    Matrix tanh_c;  // T x H
    Matrix h;       // T x H
    Matrix dpre;    // T x 4H (backward)
};

// unrolled forward from h0 = c0 = 0; fills the workspace and returns the
// head output in normalized units
inline std::vector<double> run_forward(const LstmModel& m, const StackedGates& sg,
                                       Workspace& ws) {
    const std::size_t hdim = m.hidden_dim;
    const std::size_t t_len = ws.x_norm.rows;
    ws.gates.ensure(t_len, 4 * hdim);
    ws.c.ensure(t_len, hdim);
    ws.tanh_c.ensure(t_len, hdim);
    ws.h.ensure(t_len, hdim);

    // input contributions for every step at once: gates = x_norm * W^T + b
    for (std::size_t t = 0; t < t_len; ++t) {
        const double* x = ws.x_norm.row(t);
        double* g = ws.gates.row(t);
        for (std::size_t r = 0; r < 4 * hdim; ++r) {
            const double* wr = sg.w.row(r);
            double acc = sg.b[r];
            for (std::size_t cidx = 0; cidx < m.input_dim; ++cidx) acc += wr[cidx] * x[cidx];
            g[r] = acc;
        }
    }

    for (std::size_t t = 0; t < t_len; ++t) {
        double* g = ws.gates.row(t);
        if (t > 0) gemv_add(sg.u, ws.h.row(t - 1), g);
        const double* c_prev = t > 0 ? ws.c.row(t - 1) : nullptr;
        double* ct = ws.c.row(t);
        double* tct = ws.tanh_c.row(t);
        double* ht = ws.h.row(t);
        for (std::size_t j = 0; j < hdim; ++j) {
            const double gi = sigmoid(g[j]);
            const double gf = sigmoid(g[hdim + j]);
            const double go = sigmoid(g[2 * hdim + j]);
            const double gg = std::tanh(g[3 * hdim + j]);
            g[j] = gi;
            g[hdim + j] = gf;
            g[2 * hdim + j] = go;
            g[3 * hdim + j] = gg;
            ct[j] = gf * (c_prev ? c_prev[j] : 0.0) + gi * gg;
            tct[j] = std::tanh(ct[j]);
            ht[j] = go * tct[j];
        }
    }

    std::vector<double> out(m.head_b);
    gemv_add(m.head_w, ws.h.row(t_len - 1), out.data());
    return out;
}

inline std::vector<double> forward_normalized(const LstmModel& m, const Matrix& x_norm,
                                              Workspace& ws) {
    StackedGates sg;
    sg.assemble(m);
    ws.x_norm = x_norm;
    return run_forward(m, sg, ws);
}

} // namespace lstm_detail

// Full forward pass on a raw lag block: normalize with the stored statistics,
// unroll from h0 = c0 = 0, apply the head, return in demand units.
inline std::vector<double> forward(const LstmModel& m, const Matrix& lag_block) {
    if (lag_block.rows != kLagSteps || lag_block.cols != m.input_dim) {
        throw ShapeMismatch("forward: lag block must be " + std::to_string(kLagSteps) + " x " +
                            std::to_string(m.input_dim));
    }
    lstm_detail::Workspace ws;
    lstm_detail::normalize_window(m, lag_block, ws.x_norm);
    lstm_detail::StackedGates sg;
    sg.assemble(m);
    std::vector<double> out = lstm_detail::run_forward(m, sg, ws);
    for (double& v : out) v = v * m.norm.target_sd + m.norm.target_mean;
    return out;
}

// ---------------------------------------------------------------------------
// Gradients (backpropagation through time)
// ---------------------------------------------------------------------------

struct LstmGradients {
    Matrix w_i, w_f, w_o, w_c;
    Matrix u_i, u_f, u_o, u_c;
    std::vector<double> b_i, b_f, b_o, b_c;
    Matrix head_w;
    std::vector<double> head_b;

    explicit LstmGradients(const LstmModel& m)
        : w_i(m.hidden_dim, m.input_dim), w_f(m.hidden_dim, m.input_dim),
          w_o(m.hidden_dim, m.input_dim), w_c(m.hidden_dim, m.input_dim),
          u_i(m.hidden_dim, m.hidden_dim), u_f(m.hidden_dim, m.hidden_dim),
          u_o(m.hidden_dim, m.hidden_dim), u_c(m.hidden_dim, m.hidden_dim),
          b_i(m.hidden_dim, 0.0), b_f(m.hidden_dim, 0.0), b_o(m.hidden_dim, 0.0),
          b_c(m.hidden_dim, 0.0), head_w(m.output_dim, m.hidden_dim),
          head_b(m.output_dim, 0.0) {}
};

// canonical parameter order shared by Adam state and checkpoints
template <typename ModelT, typename ViewT>
inline std::vector<ViewT> lstm_param_views_impl(ModelT& m) {
    return {
        {m.w_i.a.data(), m.w_i.a.size()}, {m.w_f.a.data(), m.w_f.a.size()},
        {m.w_o.a.data(), m.w_o.a.size()}, {m.w_c.a.data(), m.w_c.a.size()},
        {m.u_i.a.data(), m.u_i.a.size()}, {m.u_f.a.data(), m.u_f.a.size()},
        {m.u_o.a.data(), m.u_o.a.size()}, {m.u_c.a.data(), m.u_c.a.size()},
        {m.b_i.data(), m.b_i.size()},     {m.b_f.data(), m.b_f.size()},
        {m.b_o.data(), m.b_o.size()},     {m.b_c.data(), m.b_c.size()},
        {m.head_w.a.data(), m.head_w.a.size()}, {m.head_b.data(), m.head_b.size()},
    };
}

inline std::vector<ParamView> param_views(LstmModel& m) {
    return lstm_param_views_impl<LstmModel, ParamView>(m);
}
inline std::vector<ParamView> grad_views(LstmGradients& g) {
    return {
        {g.w_i.a.data(), g.w_i.a.size()}, {g.w_f.a.data(), g.w_f.a.size()},
        {g.w_o.a.data(), g.w_o.a.size()}, {g.w_c.a.data(), g.w_c.a.size()},
        {g.u_i.a.data(), g.u_i.a.size()}, {g.u_f.a.data(), g.u_f.a.size()},
        {g.u_o.a.data(), g.u_o.a.size()}, {g.u_c.a.data(), g.u_c.a.size()},
        {g.b_i.data(), g.b_i.size()},     {g.b_f.data(), g.b_f.size()},
        {g.b_o.data(), g.b_o.size()},     {g.b_c.data(), g.b_c.size()},
        {g.head_w.a.data(), g.head_w.a.size()}, {g.head_b.data(), g.head_b.size()},
    };
}

namespace lstm_detail {

inline std::vector<double> normalized_target(const LstmModel& m,
                                             const std::vector<double>& target) {
    std::vector<double> out(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        out[i] = (target[i] - m.norm.target_mean) / m.norm.target_sd;
    }
    return out;
}

// loss and dL/d(out) for one sample, all in normalized units
inline double loss_and_grad(const LstmModel& m, const std::vector<double>& out,
                            const std::vector<double>& y_norm, std::vector<double>& dout) {
    dout.assign(out.size(), 0.0);
    if (m.mode == TrainMode::point) {
        const double n = static_cast<double>(out.size());
        double loss = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double e = out[k] - y_norm[k];
            loss += e * e;
            dout[k] = 2.0 * e / n;
        }
        return loss / n;
    }
    const std::size_t h = y_norm.size();
    const std::size_t nq = m.quantile_levels.size();
    const double n = static_cast<double>(nq * h);
    double loss = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
        const double rho = m.quantile_levels[q];
        for (std::size_t k = 0; k < h; ++k) {
            const double diff = y_norm[k] - out[q * h + k];
            loss += pinball_term(rho, diff);
            dout[q * h + k] = (diff > 0.0 ? -rho : 1.0 - rho) / n;
        }
    }
    return loss / n;
}

} // namespace lstm_detail

// Mean loss of the model over a set of windows, in normalized units (the
// quantity the training loop monitors).
inline double batch_loss(const LstmModel& m, const std::vector<SampleWindow>& windows) {
    if (windows.empty()) throw EmptyInput("empty batch");
    double total = 0.0;
    lstm_detail::Workspace ws;
    lstm_detail::StackedGates sg;
    sg.assemble(m);
    std::vector<double> dout;
    for (const auto& w : windows) {
        lstm_detail::normalize_window(m, w.lag, ws.x_norm);
        const auto out = lstm_detail::run_forward(m, sg, ws);
        const auto y = lstm_detail::normalized_target(m, w.target);
        total += lstm_detail::loss_and_grad(m, out, y, dout);
    }
    return total / static_cast<double>(windows.size());
}

// Exact reverse-mode gradients of the batch-mean loss through the head and
// the full unrolled recurrence. Returns the batch-mean loss via loss_out.
inline LstmGradients backward(const LstmModel& m, const std::vector<SampleWindow>& windows,
                              double* loss_out = nullptr) {
    if (windows.empty()) throw EmptyInput("empty batch");
    LstmGradients g(m);
    const std::size_t hdim = m.hidden_dim;
    double total_loss = 0.0;

    lstm_detail::Workspace ws;
    lstm_detail::StackedGates sg;
    sg.assemble(m);
    Matrix gw(4 * hdim, m.input_dim); // stacked weight gradients, i f o g blocks
    Matrix gu(4 * hdim, hdim);
    std::vector<double> gb(4 * hdim, 0.0);

    std::vector<double> dout, dh(hdim), dc(hdim), dh_prev(hdim);

    for (const auto& w : windows) {
        if (w.lag.rows == 0 || w.lag.cols != m.input_dim) {
            throw ShapeMismatch("backward: window channel mismatch");
        }
        lstm_detail::normalize_window(m, w.lag, ws.x_norm);
        const auto out = lstm_detail::run_forward(m, sg, ws);
        const auto y = lstm_detail::normalized_target(m, w.target);
        total_loss += lstm_detail::loss_and_grad(m, out, y, dout);

        const std::size_t t_len = ws.x_norm.rows;
        ger_add(g.head_w, dout.data(), ws.h.row(t_len - 1));
        for (std::size_t k = 0; k < dout.size(); ++k) g.head_b[k] += dout[k];

        std::fill(dh.begin(), dh.end(), 0.0);
        std::fill(dc.begin(), dc.end(), 0.0);
        gemv_t_add(m.head_w, dout.data(), dh.data());

        ws.dpre.ensure(t_len, 4 * hdim);
        for (std::size_t t = t_len; t-- > 0;) {
            const double* gates = ws.gates.row(t);
            const double* tct = ws.tanh_c.row(t);
            const double* c_prev = t > 0 ? ws.c.row(t - 1) : nullptr;
            double* dp = ws.dpre.row(t);
            for (std::size_t j = 0; j < hdim; ++j) {
                const double gi = gates[j];
                const double gf = gates[hdim + j];
                const double go = gates[2 * hdim + j];
                const double gg = gates[3 * hdim + j];
                const double d_o = dh[j] * tct[j];
                const double dcj = dc[j] + dh[j] * go * (1.0 - tct[j] * tct[j]);
                const double cp = c_prev ? c_prev[j] : 0.0;
                dp[j] = dcj * gg * gi * (1.0 - gi);
                dp[hdim + j] = dcj * cp * gf * (1.0 - gf);
                dp[2 * hdim + j] = d_o * go * (1.0 - go);
                dp[3 * hdim + j] = dcj * gi * (1.0 - gg * gg);
                dc[j] = dcj * gf;
                gb[j] += dp[j];
                gb[hdim + j] += dp[hdim + j];
                gb[2 * hdim + j] += dp[2 * hdim + j];
                gb[3 * hdim + j] += dp[3 * hdim + j];
            }
            std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
            gemv_t_add(sg.u, dp, dh_prev.data());
            dh = dh_prev;
        }

        // deferred weight accumulations: gw += dpre^T x, gu += dpre^T h_prev;
        // the stacked accumulators stay resident in cache across steps
        for (std::size_t t = 0; t < t_len; ++t) {
            const double* dp_row = ws.dpre.row(t);
            const double* x = ws.x_norm.row(t);
            const double* hp = t > 0 ? ws.h.row(t - 1) : nullptr;
            for (std::size_t r = 0; r < 4 * hdim; ++r) {
                const double dp = dp_row[r];
                double* gwr = gw.row(r);
                for (std::size_t cidx = 0; cidx < m.input_dim; ++cidx) {
                    gwr[cidx] += dp * x[cidx];
                }
                if (hp) {
                    double* gur = gu.row(r);
                    for (std::size_t j = 0; j < hdim; ++j) gur[j] += dp * hp[j];
                }
            }
        }
    }

    // unpack the stacked accumulators into per-gate gradients
    Matrix* gws[4] = {&g.w_i, &g.w_f, &g.w_o, &g.w_c};
    Matrix* gus[4] = {&g.u_i, &g.u_f, &g.u_o, &g.u_c};
    std::vector<double>* gbs[4] = {&g.b_i, &g.b_f, &g.b_o, &g.b_c};
    for (int gate = 0; gate < 4; ++gate) {
        for (std::size_t j = 0; j < hdim; ++j) {
            std::copy(gw.row(gate * hdim + j), gw.row(gate * hdim + j) + m.input_dim,
                      gws[gate]->row(j));
            std::copy(gu.row(gate * hdim + j), gu.row(gate * hdim + j) + hdim,
                      gus[gate]->row(j));
            (*gbs[gate])[j] = gb[gate * hdim + j];
        }
    }

    // batch mean
    const double inv = 1.0 / static_cast<double>(windows.size());
    LstmGradients* gp = &g;
    for (auto& view : grad_views(*gp)) {
        for (std::size_t i = 0; i < view.size; ++i) {
            view.data[i] *= inv;
            if (!std::isfinite(view.data[i])) {
                throw NonFiniteGradient("non-finite gradient encountered");
            }
        }
    }
    if (loss_out) *loss_out = total_loss * inv;
    return g;
}

// ---------------------------------------------------------------------------
// Initialization and training
// ---------------------------------------------------------------------------

struct TrainConfig {
    TrainMode mode = TrainMode::point;
    std::size_t hidden_dim = kDefaultHidden;
    std::size_t batch = 4;
    double lr = 1e-4;
    int patience = 10;
    int max_epochs = 500;
    std::uint64_t seed = 1;
    std::vector<double> quantiles = kDefaultQuantiles;
};

// Gate and head weights uniform in +/- sqrt(1/H); forget-gate bias starts at
// 1 so early training retains memory; draws happen in canonical parameter
// order so a seed pins the whole model.
inline LstmModel init_lstm(std::size_t input_dim, const TrainConfig& cfg) {
    LstmModel m;
    m.mode = cfg.mode;
    m.input_dim = input_dim;
    m.hidden_dim = cfg.hidden_dim;
    m.quantile_levels = cfg.mode == TrainMode::quantile ? cfg.quantiles : std::vector<double>{};
    m.output_dim = cfg.mode == TrainMode::quantile
                       ? m.quantile_levels.size() * kSlotsPerDay
                       : kSlotsPerDay;
    m.seed = cfg.seed;

    const std::size_t hdim = m.hidden_dim;
    m.w_i = Matrix(hdim, input_dim);
    m.w_f = Matrix(hdim, input_dim);
    m.w_o = Matrix(hdim, input_dim);
    m.w_c = Matrix(hdim, input_dim);
    m.u_i = Matrix(hdim, hdim);
    m.u_f = Matrix(hdim, hdim);
    m.u_o = Matrix(hdim, hdim);
    m.u_c = Matrix(hdim, hdim);
    m.b_i.assign(hdim, 0.0);
    m.b_f.assign(hdim, 1.0);
    m.b_o.assign(hdim, 0.0);
    m.b_c.assign(hdim, 0.0);
    m.head_w = Matrix(m.output_dim, hdim);
    m.head_b.assign(m.output_dim, 0.0);

    Rng rng(cfg.seed);
    const double bound = std::sqrt(1.0 / static_cast<double>(hdim));
    for (Matrix* w : {&m.w_i, &m.w_f, &m.w_o, &m.w_c, &m.u_i, &m.u_f, &m.u_o, &m.u_c,
                      &m.head_w}) {
        for (auto& v : w->a) v = rng.uniform(-bound, bound);
    }
    m.norm.mean.assign(input_dim, 0.0);
    m.norm.sd.assign(input_dim, 1.0);
    return m;
}

namespace lstm_detail {

inline Normalization fit_normalization(const std::vector<SampleWindow>& train,
                                       const std::vector<std::string>& channels) {
    Normalization n;
    n.channels = channels;
    const std::size_t f = train.front().lag.cols;
    n.mean.assign(f, 0.0);
    n.sd.assign(f, 0.0);
    double count = 0.0;
    for (const auto& w : train) {
        for (std::size_t t = 0; t < w.lag.rows; ++t) {
            const double* row = w.lag.row(t);
            for (std::size_t c = 0; c < f; ++c) n.mean[c] += row[c];
        }
        count += static_cast<double>(w.lag.rows);
    }
    for (auto& v : n.mean) v /= count;
    for (const auto& w : train) {
        for (std::size_t t = 0; t < w.lag.rows; ++t) {
            const double* row = w.lag.row(t);
            for (std::size_t c = 0; c < f; ++c) {
                const double d = row[c] - n.mean[c];
                n.sd[c] += d * d;
            }
        }
    }
    for (auto& v : n.sd) {
        v = std::sqrt(v / count);
        if (v < 1e-12) v = 1.0; // constant channel
    }

    double ymean = 0.0, ycount = 0.0;
    for (const auto& w : train) {
        for (double y : w.target) ymean += y;
        ycount += static_cast<double>(w.target.size());
    }
    ymean /= ycount;
    double yvar = 0.0;
    for (const auto& w : train) {
        for (double y : w.target) yvar += (y - ymean) * (y - ymean);
    }
    n.target_mean = ymean;
    n.target_sd = std::sqrt(yvar / ycount);
    if (n.target_sd < 1e-12) n.target_sd = 1.0;
    return n;
}

} // namespace lstm_detail

// MSE (point) or summed pinball (quantile) training with Adam, fixed
// chronological batch order, chronological 90/10 train/validation split and
// early stopping; returns the best-validation checkpoint with normalization
// statistics and the validation residual sd embedded.
inline LstmModel train_lstm(const std::vector<SampleWindow>& windows,
                            const std::vector<std::string>& channels, const TrainConfig& cfg) {
    if (windows.size() < 10) {
        throw TooFewWindows("training needs >= 10 windows, have " +
                            std::to_string(windows.size()));
    }
    if (cfg.mode == TrainMode::quantile) {
        // validated by pinball_loss as well; fail fast here
        if (cfg.quantiles.empty()) throw UsageError("quantile mode needs quantile levels");
    }
    const std::size_t n = windows.size();
    const std::size_t n_val = std::max<std::size_t>(1, n - n * 9 / 10);
    const std::size_t n_train = n - n_val;

    std::vector<SampleWindow> train(windows.begin(), windows.begin() + n_train);
    std::vector<SampleWindow> val(windows.begin() + n_train, windows.end());

    LstmModel model = init_lstm(windows.front().lag.cols, cfg);
    if (!channels.empty() && channels.size() != model.input_dim) {
        throw ShapeMismatch("channel name count does not match window channels");
    }
    model.norm = lstm_detail::fit_normalization(train, channels);

    AdamState adam;
    adam.lr = cfg.lr;

    LstmModel best = model;
    double best_val = batch_loss(model, val);
    int since_improvement = 0;

    std::vector<SampleWindow> batch;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch) {
            const std::size_t end = std::min(train.size(), start + cfg.batch);
            batch.assign(train.begin() + start, train.begin() + end);
            double loss = 0.0;
            LstmGradients grads = backward(model, batch, &loss);
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss("training diverged at epoch " + std::to_string(epoch));
            }
            adam_update(adam, param_views(model), grad_views(grads));
            epoch_loss += loss;
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        const double val_loss = batch_loss(model, val);
        if (!std::isfinite(val_loss)) {
            throw NonFiniteLoss("validation loss diverged at epoch " + std::to_string(epoch));
        }
        model.training_log.push_back({static_cast<double>(epoch), epoch_loss, val_loss});

        if (val_loss < best_val) {
            best_val = val_loss;
            best = model;
            since_improvement = 0;
        } else {
            ++since_improvement;
            if (since_improvement >= cfg.patience) break;
        }
    }
    best.training_log = model.training_log;

    // validation residual spread, in demand units, for point-mode intervals
    double ss = 0.0, cnt = 0.0;
    for (const auto& w : val) {
        const auto pred = forward(best, w.lag);
        const std::size_t h = w.target.size();
        const std::size_t median_off =
            best.mode == TrainMode::quantile
                ? (best.quantile_levels.size() / 2) * h
                : 0;
        for (std::size_t k = 0; k < h; ++k) {
            const double e = w.target[k] - pred[median_off + k];
            ss += e * e;
            cnt += 1.0;
        }
    }
    best.residual_sd = std::sqrt(ss / cnt);
    return best;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// Point forecast, or per-quantile rows sorted per slot to restore the
// non-crossing property (the point forecast is then the median row).
inline ForecastResult predict(const LstmModel& m, const Matrix& lag_block,
                              Date anchor_day = Date{}) {
    ForecastResult r;
    r.anchor_day = anchor_day;
    const std::vector<double> out = forward(m, lag_block);
    if (m.mode == TrainMode::point) {
        r.point = out;
        return r;
    }
    const std::size_t nq = m.quantile_levels.size();
    r.quantile_levels = m.quantile_levels;
    r.quantiles = Matrix(nq, kSlotsPerDay);
    std::vector<double> col(nq);
    for (std::size_t k = 0; k < kSlotsPerDay; ++k) {
        for (std::size_t q = 0; q < nq; ++q) col[q] = out[q * kSlotsPerDay + k];
        std::sort(col.begin(), col.end());
        for (std::size_t q = 0; q < nq; ++q) r.quantiles(q, k) = col[q];
    }
    const std::size_t median = nq / 2;
    r.point.resize(kSlotsPerDay);
    for (std::size_t k = 0; k < kSlotsPerDay; ++k) r.point[k] = r.quantiles(median, k);
    return r;
}

inline ForecastResult predict(const LstmModel& m, const SampleWindow& w) {
    return predict(m, w.lag, w.anchor_day);
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

inline nlohmann::json lstm_to_json(const LstmModel& m) {
    nlohmann::json j;
    j["version"] = kLstmCheckpointVersion;
    j["mode"] = train_mode_name(m.mode);
    j["dims"] = {{"input", m.input_dim}, {"hidden", m.hidden_dim}, {"output", m.output_dim}};
    j["seed"] = m.seed;
    j["residual_sd"] = m.residual_sd;
    j["quantiles"] = m.quantile_levels;

    nlohmann::json params;
    auto put = [&](const char* name, const double* data, std::size_t size) {
        params[name] = std::vector<double>(data, data + size);
    };
    put("w_i", m.w_i.a.data(), m.w_i.a.size());
    put("w_f", m.w_f.a.data(), m.w_f.a.size());
    put("w_o", m.w_o.a.data(), m.w_o.a.size());
    put("w_c", m.w_c.a.data(), m.w_c.a.size());
    put("u_i", m.u_i.a.data(), m.u_i.a.size());
    put("u_f", m.u_f.a.data(), m.u_f.a.size());
    put("u_o", m.u_o.a.data(), m.u_o.a.size());
    put("u_c", m.u_c.a.data(), m.u_c.a.size());
    put("b_i", m.b_i.data(), m.b_i.size());
    put("b_f", m.b_f.data(), m.b_f.size());
    put("b_o", m.b_o.data(), m.b_o.size());
    put("b_c", m.b_c.data(), m.b_c.size());
    put("head_w", m.head_w.a.data(), m.head_w.a.size());
    put("head_b", m.head_b.data(), m.head_b.size());
    j["parameters"] = std::move(params);

    j["normalization"] = {{"channels", m.norm.channels},
                          {"mean", m.norm.mean},
                          {"sd", m.norm.sd},
                          {"target_mean", m.norm.target_mean},
                          {"target_sd", m.norm.target_sd}};
    j["training_log"] = m.training_log;
    return j;
}

inline LstmModel lstm_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"] != kLstmCheckpointVersion) {
        throw CheckpointVersionMismatch("unsupported model checkpoint version");
    }
    LstmModel m;
    const std::string mode = j.at("mode").get<std::string>();
    m.mode = mode == "quantile" ? TrainMode::quantile : TrainMode::point;
    m.input_dim = j.at("dims").at("input").get<std::size_t>();
    m.hidden_dim = j.at("dims").at("hidden").get<std::size_t>();
    m.output_dim = j.at("dims").at("output").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.residual_sd = j.at("residual_sd").get<double>();
    m.quantile_levels = j.at("quantiles").get<std::vector<double>>();

    const auto& p = j.at("parameters");
    auto get_mat = [&](const char* name, std::size_t r, std::size_t c) {
        Matrix mat(r, c);
        mat.a = p.at(name).get<std::vector<double>>();
        if (mat.a.size() != r * c) {
            throw CheckpointVersionMismatch(std::string("parameter ") + name + " shape mismatch");
        }
        return mat;
    };
    auto get_vec = [&](const char* name, std::size_t nexp) {
        auto v = p.at(name).get<std::vector<double>>();
        if (v.size() != nexp) {
            throw CheckpointVersionMismatch(std::string("parameter ") + name + " shape mismatch");
        }
        return v;
    };
    m.w_i = get_mat("w_i", m.hidden_dim, m.input_dim);
    m.w_f = get_mat("w_f", m.hidden_dim, m.input_dim);
    m.w_o = get_mat("w_o", m.hidden_dim, m.input_dim);
    m.w_c = get_mat("w_c", m.hidden_dim, m.input_dim);
    m.u_i = get_mat("u_i", m.hidden_dim, m.hidden_dim);
    m.u_f = get_mat("u_f", m.hidden_dim, m.hidden_dim);
    m.u_o = get_mat("u_o", m.hidden_dim, m.hidden_dim);
    m.u_c = get_mat("u_c", m.hidden_dim, m.hidden_dim);
    m.b_i = get_vec("b_i", m.hidden_dim);
    m.b_f = get_vec("b_f", m.hidden_dim);
    m.b_o = get_vec("b_o", m.hidden_dim);
    m.b_c = get_vec("b_c", m.hidden_dim);
    m.head_w = get_mat("head_w", m.output_dim, m.hidden_dim);
    m.head_b = get_vec("head_b", m.output_dim);

    const auto& norm = j.at("normalization");
    m.norm.channels = norm.at("channels").get<std::vector<std::string>>();
    m.norm.mean = norm.at("mean").get<std::vector<double>>();
    m.norm.sd = norm.at("sd").get<std::vector<double>>();
    m.norm.target_mean = norm.at("target_mean").get<double>();
    m.norm.target_sd = norm.at("target_sd").get<double>();
    if (m.norm.mean.size() != m.input_dim || m.norm.sd.size() != m.input_dim) {
        throw CheckpointVersionMismatch("normalization shape mismatch");
    }
    for (double sd : m.norm.sd) {
        if (!(sd > 0.0)) throw CheckpointVersionMismatch("normalization sd must be positive");
    }
    m.training_log = j.at("training_log").get<std::vector<std::array<double, 3>>>();
    return m;
}

inline void save_lstm(const LstmModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << lstm_to_json(m).dump(2) << '\n';
}

inline LstmModel load_lstm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointVersionMismatch(path + ": unreadable checkpoint: " + e.what());
    }
    return lstm_from_json(j);
}

} // namespace loadcast

#endif
