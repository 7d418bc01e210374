#ifndef LOADCAST_AUTOENCODER_HPP
#define LOADCAST_AUTOENCODER_HPP

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/errors.hpp"
#include "loadcast/math.hpp"
#include "loadcast/optimizer.hpp"

namespace loadcast {

// 1-d convolution layer along the time axis: stride 1, zero same-padding,
// weights laid out [out_ch][in_ch][kernel].
struct ConvLayer {
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::size_t kernel = 3;
    std::vector<double> w;
    std::vector<double> b;

    double& wat(std::size_t o, std::size_t i, std::size_t k) {
        return w[(o * in_ch + i) * kernel + k];
    }
    double wat(std::size_t o, std::size_t i, std::size_t k) const {
        return w[(o * in_ch + i) * kernel + k];
    }
};

// Mirrored encoder/decoder over a channel plan such as 100 -> 16 -> 1. The
// ramp nonlinearity follows every layer except the bottleneck and the final
// reconstruction layer, which stay linear.
struct AutoencoderModel {
    std::vector<std::size_t> channel_plan; // encoder plan; decoder is the mirror
    std::size_t kernel_width = 3;
    std::vector<ConvLayer> encoder;
    std::vector<ConvLayer> decoder;
    std::uint64_t seed = 0;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double val_loss = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr const char* kAeCheckpointVersion = "loadcast-ae-1";

namespace ae_detail {

inline ConvLayer make_layer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng) {
    ConvLayer l;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.w.resize(out_ch * in_ch * kernel);
    l.b.assign(out_ch, 0.0);
    const double fan_in = static_cast<double>(in_ch * kernel);
    const double fan_out = static_cast<double>(out_ch * kernel);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : l.w) x = rng.uniform(-bound, bound);
    return l;
}

// index into a sequence with replicate (edge) padding
inline long clamp_index(long t, long t_len) { return std::max(0L, std::min(t, t_len - 1)); }

// channel-major sequences: rows = channels, cols = time. Same-padding with
// edge replication, which keeps constant series constant across the borders.
inline void conv_forward(const ConvLayer& l, const Matrix& in, Matrix& out) {
    const long t_len = static_cast<long>(in.cols);
    const long pad = static_cast<long>(l.kernel - 1) / 2;
    out = Matrix(l.out_ch, in.cols);
    for (std::size_t o = 0; o < l.out_ch; ++o) {
        double* orow = out.row(o);
        for (long t = 0; t < t_len; ++t) orow[t] = l.b[o];
        for (std::size_t i = 0; i < l.in_ch; ++i) {
            const double* irow = in.row(i);
            for (std::size_t k = 0; k < l.kernel; ++k) {
                const double wv = l.wat(o, i, k);
                if (wv == 0.0) continue;
                const long shift = static_cast<long>(k) - pad;
                // interior: no clamping needed
                const long t0 = std::max(0L, -shift);
                const long t1 = std::min(t_len, t_len - shift);
                for (long t = t0; t < t1; ++t) orow[t] += wv * irow[t + shift];
                for (long t = 0; t < t0; ++t) orow[t] += wv * irow[0];
                for (long t = t1; t < t_len; ++t) orow[t] += wv * irow[t_len - 1];
            }
        }
    }
}

inline void relu_inplace(Matrix& m) {
    for (auto& v : m.a) v = v > 0.0 ? v : 0.0;
}

struct LayerGrad {
    std::vector<double> w;
    std::vector<double> b;
};

// delta is dL/d(pre-activation output) of this layer; returns dL/d(input)
inline Matrix conv_backward(const ConvLayer& l, const Matrix& in, const Matrix& delta,
                            LayerGrad& grad) {
    const long t_len = static_cast<long>(in.cols);
    const long pad = static_cast<long>(l.kernel - 1) / 2;
    grad.w.assign(l.w.size(), 0.0);
    grad.b.assign(l.b.size(), 0.0);
    Matrix din(l.in_ch, in.cols);
    for (std::size_t o = 0; o < l.out_ch; ++o) {
        const double* drow = delta.row(o);
        for (long t = 0; t < t_len; ++t) grad.b[o] += drow[t];
        for (std::size_t i = 0; i < l.in_ch; ++i) {
            const double* irow = in.row(i);
            double* dirow = din.row(i);
            for (std::size_t k = 0; k < l.kernel; ++k) {
                const long shift = static_cast<long>(k) - pad;
                double gw = 0.0;
                const double wv = l.wat(o, i, k);
                for (long t = 0; t < t_len; ++t) {
                    const long src = clamp_index(t + shift, t_len);
                    gw += drow[t] * irow[src];
                    dirow[src] += wv * drow[t];
                }
                grad.w[(o * l.in_ch + i) * l.kernel + k] += gw;
            }
        }
    }
    return din;
}

struct ForwardCache {
    std::vector<Matrix> inputs; // input to each layer, encoder then decoder
    std::vector<Matrix> pres;   // pre-activation output of each layer
    Matrix output;              // final reconstruction (channels x time)
};

inline bool layer_has_activation(const AutoencoderModel& m, std::size_t idx) {
    const std::size_t n_enc = m.encoder.size();
    if (idx < n_enc) return idx + 1 < n_enc;                  // bottleneck stays linear
    return (idx - n_enc) + 1 < m.decoder.size();              // final output stays linear
}

inline void run_forward(const AutoencoderModel& m, const Matrix& input, ForwardCache& cache,
                        std::size_t stop_after = SIZE_MAX) {
    cache.inputs.clear();
    cache.pres.clear();
    Matrix cur = input;
    const std::size_t n_layers = m.encoder.size() + m.decoder.size();
    const std::size_t upto = std::min(stop_after, n_layers);
    for (std::size_t idx = 0; idx < upto; ++idx) {
        const ConvLayer& l = idx < m.encoder.size() ? m.encoder[idx]
                                                    : m.decoder[idx - m.encoder.size()];
        if (cur.rows != l.in_ch) {
            throw ShapeMismatch("autoencoder layer " + std::to_string(idx) + " expects " +
                                std::to_string(l.in_ch) + " channels, got " +
                                std::to_string(cur.rows));
        }
        cache.inputs.push_back(cur);
        Matrix pre;
        conv_forward(l, cur, pre);
        cache.pres.push_back(pre);
        if (layer_has_activation(m, idx)) relu_inplace(pre);
        cur = std::move(pre);
    }
    cache.output = std::move(cur);
}

} // namespace ae_detail

inline AutoencoderModel init_autoencoder(const std::vector<std::size_t>& channel_plan,
                                         std::size_t kernel_width, std::uint64_t seed) {
    if (channel_plan.size() < 2) throw UsageError("channel plan needs at least two entries");
    if (channel_plan.back() != 1) throw UsageError("innermost representation must be 1 channel");
    if (kernel_width % 2 == 0) throw UsageError("kernel width must be odd (same padding)");
    AutoencoderModel m;
    m.channel_plan = channel_plan;
    m.kernel_width = kernel_width;
    m.seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < channel_plan.size(); ++i) {
        m.encoder.push_back(
            ae_detail::make_layer(channel_plan[i], channel_plan[i + 1], kernel_width, rng));
    }
    for (std::size_t i = channel_plan.size(); i-- > 1;) {
        m.decoder.push_back(
            ae_detail::make_layer(channel_plan[i], channel_plan[i - 1], kernel_width, rng));
    }
    return m;
}

// window is days x channels; the compressed representation is days x 1
inline Matrix encode(const AutoencoderModel& m, const Matrix& window) {
    if (window.cols != m.channel_plan.front()) {
        throw ShapeMismatch("encode: expected " + std::to_string(m.channel_plan.front()) +
                            " feature channels, got " + std::to_string(window.cols));
    }
    if (window.rows < m.kernel_width) {
        throw ShapeMismatch("encode: need at least kernel_width days");
    }
    Matrix input(window.cols, window.rows);
    for (std::size_t t = 0; t < window.rows; ++t) {
        for (std::size_t c = 0; c < window.cols; ++c) input(c, t) = window(t, c);
    }
    ae_detail::ForwardCache cache;
    ae_detail::run_forward(m, input, cache, m.encoder.size());
    Matrix out(window.rows, 1);
    for (std::size_t t = 0; t < window.rows; ++t) out(t, 0) = cache.output(0, t);
    return out;
}

inline Matrix reconstruct(const AutoencoderModel& m, const Matrix& window) {
    if (window.cols != m.channel_plan.front()) {
        throw ShapeMismatch("reconstruct: channel mismatch");
    }
    Matrix input(window.cols, window.rows);
    for (std::size_t t = 0; t < window.rows; ++t) {
        for (std::size_t c = 0; c < window.cols; ++c) input(c, t) = window(t, c);
    }
    ae_detail::ForwardCache cache;
    ae_detail::run_forward(m, input, cache);
    Matrix out(window.rows, window.cols);
    for (std::size_t t = 0; t < window.rows; ++t) {
        for (std::size_t c = 0; c < window.cols; ++c) out(t, c) = cache.output(c, t);
    }
    return out;
}

inline double reconstruction_mse(const AutoencoderModel& m, const Matrix& window) {
    const Matrix rec = reconstruct(m, window);
    double s = 0.0;
    for (std::size_t i = 0; i < rec.a.size(); ++i) {
        const double e = rec.a[i] - window.a[i];
        s += e * e;
    }
    return s / static_cast<double>(rec.a.size());
}

struct AeGradients {
    std::vector<ae_detail::LayerGrad> layers; // encoder then decoder
};

// Exact reverse-mode gradients of the reconstruction MSE.
inline AeGradients ae_gradients(const AutoencoderModel& m, const Matrix& window,
                                double* loss_out = nullptr) {
    Matrix input(window.cols, window.rows);
    for (std::size_t t = 0; t < window.rows; ++t) {
        for (std::size_t c = 0; c < window.cols; ++c) input(c, t) = window(t, c);
    }
    ae_detail::ForwardCache cache;
    ae_detail::run_forward(m, input, cache);

    const double n = static_cast<double>(cache.output.a.size());
    Matrix delta(cache.output.rows, cache.output.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < delta.a.size(); ++i) {
        const double e = cache.output.a[i] - input.a[i];
        delta.a[i] = 2.0 * e / n;
        loss += e * e;
    }
    if (loss_out) *loss_out = loss / n;

    const std::size_t n_layers = m.encoder.size() + m.decoder.size();
    AeGradients grads;
    grads.layers.resize(n_layers);
    for (std::size_t idx = n_layers; idx-- > 0;) {
        const ConvLayer& l = idx < m.encoder.size() ? m.encoder[idx]
                                                    : m.decoder[idx - m.encoder.size()];
        if (ae_detail::layer_has_activation(m, idx)) {
            const Matrix& pre = cache.pres[idx];
            for (std::size_t i = 0; i < delta.a.size(); ++i) {
                if (pre.a[i] <= 0.0) delta.a[i] = 0.0;
            }
        }
        delta = ae_detail::conv_backward(l, cache.inputs[idx], delta, grads.layers[idx]);
    }
    return grads;
}

struct AeTrainConfig {
    std::vector<std::size_t> channel_plan{100, 16, 1};
    std::size_t kernel_width = 3;
    double lr = 5e-3;
    int patience = 200;
    int max_epochs = 2000;
    std::uint64_t seed = 1;
};

namespace ae_detail {

inline std::vector<ParamView> param_views(AutoencoderModel& m) {
    std::vector<ParamView> v;
    for (auto* side : {&m.encoder, &m.decoder}) {
        for (auto& l : *side) {
            v.push_back({l.w.data(), l.w.size()});
            v.push_back({l.b.data(), l.b.size()});
        }
    }
    return v;
}

inline std::vector<ParamView> grad_views(AeGradients& g) {
    std::vector<ParamView> v;
    for (auto& l : g.layers) {
        v.push_back({l.w.data(), l.w.size()});
        v.push_back({l.b.data(), l.b.size()});
    }
    return v;
}

} // namespace ae_detail

namespace ae_detail {

// masked reconstruction losses over one full-sequence forward pass: the
// gradient delta covers the first n_train days only, the validation loss the
// remaining days. Keeping one sequence avoids splitting artifacts from the
// same-padding borders.
struct SplitLoss {
    double train = 0.0;
    double val = 0.0;
};

inline SplitLoss masked_losses(const Matrix& output, const Matrix& input, std::size_t n_train,
                               Matrix* delta) {
    const std::size_t t_len = input.cols;
    const std::size_t n_ch = input.rows;
    const std::size_t n_val = t_len - n_train;
    const double train_elems = static_cast<double>(n_train * n_ch);
    if (delta) *delta = Matrix(n_ch, t_len);
    SplitLoss loss;
    for (std::size_t c = 0; c < n_ch; ++c) {
        for (std::size_t t = 0; t < t_len; ++t) {
            const double e = output(c, t) - input(c, t);
            if (t < n_train) {
                loss.train += e * e;
                if (delta) (*delta)(c, t) = 2.0 * e / train_elems;
            } else {
                loss.val += e * e;
            }
        }
    }
    loss.train /= train_elems;
    if (n_val > 0) loss.val /= static_cast<double>(n_val * n_ch);
    return loss;
}

inline AeGradients backward_from_delta(const AutoencoderModel& m, const ForwardCache& cache,
                                       Matrix delta) {
    const std::size_t n_layers = m.encoder.size() + m.decoder.size();
    AeGradients grads;
    grads.layers.resize(n_layers);
    for (std::size_t idx = n_layers; idx-- > 0;) {
        const ConvLayer& l = idx < m.encoder.size() ? m.encoder[idx]
                                                    : m.decoder[idx - m.encoder.size()];
        if (layer_has_activation(m, idx)) {
            const Matrix& pre = cache.pres[idx];
            for (std::size_t i = 0; i < delta.a.size(); ++i) {
                if (pre.a[i] <= 0.0) delta.a[i] = 0.0;
            }
        }
        delta = conv_backward(l, cache.inputs[idx], delta, grads.layers[idx]);
    }
    return grads;
}

} // namespace ae_detail

// Full-batch Adam on the reconstruction MSE. The day axis is split 90/10
// chronologically: gradients come from the first 90% of days, early stopping
// watches the rest; the best-validation checkpoint is returned with both
// losses recorded.
inline AutoencoderModel train_autoencoder(const Matrix& data /* days x channels */,
                                          const AeTrainConfig& cfg) {
    if (data.rows < 20) throw TooFewWindows("autoencoder training needs >= 20 days");
    if (data.cols != cfg.channel_plan.front()) {
        throw ShapeMismatch("training data has " + std::to_string(data.cols) +
                            " channels, plan expects " + std::to_string(cfg.channel_plan.front()));
    }
    const std::size_t n_val = std::max<std::size_t>(1, data.rows - data.rows * 9 / 10);
    const std::size_t n_train = data.rows - n_val;

    Matrix input(data.cols, data.rows); // channel-major
    for (std::size_t t = 0; t < data.rows; ++t)
        for (std::size_t c = 0; c < data.cols; ++c) input(c, t) = data(t, c);

    AutoencoderModel model = init_autoencoder(cfg.channel_plan, cfg.kernel_width, cfg.seed);
    AdamState adam;
    adam.lr = cfg.lr;

    AutoencoderModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    double best_train = std::numeric_limits<double>::infinity();
    {
        ae_detail::ForwardCache cache;
        ae_detail::run_forward(model, input, cache);
        const auto loss = ae_detail::masked_losses(cache.output, input, n_train, nullptr);
        best_val = loss.val;
        best_train = loss.train;
    }
    int since_improvement = 0;

    ae_detail::ForwardCache cache;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        ae_detail::run_forward(model, input, cache);
        Matrix delta;
        const auto loss = ae_detail::masked_losses(cache.output, input, n_train, &delta);
        if (!std::isfinite(loss.train) || !std::isfinite(loss.val)) {
            throw NonFiniteLoss("autoencoder diverged at epoch " + std::to_string(epoch));
        }
        AeGradients grads = ae_detail::backward_from_delta(model, cache, std::move(delta));
        adam_update(adam, ae_detail::param_views(model), ae_detail::grad_views(grads));

        ae_detail::run_forward(model, input, cache);
        const auto post = ae_detail::masked_losses(cache.output, input, n_train, nullptr);
        if (post.val < best_val) {
            best_val = post.val;
            best_train = post.train;
            best = model;
            since_improvement = 0;
        } else {
            ++since_improvement;
            if (since_improvement >= cfg.patience) break;
        }
    }
    best.train_loss = best_train;
    best.val_loss = best_val;
    return best;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

inline nlohmann::json ae_to_json(const AutoencoderModel& m) {
    nlohmann::json j;
    j["version"] = kAeCheckpointVersion;
    j["channel_plan"] = m.channel_plan;
    j["kernel_width"] = m.kernel_width;
    j["seed"] = m.seed;
    j["train_loss"] = m.train_loss;
    j["val_loss"] = m.val_loss;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto* side : {&m.encoder, &m.decoder}) {
        for (const auto& l : *side) {
            layers.push_back({{"in_ch", l.in_ch},
                              {"out_ch", l.out_ch},
                              {"kernel", l.kernel},
                              {"weights", l.w},
                              {"bias", l.b}});
        }
    }
    j["layers"] = layers;
    return j;
}

inline AutoencoderModel ae_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"] != kAeCheckpointVersion) {
        throw CheckpointVersionMismatch("unsupported autoencoder checkpoint version");
    }
    AutoencoderModel m;
    m.channel_plan = j.at("channel_plan").get<std::vector<std::size_t>>();
    m.kernel_width = j.at("kernel_width").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_loss = j.at("train_loss").get<double>();
    m.val_loss = j.at("val_loss").get<double>();
    const auto& layers = j.at("layers");
    const std::size_t n_enc = m.channel_plan.size() - 1;
    if (layers.size() != 2 * n_enc) {
        throw CheckpointVersionMismatch("autoencoder checkpoint layer count mismatch");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ConvLayer l;
        l.in_ch = layers[i].at("in_ch").get<std::size_t>();
        l.out_ch = layers[i].at("out_ch").get<std::size_t>();
        l.kernel = layers[i].at("kernel").get<std::size_t>();
        l.w = layers[i].at("weights").get<std::vector<double>>();
        l.b = layers[i].at("bias").get<std::vector<double>>();
        if (l.w.size() != l.in_ch * l.out_ch * l.kernel || l.b.size() != l.out_ch) {
            throw CheckpointVersionMismatch("autoencoder checkpoint shape mismatch");
        }
        if (i < n_enc) {
            m.encoder.push_back(std::move(l));
        } else {
            m.decoder.push_back(std::move(l));
        }
    }
    return m;
}

inline void save_autoencoder(const AutoencoderModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << ae_to_json(m).dump(2) << '\n';
}

inline AutoencoderModel load_autoencoder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointVersionMismatch(path + ": unreadable checkpoint: " + e.what());
    }
    return ae_from_json(j);
}

} // namespace loadcast

#endif
