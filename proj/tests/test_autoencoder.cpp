#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "loadcast/autoencoder.hpp"
#include "test_util.hpp"

using namespace loadcast;

namespace {

Matrix random_window(std::size_t days, std::size_t channels, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(days, channels);
    for (auto& v : m.a) v = rng.uniform(-1.5, 1.5);
    return m;
}

void zero_model(AutoencoderModel& m) {
    for (auto* side : {&m.encoder, &m.decoder}) {
        for (auto& l : *side) {
            std::fill(l.w.begin(), l.w.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
    }
}

// independent naive forward: direct convolution sums with explicit
// edge-replicated padding, iterating the layer stack exactly as specified
std::vector<std::vector<double>> naive_forward(const AutoencoderModel& m,
                                               const Matrix& window, bool encoder_only) {
    const std::size_t t_len = window.rows;
    std::vector<std::vector<double>> cur(window.cols, std::vector<double>(t_len));
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t c = 0; c < window.cols; ++c) cur[c][t] = window(t, c);

    const std::size_t n_layers =
        encoder_only ? m.encoder.size() : m.encoder.size() + m.decoder.size();
    for (std::size_t idx = 0; idx < n_layers; ++idx) {
        const ConvLayer& l =
            idx < m.encoder.size() ? m.encoder[idx] : m.decoder[idx - m.encoder.size()];
        const long pad = static_cast<long>(l.kernel - 1) / 2;
        std::vector<std::vector<double>> next(l.out_ch, std::vector<double>(t_len));
        for (std::size_t o = 0; o < l.out_ch; ++o) {
            for (std::size_t t = 0; t < t_len; ++t) {
                double acc = l.b[o];
                for (std::size_t i = 0; i < l.in_ch; ++i) {
                    for (std::size_t k = 0; k < l.kernel; ++k) {
                        long src = static_cast<long>(t) + static_cast<long>(k) - pad;
                        src = std::max(0L, std::min(src, static_cast<long>(t_len) - 1));
                        acc += l.wat(o, i, k) * cur[i][src];
                    }
                }
                next[o][t] = acc;
            }
        }
        // ramp everywhere except the bottleneck and the final output layer
        const bool is_bottleneck = idx + 1 == m.encoder.size();
        const bool is_output = idx + 1 == m.encoder.size() + m.decoder.size();
        if (!is_bottleneck && !is_output) {
            for (auto& row : next)
                for (auto& v : row) v = std::max(0.0, v);
        }
        cur = std::move(next);
    }
    return cur;
}

} // namespace

TEST_CASE("zero model maps anything to zero") {
    AutoencoderModel m = init_autoencoder({4, 2, 1}, 3, 7);
    zero_model(m);
    const Matrix in = random_window(10, 4, 3);
    const Matrix z = encode(m, in);
    const Matrix rec = reconstruct(m, in);
    for (double v : z.a) REQUIRE(v == 0.0);
    for (double v : rec.a) REQUIRE(v == 0.0);
}

TEST_CASE("single kernel-width-1 layer is a dot product") {
    AutoencoderModel m = init_autoencoder({2, 1}, 1, 5);
    zero_model(m);
    m.encoder[0].wat(0, 0, 0) = 1.0;
    m.encoder[0].wat(0, 1, 0) = 1.0;
    Matrix in(1, 2);
    in(0, 0) = 3.0;
    in(0, 1) = 4.0;
    const Matrix z = encode(m, in);
    REQUIRE(z(0, 0) == Catch::Approx(7.0));
}

TEST_CASE("encode and reconstruct match the naive convolution oracle") {
    const AutoencoderModel m = init_autoencoder({8, 4, 1}, 3, 123);
    const Matrix in = random_window(5, 8, 77);

    const Matrix z = encode(m, in);
    const auto naive_z = naive_forward(m, in, true);
    REQUIRE(naive_z.size() == 1);
    for (std::size_t t = 0; t < in.rows; ++t) {
        REQUIRE(z(t, 0) == Catch::Approx(naive_z[0][t]).margin(1e-10));
    }

    const Matrix rec = reconstruct(m, in);
    const auto naive_rec = naive_forward(m, in, false);
    for (std::size_t t = 0; t < in.rows; ++t) {
        for (std::size_t c = 0; c < in.cols; ++c) {
            REQUIRE(rec(t, c) == Catch::Approx(naive_rec[c][t]).margin(1e-10));
        }
    }
}

TEST_CASE("shape errors are reported") {
    const AutoencoderModel m = init_autoencoder({8, 4, 1}, 3, 9);
    REQUIRE_THROWS_AS(encode(m, random_window(5, 7, 1)), ShapeMismatch);
    REQUIRE_THROWS_AS(encode(m, random_window(2, 8, 1)), ShapeMismatch); // fewer days than kernel
    REQUIRE_THROWS_AS(reconstruct(m, random_window(5, 9, 1)), ShapeMismatch);
    REQUIRE_THROWS_AS(init_autoencoder({8, 4, 2}, 3, 1), UsageError); // bottleneck != 1
    REQUIRE_THROWS_AS(init_autoencoder({8, 4, 1}, 4, 1), UsageError); // even kernel
}

TEST_CASE("autoencoder gradients match central finite differences") {
    AutoencoderModel m = init_autoencoder({5, 3, 1}, 3, 42);
    const Matrix data = random_window(9, 5, 1234);

    double base_loss = 0.0;
    const AeGradients grads = ae_gradients(m, data, &base_loss);
    REQUIRE(base_loss > 0.0);

    const double eps = 1e-5;
    std::size_t checked = 0, layer_idx = 0;
    for (auto* side : {&m.encoder, &m.decoder}) {
        for (auto& layer : *side) {
            auto check_param = [&](double& p, double analytic) {
                const double saved = p;
                p = saved + eps;
                const double up = reconstruction_mse(m, data);
                p = saved - eps;
                const double dn = reconstruction_mse(m, data);
                p = saved;
                const double numeric = (up - dn) / (2.0 * eps);
                const double denom = std::max(std::fabs(numeric), 1e-8);
                REQUIRE(std::fabs(analytic - numeric) / denom < 1e-4);
                ++checked;
            };
            for (std::size_t i = 0; i < layer.w.size(); ++i) {
                check_param(layer.w[i], grads.layers[layer_idx].w[i]);
            }
            for (std::size_t i = 0; i < layer.b.size(); ++i) {
                check_param(layer.b[i], grads.layers[layer_idx].b[i]);
            }
            ++layer_idx;
        }
    }
    REQUIRE(checked > 50);
}

TEST_CASE("training on constant data drives the loss to zero") {
    Matrix data(30, 4);
    for (std::size_t t = 0; t < 30; ++t) {
        data(t, 0) = 2.0;
        data(t, 1) = -1.0;
        data(t, 2) = 0.5;
        data(t, 3) = 3.0;
    }
    AeTrainConfig cfg;
    cfg.channel_plan = {4, 3, 1};
    cfg.lr = 2e-2;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.seed = 3;
    const AutoencoderModel m = train_autoencoder(data, cfg);
    REQUIRE(m.train_loss < 1e-6);
}

TEST_CASE("training recovers rank-1 structure") {
    // rows are scalar multiples of one direction
    const std::size_t days = 80, dims = 12;
    Rng rng(404);
    std::vector<double> direction(dims);
    for (auto& v : direction) v = rng.uniform(-1.0, 1.0);
    std::vector<double> latent(days);
    for (std::size_t d = 0; d < days; ++d) {
        latent[d] = std::sin(2.0 * kPi * d / 17.0) + 0.4 * std::sin(2.0 * kPi * d / 53.0);
    }
    Matrix data(days, dims);
    for (std::size_t d = 0; d < days; ++d) {
        for (std::size_t j = 0; j < dims; ++j) data(d, j) = latent[d] * direction[j];
    }

    AeTrainConfig cfg;
    cfg.channel_plan = {dims, 6, 1};
    cfg.lr = 5e-3;
    cfg.max_epochs = 4000;
    cfg.patience = 300;
    cfg.seed = 11;
    const AutoencoderModel trained = train_autoencoder(data, cfg);

    const double var = variance_of(data.a);
    const double trained_mse = reconstruction_mse(trained, data);
    REQUIRE(trained_mse <= 1e-3 * var);

    const AutoencoderModel untrained = init_autoencoder(cfg.channel_plan, 3, 999);
    REQUIRE(reconstruction_mse(untrained, data) >= 10.0 * trained_mse);

    // best-checkpoint loss cannot exceed the epoch-0 loss
    const AutoencoderModel epoch0 = init_autoencoder(cfg.channel_plan, 3, cfg.seed);
    REQUIRE(trained_mse <= reconstruction_mse(epoch0, data));

    // the compressed channel tracks the latent factor up to sign
    const Matrix z = encode(trained, data);
    std::vector<double> zv(z.a);
    const double corr = correlation(zv, latent);
    REQUIRE(std::fabs(corr) >= 0.99);
}

TEST_CASE("training requires enough days and a matching plan") {
    REQUIRE_THROWS_AS(train_autoencoder(random_window(10, 4, 1), AeTrainConfig{{4, 2, 1}}),
                      TooFewWindows);
    REQUIRE_THROWS_AS(train_autoencoder(random_window(30, 4, 1), AeTrainConfig{{5, 2, 1}}),
                      ShapeMismatch);
}

TEST_CASE("encode is translation-covariant in the interior") {
    const AutoencoderModel m = init_autoencoder({3, 1}, 3, 21);
    const std::size_t days = 20;
    Matrix a = random_window(days, 3, 8);
    // b = a shifted one day later
    Matrix b(days, 3);
    for (std::size_t t = 0; t + 1 < days; ++t) {
        for (std::size_t c = 0; c < 3; ++c) b(t + 1, c) = a(t, c);
    }
    for (std::size_t c = 0; c < 3; ++c) b(0, c) = 0.0;

    const Matrix za = encode(m, a);
    const Matrix zb = encode(m, b);
    // interior: skip kernel_width - 1 border days on each side
    for (std::size_t t = m.kernel_width - 1; t + m.kernel_width < days; ++t) {
        REQUIRE(zb(t + 1, 0) == Catch::Approx(za(t, 0)).margin(1e-12));
    }
}

TEST_CASE("autoencoder checkpoint round trip") {
    const auto dir = testutil::temp_dir("ae_checkpoint");
    AutoencoderModel m = init_autoencoder({6, 3, 1}, 3, 55);
    m.train_loss = 0.25;
    m.val_loss = 0.5;
    const std::string path = (dir / "ae.json").string();
    save_autoencoder(m, path);
    const AutoencoderModel back = load_autoencoder(path);
    REQUIRE(back.channel_plan == m.channel_plan);
    REQUIRE(back.kernel_width == m.kernel_width);
    REQUIRE(back.seed == m.seed);
    for (std::size_t i = 0; i < m.encoder.size(); ++i) {
        REQUIRE(back.encoder[i].w == m.encoder[i].w);
        REQUIRE(back.decoder[i].w == m.decoder[i].w);
    }

    // behaviour identical after reload
    const Matrix in = random_window(7, 6, 2);
    const Matrix z1 = encode(m, in);
    const Matrix z2 = encode(back, in);
    REQUIRE(z1.a == z2.a);

    testutil::write_file(dir / "bad.json", {R"({"version":"other","layers":[]})"});
    REQUIRE_THROWS_AS(load_autoencoder((dir / "bad.json").string()),
                      CheckpointVersionMismatch);
    testutil::write_file(dir / "garbage.json", {"not json at all"});
    REQUIRE_THROWS_AS(load_autoencoder((dir / "garbage.json").string()),
                      CheckpointVersionMismatch);
}

TEST_CASE("non-finite losses are reported, not silently returned") {
    // squared errors overflow the double range on absurdly scaled input
    Matrix data = random_window(30, 3, 6);
    for (auto& v : data.a) v = (v + 2.0) * 1e200;
    AeTrainConfig cfg;
    cfg.channel_plan = {3, 2, 1};
    cfg.max_epochs = 50;
    cfg.seed = 2;
    REQUIRE_THROWS_AS(train_autoencoder(data, cfg), NonFiniteLoss);
}
