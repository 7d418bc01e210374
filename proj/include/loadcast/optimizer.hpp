#ifndef LOADCAST_OPTIMIZER_HPP
#define LOADCAST_OPTIMIZER_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "loadcast/errors.hpp"

namespace loadcast {

struct ParamView {
    double* data = nullptr;
    std::size_t size = 0;
};

// First/second moment state over the model's flattened parameters, in the
// model's canonical parameter order.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-4;
    long step_count = 0;
    std::vector<double> m;
    std::vector<double> v;
};

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), standard bias-corrected
// Adam. One call is one optimizer step across all parameter arrays.
inline void adam_update(AdamState& s, const std::vector<ParamView>& params,
                        const std::vector<ParamView>& grads) {
    if (params.size() != grads.size()) throw ShapeMismatch("adam: param/grad group mismatch");
    std::size_t total = 0;
    for (const auto& p : params) total += p.size;
    if (s.m.empty()) {
        s.m.assign(total, 0.0);
        s.v.assign(total, 0.0);
    } else if (s.m.size() != total) {
        throw ShapeMismatch("adam: state size mismatch");
    }

    ++s.step_count;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));

    std::size_t off = 0;
    for (std::size_t g = 0; g < params.size(); ++g) {
        if (params[g].size != grads[g].size) throw ShapeMismatch("adam: group size mismatch");
        double* th = params[g].data;
        const double* gr = grads[g].data;
        for (std::size_t i = 0; i < params[g].size; ++i) {
            const double gi = gr[i];
            s.m[off + i] = s.beta1 * s.m[off + i] + (1.0 - s.beta1) * gi;
            s.v[off + i] = s.beta2 * s.v[off + i] + (1.0 - s.beta2) * gi * gi;
            const double m_hat = s.m[off + i] / bc1;
            const double v_hat = s.v[off + i] / bc2;
            th[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
        }
        off += params[g].size;
    }
}

} // namespace loadcast

#endif
