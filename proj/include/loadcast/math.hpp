#ifndef LOADCAST_MATH_HPP
#define LOADCAST_MATH_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "loadcast/errors.hpp"

namespace loadcast {

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Deterministic random numbers
// ---------------------------------------------------------------------------

// SplitMix64. The stream is fully specified here so that any implementation
// can reproduce it from the 64-bit seed alone:
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output = z ^ (z >> 31)
// uniform() maps the top 53 bits to [0, 1). normal() draws two consecutive
// uniforms u1, u2 and returns sqrt(-2 ln(1 - u1)) * cos(2 pi u2); the second
// Box-Muller value is discarded, keeping the stream position predictable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Gaussian distribution helpers
// ---------------------------------------------------------------------------

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta and the F distribution tail
// ---------------------------------------------------------------------------

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16;
    const double tiny = std::numeric_limits<double>::min() / eps;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace detail

// I_x(a, b), the regularized incomplete beta function.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    // Use the continued fraction on the side where it converges fast.
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::betacf(a, b, x) / a;
    }
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// P(F > f) for an F(d1, d2)-distributed statistic.
inline double f_survival(double f, double d1, double d2) {
    if (f <= 0.0) return 1.0;
    const double x = d2 / (d2 + d1 * f);
    return incomplete_beta(d2 / 2.0, d1 / 2.0, x);
}

// ---------------------------------------------------------------------------
// Small dense matrices (row-major) for the neural models
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }

    std::size_t size() const { return a.size(); }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }

    // resize without preserving contents (cheap reuse across iterations)
    void ensure(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        a.resize(r * c);
    }
};

// y += M x  (y has M.rows entries, x has M.cols entries)
inline void gemv_add(const Matrix& m, const double* x, double* y) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* mr = m.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += mr[j] * x[j];
        y[i] += acc;
    }
}

// y += M^T x  (y has M.cols entries, x has M.rows entries)
inline void gemv_t_add(const Matrix& m, const double* x, double* y) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* mr = m.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += mr[j] * xi;
    }
}

// M += alpha * u v^T
inline void ger_add(Matrix& m, const double* u, const double* v, double alpha = 1.0) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* mr = m.row(i);
        const double ui = alpha * u[i];
        for (std::size_t j = 0; j < m.cols; ++j) mr[j] += ui * v[j];
    }
}

// ---------------------------------------------------------------------------
// Symmetric positive-definite solve (used for OLS normal equations)
// ---------------------------------------------------------------------------

// Solves A x = b in place via Cholesky; A is n x n symmetric positive
// definite, row-major. Throws SingularDesign when a pivot collapses relative
// to the matrix scale.
inline std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b,
                                          std::size_t n, double rel_tol = 1e-12) {
    std::vector<double> l(n * n, 0.0);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(a[i * n + i]));
    const double tol = std::max(max_diag, 1.0) * rel_tol;

    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
        if (!(d > tol)) throw SingularDesign("singular or near-singular design matrix");
        l[j * n + j] = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            l[i * n + j] = s / l[j * n + j];
        }
    }
    // forward substitution L y = b
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
        b[i] = s / l[i * n + i];
    }
    // back substitution L^T x = y
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * b[k];
        b[ii] = s / l[ii * n + ii];
    }
    return b;
}

// Ordinary least squares: X (m x p, row-major) against y (m). Returns the
// coefficient vector and, via *rss, the residual sum of squares. Columns are
// equilibrated to unit diagonal before the solve so mixed-scale designs do
// not masquerade as singular; only genuine collinearity is rejected.
inline std::vector<double> ols_fit(const std::vector<double>& x, const std::vector<double>& y,
                                   std::size_t m, std::size_t p, double* rss = nullptr) {
    std::vector<double> xtx(p * p, 0.0);
    std::vector<double> xty(p, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const double* xr = x.data() + r * p;
        for (std::size_t i = 0; i < p; ++i) {
            xty[i] += xr[i] * y[r];
            for (std::size_t j = i; j < p; ++j) xtx[i * p + j] += xr[i] * xr[j];
        }
    }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < i; ++j) xtx[i * p + j] = xtx[j * p + i];

    std::vector<double> scale(p);
    for (std::size_t i = 0; i < p; ++i) {
        const double d = xtx[i * p + i];
        if (!(d > 0.0)) throw SingularDesign("zero column in design matrix");
        scale[i] = 1.0 / std::sqrt(d);
    }
    for (std::size_t i = 0; i < p; ++i) {
        xty[i] *= scale[i];
        for (std::size_t j = 0; j < p; ++j) xtx[i * p + j] *= scale[i] * scale[j];
    }

    std::vector<double> beta = cholesky_solve(std::move(xtx), xty, p, 1e-10);
    for (std::size_t i = 0; i < p; ++i) beta[i] *= scale[i];
    if (rss) {
        double s = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const double* xr = x.data() + r * p;
            double fit = 0.0;
            for (std::size_t i = 0; i < p; ++i) fit += xr[i] * beta[i];
            const double e = y[r] - fit;
            s += e * e;
        }
        *rss = s;
    }
    return beta;
}

// ---------------------------------------------------------------------------
// Misc numeric helpers
// ---------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

inline double correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return 0.0;
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace loadcast

#endif
