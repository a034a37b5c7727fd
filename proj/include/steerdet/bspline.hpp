#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace steerdet {

// Causal quadratic B-spline (beta0 convolved twice), supported on [0, 3].
inline double beta2(double x) {
    if (x <= 0.0 || x >= 3.0) return 0.0;
    if (x < 1.0) return 0.5 * x * x;
    if (x < 2.0) return 0.5 * (-2.0 * x * x + 6.0 * x - 3.0);
    return 0.5 * (3.0 - x) * (3.0 - x);
}

namespace detail {

// 16-point Gauss-Legendre rule on [-1, 1]; exact for the piecewise
// polynomials handled here.
inline constexpr std::array<double, 8> gl16_x = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr std::array<double, 8> gl16_w = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

// Integrate f over [a, b] with Gauss-Legendre 16 applied per unit subinterval
// aligned to the integer knots of the integrand.
template <typename F>
double integrate_knotwise(double a, double b, F&& f) {
    if (b <= a) return 0.0;
    double total = 0.0;
    double lo = a;
    while (lo < b - 1e-14) {
        const double hi = std::min(b, std::floor(lo + 1.0 + 1e-12));
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        double acc = 0.0;
        for (size_t i = 0; i < gl16_x.size(); ++i)
            acc += gl16_w[i] * (f(mid - half * gl16_x[i]) + f(mid + half * gl16_x[i]));
        total += half * acc;
        lo = hi;
    }
    return total;
}

}  // namespace detail

// Unweighted autocorrelation h[k] = integral beta2(t) beta2(t - k) dt, |k| <= 2.
// Closed form: the centered quintic B-spline sampled at the integers.
inline std::array<double, 5> autocorr_filter() {
    return {1.0 / 120.0, 13.0 / 60.0, 11.0 / 20.0, 13.0 / 60.0, 1.0 / 120.0};  // k = -2..2
}

// Truncated convolutional inverse of a symmetric filter h (indexed -2..2),
// returned as taps -L..L. Computed from the reciprocal of the DTFT symbol on a
// dense frequency grid; accurate to machine precision for geometric decay.
inline std::vector<double> inverse_filter(const std::array<double, 5>& h, int L = 25) {
    if (L < 1) throw std::invalid_argument("inverse_filter: L must be >= 1");
    const int grid = 8192;
    std::vector<double> symbol(grid);
    double min_sym = std::numeric_limits<double>::max();
    for (int m = 0; m < grid; ++m) {
        const double w = (2.0 * std::numbers::pi) * m / grid;
        const double s = h[2] + 2.0 * (h[3] * std::cos(w) + h[4] * std::cos(2.0 * w));
        symbol[m] = s;
        min_sym = std::min(min_sym, s);
    }
    if (min_sym < 1e-8)
        throw std::runtime_error("inverse_filter: symbol nearly singular (min DTFT < 1e-8)");
    std::vector<double> inv(2 * L + 1, 0.0);
    for (int k = -L; k <= L; ++k) {
        double acc = 0.0;
        for (int m = 0; m < grid; ++m)
            acc += std::cos((2.0 * std::numbers::pi) * m * k / grid) / symbol[m];
        inv[k + L] = acc / grid;
    }
    return inv;
}

// Weighting tag for the Gram system: the exact radially weighted inner product
// versus the unweighted Toeplitz reading used by the h^{-1} pipeline.
enum class GramWeighting { radial, unweighted };

// Symmetric banded Gram matrix over knots k_min..k_max, bandwidth 2 each side.
// Radially weighted entries: G[k,l] = 2*pi * int_0^inf (1/r0^2) *
// beta(r/r0 - k) beta(r/r0 - l) r dr, which is r0-independent but, through the
// weight, depends on k + l and not only on l - k.
struct GramSystem {
    int k_min = 0;
    int k_max = 0;
    GramWeighting weighting = GramWeighting::radial;
    // bands[b][i] = G[k_min + i, k_min + i + b], b = 0..2
    std::array<std::vector<double>, 3> bands;

    int count() const { return k_max - k_min + 1; }
    double entry(int k, int l) const {
        const int d = std::abs(l - k);
        if (d > 2) return 0.0;
        const int i = std::min(k, l) - k_min;
        return bands[d][static_cast<size_t>(i)];
    }
};

inline GramSystem radial_gram(int k_min, int k_max) {
    if (k_max < k_min) throw std::invalid_argument("radial_gram: empty knot range");
    GramSystem g;
    g.k_min = k_min;
    g.k_max = k_max;
    const int n = g.count();
    for (int b = 0; b <= 2; ++b) g.bands[b].assign(static_cast<size_t>(n), 0.0);
    for (int k = k_min; k <= k_max; ++k) {
        for (int d = 0; d <= 2 && k + d <= k_max; ++d) {
            // u = r/r0 - k; integrand beta(u) beta(u - d) (u + k), u >= max(0, -k)
            const double lo = std::max({0.0, static_cast<double>(d), static_cast<double>(-k)});
            const double hi = 3.0;
            const double val = detail::integrate_knotwise(lo, hi, [k, d](double u) {
                return beta2(u) * beta2(u - d) * (u + k);
            });
            g.bands[d][static_cast<size_t>(k - k_min)] = (2.0 * std::numbers::pi) * val;
        }
    }
    return g;
}

// Unweighted variant: Toeplitz with generator h (comparison backend).
inline GramSystem unweighted_gram(int k_min, int k_max) {
    if (k_max < k_min) throw std::invalid_argument("unweighted_gram: empty knot range");
    GramSystem g;
    g.k_min = k_min;
    g.k_max = k_max;
    g.weighting = GramWeighting::unweighted;
    const auto h = autocorr_filter();
    const int n = g.count();
    for (int b = 0; b <= 2; ++b) g.bands[b].assign(static_cast<size_t>(n), h[2 + b]);
    return g;
}

// Banded symmetric solve via Cholesky (bandwidth 2). Throws on a
// non-positive-definite system.
template <typename Scalar>
std::vector<Scalar> solve_gram(const GramSystem& g, std::span<const Scalar> d) {
    const int n = g.count();
    if (static_cast<int>(d.size()) != n)
        throw std::invalid_argument("solve_gram: rhs length does not match knot range");
    // Lower-banded Cholesky factor L, bands 0..2.
    std::array<std::vector<double>, 3> L;
    for (int b = 0; b <= 2; ++b) L[b].assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int b = std::min(i, 2); b >= 0; --b) {
            const int j = i - b;  // column
            double sum = g.bands[b][static_cast<size_t>(j)];
            for (int p = 1; p <= 2 - b; ++p) {
                if (j - p < 0) break;
                sum -= L[b + p][static_cast<size_t>(j - p)] * L[p][static_cast<size_t>(j - p)];
            }
            if (b == 0) {
                if (sum <= 0.0)
                    throw std::runtime_error("solve_gram: matrix not positive definite");
                L[0][static_cast<size_t>(i)] = std::sqrt(sum);
            } else {
                L[b][static_cast<size_t>(j)] = sum / L[0][static_cast<size_t>(j)];
            }
        }
    }
    // Forward/backward substitution.
    std::vector<Scalar> y(d.begin(), d.end());
    for (int i = 0; i < n; ++i) {
        for (int b = 1; b <= std::min(i, 2); ++b)
            y[i] -= L[b][static_cast<size_t>(i - b)] * y[static_cast<size_t>(i - b)];
        y[i] /= L[0][static_cast<size_t>(i)];
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int b = 1; b <= 2 && i + b < n; ++b)
            y[i] -= L[b][static_cast<size_t>(i)] * y[static_cast<size_t>(i + b)];
        y[i] /= L[0][static_cast<size_t>(i)];
    }
    return y;
}

// Complex B-spline coefficients of one harmonic's Fourier radial profile,
// defined on knots k*r0 for k_min <= k <= k_max. Profiles live on r >= 0.
struct RadialSplineProfile {
    double r0 = 1.0;
    int k_min = -2;
    std::vector<std::complex<double>> coeffs;  // c[k], k = k_min..k_max

    int k_max() const { return k_min + static_cast<int>(coeffs.size()) - 1; }

    std::complex<double> eval(double r) const {
        if (r < 0.0) throw std::invalid_argument("RadialSplineProfile: r must be >= 0");
        const double t = r / r0;
        const int klo = static_cast<int>(std::floor(t - 3.0)) + 1;
        std::complex<double> acc = 0.0;
        for (int k = std::max(klo, k_min); k <= std::min(klo + 2, k_max()); ++k)
            acc += coeffs[static_cast<size_t>(k - k_min)] * beta2(t - k);
        return acc / r0;
    }
};

inline std::complex<double> eval_profile(const RadialSplineProfile& p, double r) {
    return p.eval(r);
}

// Toeplitz comparison backend: c = h^{-1} * d on the knot range, out-of-range
// d treated as zero.
inline std::vector<std::complex<double>> toeplitz_project(
    std::span<const std::complex<double>> d, const std::vector<double>& hinv) {
    const int n = static_cast<int>(d.size());
    const int L = (static_cast<int>(hinv.size()) - 1) / 2;
    std::vector<std::complex<double>> c(static_cast<size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (int l = -L; l <= L; ++l) {
            const int idx = k - l;
            if (idx < 0 || idx >= n) continue;
            acc += hinv[static_cast<size_t>(l + L)] * d[static_cast<size_t>(idx)];
        }
        c[static_cast<size_t>(k)] = acc;
    }
    return c;
}

}  // namespace steerdet
