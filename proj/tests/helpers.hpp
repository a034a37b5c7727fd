#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <steerdet/steerdet.hpp>

namespace testutil {

// Composite Simpson rule; n is rounded up to even.
template <typename F>
double simpson(double lo, double hi, int n, F f) {
    if (n % 2) ++n;
    const double h = (hi - lo) / n;
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// Adaptive Simpson with absolute tolerance.
template <typename F>
double adaptive_simpson_rec(F f, double a, double b, double fa, double fm, double fb, double whole,
                            double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

template <typename F>
double adaptive_simpson(F f, double a, double b, double tol = 1e-13) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

inline steerdet::RasterGrid zero_mean(steerdet::RasterGrid g) {
    double m = 0.0;
    for (double v : g.samples) m += v;
    m /= static_cast<double>(g.samples.size());
    for (double& v : g.samples) v -= m;
    return g;
}

inline double rel_l2(const steerdet::SpectralGrid& a, const steerdet::SpectralGrid& b) {
    double diff = 0.0, ref = 0.0;
    for (size_t i = 0; i < a.samples.size(); ++i) {
        diff += std::norm(a.samples[i] - b.samples[i]);
        ref += std::norm(a.samples[i]);
    }
    return std::sqrt(diff / ref);
}

inline double max_abs_diff(const steerdet::RasterGrid& a, const steerdet::RasterGrid& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.samples.size(); ++i)
        m = std::max(m, std::abs(a.samples[i] - b.samples[i]));
    return m;
}

}  // namespace testutil
