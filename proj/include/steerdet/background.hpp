#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "grid.hpp"
#include "harmonics.hpp"

namespace steerdet {

// One template occurrence: center position (pixels) and orientation (radians).
struct Placement {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
};

using PlacementList = std::vector<Placement>;

// Multiscale regression output of the self-similarity exponent.
struct GammaEstimate {
    double gamma_hat = 0.0;
    double intercept = 0.0;
    std::vector<double> scales;
    std::vector<double> log_vars;
    double residual = 0.0;  // RMS regression residual in log-variance
};

// Spectral synthesis of an isotropic self-similar Gaussian field: white
// Gaussian innovation shaped by 1/r^gamma, DC zeroed (the discrete surrogate
// of the model's DC singularity). Deterministic per seed; zero mean.
inline RasterGrid synthesize_iss(int width, int height, const BackgroundModel& bg,
                                 uint64_t seed) {
    if (width < 8 || height < 8)
        throw std::invalid_argument("synthesize_iss: dimensions must be >= 8");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(bg.sigma2));
    RasterGrid white(width, height);
    for (auto& v : white.samples) v = gauss(rng);
    SpectralGrid spec = forward_spectrum(white);  // Hermitian by construction
    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            if (ix == 0 && iy == 0) {
                spec.at(0, 0) = 0.0;
                continue;
            }
            if (bg.gamma != 0.0) {
                const FreqPoint p = freq_point(spec, ix, iy);
                spec.at(ix, iy) *= std::pow(p.r, -bg.gamma);
            }
        }
    }
    return inverse_spectrum(spec, nullptr, 1e-6);
}

namespace detail {

// Isotropic Mexican hat (negative Laplacian of a unit-width Gaussian),
// zero-mean analyzer for the multiscale variance regression.
inline double mexican_hat(double r2) {
    return (2.0 - r2) * std::exp(-0.5 * r2);
}

// Periodic analyzer kernel a^{-1} psi(x / a) sampled on the field grid,
// mean-subtracted so the estimate is invariant to constant offsets.
inline RasterGrid analyzer_kernel(int width, int height, double a) {
    RasterGrid k(width, height);
    double mean = 0.0;
    for (int iy = 0; iy < height; ++iy) {
        const double dy = iy <= height / 2 ? iy : iy - height;
        for (int ix = 0; ix < width; ++ix) {
            const double dx = ix <= width / 2 ? ix : ix - width;
            const double r2 = (dx * dx + dy * dy) / (a * a);
            const double v = mexican_hat(r2) / a;
            k.at(ix, iy) = v;
            mean += v;
        }
    }
    mean /= k.size();
    for (auto& v : k.samples) v -= mean;
    return k;
}

}  // namespace detail

// Estimate the self-similarity exponent from log Var(X_a) = 2 gamma log a + b,
// where X_a is the field correlated with the L2-normalized analyzer at scale a
// over all positions (periodic).
inline GammaEstimate estimate_gamma(const RasterGrid& field, std::span<const double> scales) {
    if (scales.size() < 3) throw std::invalid_argument("estimate_gamma: need >= 3 scales");
    const int min_dim = std::min(field.width, field.height);
    for (double a : scales) {
        if (!(a > 0.0)) throw std::invalid_argument("estimate_gamma: scales must be positive");
        if (a > min_dim / 8.0)
            throw std::invalid_argument("estimate_gamma: field too small for scale " +
                                        std::to_string(a));
    }
    const SpectralGrid field_spec = forward_spectrum(field);
    GammaEstimate est;
    for (double a : scales) {
        const RasterGrid kernel = detail::analyzer_kernel(field.width, field.height, a);
        SpectralGrid prod = forward_spectrum(kernel);
        for (size_t i = 0; i < prod.size(); ++i)
            prod.samples[i] = field_spec.samples[i] * std::conj(prod.samples[i]);
        const auto resp = inverse_spectrum_complex(prod);
        double var = 0.0;
        for (const auto& v : resp) var += v.real() * v.real();
        var /= resp.size();  // responses have zero mean (zero-mean analyzer)
        if (!(var > 0.0) || !std::isfinite(var))
            throw std::runtime_error("estimate_gamma: degenerate response variance");
        est.scales.push_back(a);
        est.log_vars.push_back(std::log(var));
    }
    // Least squares of log var against log a.
    const size_t n = est.scales.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double x = std::log(est.scales[i]);
        sx += x;
        sy += est.log_vars[i];
        sxx += x * x;
        sxy += x * est.log_vars[i];
    }
    const double det = n * sxx - sx * sx;
    if (std::abs(det) < 1e-12 * n * sxx)
        throw std::runtime_error("estimate_gamma: ill-conditioned regression (scales too close)");
    const double slope = (n * sxy - sx * sy) / det;
    est.intercept = (sy * sxx - sx * sxy) / det;
    est.gamma_hat = 0.5 * slope;
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double fit = slope * std::log(est.scales[i]) + est.intercept;
        ss += (est.log_vars[i] - fit) * (est.log_vars[i] - fit);
    }
    est.residual = std::sqrt(ss / n);
    return est;
}

namespace detail {

// Keys bicubic kernel (a = -1/2).
inline double cubic_weight(double t) {
    t = std::abs(t);
    if (t < 1.0) return ((1.5 * t - 2.5) * t) * t + 1.0;
    if (t < 2.0) return (((-0.5 * t + 2.5) * t) - 4.0) * t + 2.0;
    return 0.0;
}

inline double sample_bicubic(const RasterGrid& g, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    double acc = 0.0;
    for (int j = -1; j <= 2; ++j) {
        const int yy = y0 + j;
        if (yy < 0 || yy >= g.height) continue;
        const double wy = cubic_weight(y - yy);
        if (wy == 0.0) continue;
        for (int i = -1; i <= 2; ++i) {
            const int xx = x0 + i;
            if (xx < 0 || xx >= g.width) continue;
            const double wx = cubic_weight(x - xx);
            if (wx == 0.0) continue;
            acc += wx * wy * g.at(xx, yy);
        }
    }
    return acc;
}

inline double half_diagonal(const RasterGrid& t) {
    return 0.5 * std::hypot(static_cast<double>(t.width), static_cast<double>(t.height));
}

}  // namespace detail

// Blend rotated template copies onto a background:
//   I(x) = amplitude * sum_i T(R_{-theta_i}(x - x_i) + c_T) + bg(x)
// with bicubic resampling. Placements must keep the (rotated) template extent
// inside the image.
inline RasterGrid blend_templates(const RasterGrid& bg, const RasterGrid& templ,
                                  const PlacementList& placements, double amplitude = 1.0) {
    RasterGrid out = bg;
    const double ext = detail::half_diagonal(templ);
    const double cx = templ.center_x(), cy = templ.center_y();
    for (const Placement& p : placements) {
        if (p.x - ext < -0.5 || p.x + ext > bg.width - 0.5 || p.y - ext < -0.5 ||
            p.y + ext > bg.height - 0.5)
            throw std::invalid_argument("blend_templates: placement out of bounds");
        const double c = std::cos(p.theta), s = std::sin(p.theta);
        const int xlo = std::max(0, static_cast<int>(std::floor(p.x - ext)) - 2);
        const int xhi = std::min(bg.width - 1, static_cast<int>(std::ceil(p.x + ext)) + 2);
        const int ylo = std::max(0, static_cast<int>(std::floor(p.y - ext)) - 2);
        const int yhi = std::min(bg.height - 1, static_cast<int>(std::ceil(p.y + ext)) + 2);
        for (int y = ylo; y <= yhi; ++y) {
            for (int x = xlo; x <= xhi; ++x) {
                const double dx = x - p.x, dy = y - p.y;
                // R_{-theta} (dx, dy)
                const double u = c * dx + s * dy + cx;
                const double v = -s * dx + c * dy + cy;
                if (u < -2.0 || u > templ.width + 1.0 || v < -2.0 || v > templ.height + 1.0)
                    continue;
                out.at(x, y) += amplitude * detail::sample_bicubic(templ, u, v);
            }
        }
    }
    return out;
}

// Uniform random placements with a minimum pairwise spacing (rejection
// sampling) and uniform orientations in [0, 2 pi). Deterministic per seed.
inline PlacementList random_placements(int count, int width, int height, double template_extent,
                                       double min_spacing, uint64_t seed) {
    if (count < 0) throw std::invalid_argument("random_placements: count must be >= 0");
    PlacementList out;
    if (count == 0) return out;
    const double margin = template_extent;
    if (width - 1 - 2 * margin < 0 || height - 1 - 2 * margin < 0)
        throw std::runtime_error("random_placements: image too small for template extent");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(margin, width - 1 - margin);
    std::uniform_real_distribution<double> uy(margin, height - 1 - margin);
    std::uniform_real_distribution<double> ut(0.0, two_pi);
    const long max_attempts = 10000L * count;
    long attempts = 0;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > max_attempts)
            throw std::runtime_error("random_placements: packing infeasible (attempts exhausted)");
        Placement p{ux(rng), uy(rng), ut(rng)};
        bool ok = true;
        for (const Placement& q : out) {
            if (std::hypot(p.x - q.x, p.y - q.y) < min_spacing) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(p);
    }
    return out;
}

// PlacementList CSV: header `x,y,theta_rad`, one row per placement.
inline void write_placements_csv(const PlacementList& list, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_placements_csv: cannot open " + path);
    out << "x,y,theta_rad\n";
    out.precision(17);
    for (const Placement& p : list) out << p.x << "," << p.y << "," << p.theta << "\n";
}

inline PlacementList read_placements_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_placements_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,y,theta_rad", 0) != 0)
        throw std::runtime_error("read_placements_csv: bad header in " + path);
    PlacementList out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        Placement p;
        char c1, c2;
        if (!(ss >> p.x >> c1 >> p.y >> c2 >> p.theta) || c1 != ',' || c2 != ',')
            throw std::runtime_error("read_placements_csv: bad row in " + path);
        out.push_back(p);
    }
    return out;
}

}  // namespace steerdet
