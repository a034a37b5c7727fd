#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bspline.hpp"
#include "grid.hpp"

namespace steerdet {

// Symmetric harmonic index set {-N, ..., N}; symmetry about 0 is required so
// real templates yield real filters.
struct HarmonicSet {
    int N = 0;
    explicit HarmonicSet(int n) : N(n) {
        if (n < 0) throw std::invalid_argument("HarmonicSet: N must be >= 0");
    }
    int count() const { return 2 * N + 1; }
};

struct BackgroundModel {
    double gamma = 0.0;   // self-similarity exponent, power spectrum sigma^2 / r^(2 gamma)
    double sigma2 = 1.0;  // innovation variance of the driving white noise

    BackgroundModel() = default;
    BackgroundModel(double g, double s2) : gamma(g), sigma2(s2) {
        if (g < 0.0) throw std::invalid_argument("BackgroundModel: gamma must be >= 0");
        if (!(s2 > 0.0)) throw std::invalid_argument("BackgroundModel: sigma^2 must be > 0");
    }
};

enum class ProjectionBackend { exact, paper };

inline ProjectionBackend parse_backend(const std::string& s) {
    if (s == "exact") return ProjectionBackend::exact;
    if (s == "paper") return ProjectionBackend::paper;
    throw std::invalid_argument("unknown projection backend: " + s);
}

struct SnrReport {
    double numerator = 0.0;  // |<T, f>|^2
    double variance = 0.0;   // Var(<S, f>) under the background model
    double snr = 0.0;
};

// Learned steerable detector: per-harmonic radial B-spline profiles of the
// template spectrum, plus the whitening exponent applied at synthesis time.
struct SteerableDetector {
    int N = 0;
    double r0 = 0.0;
    double gamma = 0.0;
    double pad_factor = 2.0;
    int k_min = -2;
    int k_max = 0;
    int src_width = 0, src_height = 0;        // template dimensions before padding
    int padded_width = 0, padded_height = 0;  // learning geometry
    double normalization = 1.0;               // scale folded into the coefficients
    std::vector<RadialSplineProfile> profiles;                // index n + N
    std::vector<std::vector<std::complex<double>>> d_coeffs;  // raw d_n[k], diagnostics
    std::vector<std::string> warnings;

    const RadialSplineProfile& profile(int n) const { return profiles[static_cast<size_t>(n + N)]; }
    RadialSplineProfile& profile(int n) { return profiles[static_cast<size_t>(n + N)]; }

    // Max deviation from c_{-n}[k] = (-1)^n conj(c_n[k]), relative to the
    // largest coefficient magnitude.
    double reality_asymmetry() const {
        double max_c = 0.0, max_dev = 0.0;
        for (const auto& p : profiles)
            for (const auto& c : p.coeffs) max_c = std::max(max_c, std::abs(c));
        if (max_c == 0.0) return 0.0;
        for (int n = 1; n <= N; ++n) {
            const auto& pos = profile(n).coeffs;
            const auto& neg = profile(-n).coeffs;
            const double sign = (n % 2 == 0) ? 1.0 : -1.0;
            for (size_t i = 0; i < pos.size(); ++i)
                max_dev = std::max(max_dev, std::abs(neg[i] - sign * std::conj(pos[i])));
        }
        for (const auto& c : profile(0).coeffs)
            max_dev = std::max(max_dev, std::abs(std::imag(c)));
        return max_dev / max_c;
    }
};

namespace detail {

// Knots whose spline atom covers radius r: beta2(r/r0 - k) > 0 for
// t - 3 < k < t with t = r/r0.
inline void knot_range_at(double t, int k_min, int k_max, int& klo, int& khi) {
    klo = std::max(k_min, static_cast<int>(std::floor(t - 3.0)) + 1);
    khi = std::min(k_max, static_cast<int>(std::ceil(t)) - 1);
}

}  // namespace detail

// Riemann-sum inner products d_n[k] = (1/2pi) <T_hat, phi_{n,k}> over the DFT
// grid of a (zero-padded) template spectrum. Bins at r = 0 contribute only to
// n = 0 atoms. Fixed row-major accumulation order (deterministic).
inline std::vector<std::complex<double>> profile_coefficients(
    const SpectralGrid& spec, int n, double r0, int k_min, int k_max,
    std::vector<std::string>* warnings = nullptr) {
    if (!(r0 > 0.0)) throw std::invalid_argument("profile_coefficients: r0 must be > 0");
    if (k_max < k_min) throw std::invalid_argument("profile_coefficients: empty knot range");
    const int count = k_max - k_min + 1;
    std::vector<std::complex<double>> d(static_cast<size_t>(count), 0.0);
    std::vector<int> bins(static_cast<size_t>(count), 0);
    const double cell = (two_pi / spec.width) * (two_pi / spec.height);
    for (int iy = 0; iy < spec.height; ++iy) {
        for (int ix = 0; ix < spec.width; ++ix) {
            const FreqPoint p = freq_point(spec, ix, iy);
            if (p.r == 0.0 && n != 0) continue;
            const double t = p.r / r0;
            int klo, khi;
            detail::knot_range_at(t, k_min, k_max, klo, khi);
            if (klo > khi) continue;
            const std::complex<double> w =
                spec.at(ix, iy) * std::polar(1.0, -n * p.theta);
            for (int k = klo; k <= khi; ++k) {
                const double b = beta2(t - k);
                if (b == 0.0) continue;
                d[static_cast<size_t>(k - k_min)] += w * (b / r0);
                ++bins[static_cast<size_t>(k - k_min)];
            }
        }
    }
    const double scale = cell / two_pi;
    for (auto& v : d) v *= scale;
    if (warnings) {
        std::string under;
        for (int k = k_min; k <= k_max; ++k)
            if (bins[static_cast<size_t>(k - k_min)] < 8) under += " " + std::to_string(k);
        if (!under.empty())
            warnings->push_back("harmonic " + std::to_string(n) +
                                ": under-resolved atoms (fewer than 8 grid bins) at knots" +
                                under + "; consider a larger pad factor");
    }
    return d;
}

// Spectral synthesis of the detector on a W x H frequency grid:
//   f_hat(r, theta) = r^(2 gamma) * sum_n sum_k c_n[k] (1/r0) beta2(r/r0 - k) e^(j n theta)
inline SpectralGrid synthesize_filter(const SteerableDetector& det, int width, int height) {
    SpectralGrid out(width, height);
    const int N = det.N;
    std::vector<std::complex<double>> radial(static_cast<size_t>(2 * N + 1));
    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            const FreqPoint p = freq_point(out, ix, iy);
            const double t = p.r / det.r0;
            int klo, khi;
            detail::knot_range_at(t, det.k_min, det.k_max, klo, khi);
            if (klo > khi) continue;
            double w[3] = {0.0, 0.0, 0.0};
            for (int k = klo; k <= khi; ++k) w[k - klo] = beta2(t - k) / det.r0;
            for (int n = -N; n <= N; ++n) {
                std::complex<double> acc = 0.0;
                const auto& c = det.profile(n).coeffs;
                for (int k = klo; k <= khi; ++k)
                    acc += c[static_cast<size_t>(k - det.k_min)] * w[k - klo];
                radial[static_cast<size_t>(n + N)] = acc;
            }
            const std::complex<double> e1 = std::polar(1.0, p.theta);
            std::complex<double> ep = 1.0, em = 1.0;
            std::complex<double> val = radial[static_cast<size_t>(N)];
            if (p.r == 0.0) {
                // theta undefined at DC; only n = 0 contributes
            } else {
                for (int n = 1; n <= N; ++n) {
                    ep *= e1;
                    em *= std::conj(e1);
                    val += radial[static_cast<size_t>(N + n)] * ep +
                           radial[static_cast<size_t>(N - n)] * em;
                }
            }
            const double whiten = det.gamma > 0.0 ? std::pow(p.r, 2.0 * det.gamma) : 1.0;
            out.at(ix, iy) = val * whiten;
        }
    }
    // Project onto the Hermitian subspace. On even-sized grids the Nyquist
    // rows/columns alias +pi and -pi onto one bin, so the polar angle cannot
    // satisfy theta(-w) = theta(w) + pi there; averaging with the conjugate
    // mirror restores exact symmetry (a no-op elsewhere up to roundoff).
    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            const int mx = (width - ix) % width, my = (height - iy) % height;
            if (my * width + mx < iy * width + ix) continue;
            const std::complex<double> a = out.at(ix, iy), b = out.at(mx, my);
            const std::complex<double> s = 0.5 * (a + std::conj(b));
            out.at(ix, iy) = s;
            out.at(mx, my) = std::conj(s);
        }
    }
    return out;
}

// Discrete spectral inner product matching the spatial one:
// (1/(W*H)) sum_bins a conj(b)  ==  sum_x a(x) b(x) for real fields.
inline std::complex<double> spectral_dot(const SpectralGrid& a, const SpectralGrid& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("spectral_dot: dimension mismatch");
    std::complex<double> acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a.samples[i] * std::conj(b.samples[i]);
    return acc / (static_cast<double>(a.width) * a.height);
}

inline double spectral_norm2(const SpectralGrid& a) {
    double acc = 0.0;
    for (const auto& v : a.samples) acc += std::norm(v);
    return acc / (static_cast<double>(a.width) * a.height);
}

// Variance of <S, f> for the ISS background model, evaluated on the filter's
// DFT grid (continuous model evaluated with the discrete Parseval constant).
// The DC bin is excluded for gamma > 0 and must be (numerically) zero there.
inline double predict_variance(const SpectralGrid& filter, const BackgroundModel& bg) {
    double max_mag = 0.0;
    for (const auto& v : filter.samples) max_mag = std::max(max_mag, std::abs(v));
    const double wh = static_cast<double>(filter.width) * filter.height;
    if (bg.gamma == 0.0) {
        double acc = 0.0;
        for (const auto& v : filter.samples) acc += std::norm(v);
        return bg.sigma2 * acc / wh;
    }
    if (std::abs(filter.at(0, 0)) > 1e-9 * std::max(max_mag, 1e-300))
        throw std::invalid_argument(
            "predict_variance: filter must vanish at DC when gamma > 0");
    double acc = 0.0;
    for (int iy = 0; iy < filter.height; ++iy) {
        for (int ix = 0; ix < filter.width; ++ix) {
            if (ix == 0 && iy == 0) continue;
            const FreqPoint p = freq_point(filter, ix, iy);
            acc += std::norm(filter.at(ix, iy)) * std::pow(p.r, -2.0 * bg.gamma);
        }
    }
    return bg.sigma2 * acc / wh;
}

// SNR criterion on the grid: |<T, f>|^2 / Var(<S, f>). Scale-invariant.
inline SnrReport snr(const SpectralGrid& filter, const SpectralGrid& templ,
                     const BackgroundModel& bg) {
    SnrReport rep;
    rep.numerator = std::norm(spectral_dot(templ, filter));
    rep.variance = predict_variance(filter, bg);
    rep.snr = rep.variance > 0.0 ? rep.numerator / rep.variance : 0.0;
    return rep;
}

// Learn the SNR-optimal steerable detector from a single template. r0 <= 0
// selects one DFT bin of the padded grid. The template is zero-padded,
// circularly shifted so its center pixel sits at the origin, transformed, and
// its per-harmonic radial profiles are projected onto radial B-splines with
// the chosen backend. Coefficients are scaled to unit spectral L2 norm.
inline SteerableDetector learn_detector(const RasterGrid& templ, int N, double r0,
                                        double pad_factor, double gamma,
                                        ProjectionBackend backend = ProjectionBackend::exact) {
    if (N < 0) throw std::invalid_argument("learn_detector: N must be >= 0");
    if (gamma < 0.0) throw std::invalid_argument("learn_detector: gamma must be >= 0");
    if (!(pad_factor >= 1.0)) throw std::invalid_argument("learn_detector: pad factor must be >= 1");
    double energy = 0.0;
    for (double v : templ.samples) {
        if (!std::isfinite(v)) throw std::invalid_argument("learn_detector: template not finite");
        energy += v * v;
    }
    if (energy == 0.0) throw std::invalid_argument("learn_detector: template is identically zero");

    SteerableDetector det;
    det.N = N;
    det.pad_factor = pad_factor;
    det.src_width = templ.width;
    det.src_height = templ.height;

    RasterGrid padded = zero_pad(templ, pad_factor);
    det.padded_width = padded.width;
    det.padded_height = padded.height;
    const RasterGrid centered = circular_shift(padded, -padded.center_x(), -padded.center_y());
    const SpectralGrid spec = forward_spectrum(centered);

    det.r0 = r0 > 0.0 ? r0 : two_pi / std::max(padded.width, padded.height);
    det.gamma = gamma;
    det.k_min = -2;
    det.k_max = static_cast<int>(std::ceil(std::numbers::pi * std::numbers::sqrt2 / det.r0));

    const GramSystem gram =
        backend == ProjectionBackend::exact ? radial_gram(det.k_min, det.k_max) : GramSystem{};
    const std::vector<double> hinv =
        backend == ProjectionBackend::paper ? inverse_filter(autocorr_filter()) : std::vector<double>{};

    det.profiles.resize(static_cast<size_t>(2 * N + 1));
    det.d_coeffs.resize(static_cast<size_t>(2 * N + 1));
    for (int n = -N; n <= N; ++n)
        det.d_coeffs[static_cast<size_t>(n + N)] = profile_coefficients(
            spec, n, det.r0, det.k_min, det.k_max, n == 0 ? &det.warnings : nullptr);
    // Solve for n >= 0 and mirror c_{-n} = (-1)^n conj(c_n): exact for real
    // templates, and it keeps the reality symmetry free of solver roundoff.
    for (int n = 0; n <= N; ++n) {
        const auto& d = det.d_coeffs[static_cast<size_t>(n + N)];
        RadialSplineProfile& prof = det.profile(n);
        prof.r0 = det.r0;
        prof.k_min = det.k_min;
        if (backend == ProjectionBackend::exact) {
            // d carries the 1/(2pi) of the inner product; the Gram entries
            // carry the full 2pi-weighted product.
            std::vector<std::complex<double>> rhs(d);
            for (auto& v : rhs) v *= two_pi;
            prof.coeffs = solve_gram<std::complex<double>>(gram, rhs);
        } else {
            prof.coeffs = toeplitz_project(d, hinv);
        }
        if (n == 0) {
            // d_0 is exactly real for real templates; drop roundoff imaginaries
            // before they get amplified by the solve.
            for (auto& c : prof.coeffs) c = std::complex<double>(c.real(), 0.0);
        }
        if (n > 0) {
            RadialSplineProfile& neg = det.profile(-n);
            neg.r0 = det.r0;
            neg.k_min = det.k_min;
            neg.coeffs.resize(prof.coeffs.size());
            const double sign = (n % 2 == 0) ? 1.0 : -1.0;
            for (size_t i = 0; i < prof.coeffs.size(); ++i)
                neg.coeffs[i] = sign * std::conj(prof.coeffs[i]);
        }
    }

    const SpectralGrid synth = synthesize_filter(det, padded.width, padded.height);
    const double nrm = std::sqrt(spectral_norm2(synth));
    if (!(nrm > 0.0)) throw std::runtime_error("learn_detector: degenerate filter (zero norm)");
    det.normalization = 1.0 / nrm;
    for (auto& prof : det.profiles)
        for (auto& c : prof.coeffs) c *= det.normalization;
    return det;
}

// Record a new whitening exponent; the r^(2 gamma) factor is applied
// analytically at synthesis time. gamma = 0 is the identity.
inline SteerableDetector apply_whitening(SteerableDetector det, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("apply_whitening: gamma must be >= 0");
    det.gamma = gamma;
    return det;
}

// Spatial reconstruction of the template from the detector's un-whitened
// spectrum, restricted to harmonics |n| <= use_n (all of them when
// use_n < 0), with a least-squares amplitude fit against the original
// template. Returns the approximation on the padded grid and its RMSE.
inline std::pair<RasterGrid, double> approximate_template(const SteerableDetector& det,
                                                          const RasterGrid& original,
                                                          int use_n = -1) {
    if (original.width != det.src_width || original.height != det.src_height)
        throw std::invalid_argument("approximate_template: template dimensions mismatch");
    SteerableDetector plain = det;
    plain.gamma = 0.0;
    if (use_n >= 0 && use_n < det.N) {
        for (int n = -det.N; n <= det.N; ++n)
            if (std::abs(n) > use_n)
                std::fill(plain.profile(n).coeffs.begin(), plain.profile(n).coeffs.end(),
                          std::complex<double>(0.0));
    }
    const SpectralGrid spec = synthesize_filter(plain, det.padded_width, det.padded_height);
    const RasterGrid at_origin = inverse_spectrum(spec, nullptr, 1e-6);
    const RasterGrid padded_ref = zero_pad(original, det.pad_factor);
    RasterGrid approx = circular_shift(at_origin, padded_ref.center_x(), padded_ref.center_y());
    const double denom = norm2(approx);
    const double alpha = denom > 0.0 ? dot(approx, padded_ref) / denom : 0.0;
    double err2 = 0.0;
    for (size_t i = 0; i < approx.size(); ++i) {
        approx.samples[i] *= alpha;
        const double e = padded_ref.samples[i] - approx.samples[i];
        err2 += e * e;
    }
    return {std::move(approx), std::sqrt(err2 / approx.size())};
}

// ---------------------------------------------------------------------------
// Detector serialization (versioned JSON document).
// ---------------------------------------------------------------------------

inline nlohmann::json detector_to_json(const SteerableDetector& det) {
    nlohmann::json profiles = nlohmann::json::array();
    for (int n = -det.N; n <= det.N; ++n) {
        nlohmann::json coeffs = nlohmann::json::array();
        for (const auto& c : det.profile(n).coeffs)
            coeffs.push_back({c.real(), c.imag()});
        profiles.push_back({{"n", n}, {"coeffs", std::move(coeffs)}});
    }
    return {{"version", 1},
            {"N", det.N},
            {"r0", det.r0},
            {"gamma", det.gamma},
            {"pad_factor", det.pad_factor},
            {"knot_range", {det.k_min, det.k_max}},
            {"normalization", det.normalization},
            {"source_dims", {det.src_width, det.src_height}},
            {"padded_dims", {det.padded_width, det.padded_height}},
            {"profiles", std::move(profiles)}};
}

inline SteerableDetector detector_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("detector_from_json: unknown or missing version");
    SteerableDetector det;
    det.N = j.at("N").get<int>();
    det.r0 = j.at("r0").get<double>();
    det.gamma = j.at("gamma").get<double>();
    det.pad_factor = j.at("pad_factor").get<double>();
    det.k_min = j.at("knot_range")[0].get<int>();
    det.k_max = j.at("knot_range")[1].get<int>();
    det.normalization = j.at("normalization").get<double>();
    det.src_width = j.at("source_dims")[0].get<int>();
    det.src_height = j.at("source_dims")[1].get<int>();
    det.padded_width = j.at("padded_dims")[0].get<int>();
    det.padded_height = j.at("padded_dims")[1].get<int>();
    det.profiles.resize(static_cast<size_t>(2 * det.N + 1));
    const int expected = det.k_max - det.k_min + 1;
    for (const auto& p : j.at("profiles")) {
        const int n = p.at("n").get<int>();
        if (n < -det.N || n > det.N)
            throw std::runtime_error("detector_from_json: harmonic out of range");
        RadialSplineProfile& prof = det.profile(n);
        prof.r0 = det.r0;
        prof.k_min = det.k_min;
        for (const auto& c : p.at("coeffs"))
            prof.coeffs.emplace_back(c[0].get<double>(), c[1].get<double>());
        if (static_cast<int>(prof.coeffs.size()) != expected)
            throw std::runtime_error("detector_from_json: coefficient count mismatch");
    }
    return det;
}

inline void save_detector(const SteerableDetector& det, const std::string& path,
                          const nlohmann::json& provenance = {}) {
    nlohmann::json j = detector_to_json(det);
    if (!provenance.is_null() && !provenance.empty()) j["provenance"] = provenance;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_detector: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline SteerableDetector load_detector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_detector: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_detector: malformed JSON in " + path + ": " + e.what());
    }
    return detector_from_json(j);
}

}  // namespace steerdet
