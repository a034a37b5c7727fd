#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "grid.hpp"
#include "harmonics.hpp"
#include "parallel.hpp"

namespace steerdet {

enum class Boundary { periodic, zeropad };

// Per-harmonic steering basis responses u_n. Only n = 0..N is stored: for a
// real image and a reality-symmetric detector, u_{-n} = conj(u_n).
struct HarmonicResponses {
    int N = 0;
    int width = 0;
    int height = 0;
    std::vector<std::vector<std::complex<double>>> maps;  // maps[n], n = 0..N

    std::complex<double> u(int n, int x, int y) const {
        const size_t idx = static_cast<size_t>(y) * width + x;
        if (n >= 0) return maps[static_cast<size_t>(n)][idx];
        return std::conj(maps[static_cast<size_t>(-n)][idx]);
    }

    // Steered response Re[sum_n e^{jn alpha} u_n] at one pixel.
    double response(int x, int y, double alpha) const {
        const size_t idx = static_cast<size_t>(y) * width + x;
        double acc = maps[0][idx].real();
        const std::complex<double> e1 = std::polar(1.0, alpha);
        std::complex<double> e = 1.0;
        for (int n = 1; n <= N; ++n) {
            e *= e1;
            acc += 2.0 * (e * maps[static_cast<size_t>(n)][idx]).real();
        }
        return acc;
    }
};

// Amplitude/orientation maps over an M-angle grid (argmax steering model):
// amp(x) = max_alpha response(x, alpha), ang(x) = the maximizing grid angle.
struct ResponseMaps {
    RasterGrid amp;
    RasterGrid ang;  // radians, values on {2 pi m / M}
    int M = 1;
};

struct Detection {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double score = 0.0;
};

namespace detail {

// Spectrum of the detector's harmonic-n component on a W x H frequency grid:
// r^{2 gamma} * f_n(r) * e^{jn theta}.
inline SpectralGrid harmonic_kernel(const SteerableDetector& det, int width, int height, int n) {
    SpectralGrid out(width, height);
    const RadialSplineProfile& prof = det.profile(n);
    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            const FreqPoint p = freq_point(out, ix, iy);
            if (p.r == 0.0 && n != 0) continue;
            const std::complex<double> radial = prof.eval(p.r);
            if (radial == std::complex<double>(0.0)) continue;
            const double whiten = det.gamma > 0.0 ? std::pow(p.r, 2.0 * det.gamma) : 1.0;
            out.at(ix, iy) = radial * whiten * std::polar(1.0, n * p.theta);
        }
    }
    return out;
}

// u_n = IDFT[ I_hat * conj(kernel_n) ] for one harmonic (any sign of n).
inline std::vector<std::complex<double>> harmonic_response(const SpectralGrid& image_spec,
                                                           const SteerableDetector& det, int n) {
    SpectralGrid kernel = harmonic_kernel(det, image_spec.width, image_spec.height, n);
    for (size_t i = 0; i < kernel.size(); ++i)
        kernel.samples[i] = image_spec.samples[i] * std::conj(kernel.samples[i]);
    return inverse_spectrum_complex(kernel);
}

}  // namespace detail

// Single-harmonic response map for an arbitrary n in [-N, N] (diagnostics and
// symmetry checks; the production path uses basis_responses).
inline std::vector<std::complex<double>> harmonic_response(const RasterGrid& image,
                                                           const SteerableDetector& det, int n) {
    if (n < -det.N || n > det.N)
        throw std::invalid_argument("harmonic_response: harmonic out of range");
    return detail::harmonic_response(forward_spectrum(image), det, n);
}

// All steering basis responses for n = 0..N, periodic boundary by default.
// The zeropad mode embeds the image in a frame of zeros one template
// half-extent wide to suppress wraparound, then crops back.
inline HarmonicResponses basis_responses(const RasterGrid& image, const SteerableDetector& det,
                                         int threads = 0,
                                         Boundary boundary = Boundary::periodic) {
    if (image.width < det.src_width || image.height < det.src_height)
        throw std::invalid_argument("basis_responses: image smaller than template");
    if (boundary == Boundary::zeropad) {
        const int m = (std::max(det.src_width, det.src_height) + 1) / 2;
        RasterGrid padded(image.width + 2 * m, image.height + 2 * m);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) padded.at(x + m, y + m) = image.at(x, y);
        HarmonicResponses full = basis_responses(padded, det, threads, Boundary::periodic);
        HarmonicResponses out;
        out.N = det.N;
        out.width = image.width;
        out.height = image.height;
        out.maps.resize(static_cast<size_t>(det.N + 1));
        for (int n = 0; n <= det.N; ++n) {
            auto& dst = out.maps[static_cast<size_t>(n)];
            dst.resize(image.size());
            for (int y = 0; y < image.height; ++y)
                for (int x = 0; x < image.width; ++x)
                    dst[static_cast<size_t>(y) * image.width + x] = full.u(n, x + m, y + m);
        }
        return out;
    }
    const SpectralGrid image_spec = forward_spectrum(image);
    HarmonicResponses out;
    out.N = det.N;
    out.width = image.width;
    out.height = image.height;
    out.maps.resize(static_cast<size_t>(det.N + 1));
    detail::parallel_for(det.N + 1, threads, [&](long n) {
        out.maps[static_cast<size_t>(n)] =
            detail::harmonic_response(image_spec, det, static_cast<int>(n));
    });
    return out;
}

// Max/argmax of the steered response over the M-angle grid {2 pi m / M}.
// Ties break toward the smaller angle; row-parallel, deterministic.
inline ResponseMaps steer(const HarmonicResponses& resp, int M, int threads = 0) {
    if (M < 1) throw std::invalid_argument("steer: M must be >= 1");
    ResponseMaps out;
    out.M = M;
    out.amp = RasterGrid(resp.width, resp.height);
    out.ang = RasterGrid(resp.width, resp.height);
    const int N = resp.N;
    // phases[m * N + (n-1)] = e^{j n alpha_m}
    std::vector<std::complex<double>> phases(static_cast<size_t>(M) * std::max(N, 1));
    for (int m = 0; m < M; ++m) {
        const std::complex<double> e1 = std::polar(1.0, two_pi * m / M);
        std::complex<double> e = 1.0;
        for (int n = 1; n <= N; ++n) {
            e *= e1;
            phases[static_cast<size_t>(m) * N + (n - 1)] = e;
        }
    }
    detail::parallel_for(resp.height, threads, [&](long y) {
        std::vector<std::complex<double>> un(static_cast<size_t>(N));
        for (int x = 0; x < resp.width; ++x) {
            const size_t idx = static_cast<size_t>(y) * resp.width + x;
            const double u0 = resp.maps[0][idx].real();
            for (int n = 1; n <= N; ++n) un[static_cast<size_t>(n - 1)] = resp.maps[static_cast<size_t>(n)][idx];
            double best = -std::numeric_limits<double>::infinity();
            int best_m = 0;
            for (int m = 0; m < M; ++m) {
                double v = u0;
                const std::complex<double>* ph = &phases[static_cast<size_t>(m) * N];
                for (int n = 0; n < N; ++n)
                    v += 2.0 * (ph[n].real() * un[static_cast<size_t>(n)].real() -
                                ph[n].imag() * un[static_cast<size_t>(n)].imag());
                if (v > best) {
                    best = v;
                    best_m = m;
                }
            }
            out.amp.samples[idx] = best;
            out.ang.samples[idx] = two_pi * best_m / M;
        }
    });
    return out;
}

// Sub-grid refinement of the argmax angle at one pixel. Closed form when a
// single harmonic order carries the angular dependence; otherwise one Newton
// step on the response derivative, clamped to +/- pi/M around alpha0 and
// falling back to alpha0 when the curvature is not negative.
inline double refine_angle(const HarmonicResponses& resp, int x, int y, double alpha0, int M) {
    if (M < 1) throw std::invalid_argument("refine_angle: M must be >= 1");
    const size_t idx = static_cast<size_t>(y) * resp.width + x;
    const double half_bin = std::numbers::pi / M;
    int active = 0, only_n = 0;
    for (int n = 1; n <= resp.N; ++n) {
        if (std::abs(resp.maps[static_cast<size_t>(n)][idx]) > 0.0) {
            ++active;
            only_n = n;
        }
    }
    if (active == 0) return alpha0;
    if (active == 1) {
        // response = u0 + 2|u_n| cos(n alpha + arg u_n): maxima at
        // alpha = (-arg u_n + 2 pi k) / n; pick the branch nearest alpha0.
        const double phase = std::arg(resp.maps[static_cast<size_t>(only_n)][idx]);
        const double period = two_pi / only_n;
        double a = (-phase) / only_n;
        a -= period * std::round((a - alpha0) / period);
        return std::clamp(a, alpha0 - half_bin, alpha0 + half_bin);
    }
    double d1 = 0.0, d2 = 0.0;
    const std::complex<double> e1 = std::polar(1.0, alpha0);
    std::complex<double> e = 1.0;
    for (int n = 1; n <= resp.N; ++n) {
        e *= e1;
        const std::complex<double> term = e * resp.maps[static_cast<size_t>(n)][idx];
        d1 += -2.0 * n * term.imag();
        d2 += -2.0 * n * n * term.real();
    }
    if (d2 >= 0.0) return alpha0;
    return std::clamp(alpha0 - d1 / d2, alpha0 - half_bin, alpha0 + half_bin);
}

// Report an angle modulo the template's rotational symmetry order s, into
// [0, 2 pi / s).
inline double reduce_angle(double theta, int symmetry_order) {
    if (symmetry_order < 1) throw std::invalid_argument("reduce_angle: order must be >= 1");
    const double period = two_pi / symmetry_order;
    double a = std::fmod(theta, period);
    if (a < 0.0) a += period;
    if (a >= period) a = 0.0;
    return a;
}

// Greedy non-maximum suppression over local maxima of amp, descending score.
// A pixel is a candidate when its amp is >= every in-bounds 8-neighbor; ties
// in score break toward smaller (y, x).
inline std::vector<Detection> nms_detect(const ResponseMaps& maps, double threshold,
                                         double min_distance) {
    if (min_distance < 0.0) throw std::invalid_argument("nms_detect: min_distance must be >= 0");
    const RasterGrid& amp = maps.amp;
    struct Cand {
        double score;
        int x, y;
    };
    std::vector<Cand> cands;
    for (int y = 0; y < amp.height; ++y) {
        for (int x = 0; x < amp.width; ++x) {
            const double v = amp.at(x, y);
            if (v < threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || nx >= amp.width || ny < 0 || ny >= amp.height) continue;
                    if (amp.at(nx, ny) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) cands.push_back({v, x, y});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    std::vector<Detection> out;
    for (const Cand& c : cands) {
        bool ok = true;
        for (const Detection& d : out) {
            if (std::hypot(c.x - d.x, c.y - d.y) < min_distance) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back({static_cast<double>(c.x), static_cast<double>(c.y),
                               maps.ang.at(c.x, c.y), c.score});
    }
    return out;
}

// Detections CSV: header `x,y,theta_rad,score`, sorted by descending score.
inline void write_detections_csv(const std::vector<Detection>& dets, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_detections_csv: cannot open " + path);
    out << "x,y,theta_rad,score\n";
    out.precision(17);
    for (const Detection& d : dets)
        out << d.x << "," << d.y << "," << d.theta << "," << d.score << "\n";
}

inline std::vector<Detection> read_detections_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_detections_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,y,theta_rad,score", 0) != 0)
        throw std::runtime_error("read_detections_csv: bad header in " + path);
    std::vector<Detection> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        Detection d;
        char c1, c2, c3;
        if (!(ss >> d.x >> c1 >> d.y >> c2 >> d.theta >> c3 >> d.score) || c1 != ',' ||
            c2 != ',' || c3 != ',')
            throw std::runtime_error("read_detections_csv: bad row in " + path);
        out.push_back(d);
    }
    return out;
}

}  // namespace steerdet
