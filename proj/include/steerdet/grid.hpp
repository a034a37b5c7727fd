#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fft.hpp"

namespace steerdet {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Real-valued 2-D sample grid (templates, backgrounds, images, response maps).
// Samples are row-major: samples[y * width + x].
struct RasterGrid {
    int width = 0;
    int height = 0;
    std::vector<double> samples;

    RasterGrid() = default;
    RasterGrid(int w, int h, double fill = 0.0) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("RasterGrid: dimensions must be >= 1");
        samples.assign(static_cast<size_t>(w) * h, fill);
    }

    double& at(int x, int y) { return samples[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return samples[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return samples.size(); }

    // Nominal center pixel; rotations and ground-truth positions refer to it.
    int center_x() const { return (width - 1) / 2; }
    int center_y() const { return (height - 1) / 2; }
};

// Complex DFT samples of a RasterGrid, same row-major layout.
// Convention: unnormalized forward transform; the inverse carries 1/(width*height).
struct SpectralGrid {
    int width = 0;
    int height = 0;
    std::vector<std::complex<double>> samples;

    SpectralGrid() = default;
    SpectralGrid(int w, int h) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("SpectralGrid: dimensions must be >= 1");
        samples.assign(static_cast<size_t>(w) * h, {0.0, 0.0});
    }

    std::complex<double>& at(int x, int y) { return samples[static_cast<size_t>(y) * width + x]; }
    std::complex<double> at(int x, int y) const { return samples[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return samples.size(); }
};

// One DFT bin expressed as a frequency point, radians/pixel on [-pi, pi)^2.
struct FreqPoint {
    double wx = 0.0;
    double wy = 0.0;
    double r = 0.0;
    double theta = 0.0;  // [0, 2*pi); 0 at r = 0 by convention
};

// Signed frequency of DFT index i on an n-point axis; Nyquist (even n) maps to -pi.
inline double freq_of_index(int i, int n) {
    const int k = (i <= (n - 1) / 2) ? i : i - n;
    return two_pi * k / n;
}

inline FreqPoint freq_point(const SpectralGrid& s, int ix, int iy) {
    if (ix < 0 || ix >= s.width || iy < 0 || iy >= s.height)
        throw std::out_of_range("freq_point: index out of range");
    FreqPoint p;
    p.wx = freq_of_index(ix, s.width);
    p.wy = freq_of_index(iy, s.height);
    p.r = std::hypot(p.wx, p.wy);
    if (p.r == 0.0) {
        p.theta = 0.0;
    } else {
        p.theta = std::atan2(p.wy, p.wx);
        if (p.theta < 0.0) p.theta += two_pi;
        if (p.theta >= two_pi) p.theta = 0.0;
    }
    return p;
}

inline SpectralGrid forward_spectrum(const RasterGrid& g) {
    SpectralGrid s(g.width, g.height);
    std::vector<std::complex<double>> in(g.samples.begin(), g.samples.end());
    detail::dft2d(g.width, g.height, in.data(), s.samples.data(), FFTW_FORWARD);
    return s;
}

inline SpectralGrid forward_spectrum_complex(const std::vector<std::complex<double>>& v, int w, int h) {
    SpectralGrid s(w, h);
    detail::dft2d(w, h, v.data(), s.samples.data(), FFTW_FORWARD);
    return s;
}

// Inverse DFT returning the full complex field (normalized by 1/(width*height)).
inline std::vector<std::complex<double>> inverse_spectrum_complex(const SpectralGrid& s) {
    std::vector<std::complex<double>> out(s.size());
    detail::dft2d(s.width, s.height, s.samples.data(), out.data(), FFTW_BACKWARD);
    const double scale = 1.0 / (static_cast<double>(s.width) * s.height);
    for (auto& v : out) v *= scale;
    return out;
}

// Inverse DFT of a (nominally Hermitian) spectrum. The imaginary residue is
// discarded; its relative magnitude is reported through *imag_residue and an
// error is raised above `tol`, which signals a symmetry bug upstream.
inline RasterGrid inverse_spectrum(const SpectralGrid& s, double* imag_residue = nullptr,
                                   double tol = 1e-8) {
    auto full = inverse_spectrum_complex(s);
    double spec_mag = 0.0;
    for (const auto& v : s.samples) spec_mag = std::max(spec_mag, std::abs(v));
    double max_imag = 0.0;
    RasterGrid g(s.width, s.height);
    for (size_t i = 0; i < full.size(); ++i) {
        g.samples[i] = full[i].real();
        max_imag = std::max(max_imag, std::abs(full[i].imag()));
    }
    const double scale = 1.0 / (static_cast<double>(s.width) * s.height);
    const double rel = spec_mag > 0.0 ? max_imag / (spec_mag * scale) : 0.0;
    if (imag_residue) *imag_residue = rel;
    if (rel > tol)
        throw std::runtime_error("inverse_spectrum: imaginary residue " + std::to_string(rel) +
                                 " exceeds tolerance (non-Hermitian input?)");
    return g;
}

// Centered zero padding to ceil(factor * dims). Energy is preserved exactly.
inline RasterGrid zero_pad(const RasterGrid& g, double factor) {
    if (!(factor >= 1.0)) throw std::invalid_argument("zero_pad: factor must be >= 1");
    const int nw = static_cast<int>(std::ceil(factor * g.width));
    const int nh = static_cast<int>(std::ceil(factor * g.height));
    RasterGrid out(nw, nh);
    const int ox = (nw - g.width) / 2;
    const int oy = (nh - g.height) / 2;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(x + ox, y + oy) = g.at(x, y);
    return out;
}

// Periodic shift: out(x, y) = in((x - dx) mod W, (y - dy) mod H).
inline RasterGrid circular_shift(const RasterGrid& g, int dx, int dy) {
    RasterGrid out(g.width, g.height);
    auto wrap = [](int v, int n) {
        v %= n;
        return v < 0 ? v + n : v;
    };
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            out.at(x, y) = g.at(wrap(x - dx, g.width), wrap(y - dy, g.height));
    return out;
}

inline double dot(const RasterGrid& a, const RasterGrid& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.samples[i] * b.samples[i];
    return s;
}

inline double norm2(const RasterGrid& g) { return dot(g, g); }

// ---------------------------------------------------------------------------
// File I/O. Raw grid format: binary payload of little-endian IEEE-754 values
// at `path` plus a JSON sidecar header at `path + ".json"`:
//   {"width": W, "height": H, "dtype": "f32"|"f64", "order": "row-major"}
// PGM (P5, 8/16-bit) is accepted for ingestion only; values scale to [0, 1].
// ---------------------------------------------------------------------------

inline void write_grid(const RasterGrid& g, const std::string& path,
                       const std::string& dtype = "f64") {
    if (dtype != "f32" && dtype != "f64")
        throw std::invalid_argument("write_grid: dtype must be f32 or f64");
    nlohmann::json header = {
        {"width", g.width}, {"height", g.height}, {"dtype", dtype}, {"order", "row-major"}};
    std::ofstream hs(path + ".json");
    if (!hs) throw std::runtime_error("write_grid: cannot open " + path + ".json");
    hs << header.dump(2) << "\n";

    std::ofstream bs(path, std::ios::binary);
    if (!bs) throw std::runtime_error("write_grid: cannot open " + path);
    if (dtype == "f64") {
        bs.write(reinterpret_cast<const char*>(g.samples.data()),
                 static_cast<std::streamsize>(g.size() * sizeof(double)));
    } else {
        std::vector<float> f(g.samples.begin(), g.samples.end());
        bs.write(reinterpret_cast<const char*>(f.data()),
                 static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    if (!bs) throw std::runtime_error("write_grid: write failed for " + path);
}

inline RasterGrid read_grid(const std::string& path) {
    std::ifstream hs(path + ".json");
    if (!hs) throw std::runtime_error("read_grid: missing header " + path + ".json");
    nlohmann::json header;
    try {
        hs >> header;
    } catch (const std::exception& e) {
        throw std::runtime_error("read_grid: malformed header " + path + ".json: " + e.what());
    }
    if (!header.contains("width") || !header.contains("height") || !header.contains("dtype"))
        throw std::runtime_error("read_grid: header misses width/height/dtype: " + path);
    const int w = header["width"].get<int>();
    const int h = header["height"].get<int>();
    const std::string dtype = header["dtype"].get<std::string>();
    if (w < 1 || h < 1) throw std::runtime_error("read_grid: invalid dimensions in " + path);
    if (dtype != "f32" && dtype != "f64")
        throw std::runtime_error("read_grid: unsupported dtype " + dtype);
    if (header.value("order", "row-major") != "row-major")
        throw std::runtime_error("read_grid: unsupported sample order in " + path);

    std::ifstream bs(path, std::ios::binary);
    if (!bs) throw std::runtime_error("read_grid: cannot open " + path);
    RasterGrid g(w, h);
    const size_t n = g.size();
    if (dtype == "f64") {
        bs.read(reinterpret_cast<char*>(g.samples.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (static_cast<size_t>(bs.gcount()) != n * sizeof(double))
            throw std::runtime_error("read_grid: truncated payload " + path);
    } else {
        std::vector<float> f(n);
        bs.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (static_cast<size_t>(bs.gcount()) != n * sizeof(float))
            throw std::runtime_error("read_grid: truncated payload " + path);
        for (size_t i = 0; i < n; ++i) g.samples[i] = f[i];
    }
    for (double v : g.samples)
        if (!std::isfinite(v)) throw std::runtime_error("read_grid: non-finite payload " + path);
    return g;
}

inline RasterGrid read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        in >> tok;
        if (tok.empty()) throw std::runtime_error("read_pgm: malformed header " + path);
        return tok;
    };
    if (next_token() != "P5") throw std::runtime_error("read_pgm: not a P5 PGM: " + path);
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw std::runtime_error("read_pgm: malformed header " + path);
    in.get();  // single whitespace after maxval
    RasterGrid g(w, h);
    const size_t n = g.size();
    if (maxval <= 255) {
        std::vector<uint8_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n)
            throw std::runtime_error("read_pgm: truncated payload " + path);
        for (size_t i = 0; i < n; ++i) g.samples[i] = buf[i] / static_cast<double>(maxval);
    } else {
        std::vector<uint8_t> buf(2 * n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
        if (static_cast<size_t>(in.gcount()) != 2 * n)
            throw std::runtime_error("read_pgm: truncated payload " + path);
        for (size_t i = 0; i < n; ++i) {
            const int v = (buf[2 * i] << 8) | buf[2 * i + 1];  // big-endian per PGM
            g.samples[i] = v / static_cast<double>(maxval);
        }
    }
    return g;
}

}  // namespace steerdet
