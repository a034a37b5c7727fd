#pragma once

#include <cmath>

#include "grid.hpp"

namespace steerdet {

// Isotropic Gaussian bump centered on the grid's center pixel.
inline RasterGrid gaussian_bump(int size, double sigma) {
    RasterGrid g(size, size);
    const double cx = g.center_x(), cy = g.center_y();
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            g.at(x, y) = std::exp(-0.5 * r2 / (sigma * sigma));
        }
    return g;
}

// Two equal Gaussian blobs on the horizontal axis: a pattern with two-fold
// rotational symmetry dominated by the even harmonics (n = 0, +/-2).
inline RasterGrid two_blob_template(int size, double separation, double sigma) {
    RasterGrid g(size, size);
    const double cx = g.center_x(), cy = g.center_y();
    const double off = 0.5 * separation;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dl = (x - cx + off) * (x - cx + off) + (y - cy) * (y - cy);
            const double dr = (x - cx - off) * (x - cx - off) + (y - cy) * (y - cy);
            g.at(x, y) = std::exp(-0.5 * dl / (sigma * sigma)) +
                         std::exp(-0.5 * dr / (sigma * sigma));
        }
    return g;
}

// Hand-drawn-style asymmetric mark: three unequal blobs scattered on an
// off-center ring (no rotational symmetry; rich odd and even harmonics).
// Zero-mean so the spectrum carries little energy near DC.
inline RasterGrid asymmetric_template(int size) {
    RasterGrid g(size, size);
    const double cx = g.center_x(), cy = g.center_y();
    const double s = size / 49.0;
    struct Blob {
        double rho, phi, sigma, amp;
    };
    const Blob blobs[] = {
        {11.0 * s, 0.3, 2.2 * s, 1.0},
        {10.0 * s, 2.1, 2.0 * s, 0.8},
        {12.0 * s, 4.0, 2.4 * s, 1.2},
    };
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (const Blob& b : blobs) {
                const double dx = x - cx - b.rho * std::cos(b.phi);
                const double dy = y - cy - b.rho * std::sin(b.phi);
                v += b.amp * std::exp(-0.5 * (dx * dx + dy * dy) / (b.sigma * b.sigma));
            }
            g.at(x, y) = v;
        }
    double mean = 0.0;
    for (double v : g.samples) mean += v;
    mean /= static_cast<double>(g.samples.size());
    for (double& v : g.samples) v -= mean;
    return g;
}

}  // namespace steerdet
