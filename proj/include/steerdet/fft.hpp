#pragma once

#include <complex>
#include <mutex>

#include <fftw3.h>

namespace steerdet::detail {

// FFTW plan creation/destruction is not thread-safe; execution is.
inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

// 2-D complex DFT, row-major, height rows of width samples.
// sign: FFTW_FORWARD or FFTW_BACKWARD. Unnormalized in both directions.
inline void dft2d(int width, int height, const std::complex<double>* in,
                  std::complex<double>* out, int sign) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan = fftw_plan_dft_2d(
            height, width,
            reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
            reinterpret_cast<fftw_complex*>(out), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
}

}  // namespace steerdet::detail
