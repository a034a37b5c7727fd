#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "background.hpp"
#include "detect.hpp"
#include "grid.hpp"
#include "harmonics.hpp"

namespace steerdet {

struct LabeledScore {
    double score = 0.0;
    int label = 0;  // 1 = truth-center pixel
};

// Pixelwise labels: every pixel becomes a (score, label) pair; a pixel is
// positive iff it is the highest-scoring pixel within `radius` of a truth
// center (radius 0 = the unique center pixel). Exactly |truth| positives.
inline std::vector<LabeledScore> score_labels(const RasterGrid& amp, const PlacementList& truth,
                                              double radius = 0.0) {
    if (radius < 0.0) throw std::invalid_argument("score_labels: radius must be >= 0");
    if (radius > 0.0) {
        for (size_t i = 0; i < truth.size(); ++i)
            for (size_t j = i + 1; j < truth.size(); ++j)
                if (std::hypot(truth[i].x - truth[j].x, truth[i].y - truth[j].y) < 2.0 * radius)
                    throw std::invalid_argument("score_labels: overlapping truth discs");
    }
    std::vector<int> labels(amp.size(), 0);
    for (const Placement& p : truth) {
        const int cx = static_cast<int>(std::lround(p.x));
        const int cy = static_cast<int>(std::lround(p.y));
        if (cx < 0 || cx >= amp.width || cy < 0 || cy >= amp.height)
            throw std::invalid_argument("score_labels: truth center outside the map");
        int best_x = -1, best_y = -1;
        double best = -std::numeric_limits<double>::infinity();
        const int rr = static_cast<int>(std::ceil(radius));
        for (int y = std::max(0, cy - rr); y <= std::min(amp.height - 1, cy + rr); ++y) {
            for (int x = std::max(0, cx - rr); x <= std::min(amp.width - 1, cx + rr); ++x) {
                if (std::hypot(x - p.x, y - p.y) > radius && !(x == cx && y == cy && radius == 0.0))
                    continue;
                if (amp.at(x, y) > best) {
                    best = amp.at(x, y);
                    best_x = x;
                    best_y = y;
                }
            }
        }
        if (best_x < 0) throw std::runtime_error("score_labels: no pixel within radius of truth");
        size_t idx = static_cast<size_t>(best_y) * amp.width + best_x;
        if (labels[idx]) throw std::runtime_error("score_labels: two truths map to one pixel");
        labels[idx] = 1;
    }
    std::vector<LabeledScore> out(amp.size());
    for (size_t i = 0; i < amp.size(); ++i) out[i] = {amp.samples[i], labels[i]};
    return out;
}

struct CurvePoint {
    double x = 0.0;  // recall (PR) or false-positive rate (ROC)
    double y = 0.0;  // precision (PR) or true-positive rate (ROC)
};

struct PrRocResult {
    std::vector<CurvePoint> pr;
    std::vector<CurvePoint> roc;
    double pr_auc = 0.0;
    double roc_auc = 0.0;
};

// Threshold sweep over distinct scores (ties grouped), trapezoidal AUC.
inline PrRocResult pr_roc(std::vector<LabeledScore> scored) {
    long pos = 0, neg = 0;
    for (const auto& s : scored) (s.label ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("pr_roc: need at least one positive and one negative");
    std::sort(scored.begin(), scored.end(),
              [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
    PrRocResult res;
    res.roc.push_back({0.0, 0.0});
    long tp = 0, fp = 0;
    size_t i = 0;
    bool first_pr = true;
    while (i < scored.size()) {
        size_t j = i;
        while (j < scored.size() && scored[j].score == scored[i].score) {
            (scored[j].label ? tp : fp)++;
            ++j;
        }
        const double recall = static_cast<double>(tp) / pos;
        const double precision = static_cast<double>(tp) / (tp + fp);
        const double fpr = static_cast<double>(fp) / neg;
        const double tpr = recall;
        if (first_pr) {
            // anchor the PR curve at recall 0 with the first group's precision
            res.pr.push_back({0.0, precision});
            first_pr = false;
        }
        res.pr.push_back({recall, precision});
        res.roc.push_back({fpr, tpr});
        i = j;
    }
    auto trapezoid = [](const std::vector<CurvePoint>& c) {
        double area = 0.0;
        for (size_t k = 1; k < c.size(); ++k)
            area += 0.5 * (c[k].y + c[k - 1].y) * (c[k].x - c[k - 1].x);
        return area;
    };
    res.pr_auc = trapezoid(res.pr);
    res.roc_auc = trapezoid(res.roc);
    return res;
}

// Mean absolute circular error in degrees, modulo 2 pi / symmetry_order.
inline double angular_error(std::span<const double> estimates, const PlacementList& truth,
                            int symmetry_order = 1) {
    if (truth.empty()) throw std::invalid_argument("angular_error: empty truth list");
    if (estimates.size() != truth.size())
        throw std::invalid_argument("angular_error: estimate/truth size mismatch");
    if (symmetry_order < 1) throw std::invalid_argument("angular_error: order must be >= 1");
    const double period = two_pi / symmetry_order;
    double acc = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        double d = std::fmod(estimates[i] - truth[i].theta, period);
        if (d < 0.0) d += period;
        d = std::min(d, period - d);
        acc += d;
    }
    return (acc / truth.size()) * 180.0 / std::numbers::pi;
}

struct EvalReport {
    double sigma = 1.0;
    int N = 0;
    int M = 1;
    double gamma = 0.0;  // whitening exponent actually applied
    bool whitening = false;
    long seed = 0;
    double pr_auc = 0.0;
    double roc_auc = 0.0;
    double ang_err_deg = 0.0;
    double runtime_ms = 0.0;
};

// Shared synthetic-experiment settings (template blending geometry, detector
// hyper-parameters, evaluation knobs).
struct FixtureConfig {
    int width = 600, height = 600;
    double bg_gamma = 1.2;  // synthesis exponent
    int placements = 10;
    double min_spacing = 150.0;
    double amplitude = 1.0;
    double r0 = 0.0;  // <= 0: one DFT bin of the padded template
    double pad_factor = 2.0;
    int symmetry_order = 1;
    double label_radius = 0.0;
    int threads = 0;
};

struct FixtureResult {
    RasterGrid image;
    PlacementList truth;
    SteerableDetector detector;
    ResponseMaps maps;
    double runtime_ms = 0.0;  // detection path only (responses + steering)
};

// Synthesize background, blend `placements` rotated template copies, learn a
// detector (whitened by `gamma` when requested), and run the detection path.
inline FixtureResult run_fixture(const RasterGrid& templ, const FixtureConfig& cfg, double sigma,
                                 int N, int M, double gamma, bool whitening, uint64_t seed) {
    FixtureResult res;
    const BackgroundModel bg(cfg.bg_gamma, sigma * sigma);
    RasterGrid field = synthesize_iss(cfg.width, cfg.height, bg, seed);
    const double extent = 0.5 * std::hypot(static_cast<double>(templ.width),
                                           static_cast<double>(templ.height));
    res.truth = random_placements(cfg.placements, cfg.width, cfg.height, extent, cfg.min_spacing,
                                  seed ^ 0x9e3779b97f4a7c15ULL);
    res.image = blend_templates(field, templ, res.truth, cfg.amplitude);
    SteerableDetector det = learn_detector(templ, N, cfg.r0, cfg.pad_factor, 0.0);
    if (whitening) det = apply_whitening(det, gamma);
    res.detector = std::move(det);
    const auto t0 = std::chrono::steady_clock::now();
    const HarmonicResponses resp = basis_responses(res.image, res.detector, cfg.threads);
    res.maps = steer(resp, M, cfg.threads);
    res.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// PR/ROC and angular error of one fixture run. Angular estimates are read
// from the ang map at the rounded truth centers.
inline EvalReport evaluate_fixture(const FixtureResult& res, const FixtureConfig& cfg) {
    EvalReport rep;
    const auto scored = score_labels(res.maps.amp, res.truth, cfg.label_radius);
    const PrRocResult curves = pr_roc(scored);
    rep.pr_auc = curves.pr_auc;
    rep.roc_auc = curves.roc_auc;
    std::vector<double> est;
    for (const Placement& p : res.truth) {
        const int cx = static_cast<int>(std::lround(p.x));
        const int cy = static_cast<int>(std::lround(p.y));
        est.push_back(res.maps.ang.at(cx, cy));
    }
    rep.ang_err_deg = angular_error(est, res.truth, cfg.symmetry_order);
    rep.runtime_ms = res.runtime_ms;
    return rep;
}

struct SweepConfig {
    FixtureConfig fixture;
    std::vector<double> sigmas{1.0};
    std::vector<int> Ns{8};
    std::vector<int> Ms{30};
    std::vector<double> gammas{1.2};
    std::vector<int> whitenings{1};  // 0 = off, 1 = on
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
};

// Full parameter sweep; one report per (config, seed) followed by one
// seed-averaged row per config (seed = -1).
inline std::vector<EvalReport> sweep(const RasterGrid& templ, const SweepConfig& cfg) {
    std::vector<EvalReport> rows;
    for (double sigma : cfg.sigmas) {
        for (int N : cfg.Ns) {
            for (int M : cfg.Ms) {
                for (double gamma : cfg.gammas) {
                    for (int wh : cfg.whitenings) {
                        EvalReport avg;
                        avg.sigma = sigma;
                        avg.N = N;
                        avg.M = M;
                        avg.gamma = wh ? gamma : 0.0;
                        avg.whitening = wh != 0;
                        avg.seed = -1;
                        for (uint64_t seed : cfg.seeds) {
                            FixtureResult res;
                            try {
                                res = run_fixture(templ, cfg.fixture, sigma, N, M, gamma,
                                                  wh != 0, seed);
                            } catch (const std::exception& e) {
                                throw std::runtime_error(
                                    "sweep: cell sigma=" + std::to_string(sigma) +
                                    " N=" + std::to_string(N) + " M=" + std::to_string(M) +
                                    " gamma=" + std::to_string(gamma) +
                                    " whitening=" + std::to_string(wh) +
                                    " seed=" + std::to_string(seed) + " failed: " + e.what());
                            }
                            EvalReport rep = evaluate_fixture(res, cfg.fixture);
                            rep.sigma = sigma;
                            rep.N = N;
                            rep.M = M;
                            rep.gamma = avg.gamma;
                            rep.whitening = wh != 0;
                            rep.seed = static_cast<long>(seed);
                            avg.pr_auc += rep.pr_auc;
                            avg.roc_auc += rep.roc_auc;
                            avg.ang_err_deg += rep.ang_err_deg;
                            avg.runtime_ms += rep.runtime_ms;
                            rows.push_back(rep);
                        }
                        const double k = static_cast<double>(cfg.seeds.size());
                        avg.pr_auc /= k;
                        avg.roc_auc /= k;
                        avg.ang_err_deg /= k;
                        avg.runtime_ms /= k;
                        rows.push_back(avg);
                    }
                }
            }
        }
    }
    return rows;
}

inline void write_sweep_csv(const std::vector<EvalReport>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_sweep_csv: cannot open " + path);
    out << "sigma,N,M,gamma,whitening,seed,pr_auc,roc_auc,ang_err_deg,runtime_ms\n";
    out.precision(12);
    for (const EvalReport& r : rows)
        out << r.sigma << "," << r.N << "," << r.M << "," << r.gamma << ","
            << (r.whitening ? 1 : 0) << "," << r.seed << "," << r.pr_auc << "," << r.roc_auc
            << "," << r.ang_err_deg << "," << r.runtime_ms << "\n";
}

}  // namespace steerdet
