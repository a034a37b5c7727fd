#include <sys/resource.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <steerdet/steerdet.hpp>

namespace {

constexpr const char* kVersion = "1.0.0";

using steerdet::RasterGrid;

RasterGrid load_image(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0)
        return steerdet::read_pgm(path);
    return steerdet::read_grid(path);
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    if (out.empty()) throw std::invalid_argument("empty list: " + s);
    return out;
}

// Provenance sidecar: the fully resolved configuration next to each artifact.
void write_meta(const std::string& out_path, const std::string& command,
                const nlohmann::json& config) {
    nlohmann::json meta = {{"tool", "steerdet"},
                           {"version", kVersion},
                           {"command", command},
                           {"config", config}};
    std::ofstream f(out_path + ".meta.json");
    if (!f) throw std::runtime_error("cannot open " + out_path + ".meta.json");
    f << meta.dump(2) << "\n";
}

long peak_rss_kb() {
    struct rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return ru.ru_maxrss;
}

int run(int argc, char** argv) {
    CLI::App app{"SNR-optimal steerable detector pipeline"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = all cores)");

    // ---- learn ----
    auto* learn = app.add_subcommand("learn", "learn a detector from a template image");
    std::string learn_template, learn_out = "detector.json", learn_backend = "exact";
    int learn_n = 8;
    double learn_r0 = 0.0, learn_pad = 2.0, learn_gamma = 0.0;
    learn->add_option("--template", learn_template, "template image (raw grid or .pgm)")
        ->required();
    learn->add_option("--n", learn_n, "number of harmonics N (set H = {-N..N})");
    learn->add_option("--r0", learn_r0, "radial knot step, radians/pixel (0 = one DFT bin)");
    learn->add_option("--pad", learn_pad, "zero-padding factor");
    learn->add_option("--gamma", learn_gamma, "whitening exponent");
    learn->add_option("--backend", learn_backend, "projection backend: exact|paper");
    learn->add_option("--out", learn_out, "output detector JSON");

    // ---- detect ----
    auto* det_cmd = app.add_subcommand("detect", "run the detector over an image");
    std::string det_image, det_detector, det_amp_out, det_ang_out, det_csv_out,
        det_boundary = "periodic";
    int det_m = 30, det_symmetry = 1;
    double det_threshold = -std::numeric_limits<double>::infinity(), det_min_dist = 10.0;
    bool det_refine = false;
    det_cmd->add_option("--image", det_image, "input image")->required();
    det_cmd->add_option("--detector", det_detector, "detector JSON")->required();
    det_cmd->add_option("--m", det_m, "number of tested angles M");
    det_cmd->add_option("--threshold", det_threshold, "detection score threshold");
    det_cmd->add_option("--min-distance", det_min_dist, "minimum distance between detections");
    det_cmd->add_option("--symmetry", det_symmetry, "template rotational symmetry order");
    det_cmd->add_option("--boundary", det_boundary, "boundary handling: periodic|zeropad");
    det_cmd->add_flag("--refine", det_refine, "Newton-refine detection angles");
    det_cmd->add_option("--amp-out", det_amp_out, "amplitude map output (raw grid)");
    det_cmd->add_option("--ang-out", det_ang_out, "orientation map output (raw grid)");
    det_cmd->add_option("--detections-out", det_csv_out, "detections CSV output");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "synthesize an ISS Gaussian background");
    int synth_w = 512, synth_h = 512;
    double synth_gamma = 1.2, synth_sigma = 1.0;
    uint64_t synth_seed = 1;
    std::string synth_out = "background.f64";
    synth->add_option("--width", synth_w, "field width");
    synth->add_option("--height", synth_h, "field height");
    synth->add_option("--gamma", synth_gamma, "self-similarity exponent");
    synth->add_option("--sigma", synth_sigma, "innovation standard deviation");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "output raw grid");

    // ---- blend ----
    auto* blend = app.add_subcommand("blend", "blend rotated template copies onto a background");
    std::string blend_bg, blend_template, blend_placements, blend_out = "image.f64",
                                                            blend_placements_out;
    int blend_count = 10;
    double blend_spacing = 150.0, blend_amplitude = 1.0;
    uint64_t blend_seed = 1;
    blend->add_option("--background", blend_bg, "background raw grid")->required();
    blend->add_option("--template", blend_template, "template image")->required();
    blend->add_option("--placements", blend_placements,
                      "placements CSV (if absent, random placements are drawn)");
    blend->add_option("--count", blend_count, "number of random placements");
    blend->add_option("--spacing", blend_spacing, "minimum spacing for random placements");
    blend->add_option("--amplitude", blend_amplitude, "template amplitude");
    blend->add_option("--seed", blend_seed, "RNG seed for random placements");
    blend->add_option("--out", blend_out, "output image raw grid");
    blend->add_option("--placements-out", blend_placements_out, "write the used placements CSV");

    // ---- estimate-gamma ----
    auto* eg = app.add_subcommand("estimate-gamma", "estimate the self-similarity exponent");
    std::string eg_field, eg_scales = "2,4,8,16,32";
    eg->add_option("--field", eg_field, "input field raw grid")->required();
    eg->add_option("--scales", eg_scales, "comma-separated analysis scales");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "PR/ROC + angular error of response maps vs. truth");
    std::string ev_amp, ev_ang, ev_truth, ev_out;
    double ev_radius = 0.0;
    int ev_symmetry = 1;
    ev->add_option("--amp", ev_amp, "amplitude map raw grid")->required();
    ev->add_option("--ang", ev_ang, "orientation map raw grid");
    ev->add_option("--truth", ev_truth, "ground-truth placements CSV")->required();
    ev->add_option("--radius", ev_radius, "label tolerance radius, pixels");
    ev->add_option("--symmetry", ev_symmetry, "template rotational symmetry order");
    ev->add_option("--out", ev_out, "optional JSON report output");

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "parameter sweep over synthetic fixtures");
    std::string sw_template, sw_out = "sweep.csv";
    std::string sw_sigmas = "1", sw_ns = "8", sw_ms = "30", sw_gammas = "1.2",
                sw_whitening = "1", sw_seeds = "1,2,3,4,5";
    steerdet::FixtureConfig sw_fix;
    sw->add_option("--template", sw_template, "template image")->required();
    sw->add_option("--sigma", sw_sigmas, "noise levels, comma-separated");
    sw->add_option("--n", sw_ns, "harmonic counts, comma-separated");
    sw->add_option("--m", sw_ms, "angle counts, comma-separated");
    sw->add_option("--gamma", sw_gammas, "whitening exponents, comma-separated");
    sw->add_option("--whitening", sw_whitening, "whitening on/off flags (0/1), comma-separated");
    sw->add_option("--seeds", sw_seeds, "seeds, comma-separated");
    sw->add_option("--width", sw_fix.width, "fixture image width");
    sw->add_option("--height", sw_fix.height, "fixture image height");
    sw->add_option("--bg-gamma", sw_fix.bg_gamma, "background synthesis exponent");
    sw->add_option("--count", sw_fix.placements, "placements per image");
    sw->add_option("--spacing", sw_fix.min_spacing, "minimum placement spacing");
    sw->add_option("--amplitude", sw_fix.amplitude, "template amplitude");
    sw->add_option("--symmetry", sw_fix.symmetry_order, "template rotational symmetry order");
    sw->add_option("--radius", sw_fix.label_radius, "label tolerance radius");
    sw->add_option("--out", sw_out, "output CSV");

    // ---- approx ----
    auto* ap = app.add_subcommand("approx", "template approximation error vs. N");
    std::string ap_template, ap_out = "approx.csv";
    int ap_nmax = 9;
    double ap_r0 = 0.0, ap_pad = 2.0;
    std::string ap_backend = "exact";
    ap->add_option("--template", ap_template, "template image")->required();
    ap->add_option("--n-max", ap_nmax, "largest N");
    ap->add_option("--r0", ap_r0, "radial knot step (0 = one DFT bin)");
    ap->add_option("--pad", ap_pad, "zero-padding factor");
    ap->add_option("--backend", ap_backend, "projection backend: exact|paper");
    ap->add_option("--out", ap_out, "output CSV of (N, rmse)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors are exit code 2
    }

    if (*learn) {
        const RasterGrid templ = load_image(learn_template);
        auto det = steerdet::learn_detector(templ, learn_n, learn_r0, learn_pad, learn_gamma,
                                            steerdet::parse_backend(learn_backend));
        for (const auto& w : det.warnings) std::cerr << "warning: " << w << "\n";
        const auto filt = steerdet::synthesize_filter(det, det.padded_width, det.padded_height);
        const RasterGrid padded = steerdet::zero_pad(templ, learn_pad);
        const auto centered = steerdet::circular_shift(padded, -padded.center_x(),
                                                       -padded.center_y());
        const auto spec = steerdet::forward_spectrum(centered);
        const auto rep = steerdet::snr(filt, spec, steerdet::BackgroundModel(0.0, 1.0));
        nlohmann::json cfg = {{"template", learn_template}, {"N", learn_n},
                              {"r0", det.r0},              {"pad_factor", learn_pad},
                              {"gamma", learn_gamma},      {"backend", learn_backend},
                              {"out", learn_out}};
        steerdet::save_detector(det, learn_out,
                                {{"tool", "steerdet"}, {"version", kVersion}, {"config", cfg}});
        write_meta(learn_out, "learn", cfg);
        std::cout << "knots: " << det.k_max - det.k_min + 1 << "\n"
                  << "harmonics: " << 2 * det.N + 1 << "\n"
                  << "snr_white: " << rep.snr << "\n";
        return 0;
    }

    if (*det_cmd) {
        const auto t0 = std::chrono::steady_clock::now();
        const RasterGrid image = load_image(det_image);
        auto det = steerdet::load_detector(det_detector);
        const auto boundary = det_boundary == "zeropad" ? steerdet::Boundary::zeropad
                              : det_boundary == "periodic"
                                  ? steerdet::Boundary::periodic
                                  : throw std::invalid_argument("unknown boundary mode: " +
                                                                det_boundary);
        const auto resp = steerdet::basis_responses(image, det, threads, boundary);
        auto maps = steerdet::steer(resp, det_m, threads);
        auto dets = steerdet::nms_detect(maps, det_threshold, det_min_dist);
        for (auto& d : dets) {
            if (det_refine)
                d.theta = steerdet::refine_angle(resp, static_cast<int>(d.x),
                                                 static_cast<int>(d.y), d.theta, det_m);
            d.theta = steerdet::reduce_angle(d.theta, det_symmetry);
        }
        nlohmann::json cfg = {{"image", det_image},        {"detector", det_detector},
                              {"M", det_m},                {"threshold", det_threshold},
                              {"min_distance", det_min_dist}, {"symmetry", det_symmetry},
                              {"boundary", det_boundary},  {"refine", det_refine},
                              {"threads", threads}};
        if (!det_amp_out.empty()) {
            steerdet::write_grid(maps.amp, det_amp_out);
            write_meta(det_amp_out, "detect", cfg);
        }
        if (!det_ang_out.empty()) {
            steerdet::write_grid(maps.ang, det_ang_out);
            write_meta(det_ang_out, "detect", cfg);
        }
        if (!det_csv_out.empty()) {
            steerdet::write_detections_csv(dets, det_csv_out);
            write_meta(det_csv_out, "detect", cfg);
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        std::cout << "detections: " << dets.size() << "\n"
                  << "wall_ms: " << ms << "\n"
                  << "peak_rss_kb: " << peak_rss_kb() << "\n";
        return 0;
    }

    if (*synth) {
        const steerdet::BackgroundModel bg(synth_gamma, synth_sigma * synth_sigma);
        const RasterGrid field = steerdet::synthesize_iss(synth_w, synth_h, bg, synth_seed);
        steerdet::write_grid(field, synth_out);
        write_meta(synth_out, "synth",
                   {{"width", synth_w},
                    {"height", synth_h},
                    {"gamma", synth_gamma},
                    {"sigma", synth_sigma},
                    {"seed", synth_seed}});
        std::cout << "wrote " << synth_out << "\n";
        return 0;
    }

    if (*blend) {
        const RasterGrid bg = steerdet::read_grid(blend_bg);
        const RasterGrid templ = load_image(blend_template);
        steerdet::PlacementList placements;
        if (!blend_placements.empty()) {
            placements = steerdet::read_placements_csv(blend_placements);
        } else {
            const double extent = 0.5 * std::hypot(static_cast<double>(templ.width),
                                                   static_cast<double>(templ.height));
            placements = steerdet::random_placements(blend_count, bg.width, bg.height, extent,
                                                     blend_spacing, blend_seed);
        }
        const RasterGrid image = steerdet::blend_templates(bg, templ, placements, blend_amplitude);
        nlohmann::json cfg = {{"background", blend_bg},   {"template", blend_template},
                              {"count", blend_count},     {"spacing", blend_spacing},
                              {"amplitude", blend_amplitude}, {"seed", blend_seed}};
        steerdet::write_grid(image, blend_out);
        write_meta(blend_out, "blend", cfg);
        if (!blend_placements_out.empty()) {
            steerdet::write_placements_csv(placements, blend_placements_out);
            write_meta(blend_placements_out, "blend", cfg);
        }
        std::cout << "wrote " << blend_out << " (" << placements.size() << " placements)\n";
        return 0;
    }

    if (*eg) {
        const RasterGrid field = steerdet::read_grid(eg_field);
        const auto scales = parse_list(eg_scales);
        const auto est = steerdet::estimate_gamma(field, scales);
        std::cout << "gamma_hat: " << est.gamma_hat << "\n"
                  << "intercept: " << est.intercept << "\n"
                  << "residual: " << est.residual << "\n";
        return 0;
    }

    if (*ev) {
        const RasterGrid amp = steerdet::read_grid(ev_amp);
        const auto truth = steerdet::read_placements_csv(ev_truth);
        const auto scored = steerdet::score_labels(amp, truth, ev_radius);
        const auto curves = steerdet::pr_roc(scored);
        nlohmann::json report = {{"pr_auc", curves.pr_auc}, {"roc_auc", curves.roc_auc}};
        if (!ev_ang.empty()) {
            const RasterGrid ang = steerdet::read_grid(ev_ang);
            std::vector<double> est;
            for (const auto& p : truth)
                est.push_back(ang.at(static_cast<int>(std::lround(p.x)),
                                     static_cast<int>(std::lround(p.y))));
            report["ang_err_deg"] = steerdet::angular_error(est, truth, ev_symmetry);
        }
        if (!ev_out.empty()) {
            std::ofstream f(ev_out);
            if (!f) throw std::runtime_error("cannot open " + ev_out);
            f << report.dump(2) << "\n";
            write_meta(ev_out, "eval",
                       {{"amp", ev_amp}, {"truth", ev_truth}, {"radius", ev_radius}});
        }
        std::cout << report.dump(2) << "\n";
        return 0;
    }

    if (*sw) {
        const RasterGrid templ = load_image(sw_template);
        steerdet::SweepConfig cfg;
        cfg.fixture = sw_fix;
        cfg.fixture.threads = threads;
        cfg.sigmas = parse_list(sw_sigmas);
        cfg.Ns.clear();
        for (double v : parse_list(sw_ns)) cfg.Ns.push_back(static_cast<int>(v));
        cfg.Ms.clear();
        for (double v : parse_list(sw_ms)) cfg.Ms.push_back(static_cast<int>(v));
        cfg.gammas = parse_list(sw_gammas);
        cfg.whitenings.clear();
        for (double v : parse_list(sw_whitening)) cfg.whitenings.push_back(v != 0.0);
        cfg.seeds.clear();
        for (double v : parse_list(sw_seeds)) cfg.seeds.push_back(static_cast<uint64_t>(v));
        const auto rows = steerdet::sweep(templ, cfg);
        steerdet::write_sweep_csv(rows, sw_out);
        write_meta(sw_out, "sweep",
                   {{"template", sw_template}, {"sigma", sw_sigmas},     {"n", sw_ns},
                    {"m", sw_ms},              {"gamma", sw_gammas},     {"whitening", sw_whitening},
                    {"seeds", sw_seeds},       {"width", sw_fix.width},  {"height", sw_fix.height},
                    {"bg_gamma", sw_fix.bg_gamma}});
        std::cout << "wrote " << sw_out << " (" << rows.size() << " rows)\n";
        return 0;
    }

    if (*ap) {
        const RasterGrid templ = load_image(ap_template);
        auto det = steerdet::learn_detector(templ, ap_nmax, ap_r0, ap_pad, 0.0,
                                            steerdet::parse_backend(ap_backend));
        std::ofstream f(ap_out);
        if (!f) throw std::runtime_error("cannot open " + ap_out);
        f << "N,rmse\n";
        f.precision(12);
        for (int n = 0; n <= ap_nmax; ++n) {
            const auto [approx, rmse] = steerdet::approximate_template(det, templ, n);
            f << n << "," << rmse << "\n";
        }
        write_meta(ap_out, "approx",
                   {{"template", ap_template}, {"n_max", ap_nmax}, {"r0", det.r0},
                    {"pad", ap_pad},           {"backend", ap_backend}});
        std::cout << "wrote " << ap_out << "\n";
        return 0;
    }

    return 0;
}

bool is_io_error(const std::string& msg) {
    return msg.find("cannot open") != std::string::npos ||
           msg.find("missing") != std::string::npos ||
           msg.find("truncated") != std::string::npos ||
           msg.find("malformed") != std::string::npos ||
           msg.find("not a P5") != std::string::npos ||
           msg.find("bad header") != std::string::npos ||
           msg.find("bad row") != std::string::npos;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_io_error(e.what()) ? 2 : 1;
    }
}
