// pnsim command-line front end.
//
//   pnsim rabi    [--preset qd1|qd2] [--config F] [--areas LIST] [--trajectory] --out DIR
//   pnsim fringe  --config F [--points N] --out DIR
//   pnsim synth   --config F [--seed S] --out DIR
//   pnsim analyze --in DIR [--bins N] [--bootstrap B] [--seed S] [--extrema] --out DIR
//   pnsim invert  V1 V2 G2 [--alpha-sq A] [--out DIR]
//   pnsim replay  MANIFEST [--out DIR]
//
// Exit status: 0 success, 2 invalid input, 3 infeasible inversion, 1 anything else.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <pnsim/pnsim.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitInfeasible = 3;

struct Options {
    std::string config;
    std::string preset = "qd1";
    std::string out;
    std::string in;
    std::string areas;
    std::string manifest;
    std::uint64_t seed = 1;
    std::size_t points = 200;
    std::size_t bins = 20;
    std::size_t bootstrap = 100;
    std::size_t block = 50;
    double alpha_sq = 0.5;
    std::vector<double> visibilities;
    bool trajectory = false;
    bool extrema = false;
    bool moments = false;
};

fs::path prepare_out(const std::string& out) {
    if (out.empty()) throw pnsim::ValidationError("--out is required");
    fs::create_directories(out);
    return fs::path(out);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw pnsim::ValidationError("cannot write " + path.string());
    return os;
}

void write_json(const fs::path& path, const json& j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw pnsim::ValidationError("cannot open " + path.string());
    return is;
}

// Everything needed to rerun the command; no timestamps so reruns are byte-identical.
void write_manifest(const fs::path& dir, const std::string& sub, const Options& o,
                    const std::vector<std::string>& args) {
    json m;
    m["subcommand"] = sub;
    m["config"] = o.config;
    m["seed"] = o.seed;
    m["out"] = o.out;
    m["version"] = pnsim::kVersion;
    m["args"] = args;
    write_json(dir / "manifest.json", m);
}

pnsim::KeyValueConfig load_config(const Options& o, bool required) {
    if (o.config.empty()) {
        if (required) throw pnsim::ValidationError("--config is required");
        return {};
    }
    return pnsim::KeyValueConfig::load(o.config);
}

std::vector<double> parse_areas(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : pnsim::detail::split(text, ',')) {
        if (item.empty()) continue;
        out.push_back(pnsim::detail::parse_double(item, "--areas"));
    }
    return out;
}

std::vector<double> area_grid(double start, double stop, double step) {
    if (!(step > 0.0)) throw pnsim::ValidationError("area_step_pi must be positive");
    if (stop < start) throw pnsim::ValidationError("area_stop_pi must not be below area_start_pi");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) out.push_back(start + step * static_cast<double>(k));
    return out;
}

int cmd_rabi(const Options& o, const std::vector<std::string>& args) {
    auto cfg = load_config(o, false);
    std::set<std::string> allowed = pnsim::pulse_config_keys();
    allowed.insert({"preset", "areas_pi", "area_start_pi", "area_stop_pi", "area_step_pi"});
    cfg.require_known(allowed);

    std::string preset = cfg.get_string("preset").value_or(o.preset);
    pnsim::PulseConfig base;
    if (preset == "qd1") base = pnsim::presets::qd1();
    else if (preset == "qd2") base = pnsim::presets::qd2();
    else throw pnsim::ValidationError("unknown preset '" + preset + "'");
    base = pnsim::pulse_config_from(cfg, base);

    std::vector<double> areas;
    if (!o.areas.empty() || std::find(args.begin(), args.end(), "--areas") != args.end()) {
        areas = parse_areas(o.areas);
    } else if (auto list = cfg.get_list("areas_pi")) {
        areas = *list;
    } else {
        areas = area_grid(cfg.get_double("area_start_pi", 0.0), cfg.get_double("area_stop_pi", 2.0),
                          cfg.get_double("area_step_pi", 0.02));
    }
    if (areas.empty()) throw pnsim::ValidationError("area list is empty");

    const auto dir = prepare_out(o.out);
    const auto pts = pnsim::rabi_sweep(base, areas);
    {
        auto os = open_out(dir / "rabi.csv");
        pnsim::write_rabi_csv(os, pts);
    }
    if (o.trajectory) {
        auto os = open_out(dir / "trajectory.csv");
        pnsim::write_trajectory_csv(os, pnsim::evolve(base));
    }
    write_manifest(dir, "rabi", o, args);
    std::cout << "wrote " << pts.size() << " areas to " << (dir / "rabi.csv").string() << '\n';
    return kExitOk;
}

int cmd_fringe(const Options& o, const std::vector<std::string>& args) {
    auto cfg = load_config(o, true);
    cfg.require_known({"p", "alpha", "lambda", "overlap_M", "theta_rad", "points"});
    const auto state = pnsim::state_from(cfg);
    double M = cfg.get_double("overlap_M", 1.0);
    if (auto theta = cfg.get_double("theta_rad")) M = pnsim::theta_to_M(*theta, M);
    const auto points_cfg = cfg.get_integer("points");
    if (points_cfg && *points_cfg <= 0) throw pnsim::ValidationError("points must be positive");
    const std::size_t points = points_cfg ? static_cast<std::size_t>(*points_cfg) : o.points;

    const auto dir = prepare_out(o.out);
    const auto rows = pnsim::fringe_curve(state, M, points);
    {
        auto os = open_out(dir / "fringe.csv");
        pnsim::write_fringe_csv(os, rows);
    }
    json summary;
    summary["state"] = state;
    summary["overlap_M"] = M;
    summary["v1"] = pnsim::singles_visibility(state, M);
    summary["v2"] = pnsim::coincidence_visibility(state);
    summary["g2"] = pnsim::g2_zero(state);
    summary["purity"] = pnsim::purity(pnsim::density_of(state));
    write_json(dir / "summary.json", summary);
    write_manifest(dir, "fringe", o, args);
    std::cout << summary.dump(2) << '\n';
    return kExitOk;
}

int cmd_synth(const Options& o, const std::vector<std::string>& args, const CLI::App& sub) {
    auto cfg = load_config(o, true);
    cfg.require_known(pnsim::experiment_config_keys());
    auto exp = pnsim::experiment_from(cfg);
    Options used = o;
    if (sub.count("--seed")) exp.seed = o.seed;
    used.seed = exp.seed;

    const auto dir = prepare_out(o.out);
    const auto ts = pnsim::synthesize(exp);
    {
        auto os = open_out(dir / "singles.csv");
        pnsim::write_singles_csv(os, ts);
    }
    {
        auto os = open_out(dir / "histogram.csv");
        pnsim::write_histogram_csv(os, ts);
    }
    {
        auto os = open_out(dir / "coincidences_by_bin.csv");
        pnsim::write_coincidences_by_bin_csv(os, ts);
    }
    write_json(dir / "experiment.json", pnsim::to_json(exp));
    write_manifest(dir, "synth", used, args);
    std::cout << "wrote " << ts.bins.size() << " bins to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_analyze(const Options& o, const std::vector<std::string>& args) {
    if (o.in.empty()) throw pnsim::ValidationError("--in is required");
    const fs::path in(o.in);
    auto singles = open_in(in / "singles.csv");
    auto by_bin = open_in(in / "coincidences_by_bin.csv");
    const auto ts = pnsim::read_stream(singles, by_bin);

    pnsim::AnalysisOptions opt;
    opt.mapping.n_bins = o.bins;
    if (o.moments) opt.mapping.amplitude = pnsim::AmplitudeEstimator::Moments;
    opt.visibility = o.extrema ? pnsim::VisibilityMethod::Extrema : pnsim::VisibilityMethod::SinusoidFit;
    opt.alpha_sq = o.alpha_sq;
    opt.bootstrap = o.bootstrap;
    opt.block_bins = o.block;
    opt.seed = o.seed;
    const auto res = pnsim::analyze_stream(ts, opt);

    const auto dir = prepare_out(o.out);
    const json report = pnsim::to_json(res, o.alpha_sq);
    write_json(dir / "report.json", report);
    {
        auto os = open_out(dir / "phase_curve.csv");
        pnsim::write_phase_curve_csv(os, res);
    }
    write_manifest(dir, "analyze", o, args);
    std::cout << report.dump(2) << '\n';
    return kExitOk;
}

int cmd_invert(const Options& o, const std::vector<std::string>& args) {
    const auto& v = o.visibilities;
    const auto result = pnsim::invert_two_photon(v[0], v[1], v[2], o.alpha_sq);
    const json report = pnsim::to_json(pnsim::report(result, o.alpha_sq));
    if (!o.out.empty()) {
        const auto dir = prepare_out(o.out);
        write_json(dir / "report.json", report);
        write_manifest(dir, "invert", o, args);
    }
    std::cout << report.dump(2) << '\n';
    return kExitOk;
}

int run(const std::vector<std::string>& args);

int cmd_replay(const Options& o) {
    auto is = open_in(o.manifest);
    json m;
    try {
        is >> m;
    } catch (const json::exception& e) {
        throw pnsim::ParseError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!m.contains("args") || !m["args"].is_array()) throw pnsim::ValidationError("manifest has no args");
    auto args = m["args"].get<std::vector<std::string>>();
    if (args.empty() || args.front() == "replay") throw pnsim::ValidationError("manifest args are not replayable");
    if (!o.out.empty()) {
        bool replaced = false;
        for (std::size_t k = 0; k + 1 < args.size(); ++k)
            if (args[k] == "--out") {
                args[k + 1] = o.out;
                replaced = true;
            }
        if (!replaced) args.insert(args.end(), {"--out", o.out});
    }
    return run(args);
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Photon-number superposition simulator and analyser", "pnsim"};
    app.set_version_flag("--version", std::string(pnsim::kVersion));
    app.require_subcommand(1);
    Options o;

    auto* rabi = app.add_subcommand("rabi", "Sweep the pulse area and write N_out, C0 and populations");
    rabi->add_option("--preset", o.preset, "Device preset")->check(CLI::IsMember({"qd1", "qd2"}));
    rabi->add_option("--config", o.config, "Pulse config file")->check(CLI::ExistingFile);
    rabi->add_option("--areas", o.areas, "Comma-separated pulse areas in units of pi");
    rabi->add_flag("--trajectory", o.trajectory, "Also dump rho(t) at the config's area_pi");
    rabi->add_option("--out", o.out, "Output directory")->required();
    rabi->add_option("--seed", o.seed, "Accepted for uniformity; the sweep is deterministic");

    auto* fringe = app.add_subcommand("fringe", "Closed-form fringes versus phase");
    fringe->add_option("--config", o.config, "State config file")->required()->check(CLI::ExistingFile);
    fringe->add_option("--points", o.points, "Phase samples over [0, 2 pi)");
    fringe->add_option("--out", o.out, "Output directory")->required();
    fringe->add_option("--seed", o.seed, "Accepted for uniformity; fringes are deterministic");

    auto* synth = app.add_subcommand("synth", "Draw a synthetic time-tagged record");
    synth->add_option("--config", o.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    synth->add_option("--seed", o.seed, "RNG seed (overrides the config)");
    synth->add_option("--out", o.out, "Output directory")->required();

    auto* analyze = app.add_subcommand("analyze", "Recover visibilities and the state from a record");
    analyze->add_option("--in", o.in, "Directory with singles.csv and coincidences_by_bin.csv")
        ->required()
        ->check(CLI::ExistingDirectory);
    analyze->add_option("--bins", o.bins, "Intensity bins");
    analyze->add_option("--bootstrap", o.bootstrap, "Bootstrap resamples");
    analyze->add_option("--block", o.block, "Bootstrap block length in time bins (0: counts only)");
    analyze->add_option("--seed", o.seed, "Bootstrap seed");
    analyze->add_option("--alpha-sq", o.alpha_sq, "|alpha|^2 of the reference cat state");
    analyze->add_flag("--extrema", o.extrema, "Visibility from raw extrema instead of the sinusoid fit");
    analyze->add_flag("--moments", o.moments, "Phase mapping amplitude from second moments instead of extrema");
    analyze->add_option("--out", o.out, "Output directory")->required();

    auto* invert = app.add_subcommand("invert", "Invert (v1, v2, g2) into populations and lambda");
    invert->add_option("values", o.visibilities, "v1 v2 g2")->required()->expected(3);
    invert->add_option("--alpha-sq", o.alpha_sq, "|alpha|^2 of the reference cat state");
    invert->add_option("--out", o.out, "Output directory");
    invert->add_option("--seed", o.seed, "Accepted for uniformity; inversion is deterministic");

    auto* replay = app.add_subcommand("replay", "Rerun the command recorded in a manifest");
    replay->add_option("manifest", o.manifest, "manifest.json")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", o.out, "Output directory (defaults to the recorded one)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }

    if (*rabi) return cmd_rabi(o, args);
    if (*fringe) return cmd_fringe(o, args);
    if (*synth) return cmd_synth(o, args, *synth);
    if (*analyze) return cmd_analyze(o, args);
    if (*invert) return cmd_invert(o, args);
    return cmd_replay(o);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args);
    } catch (const pnsim::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const pnsim::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::domain_error& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::logic_error& e) {
        std::cerr << "unsupported: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const pnsim::InsufficientContrastError& e) {
        std::cerr << "insufficient contrast: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}
