#pragma once

#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitopt/plant.hpp"

namespace gaitopt {

/// Product-moment correlation. Both vectors need length >= 2 and nonzero
/// variance.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

/// One experiment invocation: which pipeline to run, on which plant preset,
/// with which seeds and budgets. Serializes to a single JSON document whose
/// hash is embedded in every artifact.
struct ExperimentConfig {
    std::string pipeline = "bo";  ///< bo | mfbo | baseline | sweep | simulate | gap
    std::string preset = "default";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "runs/out";
    std::string method = "sa";  ///< baseline only: sa | rs | ags
    int n_init = 10;
    int i_max = 70;
    int k_max = 25;
    int budget = 300;          ///< rs / sa evaluation budget
    int sweep_n = 4096;        ///< plant sweep points
    int sweep_fidelity = 1;
    bool run_phase1 = false;   ///< mfbo: run BO phase 1 instead of resuming
    std::string resume_dir;    ///< mfbo: phase-1 run directory; gap: mfbo run directory
    std::vector<double> params;  ///< simulate: explicit gait vector (optional)
    double duration = 25.0;
    double dt = 1e-3;

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"pipeline", pipeline}, {"preset", preset},   {"seeds", seeds},
            {"out_dir", out_dir},   {"method", method},   {"n_init", n_init},
            {"i_max", i_max},       {"k_max", k_max},     {"budget", budget},
            {"sweep_n", sweep_n},   {"sweep_fidelity", sweep_fidelity},
            {"run_phase1", run_phase1},                   {"resume_dir", resume_dir},
            {"params", params},     {"duration", duration}, {"dt", dt}};
    }

    /// Fail-fast parse listing unknown keys.
    static ExperimentConfig from_json(const nlohmann::json& j) {
        static const std::set<std::string> known = {
            "pipeline", "preset", "seeds",      "out_dir",        "method",
            "n_init",   "i_max",  "k_max",      "budget",         "sweep_n",
            "sweep_fidelity",     "run_phase1", "resume_dir",     "params",
            "duration", "dt"};
        std::string unknown;
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!known.count(it.key())) unknown += (unknown.empty() ? "" : ", ") + it.key();
        if (!unknown.empty())
            throw std::invalid_argument("unknown config keys: " + unknown);
        ExperimentConfig c;
        c.pipeline = j.value("pipeline", c.pipeline);
        c.preset = j.value("preset", c.preset);
        c.seeds = j.value("seeds", c.seeds);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.method = j.value("method", c.method);
        c.n_init = j.value("n_init", c.n_init);
        c.i_max = j.value("i_max", c.i_max);
        c.k_max = j.value("k_max", c.k_max);
        c.budget = j.value("budget", c.budget);
        c.sweep_n = j.value("sweep_n", c.sweep_n);
        c.sweep_fidelity = j.value("sweep_fidelity", c.sweep_fidelity);
        c.run_phase1 = j.value("run_phase1", c.run_phase1);
        c.resume_dir = j.value("resume_dir", c.resume_dir);
        c.params = j.value("params", c.params);
        c.duration = j.value("duration", c.duration);
        c.dt = j.value("dt", c.dt);
        c.validate();
        return c;
    }

    void validate() const {
        static const std::set<std::string> pipelines = {"bo",    "mfbo",     "baseline",
                                                        "sweep", "simulate", "gap"};
        if (!pipelines.count(pipeline))
            throw std::invalid_argument("unknown pipeline: " + pipeline);
        if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
        if (pipeline == "baseline" && method != "sa" && method != "rs" && method != "ags")
            throw std::invalid_argument("unknown baseline method: " + method);
        make_preset(preset);  // throws on unknown preset
    }

    std::string hash() const {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a(to_json().dump())));
        return buf;
    }

    BoConfig bo_config(std::uint64_t seed) const {
        BoConfig bc;
        bc.bounds = design_bounds();
        bc.seed = seed;
        bc.n_init = n_init;
        bc.i_max = i_max;
        bc.k_max = k_max;
        bc.budget = budget;
        return bc;
    }
};

namespace io {

inline void write_history_csv(const OptimizationHistory& hist, std::ostream& os) {
    os << "iteration,tag,p1,p2,p3,p4,p5,v,best\n";
    char buf[320];
    for (const auto& r : hist.records) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                      r.iteration, static_cast<int>(r.tag), r.point[0], r.point[1], r.point[2],
                      r.point[3], r.point[4], r.value, r.best);
        os << buf;
    }
}

inline nlohmann::json history_json(const OptimizationHistory& hist, const std::string& cfg_hash) {
    nlohmann::json j;
    j["method"] = hist.provenance.method;
    j["seed"] = hist.provenance.seed;
    j["config_hash"] = cfg_hash;
    j["wall_ms"] = hist.provenance.wall_ms;
    if (hist.provenance.posterior_argmax) {
        const auto& p = *hist.provenance.posterior_argmax;
        j["posterior_argmax"] = std::vector<double>(p.begin(), p.end());
    }
    auto records = nlohmann::json::array();
    for (const auto& r : hist.records) {
        records.push_back({{"iteration", r.iteration},
                           {"tag", static_cast<int>(r.tag)},
                           {"p", std::vector<double>(r.point.begin(), r.point.end())},
                           {"v", r.value},
                           {"best", r.best}});
    }
    j["records"] = std::move(records);
    return j;
}

inline OptimizationHistory history_from_json(const nlohmann::json& j) {
    OptimizationHistory hist;
    hist.provenance.method = j.value("method", "");
    hist.provenance.seed = j.value("seed", 0ull);
    hist.provenance.config_hash = j.value("config_hash", "");
    for (const auto& r : j.at("records")) {
        HistoryRecord rec;
        rec.iteration = r.at("iteration").get<int>();
        rec.tag = fidelity_from_int(r.at("tag").get<int>());
        const auto p = r.at("p").get<std::vector<double>>();
        rec.point = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
        rec.value = r.at("v").get<double>();
        rec.best = r.at("best").get<double>();
        hist.records.push_back(std::move(rec));
    }
    return hist;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(is);
}

}  // namespace io

/// Bi-directional reality-gap check: re-evaluate every phase-2 candidate on
/// the low-fidelity plant and correlate with the recorded tag-2 speeds.
struct GapAnalysis {
    std::vector<double> v_high;
    std::vector<double> v_low;
    double rho = 0.0;
    std::optional<double> kf_offdiag;  ///< normalized fitted cross-correlation
};

inline GapAnalysis cross_validate_gap(const OptimizationHistory& mfbo_history,
                                      const Objective& low,
                                      const MtgpModel* model = nullptr) {
    GapAnalysis out;
    for (const auto& r : mfbo_history.records) {
        if (r.tag != Fidelity::Physical) continue;
        out.v_high.push_back(r.value);
        out.v_low.push_back(low(r.point));
    }
    if (out.v_high.empty()) throw std::invalid_argument("cross_validate_gap: no tag-2 records");
    out.rho = pearson(out.v_high, out.v_low);  // throws for n < 2
    if (model && model->cross_identifiable()) out.kf_offdiag = model->kf_normalized()(0, 1);
    return out;
}

/// Summary table row, shaped like the paper's comparison table: method, best
/// speed, evaluation count, wall-clock.
struct SummaryRow {
    std::string method;
    std::uint64_t seed = 0;
    double max_speed = 0.0;
    int evaluations = 0;
    double wall_ms = 0.0;
};

inline void write_summary(const std::vector<SummaryRow>& rows, const std::string& cfg_hash,
                          const std::filesystem::path& dir) {
    std::ostringstream csv;
    csv << "method,seed,max_speed,evaluations,optimization_time_ms\n";
    nlohmann::json j;
    j["config_hash"] = cfg_hash;
    auto arr = nlohmann::json::array();
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.12g,%d,%.3f\n", r.method.c_str(),
                      static_cast<unsigned long long>(r.seed), r.max_speed, r.evaluations,
                      r.wall_ms);
        csv << buf;
        arr.push_back({{"method", r.method},
                       {"seed", r.seed},
                       {"max_speed", r.max_speed},
                       {"evaluations", r.evaluations},
                       {"optimization_time_ms", r.wall_ms}});
    }
    j["rows"] = std::move(arr);
    io::write_text(dir / "summary.csv", csv.str());
    io::write_text(dir / "summary.json", j.dump(2) + "\n");
}

namespace detail {

inline double total_ms(const OptimizationHistory& h) {
    double acc = 0.0;
    for (double v : h.provenance.wall_ms) acc += v;
    return acc;
}

inline std::string seed_name(const char* stem, std::uint64_t seed, const char* ext) {
    std::ostringstream os;
    os << stem << "_seed" << seed << ext;
    return os.str();
}

}  // namespace detail

/// Runs the configured pipeline for every seed and writes history CSV/JSON,
/// serialized models, and a summary table into the artifact directory.
/// Returns the directory path. Throws on configuration errors; a run that
/// started is marked complete/incomplete in config.json.
inline std::filesystem::path run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    const std::string cfg_hash = cfg.hash();

    auto write_status = [&](const std::string& status) {
        nlohmann::json j = cfg.to_json();
        j["config_hash"] = cfg_hash;
        j["status"] = status;
        io::write_text(dir / "config.json", j.dump(2) + "\n");
    };
    write_status("incomplete");

    const PlantConfig plant = make_preset(cfg.preset);
    auto [low, high] = make_fidelity_pair(plant);
    std::vector<SummaryRow> rows;

    if (cfg.pipeline == "bo") {
        for (const auto seed : cfg.seeds) {
            const auto res = run_bo(low, cfg.bo_config(seed));
            auto hist = res.history;
            hist.provenance.config_hash = cfg_hash;
            std::ostringstream csv;
            io::write_history_csv(hist, csv);
            io::write_text(dir / detail::seed_name("history", seed, ".csv"), csv.str());
            io::write_text(dir / detail::seed_name("history", seed, ".json"),
                           io::history_json(hist, cfg_hash).dump(2) + "\n");
            io::write_text(dir / detail::seed_name("model", seed, ".json"),
                           res.model.to_json().dump(2) + "\n");
            rows.push_back({"bo", seed, hist.best_value(),
                            static_cast<int>(hist.records.size()), detail::total_ms(hist)});
        }
    } else if (cfg.pipeline == "mfbo") {
        for (const auto seed : cfg.seeds) {
            OptimizationHistory warm;
            if (cfg.run_phase1) {
                const auto phase1 = run_bo(low, cfg.bo_config(seed));
                warm = phase1.history;
                warm.provenance.config_hash = cfg_hash;
                std::ostringstream csv;
                io::write_history_csv(warm, csv);
                io::write_text(dir / detail::seed_name("phase1_history", seed, ".csv"), csv.str());
                io::write_text(dir / detail::seed_name("phase1_history", seed, ".json"),
                               io::history_json(warm, cfg_hash).dump(2) + "\n");
            } else {
                if (cfg.resume_dir.empty())
                    throw std::invalid_argument(
                        "missing warm-start history: pass --resume <bo run dir> or --run-phase1");
                const auto path = std::filesystem::path(cfg.resume_dir) /
                                  detail::seed_name("history", seed, ".json");
                if (!std::filesystem::exists(path))
                    throw std::invalid_argument("missing warm-start history: " + path.string());
                warm = io::history_from_json(io::read_json(path));
            }
            const auto res = run_mfbo(high, cfg.bo_config(seed), warm);
            auto hist = res.history;
            hist.provenance.config_hash = cfg_hash;
            std::ostringstream csv;
            io::write_history_csv(hist, csv);
            io::write_text(dir / detail::seed_name("history", seed, ".csv"), csv.str());
            io::write_text(dir / detail::seed_name("history", seed, ".json"),
                           io::history_json(hist, cfg_hash).dump(2) + "\n");
            io::write_text(dir / detail::seed_name("model", seed, ".json"),
                           res.model.to_json().dump(2) + "\n");
            rows.push_back({"mfbo", seed, hist.best_value(),
                            static_cast<int>(hist.records.size()), detail::total_ms(hist)});
        }
    } else if (cfg.pipeline == "baseline") {
        const BaselineMethod method = cfg.method == "sa" ? BaselineMethod::SimulatedAnnealing
                                      : cfg.method == "rs" ? BaselineMethod::RandomSearch
                                                           : BaselineMethod::AdaptiveGridSearch;
        for (const auto seed : cfg.seeds) {
            auto hist = run_baseline(method, low, cfg.bo_config(seed));
            hist.provenance.config_hash = cfg_hash;
            std::ostringstream csv;
            io::write_history_csv(hist, csv);
            io::write_text(dir / detail::seed_name("history", seed, ".csv"), csv.str());
            io::write_text(dir / detail::seed_name("history", seed, ".json"),
                           io::history_json(hist, cfg_hash).dump(2) + "\n");
            rows.push_back({cfg.method, seed, hist.best_value(),
                            static_cast<int>(hist.records.size()), detail::total_ms(hist)});
        }
    } else if (cfg.pipeline == "sweep") {
        const Objective& f = cfg.sweep_fidelity == 2 ? high : low;
        const auto bounds = design_bounds();
        for (const auto seed : cfg.seeds) {
            HaltonSequence halton(5, seed);
            std::ostringstream csv;
            csv << "index,p1,p2,p3,p4,p5,v\n";
            double best = -std::numeric_limits<double>::infinity();
            Eigen::VectorXd best_p = bounds.lower;
            detail::StopWatch watch;
            for (int i = 0; i < cfg.sweep_n; ++i) {
                const Eigen::VectorXd p = bounds.denormalize(halton.point(i));
                const double v = f(p);
                char buf[256];
                std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", i,
                              p[0], p[1], p[2], p[3], p[4], v);
                csv << buf;
                if (v > best) {
                    best = v;
                    best_p = p;
                }
            }
            io::write_text(dir / detail::seed_name("sweep", seed, ".csv"), csv.str());
            nlohmann::json j;
            j["config_hash"] = cfg_hash;
            j["seed"] = seed;
            j["fidelity"] = cfg.sweep_fidelity;
            j["n"] = cfg.sweep_n;
            j["best_value"] = best;
            j["best_point"] = std::vector<double>(best_p.begin(), best_p.end());
            io::write_text(dir / detail::seed_name("oracle", seed, ".json"), j.dump(2) + "\n");
            rows.push_back({"sweep", seed, best, cfg.sweep_n, watch.lap_ms()});
        }
    } else if (cfg.pipeline == "simulate") {
        Eigen::VectorXd p(5);
        if (cfg.params.size() == 5) {
            for (int i = 0; i < 5; ++i) p[i] = cfg.params[i];
        } else {
            const auto b = design_bounds();
            p = 0.5 * (b.lower + b.upper);
        }
        const GaitParams params = params_from_point(p);
        const auto traj = leg_trajectories(params, plant.cpg, cfg.duration, cfg.dt);
        std::ostringstream os;
        export_trajectory_csv(traj, plant.geometry, os);
        io::write_text(dir / "trajectory.csv", os.str());
        std::ostringstream foot;
        export_foot_pattern_csv(p, plant, Fidelity::Simulation, foot);
        io::write_text(dir / "foot_pattern.csv", foot.str());
        const auto eval = evaluate_gait(p, plant, Fidelity::Simulation, cfg.seeds.front());
        rows.push_back({"simulate", cfg.seeds.front(), eval.speed, 1, 0.0});
    } else if (cfg.pipeline == "gap") {
        if (cfg.resume_dir.empty())
            throw std::invalid_argument("gap analysis needs --run <mfbo run dir>");
        std::ostringstream csv;
        csv << "seed,v_high,v_low\n";
        nlohmann::json out;
        auto arr = nlohmann::json::array();
        for (const auto seed : cfg.seeds) {
            const auto hist = io::history_from_json(io::read_json(
                std::filesystem::path(cfg.resume_dir) / detail::seed_name("history", seed, ".json")));
            std::optional<MtgpModel> model;
            const auto model_path =
                std::filesystem::path(cfg.resume_dir) / detail::seed_name("model", seed, ".json");
            if (std::filesystem::exists(model_path))
                model = MtgpModel::from_json(io::read_json(model_path));
            const auto gap = cross_validate_gap(hist, low, model ? &*model : nullptr);
            for (std::size_t i = 0; i < gap.v_high.size(); ++i) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "%llu,%.12g,%.12g\n",
                              static_cast<unsigned long long>(seed), gap.v_high[i], gap.v_low[i]);
                csv << buf;
            }
            nlohmann::json row;
            row["seed"] = seed;
            row["rho"] = gap.rho;
            if (gap.kf_offdiag) row["kf_offdiag"] = *gap.kf_offdiag;
            arr.push_back(std::move(row));
            rows.push_back({"gap", seed, gap.rho, static_cast<int>(gap.v_high.size()), 0.0});
        }
        out["config_hash"] = cfg_hash;
        out["per_seed"] = std::move(arr);
        io::write_text(dir / "gap.csv", csv.str());
        io::write_text(dir / "gap.json", out.dump(2) + "\n");
    }

    write_summary(rows, cfg_hash, dir);
    write_status("complete");
    return dir;
}

}  // namespace gaitopt
