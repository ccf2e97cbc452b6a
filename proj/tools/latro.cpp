// latro command-line driver: robust topology optimisation of lattice
// structures with spatially correlated member stiffness.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "latro/config.hpp"
#include "latro/io.hpp"
#include "latro/optimize.hpp"
#include "latro/statistics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    int threads = 0; // 0 = hardware concurrency
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    bool dump_matrices = false;
};

latro::RunConfig load_config(const std::string& path, const GlobalOptions& g) {
    latro::RunConfig cfg = latro::load_run_config(path);
    if (g.output_dir) cfg.output.directory = *g.output_dir;
    if (g.seed) cfg.output.seed = *g.seed;
    return cfg;
}

fs::path prepare_output_dir(const latro::RunConfig& cfg) {
    fs::path dir(cfg.output.directory);
    if (dir.is_relative()) dir = fs::current_path() / dir;
    fs::create_directories(dir);
    return dir;
}

char format_time_buf[64];

const char* wall_seconds(std::chrono::steady_clock::time_point start) {
    const double s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    std::snprintf(format_time_buf, sizeof(format_time_buf), "%.2f", s);
    return format_time_buf;
}

json to_json(const latro::OptimizationResult& r, double alpha) {
    json j;
    j["alpha"] = alpha;
    j["mean"] = r.mean;
    j["std_dev"] = r.std_dev;
    j["cost"] = r.cost;
    j["volume"] = r.volume;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["mean_scale"] = r.mean_scale;
    j["std_scale"] = r.std_scale;
    return j;
}

void write_design_outputs(const fs::path& dir, const latro::Lattice& lattice,
                          const latro::OptimizationResult& result, bool vtk) {
    json design = latro::lattice_to_json(lattice);
    json d;
    d["raw"] = std::vector<double>(result.design.begin(), result.design.end());
    d["filtered"] = std::vector<double>(result.state.filtered.begin(),
                                        result.state.filtered.end());
    d["penalized"] = std::vector<double>(result.state.penalized.begin(),
                                         result.state.penalized.end());
    d["areas"] =
        std::vector<double>(result.state.areas.begin(), result.state.areas.end());
    design["design"] = d;
    latro::write_json_file((dir / "design.json").string(), design);
    latro::write_history_csv((dir / "history.csv").string(), result.history);
    if (vtk)
        latro::write_vtk((dir / "design.vtk").string(), lattice,
                         {{"area", result.state.areas},
                          {"density", result.state.penalized},
                          {"raw_density", result.design}});
}

int cmd_optimize(const std::string& config_path, const GlobalOptions& g) {
    const auto start = std::chrono::steady_clock::now();
    const latro::RunConfig cfg = load_config(config_path, g);
    if (!cfg.optimization) throw latro::ConfigError("optimize needs an 'optimization' section");

    const latro::Lattice lattice = latro::build_lattice(cfg);
    const latro::FieldModel field = latro::build_field(cfg, lattice);
    const auto filter = latro::build_filter(cfg, lattice);
    const auto curve = latro::build_penalty(cfg);
    const latro::OptimizationConfig opt =
        latro::build_optimization_config(cfg, latro::resolve_thread_count(g.threads));

    latro::RobustOptimizer optimizer(lattice, field, opt,
                                     filter ? &*filter : nullptr,
                                     curve ? &*curve : nullptr);
    const double alpha = cfg.optimization->alpha;
    const latro::OptimizationResult result =
        optimizer.run(alpha, cfg.optimization->norm_mean, cfg.optimization->norm_std);

    const fs::path dir = prepare_output_dir(cfg);
    write_design_outputs(dir, lattice, result, cfg.output.vtk);
    latro::write_json_file((dir / "summary.json").string(), to_json(result, alpha));
    if (g.dump_matrices) {
        std::vector<latro::MemberState> states(lattice.member_count());
        for (int e = 0; e < lattice.member_count(); ++e)
            states[e] = {field.mean()[e], result.state.areas[e]};
        const latro::StiffnessSystem system(lattice, states);
        latro::write_matrix_market((dir / "stiffness.mtx").string(), system.matrix());
        if (field.is_spde())
            latro::write_matrix_market((dir / "precision.mtx").string(),
                                       field.precision_operator()->precision());
    }

    std::cout << "optimize: alpha=" << alpha << " mean=" << result.mean
              << " std_dev=" << result.std_dev << " volume=" << result.volume
              << " iterations=" << result.iterations
              << (result.converged ? " (converged)" : " (iteration cap)") << " in "
              << wall_seconds(start) << " s\n";
    return result.converged ? 0 : 2;
}

int cmd_sample_field(const std::string& config_path, int n_samples,
                     const GlobalOptions& g) {
    const latro::RunConfig cfg = load_config(config_path, g);
    if (n_samples < 0) throw latro::ConfigError("sample count must be >= 0");
    if (!cfg.output.seed)
        throw latro::ConfigError("sampling requires output.seed (or --seed)");

    const latro::Lattice lattice = latro::build_lattice(cfg);
    const latro::FieldModel field = latro::build_field(cfg, lattice);
    if (n_samples == 0) return 0; // nothing to write

    const fs::path dir = prepare_output_dir(cfg);
    std::vector<latro::NamedField> fields;
    Eigen::VectorXd sq_sum = Eigen::VectorXd::Zero(lattice.member_count());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(lattice.member_count());
    for (int i = 0; i < n_samples; ++i) {
        std::seed_seq seq{*cfg.output.seed, static_cast<std::uint64_t>(i)};
        std::mt19937_64 rng(seq);
        const Eigen::VectorXd r = field.sample(rng);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%03d", i);
        char file[48];
        std::snprintf(file, sizeof(file), "field_%03d.csv", i);
        latro::write_member_field_csv((dir / file).string(), r);
        fields.push_back({name, r});
        sum += r;
        sq_sum += r.cwiseProduct(r);
    }
    if (cfg.output.vtk)
        latro::write_vtk((dir / "fields.vtk").string(), lattice, fields);

    json report;
    report["samples"] = n_samples;
    if (n_samples >= 2) {
        Eigen::VectorXd var =
            (sq_sum - sum.cwiseProduct(sum) / n_samples) / (n_samples - 1);
        Eigen::VectorXd sd = var.cwiseMax(0.0).cwiseSqrt();
        latro::write_member_field_csv((dir / "marginal_std.csv").string(), sd);
        report["marginal_std"] = {{"min", sd.minCoeff()},
                                  {"max", sd.maxCoeff()},
                                  {"mean", sd.mean()}};
    }
    if (cfg.field && !cfg.field->uncorrelated)
        report["target_sigma"] = cfg.field->sigma;
    latro::write_json_file((dir / "field_report.json").string(), report);
    std::cout << "sample-field: wrote " << n_samples << " samples to " << dir << "\n";
    return 0;
}

int cmd_validate(const std::string& config_path, int n_samples,
                 const std::string& design_path, const GlobalOptions& g) {
    const latro::RunConfig cfg = load_config(config_path, g);
    if (!cfg.optimization) throw latro::ConfigError("validate needs an 'optimization' section");
    if (n_samples < 2) throw latro::ConfigError("validate needs -n >= 2");
    if (!cfg.output.seed)
        throw latro::ConfigError("sampling requires output.seed (or --seed)");

    const latro::Lattice lattice = latro::build_lattice(cfg);
    const latro::FieldModel field = latro::build_field(cfg, lattice);
    const auto filter = latro::build_filter(cfg, lattice);
    const auto curve = latro::build_penalty(cfg);
    const latro::OptimizationConfig opt =
        latro::build_optimization_config(cfg, latro::resolve_thread_count(g.threads));
    latro::RobustOptimizer optimizer(lattice, field, opt,
                                     filter ? &*filter : nullptr,
                                     curve ? &*curve : nullptr);

    Eigen::VectorXd areas;
    if (!design_path.empty()) {
        std::ifstream in(design_path);
        if (!in) throw latro::ConfigError("cannot open design file: " + design_path);
        json dj = json::parse(in);
        const auto a = dj.at("design").at("areas").get<std::vector<double>>();
        if (static_cast<int>(a.size()) != lattice.member_count())
            throw latro::ConfigError("design file does not match the lattice");
        areas = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
    } else {
        areas = optimizer.map_design(optimizer.initial_design()).areas;
    }

    // perturbation statistics at this design
    std::vector<latro::MemberState> states(lattice.member_count());
    for (int e = 0; e < lattice.member_count(); ++e)
        states[e] = {field.mean()[e], areas[e]};
    latro::StiffnessSystem system(lattice, states);
    const latro::MeanSolution sol = latro::solve_mean(lattice, system);
    const Eigen::VectorXd dJ_dr =
        latro::compliance_gradient_wrt_modulus(lattice, areas, sol.elongation);
    const latro::StdDevResult sd = latro::std_dev_compliance(dJ_dr, field);

    const latro::MonteCarloResult mc = latro::monte_carlo_validate(
        lattice, areas, field, n_samples, *cfg.output.seed,
        latro::resolve_thread_count(g.threads));

    const fs::path dir = prepare_output_dir(cfg);
    latro::write_samples_csv((dir / "mc_samples.csv").string(), mc.compliances);
    json report;
    report["perturbation"] = {{"mean", sol.compliance}, {"std_dev", sd.value}};
    report["monte_carlo"] = {{"mean", mc.mean},       {"std_dev", mc.std_dev},
                             {"se_mean", mc.se_mean}, {"se_std", mc.se_std},
                             {"samples", mc.samples}, {"rejected", mc.rejected}};
    latro::write_json_file((dir / "validate.json").string(), report);

    std::cout << "validate: perturbation mean=" << sol.compliance
              << " std=" << sd.value << " | MC mean=" << mc.mean
              << " std=" << mc.std_dev << " (" << mc.samples << " samples, "
              << mc.rejected << " rejected)\n";
    return 0;
}

int cmd_pareto(const std::string& config_path, std::vector<double> alphas,
               const GlobalOptions& g) {
    const auto start = std::chrono::steady_clock::now();
    const latro::RunConfig cfg = load_config(config_path, g);
    if (!cfg.optimization) throw latro::ConfigError("pareto needs an 'optimization' section");
    if (alphas.empty()) throw latro::ConfigError("pareto needs --alphas");

    const latro::Lattice lattice = latro::build_lattice(cfg);
    const latro::FieldModel field = latro::build_field(cfg, lattice);
    const auto filter = latro::build_filter(cfg, lattice);
    const auto curve = latro::build_penalty(cfg);
    const latro::OptimizationConfig opt =
        latro::build_optimization_config(cfg, latro::resolve_thread_count(g.threads));
    latro::RobustOptimizer optimizer(lattice, field, opt,
                                     filter ? &*filter : nullptr,
                                     curve ? &*curve : nullptr);

    const std::vector<latro::ParetoPoint> front = optimizer.pareto(alphas);

    const fs::path dir = prepare_output_dir(cfg);
    latro::write_front_csv((dir / "front.csv").string(), front);
    json j = json::array();
    bool all_converged = true;
    for (const auto& p : front) {
        j.push_back({{"alpha", p.alpha},
                     {"mean", p.mean},
                     {"std_dev", p.std_dev},
                     {"volume", p.volume},
                     {"iterations", p.iterations},
                     {"converged", p.converged}});
        all_converged = all_converged && p.converged;
    }
    latro::write_json_file((dir / "front.json").string(), j);
    std::cout << "pareto: " << front.size() << " points in " << wall_seconds(start)
              << " s\n";
    return all_converged ? 0 : 2;
}

int cmd_penalty_curve(const std::string& config_path, const GlobalOptions& g) {
    const latro::RunConfig cfg = load_config(config_path, g);
    auto curve = latro::build_penalty(cfg);
    if (!curve) curve = latro::PenalizationCurve::identity();

    const fs::path dir = prepare_output_dir(cfg);
    auto out = latro::open_output((dir / "penalty_curve.csv").string());
    out << "s,value,derivative\n";
    const int n = 1000;
    for (int i = 0; i <= n; ++i) {
        const double s = static_cast<double>(i) / n;
        out << latro::format_double(s) << ',' << latro::format_double(curve->value(s))
            << ',' << latro::format_double(curve->derivative(s)) << '\n';
    }
    std::cout << "penalty-curve: wrote " << (dir / "penalty_curve.csv") << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust topology optimisation of lattice structures"};
    app.require_subcommand(1);
    app.fallthrough(); // accept global options after the subcommand

    GlobalOptions global;
    app.add_option("--threads", global.threads,
                   "maximum worker count (0 = hardware parallelism)");
    std::string output_dir_opt;
    auto* od = app.add_option("--output-dir", output_dir_opt,
                              "override the config output directory");
    std::uint64_t seed_opt = 0;
    auto* sd = app.add_option("--seed", seed_opt, "override the config random seed");
    app.add_flag("--dump-matrices", global.dump_matrices,
                 "write stiffness/precision matrices in Matrix Market format");

    std::string config_path;
    int n_samples = 10;
    std::string design_path;
    std::vector<double> alphas;

    auto* optimize = app.add_subcommand("optimize", "run one robust optimisation");
    optimize->add_option("config", config_path, "config file")->required();

    auto* sample = app.add_subcommand("sample-field", "draw and export field samples");
    sample->add_option("config", config_path, "config file")->required();
    sample->add_option("-n,--samples", n_samples, "number of samples");

    auto* validate =
        app.add_subcommand("validate", "Monte-Carlo check of the perturbation statistics");
    validate->add_option("config", config_path, "config file")->required();
    validate->add_option("-n,--samples", n_samples, "number of samples");
    validate->add_option("--design", design_path,
                         "design.json from a previous optimize run");

    auto* pareto = app.add_subcommand("pareto", "sweep the cost weight alpha");
    pareto->add_option("config", config_path, "config file")->required();
    pareto->add_option("--alphas", alphas, "alpha values (must include 1 and 0)")
        ->required();

    auto* pcurve = app.add_subcommand("penalty-curve", "dump the penalisation curve");
    pcurve->add_option("config", config_path, "config file")->required();

    CLI11_PARSE(app, argc, argv);
    if (*od) global.output_dir = output_dir_opt;
    if (*sd) global.seed = seed_opt;

    try {
        if (optimize->parsed()) return cmd_optimize(config_path, global);
        if (sample->parsed()) return cmd_sample_field(config_path, n_samples, global);
        if (validate->parsed())
            return cmd_validate(config_path, n_samples, design_path, global);
        if (pareto->parsed()) return cmd_pareto(config_path, alphas, global);
        if (pcurve->parsed()) return cmd_penalty_curve(config_path, global);
    } catch (const std::exception& e) {
        std::cerr << "latro: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
