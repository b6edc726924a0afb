// kano: train, evaluate, simulate, picard and riccati subcommands.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "kano/experiment.hpp"

namespace fs = std::filesystem;
using namespace kano;

namespace {

void write_manifest(const exp::ExperimentConfig& cfg, const std::string& command) {
    io::write_file(fs::path(cfg.out_dir) / ("run_manifest_" + command + ".txt"), exp::run_manifest(cfg, command));
}

int run_train(const exp::ExperimentConfig& cfg) {
    const auto data = exp::generate_dataset(cfg);
    auto res = exp::train(cfg, data);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    res.model->save((dir / "model.ckpt").string());
    exp::loss_csv(cfg, res).write(dir / "loss.csv");
    io::Csv summary(exp::config_hash(cfg), cfg.seed, {"metric", "value"});
    summary.row({"dataset_hash", io::hex(exp::dataset_hash(data))});
    summary.row({"initial_loss", io::fmt(res.initial_loss)});
    summary.row({"final_loss", io::fmt(res.final_loss)});
    summary.row({"best_loss", io::fmt(res.best_loss)});
    summary.row({"best_step", io::fmt(res.best_step)});
    summary.row({"parameters", io::fmt(res.model->parameter_count())});
    summary.write(dir / "train_summary.csv");
    write_manifest(cfg, "train");
    std::cout << "initial_loss " << io::fmt(res.initial_loss) << "\nfinal_loss " << io::fmt(res.final_loss)
              << "\nbest_loss " << io::fmt(res.best_loss) << " at step " << res.best_step << "\ncheckpoint "
              << (dir / "model.ckpt").string() << "\n";
    return 0;
}

int run_evaluate(const exp::ExperimentConfig& cfg) {
    auto ls = exp::load_surrogate(cfg);
    const auto out = exp::evaluate_along_paths(cfg, ls.surrogate);
    const fs::path dir(cfg.out_dir);
    out.paths_csv.write(dir / "evaluate_paths.csv");
    out.summary_csv.write(dir / "evaluate_summary.csv");
    write_manifest(cfg, "evaluate");
    const auto& r = out.report;
    std::cout << "paths " << r.paths << " states " << r.states << "\nrel_l2_u " << io::fmt(r.rel_u) << "\nrel_l2_z "
              << io::fmt(r.rel_z) << "\nrel_l2_ups " << io::fmt(r.rel_ups) << "\nrel_l2_u_near_t0 "
              << io::fmt(r.rel_u_near) << "\n";
    return 0;
}

int run_simulate(const exp::ExperimentConfig& cfg) {
    exp::simulate_csv(cfg).write(fs::path(cfg.out_dir) / "simulate.csv");
    write_manifest(cfg, "simulate");
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "simulate.csv").string() << "\n";
    return 0;
}

int run_picard(const exp::ExperimentConfig& cfg) {
    const auto run = exp::picard_run(cfg);
    run.csv.write(fs::path(cfg.out_dir) / "picard.csv");
    write_manifest(cfg, "picard");
    std::cout << "rho " << io::fmt(run.rho) << "\niterations " << run.result.iterations << "\nresidual "
              << io::fmt(run.result.residual) << "\n";
    return 0;
}

int run_riccati(const exp::ExperimentConfig& cfg) {
    exp::riccati_csv(cfg).write(fs::path(cfg.out_dir) / "riccati.csv");
    write_manifest(cfg, "riccati");
    const auto curve = bench::riccati_solve(cfg.d, cfg.T, cfg.riccati_steps);
    std::cout << "k(0) " << io::fmt(curve.k_at(0)) << "\nk(T) " << io::fmt(curve.k_at(curve.steps())) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kolmogorov-Arnold neural operator experiments"};
    app.require_subcommand(1);
    std::string config_path;
    std::map<std::string, std::string> overrides;
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    for (const auto& f : exp::config_fields()) {
        const std::string name = f.name;
        app.add_option_function<std::string>(
            "--" + name, [&overrides, name](const std::string& v) { overrides[name] = v; }, f.doc);
    }
    struct Command {
        const char* name;
        const char* help;
        int (*fn)(const exp::ExperimentConfig&);
    };
    const Command commands[] = {
        {"train", "train a KANO on closed-form grid targets", run_train},
        {"evaluate", "compare a model with the closed form along simulated paths", run_evaluate},
        {"simulate", "Euler-Maruyama paths of the benchmark SDE", run_simulate},
        {"picard", "Picard iteration on the semilinear toy problem", run_picard},
        {"riccati", "RK4 solve of the scalar Riccati equation", run_riccati},
    };
    for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();
    app.fallthrough();
    CLI11_PARSE(app, argc, argv);

    try {
        exp::ExperimentConfig cfg;
        if (!config_path.empty()) exp::apply_kv(cfg, io::read_kv_file(config_path));
        exp::apply_kv(cfg, overrides);
        cfg.validate();
        for (const auto& c : commands)
            if (app.got_subcommand(c.name)) return c.fn(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 1;
}
