#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "dlsr/checkpoint.hpp"
#include "dlsr/complexity.hpp"
#include "dlsr/config.hpp"
#include "dlsr/evaluation.hpp"
#include "dlsr/genotype.hpp"
#include "dlsr/image_io.hpp"
#include "dlsr/search.hpp"
#include "dlsr/trainer.hpp"

namespace dlsr::cli {
namespace {

namespace fs = std::filesystem;

struct Overrides {
    std::optional<double> mu, gamma, lambda;
    std::optional<std::uint64_t> seed;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--mu", o.mu, "HFEN loss weight");
    cmd->add_option("--gamma", o.gamma, "parameter-regulariser weight");
    cmd->add_option("--lambda", o.lambda, "validation-loss weight in the architecture step");
    cmd->add_option("--seed", o.seed, "seed for data, search and training");
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("DLSR_SEED");
    if (!s || !*s) return std::nullopt;
    std::size_t used = 0;
    const std::string text(s);
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size()) throw std::invalid_argument("DLSR_SEED must be a non-negative integer, got '" + text + "'");
    return v;
}

// Defaults < config file < DLSR_SEED < command-line flags.
RunConfig resolve_config(const std::string& path, const Overrides& o) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
    if (auto s = env_seed()) cfg.set_seed(*s);
    if (o.seed) cfg.set_seed(*o.seed);
    if (o.mu) cfg.loss.mu = *o.mu;
    if (o.gamma) cfg.loss.gamma = *o.gamma;
    if (o.lambda) cfg.loss.lambda_val = *o.lambda;
    cfg.resolve();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

std::string echo_config(const std::string& out_dir, const RunConfig& cfg) {
    const std::string text = to_json(cfg);
    write_text(fs::path(out_dir) / "config.resolved.json", text);
    return text;
}

// --- search ---------------------------------------------------------------

struct SearchArgs {
    std::string config, out;
    Overrides o;
};

int run_search_cmd(const SearchArgs& a) {
    const RunConfig cfg = resolve_config(a.config, a.o);
    const std::string provenance = echo_config(a.out, cfg);
    auto data = load_data(cfg.data);
    Searcher searcher(cfg.supernet, cfg.search, cfg.loss, std::move(data));
    searcher.set_provenance(provenance);
    const int every = std::max(1, cfg.search.total_steps / 20);
    const auto& state = searcher.run(a.out, [&](const StepLog& log) {
        if (log.step % every == 0 || log.step == cfg.search.total_steps)
            std::cout << "step " << log.step << '/' << cfg.search.total_steps << (log.warmup ? " [warmup]" : "")
                      << " L_tr " << log.train_loss << " entropy " << log.entropy_mean << '\n';
    });
    std::cout << "snapshots:";
    for (const auto& s : state.snapshots) std::cout << ' ' << s.step;
    std::cout << "\ngenotype written to " << (fs::path(a.out) / "genotype.json").string() << '\n';
    return 0;
}

// --- export ---------------------------------------------------------------

int run_export_cmd(const std::string& ckpt, const std::string& out) {
    const Genotype g = genotype_from_checkpoint(ckpt);
    save_genotype(g, out);
    std::cout << serialize(g);
    return 0;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    std::string genotype, config, out, init_from;
    Overrides o;
};

int run_train_cmd(const TrainArgs& a) {
    RunConfig cfg = resolve_config(a.config, a.o);
    if (!a.init_from.empty()) cfg.train.init_from = a.init_from;
    Genotype g = load_genotype(a.genotype);
    g.scale = cfg.data.scale;
    const std::string provenance = echo_config(a.out, cfg);
    save_genotype(g, (fs::path(a.out) / "genotype.json").string());
    Trainer trainer(g, cfg.supernet, cfg.train, cfg.loss, load_data(cfg.data));
    trainer.set_provenance(provenance);
    if (!cfg.train.init_from.empty()) trainer.warm_start(cfg.train.init_from);
    const int every = std::max(1, cfg.train.total_steps / 20);
    trainer.run(a.out, [&](const TrainStepLog& log) {
        if (log.step % every == 0 || log.step == cfg.train.total_steps)
            std::cout << "step " << log.step << '/' << cfg.train.total_steps << " lr " << log.lr << " loss "
                      << log.loss << '\n';
    });
    std::cout << "checkpoint written to " << (fs::path(a.out) / "model.ckpt").string() << '\n';
    return 0;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, genotype, hr_dir, report, scatter, baselines, name = "dlsr";
    int scale = 0;
    bool bicubic_only = false;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_eval_cmd(const EvalArgs& a) {
    std::vector<EvalReport> reports;
    if (a.bicubic_only) {
        if (a.scale < 1) throw std::invalid_argument("--scale is required with --bicubic");
        reports.push_back(evaluate_model(bicubic_model(a.scale), a.hr_dir, a.scale, "bicubic"));
    } else {
        if (a.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required unless --bicubic is given");
        const SrNetwork net = load_trained_network(a.checkpoint);
        const int scale = net.config().scale;
        if (a.scale != 0 && a.scale != scale)
            throw std::invalid_argument("checkpoint is a x" + std::to_string(scale) + " model, --scale says x" +
                                        std::to_string(a.scale));
        if (!a.genotype.empty()) {
            Genotype expected = load_genotype(a.genotype);
            expected.scale = scale;
            if (!(parse_genotype(load_checkpoint(a.checkpoint).genotype_json) == expected))
                throw std::invalid_argument("genotype '" + a.genotype + "' does not match the checkpoint");
        }
        reports.push_back(evaluate_model(net, a.hr_dir, a.name));
        reports.push_back(evaluate_model(bicubic_model(scale), a.hr_dir, scale, "bicubic"));
    }
    for (const auto& r : reports)
        std::cout << std::left << std::setw(10) << r.model << " x" << r.scale << "  PSNR " << std::fixed
                  << std::setprecision(3) << r.mean_psnr << " dB  SSIM " << std::setprecision(4) << r.mean_ssim
                  << "  HFEN " << r.mean_hfen << "  (" << r.per_image.size() << " images, " << r.skipped.size()
                  << " skipped)\n";
    if (!a.report.empty()) write_text(a.report, report_to_json(reports.front()));
    if (!a.scatter.empty()) {
        std::vector<ScatterEntry> rows;
        if (!a.baselines.empty()) rows = parse_scatter_csv(read_text(a.baselines));
        rows.push_back(scatter_entry(reports.front()));
        emit_scatter_data(rows, a.scatter);
    }
    return 0;
}

// --- analyze --------------------------------------------------------------

struct AnalyzeArgs {
    std::string genotype, config, json_out;
    int scale = 0;
    bool layers = false;
};

int run_analyze_cmd(const AnalyzeArgs& a) {
    RunConfig run = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    SupernetConfig cfg = run.supernet;
    cfg.scale = a.scale > 0 ? a.scale : run.data.scale;
    ComplexityReport report;
    std::string subject;
    if (!a.genotype.empty()) {
        Genotype g = load_genotype(a.genotype);
        g.scale = cfg.scale;
        cfg = config_for(g, cfg);
        report = genotype_complexity(g, cfg, hr_dims_for_scale(cfg.scale));
        subject = "genotype " + a.genotype;
    } else {
        cfg.validate();
        report = supernet_complexity(cfg, hr_dims_for_scale(cfg.scale));
        subject = "supernet";
    }
    const Cardinality card = search_space_cardinality(cfg);

    std::cout << subject << ": C=" << cfg.channels << ", " << cfg.num_cells << " cells, x" << cfg.scale << '\n';
    if (a.layers) {
        std::cout << format_complexity_table(report);
    } else {
        std::cout << std::fixed << std::setprecision(1) << "params      " << report.total_params << " ("
                  << report.total_params / 1e3 << " K)\n"
                  << std::setprecision(2) << "multi-adds  " << report.total_multiadds << " ("
                  << report.total_multiadds / 1e9 << " G at " << report.hr_dims.width << 'x' << report.hr_dims.height
                  << ")\n";
    }
    std::cout << "operations per cell          " << card.per_cell_ops << '\n'
              << "search space (factorial)     " << card.factorial_convention << '\n'
              << "search space (top-2 inputs)  " << card.top2_convention << '\n';

    if (!a.json_out.empty()) {
        nlohmann::ordered_json j;
        j["subject"] = subject;
        j["channels"] = cfg.channels;
        j["num_cells"] = cfg.num_cells;
        j["scale"] = cfg.scale;
        j["hr_dims"] = {report.hr_dims.height, report.hr_dims.width};
        j["total_params"] = report.total_params;
        j["total_multiadds"] = report.total_multiadds;
        auto layers = nlohmann::ordered_json::array();
        for (const auto& l : report.per_layer)
            layers.push_back({{"name", l.name}, {"params", l.params}, {"multiadds", l.multiadds}});
        j["layers"] = layers;
        j["cardinality"] = {{"per_cell_ops", card.per_cell_ops},
                            {"factorial_convention", card.factorial_convention},
                            {"top2_convention", card.top2_convention}};
        write_text(a.json_out, j.dump(2) + "\n");
    }
    return 0;
}

// --- synth ----------------------------------------------------------------

int run_synth_cmd(const std::string& out, int count, int size, std::uint64_t seed) {
    if (count < 1 || size < 1) throw std::invalid_argument("--count and --size must be positive");
    fs::create_directories(out);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "synth_%04d.png", i);
        save_png((fs::path(out) / name).string(), synthesize_image(size, size, rng));
    }
    std::cout << "wrote " << count << " images to " << out << '\n';
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Differentiable architecture search for lightweight super-resolution", "dlsr"};
    app.require_subcommand(1);

    SearchArgs search_args;
    auto* search = app.add_subcommand("search", "run the bi-level architecture search");
    search->add_option("--config", search_args.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    search->add_option("--out", search_args.out, "run directory")->required();
    add_override_flags(search, search_args.o);

    std::string export_ckpt, export_out;
    auto* exp = app.add_subcommand("export", "extract the genotype from a checkpoint");
    exp->add_option("--checkpoint", export_ckpt, "search or training checkpoint")->required();
    exp->add_option("--out", export_out, "genotype file to write")->required();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a derived network from scratch");
    train->add_option("--genotype", train_args.genotype, "genotype file")->required()->check(CLI::ExistingFile);
    train->add_option("--config", train_args.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    train->add_option("--out", train_args.out, "run directory")->required();
    train->add_option("--init-from", train_args.init_from, "warm-start checkpoint");
    add_override_flags(train, train_args.o);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "evaluate a trained network on a folder of HR images");
    eval->add_option("--checkpoint", eval_args.checkpoint, "training checkpoint");
    eval->add_option("--genotype", eval_args.genotype, "genotype the checkpoint must match");
    eval->add_option("--hr-dir", eval_args.hr_dir, "folder of HR images")->required();
    eval->add_option("--scale", eval_args.scale, "upscaling factor");
    eval->add_option("--report", eval_args.report, "JSON report path");
    eval->add_option("--scatter", eval_args.scatter, "CSV plot-data path");
    eval->add_option("--baselines", eval_args.baselines, "CSV rows to prepend to the plot data");
    eval->add_option("--name", eval_args.name, "model name in reports");
    eval->add_flag("--bicubic", eval_args.bicubic_only, "evaluate bicubic upsampling only");

    AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "parameter, Multi-Adds and search-space report");
    analyze->add_option("--genotype", analyze_args.genotype, "genotype file (default: the supernet)");
    analyze->add_option("--config", analyze_args.config, "run configuration for supernet settings");
    analyze->add_option("--scale", analyze_args.scale, "upscaling factor");
    analyze->add_option("--json", analyze_args.json_out, "write the report as JSON");
    analyze->add_flag("--layers", analyze_args.layers, "print the per-layer table");

    std::string synth_out;
    int synth_count = 20, synth_size = 96;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "write a procedural toy dataset as PNG files");
    synth->add_option("--out", synth_out, "output folder")->required();
    synth->add_option("--count", synth_count, "number of images");
    synth->add_option("--size", synth_size, "image side length");
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << '\n' << app.help();
        return 2;
    }

    try {
        if (search->parsed()) return run_search_cmd(search_args);
        if (exp->parsed()) return run_export_cmd(export_ckpt, export_out);
        if (train->parsed()) return run_train_cmd(train_args);
        if (eval->parsed()) return run_eval_cmd(eval_args);
        if (analyze->parsed()) return run_analyze_cmd(analyze_args);
        if (synth->parsed()) {
            if (auto s = env_seed(); s && synth_seed_opt->count() == 0) synth_seed = *s;
            return run_synth_cmd(synth_out, synth_count, synth_size, synth_seed);
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& ch : msg)
            if (ch == '\n') ch = ' ';
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 2;
}

}  // namespace dlsr::cli
