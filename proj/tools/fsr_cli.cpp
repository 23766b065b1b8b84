#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fsr/checkpoint.hpp"
#include "fsr/config.hpp"
#include "fsr/dataset.hpp"
#include "fsr/evaluator.hpp"
#include "fsr/grad_suite.hpp"
#include "fsr/tns_io.hpp"
#include "fsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace fsr;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitGradFail = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error(path.string() + ": cannot write");
}

RunConfig resolve_config(const std::string& file, const std::vector<std::string>& sets) {
    if (!fs::exists(file)) throw std::runtime_error("config file not found: " + file);
    RunConfig cfg = load_config_file(file);
    for (const auto& s : sets) apply_override(cfg, s);
    cfg.train.validate();
    return cfg;
}

DatasetIndex open_dataset(const std::string& dir) {
    if (dir.empty()) throw UsageError("no dataset directory given (set data_dir)");
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
    return index_dataset(dir);
}

int cmd_gen_data(const SyntheticSpec& spec, const std::string& out) {
    if (spec.classes < 2) throw UsageError("need at least 2 classes");
    if (spec.size < 16) throw UsageError("image size must be at least 16");
    if (spec.train_per_class == 0) throw UsageError("need at least 1 training sample per class");
    DatasetIndex idx = generate_synthetic(spec, out);
    std::cout << "wrote " << idx.total(Split::train) + idx.total(Split::test) << " files (" << idx.total(Split::train)
              << " train, " << idx.total(Split::test) << " test, " << idx.classes.size() << " classes) to " << out
              << '\n';
    return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets) {
    RunConfig cfg = resolve_config(config, sets);
    DatasetIndex data = open_dataset(cfg.data_dir);
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "config.resolved", render_config(cfg));
    try {
        FitResult r = fit(data, cfg.train, cfg.out_dir, &std::cerr);
        std::cout << std::setprecision(17) << "final_accuracy=" << r.final_accuracy << '\n';
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDiverged;
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& out_csv) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    DatasetIndex data = open_dataset(data_dir);
    if (data.classes != ckpt.class_names)
        throw std::runtime_error("dataset classes do not match the checkpoint's classes");
    Model model = restore_model(ckpt);
    LoadedSplit test = load_split(data, Split::test, ckpt.model.image_size);
    ConfusionMatrix cm = confusion(model.predict(test.images), test.labels, data.classes.size());
    MetricsReport rep = metrics(cm);
    std::cout << format_report(rep, data.classes);
    std::cout << std::setprecision(17) << "final_accuracy=" << rep.accuracy << '\n';
    const fs::path csv = out_csv.empty() ? fs::path(checkpoint) / "confusion.csv" : fs::path(out_csv);
    write_file(csv, confusion_csv(cm, data.classes));
    std::cerr << "confusion matrix written to " << csv.string() << '\n';
    return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw UsageError("bad seed '" + item + "' in --seeds");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw UsageError("--seeds is empty");
    return seeds;
}

int cmd_ablate(const std::string& config, const std::vector<std::string>& sets, const std::string& seeds_text,
               std::size_t workers) {
    const auto seeds = parse_seeds(seeds_text);
    RunConfig cfg = resolve_config(config, sets);
    DatasetIndex data = open_dataset(cfg.data_dir);
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "config.resolved", render_config(cfg));
    AblationOptions opt{cfg.out_dir, fs::path(cfg.out_dir) / "ablation.csv", workers, &std::cerr};
    std::vector<AblationRow> rows;
    try {
        rows = run_ablation(data, cfg.train, seeds, opt);
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDiverged;
    }
    for (const auto& s : summarize_ablation(rows))
        std::cout << std::fixed << std::setprecision(4) << s.config << " mean_accuracy=" << s.mean_accuracy << '\n';
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    bool ok = true;
    for (const auto& e : run_grad_suite(seed)) {
        std::cout << (e.report.pass ? "PASS " : "FAIL ") << e.name << " max_rel_err=" << std::scientific
                  << std::setprecision(3) << e.report.max_rel_err << '\n';
        ok = ok && e.report.pass;
    }
    return ok ? 0 : kExitGradFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Limited-data recognition toolkit: data generation, training, evaluation, ablation"};
    app.require_subcommand(1);

    SyntheticSpec spec;
    std::string gen_out = "data/synthetic";
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic speckled dataset");
    gen->add_option("--classes", spec.classes, "number of classes")->capture_default_str();
    gen->add_option("--train-per-class", spec.train_per_class)->capture_default_str();
    gen->add_option("--test-per-class", spec.test_per_class)->capture_default_str();
    gen->add_option("--size", spec.size, "image side length")->capture_default_str();
    gen->add_option("--seed", spec.seed)->capture_default_str();
    gen->add_option("--out", gen_out, "output directory")->capture_default_str();

    std::string config;
    std::vector<std::string> sets;
    auto* train = app.add_subcommand("train", "Train one model");
    train->add_option("--config", config)->required();
    train->add_option("--set", sets, "key=value override (repeatable)");

    std::string ckpt, data_dir, confusion_out;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
    eval->add_option("--checkpoint", ckpt)->required();
    eval->add_option("--data", data_dir)->required();
    eval->add_option("--confusion-out", confusion_out, "confusion CSV path (default: <checkpoint>/confusion.csv)");

    std::string seeds_text;
    std::size_t workers = 1;
    auto* ablate = app.add_subcommand("ablate", "Run the V0..V4/full ablation matrix");
    ablate->add_option("--config", config)->required();
    ablate->add_option("--seeds", seeds_text, "comma-separated seeds")->required();
    ablate->add_option("--set", sets, "key=value override (repeatable)");
    ablate->add_option("--parallel", workers, "concurrent runs")->capture_default_str()->check(CLI::PositiveNumber);

    std::uint64_t grad_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    gradcheck->add_option("--seed", grad_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_data(spec, gen_out);
        if (*train) return cmd_train(config, sets);
        if (*eval) return cmd_eval(ckpt, data_dir, confusion_out);
        if (*ablate) return cmd_ablate(config, sets, seeds_text, workers);
        if (*gradcheck) return cmd_gradcheck(grad_seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}
