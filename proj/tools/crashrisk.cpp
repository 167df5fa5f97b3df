// crashrisk: synthetic-data generation, imputation, model training/scoring,
// and the five canned experiments, from one binary.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.

#include "crashrisk/errors.hpp"
#include "crashrisk/evaluation.hpp"
#include "crashrisk/experiments.hpp"
#include "crashrisk/imputers.hpp"
#include "crashrisk/masked_table.hpp"
#include "crashrisk/pipeline.hpp"
#include "crashrisk/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace crashrisk;

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string write_text(const std::string& dir, const std::string& name,
                       const std::string& text) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
    return path;
}

void announce(const std::vector<std::string>& paths) {
    for (const std::string& path : paths) std::cout << path << '\n';
}

nlohmann::json parse_config(const std::string& text, const std::string& what) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(what + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(what + " must be a JSON object");
    return doc;
}

std::string required_path(const nlohmann::json& doc, const char* key,
                          const std::string& what) {
    if (!doc.contains(key) || !doc.at(key).is_string())
        throw ConfigError(what + " needs a string '" + std::string(key) + "' entry");
    return doc.at(key).get<std::string>();
}

nlohmann::json manifest_skeleton(const std::string& command, std::uint64_t seed) {
    nlohmann::json doc;
    doc["command"] = command;
    doc["library_version"] = kLibraryVersion;
    doc["seed"] = seed;
    return doc;
}

nlohmann::json generator_config_json(const GeneratorConfig& config) {
    nlohmann::json doc;
    doc["n_crash"] = config.n_crash;
    doc["n_noncrash"] = config.n_noncrash;
    doc["d"] = config.d;
    doc["latent_rank"] = config.latent_rank;
    doc["noise_std"] = config.noise_std;
    doc["class_shift"] = config.class_shift;
    doc["rng_seed"] = config.rng_seed;
    return doc;
}

// Options shared by every subcommand; unset optionals fall back to whatever
// the config file (or the built-in default) says.
struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<std::string> scaling;
};

void add_common_flags(CLI::App* cmd, CliOptions& opts, bool with_format,
                      bool with_scaling) {
    cmd->add_option("--config", opts.config_path, "JSON configuration file")
        ->check(CLI::ExistingFile);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&opts](std::uint64_t v) { opts.seed = v; }, "Base RNG seed");
    cmd->add_option_function<std::string>(
        "--out", [&opts](std::string v) { opts.out = std::move(v); }, "Output directory");
    if (with_format)
        cmd->add_option_function<std::string>(
               "--format", [&opts](std::string v) { opts.format = std::move(v); },
               "Report body format")
            ->check(CLI::IsMember({"csv", "json"}));
    if (with_scaling)
        cmd->add_option_function<std::string>(
               "--scaling", [&opts](std::string v) { opts.scaling = std::move(v); },
               "Standardization mode: 'full' table up front, or per-'train' fold")
            ->check(CLI::IsMember({"full", "train"}));
}

int run_experiment_command(ExperimentId id, const CliOptions& opts) {
    nlohmann::json doc = opts.config_path.empty()
                             ? nlohmann::json::object()
                             : parse_config(read_text(opts.config_path), "experiment config");
    const std::string name = to_string(id);
    if (doc.contains("experiment")) {
        if (doc.at("experiment") != name)
            throw ConfigError("config names experiment '" +
                              doc.at("experiment").dump() + "' but the subcommand runs '" +
                              name + "'");
    } else {
        doc["experiment"] = name;
    }
    ExperimentSpec spec = experiment_spec_from_json(doc.dump());
    if (opts.seed) spec.seed = *opts.seed;
    if (opts.out) spec.out_dir = *opts.out;
    if (opts.format) spec.format = *opts.format;
    if (opts.scaling) spec.scaling = *opts.scaling;
    spec.validate();

    const ExperimentResult result = run_experiment(spec);
    announce(write_experiment(result, spec));
    return 0;
}

int run_gen_data(const CliOptions& opts) {
    GeneratorConfig config;
    if (!opts.config_path.empty())
        config = generator_config_from_json(read_text(opts.config_path));
    if (opts.seed) config.rng_seed = *opts.seed;
    const std::string out = opts.out.value_or("reports");

    const SyntheticDataset dataset = generate(config);
    std::ostringstream csv;
    save_csv(csv, dataset.data.table, &dataset.data.labels);

    nlohmann::json manifest = manifest_skeleton("gen-data", config.rng_seed);
    manifest["config"] = generator_config_json(config);
    manifest["bayes_auc"] = bayes_auc(config.class_shift);

    announce({write_text(out, "data.csv", csv.str()),
              write_text(out, "manifest.json", manifest.dump(2))});
    return 0;
}

int run_impute(const CliOptions& opts) {
    if (opts.config_path.empty()) throw ConfigError("impute requires --config");
    const nlohmann::json doc = parse_config(read_text(opts.config_path), "impute config");
    for (const auto& [key, value] : doc.items())
        if (key != "csv" && key != "imputer")
            throw ConfigError("unknown impute config key '" + key + "'");
    const std::string csv_path = required_path(doc, "csv", "impute config");

    ImputerSpec imputer;
    if (doc.contains("imputer")) {
        // Reuse the pipeline parser for the imputer block's shape and checks.
        nlohmann::json wrapper;
        wrapper["imputer"] = doc.at("imputer");
        imputer = pipeline_config_from_json(wrapper.dump()).imputer;
    }
    const std::uint64_t seed = opts.seed.value_or(0);
    const std::string out = opts.out.value_or("reports");

    const CsvData input = load_csv_file(csv_path);
    const ImputeResult result = fit_imputer(imputer, input.table, seed);
    const MaskedTable completed =
        MaskedTable::complete(result.completed, input.table.column_names());
    std::ostringstream csv;
    save_csv(csv, completed, input.labels ? &*input.labels : nullptr);

    nlohmann::json manifest = manifest_skeleton("impute", seed);
    manifest["config"]["csv"] = csv_path;
    manifest["config"]["imputer"] =
        nlohmann::json::parse(pipeline_config_to_json(PipelineConfig{imputer})).at("imputer");
    manifest["iterations"] = result.iterations;
    manifest["converged"] = result.converged;

    announce({write_text(out, "completed.csv", csv.str()),
              write_text(out, "imputer_model.json",
                         imputer_model_to_json(result.model, seed, result.iterations)),
              write_text(out, "manifest.json", manifest.dump(2))});
    return 0;
}

int run_train(const CliOptions& opts) {
    if (opts.config_path.empty()) throw ConfigError("train requires --config");
    const nlohmann::json doc = parse_config(read_text(opts.config_path), "train config");
    for (const auto& [key, value] : doc.items())
        if (key != "csv" && key != "pipeline")
            throw ConfigError("unknown train config key '" + key + "'");
    const std::string csv_path = required_path(doc, "csv", "train config");
    const PipelineConfig config = doc.contains("pipeline")
                                      ? pipeline_config_from_json(doc.at("pipeline").dump())
                                      : PipelineConfig{};
    const std::uint64_t seed = opts.seed.value_or(0);
    const std::string out = opts.out.value_or("reports");

    CsvData input = load_csv_file(csv_path);
    if (!input.labels)
        throw ConfigError("training data needs a 'label' column: " + csv_path);
    const LabeledDataset data(std::move(input.table), std::move(*input.labels));
    const TrainedPipeline model = fit_pipeline(data, config, seed);

    nlohmann::json manifest = manifest_skeleton("train", seed);
    manifest["config"]["csv"] = csv_path;
    manifest["config"]["pipeline"] = nlohmann::json::parse(pipeline_config_to_json(config));

    announce({write_text(out, "model.json", pipeline_model_to_json(model)),
              write_text(out, "manifest.json", manifest.dump(2))});
    return 0;
}

int run_score(const CliOptions& opts) {
    if (opts.config_path.empty()) throw ConfigError("score requires --config");
    const nlohmann::json doc = parse_config(read_text(opts.config_path), "score config");
    for (const auto& [key, value] : doc.items())
        if (key != "csv" && key != "model")
            throw ConfigError("unknown score config key '" + key + "'");
    const std::string csv_path = required_path(doc, "csv", "score config");
    const std::string model_path = required_path(doc, "model", "score config");
    const std::string out = opts.out.value_or("reports");
    const std::string format = opts.format.value_or("csv");

    const TrainedPipeline model = pipeline_model_from_json(read_text(model_path));
    const CsvData input = load_csv_file(csv_path);
    const Eigen::VectorXd scores = pipeline_score(model, input.table);

    std::ostringstream csv;
    csv << "row,score,prediction\n";
    for (Eigen::Index i = 0; i < scores.size(); ++i)
        csv << i << ',' << format_value(scores[i]) << ',' << (scores[i] >= 0.0 ? 1 : -1)
            << '\n';

    nlohmann::json manifest = manifest_skeleton("score", 0);
    manifest.erase("seed");  // scoring draws no random numbers
    manifest["config"]["csv"] = csv_path;
    manifest["config"]["model"] = model_path;

    std::vector<std::string> paths;
    paths.push_back(write_text(out, "scores.csv", csv.str()));
    if (input.labels) {
        const EvalReport report = evaluate_scores(scores, *input.labels);
        if (format == "json") {
            nlohmann::json metrics;
            metrics["accuracy"] = report.accuracy;
            metrics["auc"] = report.auc;
            metrics["sensitivity"] = report.sensitivity;
            metrics["specificity"] = report.specificity;
            metrics["confusion"] = {{"tn", report.confusion.tn},
                                    {"fn", report.confusion.fn},
                                    {"fp", report.confusion.fp},
                                    {"tp", report.confusion.tp}};
            paths.push_back(write_text(out, "metrics.json", metrics.dump(2)));
        } else {
            std::ostringstream metrics;
            metrics << "accuracy,auc,sensitivity,specificity,tn,fn,fp,tp\n"
                    << format_value(report.accuracy) << ',' << format_value(report.auc)
                    << ',' << format_value(report.sensitivity) << ','
                    << format_value(report.specificity) << ',' << report.confusion.tn
                    << ',' << report.confusion.fn << ',' << report.confusion.fp << ','
                    << report.confusion.tp << '\n';
            paths.push_back(write_text(out, "metrics.csv", metrics.str()));
        }
    }
    paths.push_back(write_text(out, "manifest.json", manifest.dump(2)));
    announce(paths);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crash-likelihood modeling toolkit: synthetic data, imputation, "
                 "classifiers, and canned experiments"};
    app.set_version_flag("--version", std::string(kLibraryVersion));
    app.require_subcommand(1);

    struct Sub {
        CliOptions opts;
        std::function<int(const CliOptions&)> run;
    };
    std::vector<std::unique_ptr<Sub>> subs;
    Sub* selected = nullptr;

    const auto add = [&](const std::string& name, const std::string& help, bool format,
                         bool scaling, std::function<int(const CliOptions&)> run) {
        CLI::App* cmd = app.add_subcommand(name, help);
        auto sub = std::make_unique<Sub>();
        sub->run = std::move(run);
        add_common_flags(cmd, sub->opts, format, scaling);
        Sub* raw = sub.get();
        cmd->callback([&selected, raw] { selected = raw; });
        subs.push_back(std::move(sub));
    };

    const auto experiment = [](ExperimentId id) {
        return [id](const CliOptions& opts) { return run_experiment_command(id, opts); };
    };

    add("gen-data", "Generate a synthetic labeled dataset CSV", false, false, run_gen_data);
    add("imbalance-sweep", "Class-weight / resampling grid over gamma, mode, classifier",
        true, true, experiment(ExperimentId::ImbalanceSweep));
    add("dim-sweep", "Imputation RMSE and fit time across latent dimensions", true, true,
        experiment(ExperimentId::ImputerDimSweep));
    add("ratio-sweep", "Imputation RMSE across missing ratios for all imputers", true, true,
        experiment(ExperimentId::ImputerRatioSweep));
    add("missing-auc", "Classifier AUC across missing ratios, imputers, feature sets",
        true, true, experiment(ExperimentId::MissingVsAuc));
    add("validate", "Train on one dataset, score a held-out one with injected gaps", true,
        true, experiment(ExperimentId::Validation));
    add("impute", "Fill the missing cells of a CSV with a fitted imputer", false, false,
        run_impute);
    add("train", "Fit a full pipeline on a labeled CSV and save the model", false, false,
        run_train);
    add("score", "Score a CSV with a saved pipeline model", true, false, run_score);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {  // --help / --version
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return selected->run(selected->opts);
    } catch (const crashrisk::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const crashrisk::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const crashrisk::Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 3;
    }
}
