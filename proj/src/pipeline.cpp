#include "crashrisk/pipeline.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/parallel.hpp"
#include "crashrisk/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <utility>

namespace crashrisk {

namespace {

std::string format_number(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.9g", v);
    return buffer;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& values, const std::vector<int>& features) {
    if (features.empty()) return values;
    Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j)
        out.col(static_cast<Eigen::Index>(j)) = values.col(features[j]);
    return out;
}

std::vector<std::string> subset_names(const std::vector<std::string>& names,
                                      const std::vector<int>& features) {
    if (features.empty()) return names;
    std::vector<std::string> out;
    out.reserve(features.size());
    for (int f : features) out.push_back(names[static_cast<std::size_t>(f)]);
    return out;
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    const double n = static_cast<double>(values.size());
    for (double v : values) out.mean += v;
    out.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / (n - 1.0));
    }
    return out;
}

}  // namespace

std::string to_string(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::SvmLinear: return "svm_linear";
        case ClassifierKind::SvmGaussian: return "svm_gaussian";
        case ClassifierKind::SvmPoly3: return "svm_poly3";
        case ClassifierKind::AdaBoost: return "adaboost";
    }
    throw InternalError("unknown classifier kind");
}

ClassifierKind classifier_kind_from_string(const std::string& name) {
    if (name == "svm_linear") return ClassifierKind::SvmLinear;
    if (name == "svm_gaussian") return ClassifierKind::SvmGaussian;
    if (name == "svm_poly3") return ClassifierKind::SvmPoly3;
    if (name == "adaboost") return ClassifierKind::AdaBoost;
    throw ConfigError("unknown classifier kind '" + name + "'");
}

void PipelineConfig::validate() const {
    if (imbalance) imbalance->validate();
    if (svm_C <= 0.0) throw ConfigError("svm_C must be positive");
    if (gaussian_gamma <= 0.0) throw ConfigError("gaussian_gamma must be positive");
    if (svm_tol <= 0.0) throw ConfigError("svm_tol must be positive");
    if (svm_max_epochs < 1) throw ConfigError("svm_max_epochs must be at least 1");
    if (adaboost_rounds < 0) throw ConfigError("adaboost_rounds must be nonnegative");
    if (missing_ratio && (*missing_ratio < 0.0 || *missing_ratio >= 1.0))
        throw ConfigError("missing_ratio must lie in [0, 1)");
    std::set<int> seen;
    for (int f : selected_features) {
        if (f < 0) throw ConfigError("selected_features entries must be nonnegative");
        if (!seen.insert(f).second)
            throw ConfigError("selected_features entries must be distinct");
    }
}

TrainedPipeline fit_pipeline(const LabeledDataset& train, const PipelineConfig& config,
                             std::uint64_t rng_seed) {
    config.validate();
    for (int f : config.selected_features)
        if (f >= train.table.cols())
            throw ConfigError("selected feature index out of range");

    TrainedPipeline model;
    model.classifier = config.classifier;
    model.features = config.selected_features;

    MaskedTable working = train.table;
    if (config.standardize) {
        model.scaler = fit_scaler(working);
        working = transform(working, *model.scaler);
    }

    ImputeResult imputed = fit_imputer(config.imputer, working, mix_seed(rng_seed, "imputer"));
    model.imputer = imputed.model;

    MaskedTable completed = MaskedTable::complete(
        take_columns(imputed.completed, config.selected_features),
        subset_names(working.column_names(), config.selected_features));
    LabeledDataset ready(std::move(completed), train.labels, train.weights);
    if (config.imbalance)
        ready = apply_imbalance(ready, *config.imbalance, mix_seed(rng_seed, "imbalance"));

    if (config.classifier == ClassifierKind::AdaBoost) {
        model.adaboost = adaboost_fit(ready, config.adaboost_rounds);
    } else {
        SvmOptions options;
        options.C = config.svm_C;
        options.tol = config.svm_tol;
        options.max_epochs = config.svm_max_epochs;
        options.kernel.gaussian_gamma = config.gaussian_gamma;
        options.kernel.kind = config.classifier == ClassifierKind::SvmGaussian
                                  ? KernelKind::Gaussian
                                  : (config.classifier == ClassifierKind::SvmPoly3
                                         ? KernelKind::Poly3
                                         : KernelKind::Linear);
        model.svm = svm_fit(ready, options);
    }
    return model;
}

Eigen::VectorXd pipeline_score(const TrainedPipeline& model, const MaskedTable& rows) {
    MaskedTable working = rows;
    if (model.scaler) working = transform(working, *model.scaler);
    const Eigen::MatrixXd completed = apply_imputer(model.imputer, working).completed;
    const Eigen::MatrixXd inputs = take_columns(completed, model.features);
    if (model.svm) return svm_score(*model.svm, inputs);
    if (model.adaboost) return adaboost_score(*model.adaboost, inputs);
    throw InternalError("pipeline holds no fitted classifier");
}

FoldResult run_fold(const LabeledDataset& data, const FoldSplit& split,
                    const PipelineConfig& config, std::uint64_t task_seed) {
    MaskedTable table = data.table;
    if (config.missing_ratio && *config.missing_ratio > 0.0) {
        const MaskMatrix extra = generate_mcar_mask(table.rows(), table.cols(),
                                                    *config.missing_ratio,
                                                    mix_seed(task_seed, "mask"));
        table = apply_mask(table, extra);
    }

    const auto subset_labels = [&](const std::vector<int>& idx) {
        Eigen::VectorXi out(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = data.labels[idx[i]];
        return out;
    };
    std::optional<Eigen::VectorXd> train_weights;
    if (data.weights) {
        Eigen::VectorXd w(static_cast<Eigen::Index>(split.train.size()));
        for (std::size_t i = 0; i < split.train.size(); ++i)
            w[static_cast<Eigen::Index>(i)] = (*data.weights)[split.train[i]];
        train_weights = std::move(w);
    }

    LabeledDataset train(table.select_rows(split.train), subset_labels(split.train),
                         std::move(train_weights));
    const MaskedTable test_table = table.select_rows(split.test);
    const Eigen::VectorXi test_labels = subset_labels(split.test);

    FoldResult result{fit_pipeline(train, config, task_seed), Eigen::VectorXd(), EvalReport{}};
    result.scores = pipeline_score(result.model, test_table);
    result.report = evaluate_scores(result.scores, test_labels);

    // Probe RMSE: test cells the fold mask hid that the caller's table had
    // observed, compared in the pipeline's working (post-scaler) scale.
    if (config.missing_ratio && *config.missing_ratio > 0.0) {
        MaskedTable original_test = data.table.select_rows(split.test);
        if (result.model.scaler) original_test = transform(original_test, *result.model.scaler);
        MaskedTable masked_test = test_table;
        if (result.model.scaler) masked_test = transform(masked_test, *result.model.scaler);
        const Eigen::MatrixXd imputed = apply_imputer(result.model.imputer, masked_test).completed;
        const MaskMatrix probe = original_test.mask() && !masked_test.mask();
        if (probe.any()) result.report.rmse = rmse(original_test.values(), imputed, probe);
    }
    return result;
}

CvReport run_cv(const LabeledDataset& data, const PipelineConfig& config, int k,
                int repeats, std::uint64_t rng_seed, int threads) {
    config.validate();
    if (k < 2) throw ConfigError("run_cv requires k >= 2");
    if (repeats < 1) throw ConfigError("run_cv requires repeats >= 1");

    const std::uint64_t base = mix_seed(rng_seed, "run_cv");
    std::vector<std::vector<FoldSplit>> splits;
    splits.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r)
        splits.push_back(kfold(data.labels, k, true,
                               mix_seed(mix_seed(base, "kfold"), static_cast<std::uint64_t>(r))));

    CvReport report;
    report.k = k;
    report.repeats = repeats;
    report.rows.resize(static_cast<std::size_t>(repeats) * static_cast<std::size_t>(k));

    parallel_for(report.rows.size(), threads, [&](std::size_t t) {
        const int r = static_cast<int>(t) / k;
        const int f = static_cast<int>(t) % k;
        const std::uint64_t task_seed =
            mix_seed(mix_seed(mix_seed(base, "task"), static_cast<std::uint64_t>(r)),
                     static_cast<std::uint64_t>(f));
        FoldResult fold = run_fold(data, splits[static_cast<std::size_t>(r)]
                                             [static_cast<std::size_t>(f)],
                                   config, task_seed);
        report.rows[t] = CvFoldRow{r, f, fold.report};
    });

    // Per-repeat fold means, then mean +- sample std across repeats.
    std::vector<MoeStats> per_repeat(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
        MoeStats& s = per_repeat[static_cast<std::size_t>(r)];
        double rmse_sum = 0.0;
        int rmse_count = 0;
        for (int f = 0; f < k; ++f) {
            const EvalReport& e =
                report.rows[static_cast<std::size_t>(r) * static_cast<std::size_t>(k) +
                            static_cast<std::size_t>(f)]
                    .report;
            s.accuracy += e.accuracy;
            s.auc += e.auc;
            s.sensitivity += e.sensitivity;
            s.specificity += e.specificity;
            if (e.rmse) {
                rmse_sum += *e.rmse;
                ++rmse_count;
            }
        }
        s.accuracy /= k;
        s.auc /= k;
        s.sensitivity /= k;
        s.specificity /= k;
        if (rmse_count > 0) s.rmse = rmse_sum / rmse_count;
    }

    report.repeat_means = per_repeat;
    const auto aggregate = [&](auto field) {
        std::vector<double> values;
        values.reserve(per_repeat.size());
        for (const MoeStats& s : per_repeat) values.push_back(field(s));
        return mean_std(values);
    };
    MeanStd acc = aggregate([](const MoeStats& s) { return s.accuracy; });
    MeanStd auc = aggregate([](const MoeStats& s) { return s.auc; });
    MeanStd sens = aggregate([](const MoeStats& s) { return s.sensitivity; });
    MeanStd spec = aggregate([](const MoeStats& s) { return s.specificity; });
    report.mean.accuracy = acc.mean;
    report.stddev.accuracy = acc.stddev;
    report.mean.auc = auc.mean;
    report.stddev.auc = auc.stddev;
    report.mean.sensitivity = sens.mean;
    report.stddev.sensitivity = sens.stddev;
    report.mean.specificity = spec.mean;
    report.stddev.specificity = spec.stddev;
    if (std::all_of(per_repeat.begin(), per_repeat.end(),
                    [](const MoeStats& s) { return s.rmse.has_value(); })) {
        MeanStd r = aggregate([](const MoeStats& s) { return *s.rmse; });
        report.mean.rmse = r.mean;
        report.stddev.rmse = r.stddev;
    }
    return report;
}

namespace {

void append_moe_row(std::ostringstream& out, const std::string& tag, const MoeStats& s) {
    out << tag << ",," << format_number(s.accuracy) << ',' << format_number(s.auc) << ','
        << format_number(s.sensitivity) << ',' << format_number(s.specificity) << ",,,,,"
        << (s.rmse ? format_number(*s.rmse) : "") << '\n';
}

}  // namespace

std::string cv_report_to_csv(const CvReport& report) {
    std::ostringstream out;
    out << "repeat,fold,accuracy,auc,sensitivity,specificity,tn,fn,fp,tp,rmse\n";
    for (const CvFoldRow& row : report.rows) {
        const EvalReport& e = row.report;
        out << row.repeat << ',' << row.fold << ',' << format_number(e.accuracy) << ','
            << format_number(e.auc) << ',' << format_number(e.sensitivity) << ','
            << format_number(e.specificity) << ',' << e.confusion.tn << ',' << e.confusion.fn
            << ',' << e.confusion.fp << ',' << e.confusion.tp << ','
            << (e.rmse ? format_number(*e.rmse) : "") << '\n';
    }
    append_moe_row(out, "mean", report.mean);
    append_moe_row(out, "stddev", report.stddev);
    return out.str();
}

std::string cv_report_to_json(const CvReport& report) {
    nlohmann::json doc;
    doc["k"] = report.k;
    doc["repeats"] = report.repeats;
    const auto moe_json = [](const MoeStats& s) {
        nlohmann::json j;
        j["accuracy"] = s.accuracy;
        j["auc"] = s.auc;
        j["sensitivity"] = s.sensitivity;
        j["specificity"] = s.specificity;
        if (s.rmse) j["rmse"] = *s.rmse;
        return j;
    };
    doc["mean"] = moe_json(report.mean);
    doc["stddev"] = moe_json(report.stddev);
    doc["rows"] = nlohmann::json::array();
    for (const CvFoldRow& row : report.rows) {
        nlohmann::json j;
        j["repeat"] = row.repeat;
        j["fold"] = row.fold;
        j["accuracy"] = row.report.accuracy;
        j["auc"] = row.report.auc;
        j["sensitivity"] = row.report.sensitivity;
        j["specificity"] = row.report.specificity;
        j["confusion"] = {{"tn", row.report.confusion.tn},
                          {"fn", row.report.confusion.fn},
                          {"fp", row.report.confusion.fp},
                          {"tp", row.report.confusion.tp}};
        if (row.report.rmse) j["rmse"] = *row.report.rmse;
        doc["rows"].push_back(j);
    }
    return doc.dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("pipeline config must be a JSON object");

    static const std::array<const char*, 11> known = {
        "imputer",        "imbalance",      "classifier",   "svm_C",
        "gaussian_gamma", "svm_tol",        "svm_max_epochs", "adaboost_rounds",
        "missing_ratio",  "selected_features", "standardize"};
    for (const auto& [key, value] : doc.items())
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw ConfigError("unknown pipeline config key '" + key + "'");

    PipelineConfig config;
    try {
        if (doc.contains("imputer")) {
            const nlohmann::json& imp = doc.at("imputer");
            if (!imp.is_object()) throw ConfigError("'imputer' must be an object");
            for (const auto& [key, value] : imp.items())
                if (key != "kind" && key != "latent_dim" && key != "clusters" &&
                    key != "max_iter" && key != "tol" && key != "restarts")
                    throw ConfigError("unknown imputer key '" + key + "'");
            if (imp.contains("kind"))
                config.imputer.kind =
                    imputer_kind_from_string(imp.at("kind").get<std::string>());
            if (imp.contains("latent_dim"))
                config.imputer.latent_dim = imp.at("latent_dim").get<int>();
            if (imp.contains("clusters"))
                config.imputer.clusters = imp.at("clusters").get<int>();
            if (imp.contains("max_iter"))
                config.imputer.max_iter = imp.at("max_iter").get<int>();
            if (imp.contains("tol")) config.imputer.tol = imp.at("tol").get<double>();
            if (imp.contains("restarts"))
                config.imputer.restarts = imp.at("restarts").get<int>();
        }
        if (doc.contains("imbalance") && !doc.at("imbalance").is_null()) {
            const nlohmann::json& imb = doc.at("imbalance");
            if (!imb.is_object()) throw ConfigError("'imbalance' must be an object");
            for (const auto& [key, value] : imb.items())
                if (key != "gamma" && key != "mode" && key != "smote_k")
                    throw ConfigError("unknown imbalance key '" + key + "'");
            ImbalanceConfig balance;
            if (imb.contains("gamma")) balance.gamma = imb.at("gamma").get<double>();
            if (imb.contains("mode"))
                balance.mode = imbalance_mode_from_string(imb.at("mode").get<std::string>());
            if (imb.contains("smote_k")) balance.smote_k = imb.at("smote_k").get<int>();
            config.imbalance = balance;
        }
        if (doc.contains("classifier"))
            config.classifier =
                classifier_kind_from_string(doc.at("classifier").get<std::string>());
        if (doc.contains("svm_C")) config.svm_C = doc.at("svm_C").get<double>();
        if (doc.contains("gaussian_gamma"))
            config.gaussian_gamma = doc.at("gaussian_gamma").get<double>();
        if (doc.contains("svm_tol")) config.svm_tol = doc.at("svm_tol").get<double>();
        if (doc.contains("svm_max_epochs"))
            config.svm_max_epochs = doc.at("svm_max_epochs").get<int>();
        if (doc.contains("adaboost_rounds"))
            config.adaboost_rounds = doc.at("adaboost_rounds").get<int>();
        if (doc.contains("missing_ratio") && !doc.at("missing_ratio").is_null())
            config.missing_ratio = doc.at("missing_ratio").get<double>();
        if (doc.contains("selected_features"))
            config.selected_features = doc.at("selected_features").get<std::vector<int>>();
        if (doc.contains("standardize"))
            config.standardize = doc.at("standardize").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config field has the wrong type: ") +
                          e.what());
    }
    config.validate();
    return config;
}

std::string pipeline_config_to_json(const PipelineConfig& config) {
    nlohmann::json doc;
    doc["imputer"]["kind"] = to_string(config.imputer.kind);
    doc["imputer"]["latent_dim"] = config.imputer.latent_dim;
    doc["imputer"]["clusters"] = config.imputer.clusters;
    doc["imputer"]["max_iter"] = config.imputer.max_iter;
    doc["imputer"]["tol"] = config.imputer.tol;
    doc["imputer"]["restarts"] = config.imputer.restarts;
    if (config.imbalance) {
        doc["imbalance"]["gamma"] = config.imbalance->gamma;
        doc["imbalance"]["mode"] = to_string(config.imbalance->mode);
        doc["imbalance"]["smote_k"] = config.imbalance->smote_k;
    }
    doc["classifier"] = to_string(config.classifier);
    doc["svm_C"] = config.svm_C;
    doc["gaussian_gamma"] = config.gaussian_gamma;
    doc["svm_tol"] = config.svm_tol;
    doc["svm_max_epochs"] = config.svm_max_epochs;
    doc["adaboost_rounds"] = config.adaboost_rounds;
    if (config.missing_ratio) doc["missing_ratio"] = *config.missing_ratio;
    if (!config.selected_features.empty())
        doc["selected_features"] = config.selected_features;
    doc["standardize"] = config.standardize;
    return doc.dump(2);
}

std::string pipeline_model_to_json(const TrainedPipeline& model) {
    nlohmann::json doc;
    if (model.scaler) {
        doc["scaler"]["means"] = std::vector<double>(model.scaler->means.begin(),
                                                     model.scaler->means.end());
        doc["scaler"]["stds"] = std::vector<double>(model.scaler->stds.begin(),
                                                    model.scaler->stds.end());
    } else {
        doc["scaler"] = nullptr;
    }
    doc["imputer"] = nlohmann::json::parse(imputer_model_to_json(model.imputer));
    doc["features"] = model.features;
    doc["classifier"] = to_string(model.classifier);
    if (model.svm) doc["svm"] = nlohmann::json::parse(svm_model_to_json(*model.svm));
    if (model.adaboost)
        doc["adaboost"] = nlohmann::json::parse(adaboost_model_to_json(*model.adaboost));
    return doc.dump(2);
}

TrainedPipeline pipeline_model_from_json(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline model is not valid JSON: ") + e.what());
    }
    TrainedPipeline model;
    try {
        if (doc.contains("scaler") && !doc.at("scaler").is_null()) {
            const auto means = doc.at("scaler").at("means").get<std::vector<double>>();
            const auto stds = doc.at("scaler").at("stds").get<std::vector<double>>();
            if (means.size() != stds.size())
                throw ConfigError("scaler means/stds lengths differ");
            Scaler scaler;
            scaler.means = Eigen::Map<const Eigen::VectorXd>(
                means.data(), static_cast<Eigen::Index>(means.size()));
            scaler.stds = Eigen::Map<const Eigen::VectorXd>(
                stds.data(), static_cast<Eigen::Index>(stds.size()));
            model.scaler = std::move(scaler);
        }
        model.imputer = imputer_model_from_json(doc.at("imputer").dump());
        model.features = doc.at("features").get<std::vector<int>>();
        model.classifier =
            classifier_kind_from_string(doc.at("classifier").get<std::string>());
        if (doc.contains("svm")) model.svm = svm_model_from_json(doc.at("svm").dump());
        if (doc.contains("adaboost"))
            model.adaboost = adaboost_model_from_json(doc.at("adaboost").dump());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline model field has the wrong type: ") +
                          e.what());
    }
    const bool needs_svm = model.classifier != ClassifierKind::AdaBoost;
    if (needs_svm && !model.svm)
        throw ConfigError("pipeline model is missing its svm block");
    if (!needs_svm && !model.adaboost)
        throw ConfigError("pipeline model is missing its adaboost block");
    return model;
}

}  // namespace crashrisk
