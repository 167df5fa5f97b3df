#include "crashrisk/classifiers.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <utility>
#include <vector>

namespace crashrisk {

namespace {

constexpr double kSupportEps = 1e-12;
// Full Gram matrices up to this many rows; larger problems fall back to an
// on-demand row cache.
constexpr Eigen::Index kFullGramLimit = 4800;
constexpr std::size_t kRowCacheCap = 1024;

Eigen::MatrixXd complete_values(const LabeledDataset& data, const char* who) {
    const Eigen::Index m = data.table.rows();
    const Eigen::Index d = data.table.cols();
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            if (!data.table.observed(i, j))
                throw IncompleteRows(std::string(who) +
                                     " requires complete rows (impute first)");
    return data.table.values();
}

void require_both_classes(const Eigen::VectorXi& labels, const char* who) {
    const bool has_pos = (labels.array() == 1).any();
    const bool has_neg = (labels.array() == -1).any();
    if (!has_pos || !has_neg)
        throw SingleClass(std::string(who) + " needs both classes present");
}

double kernel_between_rows(const KernelSpec& kernel, const Eigen::MatrixXd& X,
                           Eigen::Index a, Eigen::Index b) {
    switch (kernel.kind) {
        case KernelKind::Linear:
            return X.row(a).dot(X.row(b));
        case KernelKind::Gaussian:
            return std::exp(-kernel.gaussian_gamma * (X.row(a) - X.row(b)).squaredNorm());
        case KernelKind::Poly3: {
            const double base = 1.0 + X.row(a).dot(X.row(b));
            return base * base * base;
        }
    }
    throw InternalError("unknown kernel kind");
}

// Serves rows of the kernel matrix, either from a precomputed Gram matrix or
// from a bounded most-recently-used cache for large problems.
class GramRows {
public:
    GramRows(const Eigen::MatrixXd& X, const KernelSpec& kernel)
        : X_(X), kernel_(kernel), m_(X.rows()) {
        diag_.resize(m_);
        for (Eigen::Index i = 0; i < m_; ++i)
            diag_[i] = kernel_between_rows(kernel_, X_, i, i);
        if (m_ <= kFullGramLimit) {
            full_.resize(m_, m_);
            if (kernel_.kind == KernelKind::Linear) {
                full_ = X_ * X_.transpose();
            } else if (kernel_.kind == KernelKind::Poly3) {
                full_ = ((X_ * X_.transpose()).array() + 1.0).cube();
            } else {
                const Eigen::VectorXd sq = X_.rowwise().squaredNorm();
                full_ = (-kernel_.gaussian_gamma *
                         ((sq.replicate(1, m_) + sq.transpose().replicate(m_, 1)) -
                          2.0 * X_ * X_.transpose()))
                            .array()
                            .exp();
            }
        }
    }

    double diag(Eigen::Index i) const { return diag_[i]; }

    const Eigen::VectorXd& row(Eigen::Index i) {
        if (full_.size() > 0) {
            scratch_ = full_.row(i);
            return scratch_;
        }
        auto it = cache_.find(i);
        if (it == cache_.end()) {
            if (cache_.size() >= kRowCacheCap) {
                auto oldest = cache_.begin();
                for (auto walk = cache_.begin(); walk != cache_.end(); ++walk)
                    if (walk->second.first < oldest->second.first) oldest = walk;
                cache_.erase(oldest);
            }
            Eigen::VectorXd fresh(m_);
            for (Eigen::Index l = 0; l < m_; ++l)
                fresh[l] = kernel_between_rows(kernel_, X_, i, l);
            it = cache_.emplace(i, std::make_pair(tick_, std::move(fresh))).first;
        }
        it->second.first = ++tick_;
        return it->second.second;
    }

private:
    const Eigen::MatrixXd& X_;
    KernelSpec kernel_;
    Eigen::Index m_;
    Eigen::VectorXd diag_;
    Eigen::MatrixXd full_;
    Eigen::VectorXd scratch_;
    std::unordered_map<Eigen::Index, std::pair<std::uint64_t, Eigen::VectorXd>> cache_;
    std::uint64_t tick_ = 0;
};

std::vector<double> flatten_row_major(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
    return flat;
}

Eigen::MatrixXd unflatten_row_major(const std::vector<double>& flat, Eigen::Index rows,
                                    Eigen::Index cols) {
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw ConfigError("matrix payload size mismatch");
    Eigen::MatrixXd m(rows, cols);
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = flat[t++];
    return m;
}

}  // namespace

std::string to_string(KernelKind kind) {
    switch (kind) {
        case KernelKind::Linear: return "linear";
        case KernelKind::Gaussian: return "gaussian";
        case KernelKind::Poly3: return "poly3";
    }
    throw InternalError("unknown kernel kind");
}

KernelKind kernel_kind_from_string(const std::string& name) {
    if (name == "linear") return KernelKind::Linear;
    if (name == "gaussian") return KernelKind::Gaussian;
    if (name == "poly3") return KernelKind::Poly3;
    throw ConfigError("unknown kernel '" + name + "'");
}

double kernel_eval(const KernelSpec& kernel, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw DimensionMismatch("kernel arguments differ in dimension");
    switch (kernel.kind) {
        case KernelKind::Linear:
            return a.dot(b);
        case KernelKind::Gaussian:
            return std::exp(-kernel.gaussian_gamma * (a - b).squaredNorm());
        case KernelKind::Poly3: {
            const double base = 1.0 + a.dot(b);
            return base * base * base;
        }
    }
    throw InternalError("unknown kernel kind");
}

SvmModel svm_fit(const LabeledDataset& data, const SvmOptions& options) {
    if (!(options.C > 0.0)) throw ConfigError("C must be positive");
    if (!(options.tol > 0.0)) throw ConfigError("tolerance must be positive");
    if (options.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (options.kernel.kind == KernelKind::Gaussian && !(options.kernel.gaussian_gamma > 0.0))
        throw ConfigError("gaussian bandwidth must be positive");
    require_both_classes(data.labels, "svm_fit");
    const Eigen::MatrixXd X = complete_values(data, "svm_fit");
    const Eigen::Index m = X.rows();

    Eigen::VectorXd box(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double w = data.weights ? (*data.weights)[i] : 1.0;
        if (!(w > 0.0)) throw NonPositiveWeight("sample weight must be positive");
        box[i] = options.C * w;
    }
    const Eigen::VectorXi& y = data.labels;

    GramRows gram(X, options.kernel);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(m);  // sum_j alpha_j y_j K(x_j, x_i)

    SvmModel model;
    model.kernel = options.kernel;
    model.C = options.C;
    model.converged = false;

    double sel_up = 0.0, sel_low = 0.0;
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
        // Maximal violating pair on g_i = y_i - u_i.
        Eigen::Index best_up = -1, best_low = -1;
        sel_up = -std::numeric_limits<double>::infinity();
        sel_low = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i) {
            const double g = static_cast<double>(y[i]) - u[i];
            const bool in_up = (y[i] > 0 && alpha[i] < box[i]) || (y[i] < 0 && alpha[i] > 0.0);
            const bool in_low = (y[i] < 0 && alpha[i] < box[i]) || (y[i] > 0 && alpha[i] > 0.0);
            if (in_up && g > sel_up) {
                sel_up = g;
                best_up = i;
            }
            if (in_low && g < sel_low) {
                sel_low = g;
                best_low = i;
            }
        }
        if (best_up < 0 || best_low < 0 || sel_up - sel_low <= options.tol) {
            model.converged = true;
            break;
        }

        const Eigen::Index i = best_up, j = best_low;
        const Eigen::VectorXd& row_i = gram.row(i);
        Eigen::VectorXd ki = row_i;  // copy: fetching row j may invalidate row i
        const Eigen::VectorXd& kj = gram.row(j);
        const double quad =
            std::max(gram.diag(i) + gram.diag(j) - 2.0 * ki[j], 1e-12);
        double t = (sel_up - sel_low) / quad;
        t = std::min(t, y[i] > 0 ? box[i] - alpha[i] : alpha[i]);
        t = std::min(t, y[j] > 0 ? alpha[j] : box[j] - alpha[j]);

        alpha[i] += static_cast<double>(y[i]) * t;
        alpha[j] -= static_cast<double>(y[j]) * t;
        alpha[i] = std::clamp(alpha[i], 0.0, box[i]);
        alpha[j] = std::clamp(alpha[j], 0.0, box[j]);
        u += t * (ki - kj);
        ++model.epochs;
    }

    // Bias: average over margin (free) support vectors when any exist,
    // midpoint of the final selection gap otherwise.
    double sum = 0.0;
    int free_count = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double slack = 1e-8 * box[i];
        if (alpha[i] > slack && alpha[i] < box[i] - slack) {
            sum += static_cast<double>(y[i]) - u[i];
            ++free_count;
        }
    }
    model.bias = free_count > 0 ? sum / free_count : 0.5 * (sel_up + sel_low);

    std::vector<Eigen::Index> sv;
    for (Eigen::Index i = 0; i < m; ++i)
        if (alpha[i] > kSupportEps * std::max(1.0, box[i])) sv.push_back(i);
    model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
    model.dual_coeffs.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t t = 0; t < sv.size(); ++t) {
        model.support_vectors.row(static_cast<Eigen::Index>(t)) = X.row(sv[t]);
        model.dual_coeffs[static_cast<Eigen::Index>(t)] =
            alpha[sv[t]] * static_cast<double>(y[sv[t]]);
    }
    if (options.kernel.kind == KernelKind::Linear)
        model.linear_weights = model.support_vectors.transpose() * model.dual_coeffs;
    return model;
}

Eigen::VectorXd svm_score(const SvmModel& model, const Eigen::MatrixXd& rows) {
    const Eigen::Index d = model.linear_weights.size() > 0 ? model.linear_weights.size()
                                                           : model.support_vectors.cols();
    if (rows.cols() != d)
        throw DimensionMismatch("score rows have " + std::to_string(rows.cols()) +
                                " features, model expects " + std::to_string(d));
    if (model.kernel.kind == KernelKind::Linear && model.linear_weights.size() > 0)
        return (rows * model.linear_weights).array() + model.bias;

    Eigen::VectorXd scores(rows.rows());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        double s = model.bias;
        for (Eigen::Index t = 0; t < model.support_vectors.rows(); ++t)
            s += model.dual_coeffs[t] *
                 kernel_eval(model.kernel, model.support_vectors.row(t).transpose(),
                             rows.row(r).transpose());
        scores[r] = s;
    }
    return scores;
}

int stump_predict(const Stump& stump, double value) {
    return value > stump.threshold ? stump.polarity : -stump.polarity;
}

AdaBoostModel adaboost_fit(const LabeledDataset& data, int rounds) {
    if (rounds < 0) throw ConfigError("round count must be nonnegative");
    require_both_classes(data.labels, "adaboost_fit");
    const Eigen::MatrixXd X = complete_values(data, "adaboost_fit");
    const Eigen::Index m = X.rows();
    const Eigen::Index d = X.cols();
    const Eigen::VectorXi& y = data.labels;

    Eigen::VectorXd dist(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double w = data.weights ? (*data.weights)[i] : 1.0;
        if (!(w > 0.0)) throw NonPositiveWeight("sample weight must be positive");
        dist[i] = w;
    }
    dist /= dist.sum();
    const Eigen::VectorXd initial_dist = dist;

    // Sample order per feature is distribution-independent: sort once.
    std::vector<std::vector<int>> order(static_cast<std::size_t>(d));
    for (Eigen::Index f = 0; f < d; ++f) {
        auto& idx = order[static_cast<std::size_t>(f)];
        idx.resize(static_cast<std::size_t>(m));
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return X(a, f) < X(b, f); });
    }

    AdaBoostModel model;
    std::vector<double> errors;
    for (int round = 0; round < rounds; ++round) {
        double best_err = std::numeric_limits<double>::infinity();
        Stump best;
        for (Eigen::Index f = 0; f < d; ++f) {
            const auto& idx = order[static_cast<std::size_t>(f)];
            // err(threshold, polarity +1) for "predict +1 where value >
            // threshold"; sweeping the threshold upward moves samples from
            // the +1 side to the -1 side.
            double err = 0.0;
            for (Eigen::Index i = 0; i < m; ++i)
                if (y[i] < 0) err += dist[i];
            const auto consider = [&](double threshold, double e) {
                if (e < best_err - 1e-15) {
                    best_err = e;
                    best = Stump{static_cast<int>(f), threshold, 1};
                }
                const double flipped = 1.0 - e;
                if (flipped < best_err - 1e-15) {
                    best_err = flipped;
                    best = Stump{static_cast<int>(f), threshold, -1};
                }
            };
            consider(X(idx.front(), f) - 1.0, err);
            for (std::size_t t = 0; t < idx.size(); ++t) {
                const int i = idx[t];
                err += y[i] > 0 ? dist[i] : -dist[i];
                if (t + 1 < idx.size() && X(idx[t + 1], f) > X(i, f))
                    consider(0.5 * (X(i, f) + X(idx[t + 1], f)), err);
            }
        }

        if (best_err >= 0.5 - 1e-12) break;  // no skill left
        const double err_recorded = std::max(best_err, 1e-10);
        const double alpha = 0.5 * std::log((1.0 - err_recorded) / err_recorded);
        model.stumps.push_back(best);
        model.alphas.push_back(alpha);
        errors.push_back(err_recorded);
        if (best_err <= 1e-10) break;  // perfect stump

        for (Eigen::Index i = 0; i < m; ++i)
            dist[i] *= std::exp(-alpha * static_cast<double>(y[i]) *
                                static_cast<double>(stump_predict(best, X(i, best.feature))));
        dist /= dist.sum();
    }
    model.rounds = static_cast<int>(model.stumps.size());

    // Exponential training-error bound under the initial distribution.
    double bound = 1.0;
    for (double e : errors) bound *= 2.0 * std::sqrt(e * (1.0 - e));
    double train_err = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        double score = 0.0;
        for (std::size_t t = 0; t < model.stumps.size(); ++t)
            score += model.alphas[t] *
                     static_cast<double>(stump_predict(model.stumps[t],
                                                       X(i, model.stumps[t].feature)));
        if (score * static_cast<double>(y[i]) <= 0.0 && !model.stumps.empty())
            train_err += initial_dist[i];
    }
    if (train_err > bound + 1e-9)
        throw InternalError("boosting error bound violated: " + std::to_string(train_err) +
                            " > " + std::to_string(bound));
    return model;
}

Eigen::VectorXd adaboost_score(const AdaBoostModel& model, const Eigen::MatrixXd& rows) {
    for (const Stump& stump : model.stumps)
        if (stump.feature < 0 || stump.feature >= rows.cols())
            throw DimensionMismatch("stump feature " + std::to_string(stump.feature) +
                                    " outside row dimension " + std::to_string(rows.cols()));
    Eigen::VectorXd scores = Eigen::VectorXd::Zero(rows.rows());
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        for (std::size_t t = 0; t < model.stumps.size(); ++t)
            scores[r] += model.alphas[t] *
                         static_cast<double>(stump_predict(model.stumps[t],
                                                           rows(r, model.stumps[t].feature)));
    return scores;
}

namespace {

double gini(int pos, int n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / n;
    return 2.0 * p * (1.0 - p);
}

struct SplitSearch {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXi& y;
    Eigen::Index n_total;
    int mtry;
    Eigen::VectorXd& importance;
    Rng& rng;
    std::vector<int> feature_pool;

    void grow(std::vector<int>& indices) {
        const int n = static_cast<int>(indices.size());
        int pos = 0;
        for (int i : indices)
            if (y[i] > 0) ++pos;
        const double node_gini = gini(pos, n);
        if (n < 2 || node_gini == 0.0) return;

        // Random feature subset, kept in shuffle order: Gini gains take few
        // distinct values at small nodes, so a fixed enumeration order would
        // funnel every tie to the lowest feature index and skew importances.
        for (int t = 0; t < mtry; ++t) {
            const int swap_with = rng.uniform_int(t, static_cast<int>(feature_pool.size()) - 1);
            std::swap(feature_pool[static_cast<std::size_t>(t)],
                      feature_pool[static_cast<std::size_t>(swap_with)]);
        }
        const std::vector<int> chosen(feature_pool.begin(), feature_pool.begin() + mtry);

        double best_gain = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> column(static_cast<std::size_t>(n));
        for (int f : chosen) {
            for (int t = 0; t < n; ++t)
                column[static_cast<std::size_t>(t)] = {X(indices[static_cast<std::size_t>(t)], f),
                                                       y[indices[static_cast<std::size_t>(t)]]};
            std::sort(column.begin(), column.end());
            int left_pos = 0;
            for (int t = 0; t + 1 < n; ++t) {
                if (column[static_cast<std::size_t>(t)].second > 0) ++left_pos;
                if (column[static_cast<std::size_t>(t + 1)].first <=
                    column[static_cast<std::size_t>(t)].first)
                    continue;
                const int nl = t + 1, nr = n - nl;
                const double gain =
                    node_gini - (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = 0.5 * (column[static_cast<std::size_t>(t)].first +
                                            column[static_cast<std::size_t>(t + 1)].first);
                }
            }
        }
        if (best_feature < 0 || best_gain <= 1e-12) return;

        importance[best_feature] +=
            (static_cast<double>(n) / static_cast<double>(n_total)) * best_gain;

        std::vector<int> left, right;
        for (int i : indices)
            (X(i, best_feature) <= best_threshold ? left : right).push_back(i);
        grow(left);
        grow(right);
    }
};

}  // namespace

FeatureImportance rf_feature_importance(const LabeledDataset& data, int n_trees,
                                        std::uint64_t rng_seed) {
    if (n_trees < 1) throw ConfigError("n_trees must be at least 1");
    require_both_classes(data.labels, "rf_feature_importance");
    const Eigen::MatrixXd X = complete_values(data, "rf_feature_importance");
    const Eigen::Index n = X.rows();
    const int d = static_cast<int>(X.cols());
    const int mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));

    Eigen::VectorXd importance = Eigen::VectorXd::Zero(d);
    const std::uint64_t base_seed = mix_seed(rng_seed, "rf");
    std::vector<int> sample;
    for (int tree = 0; tree < n_trees; ++tree) {
        Rng rng(mix_seed(base_seed, static_cast<std::uint64_t>(tree)));
        sample.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            sample[static_cast<std::size_t>(i)] = rng.uniform_int(0, static_cast<int>(n) - 1);
        SplitSearch search{X, data.labels, n, mtry, importance, rng, {}};
        search.feature_pool.resize(static_cast<std::size_t>(d));
        std::iota(search.feature_pool.begin(), search.feature_pool.end(), 0);
        search.grow(sample);
    }

    const double total = importance.sum();
    if (total > 0.0)
        importance /= total;
    else
        importance.setConstant(1.0 / d);

    FeatureImportance result;
    result.ranking.reserve(static_cast<std::size_t>(d));
    for (int f = 0; f < d; ++f) result.ranking.emplace_back(f, importance[f]);
    std::stable_sort(result.ranking.begin(), result.ranking.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return result;
}

std::vector<int> select_top_features(const FeatureImportance& importance, int k) {
    const int d = static_cast<int>(importance.ranking.size());
    if (k < 1 || k > d)
        throw ConfigError("top-feature count must be in [1, " + std::to_string(d) + "]");
    std::vector<int> features;
    features.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) features.push_back(importance.ranking[static_cast<std::size_t>(t)].first);
    return features;
}

std::string svm_model_to_json(const SvmModel& model) {
    nlohmann::json j;
    j["model"] = "svm";
    j["kernel"] = to_string(model.kernel.kind);
    j["gaussian_gamma"] = model.kernel.gaussian_gamma;
    j["C"] = model.C;
    j["bias"] = model.bias;
    j["s"] = model.support_vectors.rows();
    j["d"] = model.support_vectors.cols();
    j["support_vectors"] = flatten_row_major(model.support_vectors);
    j["dual_coeffs"] =
        std::vector<double>(model.dual_coeffs.begin(), model.dual_coeffs.end());
    j["linear_weights"] =
        std::vector<double>(model.linear_weights.begin(), model.linear_weights.end());
    j["converged"] = model.converged;
    j["epochs"] = model.epochs;
    return j.dump();
}

SvmModel svm_model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || j.at("model").get<std::string>() != "svm")
            throw ConfigError("not an svm model document");
        SvmModel model;
        model.kernel.kind = kernel_kind_from_string(j.at("kernel").get<std::string>());
        model.kernel.gaussian_gamma = j.at("gaussian_gamma").get<double>();
        model.C = j.at("C").get<double>();
        model.bias = j.at("bias").get<double>();
        const Eigen::Index s = j.at("s").get<Eigen::Index>();
        const Eigen::Index d = j.at("d").get<Eigen::Index>();
        if (s < 0 || d < 1) throw ConfigError("bad support-vector shape");
        model.support_vectors =
            unflatten_row_major(j.at("support_vectors").get<std::vector<double>>(), s, d);
        const auto duals = j.at("dual_coeffs").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(duals.size()) != s)
            throw ConfigError("dual coefficient count mismatch");
        model.dual_coeffs.resize(s);
        for (Eigen::Index t = 0; t < s; ++t)
            model.dual_coeffs[t] = duals[static_cast<std::size_t>(t)];
        const auto lw = j.at("linear_weights").get<std::vector<double>>();
        if (!lw.empty() && static_cast<Eigen::Index>(lw.size()) != d)
            throw ConfigError("linear weight count mismatch");
        if (!lw.empty())
            model.linear_weights = Eigen::Map<const Eigen::VectorXd>(
                lw.data(), static_cast<Eigen::Index>(lw.size()));
        model.converged = j.at("converged").get<bool>();
        model.epochs = j.at("epochs").get<int>();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
}

std::string adaboost_model_to_json(const AdaBoostModel& model) {
    nlohmann::json j;
    j["model"] = "adaboost";
    nlohmann::json stumps = nlohmann::json::array();
    for (const Stump& s : model.stumps)
        stumps.push_back({{"feature", s.feature},
                          {"threshold", s.threshold},
                          {"polarity", s.polarity}});
    j["stumps"] = std::move(stumps);
    j["alphas"] = model.alphas;
    return j.dump();
}

AdaBoostModel adaboost_model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || j.at("model").get<std::string>() != "adaboost")
            throw ConfigError("not an adaboost model document");
        AdaBoostModel model;
        for (const auto& s : j.at("stumps")) {
            Stump stump;
            stump.feature = s.at("feature").get<int>();
            stump.threshold = s.at("threshold").get<double>();
            stump.polarity = s.at("polarity").get<int>();
            if (stump.feature < 0) throw ConfigError("negative stump feature");
            if (stump.polarity != 1 && stump.polarity != -1)
                throw ConfigError("stump polarity must be +1 or -1");
            model.stumps.push_back(stump);
        }
        model.alphas = j.at("alphas").get<std::vector<double>>();
        if (model.alphas.size() != model.stumps.size())
            throw ConfigError("stump and alpha counts differ");
        model.rounds = static_cast<int>(model.stumps.size());
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
}

}  // namespace crashrisk
