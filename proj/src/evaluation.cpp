#include "crashrisk/evaluation.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crashrisk {

double ConfusionMatrix::accuracy() const {
    const std::int64_t m = total();
    return m > 0 ? static_cast<double>(tp + tn) / static_cast<double>(m) : 0.0;
}

double ConfusionMatrix::sensitivity() const {
    return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
}

double ConfusionMatrix::specificity() const {
    return tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
}

MaskMatrix generate_mcar_mask(Eigen::Index m, Eigen::Index d, double ratio,
                              std::uint64_t rng_seed) {
    if (m < 1 || d < 1) throw DimensionMismatch("mask dimensions must be positive");
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw InfeasibleRatio("missing ratio must lie in [0, 1)");
    Rng rng(mix_seed(rng_seed, "mcar_mask"));
    MaskMatrix mask(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            mask(i, j) = !rng.bernoulli(ratio);

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Eigen::Index> bad_rows, bad_cols;
        for (Eigen::Index i = 0; i < m; ++i)
            if (!mask.row(i).any()) bad_rows.push_back(i);
        for (Eigen::Index j = 0; j < d; ++j)
            if (!mask.col(j).any()) bad_cols.push_back(j);
        if (bad_rows.empty() && bad_cols.empty()) return mask;
        for (Eigen::Index i : bad_rows)
            for (Eigen::Index j = 0; j < d; ++j) mask(i, j) = !rng.bernoulli(ratio);
        for (Eigen::Index j : bad_cols)
            for (Eigen::Index i = 0; i < m; ++i) mask(i, j) = !rng.bernoulli(ratio);
    }
    throw InfeasibleRatio("could not satisfy the row/column constraint after 1000 repairs");
}

double rmse(const Eigen::MatrixXd& real_values, const Eigen::MatrixXd& imputed_values,
            const MaskMatrix& probe_mask) {
    if (real_values.rows() != imputed_values.rows() ||
        real_values.cols() != imputed_values.cols() ||
        probe_mask.rows() != real_values.rows() || probe_mask.cols() != real_values.cols())
        throw DimensionMismatch("rmse inputs must share one shape");
    double sq = 0.0;
    std::int64_t n = 0;
    for (Eigen::Index j = 0; j < real_values.cols(); ++j)
        for (Eigen::Index i = 0; i < real_values.rows(); ++i)
            if (probe_mask(i, j)) {
                const double diff = real_values(i, j) - imputed_values(i, j);
                sq += diff * diff;
                ++n;
            }
    if (n == 0) throw EmptyProbe("probe mask selects no cells");
    return std::sqrt(sq / static_cast<double>(n));
}

ConfusionMatrix confusion(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels,
                          double threshold) {
    if (scores.size() != labels.size())
        throw DimensionMismatch("score count does not match label count");
    ConfusionMatrix cm;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        const bool predicted_pos = scores[i] >= threshold;
        if (labels[i] > 0)
            predicted_pos ? ++cm.tp : ++cm.fn;
        else
            predicted_pos ? ++cm.fp : ++cm.tn;
    }
    return cm;
}

RocCurve roc_auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
    if (scores.size() != labels.size())
        throw DimensionMismatch("score count does not match label count");
    std::int64_t n_pos = 0, n_neg = 0;
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        labels[i] > 0 ? ++n_pos : ++n_neg;
    if (n_pos == 0 || n_neg == 0)
        throw SingleClass("roc_auc needs at least one sample of each class");

    std::vector<int> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.points.reserve(order.size() + 1);
    roc.points.emplace_back(0.0, 0.0);
    double auc = 0.0;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // One sweep step per distinct score: tied scores move together.
        const double s = scores[order[i]];
        std::int64_t d_tp = 0, d_fp = 0;
        while (i < order.size() && scores[order[i]] == s) {
            labels[order[i]] > 0 ? ++d_tp : ++d_fp;
            ++i;
        }
        const double fpr0 = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr0 = static_cast<double>(tp) / static_cast<double>(n_pos);
        tp += d_tp;
        fp += d_fp;
        const double fpr1 = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr1 = static_cast<double>(tp) / static_cast<double>(n_pos);
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) * 0.5;
        roc.points.emplace_back(fpr1, tpr1);
    }
    roc.auc = auc;
    return roc;
}

EvalReport evaluate_scores(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
    EvalReport report;
    report.confusion = confusion(scores, labels, 0.0);
    report.accuracy = report.confusion.accuracy();
    report.sensitivity = report.confusion.sensitivity();
    report.specificity = report.confusion.specificity();
    report.auc = roc_auc(scores, labels).auc;
    return report;
}

std::vector<FoldSplit> kfold(const Eigen::VectorXi& labels, int k, bool stratified,
                             std::uint64_t rng_seed) {
    const Eigen::Index m = labels.size();
    if (k < 2) throw ConfigError("k must be at least 2");
    if (static_cast<Eigen::Index>(k) > m) throw ConfigError("k exceeds sample count");

    std::vector<std::vector<int>> groups;
    if (stratified) {
        std::vector<int> pos, neg;
        for (Eigen::Index i = 0; i < m; ++i)
            (labels[i] > 0 ? pos : neg).push_back(static_cast<int>(i));
        if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k)
            throw TooFewPerClass("each class needs at least k samples for stratified folds");
        groups = {std::move(pos), std::move(neg)};
    } else {
        std::vector<int> all(static_cast<std::size_t>(m));
        std::iota(all.begin(), all.end(), 0);
        groups = {std::move(all)};
    }

    Rng rng(mix_seed(rng_seed, "kfold"));
    std::vector<std::vector<int>> test_folds(static_cast<std::size_t>(k));
    for (auto& group : groups) {
        std::shuffle(group.begin(), group.end(), rng.engine());
        // Contiguous chunks whose sizes differ by at most one.
        const std::size_t n = group.size();
        std::size_t start = 0;
        for (int f = 0; f < k; ++f) {
            const std::size_t len = n / static_cast<std::size_t>(k) +
                                    (static_cast<std::size_t>(f) < n % static_cast<std::size_t>(k) ? 1 : 0);
            for (std::size_t t = 0; t < len; ++t)
                test_folds[static_cast<std::size_t>(f)].push_back(group[start + t]);
            start += len;
        }
    }

    std::vector<FoldSplit> splits(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        auto& test = test_folds[static_cast<std::size_t>(f)];
        std::sort(test.begin(), test.end());
        std::vector<char> in_test(static_cast<std::size_t>(m), 0);
        for (int idx : test) in_test[static_cast<std::size_t>(idx)] = 1;
        auto& split = splits[static_cast<std::size_t>(f)];
        split.test = test;
        split.train.reserve(static_cast<std::size_t>(m) - test.size());
        for (Eigen::Index i = 0; i < m; ++i)
            if (!in_test[static_cast<std::size_t>(i)]) split.train.push_back(static_cast<int>(i));
    }
    return splits;
}

}  // namespace crashrisk
