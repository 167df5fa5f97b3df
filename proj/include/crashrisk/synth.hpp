#pragma once

#include "crashrisk/masked_table.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace crashrisk {

/// Rank-r Gaussian factor model with a class-dependent mean shift:
///   x = W z + (y/2) * delta + eps,   z ~ N(0, I_r),  eps ~ N(0, noise_std^2 I_d)
/// where delta is scaled so the Mahalanobis distance between the class means
/// equals class_shift, making the optimal (Bayes) AUC exactly
/// Phi(class_shift / sqrt(2)). Columns are standardized after generation.
struct GeneratorConfig {
    int n_crash = 123;
    int n_noncrash = 1230;
    int d = 24;
    int latent_rank = 4;
    double noise_std = 0.35;
    double class_shift = 1.8124;  // Mahalanobis separation; 1.8124 ~ Bayes AUC 0.9
    std::uint64_t rng_seed = 0;
};

struct SyntheticDataset {
    LabeledDataset data;           // standardized feature columns, labels +1 crash / -1 non-crash
    Eigen::VectorXd bayes_scores;  // analytic log-likelihood-ratio score per row
};

/// Crash rows come first, then non-crash rows. Deterministic in the seed; each
/// row's noise is drawn from its own derived stream, so generation order is
/// irrelevant.
SyntheticDataset generate(const GeneratorConfig& config);

/// "f-m1-t3" style names (variable type x sensor x time window) when d = 24;
/// generic "x1".."xd" names otherwise.
std::vector<std::string> default_column_names(int d);

/// Parses {"n_crash": ..., "n_noncrash": ..., "d": ..., "latent_rank": ...,
/// "noise_std": ..., "class_shift": ..., "rng_seed": ...}; every key optional,
/// unknown keys rejected.
GeneratorConfig generator_config_from_json(const std::string& json_text);

/// Exact optimal AUC for a given Mahalanobis class separation.
double bayes_auc(double class_shift);

}  // namespace crashrisk
