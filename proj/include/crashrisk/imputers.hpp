#pragma once

#include "crashrisk/masked_table.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace crashrisk {

enum class ImputerKind { Mean, KMeans, LsPca, Ppca, VbPca };

std::string to_string(ImputerKind kind);
ImputerKind imputer_kind_from_string(const std::string& name);

/// Low-rank model x = W z + mu + eps shared by the PCA-family imputers.
/// v is the isotropic noise variance (exactly 0 for the least-squares fit);
/// v_mu / v_w are the prior variances and are populated only for VbPca.
struct LatentModel {
    ImputerKind algo = ImputerKind::Ppca;
    Eigen::MatrixXd W;   // d x c loadings
    Eigen::VectorXd mu;  // d bias
    double v = 0.0;
    double v_mu = 0.0;
    Eigen::VectorXd v_w;  // c entries when algo == VbPca, empty otherwise
};

struct MeanModel {
    Eigen::VectorXd means;  // d column means over observed entries
};

struct KMeansModel {
    Eigen::MatrixXd centroids;  // k x d, every coordinate defined
};

using ImputerModel = std::variant<MeanModel, KMeansModel, LatentModel>;

ImputerKind kind_of(const ImputerModel& model);

struct ImputeResult {
    Eigen::MatrixXd completed;  // observed cells verbatim, missing cells filled
    ImputerModel model;
    int iterations = 0;
    bool converged = true;
    bool rank_deficient = false;      // a least-squares subproblem needed the
                                      // minimum-norm pseudo-inverse path
    bool variance_collapsed = false;  // noise variance clamped at the 1e-12 floor
    std::vector<double> objective;    // per-step trace: squared error (LS-PCA,
                                      // per half-step), log-likelihood (PPCA),
                                      // penalized log-posterior (VBPCA)
};

/// Missing cell <- column mean over observed entries.
ImputeResult mean_impute(const MaskedTable& table);

/// Lloyd iterations with distances averaged over the row's observed
/// dimensions; centroids are per-dimension means over the members observing
/// that dimension (global column mean when none does). Empty clusters are
/// reseeded once per sweep from the farthest row. Best inertia over
/// `restarts` seeded restarts wins.
ImputeResult kmeans_impute(const MaskedTable& table, int k, int max_iter = 100,
                           double tol = 1e-6, std::uint64_t rng_seed = 0,
                           int restarts = 10);

/// Alternating least squares over observed entries for t ~ W z + mu; both
/// half-steps use exact minimum-norm solutions, so the recorded objective
/// never increases. Rank-deficient subproblems set rank_deficient.
ImputeResult lspca_fit_impute(const MaskedTable& table, int c, int max_iter = 500,
                              double tol = 1e-5, std::uint64_t rng_seed = 0);

/// EM for probabilistic PCA with missing entries. The recorded objective is
/// the observed-data log-likelihood (non-decreasing). Missing cell <- the
/// conditional mean of the fitted Gaussian N(mu, W W^T + v I) given the
/// row's observed coordinates.
ImputeResult ppca_fit_impute(const MaskedTable& table, int c, int max_iter = 500,
                             double tol = 1e-5, std::uint64_t rng_seed = 0);

struct VbpcaOptions {
    bool update_hyperparameters = true;  // false freezes v_mu / v_w at the inits
    double init_v_mu = 1.0;
    double init_v_w = 1.0;
};

/// PPCA with zero-mean Gaussian priors on mu and on each column of W, whose
/// variances are re-estimated each iteration (maximum a posteriori EM with
/// type-II point updates). The recorded objective is the penalized
/// log-posterior bound (non-decreasing).
ImputeResult vbpca_fit_impute(const MaskedTable& table, int c, int max_iter = 500,
                              double tol = 1e-5, std::uint64_t rng_seed = 0,
                              const VbpcaOptions& options = {});

/// Fills a new table with a frozen low-rank model: solve the row's latent
/// coordinates from its observed cells, then reconstruct the missing ones.
/// Applying a model to its own training table reproduces the fit-time
/// completed matrix exactly.
ImputeResult impute_with(const LatentModel& model, const MaskedTable& table);

/// Frozen-model application for any imputer kind.
ImputeResult apply_imputer(const ImputerModel& model, const MaskedTable& table);

/// Uniform fit entry point used by pipelines and the CLI.
struct ImputerSpec {
    ImputerKind kind = ImputerKind::Mean;
    int latent_dim = 8;  // LS-PCA / PPCA / VBPCA
    int clusters = 5;    // k-means
    int max_iter = 500;
    double tol = 1e-5;
    int restarts = 10;  // k-means
};

ImputeResult fit_imputer(const ImputerSpec& spec, const MaskedTable& table,
                         std::uint64_t rng_seed);

/// JSON document with an algo tag, dimensions, row-major matrices, the seed
/// and iteration count of the producing fit. Round-trip safe.
std::string imputer_model_to_json(const ImputerModel& model, std::uint64_t rng_seed = 0,
                                  int iterations = 0);
ImputerModel imputer_model_from_json(const std::string& json_text);

}  // namespace crashrisk
