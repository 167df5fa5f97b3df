#include "crashrisk/imputers.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <utility>

namespace crashrisk {

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr int kHyperWarmupIters = 10;

Eigen::VectorXd observed_column_means(const MaskedTable& table) {
    Eigen::VectorXd means(table.cols());
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
        double sum = 0.0;
        int n = 0;
        for (Eigen::Index i = 0; i < table.rows(); ++i)
            if (table.observed(i, j)) {
                sum += table.value(i, j);
                ++n;
            }
        means[j] = sum / n;  // every column has at least one observed entry
    }
    return means;
}

// Minimum-norm solution of S x = b for symmetric PSD S; flags rank deficiency.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& S, const Eigen::VectorXd& b,
                           bool& dropped) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const Eigen::VectorXd& vals = eig.eigenvalues();
    const double cutoff = std::max(vals.cwiseAbs().maxCoeff(), 1e-300) * 1e-12;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
    for (Eigen::Index k = 0; k < vals.size(); ++k) {
        if (vals[k] > cutoff)
            inv[k] = 1.0 / vals[k];
        else
            dropped = true;
    }
    return eig.eigenvectors() * (inv.asDiagonal() * (eig.eigenvectors().transpose() * b));
}

struct RowPosterior {
    Eigen::VectorXd Ez;
    Eigen::MatrixXd cov;  // populated only on request (v > 0)
    double logdet = 0.0;  // log det of the posterior precision vI + Wo^T Wo
    double quad = 0.0;    // (r^T r - r^T Wo Ez) / v
    int n_obs = 0;
    bool dropped = false;
};

// Posterior of the latent coordinates of one row given its observed cells.
// v = 0 degenerates to the minimum-norm least-squares solve used by LS-PCA.
RowPosterior row_posterior(const Eigen::MatrixXd& W, const Eigen::VectorXd& mu, double v,
                           const MaskedTable& table, Eigen::Index row, bool want_cov) {
    const Eigen::Index c = W.cols();
    std::vector<Eigen::Index> obs;
    for (Eigen::Index j = 0; j < table.cols(); ++j)
        if (table.observed(row, j)) obs.push_back(j);

    Eigen::MatrixXd A(static_cast<Eigen::Index>(obs.size()), c);
    Eigen::VectorXd r(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t t = 0; t < obs.size(); ++t) {
        A.row(static_cast<Eigen::Index>(t)) = W.row(obs[t]);
        r[static_cast<Eigen::Index>(t)] = table.value(row, obs[t]) - mu[obs[t]];
    }

    RowPosterior out;
    out.n_obs = static_cast<int>(obs.size());
    Eigen::MatrixXd G = A.transpose() * A;
    const Eigen::VectorXd b = A.transpose() * r;
    if (v > 0.0) {
        G.diagonal().array() += v;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        out.Ez = ldlt.solve(b);
        if (want_cov) {
            out.cov = v * ldlt.solve(Eigen::MatrixXd::Identity(c, c));
            out.logdet = ldlt.vectorD().array().log().sum();
            out.quad = (r.squaredNorm() - b.dot(out.Ez)) / v;
        }
    } else {
        out.Ez = pinv_solve(G, b, out.dropped);
    }
    return out;
}

// Copies the table and fills every missing cell from the latent model.
Eigen::MatrixXd fill_from_latent(const Eigen::MatrixXd& W, const Eigen::VectorXd& mu,
                                 double v, const MaskedTable& table, bool& dropped) {
    Eigen::MatrixXd completed = table.values();
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        bool any_missing = false;
        for (Eigen::Index j = 0; j < table.cols(); ++j)
            if (!table.observed(i, j)) {
                any_missing = true;
                break;
            }
        if (!any_missing) continue;
        RowPosterior p = row_posterior(W, mu, v, table, i, false);
        dropped |= p.dropped;
        for (Eigen::Index j = 0; j < table.cols(); ++j)
            if (!table.observed(i, j)) completed(i, j) = mu[j] + W.row(j).dot(p.Ez);
    }
    return completed;
}

void validate_latent_dim(const MaskedTable& table, int c) {
    if (c < 1 || c > static_cast<int>(table.cols()) - 1)
        throw ConfigError("latent dimensionality must satisfy 1 <= c <= d - 1");
}

// Shared seeded initialization for the three PCA-family fits.
void init_latent(const MaskedTable& table, int c, std::uint64_t rng_seed,
                 Eigen::MatrixXd& W, Eigen::VectorXd& mu) {
    Rng rng(mix_seed(rng_seed, "pca_init"));
    W.resize(table.cols(), c);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
        for (Eigen::Index k = 0; k < W.cols(); ++k) W(i, k) = 0.1 * rng.normal();
    mu = observed_column_means(table);
}

struct EStep {
    Eigen::MatrixXd Ez;                // m x c
    std::vector<Eigen::MatrixXd> cov;  // per-row c x c posterior covariance
    double loglik = 0.0;
};

EStep ppca_estep(const Eigen::MatrixXd& W, const Eigen::VectorXd& mu, double v,
                 const MaskedTable& table) {
    const Eigen::Index m = table.rows();
    const Eigen::Index c = W.cols();
    const double log2pi = std::log(2.0 * std::numbers::pi);
    EStep es;
    es.Ez.resize(m, c);
    es.cov.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        RowPosterior p = row_posterior(W, mu, v, table, i, true);
        es.Ez.row(i) = p.Ez.transpose();
        es.cov[static_cast<std::size_t>(i)] = std::move(p.cov);
        es.loglik += -0.5 * (p.n_obs * log2pi + (p.n_obs - c) * std::log(v) +
                             p.logdet + p.quad);
    }
    return es;
}

// Joint (w_i, mu_i) update per feature, then the noise-variance update.
// `ridge` (length c + 1) adds v * ridge as a diagonal penalty — zero for
// plain PPCA, the prior precisions for VBPCA.
void ppca_mstep(const MaskedTable& table, const EStep& es, const Eigen::VectorXd& ridge,
                Eigen::MatrixXd& W, Eigen::VectorXd& mu, double& v, bool& collapsed) {
    const Eigen::Index m = table.rows();
    const Eigen::Index d = table.cols();
    const Eigen::Index c = W.cols();

    std::vector<Eigen::MatrixXd> A(static_cast<std::size_t>(d),
                                   Eigen::MatrixXd::Zero(c + 1, c + 1));
    std::vector<Eigen::VectorXd> b(static_cast<std::size_t>(d),
                                   Eigen::VectorXd::Zero(c + 1));
    Eigen::MatrixXd block(c + 1, c + 1);
    Eigen::VectorXd zext(c + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::VectorXd Ez = es.Ez.row(i).transpose();
        block.topLeftCorner(c, c) =
            es.cov[static_cast<std::size_t>(i)] + Ez * Ez.transpose();
        block.topRightCorner(c, 1) = Ez;
        block.bottomLeftCorner(1, c) = Ez.transpose();
        block(c, c) = 1.0;
        zext << Ez, 1.0;
        for (Eigen::Index j = 0; j < d; ++j)
            if (table.observed(i, j)) {
                A[static_cast<std::size_t>(j)] += block;
                b[static_cast<std::size_t>(j)] += table.value(i, j) * zext;
            }
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::MatrixXd S = A[static_cast<std::size_t>(j)];
        if (ridge.size() > 0) S.diagonal() += v * ridge;
        const Eigen::VectorXd theta = S.ldlt().solve(b[static_cast<std::size_t>(j)]);
        W.row(j) = theta.head(c).transpose();
        mu[j] = theta[c];
    }

    double num = 0.0;
    std::int64_t n_obs = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::VectorXd Ez = es.Ez.row(i).transpose();
        const Eigen::MatrixXd& cov = es.cov[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d; ++j)
            if (table.observed(i, j)) {
                const double resid = table.value(i, j) - W.row(j).dot(Ez) - mu[j];
                num += resid * resid + W.row(j) * cov * W.row(j).transpose();
                ++n_obs;
            }
    }
    v = num / static_cast<double>(n_obs);
    if (v < kVarianceFloor) {
        v = kVarianceFloor;
        collapsed = true;
    }
}

double log_prior(const Eigen::MatrixXd& W, const Eigen::VectorXd& mu, double v_mu,
                 const Eigen::VectorXd& v_w) {
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const double d = static_cast<double>(W.rows());
    double lp = -0.5 * (d * (log2pi + std::log(v_mu)) + mu.squaredNorm() / v_mu);
    for (Eigen::Index k = 0; k < W.cols(); ++k)
        lp += -0.5 * (d * (log2pi + std::log(v_w[k])) + W.col(k).squaredNorm() / v_w[k]);
    return lp;
}

ImputeResult em_fit_impute(const MaskedTable& table, int c, int max_iter, double tol,
                           std::uint64_t rng_seed, bool variational,
                           const VbpcaOptions& options) {
    validate_latent_dim(table, c);
    if (max_iter < 1) throw ConfigError("max_iter must be at least 1");

    Eigen::MatrixXd W;
    Eigen::VectorXd mu;
    init_latent(table, c, rng_seed, W, mu);
    double v = 1.0;
    double v_mu = options.init_v_mu;
    Eigen::VectorXd v_w = Eigen::VectorXd::Constant(c, options.init_v_w);
    if (variational && (v_mu <= 0.0 || options.init_v_w <= 0.0))
        throw ConfigError("prior variances must be positive");

    ImputeResult result;
    result.converged = false;
    double prev = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd ridge;
    for (int iter = 0; iter < max_iter; ++iter) {
        EStep es = ppca_estep(W, mu, v, table);
        double objective = es.loglik;
        if (variational) objective += log_prior(W, mu, v_mu, v_w);
        result.objective.push_back(objective);
        if (iter > 0 &&
            std::abs(objective - prev) <= tol * std::max(1.0, std::abs(prev))) {
            result.converged = true;
            break;
        }
        prev = objective;

        if (variational) {
            ridge.resize(c + 1);
            for (int k = 0; k < c; ++k) ridge[k] = 1.0 / v_w[k];
            ridge[c] = 1.0 / v_mu;
        }
        ppca_mstep(table, es, ridge, W, mu, v, result.variance_collapsed);
        ++result.iterations;

        // Type-II updates track ‖W‖², which starts at the deliberately small
        // init scale; updating before W reaches data scale would shrink the
        // prior variances so far that the ridge prunes real components. Hold
        // the hyperparameters fixed for a short warm-up (the bound stays
        // monotone: constants during warm-up, exact argmax afterwards).
        if (variational && options.update_hyperparameters &&
            iter + 1 >= kHyperWarmupIters) {
            const double d = static_cast<double>(table.cols());
            for (int k = 0; k < c; ++k)
                v_w[k] = std::max(W.col(k).squaredNorm() / d, kVarianceFloor);
            v_mu = std::max(mu.squaredNorm() / d, kVarianceFloor);
        }
    }
    result.completed = fill_from_latent(W, mu, v, table, result.rank_deficient);
    LatentModel model;
    model.algo = variational ? ImputerKind::VbPca : ImputerKind::Ppca;
    model.W = std::move(W);
    model.mu = std::move(mu);
    model.v = v;
    if (variational) {
        model.v_mu = v_mu;
        model.v_w = std::move(v_w);
    }
    result.model = std::move(model);
    return result;
}

double distance_sq(const MaskedTable& table, Eigen::Index row,
                   const Eigen::MatrixXd& centroids, Eigen::Index cluster) {
    double sum = 0.0;
    int n = 0;
    for (Eigen::Index j = 0; j < table.cols(); ++j)
        if (table.observed(row, j)) {
            const double diff = table.value(row, j) - centroids(cluster, j);
            sum += diff * diff;
            ++n;
        }
    return sum / static_cast<double>(n);
}

void seed_centroid_from_row(const MaskedTable& table, Eigen::Index row,
                            const Eigen::VectorXd& col_means, Eigen::MatrixXd& centroids,
                            Eigen::Index cluster) {
    for (Eigen::Index j = 0; j < table.cols(); ++j)
        centroids(cluster, j) =
            table.observed(row, j) ? table.value(row, j) : col_means[j];
}

struct KMeansRun {
    Eigen::MatrixXd centroids;
    std::vector<int> assignment;
    std::vector<double> inertia_trace;
    double inertia = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

KMeansRun kmeans_once(const MaskedTable& table, int k, int max_iter, double tol,
                      std::uint64_t run_seed, const Eigen::VectorXd& col_means) {
    const Eigen::Index m = table.rows();
    const Eigen::Index d = table.cols();
    Rng rng(run_seed);

    // Partial Fisher-Yates: k distinct starting rows.
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    for (int t = 0; t < k; ++t)
        std::swap(order[static_cast<std::size_t>(t)],
                  order[static_cast<std::size_t>(
                      rng.uniform_int(t, static_cast<std::int64_t>(m) - 1))]);

    KMeansRun run;
    run.centroids.resize(k, d);
    for (int t = 0; t < k; ++t)
        seed_centroid_from_row(table, order[static_cast<std::size_t>(t)], col_means,
                               run.centroids, t);

    std::vector<int> assignment(static_cast<std::size_t>(m), -1);
    std::vector<int> previous;
    auto assign_all = [&] {
        for (Eigen::Index i = 0; i < m; ++i) {
            int best = 0;
            double best_dist = distance_sq(table, i, run.centroids, 0);
            for (int c0 = 1; c0 < k; ++c0) {
                const double dist = distance_sq(table, i, run.centroids, c0);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c0;
                }
            }
            assignment[static_cast<std::size_t>(i)] = best;
        }
    };
    auto empty_clusters = [&] {
        std::vector<int> count(static_cast<std::size_t>(k), 0);
        for (int a : assignment) ++count[static_cast<std::size_t>(a)];
        std::vector<int> empty;
        for (int c0 = 0; c0 < k; ++c0)
            if (count[static_cast<std::size_t>(c0)] == 0) empty.push_back(c0);
        return empty;
    };

    std::vector<bool> reseeded(static_cast<std::size_t>(k), false);
    for (int sweep = 1; sweep <= max_iter; ++sweep) {
        assign_all();

        std::vector<int> empties = empty_clusters();
        if (!empties.empty()) {
            std::set<Eigen::Index> used;
            for (int c0 : empties) {
                if (reseeded[static_cast<std::size_t>(c0)])
                    throw DegenerateCluster("cluster " + std::to_string(c0) +
                                            " emptied again after a reseed");
                Eigen::Index farthest = -1;
                double farthest_dist = -1.0;
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (used.count(i)) continue;
                    const double dist = distance_sq(
                        table, i, run.centroids,
                        assignment[static_cast<std::size_t>(i)]);
                    if (dist > farthest_dist) {
                        farthest_dist = dist;
                        farthest = i;
                    }
                }
                if (farthest < 0)
                    throw DegenerateCluster("no rows left to reseed cluster " +
                                            std::to_string(c0));
                seed_centroid_from_row(table, farthest, col_means, run.centroids, c0);
                reseeded[static_cast<std::size_t>(c0)] = true;
                used.insert(farthest);
            }
            assign_all();
            if (!empty_clusters().empty())
                throw DegenerateCluster("reseeding failed to repopulate every cluster");
        }

        // Per-dimension means over the members observing that dimension.
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, d);
        Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(k, d);
        for (Eigen::Index i = 0; i < m; ++i) {
            const int a = assignment[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < d; ++j)
                if (table.observed(i, j)) {
                    next(a, j) += table.value(i, j);
                    counts(a, j) += 1;
                }
        }
        for (int c0 = 0; c0 < k; ++c0)
            for (Eigen::Index j = 0; j < d; ++j)
                next(c0, j) = counts(c0, j) > 0 ? next(c0, j) / counts(c0, j)
                                                : col_means[j];
        const double shift = (next - run.centroids).cwiseAbs().maxCoeff();
        run.centroids = std::move(next);
        run.iterations = sweep;

        double inertia = 0.0;
        for (Eigen::Index i = 0; i < m; ++i)
            inertia += distance_sq(table, i, run.centroids,
                                   assignment[static_cast<std::size_t>(i)]);
        run.inertia_trace.push_back(inertia);
        run.inertia = inertia;

        if (assignment == previous || shift <= tol) {
            run.converged = true;
            break;
        }
        previous = assignment;
    }
    run.assignment = std::move(assignment);
    return run;
}

}  // namespace

std::string to_string(ImputerKind kind) {
    switch (kind) {
        case ImputerKind::Mean: return "mean";
        case ImputerKind::KMeans: return "kmeans";
        case ImputerKind::LsPca: return "lspca";
        case ImputerKind::Ppca: return "ppca";
        case ImputerKind::VbPca: return "vbpca";
    }
    throw InternalError("unreachable imputer kind");
}

ImputerKind imputer_kind_from_string(const std::string& name) {
    if (name == "mean") return ImputerKind::Mean;
    if (name == "kmeans") return ImputerKind::KMeans;
    if (name == "lspca") return ImputerKind::LsPca;
    if (name == "ppca") return ImputerKind::Ppca;
    if (name == "vbpca") return ImputerKind::VbPca;
    throw ConfigError("unknown imputer: " + name);
}

ImputerKind kind_of(const ImputerModel& model) {
    if (std::holds_alternative<MeanModel>(model)) return ImputerKind::Mean;
    if (std::holds_alternative<KMeansModel>(model)) return ImputerKind::KMeans;
    return std::get<LatentModel>(model).algo;
}

ImputeResult mean_impute(const MaskedTable& table) {
    const Eigen::VectorXd means = observed_column_means(table);
    ImputeResult result;
    result.completed = table.values();
    for (Eigen::Index i = 0; i < table.rows(); ++i)
        for (Eigen::Index j = 0; j < table.cols(); ++j)
            if (!table.observed(i, j)) result.completed(i, j) = means[j];
    result.model = MeanModel{means};
    return result;
}

ImputeResult kmeans_impute(const MaskedTable& table, int k, int max_iter, double tol,
                           std::uint64_t rng_seed, int restarts) {
    if (k < 1 || k > static_cast<int>(table.rows()))
        throw ConfigError("cluster count must satisfy 1 <= k <= m");
    if (max_iter < 1 || restarts < 1)
        throw ConfigError("max_iter and restarts must be at least 1");

    const Eigen::VectorXd col_means = observed_column_means(table);
    const std::uint64_t base = mix_seed(rng_seed, "kmeans");
    KMeansRun best;
    for (int r = 0; r < restarts; ++r) {
        KMeansRun run = kmeans_once(table, k, max_iter, tol,
                                    mix_seed(base, static_cast<std::uint64_t>(r)),
                                    col_means);
        if (run.inertia < best.inertia) best = std::move(run);
    }

    ImputeResult result;
    result.completed = table.values();
    for (Eigen::Index i = 0; i < table.rows(); ++i)
        for (Eigen::Index j = 0; j < table.cols(); ++j)
            if (!table.observed(i, j))
                result.completed(i, j) =
                    best.centroids(best.assignment[static_cast<std::size_t>(i)], j);
    result.model = KMeansModel{std::move(best.centroids)};
    result.iterations = best.iterations;
    result.converged = best.converged;
    result.objective = std::move(best.inertia_trace);
    return result;
}

ImputeResult lspca_fit_impute(const MaskedTable& table, int c, int max_iter, double tol,
                              std::uint64_t rng_seed) {
    validate_latent_dim(table, c);
    if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
    const Eigen::Index m = table.rows();
    const Eigen::Index d = table.cols();

    Eigen::MatrixXd W;
    Eigen::VectorXd mu;
    init_latent(table, c, rng_seed, W, mu);
    Eigen::MatrixXd Z(m, c);

    ImputeResult result;
    result.converged = false;

    auto z_step = [&] {
        for (Eigen::Index i = 0; i < m; ++i) {
            RowPosterior p = row_posterior(W, mu, 0.0, table, i, false);
            result.rank_deficient |= p.dropped;
            Z.row(i) = p.Ez.transpose();
        }
    };
    auto objective = [&] {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                if (table.observed(i, j)) {
                    const double resid =
                        table.value(i, j) - W.row(j).dot(Z.row(i)) - mu[j];
                    sum += resid * resid;
                }
        return sum;
    };

    z_step();
    double prev = objective();
    result.objective.push_back(prev);

    Eigen::MatrixXd block(c + 1, c + 1);
    Eigen::VectorXd zext(c + 1);
    for (int iter = 0; iter < max_iter; ++iter) {
        // Feature half-step: joint (w_j, mu_j) least squares per feature.
        std::vector<Eigen::MatrixXd> G(static_cast<std::size_t>(d),
                                       Eigen::MatrixXd::Zero(c + 1, c + 1));
        std::vector<Eigen::VectorXd> b(static_cast<std::size_t>(d),
                                       Eigen::VectorXd::Zero(c + 1));
        for (Eigen::Index i = 0; i < m; ++i) {
            zext << Z.row(i).transpose(), 1.0;
            block = zext * zext.transpose();
            for (Eigen::Index j = 0; j < d; ++j)
                if (table.observed(i, j)) {
                    G[static_cast<std::size_t>(j)] += block;
                    b[static_cast<std::size_t>(j)] += table.value(i, j) * zext;
                }
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            const Eigen::VectorXd theta = pinv_solve(
                G[static_cast<std::size_t>(j)], b[static_cast<std::size_t>(j)],
                result.rank_deficient);
            W.row(j) = theta.head(c).transpose();
            mu[j] = theta[c];
        }
        result.objective.push_back(objective());

        z_step();
        const double now = objective();
        result.objective.push_back(now);
        ++result.iterations;

        if (prev - now <= tol * std::max(prev, 1e-30) || now <= 1e-30) {
            result.converged = true;
            break;
        }
        prev = now;
    }

    result.completed = fill_from_latent(W, mu, 0.0, table, result.rank_deficient);
    LatentModel model;
    model.algo = ImputerKind::LsPca;
    model.W = std::move(W);
    model.mu = std::move(mu);
    model.v = 0.0;
    result.model = std::move(model);
    return result;
}

ImputeResult ppca_fit_impute(const MaskedTable& table, int c, int max_iter, double tol,
                             std::uint64_t rng_seed) {
    return em_fit_impute(table, c, max_iter, tol, rng_seed, false, VbpcaOptions{});
}

ImputeResult vbpca_fit_impute(const MaskedTable& table, int c, int max_iter, double tol,
                              std::uint64_t rng_seed, const VbpcaOptions& options) {
    return em_fit_impute(table, c, max_iter, tol, rng_seed, true, options);
}

ImputeResult impute_with(const LatentModel& model, const MaskedTable& table) {
    if (model.W.rows() != table.cols() || model.mu.size() != table.cols())
        throw DimensionMismatch("model dimensionality does not match the table");
    if (model.W.cols() < 1) throw ConfigError("model has no latent dimensions");
    if (model.v < 0.0) throw ConfigError("negative noise variance");

    ImputeResult result;
    result.completed = fill_from_latent(model.W, model.mu, model.v, table,
                                        result.rank_deficient);
    result.model = model;
    return result;
}

ImputeResult apply_imputer(const ImputerModel& model, const MaskedTable& table) {
    if (const auto* mean = std::get_if<MeanModel>(&model)) {
        if (mean->means.size() != table.cols())
            throw DimensionMismatch("model dimensionality does not match the table");
        ImputeResult result;
        result.completed = table.values();
        for (Eigen::Index i = 0; i < table.rows(); ++i)
            for (Eigen::Index j = 0; j < table.cols(); ++j)
                if (!table.observed(i, j)) result.completed(i, j) = mean->means[j];
        result.model = model;
        return result;
    }
    if (const auto* km = std::get_if<KMeansModel>(&model)) {
        if (km->centroids.cols() != table.cols())
            throw DimensionMismatch("model dimensionality does not match the table");
        ImputeResult result;
        result.completed = table.values();
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int c0 = 0; c0 < km->centroids.rows(); ++c0) {
                double sum = 0.0;
                int n = 0;
                for (Eigen::Index j = 0; j < table.cols(); ++j)
                    if (table.observed(i, j)) {
                        const double diff = table.value(i, j) - km->centroids(c0, j);
                        sum += diff * diff;
                        ++n;
                    }
                const double dist = sum / static_cast<double>(n);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c0;
                }
            }
            for (Eigen::Index j = 0; j < table.cols(); ++j)
                if (!table.observed(i, j))
                    result.completed(i, j) = km->centroids(best, j);
        }
        result.model = model;
        return result;
    }
    return impute_with(std::get<LatentModel>(model), table);
}

ImputeResult fit_imputer(const ImputerSpec& spec, const MaskedTable& table,
                         std::uint64_t rng_seed) {
    switch (spec.kind) {
        case ImputerKind::Mean:
            return mean_impute(table);
        case ImputerKind::KMeans:
            return kmeans_impute(table, spec.clusters, spec.max_iter, spec.tol, rng_seed,
                                 spec.restarts);
        case ImputerKind::LsPca:
            return lspca_fit_impute(table, spec.latent_dim, spec.max_iter, spec.tol,
                                    rng_seed);
        case ImputerKind::Ppca:
            return ppca_fit_impute(table, spec.latent_dim, spec.max_iter, spec.tol,
                                   rng_seed);
        case ImputerKind::VbPca:
            return vbpca_fit_impute(table, spec.latent_dim, spec.max_iter, spec.tol,
                                    rng_seed);
    }
    throw InternalError("unreachable imputer kind");
}

namespace {

std::vector<double> flatten_row_major(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

Eigen::MatrixXd unflatten_row_major(const std::vector<double>& data, Eigen::Index rows,
                                    Eigen::Index cols) {
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw ConfigError("serialized matrix size does not match its dimensions");
    Eigen::MatrixXd m(rows, cols);
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[t++];
    return m;
}

}  // namespace

std::string imputer_model_to_json(const ImputerModel& model, std::uint64_t rng_seed,
                                  int iterations) {
    nlohmann::json j;
    j["algo"] = to_string(kind_of(model));
    j["rng_seed"] = rng_seed;
    j["iterations"] = iterations;
    if (const auto* mean = std::get_if<MeanModel>(&model)) {
        j["d"] = mean->means.size();
        j["means"] = std::vector<double>(mean->means.begin(), mean->means.end());
    } else if (const auto* km = std::get_if<KMeansModel>(&model)) {
        j["d"] = km->centroids.cols();
        j["k"] = km->centroids.rows();
        j["centroids"] = flatten_row_major(km->centroids);
    } else {
        const auto& latent = std::get<LatentModel>(model);
        j["d"] = latent.W.rows();
        j["c"] = latent.W.cols();
        j["W"] = flatten_row_major(latent.W);
        j["mu"] = std::vector<double>(latent.mu.begin(), latent.mu.end());
        j["v"] = latent.v;
        if (latent.algo == ImputerKind::VbPca) {
            j["v_mu"] = latent.v_mu;
            j["v_w"] = std::vector<double>(latent.v_w.begin(), latent.v_w.end());
        }
    }
    return j.dump();
}

ImputerModel imputer_model_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
    try {
        if (!j.is_object()) throw ConfigError("model JSON must be an object");
        const ImputerKind kind = imputer_kind_from_string(j.at("algo").get<std::string>());
        const Eigen::Index d = j.at("d").get<Eigen::Index>();
        if (d < 1) throw ConfigError("model has no features");
        if (kind == ImputerKind::Mean) {
            auto means = j.at("means").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(means.size()) != d)
                throw ConfigError("mean vector size does not match d");
            return MeanModel{Eigen::Map<Eigen::VectorXd>(means.data(), d)};
        }
        if (kind == ImputerKind::KMeans) {
            const Eigen::Index k = j.at("k").get<Eigen::Index>();
            if (k < 1) throw ConfigError("k must be positive");
            return KMeansModel{
                unflatten_row_major(j.at("centroids").get<std::vector<double>>(), k, d)};
        }
        LatentModel latent;
        latent.algo = kind;
        const Eigen::Index c = j.at("c").get<Eigen::Index>();
        if (c < 1 || c > d - 1) throw ConfigError("latent dimensionality out of range");
        latent.W = unflatten_row_major(j.at("W").get<std::vector<double>>(), d, c);
        auto mu = j.at("mu").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(mu.size()) != d)
            throw ConfigError("mu size does not match d");
        latent.mu = Eigen::Map<Eigen::VectorXd>(mu.data(), d);
        latent.v = j.at("v").get<double>();
        if (latent.v < 0.0) throw ConfigError("negative noise variance");
        if (kind == ImputerKind::VbPca) {
            latent.v_mu = j.at("v_mu").get<double>();
            auto v_w = j.at("v_w").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v_w.size()) != c)
                throw ConfigError("v_w size does not match c");
            latent.v_w = Eigen::Map<Eigen::VectorXd>(v_w.data(), c);
            if (latent.v_mu <= 0.0 || (latent.v_w.array() <= 0.0).any())
                throw ConfigError("prior variances must be positive");
        }
        return latent;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model JSON: ") + e.what());
    }
}

}  // namespace crashrisk
