#include "crashrisk/synth.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <utility>

namespace crashrisk {

namespace {

void validate(const GeneratorConfig& c) {
    if (c.n_crash < 1 || c.n_noncrash < 1)
        throw ConfigError("both classes need at least one sample");
    if (c.d < 2) throw ConfigError("need at least two features");
    if (c.latent_rank < 1 || c.latent_rank >= c.d)
        throw ConfigError("latent rank must satisfy 1 <= r < d");
    if (c.noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
    if (c.class_shift < 0.0) throw ConfigError("class_shift must be nonnegative");
}

// Moore-Penrose solve of (W W^T + v I) x = b; handles the v = 0 case where
// the covariance is rank deficient.
Eigen::VectorXd covariance_solve(const Eigen::MatrixXd& cov, const Eigen::VectorXd& b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd& vals = eig.eigenvalues();
    const double tol = vals.cwiseAbs().maxCoeff() * 1e-12;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
    for (Eigen::Index k = 0; k < vals.size(); ++k)
        if (vals[k] > tol) inv[k] = 1.0 / vals[k];
    return eig.eigenvectors() * (inv.asDiagonal() * (eig.eigenvectors().transpose() * b));
}

}  // namespace

std::vector<std::string> default_column_names(int d) {
    if (d == 24) {
        std::vector<std::string> names;
        for (const char* kind : {"f", "o", "s"})
            for (const char* sensor : {"m1", "m2", "m3", "m4"})
                for (const char* window : {"t3", "t2"})
                    names.push_back(std::string(kind) + "-" + sensor + "-" + window);
        return names;
    }
    std::vector<std::string> names;
    for (int j = 1; j <= d; ++j) names.push_back("x" + std::to_string(j));
    return names;
}

double bayes_auc(double class_shift) {
    // Phi(shift / sqrt(2)) written via erfc.
    return 0.5 * std::erfc(-class_shift / 2.0);
}

SyntheticDataset generate(const GeneratorConfig& config) {
    validate(config);
    const int m = config.n_crash + config.n_noncrash;
    const int d = config.d;
    const int r = config.latent_rank;

    Rng model_rng(mix_seed(config.rng_seed, "synth_model"));
    Eigen::MatrixXd W(d, r);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index k = 0; k < r; ++k) W(j, k) = model_rng.normal();
    Eigen::VectorXd direction(d);
    for (Eigen::Index j = 0; j < d; ++j) direction[j] = model_rng.normal();
    direction.normalize();

    const Eigen::MatrixXd cov =
        W * W.transpose() +
        config.noise_std * config.noise_std * Eigen::MatrixXd::Identity(d, d);

    // Scale the shift so its Mahalanobis norm is exactly class_shift.
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(d);
    if (config.class_shift > 0.0) {
        const Eigen::VectorXd solved = covariance_solve(cov, direction);
        const double q = direction.dot(solved);
        if (q <= 0.0) throw ConfigError("degenerate covariance for the class shift");
        delta = (config.class_shift / std::sqrt(q)) * direction;
    }
    const Eigen::VectorXd bayes_w = covariance_solve(cov, delta);

    Eigen::MatrixXd values(m, d);
    Eigen::VectorXi labels(m);
    Eigen::VectorXd scores(m);
    const std::uint64_t row_base = mix_seed(config.rng_seed, "synth_row");
    for (int i = 0; i < m; ++i) {
        labels[i] = i < config.n_crash ? 1 : -1;
        Rng row_rng(mix_seed(row_base, static_cast<std::uint64_t>(i)));
        Eigen::VectorXd z(r);
        for (Eigen::Index k = 0; k < r; ++k) z[k] = row_rng.normal();
        Eigen::VectorXd x = W * z + (0.5 * labels[i]) * delta;
        for (Eigen::Index j = 0; j < d; ++j) x[j] += config.noise_std * row_rng.normal();
        values.row(i) = x.transpose();
        scores[i] = bayes_w.dot(x);
    }

    MaskedTable raw = MaskedTable::complete(std::move(values), default_column_names(d));
    MaskedTable standardized = transform(raw, fit_scaler(raw));
    return SyntheticDataset{LabeledDataset(std::move(standardized), std::move(labels)),
                            std::move(scores)};
}

GeneratorConfig generator_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad generator config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("generator config must be a JSON object");

    GeneratorConfig config;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "n_crash")
                config.n_crash = value.get<int>();
            else if (key == "n_noncrash")
                config.n_noncrash = value.get<int>();
            else if (key == "d")
                config.d = value.get<int>();
            else if (key == "latent_rank")
                config.latent_rank = value.get<int>();
            else if (key == "noise_std")
                config.noise_std = value.get<double>();
            else if (key == "class_shift")
                config.class_shift = value.get<double>();
            else if (key == "rng_seed")
                config.rng_seed = value.get<std::uint64_t>();
            else
                throw ConfigError("unknown generator config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad generator config value: ") + e.what());
    }
    return config;
}

}  // namespace crashrisk
