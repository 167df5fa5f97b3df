#include "crashrisk/imbalance.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/rng.hpp"
#include "crashrisk/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>
#include <utility>

namespace crashrisk {

namespace {

constexpr int kSlotsPerDay = 24 * 12;

Eigen::Index round_half_up(double x) {
    return static_cast<Eigen::Index>(std::floor(x + 0.5));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

int parse_int_strict(const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("cannot parse " + what + " '" + text + "'");
    }
    if (pos != text.size()) throw ConfigError("cannot parse " + what + " '" + text + "'");
    return value;
}

// k nearest minority neighbors of every row, ties broken by lower index.
std::vector<std::vector<Eigen::Index>> nearest_neighbors(const Eigen::MatrixXd& rows, int k) {
    const Eigen::Index m = rows.rows();
    std::vector<std::vector<Eigen::Index>> result(static_cast<std::size_t>(m));
    std::vector<std::pair<double, Eigen::Index>> dist;
    for (Eigen::Index i = 0; i < m; ++i) {
        dist.clear();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j == i) continue;
            dist.emplace_back((rows.row(i) - rows.row(j)).squaredNorm(), j);
        }
        std::sort(dist.begin(), dist.end());
        auto& mine = result[static_cast<std::size_t>(i)];
        mine.reserve(static_cast<std::size_t>(k));
        for (int t = 0; t < k; ++t) mine.push_back(dist[static_cast<std::size_t>(t)].second);
    }
    return result;
}

}  // namespace

std::string to_string(ImbalanceMode mode) {
    switch (mode) {
        case ImbalanceMode::Cost: return "cost";
        case ImbalanceMode::Smote: return "smote";
        case ImbalanceMode::CostPlusSmote: return "cost+smote";
    }
    throw InternalError("unknown imbalance mode");
}

ImbalanceMode imbalance_mode_from_string(const std::string& name) {
    if (name == "cost") return ImbalanceMode::Cost;
    if (name == "smote") return ImbalanceMode::Smote;
    if (name == "cost+smote") return ImbalanceMode::CostPlusSmote;
    throw ConfigError("unknown imbalance mode '" + name + "'");
}

void ImbalanceConfig::validate() const {
    if (!(gamma >= 1.0)) throw ConfigError("gamma must be at least 1");
    if (smote_k < 1) throw ConfigError("smote_k must be at least 1");
}

ImbalancePlan resolve_plan(const ImbalanceConfig& config) {
    config.validate();
    ImbalancePlan plan;
    switch (config.mode) {
        case ImbalanceMode::Cost:
            plan.cost_ratio = config.gamma;
            plan.smote_multiplier = 0.0;
            break;
        case ImbalanceMode::Smote:
            plan.cost_ratio = 1.0;
            plan.smote_multiplier = config.gamma;
            break;
        case ImbalanceMode::CostPlusSmote:
            plan.cost_ratio = std::sqrt(config.gamma);
            plan.smote_multiplier = std::sqrt(config.gamma);
            break;
    }
    return plan;
}

Eigen::VectorXd cost_weights(const Eigen::VectorXi& labels, double gamma) {
    Eigen::VectorXd weights(labels.size());
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        weights[i] = labels[i] > 0 ? gamma : 1.0;
    return weights;
}

Eigen::MatrixXd smote(const Eigen::MatrixXd& minority, double multiplier, int k,
                      std::uint64_t rng_seed) {
    const Eigen::Index m = minority.rows();
    if (m < 2)
        throw TooFewSamples("SMOTE needs at least 2 minority rows, got " + std::to_string(m));
    if (!(multiplier > 0.0)) throw ConfigError("SMOTE multiplier must be positive");
    if (k < 1) throw ConfigError("SMOTE neighbor count must be at least 1");
    if (k >= m)
        throw ConfigError("SMOTE neighbor count must be below the minority count " +
                          std::to_string(m));
    if (!minority.allFinite())
        throw IncompleteRows("SMOTE requires complete minority rows");

    const Eigen::Index total = round_half_up(multiplier * static_cast<double>(m));
    Eigen::MatrixXd synthetic(total, minority.cols());
    if (total == 0) return synthetic;

    const auto neighbors = nearest_neighbors(minority, k);
    Rng rng(mix_seed(rng_seed, "smote"));
    for (Eigen::Index s = 0; s < total; ++s) {
        const Eigen::Index base = s % m;
        const auto& mine = neighbors[static_cast<std::size_t>(base)];
        const Eigen::Index pick = mine[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(mine.size()) - 1))];
        const double lambda = rng.uniform(0.0, 1.0);
        synthetic.row(s) =
            minority.row(base) + lambda * (minority.row(pick) - minority.row(base));
    }
    return synthetic;
}

LabeledDataset apply_imbalance(const LabeledDataset& data, const ImbalanceConfig& config,
                               std::uint64_t rng_seed) {
    const ImbalancePlan plan = resolve_plan(config);
    const Eigen::Index m = data.table.rows();
    const Eigen::Index d = data.table.cols();

    Eigen::MatrixXd synthetic(0, d);
    if (plan.smote_multiplier > 0.0) {
        std::vector<Eigen::Index> positives;
        for (Eigen::Index i = 0; i < m; ++i)
            if (data.labels[i] > 0) positives.push_back(i);
        Eigen::MatrixXd minority(static_cast<Eigen::Index>(positives.size()), d);
        for (std::size_t t = 0; t < positives.size(); ++t) {
            for (Eigen::Index j = 0; j < d; ++j) {
                if (!data.table.observed(positives[t], j))
                    throw IncompleteRows("SMOTE requires complete minority rows");
                minority(static_cast<Eigen::Index>(t), j) =
                    data.table.value(positives[t], j);
            }
        }
        synthetic = smote(minority, plan.smote_multiplier, config.smote_k, rng_seed);
    }

    const Eigen::Index total = m + synthetic.rows();
    Eigen::MatrixXd values(total, d);
    MaskMatrix mask(total, d);
    Eigen::VectorXi labels(total);
    for (Eigen::Index i = 0; i < m; ++i) {
        labels[i] = data.labels[i];
        for (Eigen::Index j = 0; j < d; ++j) {
            mask(i, j) = data.table.observed(i, j);
            values(i, j) = mask(i, j) ? data.table.value(i, j)
                                      : std::numeric_limits<double>::quiet_NaN();
        }
    }
    for (Eigen::Index s = 0; s < synthetic.rows(); ++s) {
        values.row(m + s) = synthetic.row(s);
        mask.row(m + s).setConstant(true);
        labels[m + s] = 1;
    }

    LabeledDataset out(MaskedTable(values, mask, data.table.column_names()), labels);
    out.weights = cost_weights(labels, plan.cost_ratio);
    return out;
}

DayType day_type(const std::string& iso_date) {
    const auto fail = [&] {
        throw ConfigError("cannot parse ISO date '" + iso_date + "'");
    };
    if (iso_date.size() != 10 || iso_date[4] != '-' || iso_date[7] != '-') fail();
    const int y = parse_int_strict(iso_date.substr(0, 4), "year");
    const int mo = parse_int_strict(iso_date.substr(5, 2), "month");
    const int da = parse_int_strict(iso_date.substr(8, 2), "day");
    const std::chrono::year_month_day ymd{std::chrono::year{y},
                                          std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(da)}};
    if (!ymd.ok()) fail();
    const std::chrono::weekday wd{std::chrono::sys_days{ymd}};
    const unsigned c = wd.c_encoding();  // 0 = Sunday
    return (c == 0 || c == 6) ? DayType::Weekend : DayType::Weekday;
}

int parse_slot(const std::string& hhmm) {
    if (hhmm.size() != 5 || hhmm[2] != ':')
        throw ConfigError("cannot parse slot '" + hhmm + "' (expected HH:MM)");
    const int h = parse_int_strict(hhmm.substr(0, 2), "hour");
    const int m = parse_int_strict(hhmm.substr(3, 2), "minute");
    if (h < 0 || h > 23 || m < 0 || m > 59)
        throw ConfigError("slot '" + hhmm + "' outside the day");
    if (m % 5 != 0)
        throw ConfigError("slot '" + hhmm + "' is off the 5-minute grid");
    return h * 12 + m / 5;
}

std::string format_slot(int slot) {
    if (slot < 0 || slot >= kSlotsPerDay)
        throw ConfigError("slot index " + std::to_string(slot) + " out of range");
    char buf[6];
    std::snprintf(buf, sizeof buf, "%02d:%02d", slot / 12, (slot % 12) * 5);
    return buf;
}

RecordSet load_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);

    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV input");
    std::vector<std::string> header = split_line(line);
    if (header.size() < 4 || header[0] != "location_id" || header[1] != "date" ||
        header[2] != "slot")
        throw IoError("record CSV must start with location_id,date,slot");

    RecordSet set;
    set.feature_names.assign(header.begin() + 3, header.end());
    const std::size_t d = set.feature_names.size();

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != d + 3)
            throw IoError("row " + std::to_string(set.records.size() + 1) + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(d + 3));
        EventRecord rec;
        try {
            rec.location_id = parse_int_strict(fields[0], "location id");
            rec.date = fields[1];
            day_type(rec.date);  // validates the calendar date
            rec.slot = parse_slot(fields[2]);
        } catch (const ConfigError& e) {
            throw IoError("row " + std::to_string(set.records.size() + 1) + ": " +
                          e.what());
        }
        rec.features.resize(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) {
            const std::string& f = fields[j + 3];
            if (f.empty()) {
                rec.features[static_cast<Eigen::Index>(j)] =
                    std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            std::size_t pos = 0;
            double x = 0.0;
            try {
                x = std::stod(f, &pos);
            } catch (const std::exception&) {
                throw IoError("cannot parse value '" + f + "'");
            }
            if (pos != f.size()) throw IoError("cannot parse value '" + f + "'");
            rec.features[static_cast<Eigen::Index>(j)] = x;
        }
        set.records.push_back(std::move(rec));
    }
    if (set.records.empty()) throw IoError("record CSV has no data rows");
    return set;
}

MatchResult match_controls(const std::vector<CrashRecord>& crashes,
                           const std::vector<ArchiveRecord>& archive, int ratio,
                           std::uint64_t rng_seed,
                           const std::vector<std::string>& feature_names) {
    if (ratio < 1) throw MinRatio("control ratio must be at least 1, got " +
                                  std::to_string(ratio));
    if (crashes.empty()) throw ConfigError("no crash records to match");

    const Eigen::Index d = crashes.front().features.size();
    if (d < 1) throw ConfigError("crash records carry no features");
    for (const auto& rec : crashes)
        if (rec.features.size() != d)
            throw DimensionMismatch("inconsistent crash feature dimensions");
    for (const auto& rec : archive)
        if (rec.features.size() != d)
            throw DimensionMismatch("archive feature dimension does not match crashes");

    const auto validate_slot = [](const EventRecord& rec) {
        if (rec.slot < 0 || rec.slot >= kSlotsPerDay)
            throw ConfigError("record slot " + std::to_string(rec.slot) + " out of range");
    };

    std::map<std::tuple<int, int, int>, std::vector<int>> pools;
    for (std::size_t i = 0; i < archive.size(); ++i) {
        validate_slot(archive[i]);
        pools[{archive[i].location_id, archive[i].slot,
               static_cast<int>(day_type(archive[i].date))}]
            .push_back(static_cast<int>(i));
    }

    std::vector<int> control_indices;
    std::vector<int> underfilled;
    const std::uint64_t base_seed = mix_seed(rng_seed, "match_controls");
    std::vector<int> chosen;
    for (std::size_t ci = 0; ci < crashes.size(); ++ci) {
        const CrashRecord& crash = crashes[ci];
        validate_slot(crash);
        std::vector<int> candidates;
        const auto it = pools.find({crash.location_id, crash.slot,
                                    static_cast<int>(day_type(crash.date))});
        if (it != pools.end())
            for (int idx : it->second)
                if (archive[static_cast<std::size_t>(idx)].date != crash.date)
                    candidates.push_back(idx);
        if (candidates.empty())
            throw NoCandidates("crash " + std::to_string(ci) + " (location " +
                                   std::to_string(crash.location_id) + ", " + crash.date +
                                   " " + format_slot(crash.slot) +
                                   ") has no matching controls",
                               static_cast<int>(ci));

        const int take = std::min<int>(ratio, static_cast<int>(candidates.size()));
        if (take < ratio) underfilled.push_back(static_cast<int>(ci));

        Rng rng(mix_seed(base_seed, static_cast<std::uint64_t>(ci)));
        for (int t = 0; t < take; ++t) {
            const int swap_with = rng.uniform_int(t, static_cast<int>(candidates.size()) - 1);
            std::swap(candidates[static_cast<std::size_t>(t)],
                      candidates[static_cast<std::size_t>(swap_with)]);
        }
        chosen.assign(candidates.begin(), candidates.begin() + take);
        std::sort(chosen.begin(), chosen.end());
        control_indices.insert(control_indices.end(), chosen.begin(), chosen.end());
    }

    const Eigen::Index n_crash = static_cast<Eigen::Index>(crashes.size());
    const Eigen::Index n_ctrl = static_cast<Eigen::Index>(control_indices.size());
    Eigen::MatrixXd values(n_crash + n_ctrl, d);
    MaskMatrix mask(n_crash + n_ctrl, d);
    Eigen::VectorXi labels(n_crash + n_ctrl);
    const auto fill_row = [&](Eigen::Index row, const EventRecord& rec, int label) {
        labels[row] = label;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double x = rec.features[j];
            mask(row, j) = std::isfinite(x);
            values(row, j) = mask(row, j) ? x : std::numeric_limits<double>::quiet_NaN();
        }
    };
    for (Eigen::Index i = 0; i < n_crash; ++i)
        fill_row(i, crashes[static_cast<std::size_t>(i)], 1);
    for (Eigen::Index t = 0; t < n_ctrl; ++t)
        fill_row(n_crash + t,
                 archive[static_cast<std::size_t>(control_indices[static_cast<std::size_t>(t)])],
                 -1);

    std::vector<std::string> names = feature_names;
    if (names.empty()) names = default_column_names(static_cast<int>(d));
    return MatchResult{LabeledDataset(MaskedTable(values, mask, names), labels),
                       std::move(control_indices), std::move(underfilled)};
}

}  // namespace crashrisk
