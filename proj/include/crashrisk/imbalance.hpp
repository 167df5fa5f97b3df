#pragma once

#include "crashrisk/masked_table.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace crashrisk {

enum class ImbalanceMode { Cost, Smote, CostPlusSmote };

std::string to_string(ImbalanceMode mode);
ImbalanceMode imbalance_mode_from_string(const std::string& name);

struct ImbalanceConfig {
    double gamma = 1.0;
    ImbalanceMode mode = ImbalanceMode::Cost;
    int smote_k = 5;

    void validate() const;  // gamma >= 1, smote_k >= 1
};

// Effective parameters once the mode splits gamma between the two remedies:
// cost-only uses (gamma, none), sampling-only (1, gamma), combined (sqrt each).
struct ImbalancePlan {
    double cost_ratio = 1.0;        // positive-class weight over negative-class weight
    double smote_multiplier = 0.0;  // synthetic rows = round(multiplier * |minority|); 0 = off
};

ImbalancePlan resolve_plan(const ImbalanceConfig& config);

// Per-sample loss weights: gamma for label +1, 1 for label -1.
Eigen::VectorXd cost_weights(const Eigen::VectorXi& labels, double gamma);

// Synthetic minority rows by neighbor interpolation; emits
// round(multiplier * rows) rows, each x + lambda * (x_nn - x) with lambda
// uniform on [0, 1] and x_nn one of x's k nearest minority neighbors.
Eigen::MatrixXd smote(const Eigen::MatrixXd& minority, double multiplier, int k,
                      std::uint64_t rng_seed);

// Weighted / augmented copy of a training set according to the config. SMOTE
// modes require the positive rows to be complete (impute first).
LabeledDataset apply_imbalance(const LabeledDataset& data, const ImbalanceConfig& config,
                               std::uint64_t rng_seed);

enum class DayType { Weekday, Weekend };

DayType day_type(const std::string& iso_date);  // "YYYY-MM-DD"
int parse_slot(const std::string& hhmm);        // 5-minute grid index in [0, 287]
std::string format_slot(int slot);

struct EventRecord {
    int location_id = 0;
    std::string date;          // ISO calendar date
    int slot = 0;              // within-day 5-minute slot
    Eigen::VectorXd features;  // NaN marks a missing cell
};

using CrashRecord = EventRecord;
using ArchiveRecord = EventRecord;

struct RecordSet {
    std::vector<EventRecord> records;
    std::vector<std::string> feature_names;
};

// CSV layout: location_id, date, slot, then one column per feature.
RecordSet load_records_csv(const std::string& path);

struct MatchResult {
    // Crash rows first (label +1, in input order), then all controls
    // (label -1, grouped by crash in ascending crash order).
    LabeledDataset data;
    // Archive index of each control row, aligned with the control block.
    std::vector<int> control_archive_indices;
    // Crashes that had fewer than `ratio` candidates and kept them all.
    std::vector<int> underfilled_crashes;
};

// For every crash, samples `ratio` archive records sharing location,
// within-day slot and weekday/weekend day type but lying on a different
// calendar day. Sampling is without replacement per crash.
MatchResult match_controls(const std::vector<CrashRecord>& crashes,
                           const std::vector<ArchiveRecord>& archive, int ratio,
                           std::uint64_t rng_seed,
                           const std::vector<std::string>& feature_names = {});

}  // namespace crashrisk
