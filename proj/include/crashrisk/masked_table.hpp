#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crashrisk {

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Samples-by-features value matrix with a boolean observability mask.
/// Unobserved cells hold NaN and must never be read by consumers; every
/// row and every column is guaranteed to have at least one observed cell.
/// Immutable after construction.
class MaskedTable {
public:
    MaskedTable(Eigen::MatrixXd values, MaskMatrix mask,
                std::vector<std::string> column_names);

    // Fully observed table.
    static MaskedTable complete(Eigen::MatrixXd values,
                                std::vector<std::string> column_names);

    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }

    const Eigen::MatrixXd& values() const { return values_; }
    const MaskMatrix& mask() const { return mask_; }
    const std::vector<std::string>& column_names() const { return column_names_; }

    bool observed(Eigen::Index i, Eigen::Index j) const { return mask_(i, j); }
    double value(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }

    Eigen::Index observed_count() const { return mask_.count(); }
    Eigen::Index missing_count() const { return mask_.size() - mask_.count(); }

    // Row subset in the given order. The subset must still satisfy the
    // row/column observability invariant or construction throws.
    MaskedTable select_rows(std::span<const int> indices) const;

private:
    Eigen::MatrixXd values_;
    MaskMatrix mask_;
    std::vector<std::string> column_names_;
};

/// Per-column standardization statistics over observed entries only.
/// Stds are population (divide-by-n) and strictly positive.
struct Scaler {
    Eigen::VectorXd means;
    Eigen::VectorXd stds;
};

Scaler fit_scaler(const MaskedTable& table);
MaskedTable transform(const MaskedTable& table, const Scaler& scaler);
MaskedTable inverse_transform(const MaskedTable& table, const Scaler& scaler);

/// Mask intersection: hides every cell whose extra_mask entry is false.
/// Values of still-observed cells are untouched.
MaskedTable apply_mask(const MaskedTable& table, const MaskMatrix& extra_mask);

/// Labels are +1 (crash) / -1 (non-crash); optional per-sample weights are
/// strictly positive. Class presence is checked by classifier fits, not here.
struct LabeledDataset {
    MaskedTable table;
    Eigen::VectorXi labels;
    std::optional<Eigen::VectorXd> weights;

    LabeledDataset(MaskedTable table, Eigen::VectorXi labels,
                   std::optional<Eigen::VectorXd> weights = std::nullopt);

    LabeledDataset select_rows(std::span<const int> indices) const;
};

// CSV layout: header row of column names, one "label" column when labels are
// attached, missing cells as empty fields. Finite values print with 9
// significant digits, which makes load->save byte-stable.
struct CsvData {
    MaskedTable table;
    std::optional<Eigen::VectorXi> labels;
};

void save_csv(std::ostream& out, const MaskedTable& table,
              const Eigen::VectorXi* labels = nullptr);
void save_csv_file(const std::string& path, const MaskedTable& table,
                   const Eigen::VectorXi* labels = nullptr);
CsvData load_csv(std::istream& in);
CsvData load_csv_file(const std::string& path);

// %.9g formatting used for every floating-point value the library writes.
std::string format_value(double v);

}  // namespace crashrisk
