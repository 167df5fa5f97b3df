#include "crashrisk/masked_table.hpp"

#include "crashrisk/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace crashrisk {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_observability(const MaskMatrix& mask) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        if (!mask.row(i).any())
            throw EmptyRowOrColumn("row " + std::to_string(i) + " has no observed cell");
    }
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        if (!mask.col(j).any())
            throw EmptyRowOrColumn("column " + std::to_string(j) + " has no observed cell");
    }
}

}  // namespace

MaskedTable::MaskedTable(Eigen::MatrixXd values, MaskMatrix mask,
                         std::vector<std::string> column_names)
    : values_(std::move(values)), mask_(std::move(mask)),
      column_names_(std::move(column_names)) {
    if (values_.rows() < 1 || values_.cols() < 1)
        throw DimensionMismatch("table must have at least one row and one column");
    if (mask_.rows() != values_.rows() || mask_.cols() != values_.cols())
        throw DimensionMismatch("mask shape does not match values shape");
    if (static_cast<Eigen::Index>(column_names_.size()) != values_.cols())
        throw DimensionMismatch("column name count does not match column count");
    check_observability(mask_);
    // Normalize the sentinel so unobserved cells can never leak a stale value.
    for (Eigen::Index j = 0; j < values_.cols(); ++j)
        for (Eigen::Index i = 0; i < values_.rows(); ++i)
            if (!mask_(i, j)) values_(i, j) = kNaN;
}

MaskedTable MaskedTable::complete(Eigen::MatrixXd values,
                                  std::vector<std::string> column_names) {
    MaskMatrix mask = MaskMatrix::Constant(values.rows(), values.cols(), true);
    return MaskedTable(std::move(values), std::move(mask), std::move(column_names));
}

MaskedTable MaskedTable::select_rows(std::span<const int> indices) const {
    if (indices.empty()) throw DimensionMismatch("row selection is empty");
    Eigen::MatrixXd v(static_cast<Eigen::Index>(indices.size()), cols());
    MaskMatrix m(static_cast<Eigen::Index>(indices.size()), cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        int idx = indices[r];
        if (idx < 0 || idx >= rows())
            throw DimensionMismatch("row index " + std::to_string(idx) + " out of range");
        v.row(static_cast<Eigen::Index>(r)) = values_.row(idx);
        m.row(static_cast<Eigen::Index>(r)) = mask_.row(idx);
    }
    return MaskedTable(std::move(v), std::move(m), column_names_);
}

Scaler fit_scaler(const MaskedTable& table) {
    const Eigen::Index d = table.cols();
    Scaler s;
    s.means.resize(d);
    s.stds.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double sum = 0.0;
        Eigen::Index n = 0;
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            if (!table.observed(i, j)) continue;
            sum += table.value(i, j);
            ++n;
        }
        if (n < 2)
            throw TooFewObserved("column " + std::to_string(j) +
                                     " has fewer than 2 observed entries",
                                 static_cast<int>(j));
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            if (!table.observed(i, j)) continue;
            const double dv = table.value(i, j) - mean;
            sq += dv * dv;
        }
        const double var = sq / static_cast<double>(n);
        if (var <= 0.0)
            throw ZeroVariance("column " + std::to_string(j) +
                                   " observed entries are constant",
                               static_cast<int>(j));
        s.means[j] = mean;
        s.stds[j] = std::sqrt(var);
    }
    return s;
}

namespace {

MaskedTable affine_map(const MaskedTable& table, const Scaler& scaler, bool inverse) {
    if (scaler.means.size() != table.cols() || scaler.stds.size() != table.cols())
        throw DimensionMismatch("scaler dimension does not match table");
    Eigen::MatrixXd v = table.values();
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            if (!table.observed(i, j)) continue;
            v(i, j) = inverse ? v(i, j) * scaler.stds[j] + scaler.means[j]
                              : (v(i, j) - scaler.means[j]) / scaler.stds[j];
        }
    }
    return MaskedTable(std::move(v), table.mask(), table.column_names());
}

}  // namespace

MaskedTable transform(const MaskedTable& table, const Scaler& scaler) {
    return affine_map(table, scaler, false);
}

MaskedTable inverse_transform(const MaskedTable& table, const Scaler& scaler) {
    return affine_map(table, scaler, true);
}

MaskedTable apply_mask(const MaskedTable& table, const MaskMatrix& extra_mask) {
    if (extra_mask.rows() != table.rows() || extra_mask.cols() != table.cols())
        throw DimensionMismatch("extra mask shape does not match table");
    MaskMatrix combined = table.mask() && extra_mask;
    check_observability(combined);  // report before constructing
    return MaskedTable(table.values(), std::move(combined), table.column_names());
}

LabeledDataset::LabeledDataset(MaskedTable table_, Eigen::VectorXi labels_,
                               std::optional<Eigen::VectorXd> weights_)
    : table(std::move(table_)), labels(std::move(labels_)), weights(std::move(weights_)) {
    if (labels.size() != table.rows())
        throw DimensionMismatch("label count does not match row count");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        if (labels[i] != 1 && labels[i] != -1)
            throw ConfigError("labels must be +1 or -1");
    if (weights) {
        if (weights->size() != table.rows())
            throw DimensionMismatch("weight count does not match row count");
        for (Eigen::Index i = 0; i < weights->size(); ++i)
            if (!((*weights)[i] > 0.0))
                throw NonPositiveWeight("weight " + std::to_string(i) + " is not positive");
    }
}

LabeledDataset LabeledDataset::select_rows(std::span<const int> indices) const {
    Eigen::VectorXi y(static_cast<Eigen::Index>(indices.size()));
    std::optional<Eigen::VectorXd> w;
    if (weights) w.emplace(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        y[static_cast<Eigen::Index>(r)] = labels[indices[r]];
        if (weights) (*w)[static_cast<Eigen::Index>(r)] = (*weights)[indices[r]];
    }
    return LabeledDataset(table.select_rows(indices), std::move(y), std::move(w));
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void save_csv(std::ostream& out, const MaskedTable& table, const Eigen::VectorXi* labels) {
    if (labels && labels->size() != table.rows())
        throw DimensionMismatch("label count does not match row count");
    const auto& names = table.column_names();
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j].find(',') != std::string::npos || names[j] == "label")
            throw IoError("column name not representable in CSV: " + names[j]);
        if (j > 0) out << ',';
        out << names[j];
    }
    if (labels) out << ",label";
    out << '\n';
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        for (Eigen::Index j = 0; j < table.cols(); ++j) {
            if (j > 0) out << ',';
            if (table.observed(i, j)) out << format_value(table.value(i, j));
        }
        if (labels) out << ',' << (*labels)[i];
        out << '\n';
    }
}

void save_csv_file(const std::string& path, const MaskedTable& table,
                   const Eigen::VectorXi* labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    save_csv(out, table, labels);
    if (!out) throw IoError("write failed: " + path);
}

namespace {

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

}  // namespace

CsvData load_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV input");
    std::vector<std::string> header = split_line(line);
    int label_col = -1;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == "label") {
            if (label_col >= 0) throw IoError("duplicate label column");
            label_col = static_cast<int>(j);
        } else {
            names.push_back(header[j]);
        }
    }
    const std::size_t d = names.size();
    if (d == 0) throw IoError("CSV has no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> masks;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size())
            throw IoError("row " + std::to_string(rows.size() + 1) + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(header.size()));
        std::vector<double> v;
        std::vector<bool> m;
        v.reserve(d);
        m.reserve(d);
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (static_cast<int>(j) == label_col) {
                const std::string& f = fields[j];
                if (f != "1" && f != "-1" && f != "+1")
                    throw IoError("label must be -1 or 1, got '" + f + "'");
                labels.push_back(f == "-1" ? -1 : 1);
                continue;
            }
            if (fields[j].empty()) {
                v.push_back(std::numeric_limits<double>::quiet_NaN());
                m.push_back(false);
            } else {
                std::size_t pos = 0;
                double x = 0.0;
                try {
                    x = std::stod(fields[j], &pos);
                } catch (const std::exception&) {
                    throw IoError("cannot parse value '" + fields[j] + "'");
                }
                if (pos != fields[j].size())
                    throw IoError("cannot parse value '" + fields[j] + "'");
                v.push_back(x);
                m.push_back(true);
            }
        }
        rows.push_back(std::move(v));
        masks.push_back(std::move(m));
    }
    if (rows.empty()) throw IoError("CSV has no data rows");

    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(d));
    MaskMatrix mask(values.rows(), values.cols());
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            mask(i, j) = masks[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }

    CsvData out{MaskedTable(std::move(values), std::move(mask), std::move(names)),
                std::nullopt};
    if (label_col >= 0) {
        Eigen::VectorXi y(static_cast<Eigen::Index>(labels.size()));
        for (std::size_t i = 0; i < labels.size(); ++i)
            y[static_cast<Eigen::Index>(i)] = labels[i];
        out.labels = std::move(y);
    }
    return out;
}

CsvData load_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return load_csv(in);
}

}  // namespace crashrisk
