#pragma once

// CSV ingestion with schema checks, result tables, run manifests, and the
// two application datasets (wage panel, predictive-maintenance records).

#include "epdic/neural.hpp"
#include "epdic/panel.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace epdic {

inline constexpr const char* kVersionString = "epdic 0.1.0";

enum class ColumnKind { Numeric, Indicator, Categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    /// Indicator: tokens read as 1 and 0 besides the digits themselves.
    std::string true_token = "yes";
    std::string false_token = "no";
    /// Categorical: the first level is the baseline and gets no dummy.
    std::vector<std::string> levels;
    bool standardize = false;
};

struct CsvSchema {
    std::vector<ColumnSpec> columns;
};

struct ColumnSummary {
    std::string name;
    double mean = 0.0;  ///< before standardization
    double sd = 0.0;    ///< population sd, before standardization
    bool standardized = false;
};

/// Typed columns in schema order; a categorical column becomes one dummy
/// per non-baseline level, named "column=level".
struct Dataset {
    std::string source;
    std::vector<std::string> names;
    Eigen::MatrixXd values;  ///< rows x names
    std::vector<ColumnSummary> summary;

    [[nodiscard]] Eigen::Index rows() const noexcept { return values.rows(); }
    /// Throws MissingColumn.
    [[nodiscard]] Eigen::Index index(const std::string& name) const;
    [[nodiscard]] Eigen::VectorXd column(const std::string& name) const;
    [[nodiscard]] nlohmann::json describe() const;
};

/// Header order does not matter and extra columns are ignored. Throws
/// EmptyFile, MissingColumn, NonNumericCell (including empty cells) or
/// DataError for ragged rows and duplicate headers.
Dataset load_csv(const std::string& path, const CsvSchema& schema);
Dataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>");

/// Shortest-safe decimal: 17 significant digits, '.' decimal point,
/// "nan" / "inf" / "-inf" for non-finite values.
std::string format_double(double v);
/// Inverse of format_double; throws NonNumericCell.
double parse_double(const std::string& text);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
};

std::string to_csv(const Table& table);
void write_table(const std::string& path, const Table& table);
/// Raw string cells; throws EmptyFile / DataError.
Table read_table(const std::string& path);
Table parse_table(std::istream& in);

struct Manifest {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json inputs = nlohmann::json::array();
    std::vector<std::string> outputs;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Pretty-printed, keys sorted, no timestamps.
void write_manifest(const std::string& path, const Manifest& manifest);

// Wage panel ---------------------------------------------------------------

/// id, year, lwage, ed, exp, wks, union, married, bluecol, ind, south, smsa,
/// sex, black. ed, exp and wks are standardized; the rest are 0/1
/// indicators (yes/no, and female/male for sex).
CsvSchema wage_schema();
/// Covariate labels in design order.
std::vector<std::string> wage_covariates();

struct WageData {
    Dataset table;                    ///< rows sorted by (id, year)
    std::vector<std::string> covariates;
    Eigen::MatrixXd x;                ///< rows x covariates
    Eigen::VectorXd y;                ///< lwage, possibly standardized
    int individuals = 0;
    int years = 0;
    double response_mean = 0.0;       ///< y = (lwage - response_mean) / response_sd
    double response_sd = 1.0;
};

/// Throws DataError unless every id appears the same number of times with
/// distinct years.
WageData load_wages(const std::string& path);
WageData wages_from_dataset(Dataset table);

/// Rescales y to mean 0 and population sd 1. The exponential part of the EPD
/// objective is not scale invariant: on raw log-wage the within-person
/// density of a 7-year block reaches the hundreds and the objective has no
/// interior minimum.
void standardize_response(WageData& w);

/// Intercept followed by the named covariates.
Eigen::MatrixXd wage_design(const WageData& w, const std::vector<std::string>& covariates);
PanelData wage_panel(const WageData& w, const std::vector<std::string>& covariates);

// Predictive maintenance -----------------------------------------------------

/// Air/process temperature, rotational speed, torque and tool wear
/// (standardized), product type L/M/H (dummies for M and H), and the
/// machine-failure flag. Other columns are ignored.
CsvSchema ai4i_schema();
std::vector<std::string> ai4i_features();

struct MaintenanceData {
    Dataset table;
    ClassificationData data;
};

MaintenanceData load_ai4i(const std::string& path);
MaintenanceData ai4i_from_dataset(Dataset table);

// Synthetic stand-ins with the same layout, for tests and demos.
void write_synthetic_wages(const std::string& path, std::uint64_t seed, int individuals = 595, int years = 7);
void write_synthetic_ai4i(const std::string& path, std::uint64_t seed, int rows = 10000);

} // namespace epdic
