#include "epdic/io.hpp"

#include "epdic/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace epdic {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

// Splits CSV text into records. Quoted fields may hold commas, doubled
// quotes and newlines; blank lines are skipped.
std::vector<std::vector<std::string>> split_records(std::istream& in)
{
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool field_was_quoted = false;
    bool any = false;
    auto end_field = [&] {
        fields.push_back(field_was_quoted ? field : trim(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        if (any)
            records.push_back(std::move(fields));
        fields.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            quoted = true;
            field_was_quoted = true;
            field.clear();
            any = true;
            break;
        case ',':
            end_field();
            any = true;
            break;
        case '\r':
            break;
        case '\n':
            end_record();
            break;
        default:
            field += c;
            if (c != ' ' && c != '\t')
                any = true;
        }
    }
    if (quoted)
        throw DataError("unterminated quoted field");
    end_record();
    return records;
}

std::string quote_cell(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

// Shortest round-trip form, for fixture values that are already rounded.
std::string short_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string cell_context(const std::string& source, std::size_t row, const std::string& column)
{
    return source + ", data row " + std::to_string(row + 1) + ", column '" + column + "'";
}

double parse_indicator(const std::string& cell, const ColumnSpec& spec, const std::string& where)
{
    const std::string t = lower(trim(cell));
    if (t.empty())
        throw NonNumericCell("missing value at " + where);
    if (t == lower(spec.true_token))
        return 1.0;
    if (t == lower(spec.false_token))
        return 0.0;
    double v = 0.0;
    try {
        v = parse_double(t);
    } catch (const NonNumericCell&) {
        throw NonNumericCell("expected 0/1, " + spec.true_token + " or " + spec.false_token + " at " + where +
                             ", got '" + cell + "'");
    }
    if (v != 0.0 && v != 1.0)
        throw NonNumericCell("indicator must be 0 or 1 at " + where + ", got '" + cell + "'");
    return v;
}

} // namespace

Eigen::Index Dataset::index(const std::string& name) const
{
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
        throw MissingColumn("dataset " + source + " has no column '" + name + "'");
    return Eigen::Index(it - names.begin());
}

Eigen::VectorXd Dataset::column(const std::string& name) const
{
    return values.col(index(name));
}

nlohmann::json Dataset::describe() const
{
    nlohmann::json cols = nlohmann::json::array();
    for (const ColumnSummary& s : summary)
        cols.push_back({{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}, {"standardized", s.standardized}});
    return {{"source", source}, {"rows", rows()}, {"columns", cols}};
}

Dataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source)
{
    const auto records = split_records(in);
    if (records.empty())
        throw EmptyFile(source + " is empty");
    const std::vector<std::string>& header = records.front();
    std::map<std::string, std::size_t> position;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (!position.emplace(header[j], j).second)
            throw DataError(source + " repeats the header '" + header[j] + "'");
    if (records.size() == 1)
        throw EmptyFile(source + " has a header but no data rows");

    std::vector<std::size_t> source_col;
    for (const ColumnSpec& spec : schema.columns) {
        const auto it = position.find(spec.name);
        if (it == position.end())
            throw MissingColumn(source + " lacks the column '" + spec.name + "'");
        source_col.push_back(it->second);
    }

    Dataset ds;
    ds.source = source;
    for (const ColumnSpec& spec : schema.columns) {
        if (spec.kind == ColumnKind::Categorical) {
            if (spec.levels.size() < 2)
                throw DomainError("categorical column '" + spec.name + "' needs at least two levels");
            for (std::size_t k = 1; k < spec.levels.size(); ++k)
                ds.names.push_back(spec.name + "=" + spec.levels[k]);
        } else {
            ds.names.push_back(spec.name);
        }
    }
    const std::size_t n = records.size() - 1;
    ds.values.resize(Eigen::Index(n), Eigen::Index(ds.names.size()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = records[i + 1];
        if (rec.size() != header.size())
            throw DataError(source + ", data row " + std::to_string(i + 1) + " has " + std::to_string(rec.size()) +
                            " fields, header has " + std::to_string(header.size()));
        Eigen::Index out = 0;
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const ColumnSpec& spec = schema.columns[c];
            const std::string& cell = rec[source_col[c]];
            const std::string where = cell_context(source, i, spec.name);
            switch (spec.kind) {
            case ColumnKind::Numeric: {
                if (trim(cell).empty())
                    throw NonNumericCell("missing value at " + where);
                double v = 0.0;
                try {
                    v = parse_double(cell);
                } catch (const NonNumericCell&) {
                    throw NonNumericCell("non-numeric value '" + cell + "' at " + where);
                }
                if (!std::isfinite(v))
                    throw NonNumericCell("non-finite value '" + cell + "' at " + where);
                ds.values(Eigen::Index(i), out++) = v;
                break;
            }
            case ColumnKind::Indicator:
                ds.values(Eigen::Index(i), out++) = parse_indicator(cell, spec, where);
                break;
            case ColumnKind::Categorical: {
                const std::string t = trim(cell);
                if (t.empty())
                    throw NonNumericCell("missing value at " + where);
                const auto it = std::find(spec.levels.begin(), spec.levels.end(), t);
                if (it == spec.levels.end())
                    throw NonNumericCell("unknown level '" + cell + "' at " + where);
                const std::size_t level = std::size_t(it - spec.levels.begin());
                for (std::size_t k = 1; k < spec.levels.size(); ++k)
                    ds.values(Eigen::Index(i), out++) = level == k ? 1.0 : 0.0;
                break;
            }
            }
        }
    }

    Eigen::Index out = 0;
    for (const ColumnSpec& spec : schema.columns) {
        const std::size_t width = spec.kind == ColumnKind::Categorical ? spec.levels.size() - 1 : 1;
        for (std::size_t k = 0; k < width; ++k, ++out) {
            auto col = ds.values.col(out);
            ColumnSummary s;
            s.name = ds.names[std::size_t(out)];
            s.mean = col.mean();
            s.sd = std::sqrt((col.array() - s.mean).square().mean());
            if (spec.standardize && spec.kind == ColumnKind::Numeric) {
                if (!(s.sd > 0.0))
                    throw DataError("column '" + spec.name + "' is constant and cannot be standardized");
                col = (col.array() - s.mean) / s.sd;
                s.standardized = true;
            }
            ds.summary.push_back(s);
        }
    }
    return ds;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path);
    return parse_csv(in, schema, path);
}

std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text)
{
    std::string t = trim(text);
    if (!t.empty() && t.front() == '+')
        t.erase(0, 1);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw NonNumericCell("not a number: '" + text + "'");
    return v;
}

void Table::add_row(std::vector<std::string> row)
{
    if (row.size() != header.size())
        throw ShapeMismatch("table row has " + std::to_string(row.size()) + " cells, header has " +
                            std::to_string(header.size()));
    rows.push_back(std::move(row));
}

std::string to_csv(const Table& table)
{
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j)
                out += ',';
            out += quote_cell(cells[j]);
        }
        out += '\n';
    };
    line(table.header);
    for (const auto& r : table.rows)
        line(r);
    return out;
}

void write_table(const std::string& path, const Table& table)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path);
    out << to_csv(table);
    if (!out)
        throw DataError("write failed for " + path);
}

Table parse_table(std::istream& in)
{
    auto records = split_records(in);
    if (records.empty())
        throw EmptyFile("table is empty");
    Table t;
    t.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != t.header.size())
            throw DataError("ragged table row " + std::to_string(i));
        t.rows.push_back(std::move(records[i]));
    }
    return t;
}

Table read_table(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path);
    return parse_table(in);
}

nlohmann::json Manifest::to_json() const
{
    return {{"version", kVersionString}, {"command", command}, {"seed", seed},
            {"config", config},          {"inputs", inputs},   {"outputs", outputs}};
}

void write_manifest(const std::string& path, const Manifest& manifest)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path);
    out << manifest.to_json().dump(2) << '\n';
}

// Wage panel -----------------------------------------------------------------

CsvSchema wage_schema()
{
    CsvSchema s;
    auto num = [&](const char* name, bool standardize) {
        ColumnSpec c;
        c.name = name;
        c.standardize = standardize;
        s.columns.push_back(c);
    };
    auto ind = [&](const char* name, const char* yes = "yes", const char* no = "no") {
        ColumnSpec c;
        c.name = name;
        c.kind = ColumnKind::Indicator;
        c.true_token = yes;
        c.false_token = no;
        s.columns.push_back(c);
    };
    num("id", false);
    num("year", false);
    num("lwage", false);
    num("ed", true);
    num("exp", true);
    num("wks", true);
    ind("union");
    ind("married");
    ind("bluecol");
    ind("ind");
    ind("south");
    ind("smsa");
    ind("sex", "female", "male");
    ind("black");
    return s;
}

std::vector<std::string> wage_covariates()
{
    return {"ed", "exp", "wks", "union", "married", "bluecol", "ind", "south", "smsa", "sex", "black"};
}

WageData wages_from_dataset(Dataset table)
{
    const Eigen::VectorXd id = table.column("id");
    const Eigen::VectorXd year = table.column("year");
    std::vector<Eigen::Index> order(std::size_t(table.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::tie(id(a), year(a)) < std::tie(id(b), year(b));
    });
    Eigen::MatrixXd sorted(table.values.rows(), table.values.cols());
    for (std::size_t i = 0; i < order.size(); ++i)
        sorted.row(Eigen::Index(i)) = table.values.row(order[i]);
    table.values = std::move(sorted);

    const Eigen::VectorXd sid = table.column("id");
    const Eigen::VectorXd syear = table.column("year");
    std::vector<int> counts;
    for (Eigen::Index i = 0; i < sid.size(); ++i) {
        if (i == 0 || sid(i) != sid(i - 1))
            counts.push_back(0);
        else if (syear(i) == syear(i - 1))
            throw DataError("individual " + format_double(sid(i)) + " has year " + format_double(syear(i)) + " twice");
        ++counts.back();
    }
    for (int c : counts)
        if (c != counts.front())
            throw DataError("unbalanced panel: individuals have " + std::to_string(counts.front()) + " and " +
                            std::to_string(c) + " observations");

    WageData w;
    w.covariates = wage_covariates();
    w.individuals = int(counts.size());
    w.years = counts.front();
    w.x.resize(table.rows(), Eigen::Index(w.covariates.size()));
    for (std::size_t j = 0; j < w.covariates.size(); ++j)
        w.x.col(Eigen::Index(j)) = table.column(w.covariates[j]);
    w.y = table.column("lwage");
    w.table = std::move(table);
    return w;
}

WageData load_wages(const std::string& path)
{
    return wages_from_dataset(load_csv(path, wage_schema()));
}

Eigen::MatrixXd wage_design(const WageData& w, const std::vector<std::string>& covariates)
{
    Eigen::MatrixXd x(w.x.rows(), Eigen::Index(covariates.size()) + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < covariates.size(); ++j) {
        const auto it = std::find(w.covariates.begin(), w.covariates.end(), covariates[j]);
        if (it == w.covariates.end())
            throw MissingColumn("unknown wage covariate '" + covariates[j] + "'");
        x.col(Eigen::Index(j) + 1) = w.x.col(it - w.covariates.begin());
    }
    return x;
}

void standardize_response(WageData& w)
{
    const double mean = w.y.mean();
    const double sd = std::sqrt((w.y.array() - mean).square().mean());
    if (!(sd > 0.0))
        throw DataError("lwage is constant");
    w.y = (w.y.array() - mean) / sd;
    w.response_mean += w.response_sd * mean;
    w.response_sd *= sd;
}

PanelData wage_panel(const WageData& w, const std::vector<std::string>& covariates)
{
    return PanelData::random_intercept(wage_design(w, covariates), w.y, w.years);
}

// Predictive maintenance -----------------------------------------------------

namespace {
const char* const kAi4iContinuous[] = {"Air temperature [K]", "Process temperature [K]", "Rotational speed [rpm]",
                                       "Torque [Nm]", "Tool wear [min]"};
constexpr const char* kAi4iLabel = "Machine failure";
} // namespace

CsvSchema ai4i_schema()
{
    CsvSchema s;
    for (const char* name : kAi4iContinuous) {
        ColumnSpec c;
        c.name = name;
        c.standardize = true;
        s.columns.push_back(c);
    }
    ColumnSpec type;
    type.name = "Type";
    type.kind = ColumnKind::Categorical;
    type.levels = {"L", "M", "H"};
    s.columns.push_back(type);
    ColumnSpec label;
    label.name = kAi4iLabel;
    label.kind = ColumnKind::Indicator;
    s.columns.push_back(label);
    return s;
}

std::vector<std::string> ai4i_features()
{
    std::vector<std::string> f(std::begin(kAi4iContinuous), std::end(kAi4iContinuous));
    f.push_back("Type=M");
    f.push_back("Type=H");
    return f;
}

MaintenanceData ai4i_from_dataset(Dataset table)
{
    const auto features = ai4i_features();
    Eigen::MatrixXd x(table.rows(), Eigen::Index(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j)
        x.col(Eigen::Index(j)) = table.column(features[j]);
    const Eigen::VectorXd lab = table.column(kAi4iLabel);
    std::vector<int> y(static_cast<std::size_t>(lab.size()));
    for (Eigen::Index i = 0; i < lab.size(); ++i)
        y[std::size_t(i)] = lab(i) == 1.0 ? 1 : 0;
    ClassificationData data(std::move(x), std::move(y));
    return {std::move(table), std::move(data)};
}

MaintenanceData load_ai4i(const std::string& path)
{
    return ai4i_from_dataset(load_csv(path, ai4i_schema()));
}

// Synthetic fixtures ---------------------------------------------------------

void write_synthetic_wages(const std::string& path, std::uint64_t seed, int individuals, int years)
{
    if (individuals < 2 || years < 2)
        throw DomainError("synthetic panel needs at least 2 individuals and 2 years");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto coin = [&](double p) { return u(rng) < p ? 1 : 0; };
    Table t;
    t.header = {"id", "year", "lwage", "ed", "exp", "wks", "union", "married",
                "bluecol", "ind", "south", "smsa", "sex", "black"};
    for (int i = 0; i < individuals; ++i) {
        const int ed = std::clamp(int(std::lround(12.8 + 2.8 * z(rng))), 4, 17);
        const int exp0 = 1 + int(u(rng) * 40.0);
        const int sex = coin(0.11);
        const int black = coin(0.07);
        int married = coin(0.8);
        int south = coin(0.3);
        int smsa = coin(0.65);
        int bluecol = coin(0.5);
        int ind = coin(0.4);
        int uni = coin(0.36);
        const double alpha = 0.3 * z(rng);
        for (int k = 0; k < years; ++k) {
            if (k > 0) {
                // Occasional changes of status between years.
                if (coin(0.05)) married = 1 - married;
                if (coin(0.03)) south = 1 - south;
                if (coin(0.05)) smsa = 1 - smsa;
                if (coin(0.08)) bluecol = 1 - bluecol;
                if (coin(0.08)) ind = 1 - ind;
                if (coin(0.08)) uni = 1 - uni;
            }
            const int exp = exp0 + k;
            const int wks = std::clamp(int(std::lround(46.8 + 5.1 * z(rng))), 5, 52);
            double noise = 0.15 * z(rng);
            if (coin(0.01))
                noise += 1.5 * z(rng);
            const double lwage = 5.0 + 0.06 * (ed - 12.8) + 0.012 * (exp - 20.0) + 0.10 * uni + 0.09 * married -
                                 0.14 * bluecol + 0.15 * smsa - 0.38 * sex - 0.17 * black + alpha + noise;
            t.add_row({std::to_string(i + 1), std::to_string(1976 + k), format_double(lwage), std::to_string(ed),
                       std::to_string(exp), std::to_string(wks), uni ? "yes" : "no", married ? "yes" : "no",
                       bluecol ? "yes" : "no", std::to_string(ind), south ? "yes" : "no", smsa ? "yes" : "no",
                       sex ? "female" : "male", black ? "yes" : "no"});
        }
    }
    write_table(path, t);
}

void write_synthetic_ai4i(const std::string& path, std::uint64_t seed, int rows)
{
    if (rows < 10)
        throw DomainError("synthetic maintenance data needs at least 10 rows");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Table t;
    t.header = {"UDI",         "Product ID",      "Type", "Air temperature [K]", "Process temperature [K]",
                "Rotational speed [rpm]", "Torque [Nm]", "Tool wear [min]", "Machine failure", "TWF",
                "HDF",         "PWF",             "OSF",  "RNF"};
    for (int i = 0; i < rows; ++i) {
        const double r = u(rng);
        const char* type = r < 0.6 ? "L" : r < 0.9 ? "M" : "H";
        const double air = 300.0 + 2.0 * z(rng);
        const double process = air + 10.0 + z(rng);
        const double speed = 1538.0 + 179.0 * z(rng);
        const double torque = std::max(3.0, 40.0 - 0.04 * (speed - 1538.0) + 7.0 * z(rng));
        const double wear = std::floor(u(rng) * 254.0);
        const double zt = (torque - 40.0) / 10.0;
        const double zw = (wear - 127.0) / 73.0;
        const double zs = (speed - 1538.0) / 179.0;
        const double eta = -4.6 + 0.8 * zt + 0.9 * zw + 0.7 * zt * zt - 0.4 * zs + (type[0] == 'L' ? 0.3 : 0.0);
        const int fail = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
        const int twf = fail && zw > 1.0 ? 1 : 0;
        const int osf = fail && !twf ? 1 : 0;
        t.add_row({std::to_string(i + 1), std::string(type) + std::to_string(10000 + i), type,
                   short_double(std::round(air * 10.0) / 10.0), short_double(std::round(process * 10.0) / 10.0),
                   std::to_string(int(std::lround(speed))), short_double(std::round(torque * 10.0) / 10.0),
                   short_double(wear), std::to_string(fail), std::to_string(twf), "0", "0", std::to_string(osf),
                   "0"});
    }
    write_table(path, t);
}

} // namespace epdic
