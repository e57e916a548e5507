#include "analogia/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "analogia/errors.hpp"

namespace analogia {

void AccuracyMatrix::append_row(std::vector<double> row) {
    if (row.size() != rows_.size() + 1) {
        throw DimensionError("accuracy row for task " + std::to_string(rows_.size() + 1) + " needs " +
                             std::to_string(rows_.size() + 1) + " entries");
    }
    for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("accuracy outside [0, 1]");
    }
    rows_.push_back(std::move(row));
}

double AccuracyMatrix::at(std::size_t t, std::size_t i) const {
    if (t >= rows_.size() || i > t) throw ContractError("accuracy matrix index outside the lower triangle");
    return rows_[t][i];
}

double faa(const AccuracyMatrix& a) {
    if (a.tasks() == 0) throw ContractError("faa: empty accuracy matrix");
    const auto& last = a.rows().back();
    double s = 0.0;
    for (double v : last) s += v;
    return s / static_cast<double>(last.size());
}

double ff(const AccuracyMatrix& a) {
    const std::size_t T = a.tasks();
    if (T < 2) throw ContractError("ff: forgetting is undefined for fewer than two tasks");
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < T; ++i) {
        double best = a.at(i, i);
        for (std::size_t t = i + 1; t + 1 < T; ++t) best = std::max(best, a.at(t, i));
        s += best - a.at(T - 1, i);
    }
    return s / static_cast<double>(T - 1);
}

const char* estimator_name(Estimator e) {
    switch (e) {
        case Estimator::kAnalogical: return "analogical";
        case Estimator::kSdc: return "sdc";
        case Estimator::kNone: return "none";
    }
    return "?";
}

Estimator parse_estimator(std::string_view text) {
    if (text == "analogical") return Estimator::kAnalogical;
    if (text == "sdc") return Estimator::kSdc;
    if (text == "none") return Estimator::kNone;
    throw ConfigError("unknown estimator \"" + std::string(text) + "\" (expected analogical, sdc or none)");
}

namespace {

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

bool BiasRecord::operator==(const BiasRecord& o) const {
    return task == o.task && class_id == o.class_id && prototype_index == o.prototype_index &&
           estimator == o.estimator && same_double(bias, o.bias) &&
           same_double(mean_reference_distance, o.mean_reference_distance);
}

bool RunSummary::operator==(const RunSummary& o) const {
    return same_double(faa, o.faa) && same_double(ff, o.ff) && seed == o.seed && baseline == o.baseline;
}

std::vector<std::size_t> greedy_match(const std::vector<Vec>& estimated, const std::vector<Vec>& truth, double scale) {
    if (estimated.size() != truth.size()) throw DimensionError("greedy_match: prototype counts differ");
    const std::size_t n = estimated.size();
    std::vector<std::size_t> match(n, n);
    std::vector<bool> used(n, false);
    for (std::size_t round = 0; round < n; ++round) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (match[i] != n) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double d = distance(estimated[i], truth[j], scale);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        match[bi] = bj;
        used[bj] = true;
    }
    return match;
}

std::vector<double> matched_bias(const std::vector<Vec>& estimated, const std::vector<Vec>& truth, double scale) {
    const auto match = greedy_match(estimated, truth, scale);
    std::vector<double> out(estimated.size());
    for (std::size_t i = 0; i < estimated.size(); ++i) out[i] = distance(estimated[i], truth[match[i]], scale);
    return out;
}

RunSummary summarize(const AccuracyMatrix& a, std::uint64_t seed, std::string baseline) {
    RunSummary s;
    s.faa = faa(a);
    s.ff = a.tasks() >= 2 ? ff(a) : std::numeric_limits<double>::quiet_NaN();
    s.seed = seed;
    s.baseline = std::move(baseline);
    return s;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw ContractError("not a number: \"" + std::string(text) + "\"");
    }
    return v;
}

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text, std::string_view header) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw ContractError("csv header mismatch: expected \"" + std::string(header) + "\"");
    }
    const auto width = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',') + 1);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != width) throw ContractError("csv row has " + std::to_string(cells.size()) + " cells: " + line);
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::size_t parse_size(const std::string& s) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ContractError("not an integer: \"" + s + "\"");
    return v;
}

}  // namespace

std::string accuracy_csv(const AccuracyMatrix& a) {
    std::string out(kAccuracyCsvHeader);
    out += '\n';
    for (std::size_t t = 0; t < a.tasks(); ++t) {
        for (std::size_t i = 0; i <= t; ++i) {
            out += std::to_string(t + 1) + ',' + std::to_string(i + 1) + ',' + format_double(a.at(t, i)) + '\n';
        }
    }
    return out;
}

std::string summary_csv(const std::vector<RunSummary>& rows) {
    std::string out(kSummaryCsvHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += format_double(r.faa) + ',' + format_double(r.ff) + ',' + std::to_string(r.seed) + ',' + r.baseline + '\n';
    }
    return out;
}

std::string bias_csv(const std::vector<BiasRecord>& records) {
    std::string out(kBiasCsvHeader);
    out += '\n';
    for (const auto& r : records) {
        out += std::to_string(r.task) + ',' + std::to_string(r.class_id) + ',' + std::to_string(r.prototype_index) +
               ',' + estimator_name(r.estimator) + ',' + format_double(r.bias) + ',' +
               format_double(r.mean_reference_distance) + '\n';
    }
    return out;
}

AccuracyMatrix parse_accuracy_csv(const std::string& text) {
    AccuracyMatrix a;
    std::vector<double> row;
    for (const auto& cells : parse_csv(text, kAccuracyCsvHeader)) {
        const std::size_t t = parse_size(cells[0]);
        const std::size_t i = parse_size(cells[1]);
        if (t != a.tasks() + 1 || i != row.size() + 1) throw ContractError("accuracy csv rows out of order");
        row.push_back(parse_double(cells[2]));
        if (i == t) {
            a.append_row(std::move(row));
            row.clear();
        }
    }
    if (!row.empty()) throw ContractError("accuracy csv ends mid-row");
    return a;
}

std::vector<RunSummary> parse_summary_csv(const std::string& text) {
    std::vector<RunSummary> out;
    for (const auto& cells : parse_csv(text, kSummaryCsvHeader)) {
        RunSummary r;
        r.faa = parse_double(cells[0]);
        r.ff = parse_double(cells[1]);
        r.seed = parse_size(cells[2]);
        r.baseline = cells[3];
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<BiasRecord> parse_bias_csv(const std::string& text) {
    std::vector<BiasRecord> out;
    for (const auto& cells : parse_csv(text, kBiasCsvHeader)) {
        BiasRecord r;
        r.task = parse_size(cells[0]);
        int cls = 0;
        auto res = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), cls);
        if (res.ec != std::errc{}) throw ContractError("bad class id \"" + cells[1] + "\"");
        r.class_id = cls;
        r.prototype_index = parse_size(cells[2]);
        r.estimator = parse_estimator(cells[3]);
        r.bias = parse_double(cells[4]);
        r.mean_reference_distance = parse_double(cells[5]);
        out.push_back(r);
    }
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit_results(const std::filesystem::path& dir, const AccuracyMatrix& a, const RunSummary& summary,
                  const std::vector<BiasRecord>& bias) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "accuracy_matrix.csv", accuracy_csv(a));
    write_text_file(dir / "summary.csv", summary_csv({summary}));
    write_text_file(dir / "bias.csv", bias_csv(bias));
}

}  // namespace analogia
