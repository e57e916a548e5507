#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "analogia/image.hpp"
#include "analogia/prototypes.hpp"

namespace analogia {

// Lower-triangular T x T matrix; row t holds accuracies on tasks 0..t
// measured right after training task t (0-based).
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;

    // Appends the row for the next task; it must have tasks()+1 entries in [0, 1].
    void append_row(std::vector<double> row);

    std::size_t tasks() const { return rows_.size(); }
    double at(std::size_t t, std::size_t i) const;
    const std::vector<std::vector<double>>& rows() const { return rows_; }

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::vector<std::vector<double>> rows_;
};

// Mean of the last row.
double faa(const AccuracyMatrix& a);
// Mean over i < T of (max_{t in [i, T-1)} A[t][i]) - A[T-1][i]. Throws for T < 2.
double ff(const AccuracyMatrix& a);

enum class Estimator { kAnalogical, kSdc, kNone };
const char* estimator_name(Estimator e);
Estimator parse_estimator(std::string_view text);

struct BiasRecord {
    std::size_t task = 0;  // 1-based task whose arrival caused the shift
    ClassId class_id = 0;
    std::size_t prototype_index = 0;
    Estimator estimator = Estimator::kAnalogical;
    double bias = 0.0;
    double mean_reference_distance = 0.0;  // NaN when no estimator ran
    bool operator==(const BiasRecord&) const;
};

// For each estimated prototype, the index of its ground-truth partner.
// Greedy: repeatedly pair the globally closest remaining (estimate, truth).
std::vector<std::size_t> greedy_match(const std::vector<Vec>& estimated, const std::vector<Vec>& truth, double scale);

// Distance from each estimated prototype to its greedily matched ground truth.
std::vector<double> matched_bias(const std::vector<Vec>& estimated, const std::vector<Vec>& truth, double scale);

struct RunSummary {
    double faa = 0.0;
    double ff = 0.0;  // NaN for single-task runs
    std::uint64_t seed = 0;
    std::string baseline;
    bool operator==(const RunSummary&) const;
};

RunSummary summarize(const AccuracyMatrix& a, std::uint64_t seed, std::string baseline);

inline constexpr std::string_view kAccuracyCsvHeader = "t,i,acc";
inline constexpr std::string_view kSummaryCsvHeader = "faa,ff,seed,baseline";
inline constexpr std::string_view kBiasCsvHeader = "task,class,m,estimator,bias,mean_ref_dist";

// Shortest round-trip decimal form; "nan" for NaN.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string accuracy_csv(const AccuracyMatrix& a);  // 1-based t and i
std::string summary_csv(const std::vector<RunSummary>& rows);
std::string bias_csv(const std::vector<BiasRecord>& records);

AccuracyMatrix parse_accuracy_csv(const std::string& text);
std::vector<RunSummary> parse_summary_csv(const std::string& text);
std::vector<BiasRecord> parse_bias_csv(const std::string& text);

// Writes accuracy_matrix.csv, summary.csv and bias.csv into `dir`.
void emit_results(const std::filesystem::path& dir, const AccuracyMatrix& a, const RunSummary& summary,
                  const std::vector<BiasRecord>& bias);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace analogia
