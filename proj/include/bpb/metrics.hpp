#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpb/dataset.hpp"
#include "bpb/modality.hpp"

namespace bpb {

// Scores are distances: lower means more likely genuine.

// 100 * (P(genuine < impostor) + 0.5 * P(tie)), via midranks.
// Throws std::invalid_argument on an empty list.
double auc(std::span<const double> genuine, std::span<const double> impostor);

struct RocPoint {
    double threshold;  // accept when distance <= threshold
    double fpr;
    double tpr;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) at -inf to (1,1) at +inf
    double auc_percent = 0.0;

    // Operating point for an arbitrary threshold.
    RocPoint at(double threshold) const;
};

RocCurve roc_curve(std::span<const double> genuine, std::span<const double> impostor);

// Trapezoidal area of the curve, in percent.
double trapezoid_area(const RocCurve& curve);

struct WilcoxonResult {
    double p_value = 1.0;
    double statistic = 0.0;   // rank sum of the impostor sample (midranks)
    bool exact = false;       // full enumeration was used
    bool degenerate = false;  // every value identical
};

inline constexpr std::size_t kExactWilcoxonMaxN = 12;

// One-sided rank-sum test, alternative: impostor distances tend to be larger.
// Exact permutation distribution (midranks, ties handled) when
// n1 + n2 <= 12; otherwise the normal approximation with tie-corrected
// variance and a 0.5 continuity correction.
WilcoxonResult wilcoxon_rank_sum(std::span<const double> genuine, std::span<const double> impostor);

// Normal approximation regardless of size (exposed for comparison tests).
WilcoxonResult wilcoxon_rank_sum_normal(std::span<const double> genuine, std::span<const double> impostor);

// Midranks (1-based) of the pooled sample, in input order.
std::vector<double> midranks(std::span<const double> pooled);

enum class Scenario { Random, Skilled, Mixed };
inline constexpr Scenario kScenarios[] = {Scenario::Random, Scenario::Skilled, Scenario::Mixed};
std::string_view scenario_name(Scenario s) noexcept;

struct EvalResult {
    Task task = Task::Keystroke;
    std::uint8_t subset_mask = 0;       // see protocol::Subset
    std::string subset_label;
    Scenario scenario = Scenario::Random;
    Split split = Split::Evaluation;
    double auc_percent = 0.0;
    RocCurve roc;
    double wilcoxon_p = 1.0;
    std::size_t genuine_count = 0;
    std::size_t impostor_count = 0;
};

// Writes unimodal_<scenario>.csv, fusion_<scenario>.csv, wilcoxon.csv,
// roc_<task>.csv and summary.txt. Throws Error when the directory cannot be
// written and std::invalid_argument when `results` is empty.
void render_report(std::span<const EvalResult> results, const std::filesystem::path& out_dir);

// Best result for (task, scenario, split): highest AUC, ties toward the
// smaller subset and then the canonical subset order.
const EvalResult* best_result(std::span<const EvalResult> results, Task task, Scenario scenario, Split split,
                              bool multimodal_only = false);

} // namespace bpb
