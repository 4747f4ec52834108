#include "bpb/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "bpb/error.hpp"

namespace bpb {

namespace {

void require_nonempty(std::span<const double> g, std::span<const double> i, const char* what) {
    if (g.empty() || i.empty()) throw std::invalid_argument(fmt::format("{}: empty score list", what));
}

std::vector<double> pooled(std::span<const double> a, std::span<const double> b) {
    std::vector<double> v(a.begin(), a.end());
    v.insert(v.end(), b.begin(), b.end());
    return v;
}

} // namespace

std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double auc(std::span<const double> genuine, std::span<const double> impostor) {
    require_nonempty(genuine, impostor, "auc");
    const auto ranks = midranks(pooled(genuine, impostor));
    double r_imp = 0.0;
    for (std::size_t k = genuine.size(); k < ranks.size(); ++k) r_imp += ranks[k];
    const double ni = static_cast<double>(impostor.size()), ng = static_cast<double>(genuine.size());
    const double u = r_imp - ni * (ni + 1.0) / 2.0;
    return 100.0 * u / (ng * ni);
}

RocPoint RocCurve::at(double threshold) const {
    RocPoint best = points.front();
    for (const auto& p : points) {
        if (p.threshold <= threshold) best = p;
        else break;
    }
    return {threshold, best.fpr, best.tpr};
}

RocCurve roc_curve(std::span<const double> genuine, std::span<const double> impostor) {
    require_nonempty(genuine, impostor, "roc_curve");
    std::vector<double> g(genuine.begin(), genuine.end()), im(impostor.begin(), impostor.end());
    std::sort(g.begin(), g.end());
    std::sort(im.begin(), im.end());
    std::vector<double> thresholds = pooled(g, im);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve c;
    const double inf = std::numeric_limits<double>::infinity();
    c.points.push_back({-inf, 0.0, 0.0});
    std::size_t gi = 0, ii = 0;
    for (double thr : thresholds) {
        while (gi < g.size() && g[gi] <= thr) ++gi;
        while (ii < im.size() && im[ii] <= thr) ++ii;
        c.points.push_back({thr, static_cast<double>(ii) / static_cast<double>(im.size()),
                            static_cast<double>(gi) / static_cast<double>(g.size())});
    }
    c.points.push_back({inf, 1.0, 1.0});
    c.auc_percent = auc(genuine, impostor);
    return c;
}

double trapezoid_area(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    return 100.0 * area;
}

WilcoxonResult wilcoxon_rank_sum_normal(std::span<const double> genuine, std::span<const double> impostor) {
    require_nonempty(genuine, impostor, "wilcoxon_rank_sum");
    const auto all = pooled(genuine, impostor);
    const auto ranks = midranks(all);
    const double n1 = static_cast<double>(genuine.size()), n2 = static_cast<double>(impostor.size());
    const double n = n1 + n2;
    WilcoxonResult r;
    for (std::size_t k = genuine.size(); k < ranks.size(); ++k) r.statistic += ranks[k];

    // Tie correction: sum over tie groups of t^3 - t.
    std::vector<double> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    double ties = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        ties += t * t * t - t;
        i = j + 1;
    }
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if (!(var > 0.0)) {
        r.p_value = 1.0;
        r.degenerate = true;
        return r;
    }
    const double u = r.statistic - n2 * (n2 + 1.0) / 2.0;
    const double z = (u - n1 * n2 / 2.0 - 0.5) / std::sqrt(var);
    r.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    return r;
}

WilcoxonResult wilcoxon_rank_sum(std::span<const double> genuine, std::span<const double> impostor) {
    require_nonempty(genuine, impostor, "wilcoxon_rank_sum");
    const std::size_t n = genuine.size() + impostor.size();
    if (n > kExactWilcoxonMaxN) return wilcoxon_rank_sum_normal(genuine, impostor);

    const auto all = pooled(genuine, impostor);
    const auto ranks = midranks(all);
    WilcoxonResult r;
    r.exact = true;
    if (std::all_of(all.begin(), all.end(), [&](double v) { return v == all.front(); })) {
        r.degenerate = true;
        r.p_value = 1.0;
        return r;
    }
    // Midranks are multiples of 1/2, so doubled rank sums are exact integers.
    auto twice = [](double v) { return static_cast<long>(std::lround(2.0 * v)); };
    long observed = 0;
    for (std::size_t k = genuine.size(); k < n; ++k) observed += twice(ranks[k]);
    r.statistic = static_cast<double>(observed) / 2.0;

    // Every assignment of n2 of the pooled ranks to the impostor sample.
    const std::size_t n2 = impostor.size();
    std::size_t total = 0, at_least = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != n2) continue;
        long s = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (mask & (1u << k)) s += twice(ranks[k]);
        ++total;
        if (s >= observed) ++at_least;
    }
    r.p_value = static_cast<double>(at_least) / static_cast<double>(total);
    return r;
}

std::string_view scenario_name(Scenario s) noexcept {
    switch (s) {
    case Scenario::Random: return "random";
    case Scenario::Skilled: return "skilled";
    case Scenario::Mixed: return "mixed";
    }
    return "random";
}

// ---------------------------------------------------------------------------
// Report

namespace {

// Canonical subset order: size first, then mask bits from the lowest slot.
bool canonical_less(std::uint8_t a, std::uint8_t b) {
    const int pa = std::popcount(a), pb = std::popcount(b);
    if (pa != pb) return pa < pb;
    for (int bit = 0; bit < 8; ++bit) {
        const bool ia = a & (1u << bit), ib = b & (1u << bit);
        if (ia != ib) return ia;
    }
    return false;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write report file '{}'", p.string()));
    return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }
std::string pval(double v) { return fmt::format("{:.3e}", v); }

const char* task_title(Task t) {
    switch (t) {
    case Task::Keystroke: return "Keystroke";
    case Task::TextReading: return "Text Reading";
    case Task::GallerySwiping: return "Gallery Swiping";
    case Task::Tapping: return "Tapping";
    }
    return "";
}

const EvalResult* find(std::span<const EvalResult> results, Task task, std::uint8_t mask, Scenario sc, Split split) {
    for (const auto& r : results)
        if (r.task == task && r.subset_mask == mask && r.scenario == sc && r.split == split) return &r;
    return nullptr;
}

} // namespace

const EvalResult* best_result(std::span<const EvalResult> results, Task task, Scenario scenario, Split split,
                              bool multimodal_only) {
    const EvalResult* best = nullptr;
    for (const auto& r : results) {
        if (r.task != task || r.scenario != scenario || r.split != split) continue;
        if (multimodal_only && std::popcount(r.subset_mask) < 2) continue;
        if (!best || r.auc_percent > best->auc_percent ||
            (r.auc_percent == best->auc_percent && canonical_less(r.subset_mask, best->subset_mask)))
            best = &r;
    }
    return best;
}

void render_report(std::span<const EvalResult> results, const std::filesystem::path& out_dir) {
    if (results.empty()) throw std::invalid_argument("render_report: no results");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(fmt::format("cannot create report directory '{}': {}", out_dir.string(), ec.message()));

    std::set<Task> task_set;
    std::set<Split> split_set;
    for (const auto& r : results) {
        task_set.insert(r.task);
        split_set.insert(r.split);
    }
    const std::vector<Task> tasks(task_set.begin(), task_set.end());
    const Split main_split = split_set.count(Split::Evaluation) ? Split::Evaluation : *split_set.begin();
    const bool have_val = main_split == Split::Evaluation && split_set.count(Split::Validation);

    std::string summary;
    auto cell = [&](Task t, std::uint8_t mask, Scenario sc) -> std::string {
        const EvalResult* e = find(results, t, mask, sc, main_split);
        if (!e) return "-";
        std::string s = num(e->auc_percent);
        if (have_val)
            if (const EvalResult* v = find(results, t, mask, sc, Split::Validation)) s += " (" + num(v->auc_percent) + ")";
        return s;
    };

    for (Scenario sc : kScenarios) {
        // Unimodal table: touch + 5 sensors per task, then sensor averages.
        auto out = open_out(out_dir / fmt::format("unimodal_{}.csv", scenario_name(sc)));
        out << "task,touch";
        for (ModalityId m : kSensors) out << ',' << modality_name(m);
        out << '\n';
        std::vector<double> sums(6, 0.0);
        std::vector<int> counts(6, 0);
        summary += fmt::format("Individual modalities, {} impostor scenario (AUC %)\n", scenario_name(sc));
        summary += fmt::format("{:<17}{:>18}", "Task", "Touch");
        for (ModalityId m : kSensors) summary += fmt::format("{:>22}", modality_name(m));
        summary += '\n';
        for (Task t : tasks) {
            out << task_key(t);
            summary += fmt::format("{:<17}", task_title(t));
            for (int slot = 0; slot < 6; ++slot) {
                const auto mask = static_cast<std::uint8_t>(1u << slot);
                const EvalResult* e = find(results, t, mask, sc, main_split);
                out << ',' << (e ? num(e->auc_percent) : std::string("NA"));
                if (e) {
                    sums[static_cast<std::size_t>(slot)] += e->auc_percent;
                    counts[static_cast<std::size_t>(slot)]++;
                }
                summary += fmt::format("{:>{}}", cell(t, mask, sc), slot == 0 ? 18 : 22);
            }
            out << '\n';
            summary += '\n';
        }
        out << "average";
        summary += fmt::format("{:<17}{:>18}", "Sensor average", "");
        for (int slot = 0; slot < 6; ++slot) {
            const auto s = static_cast<std::size_t>(slot);
            const std::string v = counts[s] ? num(sums[s] / counts[s]) : std::string("NA");
            out << ',' << v;
            if (slot > 0) summary += fmt::format("{:>22}", v);
        }
        out << '\n';
        summary += "\n";

        // Best fusion table.
        auto fout = open_out(out_dir / fmt::format("fusion_{}.csv", scenario_name(sc)));
        fout << "task,auc,best_subset\n";
        summary += fmt::format("Best modality subsets, {} impostor scenario\n", scenario_name(sc));
        for (Task t : tasks) {
            const EvalResult* b = best_result(results, t, sc, main_split);
            if (!b) continue;
            fout << task_key(t) << ',' << num(b->auc_percent) << ',' << b->subset_label << '\n';
            std::string line = fmt::format("{:<17}{:>8}  {}", task_title(t), num(b->auc_percent), b->subset_label);
            if (have_val)
                if (const EvalResult* v = best_result(results, t, sc, Split::Validation))
                    line += fmt::format("   (validation {} {})", num(v->auc_percent), v->subset_label);
            summary += line + '\n';
        }
        summary += '\n';
    }

    auto wout = open_out(out_dir / "wilcoxon.csv");
    wout << "scenario,task,best_subset,p_value\n";
    summary += "Wilcoxon rank-sum p-values of the best subsets\n";
    for (Scenario sc : kScenarios) {
        for (Task t : tasks) {
            const EvalResult* b = best_result(results, t, sc, main_split);
            if (!b) continue;
            wout << scenario_name(sc) << ',' << task_key(t) << ',' << b->subset_label << ',' << pval(b->wilcoxon_p) << '\n';
            summary += fmt::format("{:<8} {:<17}{:<22}{}\n", scenario_name(sc), task_title(t), b->subset_label,
                                   pval(b->wilcoxon_p));
        }
    }

    // ROC data per task, for the best subset of the mixed scenario.
    for (Task t : tasks) {
        const EvalResult* b = best_result(results, t, Scenario::Mixed, main_split);
        if (!b) continue;
        const EvalResult* curves[3] = {find(results, t, b->subset_mask, Scenario::Random, main_split),
                                       find(results, t, b->subset_mask, Scenario::Skilled, main_split), b};
        std::set<double> thresholds;
        for (const EvalResult* e : curves)
            if (e)
                for (const auto& p : e->roc.points) thresholds.insert(p.threshold);
        auto rout = open_out(out_dir / fmt::format("roc_{}.csv", task_key(t)));
        rout << "threshold,fpr_random,tpr_random,fpr_skilled,tpr_skilled,fpr_mixed,tpr_mixed\n";
        for (double thr : thresholds) {
            rout << (std::isinf(thr) ? (thr < 0 ? std::string("-inf") : std::string("inf")) : fmt::format("{}", thr));
            for (const EvalResult* e : curves) {
                if (!e) {
                    rout << ",NA,NA";
                    continue;
                }
                const RocPoint p = e->roc.at(thr);
                rout << ',' << fmt::format("{}", p.fpr) << ',' << fmt::format("{}", p.tpr);
            }
            rout << '\n';
        }
    }

    auto sout = open_out(out_dir / "summary.txt");
    sout << summary;
}

} // namespace bpb
