// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every gating criterion passes.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "bpb/features.hpp"
#include "bpb/metrics.hpp"
#include "bpb/net.hpp"
#include "bpb/pipeline.hpp"
#include "bpb/protocol.hpp"
#include "bpb/triplet_loss.hpp"

using namespace bpb;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, const Outcome& o, double secs) {
    std::printf("ACCEPTANCE %d %s  %s  (%.1fs)  %s\n", id, o.pass ? "PASS" : "FAIL", title, secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome gradient_check() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    int checks = 0;
    for (std::size_t dim : {2u, 8u, 12u}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            ModelSpec spec;
            spec.input_dim = dim;
            spec.hidden = 4;
            spec.embedding_dim = 4;
            const auto params = init_model(spec, seed);
            Rng rng(100 + seed);
            std::array<Window, 3> w;
            for (auto& x : w) {
                x.rows = 6;
                x.dim = dim;
                x.valid_len = 6;
                x.data.resize(6 * dim);
                for (auto& v : x.data) v = rng.normal();
            }
            const TripletRef t{&w[0], &w[1], &w[2]};
            std::vector<SequenceMasks> masks;
            if (seed % 2 == 0)
                for (int k = 0; k < 3; ++k) masks.push_back(draw_masks(spec, 6, rng));
            if (forward_triplets(params, std::span(&t, 1), masks, 1.0).active_fraction != 1.0)
                return {false, "hinge inactive on a check triplet"};
            worst = std::max(worst, grad_check(params, std::span(&t, 1), masks, 1.0, 1e-5));
            ++checks;
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 30.0,
            fmt::format("{} checks over input dims 2/8/12, max relative error {:.2e} (< 1e-4), {:.1f}s (< 30s)", checks,
                        worst, secs)};
}

// ---------------------------------------------------------------------------
// 2. AUC oracle

double brute_auc(const std::vector<double>& g, const std::vector<double>& i) {
    double s = 0.0;
    for (double a : g)
        for (double b : i) s += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
    return 100.0 * s / static_cast<double>(g.size() * i.size());
}

Outcome auc_oracle() {
    Rng rng(2024);
    double worst_auc = 0.0, worst_roc = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const bool ties = trial % 2 == 0;
        auto draw = [&](std::size_t n, double shift) {
            std::vector<double> v(n);
            for (auto& x : v) x = ties ? static_cast<double>(rng.below(5)) + shift : rng.normal() + shift;
            return v;
        };
        const auto g = draw(1 + rng.below(12), 0.0);
        const auto i = draw(1 + rng.below(12), ties ? 0.0 : 0.7);
        const double a = auc(g, i);
        worst_auc = std::max(worst_auc, std::abs(a - brute_auc(g, i)) / 100.0);
        worst_roc = std::max(worst_roc, std::abs(trapezoid_area(roc_curve(g, i)) - a) / 100.0);
    }
    return {worst_auc <= 1e-9 && worst_roc <= 1e-9,
            fmt::format("1000 instances: |rank - pairwise| {:.1e}, |trapezoid - rank| {:.1e} (<= 1e-9)", worst_auc,
                        worst_roc)};
}

// ---------------------------------------------------------------------------
// 3. Wilcoxon exactness

// Fraction of impostor rank sets whose sum is at least the observed one.
double enumerate_p(std::size_t n1, std::size_t n2, unsigned observed_mask) {
    const std::size_t n = n1 + n2;
    auto rank_sum = [](unsigned mask) {
        int s = 0;
        for (int r = 0; r < 32; ++r)
            if (mask & (1u << r)) s += r + 1;
        return s;
    };
    const int observed = rank_sum(observed_mask);
    std::size_t total = 0, extreme = 0;
    for (unsigned m = 0; m < (1u << n); ++m) {
        if (static_cast<std::size_t>(__builtin_popcount(m)) != n2) continue;
        ++total;
        extreme += rank_sum(m) >= observed;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

Outcome wilcoxon_exactness() {
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t n = 2; n <= kExactWilcoxonMaxN; ++n) {
        for (unsigned m = 0; m < (1u << n); ++m) {
            const auto n2 = static_cast<std::size_t>(__builtin_popcount(m));
            if (n2 == 0 || n2 == n) continue;
            // Values are the ranks themselves; bit r set means rank r+1 is an impostor.
            std::vector<double> g, imp;
            for (std::size_t r = 0; r < n; ++r) (m & (1u << r) ? imp : g).push_back(static_cast<double>(r + 1));
            const auto res = wilcoxon_rank_sum(g, imp);
            if (!res.exact) return {false, fmt::format("n={} fell back to the approximation", n)};
            worst = std::max(worst, std::abs(res.p_value - enumerate_p(g.size(), imp.size(), m)));
            ++cases;
        }
    }
    const std::vector<double> g{1, 2}, imp{3, 4};
    const double p = wilcoxon_rank_sum(g, imp).p_value;
    const bool sixth = std::abs(p - 1.0 / 6.0) <= 1e-15;
    return {worst <= 1e-12 && sixth,
            fmt::format("{} tie-free samples with n1+n2 <= 12, max |p - enumeration| {:.1e}; {{1,2}} vs {{3,4}} p = {:.17g}",
                        cases, worst, p)};
}

// ---------------------------------------------------------------------------
// 4. Protocol counts

Outcome protocol_counts() {
    std::string detail;
    bool ok = true;
    for (int users : {2, 5}) {
        SynthConfig c;
        c.split = Split::Evaluation;
        c.n_users = users;
        c.sensor_samples = 300;
        c.touch_events = 60;
        c.seed = 40 + static_cast<std::uint64_t>(users);
        const auto d = generate_synthetic(c);
        ModelSet models;
        for (ModalityId m : kModalities) {
            auto spec = ModelSpec::desk(m);
            models.emplace(m, init_model(spec, 7 + static_cast<std::uint64_t>(m)));
        }
        for (Task t : kTasks) {
            const auto subsets = enumerate_subsets(t);
            if (subsets.size() != 63) ok = false;
            const auto table = build_comparisons(embed_task(d, models, t));
            for (const auto& s : subsets) {
                const auto set = build_distributions(table, s);
                const auto want = static_cast<std::size_t>(2 * users);
                if (set.genuine.size() != want || set.random_impostor.size() != want ||
                    set.skilled_impostor.size() != want)
                    ok = false;
            }
        }
        detail += fmt::format("U={}: 2U={} per distribution over 4 tasks x 63 subsets; ", users, 2 * users);
    }
    return {ok, detail + (ok ? "all counts exact" : "count mismatch")};
}

// ---------------------------------------------------------------------------
// 5 and 6. Device bias and fusion benefit on synthetic desk-scale data

constexpr int kSeeds = 5;
constexpr int kTrainUsers = 4;
constexpr int kEvalUsers = 16;
constexpr Range kDeviceGain{0.4, 2.5};
constexpr Range kDeviceOffset{-3.0, 3.0};

struct SeedRun {
    double gap_device = 0.0;     // mean random - skilled sensor AUC, device effects on
    double gap_identity = 0.0;   // same with gain 1, offset 0
    std::map<Task, std::array<double, 2>> fusion;  // best multimodal, best singleton (mixed)
    std::map<Task, std::array<double, 2>> scaled;  // AUC drift and argmax change under embedding scaling
};

std::pair<Dataset, Dataset> synth_pair(std::uint64_t seed, bool device) {
    SynthConfig c;
    c.seed = seed;
    if (!device) {
        c.device_gain = {1.0, 1.0};
        c.device_offset = {0.0, 0.0};
    } else {
        c.device_gain = kDeviceGain;
        c.device_offset = kDeviceOffset;
    }
    c.n_users = kTrainUsers;
    auto train = generate_synthetic(c);
    c.split = Split::Evaluation;
    c.first_user = 1000;
    c.n_users = kEvalUsers;
    return {std::move(train), generate_synthetic(c)};
}

RunConfig desk_run(std::uint64_t seed, std::vector<ModalityId> modalities) {
    RunConfig rc = preset_config(Preset::Desk);
    rc.seed = seed;
    rc.hyper.windows_per_session = 1;
    rc.modalities = std::move(modalities);
    return rc;
}

double sensor_gap(const Dataset& ev, const ModelSet& models) {
    double gap = 0.0;
    int n = 0;
    for (Task t : kTasks) {
        const auto table = build_comparisons(embed_task(ev, models, t));
        for (std::size_t slot = 1; slot < kSlots; ++slot) {
            const auto s = build_distributions(table, Subset::singleton(t, slot));
            gap += auc(s.genuine_values(), s.impostor_values(Scenario::Random)) -
                   auc(s.genuine_values(), s.impostor_values(Scenario::Skilled));
            ++n;
        }
    }
    return gap / n;
}

std::array<double, 2> fusion_comparison(const ComparisonTable& table) {
    double multi = -1.0, single = -1.0;
    for (const auto& s : enumerate_subsets(table.task)) {
        const auto set = build_distributions(table, s);
        const double a = auc(set.genuine_values(), set.impostor_values(Scenario::Mixed));
        (s.size() >= 2 ? multi : single) = std::max(s.size() >= 2 ? multi : single, a);
    }
    return {multi, single};
}

// Multiplies every window embedding of every slot by `lambda`.
TaskEmbeddings scale_embeddings(TaskEmbeddings e, double lambda) {
    for (auto& u : e.users)
        for (auto* group : {&u.genuine, &u.skilled})
            for (auto& slot : *group)
                for (auto& [sid, s] : slot)
                    for (auto& w : s.windows)
                        for (auto& x : w) x *= lambda;
    return e;
}

std::array<double, 2> scaling_check(const Dataset& ev, const ModelSet& models, Task t) {
    const auto emb = embed_task(ev, models, t);
    const auto base = build_comparisons(emb);
    const auto scaled = build_comparisons(scale_embeddings(emb, 3.7));
    std::vector<ScoreSet> a, b;
    double drift = 0.0;
    for (const auto& s : enumerate_subsets(t)) {
        a.push_back(build_distributions(base, s));
        b.push_back(build_distributions(scaled, s));
        for (Scenario sc : kScenarios)
            drift = std::max(drift, std::abs(auc(a.back().genuine_values(), a.back().impostor_values(sc)) -
                                             auc(b.back().genuine_values(), b.back().impostor_values(sc))));
    }
    double changed = 0.0;
    for (Scenario sc : kScenarios)
        changed += best_subset_search(a, sc).subset.mask != best_subset_search(b, sc).subset.mask;
    return {drift, changed};
}

std::vector<SeedRun> run_synthetic_studies(double& seconds_device_bias) {
    std::vector<SeedRun> runs;
    seconds_device_bias = 0.0;
    std::vector<ModalityId> all(kModalities.begin(), kModalities.end());
    std::vector<ModalityId> sensors(kSensors.begin(), kSensors.end());
    for (int seed = 1; seed <= kSeeds; ++seed) {
        SeedRun r;
        {
            // Device effects on: every modality, so the same models also feed
            // the fusion comparison.
            const auto [train, ev] = synth_pair(static_cast<std::uint64_t>(seed), true);
            auto t0 = Clock::now();
            ModelSet models = train_all(train, desk_run(static_cast<std::uint64_t>(seed), sensors));
            r.gap_device = sensor_gap(ev, models);
            seconds_device_bias += seconds_since(t0);

            const auto touch = train_all(
                train, desk_run(static_cast<std::uint64_t>(seed),
                                {ModalityId::Keystroke, ModalityId::TextReading, ModalityId::GallerySwiping,
                                 ModalityId::Tapping}));
            models.insert(touch.begin(), touch.end());
            for (Task t : kTasks) {
                r.fusion[t] = fusion_comparison(build_comparisons(embed_task(ev, models, t)));
                if (seed == 1) r.scaled[t] = scaling_check(ev, models, t);
            }
        }
        {
            const auto [train, ev] = synth_pair(static_cast<std::uint64_t>(seed), false);
            auto t0 = Clock::now();
            const ModelSet models = train_all(train, desk_run(static_cast<std::uint64_t>(seed), sensors));
            r.gap_identity = sensor_gap(ev, models);
            seconds_device_bias += seconds_since(t0);
        }
        std::printf("  seed %d: sensor random-skilled gap %.2f (device) / %.2f (identity)\n", seed, r.gap_device,
                    r.gap_identity);
        std::fflush(stdout);
        runs.push_back(std::move(r));
    }
    return runs;
}

Outcome device_bias(const std::vector<SeedRun>& runs, double secs) {
    double on = 0.0, off = 0.0;
    for (const auto& r : runs) {
        on += r.gap_device;
        off += r.gap_identity;
    }
    on /= static_cast<double>(runs.size());
    off /= static_cast<double>(runs.size());
    return {on >= 5.0 && off < 3.0 && secs < 900.0,
            fmt::format("mean gap over {} seeds: {:.2f} with device effects (>= 5), {:.2f} without (< 3); {:.0f}s (< 900s)",
                        runs.size(), on, off, secs)};
}

Outcome fusion_benefit(const std::vector<SeedRun>& runs) {
    bool ok = true;
    std::string detail;
    for (Task t : kTasks) {
        int wins = 0;
        for (const auto& r : runs) wins += r.fusion.at(t)[0] >= r.fusion.at(t)[1];
        ok = ok && wins >= 4;
        detail += fmt::format("{} {}/{}; ", task_key(t), wins, runs.size());
    }
    return {ok, detail + "(best multimodal >= best unimodal, mixed impostors, need >= 4 of 5)"};
}

// ---------------------------------------------------------------------------
// 7. End-to-end determinism

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const char* sub : {"scores", "report"}) {
        if (!fs::exists(root / sub)) continue;
        for (const auto& e : fs::recursive_directory_iterator(root / sub)) {
            if (!e.is_regular_file()) continue;
            std::ifstream in(e.path(), std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            out[fs::relative(e.path(), root).generic_string()] = ss.str();
        }
    }
    return out;
}

Outcome determinism() {
    const fs::path base = fs::temp_directory_path() / "bpb_acceptance_determinism";
    fs::remove_all(base);
    const auto data = (base / "data").string();
    if (run_command({"synth", "-o", data, "--users", "4", "--sensor-samples", "300", "--touch-events", "80", "--seed",
                     "11", "--device-gain", "0.8", "1.25"}) != 0)
        return {false, "synth failed"};
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* run : {"a", "b"}) {
        const int rc = run_command({"all", "-i", data, "-o", (base / run).string(), "--preset", "desk", "--epochs", "3",
                                    "--seed", "5"});
        if (rc != 0) return {false, fmt::format("run {} exited with {}", run, rc)};
        trees.push_back(tree(base / run));
    }
    const bool same = !trees[0].empty() && trees[0] == trees[1];
    std::size_t bytes = 0;
    for (const auto& [k, v] : trees[0]) bytes += v.size();
    fs::remove_all(base);
    return {same, fmt::format("{} score/report files ({} bytes) {}", trees[0].size(), bytes,
                              same ? "byte-identical across two runs" : "differ between runs")};
}

// ---------------------------------------------------------------------------
// 8. Invariance suite

Outcome invariances(const std::vector<SeedRun>& runs) {
    Rng rng(77);
    double z_drift = 0.0, loss_drift = 0.0, auc_drift = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(50);
        for (auto& v : x) v = rng.normal();
        const double scale = std::exp(rng.uniform(-3, 3)), shift = rng.normal(0, 10);
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift;
        const auto zx = zscore(x), zy = zscore(y);
        for (std::size_t i = 0; i < x.size(); ++i) z_drift = std::max(z_drift, std::abs(zx[i] - zy[i]));

        std::array<double, 3> a{}, p{}, n{};
        for (int k = 0; k < 3; ++k) {
            a[k] = rng.normal();
            p[k] = rng.normal();
            n[k] = rng.normal();
        }
        // Rotation about a random axis (Rodrigues) plus translation.
        std::array<double, 3> axis{rng.normal(), rng.normal(), rng.normal()};
        const double norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        for (auto& v : axis) v /= norm;
        const double th = rng.uniform(0, 6.283185307179586);
        const std::array<double, 3> tr{rng.normal(0, 4), rng.normal(0, 4), rng.normal(0, 4)};
        auto move = [&](const std::array<double, 3>& v) {
            const double d = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
            const std::array<double, 3> c{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2],
                                          axis[0] * v[1] - axis[1] * v[0]};
            std::array<double, 3> out{};
            for (int k = 0; k < 3; ++k)
                out[k] = v[k] * std::cos(th) + c[k] * std::sin(th) + axis[k] * d * (1 - std::cos(th)) + tr[k];
            return out;
        };
        loss_drift = std::max(loss_drift, std::abs(triplet_loss(a, p, n, 1.5) - triplet_loss(move(a), move(p), move(n), 1.5)));

        std::vector<double> g(1 + rng.below(15)), imp(1 + rng.below(15));
        for (auto& v : g) v = rng.normal();
        for (auto& v : imp) v = rng.normal(0.5, 1.0);
        auto f = [](double v) { return 2.0 * std::atan(v) + 0.1 * v * v * v; };
        std::vector<double> gf, impf;
        for (double v : g) gf.push_back(f(v));
        for (double v : imp) impf.push_back(f(v));
        auc_drift = std::max(auc_drift, std::abs(auc(g, imp) - auc(gf, impf)));
    }
    double emb_drift = 0.0, argmax_changes = 0.0;
    for (const auto& [task, v] : runs.front().scaled) {
        emb_drift = std::max(emb_drift, v[0]);
        argmax_changes += v[1];
    }
    const bool ok = z_drift < 1e-9 && loss_drift < 1e-9 && auc_drift == 0.0 && emb_drift < 1e-9 &&
                    argmax_changes == 0.0 && !runs.front().scaled.empty();
    return {ok, fmt::format("z-score {:.1e}, triplet rigid motion {:.1e}, AUC monotone {:.1e}, embedding x3.7: AUC "
                            "{:.1e} and {} best-subset changes (trained models, 4 tasks x 3 scenarios)",
                            z_drift, loss_drift, auc_drift, emb_drift, argmax_changes)};
}

} // namespace

int main() {
    setenv("BPB_LOG", "warn", 0);
    spdlog::set_level(spdlog::level::warn);
    const auto total = Clock::now();
    std::printf("acceptance suite: %d synthetic seeds, %d train / %d evaluation users, device gain [%.2g, %.2g], "
                "offset [%.2g, %.2g]\n",
                kSeeds, kTrainUsers, kEvalUsers, kDeviceGain.lo, kDeviceGain.hi, kDeviceOffset.lo, kDeviceOffset.hi);

    auto timed = [](int id, const char* title, const std::function<Outcome()>& fn) {
        const auto t0 = Clock::now();
        const Outcome o = fn();
        report(id, title, o, seconds_since(t0));
    };
    timed(1, "gradient correctness", gradient_check);
    timed(2, "AUC oracle equivalence", auc_oracle);
    timed(3, "Wilcoxon exactness", wilcoxon_exactness);
    timed(4, "protocol counts", protocol_counts);

    const auto t5 = Clock::now();
    double device_secs = 0.0;
    const auto runs = run_synthetic_studies(device_secs);
    const double study_secs = seconds_since(t5);
    report(5, "device-bias reproduction", device_bias(runs, device_secs), device_secs);
    report(6, "fusion benefit", fusion_benefit(runs), study_secs - device_secs);
    timed(7, "end-to-end determinism", determinism);
    timed(8, "invariance suite", [&] { return invariances(runs); });
    std::printf("ACCEPTANCE 9 SKIP  real-data mode  (optional; needs a local converted copy of the public database)\n");

    std::printf("acceptance: %d failure(s), %.0fs total\n", failures, seconds_since(total));
    return failures == 0 ? 0 : 1;
}
