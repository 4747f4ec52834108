#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpb/dataset.hpp"
#include "bpb/metrics.hpp"
#include "bpb/modality.hpp"
#include "bpb/net.hpp"

namespace bpb {

using Vec = std::vector<double>;

enum class ScoreKind { Genuine, RandomImpostor, SkilledImpostor };
std::string_view score_kind_name(ScoreKind k) noexcept;
std::optional<ScoreKind> score_kind_from_name(std::string_view name) noexcept;

// Mean Euclidean distance over every (enrol, verify) embedding pair.
// nullopt when either list is empty.
std::optional<double> session_score(std::span<const Vec> enrol, std::span<const Vec> verify);

// A fusion subset of one task: slot 0 is the task's touch modality, slots
// 1..5 the sensors in kSensors order.
inline constexpr std::size_t kSlots = 6;

ModalityId slot_modality(Task task, std::size_t slot) noexcept;

struct Subset {
    Task task = Task::Keystroke;
    std::uint8_t mask = 0;

    std::vector<ModalityId> members() const;
    bool contains(std::size_t slot) const noexcept { return (mask >> slot) & 1u; }
    std::size_t size() const noexcept;
    // Acronyms joined by '+', e.g. "K+Gy+L+M".
    std::string label() const;

    static Subset singleton(Task task, std::size_t slot) { return {task, static_cast<std::uint8_t>(1u << slot)}; }
    bool operator==(const Subset&) const = default;
};

std::optional<Subset> subset_from_label(Task task, std::string_view label);

// All 63 non-empty subsets, ordered by size and then lexicographically by
// slot index.
std::vector<Subset> enumerate_subsets(Task task);

// Unweighted sum of the members' scores. nullopt (with `diagnostic` filled in
// when given) if a member has no score.
std::optional<double> fuse_scores(const std::map<ModalityId, double>& per_modality, const Subset& subset,
                                  std::string* diagnostic = nullptr);

// Embeddings of every window of one session.
struct SessionEmbeddings {
    int session_id = 0;
    std::string performed_by;
    std::vector<Vec> windows;
};

struct UserEmbeddings {
    std::string user;
    // Per slot: owner-performed sessions and sessions performed on this
    // user's device by someone else.
    std::array<std::map<int, SessionEmbeddings>, kSlots> genuine;
    std::array<std::map<int, SessionEmbeddings>, kSlots> skilled;
};

struct TaskEmbeddings {
    Task task = Task::Keystroke;
    std::array<bool, kSlots> available{};  // a model exists for the slot
    std::vector<UserEmbeddings> users;
};

using ModelSet = std::map<ModalityId, ModelParams>;

// Evaluation windows of every session, embedded with the matching model.
// Throws ProtocolError for a Train split.
TaskEmbeddings embed_task(const Dataset& d, const ModelSet& models, Task task);

enum class EnrolMode { Pooled, PerSession };
enum class ImpostorPairing { Rotation, SeededDerangement };

struct ProtocolOptions {
    EnrolMode enrol = EnrolMode::Pooled;
    ImpostorPairing pairing = ImpostorPairing::Rotation;
    std::uint64_t pairing_seed = 0;
    bool znorm = false;  // per-slot z-normalization before fusion
};

// Random-impostor partner of each user index. Rotation: u -> u+1 mod U.
// Throws ProtocolError when U < 2.
std::vector<std::size_t> impostor_partners(std::size_t users, ImpostorPairing pairing, std::uint64_t seed);

// One enrolment-vs-verification comparison with a score per slot.
struct Comparison {
    std::string user;         // enrolled user
    std::string verify_user;  // owner of the verification session's device
    int verify_session = 0;
    ScoreKind kind = ScoreKind::Genuine;
    std::array<std::optional<double>, kSlots> scores;
};

struct ComparisonTable {
    Task task = Task::Keystroke;
    std::array<bool, kSlots> available{};
    std::vector<Comparison> rows;
};

// Throws ProtocolError when U < 2 or a user lacks skilled sessions.
ComparisonTable build_comparisons(const TaskEmbeddings& emb, const ProtocolOptions& options = {});

struct SessionScore {
    double value = 0.0;
    std::string user;
    std::string verify_user;
    int verify_session = 0;
    ScoreKind kind = ScoreKind::Genuine;
};

struct ScoreSet {
    Subset subset;
    std::vector<SessionScore> genuine;
    std::vector<SessionScore> random_impostor;
    std::vector<SessionScore> skilled_impostor;
    std::vector<std::string> excluded_users;  // missing a member modality

    std::vector<double> genuine_values() const;
    // Random, skilled, or their concatenation for Mixed.
    std::vector<double> impostor_values(Scenario scenario) const;
};

// Users with any comparison lacking a member score are left out entirely.
// Throws ProtocolError if a member slot has no model.
ScoreSet build_distributions(const ComparisonTable& table, const Subset& subset);

// Convenience: embed, compare, fuse.
ScoreSet build_distributions(const Dataset& d, const ModelSet& models, const Subset& subset,
                             const ProtocolOptions& options = {});

struct BestSubset {
    Subset subset;
    double auc_percent = 0.0;
    std::size_t examined = 0;
};

// Highest-AUC subset; ties go to the smaller subset, then canonical order.
// Score sets with an empty side are skipped. Throws ProtocolError when
// nothing can be scored.
BestSubset best_subset_search(std::span<const ScoreSet> sets, Scenario scenario);

// CSV `task,subset,user,verify_session,kind,value`.
void write_scores_csv(std::span<const ScoreSet> sets, std::ostream& out);
// Inverse of write_scores_csv (verify_user is not recorded and stays empty).
// Throws ParseError.
std::vector<ScoreSet> read_scores_csv(std::istream& in);

// AUC, ROC and Wilcoxon p for each set and scenario.
std::vector<EvalResult> evaluate_score_sets(std::span<const ScoreSet> sets, Split split);

} // namespace bpb
