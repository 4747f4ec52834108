#include "bpb/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "bpb/error.hpp"
#include "bpb/features.hpp"
#include "bpb/rng.hpp"

namespace bpb {

std::string_view score_kind_name(ScoreKind k) noexcept {
    switch (k) {
    case ScoreKind::Genuine: return "genuine";
    case ScoreKind::RandomImpostor: return "random_impostor";
    case ScoreKind::SkilledImpostor: return "skilled_impostor";
    }
    return "genuine";
}

std::optional<ScoreKind> score_kind_from_name(std::string_view name) noexcept {
    for (ScoreKind k : {ScoreKind::Genuine, ScoreKind::RandomImpostor, ScoreKind::SkilledImpostor})
        if (score_kind_name(k) == name) return k;
    return std::nullopt;
}

std::optional<double> session_score(std::span<const Vec> enrol, std::span<const Vec> verify) {
    if (enrol.empty() || verify.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& e : enrol) {
        for (const auto& v : verify) {
            if (e.size() != v.size()) throw DimensionError("session_score: embedding sizes differ");
            double d2 = 0.0;
            for (std::size_t k = 0; k < e.size(); ++k) d2 += (e[k] - v[k]) * (e[k] - v[k]);
            sum += std::sqrt(d2);
        }
    }
    return sum / static_cast<double>(enrol.size() * verify.size());
}

ModalityId slot_modality(Task task, std::size_t slot) noexcept {
    return slot == 0 ? touch_modality(task) : kSensors[slot - 1];
}

std::vector<ModalityId> Subset::members() const {
    std::vector<ModalityId> out;
    for (std::size_t s = 0; s < kSlots; ++s)
        if (contains(s)) out.push_back(slot_modality(task, s));
    return out;
}

std::size_t Subset::size() const noexcept { return static_cast<std::size_t>(std::popcount(mask)); }

std::string Subset::label() const {
    std::string out;
    for (ModalityId m : members()) {
        if (!out.empty()) out += '+';
        out += modality_acronym(m);
    }
    return out;
}

std::optional<Subset> subset_from_label(Task task, std::string_view label) {
    Subset s{task, 0};
    while (!label.empty()) {
        const auto cut = label.find('+');
        const auto part = label.substr(0, cut);
        bool found = false;
        for (std::size_t slot = 0; slot < kSlots; ++slot) {
            if (modality_acronym(slot_modality(task, slot)) == part) {
                s.mask |= static_cast<std::uint8_t>(1u << slot);
                found = true;
            }
        }
        if (!found) return std::nullopt;
        label = cut == std::string_view::npos ? std::string_view{} : label.substr(cut + 1);
    }
    if (s.mask == 0) return std::nullopt;
    return s;
}

std::vector<Subset> enumerate_subsets(Task task) {
    std::vector<Subset> out;
    for (std::size_t size = 1; size <= kSlots; ++size) {
        // Lexicographic combinations of slot indices.
        std::vector<std::size_t> idx(size);
        std::iota(idx.begin(), idx.end(), 0);
        for (;;) {
            std::uint8_t mask = 0;
            for (auto i : idx) mask |= static_cast<std::uint8_t>(1u << i);
            out.push_back({task, mask});
            std::size_t k = size;
            while (k > 0 && idx[k - 1] == kSlots - size + (k - 1)) --k;
            if (k == 0) break;
            ++idx[k - 1];
            for (std::size_t j = k; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return out;
}

std::optional<double> fuse_scores(const std::map<ModalityId, double>& per_modality, const Subset& subset,
                                  std::string* diagnostic) {
    if (subset.mask == 0) throw std::invalid_argument("fuse_scores: empty subset");
    double sum = 0.0;
    for (ModalityId m : subset.members()) {
        const auto it = per_modality.find(m);
        if (it == per_modality.end()) {
            if (diagnostic)
                *diagnostic = fmt::format("fusion {} skipped: no {} score", subset.label(), modality_name(m));
            return std::nullopt;
        }
        sum += it->second;
    }
    return sum;
}

// ---------------------------------------------------------------------------

TaskEmbeddings embed_task(const Dataset& d, const ModelSet& models, Task task) {
    if (d.split == Split::Train) throw ProtocolError("scoring requires a validation or evaluation split");
    TaskEmbeddings out;
    out.task = task;
    for (std::size_t slot = 0; slot < kSlots; ++slot) out.available[slot] = models.count(slot_modality(task, slot)) != 0;

    for (const auto& user : d.users) {
        UserEmbeddings ue;
        ue.user = user.id;
        for (std::size_t slot = 0; slot < kSlots; ++slot) {
            if (!out.available[slot]) continue;
            const ModalityId m = slot_modality(task, slot);
            const ModelParams& model = models.at(m);
            for (const auto& s : user.sessions) {
                const ChannelSeries* series = s.find(task, m);
                if (!series || series->empty()) continue;
                const auto windows = make_eval_windows(extract_features(*series, m, user.screen));
                SessionEmbeddings se{s.session_id, s.performed_by, {}};
                for (auto& e : embed_all(model, windows)) se.windows.push_back(std::move(e.values));
                auto& target = user.is_impostor(s) ? ue.skilled[slot] : ue.genuine[slot];
                target[s.session_id] = std::move(se);
            }
        }
        out.users.push_back(std::move(ue));
    }
    return out;
}

std::vector<std::size_t> impostor_partners(std::size_t users, ImpostorPairing pairing, std::uint64_t seed) {
    if (users < 2) throw ProtocolError("random-impostor pairing needs at least two users");
    std::vector<std::size_t> partner(users);
    if (pairing == ImpostorPairing::Rotation) {
        for (std::size_t u = 0; u < users; ++u) partner[u] = (u + 1) % users;
        return partner;
    }
    // Shuffle the user order, then pair each user with its successor in the
    // shuffled cycle: a derangement for any U >= 2.
    std::vector<std::size_t> order(users);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream({seed, 0x7061697273ULL});
    for (std::size_t i = users - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t i = 0; i < users; ++i) partner[order[i]] = order[(i + 1) % users];
    return partner;
}

namespace {

const std::vector<Vec>* windows_of(const std::map<int, SessionEmbeddings>& m, int session) {
    const auto it = m.find(session);
    return it == m.end() ? nullptr : &it->second.windows;
}

std::optional<double> enrol_score(const std::map<int, SessionEmbeddings>& enrol_sessions, const std::vector<Vec>* verify,
                                  EnrolMode mode) {
    if (!verify) return std::nullopt;
    const auto* e1 = windows_of(enrol_sessions, 1);
    const auto* e2 = windows_of(enrol_sessions, 2);
    if (mode == EnrolMode::PerSession) {
        if (!e1 || !e2) return std::nullopt;
        const auto a = session_score(*e1, *verify), b = session_score(*e2, *verify);
        if (!a || !b) return std::nullopt;
        return (*a + *b) / 2.0;
    }
    if (!e1 || !e2) return std::nullopt;
    std::vector<Vec> pooled(e1->begin(), e1->end());
    pooled.insert(pooled.end(), e2->begin(), e2->end());
    return session_score(pooled, *verify);
}

void znormalize(ComparisonTable& table) {
    for (std::size_t slot = 0; slot < kSlots; ++slot) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (const auto& r : table.rows)
            if (r.scores[slot]) {
                sum += *r.scores[slot];
                ++n;
            }
        if (n == 0) continue;
        const double mean = sum / static_cast<double>(n);
        for (const auto& r : table.rows)
            if (r.scores[slot]) sq += (*r.scores[slot] - mean) * (*r.scores[slot] - mean);
        const double sd = std::sqrt(sq / static_cast<double>(n));
        for (auto& r : table.rows)
            if (r.scores[slot]) r.scores[slot] = sd > 1e-12 ? (*r.scores[slot] - mean) / sd : 0.0;
    }
}

} // namespace

ComparisonTable build_comparisons(const TaskEmbeddings& emb, const ProtocolOptions& options) {
    const std::size_t U = emb.users.size();
    const auto partner = impostor_partners(U, options.pairing, options.pairing_seed);
    ComparisonTable table;
    table.task = emb.task;
    table.available = emb.available;

    for (std::size_t u = 0; u < U; ++u) {
        const auto& me = emb.users[u];
        const auto& other = emb.users[partner[u]];

        // Verification sessions of each kind; session ids are taken from the
        // first available slot so that a missing modality does not change
        // which comparisons exist.
        std::vector<int> skilled_ids;
        for (std::size_t slot = 0; slot < kSlots && skilled_ids.empty(); ++slot)
            for (const auto& [sid, _] : me.skilled[slot]) skilled_ids.push_back(sid);
        const bool any_model = std::any_of(emb.available.begin(), emb.available.end(), [](bool b) { return b; });
        if (any_model && skilled_ids.empty())
            throw ProtocolError(fmt::format("user {} has no skilled-impostor sessions", me.user));

        auto add = [&](ScoreKind kind, const UserEmbeddings& verify_owner, int session,
                       const std::array<std::map<int, SessionEmbeddings>, kSlots>& source) {
            Comparison c{me.user, verify_owner.user, session, kind, {}};
            for (std::size_t slot = 0; slot < kSlots; ++slot)
                if (emb.available[slot])
                    c.scores[slot] = enrol_score(me.genuine[slot], windows_of(source[slot], session), options.enrol);
            table.rows.push_back(std::move(c));
        };
        for (int s : {3, 4}) add(ScoreKind::Genuine, me, s, me.genuine);
        for (int s : {3, 4}) add(ScoreKind::RandomImpostor, other, s, other.genuine);
        for (int s : skilled_ids) add(ScoreKind::SkilledImpostor, me, s, me.skilled);
    }
    if (options.znorm) znormalize(table);
    return table;
}

std::vector<double> ScoreSet::genuine_values() const {
    std::vector<double> v;
    for (const auto& s : genuine) v.push_back(s.value);
    return v;
}

std::vector<double> ScoreSet::impostor_values(Scenario scenario) const {
    std::vector<double> v;
    if (scenario != Scenario::Skilled)
        for (const auto& s : random_impostor) v.push_back(s.value);
    if (scenario != Scenario::Random)
        for (const auto& s : skilled_impostor) v.push_back(s.value);
    return v;
}

ScoreSet build_distributions(const ComparisonTable& table, const Subset& subset) {
    if (subset.task != table.task) throw ProtocolError("subset task does not match the comparison table");
    for (std::size_t slot = 0; slot < kSlots; ++slot)
        if (subset.contains(slot) && !table.available[slot])
            throw ProtocolError(
                fmt::format("no model for {}", modality_name(slot_modality(table.task, slot))));

    ScoreSet out;
    out.subset = subset;
    std::map<std::string, bool> complete;
    for (const auto& r : table.rows) {
        bool ok = true;
        for (std::size_t slot = 0; slot < kSlots; ++slot)
            if (subset.contains(slot) && !r.scores[slot]) ok = false;
        auto [it, inserted] = complete.emplace(r.user, ok);
        if (!inserted) it->second = it->second && ok;
    }
    for (const auto& r : table.rows) {
        if (!complete[r.user]) continue;
        std::map<ModalityId, double> per;
        for (std::size_t slot = 0; slot < kSlots; ++slot)
            if (subset.contains(slot)) per[slot_modality(table.task, slot)] = *r.scores[slot];
        SessionScore s{*fuse_scores(per, subset), r.user, r.verify_user, r.verify_session, r.kind};
        switch (r.kind) {
        case ScoreKind::Genuine: out.genuine.push_back(std::move(s)); break;
        case ScoreKind::RandomImpostor: out.random_impostor.push_back(std::move(s)); break;
        case ScoreKind::SkilledImpostor: out.skilled_impostor.push_back(std::move(s)); break;
        }
    }
    for (const auto& [user, ok] : complete)
        if (!ok) out.excluded_users.push_back(user);
    return out;
}

ScoreSet build_distributions(const Dataset& d, const ModelSet& models, const Subset& subset,
                             const ProtocolOptions& options) {
    return build_distributions(build_comparisons(embed_task(d, models, subset.task), options), subset);
}

namespace {

bool canonical_before(const Subset& a, const Subset& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (std::size_t slot = 0; slot < kSlots; ++slot)
        if (a.contains(slot) != b.contains(slot)) return a.contains(slot);
    return false;
}

} // namespace

BestSubset best_subset_search(std::span<const ScoreSet> sets, Scenario scenario) {
    BestSubset best;
    bool found = false;
    for (const auto& s : sets) {
        const auto g = s.genuine_values();
        const auto i = s.impostor_values(scenario);
        if (g.empty() || i.empty()) continue;
        ++best.examined;
        const double a = auc(g, i);
        if (!found || a > best.auc_percent || (a == best.auc_percent && canonical_before(s.subset, best.subset))) {
            best.subset = s.subset;
            best.auc_percent = a;
            found = true;
        }
    }
    if (!found) throw ProtocolError("best_subset_search: no scorable subset");
    return best;
}

void write_scores_csv(std::span<const ScoreSet> sets, std::ostream& out) {
    out << "task,subset,user,verify_session,kind,value\n";
    for (const auto& set : sets) {
        for (const auto* list : {&set.genuine, &set.random_impostor, &set.skilled_impostor})
            for (const auto& s : *list)
                out << task_key(set.subset.task) << ',' << set.subset.label() << ',' << s.user << ','
                    << s.verify_session << ',' << score_kind_name(s.kind) << ',' << fmt::format("{:.17g}", s.value)
                    << '\n';
    }
}

std::vector<ScoreSet> read_scores_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || line != "task,subset,user,verify_session,kind,value")
        throw ParseError("scores file: unexpected header", 1);
    std::vector<ScoreSet> out;
    std::map<std::pair<Task, std::uint8_t>, std::size_t> index;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 6) throw ParseError("scores file: expected 6 fields", lineno);
        const auto task = task_from_key(f[0]);
        if (!task) throw ParseError("scores file: unknown task '" + f[0] + "'", lineno);
        const auto subset = subset_from_label(*task, f[1]);
        if (!subset) throw ParseError("scores file: unknown subset '" + f[1] + "'", lineno);
        const auto kind = score_kind_from_name(f[4]);
        if (!kind) throw ParseError("scores file: unknown kind '" + f[4] + "'", lineno);
        SessionScore s;
        try {
            s.verify_session = std::stoi(f[3]);
            s.value = std::stod(f[5]);
        } catch (const std::exception&) {
            throw ParseError("scores file: bad number", lineno);
        }
        s.user = f[2];
        s.kind = *kind;
        const auto key = std::make_pair(*task, subset->mask);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, out.size()).first;
            out.push_back(ScoreSet{*subset, {}, {}, {}, {}});
        }
        auto& set = out[it->second];
        switch (s.kind) {
        case ScoreKind::Genuine: set.genuine.push_back(std::move(s)); break;
        case ScoreKind::RandomImpostor: set.random_impostor.push_back(std::move(s)); break;
        case ScoreKind::SkilledImpostor: set.skilled_impostor.push_back(std::move(s)); break;
        }
    }
    return out;
}

std::vector<EvalResult> evaluate_score_sets(std::span<const ScoreSet> sets, Split split) {
    std::vector<EvalResult> out;
    for (const auto& set : sets) {
        const auto g = set.genuine_values();
        if (g.empty()) continue;
        for (Scenario sc : kScenarios) {
            const auto i = set.impostor_values(sc);
            if (i.empty()) continue;
            EvalResult r;
            r.task = set.subset.task;
            r.subset_mask = set.subset.mask;
            r.subset_label = set.subset.label();
            r.scenario = sc;
            r.split = split;
            r.roc = roc_curve(g, i);
            r.auc_percent = r.roc.auc_percent;
            r.wilcoxon_p = wilcoxon_rank_sum(g, i).p_value;
            r.genuine_count = g.size();
            r.impostor_count = i.size();
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace bpb
