#include "bpb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "bpb/error.hpp"

namespace bpb {

Hyper Hyper::desk() {
    Hyper h;
    h.epochs = 30;
    h.batch_size = 64;
    h.learning_rate = 0.01;
    h.windows_per_session = 2;
    return h;
}

void Hyper::validate() const {
    if (epochs < 1 || batch_size < 1 || windows_per_session < 1) throw ConfigError("epochs, batch size and windows per session must be positive");
    if (!(learning_rate > 0.0) || !(epsilon > 0.0)) throw ConfigError("learning rate and epsilon must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const Hyper& hyper) {
    if (params.size() != grads.size())
        throw DimensionError(fmt::format("adam: {} parameters but {} gradients", params.size(), grads.size()));
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) throw TrainingDiverged(fmt::format("non-finite gradient at parameter {}", i));
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw DimensionError("adam: state shape does not match parameters");
    ++state.t;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.epsilon);
    }
}

std::vector<Triplet> sample_triplets(const WindowPool& pool, std::size_t batch_size, Rng& rng) {
    struct Entry {
        const std::string* user;
        std::vector<std::pair<int, const std::vector<Window>*>> sessions;
    };
    std::vector<Entry> users;
    for (const auto& [user, sessions] : pool) {
        Entry e{&user, {}};
        for (const auto& [sid, windows] : sessions)
            if (!windows.empty()) e.sessions.emplace_back(sid, &windows);
        if (!e.sessions.empty()) users.push_back(std::move(e));
    }
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < users.size(); ++i)
        if (users[i].sessions.size() >= 2) anchors.push_back(i);
    if (users.size() < 2 || anchors.empty())
        throw InsufficientData("triplet sampling needs at least 2 users and a user with 2 sessions");

    std::vector<Triplet> out;
    out.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
        const Entry& a = users[anchors[rng.below(anchors.size())]];
        const std::size_t s1 = rng.below(a.sessions.size());
        std::size_t s2 = rng.below(a.sessions.size() - 1);
        if (s2 >= s1) ++s2;
        std::size_t ni = rng.below(users.size() - 1);
        const std::size_t ai = static_cast<std::size_t>(&a - users.data());
        if (ni >= ai) ++ni;
        const Entry& n = users[ni];
        const auto& ns = n.sessions[rng.below(n.sessions.size())];
        const auto& as = a.sessions[s1];
        const auto& ps = a.sessions[s2];
        Triplet t;
        t.anchor = &(*as.second)[rng.below(as.second->size())];
        t.positive = &(*ps.second)[rng.below(ps.second->size())];
        t.negative = &(*ns.second)[rng.below(ns.second->size())];
        t.user = *a.user;
        t.anchor_session = as.first;
        t.positive_session = ps.first;
        t.negative_user = *n.user;
        t.negative_session = ns.first;
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<SessionFeatures> collect_features(const Dataset& d, ModalityId modality) {
    std::vector<SessionFeatures> out;
    for (const auto& u : d.users) {
        for (const auto& s : u.sessions) {
            if (u.is_impostor(s)) continue;
            for (Task task : kTasks) {
                if (is_touch(modality) && task != task_of(modality)) continue;
                const ChannelSeries* series = s.find(task, modality);
                if (!series || series->empty()) continue;
                SessionFeatures sf{u.id, s.session_id, task, extract_features(*series, modality, u.screen)};
                sf.features.origin = {u.id, s.session_id, task, false};
                out.push_back(std::move(sf));
            }
        }
    }
    return out;
}

WindowPool draw_epoch_pool(std::span<const SessionFeatures> sessions, ModalityId modality,
                           std::size_t windows_per_session, Rng& rng) {
    const std::size_t M = window_length(modality);
    WindowPool pool;
    for (const auto& sf : sessions) {
        auto& bucket = pool[sf.user][sf.session];
        const std::size_t len = sf.features.length();
        for (std::size_t k = 0; k < windows_per_session; ++k) {
            // Full windows whenever the sequence allows it.
            const std::size_t start = len > M ? rng.below(len - M + 1) : 0;
            bucket.push_back(window_at(sf.features, M, start));
        }
    }
    return pool;
}

TrainResult train_modality(const Dataset& train, ModalityId modality, const Hyper& hyper, const ModelSpec& spec,
                           std::uint64_t seed, const EpochCallback& on_epoch) {
    hyper.validate();
    spec.validate();
    if (spec.input_dim != feature_dim(modality))
        throw ConfigError(fmt::format("model input dim {} does not match {} features ({})", spec.input_dim,
                                      modality_name(modality), feature_dim(modality)));
    if (hyper.augment && is_touch(modality)) throw ConfigError("device-noise augmentation applies to sensors only");

    const auto sessions = collect_features(train, modality);
    {
        std::map<std::string, int> per_user;
        for (const auto& s : sessions) per_user[s.user]++;
        if (per_user.size() < 2)
            throw InsufficientData(fmt::format("{}: fewer than 2 training users have data", modality_name(modality)));
    }

    const std::uint64_t mod = static_cast<std::uint64_t>(modality);
    TrainResult result;
    result.params = init_model(spec, Rng::stream({seed, mod, 0x6d6f64656c}).next_u64());
    AdamState adam;
    Rng rng = Rng::stream({seed, mod, 0x747261696e});

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        WindowPool pool = draw_epoch_pool(sessions, modality, hyper.windows_per_session, rng);
        if (hyper.augment) {
            for (auto& [user, by_session] : pool)
                for (auto& [sid, windows] : by_session)
                    for (auto& w : windows)
                        w = augment_device_noise(w, modality, rng, hyper.augment_gain, hyper.augment_offset_std);
        }
        std::size_t total_windows = 0;
        for (const auto& [user, by_session] : pool)
            for (const auto& [sid, windows] : by_session) total_windows += windows.size();
        const std::size_t batches = (total_windows + hyper.batch_size - 1) / hyper.batch_size;

        double loss_sum = 0.0, active_sum = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const auto triplets = sample_triplets(pool, hyper.batch_size, rng);
            std::vector<TripletRef> refs;
            refs.reserve(triplets.size());
            for (const auto& t : triplets) refs.push_back(t.ref());
            std::vector<SequenceMasks> masks;
            masks.reserve(refs.size() * 3);
            for (std::size_t i = 0; i < refs.size() * 3; ++i) masks.push_back(draw_masks(spec, window_length(modality), rng));

            auto lg = loss_and_gradient(result.params, refs, masks, hyper.margin);
            if (!std::isfinite(lg.loss))
                throw TrainingDiverged(fmt::format("{}: loss became non-finite at epoch {}", modality_name(modality), epoch));
            adam_step(result.params.values, lg.gradients.values, adam, hyper);
            update_running_stats(result.params, lg.batch_mean, lg.batch_var);
            loss_sum += lg.loss;
            active_sum += lg.active_fraction;
        }
        EpochLog entry{epoch, loss_sum / static_cast<double>(batches), active_sum / static_cast<double>(batches)};
        result.log.push_back(entry);
        spdlog::debug("{} epoch {} loss {:.5f} active {:.3f}", modality_name(modality), epoch, entry.loss,
                      entry.active_fraction);
        if (on_epoch) on_epoch(entry);
    }
    return result;
}

std::string format_training_log(std::span<const EpochLog> log) {
    std::string out = "epoch,loss,active_triplet_fraction\n";
    for (const auto& e : log) out += fmt::format("{},{},{}\n", e.epoch, e.loss, e.active_fraction);
    return out;
}

Window augment_device_noise(const Window& window, ModalityId modality, Rng& rng, Range gain_range, double offset_std) {
    if (!is_sensor(modality) || window.dim != 12)
        throw std::invalid_argument("device-noise augmentation applies to sensor windows only");
    Window out = window;
    const double gain = rng.uniform(gain_range.lo, gain_range.hi);
    double offset[3];
    for (double& o : offset) o = offset_std * rng.normal();
    // Differencing removes the offset and the DFT is linear, so derivative and
    // spectral columns of g * x + o are g times the originals (the offset only
    // adds to the DC bin, which is left alone). Scaling instead of recomputing
    // keeps the rows whose differences reach past the window end consistent
    // with the session they were cut from.
    const std::size_t T = window.valid_len, D = window.dim;
    for (std::size_t t = 0; t < T; ++t) {
        double* row = out.data.data() + t * D;
        for (std::size_t a = 0; a < 3; ++a) row[a] = gain * row[a] + offset[a];
        for (std::size_t k = 3; k < 12; ++k) row[k] *= gain;
    }
    return out;
}

} // namespace bpb
