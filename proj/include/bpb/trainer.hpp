#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bpb/dataset.hpp"
#include "bpb/features.hpp"
#include "bpb/net.hpp"
#include "bpb/rng.hpp"

namespace bpb {

struct Hyper {
    int epochs = 150;
    std::size_t batch_size = 512;
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double margin = 1.5;
    // Random-start windows drawn per (user, session[, task]) every epoch.
    std::size_t windows_per_session = 4;

    bool augment = false;
    Range augment_gain{0.98, 1.02};
    double augment_offset_std = 0.02;

    static Hyper canonical() { return {}; }
    static Hyper desk();

    void validate() const;  // throws ConfigError
    bool operator==(const Hyper&) const = default;
};

struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;
};

// Bias-corrected Adam update in place. Throws TrainingDiverged on a
// non-finite gradient (parameters are left untouched).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const Hyper& hyper);

// user -> session -> windows.
using WindowPool = std::map<std::string, std::map<int, std::vector<Window>>>;

struct Triplet {
    const Window* anchor;
    const Window* positive;
    const Window* negative;
    std::string user;           // anchor/positive user
    int anchor_session = 0;
    int positive_session = 0;
    std::string negative_user;
    int negative_session = 0;

    TripletRef ref() const { return {anchor, positive, negative}; }
};

// Uniform over (anchor user, ordered session pair, negative user); windows
// uniform inside each chosen session. Throws InsufficientData unless at least
// two users exist and some user has two sessions.
std::vector<Triplet> sample_triplets(const WindowPool& pool, std::size_t batch_size, Rng& rng);

// Feature sequences of one modality for every genuine session of every user.
// Sensor modalities contribute one sequence per task.
struct SessionFeatures {
    std::string user;
    int session = 0;
    Task task = Task::Keystroke;
    FeatureSequence features;
};
std::vector<SessionFeatures> collect_features(const Dataset& d, ModalityId modality);

// One epoch's random-start window pool. Sensor modalities draw the same
// number of windows from each task.
WindowPool draw_epoch_pool(std::span<const SessionFeatures> sessions, ModalityId modality,
                           std::size_t windows_per_session, Rng& rng);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double active_fraction = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Throws InsufficientData when fewer than two train users have the modality.
TrainResult train_modality(const Dataset& train, ModalityId modality, const Hyper& hyper, const ModelSpec& spec,
                           std::uint64_t seed, const EpochCallback& on_epoch = {});

// CSV `epoch,loss,active_triplet_fraction`.
std::string format_training_log(std::span<const EpochLog> log);

// Device-noise obfuscation of a sensor window: one gain per window and a
// Gaussian offset per axis on the raw columns, with derivative and spectral
// columns updated to match.
// Throws std::invalid_argument for touch windows.
Window augment_device_noise(const Window& window, ModalityId modality, Rng& rng, Range gain_range, double offset_std);

} // namespace bpb
