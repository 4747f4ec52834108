#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpb/dataset.hpp"
#include "bpb/metrics.hpp"
#include "bpb/net.hpp"
#include "bpb/protocol.hpp"
#include "bpb/trainer.hpp"

namespace bpb {

inline constexpr std::string_view kToolVersion = "1.0.0";

enum class Preset { Canonical, Desk };
std::string_view preset_name(Preset p) noexcept;

// Effective settings of one run after preset, config file and flags have
// been merged.
struct RunConfig {
    Preset preset = Preset::Canonical;
    std::uint64_t seed = 1;
    std::filesystem::path input;
    std::filesystem::path output;
    std::vector<ModalityId> modalities;  // trained/scored modalities
    std::vector<Task> tasks;             // evaluated tasks
    Hyper hyper;
    ModelSpec model;                     // input_dim is set per modality
    ProtocolOptions protocol;

    ModelSpec spec_for(ModalityId m) const;
    std::uint64_t training_seed(ModalityId m) const;
};

RunConfig preset_config(Preset p);

// Plain `key = value` text accepted by --config.
std::string format_config(const RunConfig& c);

// Dataset files inside an input directory.
std::filesystem::path split_file(const std::filesystem::path& dir, Split s);

// Artifacts inside an output directory.
std::filesystem::path checkpoint_path(const std::filesystem::path& out, ModalityId m);
std::filesystem::path training_log_path(const std::filesystem::path& out, ModalityId m);
std::filesystem::path scores_path(const std::filesystem::path& out, Split s);
std::filesystem::path results_path(const std::filesystem::path& out, Split s);
std::filesystem::path report_dir(const std::filesystem::path& out);

// Trains every configured modality and writes checkpoints and logs.
ModelSet train_all(const Dataset& train, const RunConfig& c);

// Loads the checkpoints every configured modality needs. Throws
// MissingArtifact naming the first absent file.
ModelSet load_models(const RunConfig& c);

// Score sets of all 63 subsets for each configured task. Subsets with a
// member that has no model are skipped.
std::vector<ScoreSet> score_dataset(const Dataset& d, const ModelSet& models, const RunConfig& c);

// Command-line entry point. Exit codes: 0 success, 1 internal error,
// 2 usage, 3 missing artifact, 4 configuration conflict, 5 data or schema
// error, 6 training diverged.
int run_command(int argc, const char* const* argv);
int run_command(const std::vector<std::string>& args);

} // namespace bpb
