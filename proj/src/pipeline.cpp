#include "bpb/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "bpb/error.hpp"
#include "bpb/features.hpp"
#include "bpb/rng.hpp"

namespace bpb {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view preset_name(Preset p) noexcept { return p == Preset::Canonical ? "canonical" : "desk"; }

ModelSpec RunConfig::spec_for(ModalityId m) const {
    ModelSpec s = model;
    s.input_dim = feature_dim(m);
    return s;
}

std::uint64_t RunConfig::training_seed(ModalityId m) const {
    return Rng::stream({seed, 0x747261696eULL, static_cast<std::uint64_t>(m)}).next_u64();
}

RunConfig preset_config(Preset p) {
    RunConfig c;
    c.preset = p;
    c.modalities.assign(kModalities.begin(), kModalities.end());
    c.tasks.assign(kTasks.begin(), kTasks.end());
    c.hyper = p == Preset::Canonical ? Hyper::canonical() : Hyper::desk();
    c.model = p == Preset::Canonical ? ModelSpec::canonical(ModalityId::Accelerometer)
                                     : ModelSpec::desk(ModalityId::Accelerometer);
    return c;
}

namespace {

std::string join_names(const std::vector<ModalityId>& ms) {
    std::string s;
    for (auto m : ms) s += (s.empty() ? "" : ",") + std::string(modality_name(m));
    return s;
}

std::string join_tasks(const std::vector<Task>& ts) {
    std::string s;
    for (auto t : ts) s += (s.empty() ? "" : ",") + std::string(task_key(t));
    return s;
}

std::string real(double v) { return fmt::format("{}", v); }

} // namespace

std::string format_config(const RunConfig& c) {
    std::string s;
    auto kv = [&](std::string_view k, const std::string& v) { s += fmt::format("{} = {}\n", k, v); };
    kv("preset", std::string(preset_name(c.preset)));
    kv("seed", std::to_string(c.seed));
    kv("input", c.input.generic_string());
    kv("modalities", join_names(c.modalities));
    kv("tasks", join_tasks(c.tasks));
    kv("epochs", std::to_string(c.hyper.epochs));
    kv("batch_size", std::to_string(c.hyper.batch_size));
    kv("learning_rate", real(c.hyper.learning_rate));
    kv("beta1", real(c.hyper.beta1));
    kv("beta2", real(c.hyper.beta2));
    kv("epsilon", real(c.hyper.epsilon));
    kv("margin", real(c.hyper.margin));
    kv("windows_per_session", std::to_string(c.hyper.windows_per_session));
    kv("augment", c.hyper.augment ? "true" : "false");
    kv("hidden", std::to_string(c.model.hidden));
    kv("layers", std::to_string(c.model.layers));
    kv("embedding_dim", std::to_string(c.model.embedding_dim));
    kv("dropout", real(c.model.dropout));
    kv("recurrent_dropout", real(c.model.recurrent_dropout));
    kv("znorm", c.protocol.znorm ? "true" : "false");
    kv("enrol", c.protocol.enrol == EnrolMode::Pooled ? "pooled" : "per_session");
    kv("pairing", c.protocol.pairing == ImpostorPairing::Rotation ? "rotation" : "derangement");
    return s;
}

fs::path split_file(const fs::path& dir, Split s) { return dir / fmt::format("{}.json", split_name(s)); }
fs::path checkpoint_path(const fs::path& out, ModalityId m) {
    return out / "models" / fmt::format("{}.json", modality_name(m));
}
fs::path training_log_path(const fs::path& out, ModalityId m) {
    return out / "logs" / fmt::format("{}.csv", modality_name(m));
}
fs::path scores_path(const fs::path& out, Split s) { return out / "scores" / fmt::format("{}.csv", split_name(s)); }
fs::path results_path(const fs::path& out, Split s) { return out / "results" / fmt::format("{}.csv", split_name(s)); }
fs::path report_dir(const fs::path& out) { return out / "report"; }

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", p.string()));
    out << text;
    if (!out) throw Error(fmt::format("write failed for '{}'", p.string()));
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingArtifact(fmt::format("missing file '{}'", p.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool is_set(const std::vector<ModalityId>& ms, ModalityId m) {
    return std::find(ms.begin(), ms.end(), m) != ms.end();
}

} // namespace

ModelSet train_all(const Dataset& train, const RunConfig& c) {
    if (train.split != Split::Train) throw ProtocolError("training requires the train split");
    ModelSet models;
    for (ModalityId m : c.modalities) {
        spdlog::info("training {} ({} epochs)", modality_name(m), c.hyper.epochs);
        auto result = train_modality(train, m, c.hyper, c.spec_for(m), c.training_seed(m), [&](const EpochLog& e) {
            spdlog::debug("{} epoch {} loss {:.4f} active {:.3f}", modality_name(m), e.epoch, e.loss, e.active_fraction);
        });
        if (!c.output.empty()) {
            const auto ckpt = checkpoint_path(c.output, m);
            fs::create_directories(ckpt.parent_path());
            save_checkpoint(result.params, m, ckpt);
            write_text(training_log_path(c.output, m), format_training_log(result.log));
        }
        models.emplace(m, std::move(result.params));
    }
    return models;
}

ModelSet load_models(const RunConfig& c) {
    ModelSet models;
    for (ModalityId m : c.modalities) {
        const auto p = checkpoint_path(c.output, m);
        if (!fs::exists(p)) throw MissingArtifact(fmt::format("missing checkpoint '{}'; run `bpb train` first", p.string()));
        models.emplace(m, load_checkpoint(p, c.spec_for(m)));
    }
    return models;
}

std::vector<ScoreSet> score_dataset(const Dataset& d, const ModelSet& models, const RunConfig& c) {
    std::vector<ScoreSet> out;
    for (Task task : c.tasks) {
        const auto table = build_comparisons(embed_task(d, models, task), c.protocol);
        for (const Subset& s : enumerate_subsets(task)) {
            bool ok = true;
            for (std::size_t slot = 0; slot < kSlots; ++slot)
                if (s.contains(slot) && !table.available[slot]) ok = false;
            if (!ok) continue;
            auto set = build_distributions(table, s);
            for (const auto& u : set.excluded_users)
                spdlog::warn("{} {}: user {} excluded (missing modality)", task_key(task), s.label(), u);
            out.push_back(std::move(set));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Options {
    std::string preset = "canonical";
    std::optional<std::uint64_t> seed;
    std::string input, output;
    std::vector<std::string> modalities, tasks;
    std::optional<int> epochs;
    std::optional<std::size_t> batch_size, windows_per_session, hidden, layers, embedding_dim;
    std::optional<double> learning_rate, beta1, beta2, epsilon, margin, dropout, recurrent_dropout;
    std::optional<bool> augment, znorm;
    std::optional<std::string> enrol, pairing;
    bool force = false;

    // synth
    int users = 8;
    int val_users = -1, eval_users = -1;
    std::optional<int> sensor_samples, touch_events;
    std::vector<double> device_gain, device_offset;
    std::optional<double> noise_std;
};

struct Pinned {
    const char* name;
    bool set;
};

RunConfig resolve(const Options& o, CLI::App& app) {
    Preset preset;
    if (o.preset == "canonical") preset = Preset::Canonical;
    else if (o.preset == "desk") preset = Preset::Desk;
    else throw ConfigError(fmt::format("unknown preset '{}' (canonical or desk)", o.preset));
    RunConfig c = preset_config(preset);

    if (preset == Preset::Canonical && !o.force) {
        const Pinned pinned[] = {{"epochs", o.epochs.has_value()},
                                 {"batch_size", o.batch_size.has_value()},
                                 {"learning_rate", o.learning_rate.has_value()},
                                 {"beta1", o.beta1.has_value()},
                                 {"beta2", o.beta2.has_value()},
                                 {"epsilon", o.epsilon.has_value()},
                                 {"margin", o.margin.has_value()},
                                 {"hidden", o.hidden.has_value()},
                                 {"embedding_dim", o.embedding_dim.has_value()}};
        for (const auto& p : pinned)
            if (p.set)
                throw ConfigError(fmt::format("the canonical preset pins '{}'; pass --force to override it", p.name));
    }
    (void)app;

    if (o.seed) c.seed = *o.seed;
    c.input = o.input;
    c.output = o.output;
    if (!o.modalities.empty()) {
        c.modalities.clear();
        for (const auto& name : o.modalities) {
            const auto m = modality_from_name(name);
            if (!m) throw ConfigError(fmt::format("unknown modality '{}'", name));
            if (!is_set(c.modalities, *m)) c.modalities.push_back(*m);
        }
    }
    if (!o.tasks.empty()) {
        c.tasks.clear();
        for (const auto& name : o.tasks) {
            const auto t = task_from_key(name);
            if (!t) throw ConfigError(fmt::format("unknown task '{}'", name));
            if (std::find(c.tasks.begin(), c.tasks.end(), *t) == c.tasks.end()) c.tasks.push_back(*t);
        }
    }
    if (o.epochs) c.hyper.epochs = *o.epochs;
    if (o.batch_size) c.hyper.batch_size = *o.batch_size;
    if (o.learning_rate) c.hyper.learning_rate = *o.learning_rate;
    if (o.beta1) c.hyper.beta1 = *o.beta1;
    if (o.beta2) c.hyper.beta2 = *o.beta2;
    if (o.epsilon) c.hyper.epsilon = *o.epsilon;
    if (o.margin) c.hyper.margin = *o.margin;
    if (o.windows_per_session) c.hyper.windows_per_session = *o.windows_per_session;
    if (o.augment) c.hyper.augment = *o.augment;
    if (o.hidden) c.model.hidden = *o.hidden;
    if (o.layers) c.model.layers = *o.layers;
    if (o.embedding_dim) c.model.embedding_dim = *o.embedding_dim;
    if (o.dropout) c.model.dropout = *o.dropout;
    if (o.recurrent_dropout) c.model.recurrent_dropout = *o.recurrent_dropout;
    if (o.znorm) c.protocol.znorm = *o.znorm;
    if (o.enrol) {
        if (*o.enrol == "pooled") c.protocol.enrol = EnrolMode::Pooled;
        else if (*o.enrol == "per_session") c.protocol.enrol = EnrolMode::PerSession;
        else throw ConfigError(fmt::format("unknown enrol mode '{}' (pooled or per_session)", *o.enrol));
    }
    if (o.pairing) {
        if (*o.pairing == "rotation") c.protocol.pairing = ImpostorPairing::Rotation;
        else if (*o.pairing == "derangement") c.protocol.pairing = ImpostorPairing::SeededDerangement;
        else throw ConfigError(fmt::format("unknown pairing '{}' (rotation or derangement)", *o.pairing));
    }
    c.protocol.pairing_seed = c.seed;
    c.hyper.validate();
    c.model.validate();
    return c;
}

class Manifest {
public:
    Manifest(std::string command, const RunConfig& c) : command_(std::move(command)), config_(c) {}

    void input(const fs::path& p, const std::string& bytes) {
        inputs_[p.filename().string()] = fmt::format("fnv1a64:{:016x}", fnv1a(bytes));
    }
    void extra(const std::string& key, ojson value) { extra_[key] = std::move(value); }

    void write() const {
        if (config_.output.empty()) return;
        ojson j;
        j["tool"] = "bpb";
        j["version"] = kToolVersion;
        j["command"] = command_;
        ojson cfg = ojson::object();
        std::istringstream lines(format_config(config_));
        for (std::string line; std::getline(lines, line);) {
            const auto eq = line.find(" = ");
            cfg[line.substr(0, eq)] = line.substr(eq + 3);
        }
        j["config"] = cfg;
        ojson seeds = ojson::object();
        for (ModalityId m : config_.modalities) seeds[std::string(modality_name(m))] = config_.training_seed(m);
        j["training_seeds"] = seeds;
        ojson in = ojson::object();
        for (const auto& [k, v] : inputs_) in[k] = v;
        j["inputs"] = in;
        for (const auto& [k, v] : extra_) j[k] = v;
        write_text(config_.output / "manifest.json", j.dump(2) + "\n");
        write_text(config_.output / "run.cfg", format_config(config_));
    }

private:
    std::string command_;
    RunConfig config_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, ojson> extra_;
};

void require_output(const RunConfig& c, std::string_view cmd) {
    if (c.output.empty()) throw ConfigError(fmt::format("`{}` needs an output directory (-o)", cmd));
}

void require_input(const RunConfig& c, std::string_view cmd) {
    if (c.input.empty()) throw ConfigError(fmt::format("`{}` needs an input directory (-i)", cmd));
}

std::optional<Dataset> load_split(const RunConfig& c, Split s, Manifest& manifest, bool required) {
    const fs::path p = split_file(c.input, s);
    if (!fs::exists(p)) {
        if (required) throw MissingArtifact(fmt::format("missing dataset '{}'", p.string()));
        return std::nullopt;
    }
    const std::string text = read_text(p);
    manifest.input(p, text);
    Dataset d = parse_dataset(text);
    if (d.split != s)
        throw SchemaError(fmt::format("'{}' holds the {} split", p.string(), split_name(d.split)));
    for (const auto& path : d.unknown_modalities) spdlog::warn("{}: ignoring unknown series '{}'", p.string(), path);
    return d;
}

std::vector<Dataset> load_test_splits(const RunConfig& c, Manifest& manifest) {
    std::vector<Dataset> out;
    for (Split s : {Split::Validation, Split::Evaluation})
        if (auto d = load_split(c, s, manifest, false)) out.push_back(std::move(*d));
    if (out.empty())
        throw MissingArtifact(fmt::format("no validation.json or evaluation.json in '{}'", c.input.string()));
    return out;
}

int cmd_synth(const Options& o, const RunConfig& c) {
    require_output(c, "synth");
    SynthConfig base;
    base.seed = c.seed;
    if (o.sensor_samples) base.sensor_samples = *o.sensor_samples;
    if (o.touch_events) base.touch_events = *o.touch_events;
    if (o.noise_std) base.noise_std = *o.noise_std;
    if (!o.device_gain.empty()) base.device_gain = {o.device_gain.at(0), o.device_gain.at(1)};
    if (!o.device_offset.empty()) base.device_offset = {o.device_offset.at(0), o.device_offset.at(1)};

    const int counts[] = {o.users, o.val_users < 0 ? o.users : o.val_users, o.eval_users < 0 ? o.users : o.eval_users};
    const Split splits[] = {Split::Train, Split::Validation, Split::Evaluation};
    ojson configs = ojson::array();
    int first = 0;
    for (int k = 0; k < 3; ++k) {
        if (counts[k] == 0) continue;
        SynthConfig sc = base;
        sc.split = splits[k];
        sc.n_users = counts[k];
        sc.first_user = first;
        first += counts[k];
        sc.validate();
        write_text(split_file(c.output, sc.split), serialize_dataset(generate_synthetic(sc)) + "\n");
        configs.push_back(ojson::parse(serialize_synth_config(sc)));
        spdlog::info("wrote {} users to {}", sc.n_users, split_file(c.output, sc.split).string());
    }
    write_text(c.output / "synth_manifest.json", configs.dump(2) + "\n");
    Manifest m("synth", c);
    m.extra("synth", configs);
    m.write();
    return 0;
}

std::string run_validation(const RunConfig& c, Manifest& manifest) {
    std::string text;
    bool any = false;
    for (Split s : {Split::Train, Split::Validation, Split::Evaluation}) {
        auto d = load_split(c, s, manifest, false);
        if (!d) continue;
        any = true;
        const auto report = validate_dataset(*d);
        text += fmt::format("{}: {} users, {} findings\n", split_name(s), d->users.size(), report.findings.size());
        for (const auto& f : report.findings) text += "  " + f.describe() + "\n";
    }
    if (!any) throw MissingArtifact(fmt::format("no dataset files in '{}'", c.input.string()));
    return text;
}

int cmd_validate(const RunConfig& c) {
    require_input(c, "validate");
    Manifest m("validate", c);
    const std::string text = run_validation(c, m);
    std::cout << text;
    if (!c.output.empty()) {
        write_text(c.output / "validation.txt", text);
        m.write();
    }
    return 0;
}

int cmd_preprocess(const RunConfig& c) {
    require_input(c, "preprocess");
    require_output(c, "preprocess");
    Manifest m("preprocess", c);
    for (Split s : {Split::Train, Split::Validation, Split::Evaluation}) {
        auto d = load_split(c, s, m, false);
        if (!d) continue;
        for (const auto& user : d->users)
            for (const auto& session : user.sessions)
                for (Task task : c.tasks)
                    for (ModalityId mod : c.modalities) {
                        if (is_touch(mod) && task_of(mod) != task) continue;
                        const ChannelSeries* series = session.find(task, mod);
                        if (!series || series->empty()) continue;
                        const auto fs_ = extract_features(*series, mod, user.screen);
                        std::ostringstream csv;
                        write_feature_csv(fs_, csv);
                        const std::string who = user.is_impostor(session) ? "impostor_" : "";
                        write_text(c.output / "features" / std::string(split_name(s)) / user.id /
                                       fmt::format("{}s{}_{}_{}.csv", who, session.session_id, task_key(task),
                                                   modality_name(mod)),
                                   csv.str());
                    }
    }
    m.write();
    return 0;
}

int cmd_train(const RunConfig& c, Manifest& m) {
    require_input(c, "train");
    require_output(c, "train");
    const auto train = load_split(c, Split::Train, m, true);
    train_all(*train, c);
    return 0;
}

void write_scores(const RunConfig& c, const ModelSet& models, const std::vector<Dataset>& splits, bool results) {
    for (const auto& d : splits) {
        spdlog::info("scoring the {} split", split_name(d.split));
        const auto sets = score_dataset(d, models, c);
        std::ostringstream csv;
        write_scores_csv(sets, csv);
        write_text(scores_path(c.output, d.split), csv.str());
        if (!results) continue;
        std::string r = "task,subset,scenario,auc,wilcoxon_p,genuine,impostor\n";
        for (const auto& e : evaluate_score_sets(sets, d.split))
            r += fmt::format("{},{},{},{:.6f},{:.6e},{},{}\n", task_key(e.task), e.subset_label,
                             scenario_name(e.scenario), e.auc_percent, e.wilcoxon_p, e.genuine_count,
                             e.impostor_count);
        write_text(results_path(c.output, d.split), r);
    }
}

int cmd_score(const RunConfig& c, Manifest& m, bool results) {
    require_input(c, results ? "evaluate" : "score");
    require_output(c, results ? "evaluate" : "score");
    const auto models = load_models(c);
    const auto splits = load_test_splits(c, m);
    write_scores(c, models, splits, results);
    return 0;
}

int cmd_report(const RunConfig& c) {
    require_output(c, "report");
    std::vector<EvalResult> results;
    for (Split s : {Split::Validation, Split::Evaluation}) {
        const auto p = scores_path(c.output, s);
        if (!fs::exists(p)) continue;
        std::ifstream in(p, std::ios::binary);
        const auto sets = read_scores_csv(in);
        auto r = evaluate_score_sets(sets, s);
        results.insert(results.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    if (results.empty())
        throw MissingArtifact(fmt::format("missing scores in '{}'; run `bpb score` or `bpb evaluate` first",
                                          (c.output / "scores").string()));
    render_report(results, report_dir(c.output));
    return 0;
}

int cmd_all(const RunConfig& c) {
    require_input(c, "all");
    require_output(c, "all");
    Manifest m("all", c);
    const std::string validation = run_validation(c, m);
    write_text(c.output / "validation.txt", validation);
    const auto train = load_split(c, Split::Train, m, true);
    const auto models = train_all(*train, c);
    const auto splits = load_test_splits(c, m);
    write_scores(c, models, splits, true);
    cmd_report(c);
    m.write();
    return 0;
}

void configure_logging() {
    static bool done = false;
    if (!done) {
        auto logger = spdlog::stderr_logger_mt("bpb");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
        done = true;
    }
    const char* env = std::getenv("BPB_LOG");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

} // namespace

int run_command(int argc, const char* const* argv) {
    configure_logging();
    Options o;
    CLI::App app{"Behavioral biometrics benchmark toolkit", "bpb"};
    app.set_config("--config", "", "settings file with `key = value` lines");
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kToolVersion));

    app.add_option("--preset", o.preset, "canonical or desk")->capture_default_str();
    app.add_option("--seed", o.seed, "master seed");
    app.add_option("-i,--input", o.input, "dataset directory");
    app.add_option("-o,--output", o.output, "output directory");
    app.add_option("--modalities", o.modalities, "comma separated modality names")->delimiter(',');
    app.add_option("--tasks", o.tasks, "comma separated task names")->delimiter(',');
    app.add_option("--epochs", o.epochs);
    app.add_option("--batch_size,--batch-size", o.batch_size);
    app.add_option("--learning_rate,--learning-rate,--lr", o.learning_rate);
    app.add_option("--beta1", o.beta1);
    app.add_option("--beta2", o.beta2);
    app.add_option("--epsilon", o.epsilon);
    app.add_option("--margin", o.margin);
    app.add_option("--windows_per_session,--windows-per-session", o.windows_per_session);
    app.add_option("--hidden", o.hidden);
    app.add_option("--layers", o.layers);
    app.add_option("--embedding_dim,--embedding-dim", o.embedding_dim);
    app.add_option("--dropout", o.dropout);
    app.add_option("--recurrent_dropout,--recurrent-dropout", o.recurrent_dropout);
    app.add_option("--augment", o.augment, "device-noise augmentation of sensor windows");
    app.add_option("--znorm", o.znorm, "per-modality score z-normalization before fusion");
    app.add_option("--enrol", o.enrol, "pooled or per_session");
    app.add_option("--pairing", o.pairing, "random-impostor pairing: rotation or derangement");
    app.add_flag("--force", o.force, "allow overriding constants pinned by the canonical preset");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--users", o.users, "train users (also the default for the other splits)")->capture_default_str();
    synth->add_option("--val-users", o.val_users, "validation users");
    synth->add_option("--eval-users", o.eval_users, "evaluation users");
    synth->add_option("--sensor-samples", o.sensor_samples, "sensor samples per task");
    synth->add_option("--touch-events", o.touch_events, "touch events per task");
    synth->add_option("--device-gain", o.device_gain, "device gain range (lo hi)")->expected(2);
    synth->add_option("--device-offset", o.device_offset, "device offset range (lo hi)")->expected(2);
    synth->add_option("--noise-std", o.noise_std, "sensor noise standard deviation");
    auto* validate = app.add_subcommand("validate", "check a dataset directory");
    auto* preprocess = app.add_subcommand("preprocess", "dump per-session feature sequences as CSV");
    auto* train = app.add_subcommand("train", "train one network per modality");
    auto* score = app.add_subcommand("score", "write session scores for every fusion subset");
    auto* evaluate = app.add_subcommand("evaluate", "score and compute AUC / Wilcoxon results");
    auto* report = app.add_subcommand("report", "render report tables from scores");
    auto* all = app.add_subcommand("all", "validate, train, evaluate and report");
    for (auto* sub : {synth, validate, preprocess, train, score, evaluate, report, all}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::FileError& e) {
        std::cerr << "bpb: " << e.what() << '\n';
        return 3;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const RunConfig c = resolve(o, app);
        if (synth->parsed()) return cmd_synth(o, c);
        if (validate->parsed()) return cmd_validate(c);
        if (preprocess->parsed()) return cmd_preprocess(c);
        if (all->parsed()) return cmd_all(c);
        if (report->parsed()) {
            const int rc = cmd_report(c);
            Manifest("report", c).write();
            return rc;
        }
        Manifest m(train->parsed() ? "train" : score->parsed() ? "score" : "evaluate", c);
        int rc = 0;
        if (train->parsed()) rc = cmd_train(c, m);
        else rc = cmd_score(c, m, evaluate->parsed());
        m.write();
        return rc;
    } catch (const MissingArtifact& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 4;
    } catch (const TrainingDiverged& e) {
        spdlog::error("{}", e.what());
        return 6;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 5;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return 1;
    }
}

int run_command(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("bpb");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_command(static_cast<int>(argv.size()), argv.data());
}

} // namespace bpb
