#include "bpb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "bpb/error.hpp"
#include "bpb/rng.hpp"

namespace bpb {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

const std::vector<double>& ChannelSeries::column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw DimensionError(fmt::format("series has no column '{}'", name));
    return it->second;
}

const ChannelSeries* Session::find(Task task, ModalityId modality) const {
    auto t = tasks.find(std::string(task_key(task)));
    if (t == tasks.end()) return nullptr;
    auto s = t->second.find(std::string(series_key(modality)));
    return s == t->second.end() ? nullptr : &s->second;
}

const Session* UserRecord::genuine_session(int session_id) const {
    for (const auto& s : sessions)
        if (s.session_id == session_id && !is_impostor(s)) return &s;
    return nullptr;
}

std::vector<const Session*> UserRecord::skilled_sessions() const {
    std::vector<const Session*> out;
    for (const auto& s : sessions)
        if (is_impostor(s)) out.push_back(&s);
    return out;
}

std::string_view split_name(Split s) noexcept {
    switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Evaluation: return "evaluation";
    }
    return "train";
}

std::optional<Split> split_from_name(std::string_view name) noexcept {
    if (name == "train") return Split::Train;
    if (name == "validation") return Split::Validation;
    if (name == "evaluation") return Split::Evaluation;
    return std::nullopt;
}

const UserRecord* Dataset::find_user(const std::string& id) const {
    for (const auto& u : users)
        if (u.id == id) return &u;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthConfig::validate() const {
    auto check_range = [](const Range& r, const char* name) {
        if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
            throw ConfigError(fmt::format("{}: empty or invalid range [{}, {}]", name, r.lo, r.hi));
    };
    if (n_users < 2) throw ConfigError(fmt::format("n_users must be >= 2 (got {})", n_users));
    if (first_user < 0) throw ConfigError("first_user must be >= 0");
    if (split == Split::Train ? sessions_per_user < 2 : sessions_per_user != 4)
        throw ConfigError("sessions_per_user must be 4 for validation/evaluation and >= 2 for train");
    if (sessions_per_user > 4) throw ConfigError("sessions_per_user must be <= 4");
    if (sensor_samples < 1 || touch_events < 2) throw ConfigError("sample counts must be positive");
    check_range(ar_radius, "ar_radius");
    check_range(ar_angle, "ar_angle");
    check_range(sine_freq_hz, "sine_freq_hz");
    check_range(sine_amplitude, "sine_amplitude");
    check_range(posture_mean, "posture_mean");
    check_range(device_gain, "device_gain");
    check_range(device_offset, "device_offset");
    if (device_gain.lo <= 0.0) throw ConfigError("device_gain range must be strictly positive");
    if (ar_radius.hi >= 1.0 || ar_radius.lo < 0.0) throw ConfigError("ar_radius must lie in [0, 1)");
    if (noise_std < 0.0 || session_jitter < 0.0) throw ConfigError("noise_std and session_jitter must be >= 0");
}

namespace {

constexpr double kSensorRateHz = 200.0;
constexpr double kSensorPeriodMs = 1000.0 / kSensorRateHz;
constexpr double kTaskGapMs = 2000.0;

// Stream domains.
enum : std::uint64_t { kSigSensor = 1, kSessSensor = 2, kDevice = 3, kSigTouch = 4, kSessTouch = 5, kScreen = 6 };

std::uint64_t u(int v) { return static_cast<std::uint64_t>(v); }
std::uint64_t u(Task t) { return static_cast<std::uint64_t>(t); }
std::uint64_t u(ModalityId m) { return static_cast<std::uint64_t>(m); }

struct AxisSignature {
    double a1, a2, innovation, f1, f2, amp1, amp2, mean;
};

AxisSignature axis_signature(const SynthConfig& c, int user, ModalityId sensor, int axis) {
    Rng rng = Rng::stream({c.seed, kSigSensor, u(user), u(sensor), u(axis)});
    AxisSignature s{};
    const double r = rng.uniform(c.ar_radius.lo, c.ar_radius.hi);
    const double theta = rng.uniform(c.ar_angle.lo, c.ar_angle.hi);
    s.a1 = 2.0 * r * std::cos(theta);
    s.a2 = -r * r;
    s.f1 = rng.uniform(c.sine_freq_hz.lo, c.sine_freq_hz.hi);
    s.f2 = rng.uniform(c.sine_freq_hz.lo, c.sine_freq_hz.hi);
    s.amp1 = rng.uniform(c.sine_amplitude.lo, c.sine_amplitude.hi);
    s.amp2 = rng.uniform(c.sine_amplitude.lo, c.sine_amplitude.hi);
    s.mean = rng.uniform(c.posture_mean.lo, c.posture_mean.hi);
    // Innovation scaled so that the AR part has stationary variance 0.5.
    const double a1 = s.a1, a2 = s.a2;
    const double gain = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) * (1.0 - a2) - a1 * a1));
    s.innovation = std::sqrt(0.5 / gain);
    return s;
}

Rng sensor_session_stream(const SynthConfig& c, int owner, int slot, Task task, ModalityId sensor, int axis) {
    return Rng::stream({c.seed, kSessSensor, u(owner), u(slot), u(task), u(sensor), u(axis)});
}

std::vector<double> user_axis(const SynthConfig& c, const AxisSignature& sig, Rng& rng) {
    const double j = c.session_jitter;
    const double amp1 = sig.amp1 * (1.0 + j * rng.normal());
    const double amp2 = sig.amp2 * (1.0 + j * rng.normal());
    const double f1 = sig.f1 * (1.0 + 0.2 * j * rng.normal());
    const double f2 = sig.f2 * (1.0 + 0.2 * j * rng.normal());
    const double ph1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ph2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double mean = sig.mean + j * rng.normal();

    const int n = c.sensor_samples;
    constexpr int kBurnIn = 64;
    std::vector<double> out(static_cast<std::size_t>(n));
    double p1 = 0.0, p2 = 0.0;
    for (int i = -kBurnIn; i < n; ++i) {
        const double ar = sig.a1 * p1 + sig.a2 * p2 + sig.innovation * rng.normal();
        p2 = p1;
        p1 = ar;
        if (i < 0) continue;
        const double time = i / kSensorRateHz;
        out[static_cast<std::size_t>(i)] = ar + amp1 * std::sin(2.0 * std::numbers::pi * f1 * time + ph1) +
                                           amp2 * std::sin(2.0 * std::numbers::pi * f2 * time + ph2) + mean;
    }
    return out;
}

ChannelSeries sensor_series(const SynthConfig& c, int owner, int performer, int slot, Task task, ModalityId sensor,
                            double t0) {
    ChannelSeries s;
    const auto n = static_cast<std::size_t>(c.sensor_samples);
    s.t.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.t[i] = t0 + kSensorPeriodMs * static_cast<double>(i);
    const DeviceModel dev = synthetic_device(c, owner, sensor);
    static const char* kAxes[3] = {"x", "y", "z"};
    for (int axis = 0; axis < 3; ++axis) {
        const AxisSignature sig = axis_signature(c, performer, sensor, axis);
        Rng rng = sensor_session_stream(c, owner, slot, task, sensor, axis);
        Rng noise = rng.split(0x6e6f697365);
        std::vector<double> v = user_axis(c, sig, rng);
        for (auto& x : v) x = dev.gain[axis] * x + dev.offset[axis] + c.noise_std * noise.normal();
        s.columns[kAxes[axis]] = std::move(v);
    }
    return s;
}

struct TouchSignature {
    double rate_hz;
    double x0, y0;
    double length;
    double angle;
    double curvature;
    double speed_exp;
    double points;
    double spread;
    // Tapping
    double bias_x, bias_y, region_r;
    // Keystroke
    double log_interval, log_sigma, backspace_rate, space_rate;
};

TouchSignature touch_signature(const SynthConfig& c, int user, Task task) {
    Rng rng = Rng::stream({c.seed, kSigTouch, u(user), u(task)});
    TouchSignature s{};
    s.rate_hz = rng.uniform(5.0, 15.0);
    s.x0 = rng.uniform(0.2, 0.8);
    s.y0 = rng.uniform(0.2, 0.8);
    s.length = rng.uniform(0.2, 0.6);
    const double base = task == Task::TextReading ? -std::numbers::pi / 2 : (rng.bernoulli(0.5) ? 0.0 : std::numbers::pi);
    s.angle = base + rng.uniform(-0.4, 0.4);
    s.curvature = rng.uniform(-0.35, 0.35);
    s.speed_exp = rng.uniform(0.6, 1.6);
    s.points = rng.uniform(6.0, 14.0);
    s.spread = rng.uniform(0.02, 0.06);
    s.bias_x = rng.uniform(-0.05, 0.05);
    s.bias_y = rng.uniform(-0.05, 0.05);
    s.region_r = rng.uniform(0.1, 0.3);
    s.log_interval = std::log(rng.uniform(120.0, 400.0));
    s.log_sigma = rng.uniform(0.2, 0.6);
    s.backspace_rate = rng.uniform(0.01, 0.1);
    s.space_rate = rng.uniform(0.12, 0.22);
    return s;
}

double jit(Rng& rng, double v, double j) { return v * (1.0 + j * rng.normal()); }

ChannelSeries touch_series(const SynthConfig& c, const ScreenSize& screen, int owner, int performer, int slot,
                           Task task, double t0) {
    const TouchSignature sig = touch_signature(c, performer, task);
    Rng rng = Rng::stream({c.seed, kSessTouch, u(owner), u(slot), u(task)});
    const double j = c.session_jitter;
    const auto n = static_cast<std::size_t>(c.touch_events);
    ChannelSeries s;
    s.t.reserve(n);

    const double rate = std::clamp(jit(rng, sig.rate_hz, j), 5.0, 15.0);
    double now = t0;
    auto advance = [&] {
        s.t.push_back(now);
        now += 1000.0 / rate * rng.uniform(0.7, 1.3);
    };

    if (task == Task::Keystroke) {
        std::vector<double> ascii;
        ascii.reserve(n);
        const double mu = sig.log_interval + j * rng.normal() * 0.5;
        while (s.t.size() < n) {
            s.t.push_back(now);
            now += std::exp(mu + sig.log_sigma * rng.normal());
            double key;
            const double r = rng.uniform();
            if (r < sig.backspace_rate) key = 8.0;
            else if (r < sig.backspace_rate + sig.space_rate) key = 32.0;
            else key = 97.0 + static_cast<double>(rng.below(26));
            ascii.push_back(key);
        }
        s.columns["ascii"] = std::move(ascii);
        return s;
    }

    std::vector<double> xs, ys;
    xs.reserve(n);
    ys.reserve(n);
    if (task == Task::Tapping) {
        const double cx = sig.x0 + 0.05 * j * rng.normal();
        const double cy = sig.y0 + 0.05 * j * rng.normal();
        while (xs.size() < n) {
            const double target_x = cx + sig.region_r * rng.uniform(-1.0, 1.0);
            const double target_y = cy + sig.region_r * rng.uniform(-1.0, 1.0);
            xs.push_back((target_x + sig.bias_x + sig.spread * rng.normal()) * screen.width);
            ys.push_back((target_y + sig.bias_y + sig.spread * rng.normal()) * screen.height);
            advance();
        }
    } else {
        while (xs.size() < n) {
            const double sx = sig.x0 + sig.spread * rng.normal();
            const double sy = sig.y0 + sig.spread * rng.normal();
            const double ang = sig.angle + 0.1 * rng.normal();
            const double len = jit(rng, sig.length, j);
            const double kappa = sig.curvature + 0.05 * rng.normal();
            const double gamma = std::max(0.3, jit(rng, sig.speed_exp, j));
            const int pts = std::max(3, static_cast<int>(std::lround(jit(rng, sig.points, j))));
            const double dx = std::cos(ang), dy = std::sin(ang);
            for (int k = 0; k < pts && xs.size() < n; ++k) {
                const double sk = std::pow(static_cast<double>(k) / (pts - 1), gamma);
                const double along = len * sk;
                const double across = kappa * len * sk * (1.0 - sk);
                xs.push_back((sx + along * dx - across * dy) * screen.width);
                ys.push_back((sy + along * dy + across * dx) * screen.height);
                advance();
            }
            // Finger lift between strokes.
            now += 1000.0 / rate * rng.uniform(1.0, 3.0);
        }
    }
    s.columns["x"] = std::move(xs);
    s.columns["y"] = std::move(ys);
    return s;
}

std::string user_id(int g) { return fmt::format("u{:03d}", g + 1); }
std::string device_id(int g) { return fmt::format("d{:03d}", g + 1); }

ScreenSize synthetic_screen(const SynthConfig& c, int g) {
    static constexpr ScreenSize kScreens[] = {{1080, 1920}, {1080, 2340}, {720, 1280}, {1440, 3040}};
    Rng rng = Rng::stream({c.seed, kScreen, u(g)});
    return kScreens[rng.below(4)];
}

Session make_session(const SynthConfig& c, const ScreenSize& screen, int owner, int performer, int session_id,
                     int slot) {
    Session s;
    s.session_id = session_id;
    s.device_id = device_id(owner);
    s.performed_by = user_id(performer);
    const double task_ms = std::max(c.sensor_samples * kSensorPeriodMs, c.touch_events * 200.0);
    for (Task task : kTasks) {
        const double t0 = static_cast<double>(static_cast<int>(task)) * (task_ms + kTaskGapMs);
        auto& block = s.tasks[std::string(task_key(task))];
        block["touch"] = touch_series(c, screen, owner, performer, slot, task, t0);
        for (ModalityId m : kSensors)
            block[std::string(series_key(m))] = sensor_series(c, owner, performer, slot, task, m, t0);
    }
    return s;
}

} // namespace

DeviceModel synthetic_device(const SynthConfig& c, int device_index, ModalityId sensor) {
    Rng rng = Rng::stream({c.seed, kDevice, u(device_index), u(sensor)});
    DeviceModel d;
    for (int a = 0; a < 3; ++a) {
        d.gain[a] = rng.uniform(c.device_gain.lo, c.device_gain.hi);
        d.offset[a] = rng.uniform(c.device_offset.lo, c.device_offset.hi);
    }
    return d;
}

std::vector<double> synthetic_user_axis(const SynthConfig& c, int owner_index, int performer_index, int session_slot,
                                        Task task, ModalityId sensor, int axis) {
    const AxisSignature sig = axis_signature(c, performer_index, sensor, axis);
    Rng rng = sensor_session_stream(c, owner_index, session_slot, task, sensor, axis);
    return user_axis(c, sig, rng);
}

Dataset generate_synthetic(const SynthConfig& c) {
    c.validate();
    Dataset d;
    d.split = c.split;
    d.users.reserve(static_cast<std::size_t>(c.n_users));
    for (int i = 0; i < c.n_users; ++i) {
        const int g = c.first_user + i;
        UserRecord rec;
        rec.id = user_id(g);
        rec.device = device_id(g);
        rec.screen = synthetic_screen(c, g);
        for (int s = 1; s <= c.sessions_per_user; ++s) rec.sessions.push_back(make_session(c, rec.screen, g, g, s, s));
        if (c.split != Split::Train) {
            // Skilled impostor: the next user of the split, on this user's device.
            const int performer = c.first_user + (i + 1) % c.n_users;
            rec.sessions.push_back(make_session(c, rec.screen, g, performer, 3, 5));
            rec.sessions.push_back(make_session(c, rec.screen, g, performer, 4, 6));
        }
        d.users.push_back(std::move(rec));
    }
    return d;
}

// ---------------------------------------------------------------------------
// JSON I/O

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ParseError(fmt::format("{}: expected an object", where));
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(fmt::format("{}: missing field '{}'", where, key));
    return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
    const json& v = field(obj, key, where);
    if (!v.is_string()) throw ParseError(fmt::format("{}.{}: expected a string", where, key));
    return v.get<std::string>();
}

std::vector<double> get_numbers(const json& v, const std::string& where) {
    if (!v.is_array()) throw ParseError(fmt::format("{}: expected an array of numbers", where));
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ParseError(fmt::format("{}[{}]: expected a number", where, i));
        out.push_back(v[i].get<double>());
    }
    return out;
}

ChannelSeries parse_series(const json& obj, const std::string& where) {
    if (!obj.is_object()) throw ParseError(fmt::format("{}: expected an object", where));
    ChannelSeries s;
    s.t = get_numbers(field(obj, "t", where), where + ".t");
    for (const auto& [key, value] : obj.items()) {
        if (key == "t") continue;
        auto col = get_numbers(value, where + "." + key);
        if (col.size() != s.t.size())
            throw SchemaError(fmt::format("{}.{}: column length {} differs from timestamp length {}", where, key,
                                          col.size(), s.t.size()));
        s.columns.emplace(key, std::move(col));
    }
    return s;
}

ojson series_json(const ChannelSeries& s) {
    ojson o;
    o["t"] = s.t;
    for (const auto& [k, v] : s.columns) o[k] = v;
    return o;
}

} // namespace

Dataset parse_dataset(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError(fmt::format("line {}: {}", line, e.what()), line);
    }
    const std::string schema = get_string(root, "schema", "$");
    if (schema != kSchemaVersion)
        throw SchemaError(fmt::format("schema version mismatch: file has '{}', expected '{}'", schema, kSchemaVersion));

    Dataset d;
    const std::string split = get_string(root, "split", "$");
    auto sp = split_from_name(split);
    if (!sp) throw ParseError(fmt::format("$.split: unknown split '{}'", split));
    d.split = *sp;

    const json& users = field(root, "users", "$");
    if (!users.is_array()) throw ParseError("$.users: expected an array");
    std::set<std::string> seen_paths;
    for (std::size_t ui = 0; ui < users.size(); ++ui) {
        const std::string uw = fmt::format("$.users[{}]", ui);
        const json& uj = users[ui];
        UserRecord rec;
        rec.id = get_string(uj, "id", uw);
        rec.device = get_string(uj, "device", uw);
        if (auto it = uj.find("screen"); it != uj.end()) {
            rec.screen.width = field(*it, "width", uw + ".screen").get<double>();
            rec.screen.height = field(*it, "height", uw + ".screen").get<double>();
            if (!(rec.screen.width > 0 && rec.screen.height > 0))
                throw SchemaError(uw + ".screen: dimensions must be positive");
        }
        const json& sessions = field(uj, "sessions", uw);
        if (!sessions.is_array()) throw ParseError(uw + ".sessions: expected an array");
        for (std::size_t si = 0; si < sessions.size(); ++si) {
            const std::string sw = fmt::format("{}.sessions[{}]", uw, si);
            const json& sj = sessions[si];
            Session s;
            const json& id = field(sj, "session", sw);
            if (!id.is_number_integer()) throw ParseError(sw + ".session: expected an integer");
            s.session_id = id.get<int>();
            s.device_id = get_string(sj, "device", sw);
            s.performed_by = get_string(sj, "performed_by", sw);
            if (s.session_id < 1 || s.session_id > 4)
                throw SchemaError(fmt::format("{}.session: id {} outside 1..4", sw, s.session_id));
            if (s.performed_by != rec.id) {
                if (s.session_id <= 2)
                    throw SchemaError(fmt::format("{}: enrolment session {} performed by '{}' instead of owner '{}'",
                                                  sw, s.session_id, s.performed_by, rec.id));
                if (s.device_id != rec.device)
                    throw SchemaError(fmt::format("{}: impostor session on device '{}' but owner device is '{}'", sw,
                                                  s.device_id, rec.device));
            }
            const json& tasks = field(sj, "tasks", sw);
            if (!tasks.is_object()) throw ParseError(sw + ".tasks: expected an object");
            for (const auto& [tk, tj] : tasks.items()) {
                const std::string tw = sw + ".tasks." + tk;
                if (!tj.is_object()) throw ParseError(tw + ": expected an object");
                const bool known_task = task_from_key(tk).has_value();
                auto& block = s.tasks[tk];
                for (const auto& [mk, mj] : tj.items()) {
                    const bool known = known_task && (mk == "touch" || (modality_from_name(mk) &&
                                                                        is_sensor(*modality_from_name(mk))));
                    if (!known && seen_paths.insert(tk + "/" + mk).second) d.unknown_modalities.push_back(tk + "/" + mk);
                    block.emplace(mk, parse_series(mj, tw + "." + mk));
                }
            }
            rec.sessions.push_back(std::move(s));
        }
        d.users.push_back(std::move(rec));
    }
    return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(fmt::format("cannot open dataset '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_dataset(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()), e.line());
    }
}

std::string serialize_dataset(const Dataset& d) {
    ojson root;
    root["schema"] = kSchemaVersion;
    root["split"] = split_name(d.split);
    ojson users = ojson::array();
    for (const auto& u : d.users) {
        ojson uj;
        uj["id"] = u.id;
        uj["device"] = u.device;
        uj["screen"] = {{"width", u.screen.width}, {"height", u.screen.height}};
        ojson sessions = ojson::array();
        for (const auto& s : u.sessions) {
            ojson sj;
            sj["session"] = s.session_id;
            sj["device"] = s.device_id;
            sj["performed_by"] = s.performed_by;
            ojson tasks = ojson::object();
            for (const auto& [tk, block] : s.tasks) {
                ojson tj = ojson::object();
                for (const auto& [mk, series] : block) tj[mk] = series_json(series);
                tasks[tk] = std::move(tj);
            }
            sj["tasks"] = std::move(tasks);
            sessions.push_back(std::move(sj));
        }
        uj["sessions"] = std::move(sessions);
        users.push_back(std::move(uj));
    }
    root["users"] = std::move(users);
    return root.dump();
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << serialize_dataset(d) << '\n';
}

namespace {

ojson range_json(const Range& r) { return ojson::array({r.lo, r.hi}); }

Range range_from(const json& j, const char* key) {
    const json& v = field(j, key, "synth_config");
    if (!v.is_array() || v.size() != 2) throw ParseError(fmt::format("synth_config.{}: expected [lo, hi]", key));
    return {v[0].get<double>(), v[1].get<double>()};
}

} // namespace

std::string serialize_synth_config(const SynthConfig& c) {
    ojson j;
    j["split"] = split_name(c.split);
    j["n_users"] = c.n_users;
    j["first_user"] = c.first_user;
    j["sessions_per_user"] = c.sessions_per_user;
    j["sensor_samples"] = c.sensor_samples;
    j["touch_events"] = c.touch_events;
    j["seed"] = c.seed;
    j["ar_radius"] = range_json(c.ar_radius);
    j["ar_angle"] = range_json(c.ar_angle);
    j["sine_freq_hz"] = range_json(c.sine_freq_hz);
    j["sine_amplitude"] = range_json(c.sine_amplitude);
    j["posture_mean"] = range_json(c.posture_mean);
    j["session_jitter"] = c.session_jitter;
    j["device_gain"] = range_json(c.device_gain);
    j["device_offset"] = range_json(c.device_offset);
    j["noise_std"] = c.noise_std;
    return j.dump(2);
}

SynthConfig parse_synth_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("synth config: {}", e.what()));
    }
    SynthConfig c;
    try {
        auto sp = split_from_name(field(j, "split", "synth_config").get<std::string>());
        if (!sp) throw ParseError("synth_config.split: unknown split");
        c.split = *sp;
        c.n_users = field(j, "n_users", "synth_config").get<int>();
        c.first_user = field(j, "first_user", "synth_config").get<int>();
        c.sessions_per_user = field(j, "sessions_per_user", "synth_config").get<int>();
        c.sensor_samples = field(j, "sensor_samples", "synth_config").get<int>();
        c.touch_events = field(j, "touch_events", "synth_config").get<int>();
        c.seed = field(j, "seed", "synth_config").get<std::uint64_t>();
        c.ar_radius = range_from(j, "ar_radius");
        c.ar_angle = range_from(j, "ar_angle");
        c.sine_freq_hz = range_from(j, "sine_freq_hz");
        c.sine_amplitude = range_from(j, "sine_amplitude");
        c.posture_mean = range_from(j, "posture_mean");
        c.session_jitter = field(j, "session_jitter", "synth_config").get<double>();
        c.device_gain = range_from(j, "device_gain");
        c.device_offset = range_from(j, "device_offset");
        c.noise_std = field(j, "noise_std", "synth_config").get<double>();
    } catch (const json::type_error& e) {
        throw ParseError(fmt::format("synth config: {}", e.what()));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Validation

std::string_view finding_name(FindingKind k) noexcept {
    switch (k) {
    case FindingKind::MissingModality: return "missing modality";
    case FindingKind::EmptySeries: return "empty series";
    case FindingKind::NonMonotoneTimestamps: return "non-monotone timestamps";
    case FindingKind::ColumnLengthMismatch: return "column length mismatch";
    case FindingKind::MissingColumn: return "missing column";
    }
    return "unknown";
}

std::string Finding::describe() const {
    std::string where = user;
    if (session) where += fmt::format(" session {}", session);
    if (!task.empty()) where += " " + task;
    if (!modality.empty()) where += " " + modality;
    if (kind == FindingKind::NonMonotoneTimestamps) where += fmt::format(" at index {}", index);
    return fmt::format("{}: {}", finding_name(kind), where);
}

std::vector<ModalityId> ValidationReport::excluded_modalities(const std::string& user) const {
    std::vector<ModalityId> out;
    for (const auto& f : findings) {
        if (f.user != user || f.kind != FindingKind::MissingModality) continue;
        if (auto m = modality_from_name(f.modality); m && std::find(out.begin(), out.end(), *m) == out.end())
            out.push_back(*m);
    }
    return out;
}

namespace {

std::vector<std::string> required_columns(ModalityId m) {
    if (is_sensor(m)) return {"x", "y", "z"};
    if (m == ModalityId::Keystroke) return {"ascii"};
    return {"x", "y"};
}

} // namespace

ValidationReport validate_dataset(const Dataset& d) {
    ValidationReport r;
    for (const auto& u : d.users) {
        std::set<ModalityId> missing;
        for (const auto& s : u.sessions) {
            for (Task task : kTasks) {
                std::vector<ModalityId> slots{touch_modality(task)};
                slots.insert(slots.end(), kSensors.begin(), kSensors.end());
                for (ModalityId m : slots) {
                    const ChannelSeries* series = s.find(task, m);
                    if (!series) {
                        missing.insert(m);
                        continue;
                    }
                    Finding base{FindingKind::EmptySeries, u.id, s.session_id, std::string(task_key(task)),
                                 std::string(modality_name(m)), 0};
                    if (series->empty()) {
                        r.findings.push_back(base);
                        continue;
                    }
                    for (const auto& col : required_columns(m)) {
                        if (!series->has_column(col)) {
                            base.kind = FindingKind::MissingColumn;
                            r.findings.push_back(base);
                        }
                    }
                    for (const auto& [name, col] : series->columns) {
                        if (col.size() != series->t.size()) {
                            base.kind = FindingKind::ColumnLengthMismatch;
                            r.findings.push_back(base);
                            break;
                        }
                    }
                    for (std::size_t i = 1; i < series->t.size(); ++i) {
                        if (series->t[i] < series->t[i - 1]) {
                            base.kind = FindingKind::NonMonotoneTimestamps;
                            base.index = i;
                            r.findings.push_back(base);
                        }
                    }
                }
            }
        }
        for (ModalityId m : missing)
            r.findings.push_back({FindingKind::MissingModality, u.id, 0, {}, std::string(modality_name(m)), 0});
    }
    return r;
}

} // namespace bpb
