#include "sdo/config.hpp"

#include "sdo/io.hpp"

#include <functional>
#include <map>
#include <random>
#include <sstream>

namespace sdo {

namespace {

using json = nlohmann::json;

/// Reads known keys of one JSON object section, collecting problems.
class Section {
  public:
    Section(const json& j, std::string name, std::vector<std::string>& bad) : name_(std::move(name)), bad_(bad) {
        if (!j.is_object()) {
            bad_.push_back(name_ + ": must be an object");
            return;
        }
        obj_ = &j;
    }

    template <typename T>
    void get(const std::string& key, T& dst) {
        known_.push_back(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            dst = obj_->at(key).get<T>();
        } catch (const json::exception&) {
            bad_.push_back(name_ + "." + key + ": wrong type");
        }
    }

    void get_with(const std::string& key, const std::function<void(const json&)>& parse) {
        known_.push_back(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            parse(obj_->at(key));
        } catch (const std::exception& e) {
            bad_.push_back(name_ + "." + key + ": " + e.what());
        }
    }

    ~Section() {
        if (!obj_) return;
        for (const auto& [key, value] : obj_->items()) {
            if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
                bad_.push_back(name_ + "." + key + ": unknown key");
            }
        }
    }

  private:
    const json* obj_ = nullptr;
    std::string name_;
    std::vector<std::string>& bad_;
    std::vector<std::string> known_;
};

void throw_if_bad(const std::string& what, const std::vector<std::string>& bad) {
    if (bad.empty()) return;
    std::ostringstream os;
    os << what << ":";
    for (const auto& b : bad) os << " [" << b << "]";
    throw ConfigError(os.str());
}

template <typename Fn>
void collect(std::vector<std::string>& bad, const std::string& section, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        bad.push_back(section + ": " + e.what());
    }
}

}  // namespace

RunConfig::RunConfig() {
    ocp = OcpSpec::defaults_for(model);
    budget.record_at = {5, 10, 15, 20};
}

void RunConfig::validate() const {
    std::vector<std::string> bad;
    collect(bad, "model", [&] { model.validate(); });
    collect(bad, "ocp", [&] { ocp.validate(); });
    collect(bad, "surrogate", [&] { surrogate.validate(); });
    collect(bad, "bc", [&] { bc.validate(); });
    collect(bad, "budget", [&] { budget.validate(); });
    collect(bad, "bench", [&] { bench_options().validate(); });
    collect(bad, "sweep", [&] { sweep_options().validate(); });
    for (const auto& s : bench.strategies) collect(bad, "bench.strategies", [&] { Strategy::parse(s); });
    if (!(sdo.nu >= 0)) bad.emplace_back("sdo.nu: must be >= 0");
    if (!(sdo.speedup > 0)) bad.emplace_back("sdo.speedup: must be positive");
    if (data.surrogate_count < 2) bad.emplace_back("data.surrogate_count: must be >= 2");
    if (data.surrogate_steps < surrogate.H + surrogate.L) {
        bad.emplace_back("data.surrogate_steps: shorter than surrogate H + L");
    }
    if (data.bench_count < 1) bad.emplace_back("data.bench_count: must be >= 1");
    if (data.bc_count < 2) bad.emplace_back("data.bc_count: must be >= 2");
    if (data.expert_iterations < 0) bad.emplace_back("data.expert_iterations: must be >= 0");
    if (!(data.rod_step_fraction > 0 && data.rod_step_fraction <= 1)) {
        bad.emplace_back("data.rod_step_fraction: must lie in (0, 1]");
    }
    if (data.rod_ao_gain < 0 || data.history_ao_gain < 0) bad.emplace_back("data: ao gains must be >= 0");
    if (parallelism < 1) bad.emplace_back("parallelism: must be >= 1");
    if (paths.out.empty()) bad.emplace_back("paths.out: must not be empty");
    throw_if_bad("invalid configuration", bad);
}

json RunConfig::to_json() const {
    json j;
    j["model"] = sdo::to_json(model);
    j["ocp"] = {{"N", ocp.N},           {"dt", ocp.dt},         {"cost_kind", to_string(ocp.cost_kind)},
                {"AO_ref", ocp.AO_ref}, {"AO_min", ocp.AO_min}, {"AO_max", ocp.AO_max},
                {"nu", ocp.nu},         {"boron_scale", ocp.boron_scale}};
    j["surrogate"] = {{"H", surrogate.H},
                      {"L", surrogate.L},
                      {"hidden", surrogate.hidden},
                      {"activation", to_string(surrogate.activation)},
                      {"lambda", surrogate.lambda},
                      {"reg", to_string(surrogate.reg_kind)},
                      {"lr", surrogate.lr},
                      {"batch_size", surrogate.batch_size},
                      {"batches_per_epoch", surrogate.batches_per_epoch},
                      {"max_epochs", surrogate.max_epochs},
                      {"patience", surrogate.patience},
                      {"val_windows", surrogate.val_windows},
                      {"val_fraction", surrogate.val_fraction},
                      {"seed", surrogate.seed}};
    j["bc"] = {{"hidden", bc.hidden},
               {"activation", to_string(bc.activation)},
               {"lr", bc.lr},
               {"epochs", bc.epochs},
               {"val_fraction", bc.val_fraction},
               {"w_stride", bc.w_stride},
               {"seed", bc.seed}};
    j["budget"] = {{"max_iterations", budget.max_iterations},
                   {"surrogate_fraction", budget.surrogate_fraction},
                   {"record_at", budget.record_at}};
    j["sdo"] = {{"nu", sdo.nu},
                {"speedup", sdo.speedup},
                {"mode", to_string(sdo.mode)},
                {"full_iteration_seconds", sdo.full_iteration_seconds},
                {"start_from_shift", sdo.start_from_shift}};
    j["data"] = {{"surrogate_count", data.surrogate_count}, {"surrogate_steps", data.surrogate_steps},
                 {"surrogate_seed", data.surrogate_seed},   {"rod_step_fraction", data.rod_step_fraction},
                 {"rod_ao_gain", data.rod_ao_gain},         {"bench_count", data.bench_count},
                 {"bench_seed", data.bench_seed},           {"history_ao_gain", data.history_ao_gain},
                 {"bc_count", data.bc_count},               {"bc_seed", data.bc_seed},
                 {"expert_iterations", data.expert_iterations}};
    j["bench"] = {{"strategies", bench.strategies},
                  {"violation_at", bench.violation_at},
                  {"fd_rel_step", bench.fd_rel_step}};
    j["sweep"] = {{"fractions", sweep.fractions},
                  {"checkpoint_every", sweep.checkpoint_every},
                  {"n_eval", sweep.n_eval}};
    j["paths"] = {{"out", paths.out},           {"data", paths.data},           {"suite", paths.suite},
                  {"bc_data", paths.bc_data},   {"surrogate", paths.surrogate}, {"bc", paths.bc}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["parallelism"] = parallelism;
    return j;
}

std::string RunConfig::hash() const {
    json j = to_json();
    j.erase("paths");
    j.erase("parallelism");
    return fnv1a_hex(j.dump());
}

std::uint64_t RunConfig::seed_for(const std::string& component, std::uint64_t fallback) const {
    if (!seed) return fallback;
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(*seed), static_cast<std::uint32_t>(*seed >> 32)};
    for (unsigned char c : component) words.push_back(c);
    std::seed_seq seq(words.begin(), words.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

SurrogateDataOptions RunConfig::surrogate_data_options() const {
    SurrogateDataOptions o;
    o.count = data.surrogate_count;
    o.N = data.surrogate_steps;
    o.dt = ocp.dt;
    o.seed = seed_for("surrogate_data", data.surrogate_seed);
    o.rods.step_fraction = data.rod_step_fraction;
    o.rods.ao_gain = data.rod_ao_gain;
    return o;
}

ScenarioOptions RunConfig::scenario_options() const {
    ScenarioOptions o;
    o.count = data.bench_count;
    o.H = surrogate.H;
    o.seed = seed_for("bench_suite", data.bench_seed);
    o.spec = ocp;
    o.history_rods.ao_gain = data.history_ao_gain;
    o.expert_iterations = data.expert_iterations;
    o.refine.fd_rel_step = bench.fd_rel_step;
    o.refine.parallelism = parallelism;
    return o;
}

BcDataOptions RunConfig::bc_data_options() const {
    BcDataOptions o;
    o.scenarios = scenario_options();
    o.scenarios.count = data.bc_count;
    o.scenarios.seed = seed_for("bc_data", data.bc_seed);
    o.expert_iterations = data.expert_iterations;
    return o;
}

SurrogateConfig RunConfig::surrogate_config() const {
    SurrogateConfig c = surrogate;
    c.seed = seed_for("surrogate_training", surrogate.seed);
    return c;
}

BcConfig RunConfig::bc_config() const {
    BcConfig c = bc;
    c.seed = seed_for("bc_training", bc.seed);
    return c;
}

BenchOptions RunConfig::bench_options() const {
    BenchOptions o;
    o.iterations = budget.max_iterations;
    o.record_at = budget.record_at;
    o.violation_at = bench.violation_at;
    o.refine.fd_rel_step = bench.fd_rel_step;
    o.refine.parallelism = 1;
    o.sdo = sdo;
    o.sdo.full_iterations = budget.max_iterations;
    o.parallelism = parallelism;
    return o;
}

SweepOptions RunConfig::sweep_options() const {
    SweepOptions o;
    o.fractions = sweep.fractions;
    o.checkpoint_every = sweep.checkpoint_every;
    o.n_eval = sweep.n_eval;
    o.surrogate = surrogate_config();
    o.sdo = sdo;
    o.sdo.fraction = budget.surrogate_fraction;
    o.sdo.full_iterations = budget.max_iterations;
    o.refine.fd_rel_step = bench.fd_rel_step;
    return o;
}

RunConfig config_from_json(const json& j, const RunConfig& base) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    RunConfig c = base;
    std::vector<std::string> bad;
    const json empty = json::object();
    auto sec = [&](const char* name) -> const json& { return j.contains(name) ? j.at(name) : empty; };

    if (j.contains("model")) {
        try {
            c.model = model_params_from_json(j.at("model"), c.model);
        } catch (const ConfigError& e) {
            bad.emplace_back(e.what());
        }
    }
    {
        Section s(sec("ocp"), "ocp", bad);
        s.get("N", c.ocp.N);
        s.get("dt", c.ocp.dt);
        s.get_with("cost_kind", [&](const json& v) { c.ocp.cost_kind = cost_kind_from_string(v.get<std::string>()); });
        s.get("AO_ref", c.ocp.AO_ref);
        s.get("AO_min", c.ocp.AO_min);
        s.get("AO_max", c.ocp.AO_max);
        s.get("nu", c.ocp.nu);
        s.get("boron_scale", c.ocp.boron_scale);
    }
    c.ocp.box = {c.model.u_min, c.model.u_max};
    {
        Section s(sec("surrogate"), "surrogate", bad);
        s.get("H", c.surrogate.H);
        s.get("L", c.surrogate.L);
        s.get("hidden", c.surrogate.hidden);
        s.get_with("activation",
                   [&](const json& v) { c.surrogate.activation = activation_from_string(v.get<std::string>()); });
        s.get("lambda", c.surrogate.lambda);
        s.get_with("reg", [&](const json& v) { c.surrogate.reg_kind = reg_kind_from_string(v.get<std::string>()); });
        s.get("lr", c.surrogate.lr);
        s.get("batch_size", c.surrogate.batch_size);
        s.get("batches_per_epoch", c.surrogate.batches_per_epoch);
        s.get("max_epochs", c.surrogate.max_epochs);
        s.get("patience", c.surrogate.patience);
        s.get("val_windows", c.surrogate.val_windows);
        s.get("val_fraction", c.surrogate.val_fraction);
        s.get("seed", c.surrogate.seed);
    }
    {
        Section s(sec("bc"), "bc", bad);
        s.get("hidden", c.bc.hidden);
        s.get_with("activation", [&](const json& v) { c.bc.activation = activation_from_string(v.get<std::string>()); });
        s.get("lr", c.bc.lr);
        s.get("epochs", c.bc.epochs);
        s.get("val_fraction", c.bc.val_fraction);
        s.get("w_stride", c.bc.w_stride);
        s.get("seed", c.bc.seed);
    }
    {
        Section s(sec("budget"), "budget", bad);
        s.get("max_iterations", c.budget.max_iterations);
        s.get("surrogate_fraction", c.budget.surrogate_fraction);
        s.get("record_at", c.budget.record_at);
    }
    {
        Section s(sec("sdo"), "sdo", bad);
        s.get("nu", c.sdo.nu);
        s.get("speedup", c.sdo.speedup);
        s.get_with("mode", [&](const json& v) { c.sdo.mode = budget_mode_from_string(v.get<std::string>()); });
        s.get("full_iteration_seconds", c.sdo.full_iteration_seconds);
        s.get("start_from_shift", c.sdo.start_from_shift);
    }
    {
        Section s(sec("data"), "data", bad);
        s.get("surrogate_count", c.data.surrogate_count);
        s.get("surrogate_steps", c.data.surrogate_steps);
        s.get("surrogate_seed", c.data.surrogate_seed);
        s.get("rod_step_fraction", c.data.rod_step_fraction);
        s.get("rod_ao_gain", c.data.rod_ao_gain);
        s.get("bench_count", c.data.bench_count);
        s.get("bench_seed", c.data.bench_seed);
        s.get("history_ao_gain", c.data.history_ao_gain);
        s.get("bc_count", c.data.bc_count);
        s.get("bc_seed", c.data.bc_seed);
        s.get("expert_iterations", c.data.expert_iterations);
    }
    {
        Section s(sec("bench"), "bench", bad);
        s.get("strategies", c.bench.strategies);
        s.get("violation_at", c.bench.violation_at);
        s.get("fd_rel_step", c.bench.fd_rel_step);
    }
    {
        Section s(sec("sweep"), "sweep", bad);
        s.get("fractions", c.sweep.fractions);
        s.get("checkpoint_every", c.sweep.checkpoint_every);
        s.get("n_eval", c.sweep.n_eval);
    }
    {
        Section s(sec("paths"), "paths", bad);
        s.get("out", c.paths.out);
        s.get("data", c.paths.data);
        s.get("suite", c.paths.suite);
        s.get("bc_data", c.paths.bc_data);
        s.get("surrogate", c.paths.surrogate);
        s.get("bc", c.paths.bc);
    }
    if (j.contains("seed")) {
        const auto& v = j.at("seed");
        if (v.is_null()) {
            c.seed.reset();
        } else if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            c.seed = v.get<std::uint64_t>();
        } else {
            bad.emplace_back("seed: must be a non-negative integer or null");
        }
    }
    if (j.contains("parallelism")) {
        if (j.at("parallelism").is_number_integer()) {
            c.parallelism = j.at("parallelism").get<int>();
        } else {
            bad.emplace_back("parallelism: wrong type");
        }
    }
    static const char* sections[] = {"model", "ocp",   "surrogate", "bc",   "budget",     "sdo",
                                     "data",  "bench", "sweep",     "paths", "seed", "parallelism"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(std::begin(sections), std::end(sections), key) == std::end(sections)) {
            bad.push_back(key + ": unknown section");
        }
    }
    throw_if_bad("invalid configuration", bad);
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

}  // namespace sdo
