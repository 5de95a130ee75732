#include "r3/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "r3/errors.hpp"

#ifndef R3_CODE_VERSION
#define R3_CODE_VERSION "unknown"
#endif

namespace r3::run {

std::string code_version() { return R3_CODE_VERSION; }

namespace {

using ad::Index;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) throw ConfigError("expected a number, got '" + s + "'");
    return v;
}

long long parse_int(const std::string& s) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    if (s.empty() || s[0] == '-') throw ConfigError("expected a non-negative integer, got '" + s + "'");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) throw ConfigError("expected a non-negative integer, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("expected true or false, got '" + s + "'");
}

template <typename E>
struct Names {
    std::vector<std::pair<E, std::string>> table;
    std::string get(E e) const {
        for (const auto& [k, n] : table)
            if (k == e) return n;
        return "?";
    }
    E parse(const std::string& s) const {
        std::string options;
        for (const auto& [k, n] : table) {
            if (n == s) return k;
            options += (options.empty() ? "" : ", ") + n;
        }
        throw ConfigError("expected one of {" + options + "}, got '" + s + "'");
    }
};

const Names<pde::ProblemKind> kProblems{{{pde::ProblemKind::convection, "convection"},
                                         {pde::ProblemKind::allen_cahn, "allen_cahn"},
                                         {pde::ProblemKind::eikonal, "eikonal"},
                                         {pde::ProblemKind::harmonic_ode, "harmonic_ode"}}};
const Names<pde::AcDerivativeMatch> kMatch{{{pde::AcDerivativeMatch::u_t, "u_t"}, {pde::AcDerivativeMatch::u_x, "u_x"}}};
const Names<ad::Activation> kActivation{{{ad::Activation::tanh, "tanh"}, {ad::Activation::sin, "sin"}}};
const Names<net::Variant> kVariant{{{net::Variant::plain, "plain"}, {net::Variant::modified, "modified"}}};
const Names<net::Embedding::Kind> kEmbedding{
    {{net::Embedding::Kind::none, "none"}, {net::Embedding::Kind::periodic, "periodic"}}};
const Names<gate::GateKind> kGate{{{gate::GateKind::tanh, "tanh"}, {gate::GateKind::relu_tanh, "relu_tanh"}}};

struct Key {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define R3_DOUBLE(key, field) \
    Key { key, [](const ExperimentConfig& c) { return num(c.field); }, [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(v); } }
#define R3_INT(key, field)                                                                            \
    Key {                                                                                             \
        key, [](const ExperimentConfig& c) { return std::to_string(c.field); },                       \
            [](ExperimentConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(parse_int(v)); } \
    }
#define R3_ENUM(key, field, names) \
    Key { key, [](const ExperimentConfig& c) { return names.get(c.field); }, [](ExperimentConfig& c, const std::string& v) { c.field = names.parse(v); } }
#define R3_STRING(key, field) \
    Key { key, [](const ExperimentConfig& c) { return c.field; }, [](ExperimentConfig& c, const std::string& v) { c.field = v; } }

const std::vector<Key>& keys() {
    static const std::vector<Key> k{
        Key{"run.seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
            [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64(v); }},
        R3_ENUM("problem.kind", problem.kind, kProblems),
        R3_DOUBLE("problem.beta", problem.beta),
        R3_DOUBLE("problem.k", problem.k),
        R3_DOUBLE("problem.lower", problem.lower),
        R3_DOUBLE("problem.upper", problem.upper),
        R3_INT("problem.n_ic", problem.n_ic),
        R3_INT("problem.n_bc", problem.n_bc),
        R3_ENUM("problem.ac_match", problem.ac_match, kMatch),
        R3_STRING("problem.reference", problem.reference),
        R3_STRING("problem.geometry", problem.geometry),
        R3_INT("problem.polygon_sides", problem.polygon_sides),
        R3_DOUBLE("problem.polygon_radius", problem.polygon_radius),
        R3_INT("network.width", network.hidden_width),
        R3_INT("network.depth", network.hidden_depth),
        R3_ENUM("network.activation", network.activation, kActivation),
        R3_ENUM("network.variant", network.variant, kVariant),
        R3_ENUM("network.embedding", network.embedding.kind, kEmbedding),
        R3_DOUBLE("network.period", network.embedding.period),
        R3_INT("network.harmonics", network.embedding.harmonics),
        R3_INT("network.embedding_axis", network.embedding.axis),
        R3_INT("train.iterations", train.max_iterations),
        R3_DOUBLE("train.lr", train.adam.lr),
        R3_DOUBLE("train.beta1", train.adam.beta1),
        R3_DOUBLE("train.beta2", train.adam.beta2),
        R3_DOUBLE("train.eps", train.adam.eps),
        R3_DOUBLE("train.decay_rate", train.decay_rate),
        R3_INT("train.decay_period", train.decay_period),
        R3_DOUBLE("train.lambda_r", train.weights.r),
        R3_DOUBLE("train.lambda_ic", train.weights.ic),
        R3_DOUBLE("train.lambda_bc", train.weights.bc),
        R3_INT("train.log_period", train.log_period),
        R3_INT("train.snapshot_period", train.snapshot_period),
        R3_INT("train.checkpoint_period", train.checkpoint_period),
        R3_INT("train.chunk", train.chunk),
        Key{"train.grid_metrics", [](const ExperimentConfig& c) { return std::string(c.train.grid_metrics ? "true" : "false"); },
            [](ExperimentConfig& c, const std::string& v) { c.train.grid_metrics = parse_bool(v); }},
        Key{"sampler.kind", [](const ExperimentConfig& c) { return sampling::to_string(c.train.sampler.kind); },
            [](ExperimentConfig& c, const std::string& v) {
                try {
                    c.train.sampler.kind = sampling::sampler_kind_from_string(v);
                } catch (const UsageError& e) {
                    throw ConfigError(e.what());
                }
            }},
        R3_INT("sampler.n", train.sampler.n),
        R3_DOUBLE("sampler.k", train.sampler.k),
        R3_INT("sampler.m", train.sampler.m),
        R3_INT("sampler.period", train.sampler.period),
        R3_INT("sampler.dense_size", train.sampler.dense_size),
        R3_ENUM("gate.kind", train.gate.kind, kGate),
        R3_DOUBLE("gate.gamma", train.gate.gamma),
        R3_DOUBLE("gate.alpha", train.gate.alpha),
        R3_DOUBLE("gate.eta", train.gate.eta),
        R3_DOUBLE("gate.epsilon", train.gate.epsilon),
        R3_DOUBLE("gate.delta_max", train.gate.delta_max),
        R3_DOUBLE("diagnostics.skewness", thresholds.skewness),
        R3_DOUBLE("diagnostics.kurtosis", thresholds.kurtosis),
        R3_INT("diagnostics.sustain", thresholds.sustain),
        R3_DOUBLE("diagnostics.flat_tolerance", thresholds.flat_tolerance),
    };
    return k;
}

#undef R3_DOUBLE
#undef R3_INT
#undef R3_ENUM
#undef R3_STRING

const Key* find_key(const std::string& name) {
    for (const Key& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void apply(ExperimentConfig& c, const std::string& key, const std::string& value) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown configuration key '" + key + "'");
    try {
        k->set(c, value);
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

void check_problem(const ProblemConfig& p) {
    if (p.n_ic < 1) throw ConfigError("problem.n_ic must be positive");
    if (p.n_bc < 1) throw ConfigError("problem.n_bc must be positive");
    if (p.kind == pde::ProblemKind::harmonic_ode && p.lower > p.upper)
        throw ConfigError("problem.lower must not exceed problem.upper");
    if (p.kind == pde::ProblemKind::eikonal && p.geometry.empty() && (p.polygon_sides < 3 || !(p.polygon_radius > 0)))
        throw ConfigError("problem.polygon_sides must be >= 3 and problem.polygon_radius positive");
}

}  // namespace

Pairs to_pairs(const ExperimentConfig& config) {
    Pairs out;
    for (const Key& k : keys()) out.emplace_back(k.name, k.get(config));
    return out;
}

bool same_config(const ExperimentConfig& a, const ExperimentConfig& b) { return to_pairs(a) == to_pairs(b); }

ExperimentConfig defaults_for(pde::ProblemKind kind) {
    ExperimentConfig c;
    c.problem.kind = kind;
    c.network.input_dim = 2;
    c.network.hidden_width = 50;
    c.network.hidden_depth = 4;
    c.train.weights = {1.0, 100.0, 100.0};
    c.train.adam.lr = 1e-3;
    c.train.decay_rate = 0.9;
    c.train.decay_period = 5000;
    c.train.max_iterations = 30000;
    c.train.checkpoint_period = 5000;
    c.train.snapshot_period = 5000;
    switch (kind) {
        case pde::ProblemKind::convection: break;
        case pde::ProblemKind::allen_cahn:
            c.network.hidden_width = 128;
            c.network.embedding = net::Embedding::periodic(2.0, 1, 0);
            c.problem.reference = "spectral";
            break;
        case pde::ProblemKind::eikonal:
            c.network.hidden_width = 128;
            c.network.variant = net::Variant::modified;
            c.train.weights = {1.0, 500.0, 10.0};
            c.problem.n_ic = 512;
            c.problem.n_bc = 256;
            c.train.max_iterations = 50000;
            break;
        case pde::ProblemKind::harmonic_ode:
            c.network.input_dim = 1;
            c.train.sampler.kind = sampling::SamplerKind::lattice;
            c.problem.n_ic = 1;
            c.problem.n_bc = 1;
            c.train.max_iterations = 50000;
            break;
    }
    return c;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const char* p : {"convection", "allen-cahn"})
            for (const char* s : {"fixed", "dynamic", "r3", "causal-r3", "rar-g", "rad", "rar-d"})
                n.push_back(std::string(p) + "-" + s);
        for (const char* s : {"fixed", "r3"}) n.push_back(std::string("eikonal-") + s);
        for (const char* s : {"fixed", "r3"}) n.push_back(std::string("ode-") + s);
        n.push_back("convection-linf");
        return n;
    }();
    return names;
}

Pairs preset(const std::string& name) {
    if (std::find(preset_names().begin(), preset_names().end(), name) == preset_names().end()) {
        std::string all;
        for (const std::string& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset '" + name + "' (available: " + all + ")");
    }
    const auto dash = name.find('-');
    std::string problem = name.substr(0, dash), sampler = name.substr(dash + 1);
    if (problem == "allen") {
        problem = "allen_cahn";
        sampler = name.substr(std::string("allen-cahn-").size());
    }
    if (problem == "ode") {
        problem = "harmonic_ode";
        if (sampler == "fixed") sampler = "lattice";  // equispaced collocation
    }
    std::replace(sampler.begin(), sampler.end(), '-', '_');
    Pairs p{{"problem.kind", problem}, {"sampler.kind", sampler}};
    if (sampler == "rar_g" || sampler == "rar_d") p.emplace_back("sampler.n", "1000");
    return p;
}

Pairs parse_config_text(const std::string& text, const std::string& origin) {
    Pairs out;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    ExperimentConfig scratch;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string body = raw.substr(0, raw.find('#'));
        if (trim(body).empty()) continue;
        const auto eq = body.find('=');
        auto where = [&](std::size_t col) {
            return origin + ":" + std::to_string(line_no) + ":" + std::to_string(col + 1) + ": ";
        };
        if (eq == std::string::npos) {
            const auto col = body.find_first_not_of(" \t");
            throw ConfigError(where(col) + "expected 'key = value'");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const auto key_col = body.find_first_not_of(" \t");
        if (key.empty()) throw ConfigError(where(eq) + "missing key before '='");
        const Key* k = find_key(key);
        if (!k) throw ConfigError(where(key_col) + "unknown configuration key '" + key + "'");
        const auto value_col = body.find_first_not_of(" \t", eq + 1);
        try {
            k->set(scratch, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where(value_col == std::string::npos ? eq + 1 : value_col) + key + ": " + e.what());
        }
        out.emplace_back(key, value);
    }
    return out;
}

Pairs read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

std::string env_name(const std::string& key) {
    std::string out = "R3PINN_";
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

Pairs env_overrides() {
    Pairs out;
    for (const Key& k : keys())
        if (const char* v = std::getenv(env_name(k.name).c_str())) out.emplace_back(k.name, trim(v));
    return out;
}

ExperimentConfig resolve(const std::vector<Pairs>& layers) {
    pde::ProblemKind kind = pde::ProblemKind::convection;
    for (const Pairs& layer : layers)
        for (const auto& [k, v] : layer)
            if (k == "problem.kind") kind = kProblems.parse(v);
    ExperimentConfig c = defaults_for(kind);
    for (const Pairs& layer : layers)
        for (const auto& [k, v] : layer) apply(c, k, v);
    c.network.seed = c.seed;
    c.network.input_dim = c.problem.kind == pde::ProblemKind::harmonic_ode ? 1 : 2;
    c.train.seed = c.seed;
    try {
        check_problem(c.problem);
        net::validate(c.network);
        c.train.validate();
    } catch (const UsageError& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (c.train.causal() && c.problem.kind != pde::ProblemKind::convection &&
        c.problem.kind != pde::ProblemKind::allen_cahn)
        throw ConfigError("sampler.kind causal_r3 needs a time-dependent problem");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return resolve({read_config_file(path)}); }

std::string manifest_text(const ExperimentConfig& config, const std::vector<std::string>& notes) {
    std::ostringstream o;
    for (const std::string& n : notes) o << "# " << n << '\n';
    for (const auto& [k, v] : to_pairs(config)) o << k << " = " << v << '\n';
    return o.str();
}

pde::Problem build_problem(const ExperimentConfig& c) {
    Rng rng = Rng(c.seed).stream("problem");
    const ProblemConfig& p = c.problem;
    switch (p.kind) {
        case pde::ProblemKind::convection: return pde::convection(p.beta, p.n_ic, p.n_bc, rng);
        case pde::ProblemKind::allen_cahn: {
            std::shared_ptr<const pde::ReferenceGrid> ref;
            if (p.reference == "spectral")
                ref = std::make_shared<pde::ReferenceGrid>(pde::allen_cahn_spectral_reference());
            else if (!p.reference.empty())
                ref = std::make_shared<pde::ReferenceGrid>(pde::load_reference_grid(p.reference));
            return pde::allen_cahn(p.n_ic, p.n_bc, rng, p.ac_match, ref);
        }
        case pde::ProblemKind::eikonal: {
            auto geom = std::make_shared<pde::Geometry2D>(
                p.geometry.empty() ? pde::Geometry2D::regular_polygon(0.0, 0.0, p.polygon_radius, p.polygon_sides)
                                   : pde::load_geometry(p.geometry));
            return pde::eikonal(geom, p.n_ic, p.n_bc, rng);
        }
        case pde::ProblemKind::harmonic_ode: {
            const bool unset = p.lower == p.upper;
            return pde::harmonic_ode(p.k, unset ? -std::numbers::pi / 2 : p.lower, unset ? std::numbers::pi / 2 : p.upper);
        }
    }
    throw ConfigError("unsupported problem kind");
}

net::FieldNetwork build_network(const ExperimentConfig& config) { return net::FieldNetwork::init(config.network); }

namespace {

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, bool dry_run) {
    std::filesystem::create_directories(out);
    const std::string started = utc_now();
    std::vector<std::string> notes{"code_version: " + code_version(), "seed: " + std::to_string(config.seed),
                                   "started: " + started};
    const std::filesystem::path manifest = out / "manifest.txt";
    if (dry_run) {
        notes.push_back("status: dry-run");
        write_text(manifest, manifest_text(config, notes));
        return {};
    }
    notes.push_back("status: running");
    write_text(manifest, manifest_text(config, notes));
    notes.pop_back();

    const pde::Problem problem = build_problem(config);
    train::TrainConfig tc = config.train;
    tc.out_dir = out;
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome outcome;
    try {
        const train::TrainResult r = train::train(problem, build_network(config), tc);
        const std::vector<int> counts = pde::evaluation_counts(problem);
        pde::save_reference_grid(diag::field_grid(r.net, problem, counts), out / "field.grid");
        pde::save_reference_grid(diag::residual_field_grid(r.net, problem, counts), out / "residual.grid");
        net::save_checkpoint(r.net, out / "final.ckpt");
        if (!r.series.empty()) outcome.rel_l2 = r.series.back().rel_l2;
        if (problem.kind == pde::ProblemKind::eikonal && problem.geometry) {
            const pde::Points grid = pde::evaluation_grid(problem);
            const ad::Vector u = r.net.values(grid), ref = pde::sdf_ground_truth(*problem.geometry, grid);
            outcome.miou = diag::miou(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                                      std::span<const double>(ref.data(), static_cast<std::size_t>(ref.size())));
        }
        outcome.failure_windows = static_cast<Index>(diag::failure_indicator(r.series, config.thresholds).windows.size());
        notes.push_back("status: ok");
    } catch (const train::TrainingAborted& e) {
        outcome.status = 2;
        outcome.abort_iteration = e.iteration();
        notes.push_back("status: aborted at iteration " + std::to_string(e.iteration()));
        notes.push_back(std::string("abort_reason: ") + e.what());
        notes.push_back("last_checkpoint: " + (e.last_checkpoint().empty() ? std::string("none") : e.last_checkpoint().string()));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    notes.push_back("wall_clock_seconds: " + num(seconds));
    if (outcome.rel_l2) notes.push_back("final_rel_l2_percent: " + num(*outcome.rel_l2));
    if (outcome.miou) notes.push_back("final_miou: " + num(*outcome.miou));
    if (outcome.status == 0) notes.push_back("failure_windows: " + std::to_string(outcome.failure_windows));
    write_text(manifest, manifest_text(config, notes));
    return outcome;
}

std::vector<RunSummary> compare_runs(const std::vector<std::filesystem::path>& dirs) {
    if (dirs.empty()) throw UsageError("compare needs at least one run directory");
    std::vector<RunSummary> rows;
    for (const auto& dir : dirs) {
        const auto csv = dir / "diagnostics.csv";
        if (!std::filesystem::exists(csv)) throw IoError("missing diagnostics file " + csv.string());
        const diag::Series s = diag::read_csv(csv);
        diag::FailureThresholds th;
        if (std::filesystem::exists(dir / "manifest.txt")) th = load_config(dir / "manifest.txt").thresholds;
        RunSummary row;
        row.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
        if (!s.empty()) {
            row.iterations = s.back().iteration;
            row.rel_l2 = s.back().rel_l2;
            row.eval_counter = s.back().eval_counter;
        }
        row.failure_windows = static_cast<Index>(diag::failure_indicator(s, th).windows.size());
        rows.push_back(row);
    }
    return rows;
}

std::string format_summary(const std::vector<RunSummary>& rows) {
    std::size_t width = 3;
    for (const RunSummary& r : rows) width = std::max(width, r.run.size());
    std::ostringstream o;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %10s %12s %14s %8s\n", static_cast<int>(width), "run", "iterations",
                  "rel_l2_%", "eval_counter", "failures");
    o << buf;
    for (const RunSummary& r : rows) {
        const std::string rel = r.rel_l2 ? [&] {
            char b[32];
            std::snprintf(b, sizeof b, "%.4g", *r.rel_l2);
            return std::string(b);
        }()
                                         : std::string("-");
        std::snprintf(buf, sizeof buf, "%-*s %10ld %12s %14llu %8ld\n", static_cast<int>(width), r.run.c_str(),
                      static_cast<long>(r.iterations), rel.c_str(), static_cast<unsigned long long>(r.eval_counter),
                      static_cast<long>(r.failure_windows));
        o << buf;
    }
    return o.str();
}

}  // namespace r3::run
