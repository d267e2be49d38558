#include "glf/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "glf/errors.hpp"

namespace glf::cfg {

std::string kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Glasso: return "glasso";
        case ModelKind::Lasso: return "lasso";
        case ModelKind::Dense: return "dense";
        case ModelKind::Cnn: return "cnn";
    }
    return "?";
}

ModelKind kind_from_name(const std::string& name) {
    if (name == "glasso") return ModelKind::Glasso;
    if (name == "lasso") return ModelKind::Lasso;
    if (name == "dense") return ModelKind::Dense;
    if (name == "cnn") return ModelKind::Cnn;
    throw ConfigError("unknown model kind '" + name + "' (want glasso|lasso|dense|cnn)");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Parse context for one key; renders as e.g. "[optim] eta0 (run.ini:12)".
struct Ctx {
    const std::string& origin;
    int line;
    std::string section;
    std::string key;

    std::string where() const {
        return "[" + section + "] " + key + " (" + origin + ":" + std::to_string(line) + ")";
    }
    [[noreturn]] void bad_value(const std::string& value) const {
        throw ConfigError("bad value '" + value + "' for " + where());
    }
};

double parse_double(const std::string& v, const Ctx& ctx) {
    if (v.empty()) ctx.bad_value(v);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size()) ctx.bad_value(v);
    return out;
}

std::uint64_t parse_u64(const std::string& v, const Ctx& ctx) {
    if (v.empty() || v[0] == '-' || v[0] == '+') ctx.bad_value(v);
    char* end = nullptr;
    const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size()) ctx.bad_value(v);
    return out;
}

bool parse_bool(const std::string& v, const Ctx& ctx) {
    if (v == "true") return true;
    if (v == "false") return false;
    ctx.bad_value(v);
}

std::vector<std::string> split_list(const std::string& v, const Ctx& ctx) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) ctx.bad_value(v);
        out.push_back(item);
    }
    if (out.empty()) ctx.bad_value(v);
    return out;
}

std::vector<double> parse_doubles(const std::string& v, const Ctx& ctx) {
    std::vector<double> out;
    for (const std::string& item : split_list(v, ctx)) out.push_back(parse_double(item, ctx));
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& v, const Ctx& ctx) {
    std::vector<std::size_t> out;
    for (const std::string& item : split_list(v, ctx))
        out.push_back(static_cast<std::size_t>(parse_u64(item, ctx)));
    return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, double>)
            out += fmt_double(xs[i]);
        else if constexpr (std::is_same_v<T, std::string>)
            out += xs[i];
        else
            out += std::to_string(xs[i]);
    }
    return out;
}

// Per-event mode lists arrive as four parallel keys; collected during the
// scan and merged after so order in the file does not matter.
struct ModeLists {
    std::vector<double> damping, freq, amp, phase;
    bool any = false;
};

void apply_key(RunConfig& c, ModeLists& ml, const Ctx& ctx, const std::string& value) {
    const std::string& s = ctx.section;
    const std::string& k = ctx.key;

    if (s == "run") {
        if (k == "seed") { c.seed = parse_u64(value, ctx); return; }
        if (k == "out_dir") { c.out_dir = value; return; }
        if (k == "model") {
            try { c.model = kind_from_name(value); } catch (const ConfigError&) { ctx.bad_value(value); }
            return;
        }
        if (k == "dataset") { c.dataset = value; return; }
        if (k == "checkpoint") { c.checkpoint = value; return; }
        if (k == "split") {
            try { c.split = data::split_from_name(value); } catch (const Error&) { ctx.bad_value(value); }
            return;
        }
    } else if (s == "data") {
        if (k == "events") { c.events = parse_u64(value, ctx); return; }
        if (k == "bus_count") { c.spec.bus_count = parse_u64(value, ctx); return; }
        if (k == "line_count") { c.spec.line_count = parse_u64(value, ctx); return; }
        if (k == "samples") { c.spec.samples = parse_u64(value, ctx); return; }
        if (k == "sample_rate") { c.spec.sample_rate = parse_double(value, ctx); return; }
        if (k == "t_f") { c.spec.t_f = parse_u64(value, ctx); return; }
        if (k == "v_ss") { c.spec.v_ss = parse_double(value, ctx); return; }
        if (k == "noise") { c.spec.noise = parse_double(value, ctx); return; }
        if (k == "amp_jitter") { c.spec.amp_jitter = parse_double(value, ctx); return; }
        if (k == "phase_jitter") { c.spec.phase_jitter = parse_double(value, ctx); return; }
        if (k == "mode_damping") { ml.damping = parse_doubles(value, ctx); ml.any = true; return; }
        if (k == "mode_freq") { ml.freq = parse_doubles(value, ctx); ml.any = true; return; }
        if (k == "mode_amp") { ml.amp = parse_doubles(value, ctx); ml.any = true; return; }
        if (k == "mode_phase") { ml.phase = parse_doubles(value, ctx); ml.any = true; return; }
        if (k == "train_ratio") { c.ratio.train = parse_double(value, ctx); return; }
        if (k == "val_ratio") { c.ratio.val = parse_double(value, ctx); return; }
        if (k == "test_ratio") { c.ratio.test = parse_double(value, ctx); return; }
    } else if (s == "model") {
        if (k == "d_model") { c.d_model = parse_u64(value, ctx); return; }
        if (k == "heads") { c.heads = parse_u64(value, ctx); return; }
        if (k == "kernel") { c.kernel = parse_u64(value, ctx); return; }
        if (k == "enc_layers") { c.enc_layers = parse_u64(value, ctx); return; }
        if (k == "scale_dim") { c.scale_dim = parse_u64(value, ctx); return; }
        if (k == "wq_init") { c.wq_init = parse_double(value, ctx); return; }
        if (k == "init") { c.init = parse_double(value, ctx); return; }
        if (k == "bias") { c.bias = parse_bool(value, ctx); return; }
        if (k == "cnn_width") { c.cnn_width = parse_u64(value, ctx); return; }
        if (k == "cnn_depth") { c.cnn_depth = parse_u64(value, ctx); return; }
    } else if (s == "optim") {
        if (k == "mode") {
            if (value == "gd") { c.mode = rgsm::OptimMode::Gd; return; }
            if (value == "adam") { c.mode = rgsm::OptimMode::Adam; return; }
            ctx.bad_value(value);
        }
        if (k == "eta0") { c.eta0 = parse_double(value, ctx); return; }
        if (k == "decay") { c.decay = parse_double(value, ctx); return; }
        if (k == "decay_every") { c.decay_every = parse_u64(value, ctx); return; }
        if (k == "beta") { c.beta = parse_double(value, ctx); return; }
        if (k == "lambda") { c.lambda = parse_double(value, ctx); return; }
        if (k == "penalty") { c.penalty = value; return; }
        if (k == "batch") { c.batch = parse_u64(value, ctx); return; }
        if (k == "epochs") { c.epochs = parse_u64(value, ctx); return; }
        if (k == "patience") { c.patience = parse_u64(value, ctx); return; }
    } else if (s == "eval") {
        if (k == "threshold") { c.threshold = parse_double(value, ctx); return; }
        if (k == "metrics") { c.metrics = split_list(value, ctx); return; }
    } else if (s == "bench") {
        if (k == "n_grid") { c.n_grid = parse_sizes(value, ctx); return; }
        if (k == "reps") { c.reps = parse_u64(value, ctx); return; }
        if (k == "pruning") { c.pruning = parse_double(value, ctx); return; }
    } else if (s == "sweep") {
        if (k == "models") { c.sweep_models = split_list(value, ctx); return; }
        if (k == "prony_orders") { c.prony_orders = parse_sizes(value, ctx); return; }
    } else {
        throw ConfigError("unknown config section [" + s + "] (" + ctx.origin + ":" +
                          std::to_string(ctx.line) + ")");
    }
    throw ConfigError("unknown config key " + ctx.where());
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
    RunConfig c;
    ModeLists ml;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("malformed section header '" + line + "' (" + origin + ":" +
                                  std::to_string(line_no) + ")");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value, got '" + line + "' (" + origin + ":" +
                              std::to_string(line_no) + ")");
        Ctx ctx{origin, line_no, section, trim(line.substr(0, eq))};
        if (ctx.section.empty())
            throw ConfigError("key '" + ctx.key + "' appears before any [section] (" + origin +
                              ":" + std::to_string(line_no) + ")");
        if (ctx.key.empty())
            throw ConfigError("empty key (" + origin + ":" + std::to_string(line_no) + ")");
        if (!seen.insert(ctx.section + "." + ctx.key).second)
            throw ConfigError("duplicate config key " + ctx.where());
        apply_key(c, ml, ctx, trim(line.substr(eq + 1)));
    }

    if (ml.any) {
        const std::size_t m = ml.damping.size();
        if (ml.freq.size() != m || ml.amp.size() != m || ml.phase.size() != m || m == 0)
            throw ConfigError(
                "mode lists must be present together with equal lengths "
                "([data] mode_damping/mode_freq/mode_amp/mode_phase)");
        c.spec.modes.clear();
        for (std::size_t i = 0; i < m; ++i)
            c.spec.modes.push_back({ml.damping[i], ml.freq[i], ml.amp[i], ml.phase[i]});
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

void RunConfig::validate() const {
    spec.validate();
    const double ratio_sum = ratio.train + ratio.val + ratio.test;
    if (!(std::abs(ratio_sum - 1.0) <= 1e-9))
        throw ConfigError("split ratios must sum to 1, got " + fmt_double(ratio_sum) +
                          " ([data] train_ratio + val_ratio + test_ratio)");
    if (ratio.train <= 0.0 || ratio.val <= 0.0 || ratio.test <= 0.0)
        throw ConfigError("split ratios must be positive ([data] train_ratio/val_ratio/test_ratio)");
    if (events < 3) throw ConfigError("[data] events must be at least 3 (one per split)");
    if (spec.modes.empty())
        throw ConfigError("[data] mode lists must define at least one mode");

    if (penalty != "auto" && penalty != "none" && penalty != "l1" && penalty != "group")
        throw ConfigError("[optim] penalty must be auto|none|l1|group, got '" + penalty + "'");
    (void)penalty_spec();  // rejects cnn with an explicit l1/group penalty
    if (eta0 <= 0.0) throw ConfigError("[optim] eta0 must be positive");
    if (decay <= 0.0 || decay > 1.0) throw ConfigError("[optim] decay must be in (0, 1]");
    if (decay_every == 0) throw ConfigError("[optim] decay_every must be positive");
    if (beta < 0.0) throw ConfigError("[optim] beta must be nonnegative");
    if (lambda < 0.0) throw ConfigError("[optim] lambda must be nonnegative");
    if (batch == 0) throw ConfigError("[optim] batch must be positive");
    if (epochs == 0) throw ConfigError("[optim] epochs must be positive");

    if (threshold < 0.0) throw ConfigError("[eval] threshold must be nonnegative");
    if (metrics.empty()) throw ConfigError("[eval] metrics must not be empty");
    for (const std::string& m : metrics)
        if (m != "mse" && m != "mae")
            throw ConfigError("[eval] metrics: unknown metric '" + m + "' (want mse|mae)");

    if (n_grid.empty()) throw ConfigError("[bench] n_grid must not be empty");
    for (std::size_t n : n_grid)
        if (n < 2) throw ConfigError("[bench] n_grid entries must be at least 2");
    if (reps == 0) throw ConfigError("[bench] reps must be positive");
    if (pruning < 0.0 || pruning >= 1.0) throw ConfigError("[bench] pruning must be in [0, 1)");

    if (sweep_models.empty()) throw ConfigError("[sweep] models must not be empty");
    for (const std::string& m : sweep_models)
        if (m != "glasso" && m != "lasso" && m != "dense" && m != "cnn" && m != "prony")
            throw ConfigError("[sweep] models: unknown model '" + m + "'");
    if (prony_orders.empty()) throw ConfigError("[sweep] prony_orders must not be empty");
    for (std::size_t p : prony_orders)
        if (p == 0) throw ConfigError("[sweep] prony_orders entries must be positive");

    // dimension checks that do not need a dataset
    model_config(spec.channels(), spec.samples, spec.t_f).validate();
    cnn_config(spec.channels(), spec.samples, spec.t_f).validate();
}

rgsm::PenaltySpec RunConfig::penalty_spec() const { return penalty_spec(model); }

rgsm::PenaltySpec RunConfig::penalty_spec(ModelKind kind) const {
    std::string resolved = penalty;
    if (resolved == "auto") {
        switch (kind) {
            case ModelKind::Glasso: resolved = "group"; break;
            case ModelKind::Lasso: resolved = "l1"; break;
            case ModelKind::Dense:
            case ModelKind::Cnn: resolved = "none"; break;
        }
    }
    if (kind == ModelKind::Cnn && resolved != "none")
        throw ConfigError("cnn has no query groups; [optim] penalty must be none or auto");
    if (resolved == "none") return {rgsm::PenaltyKind::None, 0.0};
    if (resolved == "l1") return {rgsm::PenaltyKind::Lasso, lambda};
    return {rgsm::PenaltyKind::GroupLasso, lambda};
}

model::ModelConfig RunConfig::model_config(std::size_t channels, std::size_t seq_len,
                                           std::size_t t_f) const {
    model::ModelConfig mc;
    mc.channels = channels;
    mc.seq_len = seq_len;
    mc.t_f = t_f;
    mc.d_model = d_model;
    mc.heads = heads;
    mc.kernel = kernel;
    mc.enc_layers = enc_layers;
    mc.scale_dim = scale_dim;
    mc.wq_init = wq_init;
    mc.init = init;
    mc.bias = bias;
    return mc;
}

baseline::CnnConfig RunConfig::cnn_config(std::size_t channels, std::size_t seq_len,
                                          std::size_t t_f) const {
    baseline::CnnConfig cc;
    cc.channels = channels;
    cc.seq_len = seq_len;
    cc.t_f = t_f;
    cc.width = cnn_width;
    cc.depth = cnn_depth;
    cc.kernel = kernel;
    cc.init = init;
    return cc;
}

std::string RunConfig::serialize() const {
    std::vector<double> md, mf, ma, mp;
    for (const data::Mode& m : spec.modes) {
        md.push_back(m.damping);
        mf.push_back(m.freq);
        ma.push_back(m.amp);
        mp.push_back(m.phase);
    }
    // "auto" resolves against the selected model so the echo is standalone
    const rgsm::PenaltySpec pen = penalty_spec();
    const char* pen_name = pen.kind == rgsm::PenaltyKind::None
                               ? "none"
                               : (pen.kind == rgsm::PenaltyKind::Lasso ? "l1" : "group");

    std::ostringstream out;
    out << "[run]\n"
        << "seed = " << seed << "\n"
        << "out_dir = " << out_dir << "\n"
        << "model = " << kind_name(model) << "\n"
        << "dataset = " << dataset << "\n"
        << "checkpoint = " << checkpoint << "\n"
        << "split = " << data::split_name(split) << "\n\n"
        << "[data]\n"
        << "events = " << events << "\n"
        << "bus_count = " << spec.bus_count << "\n"
        << "line_count = " << spec.line_count << "\n"
        << "samples = " << spec.samples << "\n"
        << "sample_rate = " << fmt_double(spec.sample_rate) << "\n"
        << "t_f = " << spec.t_f << "\n"
        << "v_ss = " << fmt_double(spec.v_ss) << "\n"
        << "noise = " << fmt_double(spec.noise) << "\n"
        << "amp_jitter = " << fmt_double(spec.amp_jitter) << "\n"
        << "phase_jitter = " << fmt_double(spec.phase_jitter) << "\n"
        << "mode_damping = " << join(md) << "\n"
        << "mode_freq = " << join(mf) << "\n"
        << "mode_amp = " << join(ma) << "\n"
        << "mode_phase = " << join(mp) << "\n"
        << "train_ratio = " << fmt_double(ratio.train) << "\n"
        << "val_ratio = " << fmt_double(ratio.val) << "\n"
        << "test_ratio = " << fmt_double(ratio.test) << "\n\n"
        << "[model]\n"
        << "d_model = " << d_model << "\n"
        << "heads = " << heads << "\n"
        << "kernel = " << kernel << "\n"
        << "enc_layers = " << enc_layers << "\n"
        << "scale_dim = " << scale_dim << "\n"
        << "wq_init = " << fmt_double(wq_init) << "\n"
        << "init = " << fmt_double(init) << "\n"
        << "bias = " << (bias ? "true" : "false") << "\n"
        << "cnn_width = " << cnn_width << "\n"
        << "cnn_depth = " << cnn_depth << "\n\n"
        << "[optim]\n"
        << "mode = " << rgsm::mode_name(mode) << "\n"
        << "eta0 = " << fmt_double(eta0) << "\n"
        << "decay = " << fmt_double(decay) << "\n"
        << "decay_every = " << decay_every << "\n"
        << "beta = " << fmt_double(beta) << "\n"
        << "lambda = " << fmt_double(lambda) << "\n"
        << "penalty = " << pen_name << "\n"
        << "batch = " << batch << "\n"
        << "epochs = " << epochs << "\n"
        << "patience = " << patience << "\n\n"
        << "[eval]\n"
        << "threshold = " << fmt_double(threshold) << "\n"
        << "metrics = " << join(metrics) << "\n\n"
        << "[bench]\n"
        << "n_grid = " << join(n_grid) << "\n"
        << "reps = " << reps << "\n"
        << "pruning = " << fmt_double(pruning) << "\n\n"
        << "[sweep]\n"
        << "models = " << join(sweep_models) << "\n"
        << "prony_orders = " << join(prony_orders) << "\n";
    return out.str();
}

}  // namespace glf::cfg
