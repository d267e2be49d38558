#include "glf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "glf/attention.hpp"
#include "glf/checkpoint.hpp"
#include "glf/errors.hpp"
#include "glf/train.hpp"

namespace glf::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_json(const std::string& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Linear-interpolated quantile; v is copied and sorted.
double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

data::Dataset load_or_generate(const cfg::RunConfig& rc) {
    if (!rc.dataset.empty()) return data::read_events_csv(rc.dataset);
    return data::build_dataset(rc.spec, rc.events, rc.seed, rc.ratio);
}

struct Dims {
    std::size_t channels, seq_len, t_f;
};

Dims dims_of(const data::Dataset& ds) {
    if (ds.events.empty()) throw ConfigError("dataset has no events");
    const data::FaultEvent& ev = ds.events.front();
    return {ev.features.dim(0), ev.features.dim(1), ev.t_f};
}

void require_split(const data::Dataset& ds, data::Split split) {
    if (ds.count(split) == 0)
        throw ConfigError(std::string("dataset has no events in the ") +
                          data::split_name(split) + " split");
}

json base_report(const char* command, const cfg::RunConfig& rc) {
    json rep;
    rep["schema_version"] = 1;
    rep["command"] = command;
    rep["config"] = rc.serialize();
    return rep;
}

json metrics_json(const train::Metrics& m) {
    return {{"mse", m.mse}, {"mae", m.mae}, {"windows", m.windows}, {"horizon", m.horizon}};
}

json epochs_json(const train::Result& r) {
    json arr = json::array();
    for (const train::EpochStat& e : r.epochs)
        arr.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_mse", e.val_mse},
                       {"eta", e.eta}});
    return arr;
}

json groups_json(const train::Result& r) {
    json arr = json::array();
    for (const train::GroupStat& g : r.groups)
        arr.push_back(
            {{"name", g.name}, {"live", g.live}, {"total", g.total}, {"rate", g.rate}});
    return arr;
}

json monitor_json(const train::Result& r) {
    double min_slack = 0.0;
    bool first = true;
    for (const rgsm::DescentRecord& rec : r.monitor.records()) {
        if (first || rec.slack < min_slack) min_slack = rec.slack;
        first = false;
    }
    json m;
    m["steps"] = r.monitor.records().size();
    m["monotonicity_breaks"] = r.monitor.monotonicity_breaks();
    m["min_slack"] = min_slack;
    m["l_ip_estimate"] = r.l_ip;
    if (r.l_ip > 0.0) m["eta_bound"] = r.monitor.eta_bound();
    return m;
}

// Median per-window forward time over up to 8 test windows, 3 passes each.
double per_window_seconds(const std::function<void(const data::FaultWindow&)>& fwd,
                          const data::Dataset& ds) {
    std::vector<double> times;
    std::size_t taken = 0;
    for (std::size_t i : ds.indices(data::Split::Test)) {
        if (taken++ == 8) break;
        const data::FaultWindow w = data::to_window(ds.events[i]);
        fwd(w);  // warm the caches before the timed passes
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = Clock::now();
            fwd(w);
            times.push_back(seconds_since(t0));
        }
    }
    return quantile(times, 0.5);
}

struct TrainedModel {
    train::Result result;
    train::Predictions test;
    json block;   // structural report fields
    json timing;  // wall-clock report fields
};

// Shared train-then-report path for cmd_train and cmd_sweep. Writes
// checkpoint.json, monitor.csv and predictions.csv under out_dir.
TrainedModel train_one(const cfg::RunConfig& rc, cfg::ModelKind kind,
                       const data::Dataset& ds, const std::string& out_dir) {
    ensure_dir(out_dir);
    const Dims d = dims_of(ds);
    const train::Settings s = train::Settings::from(rc, kind, d.channels, d.seq_len, d.t_f);
    require_split(ds, data::Split::Test);

    TrainedModel tm;
    tm.result = train::fit(ds, s);
    const train::Result& r = tm.result;
    const bool is_cnn = kind == cfg::ModelKind::Cnn;

    if (is_cnn)
        ckpt::save_cnn(out_dir + "/checkpoint.json", r.cnn, r.rng_state);
    else
        ckpt::save(out_dir + "/checkpoint.json", r.params, r.rng_state);

    {
        std::ofstream mon(out_dir + "/monitor.csv");
        if (!mon) throw IoError("cannot open for writing: " + out_dir + "/monitor.csv");
        r.monitor.write_csv(mon);
    }

    tm.test = is_cnn ? train::evaluate(r.cnn, ds, data::Split::Test)
                     : train::evaluate(r.params, ds, data::Split::Test,
                                       attn::AttendMode::Dense);
    train::write_predictions_csv(tm.test, ds, data::Split::Test,
                                 out_dir + "/predictions.csv");

    tm.block["model"] = cfg::kind_name(kind);
    tm.block["param_count"] = r.param_count;
    tm.block["epochs"] = epochs_json(r);
    tm.block["epochs_run"] = r.epochs_run;
    tm.block["best_epoch"] = r.best_epoch;
    tm.block["best_val_mse"] = r.best_val;
    tm.block["stopped_early"] = r.stopped_early;
    tm.block["final_train_loss"] = r.final_train_loss;
    tm.block["test"] = metrics_json(tm.test.metrics);
    tm.block["pruning_rate"] = r.pruning_rate;
    tm.block["groups"] = groups_json(r);
    tm.block["monitor"] = monitor_json(r);

    tm.timing["train_seconds"] = r.train_seconds;
    tm.timing["epoch_seconds"] = r.epoch_seconds;
    if (r.l_ip > 0.0) tm.timing["lipschitz_seconds"] = r.lipschitz_seconds;
    if (is_cnn) {
        tm.timing["per_window_seconds"] = per_window_seconds(
            [&](const data::FaultWindow& w) { (void)baseline::cnn_predict(r.cnn, w); }, ds);
    } else {
        tm.timing["per_window_dense_seconds"] = per_window_seconds(
            [&](const data::FaultWindow& w) {
                (void)model::predict(w, r.params, attn::AttendMode::Dense);
            },
            ds);
        tm.timing["per_window_sparse_seconds"] = per_window_seconds(
            [&](const data::FaultWindow& w) {
                (void)model::predict(w, r.params, attn::AttendMode::Sparse);
            },
            ds);
    }
    return tm;
}

}  // namespace

void cmd_gen_data(const cfg::RunConfig& rc, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_text(out_dir + "/config.resolved", rc.serialize());

    const data::Dataset ds = data::build_dataset(rc.spec, rc.events, rc.seed, rc.ratio);
    const std::string csv_path = out_dir + "/dataset.csv";
    data::write_events_csv(ds, csv_path);

    json manifest;
    manifest["schema_version"] = 1;
    manifest["command"] = "gen-data";
    manifest["seed"] = rc.seed;
    manifest["events"] = ds.events.size();
    manifest["splits"] = {{"train", ds.count(data::Split::Train)},
                          {"val", ds.count(data::Split::Val)},
                          {"test", ds.count(data::Split::Test)}};
    manifest["channels"] = rc.spec.channels();
    manifest["samples"] = rc.spec.samples;
    manifest["t_f"] = rc.spec.t_f;
    manifest["dataset_csv"] = "dataset.csv";
    manifest["hash_fnv1a64"] = fnv1a64_hex(read_file(csv_path));
    write_json(out_dir + "/manifest.json", manifest);

    std::cout << "wrote " << ds.events.size() << " events (" << ds.count(data::Split::Train)
              << "/" << ds.count(data::Split::Val) << "/" << ds.count(data::Split::Test)
              << ") to " << csv_path << "\n";
}

void cmd_train(const cfg::RunConfig& rc, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_text(out_dir + "/config.resolved", rc.serialize());

    const data::Dataset ds = load_or_generate(rc);
    TrainedModel tm = train_one(rc, rc.model, ds, out_dir);

    json rep = base_report("train", rc);
    rep.update(tm.block);
    rep["dataset_events"] = ds.events.size();
    rep["timing"] = tm.timing;
    write_json(out_dir + "/report.json", rep);

    std::cout << "trained " << cfg::kind_name(rc.model) << ": best val MSE "
              << tm.result.best_val << " at epoch " << tm.result.best_epoch << ", test MSE "
              << tm.test.metrics.mse << ", pruning rate " << tm.result.pruning_rate << "\n";
}

void cmd_eval(const cfg::RunConfig& rc, const std::string& out_dir) {
    if (rc.checkpoint.empty())
        throw ConfigError("eval needs [run] checkpoint pointing at a trained model");
    ensure_dir(out_dir);
    write_text(out_dir + "/config.resolved", rc.serialize());

    const data::Dataset ds = load_or_generate(rc);
    require_split(ds, rc.split);

    json rep = base_report("eval", rc);
    rep["split"] = data::split_name(rc.split);

    train::Predictions pred;
    const auto t0 = Clock::now();
    if (ckpt::peek_kind(rc.checkpoint) == "cnn") {
        ckpt::CnnCheckpoint ck = ckpt::load_cnn(rc.checkpoint);
        pred = train::evaluate(ck.model, ds, rc.split);
        rep["checkpoint"] = {{"kind", "cnn"},
                             {"param_count", model::count_params(
                                                 baseline::cnn_parameters(ck.model))}};
    } else {
        ckpt::Checkpoint ck = ckpt::load(rc.checkpoint);
        const attn::AttendMode mode =
            ck.pruned ? attn::AttendMode::Sparse : attn::AttendMode::Dense;
        pred = train::evaluate(ck.params, ds, rc.split, mode);
        rep["checkpoint"] = {{"kind", "attention"},
                             {"pruned", ck.pruned},
                             {"prune_threshold", ck.prune_threshold},
                             {"path", ck.pruned ? "sparse" : "dense"},
                             {"param_count",
                              model::count_params(model::enumerate(ck.params))}};
    }
    const double eval_seconds = seconds_since(t0);

    const std::string pred_path = out_dir + "/predictions.csv";
    train::write_predictions_csv(pred, ds, rc.split, pred_path);

    // the emitted CSV must reproduce the reported numbers
    const train::Metrics again = train::recompute_metrics_csv(pred_path);
    if (std::abs(again.mse - pred.metrics.mse) > 1e-12 ||
        std::abs(again.mae - pred.metrics.mae) > 1e-12)
        throw NumericError("predictions CSV does not reproduce the reported metrics");

    rep["metrics"] = metrics_json(pred.metrics);
    rep["recompute_delta"] = {{"mse", again.mse - pred.metrics.mse},
                              {"mae", again.mae - pred.metrics.mae}};
    rep["timing"] = {{"eval_seconds", eval_seconds}};
    write_json(out_dir + "/report.json", rep);

    std::cout << "eval " << data::split_name(rc.split) << ": MSE " << pred.metrics.mse
              << ", MAE " << pred.metrics.mae << " over " << pred.metrics.windows
              << " windows\n";
}

void cmd_prune(const cfg::RunConfig& rc, const std::string& out_dir) {
    if (rc.checkpoint.empty())
        throw ConfigError("prune needs [run] checkpoint pointing at a trained model");
    ensure_dir(out_dir);
    write_text(out_dir + "/config.resolved", rc.serialize());

    if (ckpt::peek_kind(rc.checkpoint) == "cnn")
        throw ConfigError("cnn checkpoints have no query groups to prune");
    ckpt::Checkpoint ck = ckpt::load(rc.checkpoint);

    const double threshold = rc.threshold;
    std::size_t zeroed_columns = 0, dead = 0, total = 0;
    json groups = json::array();
    for (const model::ParamRef& ref : model::enumerate(ck.params)) {
        if (ref.cls != model::ParamClass::Group) continue;
        Tensor wq = ref.tensor;
        const attn::QueryMask mask = attn::extract_mask(wq, threshold);
        const std::size_t rows = wq.dim(0), cols = wq.dim(1);
        std::size_t changed = 0;
        for (std::size_t g = 0; g < cols; ++g) {
            if (mask[g]) continue;
            for (std::size_t i = 0; i < rows; ++i) {
                if (wq.at(i, g) != 0.0) ++changed;
                wq.at(i, g) = 0.0;
            }
        }
        zeroed_columns += mask.size() - attn::live_count(mask);
        dead += mask.size() - attn::live_count(mask);
        total += mask.size();
        groups.push_back({{"name", ref.name},
                          {"live", attn::live_count(mask)},
                          {"total", mask.size()},
                          {"rate", attn::pruning_rate(mask)},
                          {"entries_zeroed", changed}});
    }

    // head masks imaged from the first grouped-attention block
    attn::emit_sparsity_mask(ck.params.encoder.at(0).attn, threshold, out_dir);

    ckpt::save(out_dir + "/checkpoint.json", ck.params, ck.rng_state, true, threshold);

    json rep = base_report("prune", rc);
    rep["threshold"] = threshold;
    rep["groups"] = groups;
    rep["dead_columns"] = zeroed_columns;
    rep["pruning_rate"] = total == 0 ? 0.0 : static_cast<double>(dead) / total;
    rep["mask_source"] = "encoder0.attn";
    rep["timing"] = json::object();
    write_json(out_dir + "/report.json", rep);

    std::cout << "pruned " << zeroed_columns << " of " << total
              << " query columns (threshold " << threshold << ") into " << out_dir
              << "/checkpoint.json\n";
}

void cmd_bench(const cfg::RunConfig& rc, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_text(out_dir + "/config.resolved", rc.serialize());

    std::ostringstream csv;
    csv << "n,path,reps,median_seconds,iqr_seconds\n";
    json rows = json::array();

    for (std::size_t n : rc.n_grid) {
        // weights are rebuilt per sequence length because the query, key and
        // value maps are length-bound; a chosen fraction of query columns is
        // zeroed outright so the sparse path has real work to skip
        Rng rng(rc.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(n)));
        attn::AttentionWeights w =
            attn::AttentionWeights::init(rc.heads, rc.d_model, n, rng, rc.init, rc.init);
        const std::size_t kill =
            static_cast<std::size_t>(rc.pruning * static_cast<double>(n));
        for (std::size_t h = 0; h < rc.heads; ++h) {
            std::vector<std::size_t> cols(n);
            for (std::size_t i = 0; i < n; ++i) cols[i] = i;
            for (std::size_t i = n; i > 1; --i)
                std::swap(cols[i - 1], cols[rng.below(i)]);
            for (std::size_t k = 0; k < kill; ++k)
                for (std::size_t i = 0; i < rc.d_model; ++i)
                    w.wq[h].at(i, cols[k]) = 0.0;
        }
        Tensor x = Tensor::randn({n, rc.d_model}, rng, 1.0);

        (void)attn::multi_head(x, w, attn::AttendMode::Dense, rc.scale_dim);
        (void)attn::multi_head(x, w, attn::AttendMode::Sparse, rc.scale_dim);

        std::vector<double> dense_t, sparse_t;
        for (std::size_t rep = 0; rep < rc.reps; ++rep) {
            auto t0 = Clock::now();
            (void)attn::multi_head(x, w, attn::AttendMode::Dense, rc.scale_dim);
            dense_t.push_back(seconds_since(t0));
            t0 = Clock::now();
            (void)attn::multi_head(x, w, attn::AttendMode::Sparse, rc.scale_dim);
            sparse_t.push_back(seconds_since(t0));
        }

        const double dm = quantile(dense_t, 0.5), sm = quantile(sparse_t, 0.5);
        const double diqr = quantile(dense_t, 0.75) - quantile(dense_t, 0.25);
        const double siqr = quantile(sparse_t, 0.75) - quantile(sparse_t, 0.25);
        const bool has_iqr = rc.reps > 1;

        csv << n << ",dense," << rc.reps << ',' << dm << ',';
        if (has_iqr)
            csv << diqr << '\n';
        else
            csv << "n/a\n";
        csv << n << ",sparse," << rc.reps << ',' << sm << ',';
        if (has_iqr)
            csv << siqr << '\n';
        else
            csv << "n/a\n";

        json row;
        row["n"] = n;
        row["reps"] = rc.reps;
        row["dense_median_seconds"] = dm;
        row["sparse_median_seconds"] = sm;
        if (has_iqr) {
            row["dense_iqr_seconds"] = diqr;
            row["sparse_iqr_seconds"] = siqr;
        } else {
            row["dense_iqr_seconds"] = nullptr;
            row["sparse_iqr_seconds"] = nullptr;
        }
        row["speedup"] = sm > 0.0 ? dm / sm : 0.0;
        rows.push_back(row);

        std::cout << "n=" << n << ": dense " << dm << "s, sparse " << sm << "s, speedup "
                  << (sm > 0.0 ? dm / sm : 0.0) << "\n";
    }

    write_text(out_dir + "/bench.csv", csv.str());

    json rep = base_report("bench", rc);
    rep["n_grid"] = rc.n_grid;
    rep["reps"] = rc.reps;
    rep["pruning_fraction"] = rc.pruning;
    rep["heads"] = rc.heads;
    rep["d_model"] = rc.d_model;
    rep["timing"] = {{"rows", rows}};  // measured numbers are wall-clock
    write_json(out_dir + "/report.json", rep);
}

void cmd_sweep(const cfg::RunConfig& rc, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_text(out_dir + "/config.resolved", rc.serialize());

    const data::Dataset ds = load_or_generate(rc);
    require_split(ds, data::Split::Test);

    json models = json::object();
    json timing = json::object();
    std::vector<std::pair<double, std::string>> by_mse;

    for (const std::string& name : rc.sweep_models) {
        if (name == "prony") {
            const auto t0 = Clock::now();
            const train::PronySweep sw = train::prony_order_sweep(ds, rc.prony_orders);
            const train::Predictions test =
                train::evaluate_prony(ds, data::Split::Test, sw.best_order);
            ensure_dir(out_dir + "/prony");
            train::write_predictions_csv(test, ds, data::Split::Test,
                                         out_dir + "/prony/predictions.csv");
            json orders = json::array();
            for (const auto& [p, mse] : sw.val_mse)
                orders.push_back({{"order", p}, {"val_mse", mse}});
            models["prony"] = {{"model", "prony"},
                               {"best_order", sw.best_order},
                               {"best_val_mse", sw.best_val_mse},
                               {"order_sweep", orders},
                               {"test", metrics_json(test.metrics)}};
            timing["prony"] = {{"sweep_seconds", seconds_since(t0)}};
            by_mse.emplace_back(test.metrics.mse, "prony");
            std::cout << "prony: best order " << sw.best_order << ", test MSE "
                      << test.metrics.mse << "\n";
        } else {
            const cfg::ModelKind kind = cfg::kind_from_name(name);
            TrainedModel tm = train_one(rc, kind, ds, out_dir + "/" + name);
            models[name] = tm.block;
            timing[name] = tm.timing;
            by_mse.emplace_back(tm.test.metrics.mse, name);
            std::cout << name << ": test MSE " << tm.test.metrics.mse << ", pruning rate "
                      << tm.result.pruning_rate << ", params " << tm.result.param_count
                      << "\n";
        }
    }

    std::sort(by_mse.begin(), by_mse.end());
    json order = json::array();
    for (const auto& [mse, name] : by_mse) order.push_back(name);

    json rep = base_report("sweep", rc);
    rep["dataset_events"] = ds.events.size();
    rep["models"] = models;
    rep["test_mse_ascending"] = order;
    rep["timing"] = timing;
    write_json(out_dir + "/report.json", rep);
}

int run(int argc, char** argv) {
    CLI::App app{"grouped-sparse attention lab for post-fault voltage prediction"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    std::uint64_t seed_override = 0;
    bool have_seed = false;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "generate a synthetic event dataset"},
        {"train", "train the configured model and write a report"},
        {"eval", "evaluate a checkpoint on a dataset split"},
        {"prune", "zero dead query columns and emit head masks"},
        {"bench", "time dense vs sparse attention across sequence lengths"},
        {"sweep", "train and compare the whole model zoo"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "run configuration file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_override, "output directory (overrides [run] out_dir)");
        sub->add_option("--seed", seed_override, "seed override")
            ->each([&](const std::string&) { have_seed = true; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        cfg::RunConfig rc = cfg::load_config(config_path);
        if (have_seed) rc.seed = seed_override;
        if (!out_override.empty()) rc.out_dir = out_override;
        rc.validate();

        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "gen-data")
            cmd_gen_data(rc, rc.out_dir);
        else if (sub == "train")
            cmd_train(rc, rc.out_dir);
        else if (sub == "eval")
            cmd_eval(rc, rc.out_dir);
        else if (sub == "prune")
            cmd_prune(rc, rc.out_dir);
        else if (sub == "bench")
            cmd_bench(rc, rc.out_dir);
        else
            cmd_sweep(rc, rc.out_dir);
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace glf::cli
