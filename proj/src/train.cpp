#include "glf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "glf/attention.hpp"
#include "glf/errors.hpp"

namespace glf::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Settings Settings::from(const cfg::RunConfig& rc, cfg::ModelKind kind,
                        std::size_t channels, std::size_t seq_len, std::size_t t_f) {
    Settings s;
    s.kind = kind;
    s.dims = rc.model_config(channels, seq_len, t_f);
    s.cnn_dims = rc.cnn_config(channels, seq_len, t_f);
    s.penalty = rc.penalty_spec(kind);
    s.mode = rc.mode;
    s.eta0 = rc.eta0;
    s.decay = rc.decay;
    s.decay_every = rc.decay_every;
    s.beta = rc.beta;
    s.batch = rc.batch;
    s.epochs = rc.epochs;
    s.patience = rc.patience;
    s.seed = rc.seed;
    s.threshold = rc.threshold;
    return s;
}

Result fit(const data::Dataset& ds, const Settings& s) {
    const bool is_cnn = s.kind == cfg::ModelKind::Cnn;
    if (is_cnn) {
        s.cnn_dims.validate();
        if (s.penalty.kind != rgsm::PenaltyKind::None)
            throw ConfigError("cnn has no query groups; penalty must be none");
    } else {
        s.dims.validate();
    }
    if (s.batch == 0) throw ConfigError("batch size must be positive");
    if (s.epochs == 0) throw ConfigError("epoch count must be positive");

    const std::vector<std::size_t> train_idx = ds.indices(data::Split::Train);
    const std::vector<std::size_t> val_idx = ds.indices(data::Split::Val);
    if (train_idx.empty() || val_idx.empty())
        throw ConfigError("training needs nonempty train and val splits");

    std::vector<data::FaultWindow> windows;
    windows.reserve(ds.events.size());
    for (const data::FaultEvent& ev : ds.events) windows.push_back(data::to_window(ev));

    const auto t_start = Clock::now();
    Rng master(s.seed);
    Rng init_rng = master.fork(0);

    Result res;
    res.kind = s.kind;
    std::vector<model::ParamRef> refs;
    if (is_cnn) {
        res.cnn = baseline::Cnn1dModel::init(s.cnn_dims, init_rng);
        refs = baseline::cnn_parameters(res.cnn);
    } else {
        res.params = model::ModelParams::init(s.dims, init_rng);
        refs = model::enumerate(res.params);
    }
    res.param_count = model::count_params(refs);

    std::vector<Tensor> theta, grouped;
    std::vector<Tensor> all_params;
    for (const model::ParamRef& r : refs) {
        (r.cls == model::ParamClass::Group ? grouped : theta).push_back(r.tensor);
        all_params.push_back(r.tensor);
    }

    rgsm::RgsmState opt =
        rgsm::RgsmState::make(theta, grouped, s.penalty, s.beta, s.eta0, s.mode);

    auto forward_one = [&](std::size_t i, Tape* tape) -> Tensor {
        if (is_cnn) {
            Tensor y = baseline::cnn_forward(res.cnn, windows[i].x_de, tape);
            return mse_loss(y, windows[i].target, tape);
        }
        return model::forward_loss(windows[i], res.params, tape).loss;
    };

    auto zero_grads = [&] {
        for (const model::ParamRef& r : refs) {
            Tensor t = r.tensor;
            t.zero_grad();
        }
    };

    // Mean loss over idx with gradients accumulated into the parameter grad
    // slots, scaled to the mean.
    auto batch_grad = [&](const std::vector<std::size_t>& idx) -> double {
        zero_grads();
        double total = 0.0;
        for (std::size_t i : idx) {
            Tape tape;
            Tensor loss = forward_one(i, &tape);
            total += loss.value();
            tape.backward(loss);
        }
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (const model::ParamRef& r : refs) {
            Tensor t = r.tensor;
            for (double& g : t.grad()) g *= inv;
        }
        return total * inv;
    };

    auto batch_loss = [&](const std::vector<std::size_t>& idx) -> double {
        double total = 0.0;
        for (std::size_t i : idx) total += forward_one(i, nullptr).value();
        return total / static_cast<double>(idx.size());
    };

    // gd mode: curvature estimate for the descent monitor and the optional
    // bound-relative step size.
    double eta_base = s.eta0;
    if (s.mode == rgsm::OptimMode::Gd && s.lipschitz_samples >= 2) {
        const auto t_lip = Clock::now();
        Rng lip_rng = master.fork(1);
        res.l_ip = rgsm::estimate_lipschitz([&] { (void)batch_grad(train_idx); }, all_params,
                                            s.lipschitz_samples, s.lipschitz_radius, lip_rng);
        res.lipschitz_seconds = seconds_since(t_lip);
        if (s.eta_bound_fraction > 0.0)
            eta_base = s.eta_bound_fraction * 2.0 / (s.beta + res.l_ip);
    }
    res.monitor = rgsm::DescentMonitor(s.beta, res.l_ip);

    const bool penalized = s.penalty.kind != rgsm::PenaltyKind::None;
    auto val_mse = [&]() -> double {
        std::vector<std::vector<double>> saved;
        if (penalized) {
            for (Tensor& w : opt.w) {
                saved.push_back(w.data());
                const Tensor px = rgsm::prox_apply(w, s.penalty);
                std::copy(px.data().begin(), px.data().end(), w.data().begin());
            }
        }
        double se = 0.0;
        std::size_t n = 0;
        for (std::size_t i : val_idx) {
            Tensor y = is_cnn ? baseline::cnn_predict(res.cnn, windows[i])
                              : model::predict(windows[i], res.params);
            const std::vector<double>& t = windows[i].target.data();
            for (std::size_t j = 0; j < t.size(); ++j) {
                const double d = y.data()[j] - t[j];
                se += d * d;
            }
            n += t.size();
        }
        if (penalized)
            for (std::size_t k = 0; k < opt.w.size(); ++k)
                std::copy(saved[k].begin(), saved[k].end(), opt.w[k].data().begin());
        return se / static_cast<double>(n);
    };

    res.best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values;
    double last_finite = std::numeric_limits<double>::quiet_NaN();
    std::size_t step_index = 0;

    for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
        const auto t_epoch = Clock::now();
        opt.eta = rgsm::lr_schedule(epoch, eta_base, s.decay, s.decay_every);
        double epoch_loss = 0.0;
        try {
            if (s.mode == rgsm::OptimMode::Gd) {
                const double f_pre = batch_grad(train_idx);
                rgsm::refresh_split(opt);
                const double l_before =
                    rgsm::relaxed_loss(f_pre, opt.w, opt.u, s.penalty, s.beta);
                const double sq = rgsm::rgsm_step(opt);
                const double f_post = batch_loss(train_idx);
                const double l_after =
                    rgsm::relaxed_loss(f_post, opt.w, opt.u, s.penalty, s.beta);
                res.monitor.observe(step_index++, l_before, l_after, sq, opt.eta, s.mode);
                epoch_loss = f_pre;
            } else {
                std::vector<std::size_t> order = train_idx;
                Rng shuffle_rng = master.fork(1000 + epoch);
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.below(i)]);
                double sum = 0.0;
                std::size_t batches = 0;
                for (std::size_t at = 0; at < order.size(); at += s.batch) {
                    const std::size_t end = std::min(order.size(), at + s.batch);
                    const std::vector<std::size_t> idx(order.begin() + at, order.begin() + end);
                    const double f_pre = batch_grad(idx);
                    rgsm::refresh_split(opt);
                    const double l_before =
                        rgsm::relaxed_loss(f_pre, opt.w, opt.u, s.penalty, s.beta);
                    const double sq = rgsm::rgsm_step(opt);
                    const double f_post = batch_loss(idx);
                    const double l_after =
                        rgsm::relaxed_loss(f_post, opt.w, opt.u, s.penalty, s.beta);
                    res.monitor.observe(step_index++, l_before, l_after, sq, opt.eta, s.mode);
                    sum += f_pre;
                    ++batches;
                }
                epoch_loss = sum / static_cast<double>(batches);
            }

            if (!std::isfinite(epoch_loss))
                throw NumericError("train loss is not finite");

            EpochStat st;
            st.epoch = epoch;
            st.train_loss = epoch_loss;
            st.val_mse = val_mse();
            if (!std::isfinite(st.val_mse))
                throw NumericError("validation loss is not finite");
            st.eta = opt.eta;
            st.seconds = seconds_since(t_epoch);
            res.epochs.push_back(st);
            res.epoch_seconds.push_back(st.seconds);
            last_finite = epoch_loss;

            if (st.val_mse < res.best_val) {
                res.best_val = st.val_mse;
                res.best_epoch = epoch;
                best_values.clear();
                for (const model::ParamRef& r : refs) best_values.push_back(r.tensor.data());
            }
        } catch (const NumericError& e) {
            std::ostringstream msg;
            msg << "training diverged at epoch " << epoch << ": " << e.what()
                << "; last finite train loss ";
            if (std::isnan(last_finite))
                msg << "none";
            else
                msg << fmt17(last_finite);
            throw NumericError(msg.str());
        }

        res.epochs_run = epoch + 1;
        if (epoch - res.best_epoch >= s.patience && epoch + 1 < s.epochs) {
            res.stopped_early = true;
            break;
        }
    }

    res.final_train_loss = res.epochs.back().train_loss;

    // ship the best-validation epoch; penalized runs ship the prox of it
    for (std::size_t k = 0; k < refs.size(); ++k) {
        Tensor t = refs[k].tensor;
        std::copy(best_values[k].begin(), best_values[k].end(), t.data().begin());
    }
    if (penalized) {
        for (Tensor& w : opt.w) {
            const Tensor px = rgsm::prox_apply(w, s.penalty);
            std::copy(px.data().begin(), px.data().end(), w.data().begin());
        }
    }

    std::size_t dead = 0, total = 0;
    for (const model::ParamRef& r : refs) {
        if (r.cls != model::ParamClass::Group) continue;
        const attn::QueryMask mask = attn::extract_mask(r.tensor, s.threshold);
        GroupStat g;
        g.name = r.name;
        g.live = attn::live_count(mask);
        g.total = mask.size();
        g.rate = attn::pruning_rate(mask);
        dead += g.total - g.live;
        total += g.total;
        res.groups.push_back(g);
    }
    res.pruning_rate = total == 0 ? 0.0 : static_cast<double>(dead) / static_cast<double>(total);

    res.rng_state = master.state();
    res.train_seconds = seconds_since(t_start);
    return res;
}

namespace {

Predictions pool_predictions(const data::Dataset& ds, data::Split split,
                             const std::function<Tensor(std::size_t, const data::FaultWindow&)>& run) {
    Predictions out;
    double se = 0.0, ae = 0.0;
    std::size_t n = 0;
    for (std::size_t i : ds.indices(split)) {
        const data::FaultWindow w = data::to_window(ds.events[i]);
        Tensor y = run(i, w);
        const std::vector<double>& t = w.target.data();
        if (y.size() != t.size())
            throw ShapeError("prediction has " + std::to_string(y.size()) +
                             " samples, target has " + std::to_string(t.size()));
        out.event_ids.push_back(i);
        out.y_true.push_back(t);
        out.y_hat.push_back(y.data());
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double d = y.data()[j] - t[j];
            se += d * d;
            ae += std::abs(d);
        }
        n += t.size();
        out.metrics.horizon = t.size();
    }
    out.metrics.windows = out.event_ids.size();
    if (n > 0) {
        out.metrics.mse = se / static_cast<double>(n);
        out.metrics.mae = ae / static_cast<double>(n);
    }
    return out;
}

}  // namespace

Predictions evaluate(const model::ModelParams& p, const data::Dataset& ds,
                     data::Split split, attn::AttendMode mode) {
    return pool_predictions(ds, split, [&](std::size_t, const data::FaultWindow& w) {
        return model::predict(w, p, mode);
    });
}

Predictions evaluate(const baseline::Cnn1dModel& m, const data::Dataset& ds,
                     data::Split split) {
    return pool_predictions(ds, split, [&](std::size_t, const data::FaultWindow& w) {
        return baseline::cnn_predict(m, w);
    });
}

Predictions evaluate_prony(const data::Dataset& ds, data::Split split, std::size_t order) {
    if (order == 0) throw ConfigError("linear-prediction order must be positive");
    return pool_predictions(ds, split, [&](std::size_t i, const data::FaultWindow& w) {
        const data::FaultEvent& ev = ds.events[i];
        const std::size_t horizon = w.target.size();
        const std::size_t obs_len = ev.t_f + 1;  // samples 0 .. t_f
        std::vector<double> obs(obs_len);
        for (std::size_t t = 0; t < obs_len; ++t)
            obs[t] = ev.features.at(ev.target_channel, t);

        std::size_t p = std::min(order, obs_len >= 3 ? (obs_len - 1) / 2 : 0);
        while (p >= 1) {
            try {
                const baseline::PronyModel m = baseline::prony_fit(obs, p);
                const baseline::PronyTrace tr = baseline::prony_predict(m, ev.t_f, horizon);
                return Tensor::from({1, horizon}, tr.values);
            } catch (const NumericError&) {
                --p;  // singular at this order; retry smaller
            }
        }
        return Tensor::full({1, horizon}, obs.back());
    });
}

PronySweep prony_order_sweep(const data::Dataset& ds, const std::vector<std::size_t>& orders) {
    if (orders.empty()) throw ConfigError("order sweep needs at least one order");
    PronySweep sweep;
    sweep.best_val_mse = std::numeric_limits<double>::infinity();
    for (std::size_t p : orders) {
        double mse = evaluate_prony(ds, data::Split::Val, p).metrics.mse;
        if (std::isnan(mse)) mse = std::numeric_limits<double>::infinity();
        sweep.val_mse.emplace_back(p, mse);
        if (mse < sweep.best_val_mse) {
            sweep.best_val_mse = mse;
            sweep.best_order = p;
        }
    }
    if (sweep.best_order == 0)
        throw NumericError("every order in the sweep produced a non-finite validation MSE");
    return sweep;
}

void write_predictions_csv(const Predictions& pred, const data::Dataset& ds,
                           data::Split split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "event_id,split,t_index,y_true,y_hat\n";
    for (std::size_t k = 0; k < pred.event_ids.size(); ++k) {
        const std::size_t id = pred.event_ids[k];
        const std::size_t t_f = ds.events[id].t_f;
        for (std::size_t j = 0; j < pred.y_true[k].size(); ++j)
            out << id << ',' << data::split_name(split) << ',' << t_f + j << ','
                << fmt17(pred.y_true[k][j]) << ',' << fmt17(pred.y_hat[k][j]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Metrics recompute_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "event_id,split,t_index,y_true,y_hat")
        throw IoError(path + ": unexpected predictions header");
    Metrics m;
    double se = 0.0, ae = 0.0;
    std::size_t n = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, split, t, y_true, y_hat;
        if (!std::getline(ss, id, ',') || !std::getline(ss, split, ',') ||
            !std::getline(ss, t, ',') || !std::getline(ss, y_true, ',') ||
            !std::getline(ss, y_hat))
            throw IoError(path + ": short predictions row '" + line + "'");
        const double yt = std::strtod(y_true.c_str(), nullptr);
        const double yh = std::strtod(y_hat.c_str(), nullptr);
        const double d = yh - yt;
        se += d * d;
        ae += std::abs(d);
        ++n;
        ids.insert(id);
    }
    if (n == 0) throw IoError(path + ": no prediction rows");
    m.mse = se / static_cast<double>(n);
    m.mae = ae / static_cast<double>(n);
    m.windows = ids.size();
    m.horizon = n / std::max<std::size_t>(1, ids.size());
    return m;
}

}  // namespace glf::train
