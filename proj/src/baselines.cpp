#include "glf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "glf/errors.hpp"
#include "glf/rgsm.hpp"

namespace glf::baseline {

double PronyModel::max_pole_magnitude() const {
    double m = 0.0;
    for (const auto& z : poles) m = std::max(m, std::abs(z));
    return m;
}

PronyModel prony_fit(const std::vector<double>& x, std::size_t p) {
    if (p == 0) throw ConfigError("prony: order must be positive");
    const std::size_t n = x.size();
    if (n < 2 * p + 1)
        throw ConfigError("prony: order " + std::to_string(p) + " needs at least " +
                          std::to_string(2 * p + 1) + " samples, got " + std::to_string(n));

    // linear prediction x[i] = sum_k a_k x[i-k], least squares over all rows
    const std::size_t rows = n - p;
    Eigen::MatrixXd a_mat(rows, p);
    Eigen::VectorXd b(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        b(static_cast<Eigen::Index>(i)) = x[p + i];
        for (std::size_t k = 0; k < p; ++k)
            a_mat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                x[p + i - 1 - k];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a_mat);
    if (qr.rank() < static_cast<Eigen::Index>(p))
        throw NumericError(
            "prony: the prediction system is rank-deficient at order " + std::to_string(p) +
            "; the signal has fewer effective modes, try a smaller p");
    const Eigen::VectorXd coef = qr.solve(b);

    // poles are the eigenvalues of the companion matrix of
    // z^p - a_1 z^{p-1} - ... - a_p
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                                      static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < p; ++k)
        companion(0, static_cast<Eigen::Index>(k)) = coef(static_cast<Eigen::Index>(k));
    for (std::size_t k = 1; k < p; ++k)
        companion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
    if (es.info() != Eigen::Success)
        throw NumericError("prony: pole eigenvalue computation failed");

    PronyModel m;
    m.order = p;
    for (std::size_t k = 0; k < p; ++k)
        m.poles.push_back(es.eigenvalues()(static_cast<Eigen::Index>(k)));

    // amplitudes from the Vandermonde system over the whole observation
    Eigen::MatrixXcd vand(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < p; ++k) {
        std::complex<double> z_pow = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            vand(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = z_pow;
            z_pow *= m.poles[k];
        }
    }
    Eigen::VectorXcd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = x[i];
    const Eigen::VectorXcd amp = vand.colPivHouseholderQr().solve(rhs);
    for (std::size_t k = 0; k < p; ++k)
        m.amplitudes.push_back(amp(static_cast<Eigen::Index>(k)));
    return m;
}

PronyTrace prony_predict(const PronyModel& m, std::size_t from, std::size_t count) {
    if (m.order == 0 || m.poles.size() != m.order || m.amplitudes.size() != m.order)
        throw ConfigError("prony: predict needs a fitted model");
    PronyTrace out;
    out.values.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double n = static_cast<double>(from + i);
        std::complex<double> acc = 0.0;
        for (std::size_t k = 0; k < m.order; ++k)
            acc += m.amplitudes[k] * std::pow(m.poles[k], n);
        out.max_imag_residue = std::max(out.max_imag_residue, std::fabs(acc.imag()));
        out.values.push_back(acc.real());
    }
    return out;
}

void CnnConfig::validate() const {
    if (channels == 0) throw ConfigError("cnn needs at least one signal channel");
    if (seq_len == 0 || t_f >= seq_len)
        throw ConfigError("cnn: observation cut must leave a nonempty horizon");
    if (width == 0 || depth == 0) throw ConfigError("cnn: width and depth must be positive");
    if (kernel == 0 || kernel > seq_len)
        throw ConfigError("cnn: conv kernel must fit inside the window");
    if (init < 0.0) throw ConfigError("cnn: init scale must be nonnegative");
}

Cnn1dModel Cnn1dModel::init(const CnnConfig& cfg, Rng& rng) {
    cfg.validate();
    Cnn1dModel m;
    m.cfg = cfg;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::size_t c_in = l == 0 ? cfg.channels + 1 : cfg.width;
        Tensor k = Tensor::randn({cfg.width, c_in, cfg.kernel}, rng, cfg.init);
        k.set_requires_grad(true);
        m.kernels.push_back(k);
    }
    m.head = Tensor::randn({cfg.width, cfg.horizon()}, rng, cfg.init);
    m.head.set_requires_grad(true);
    return m;
}

std::vector<model::ParamRef> cnn_parameters(const Cnn1dModel& m) {
    std::vector<model::ParamRef> refs;
    for (std::size_t l = 0; l < m.kernels.size(); ++l)
        refs.push_back({m.kernels[l], "cnn.layer" + std::to_string(l),
                        model::ParamClass::Plain});
    refs.push_back({m.head, "cnn.head", model::ParamClass::Plain});
    return refs;
}

Tensor cnn_forward(const Cnn1dModel& m, const Tensor& x_de, Tape* tape) {
    const CnnConfig& cfg = m.cfg;
    if (x_de.ndim() != 2 || x_de.dim(0) != cfg.channels + 1 || x_de.dim(1) != cfg.seq_len)
        throw ShapeError("cnn input must be " + std::to_string(cfg.channels + 1) + "x" +
                         std::to_string(cfg.seq_len) + ", got " + shape_str(x_de.shape()));
    Tensor h = x_de;
    for (const Tensor& k : m.kernels) h = elu(conv1d_causal(h, k, Tensor(), tape), tape);

    // read out the feature column at the cut; later columns never contribute
    Tensor sel = Tensor::zeros({cfg.seq_len, 1});
    sel.at(cfg.t_f, 0) = 1.0;
    Tensor at_cut = transpose(matmul(h, sel, tape), tape);  // 1 x width
    return matmul(at_cut, m.head, tape);                    // 1 x horizon
}

Tensor cnn_predict(const Cnn1dModel& m, const data::FaultWindow& w) {
    return cnn_forward(m, w.x_de);
}

CnnTrainResult cnn_train(const data::Dataset& ds, const CnnConfig& cfg,
                         const CnnTrainConfig& tc) {
    cfg.validate();
    if (tc.batch == 0) throw ConfigError("cnn_train: batch size must be positive");
    const auto train_idx = ds.indices(data::Split::Train);
    if (train_idx.empty()) throw ConfigError("cnn_train: dataset has no train events");

    Rng rng(tc.seed);
    Cnn1dModel m = Cnn1dModel::init(cfg, rng);
    auto refs = cnn_parameters(m);
    std::vector<Tensor> theta;
    for (const auto& r : refs) theta.push_back(r.tensor);
    rgsm::RgsmState opt = rgsm::RgsmState::make(theta, {}, {rgsm::PenaltyKind::None, 0.0},
                                                0.0, tc.eta0, rgsm::OptimMode::Adam);

    std::vector<data::FaultWindow> windows;
    for (std::size_t i : train_idx) windows.push_back(data::to_window(ds.events[i]));

    CnnTrainResult result;
    double last_finite = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        opt.eta = rgsm::lr_schedule(epoch, tc.eta0, tc.decay, tc.decay_every);
        std::vector<std::size_t> order(windows.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch) {
            const std::size_t stop = std::min(order.size(), start + tc.batch);
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (const auto& r : refs) {
                Tensor t = r.tensor;
                t.zero_grad();
            }
            double batch_loss = 0.0;
            try {
                for (std::size_t i = start; i < stop; ++i) {
                    const data::FaultWindow& w = windows[order[i]];
                    Tape tape;
                    Tensor pred = cnn_forward(m, w.x_de, &tape);
                    Tensor loss = mse_loss(pred, w.target, &tape);
                    tape.backward(loss);
                    batch_loss += loss.value();
                }
                batch_loss *= inv;
                if (!std::isfinite(batch_loss)) throw NumericError("non-finite batch loss");
                for (const auto& r : refs) {
                    Tensor t = r.tensor;
                    for (double& g : t.grad()) g *= inv;
                }
                rgsm::rgsm_step(opt);
            } catch (const NumericError& e) {
                throw NumericError("cnn_train diverged at epoch " + std::to_string(epoch) +
                                   " (" + e.what() + "); last finite loss " +
                                   std::to_string(last_finite));
            }
            last_finite = batch_loss;
            epoch_sum += batch_loss * static_cast<double>(stop - start);
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(order.size()));
    }
    result.model = std::move(m);
    return result;
}

}  // namespace glf::baseline
