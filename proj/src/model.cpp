#include "glf/model.hpp"

#include <string>

#include "glf/errors.hpp"

namespace glf::model {

void ModelConfig::validate() const {
    if (channels == 0) throw ConfigError("model needs at least one signal channel");
    if (seq_len == 0) throw ConfigError("sequence length must be positive");
    if (t_f >= seq_len)
        throw ConfigError("fault index must leave a nonempty prediction horizon");
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("d_model must be even (half for signals, half for the stamp)");
    if (heads == 0) throw ConfigError("need at least one attention head");
    if (kernel == 0 || kernel > seq_len)
        throw ConfigError("conv kernel must fit inside the window");
    if (enc_layers == 0) throw ConfigError("need at least one encoder layer");
    if (wq_init <= 0.0 || init <= 0.0)
        throw ConfigError("init scales must be positive");
}

namespace {

EmbeddingWeights init_embedding(const ModelConfig& cfg, Rng& rng) {
    EmbeddingWeights w;
    const std::size_t half = cfg.d_model / 2;
    w.value_k = Tensor::randn({half, cfg.channels, cfg.kernel}, rng, cfg.init);
    w.stamp_k = Tensor::randn({half, 1, cfg.kernel}, rng, cfg.init);
    w.value_k.set_requires_grad(true);
    w.stamp_k.set_requires_grad(true);
    if (cfg.bias) {
        w.value_b = Tensor::zeros({half});
        w.stamp_b = Tensor::zeros({half});
        w.value_b.set_requires_grad(true);
        w.stamp_b.set_requires_grad(true);
    }
    return w;
}

attn::AttentionWeights init_attention(const ModelConfig& cfg, Rng& rng) {
    attn::AttentionWeights w = attn::AttentionWeights::init(
        cfg.heads, cfg.d_model, cfg.seq_len, rng, cfg.wq_init, cfg.init);
    for (std::size_t h = 0; h < w.heads(); ++h) {
        w.wq[h].set_requires_grad(true);
        w.wk[h].set_requires_grad(true);
        w.wv[h].set_requires_grad(true);
    }
    w.mix.set_requires_grad(true);
    return w;
}

void push_attention(std::vector<ParamRef>& out, const attn::AttentionWeights& w,
                    const std::string& prefix, ParamClass query_class) {
    for (std::size_t h = 0; h < w.heads(); ++h) {
        const std::string tag = std::to_string(h);
        out.push_back({w.wq[h], prefix + ".wq" + tag, query_class});
        out.push_back({w.wk[h], prefix + ".wk" + tag, ParamClass::Plain});
        out.push_back({w.wv[h], prefix + ".wv" + tag, ParamClass::Plain});
    }
    out.push_back({w.mix, prefix + ".mix", ParamClass::Plain});
}

void push_embedding(std::vector<ParamRef>& out, const EmbeddingWeights& w,
                    const std::string& prefix) {
    out.push_back({w.value_k, prefix + ".value_k", ParamClass::Plain});
    out.push_back({w.stamp_k, prefix + ".stamp_k", ParamClass::Plain});
    if (w.value_b.defined()) out.push_back({w.value_b, prefix + ".value_b", ParamClass::Plain});
    if (w.stamp_b.defined()) out.push_back({w.stamp_b, prefix + ".stamp_b", ParamClass::Plain});
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    p.enc_embed = init_embedding(cfg, rng);
    p.dec_embed = init_embedding(cfg, rng);
    for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
        EncoderLayer layer;
        layer.attn = init_attention(cfg, rng);
        layer.conv_k = Tensor::randn({cfg.d_model, cfg.d_model, cfg.kernel}, rng, cfg.init);
        layer.conv_k.set_requires_grad(true);
        if (cfg.bias) {
            layer.conv_b = Tensor::zeros({cfg.d_model});
            layer.conv_b.set_requires_grad(true);
        }
        p.encoder.push_back(std::move(layer));
    }
    p.decoder.self_attn = init_attention(cfg, rng);
    p.decoder.cross = init_attention(cfg, rng);
    p.decoder.full_w =
        Tensor::randn({cfg.seq_len * cfg.d_model, cfg.horizon()}, rng, cfg.init);
    p.decoder.full_w.set_requires_grad(true);
    if (cfg.bias) {
        p.decoder.full_b = Tensor::zeros({cfg.horizon()});
        p.decoder.full_b.set_requires_grad(true);
    }
    return p;
}

std::vector<ParamRef> enumerate(const ModelParams& params) {
    std::vector<ParamRef> out;
    push_embedding(out, params.enc_embed, "enc_embed");
    push_embedding(out, params.dec_embed, "dec_embed");
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        const std::string prefix = "encoder" + std::to_string(l);
        push_attention(out, params.encoder[l].attn, prefix + ".attn", ParamClass::Group);
        out.push_back({params.encoder[l].conv_k, prefix + ".conv_k", ParamClass::Plain});
        if (params.encoder[l].conv_b.defined())
            out.push_back({params.encoder[l].conv_b, prefix + ".conv_b", ParamClass::Plain});
    }
    push_attention(out, params.decoder.self_attn, "decoder.self", ParamClass::Group);
    push_attention(out, params.decoder.cross, "decoder.cross", ParamClass::Plain);
    out.push_back({params.decoder.full_w, "decoder.full_w", ParamClass::Plain});
    if (params.decoder.full_b.defined())
        out.push_back({params.decoder.full_b, "decoder.full_b", ParamClass::Plain});
    return out;
}

std::size_t count_params(const std::vector<ParamRef>& refs) {
    std::size_t n = 0;
    for (const ParamRef& r : refs) n += r.tensor.size();
    return n;
}

Tensor embed(const Tensor& x_in, const EmbeddingWeights& w, Tape* tape) {
    if (x_in.ndim() != 2 || x_in.dim(0) < 2)
        throw ShapeError("embed input must be (channels+1) x L, got " +
                         shape_str(x_in.shape()));
    const std::size_t f = x_in.dim(0) - 1;
    const std::size_t len = x_in.dim(1);
    if (w.value_k.dim(1) != f)
        throw ShapeError("embedding expects " + std::to_string(w.value_k.dim(1)) +
                         " signal channels, got " + std::to_string(f));

    // inputs carry no gradient, so the row split happens outside the tape
    Tensor signals = Tensor::zeros({f, len});
    std::copy_n(x_in.data().begin(), f * len, signals.data().begin());
    Tensor stamp = Tensor::zeros({1, len});
    std::copy_n(x_in.data().begin() + f * len, len, stamp.data().begin());

    Tensor value_part = conv1d_causal(signals, w.value_k, w.value_b, tape);
    Tensor stamp_part = conv1d_causal(stamp, w.stamp_k, w.stamp_b, tape);
    return transpose(elu(concat_rows(value_part, stamp_part, tape), tape), tape);
}

namespace {

// ELU(Conv1d(.)) along the time axis of an L x d_model sequence.
Tensor conv_sublayer(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                     Tape* tape) {
    Tensor channels_first = transpose(x, tape);
    return transpose(elu(conv1d_causal(channels_first, kernels, bias, tape), tape), tape);
}

}  // namespace

Tensor encoder_forward(const Tensor& x_en, const ModelParams& params, Tape* tape,
                       attn::AttendMode mode) {
    Tensor x = embed(x_en, params.enc_embed, tape);
    for (const EncoderLayer& layer : params.encoder) {
        Tensor attended = attn::multi_head(x, layer.attn, mode, params.cfg.scale_dim,
                                           attn::kPruneThreshold, tape);
        x = conv_sublayer(attended, layer.conv_k, layer.conv_b, tape);
    }
    return x;
}

Tensor decoder_forward(const Tensor& x_de, const Tensor& f_hidden,
                       const ModelParams& params, Tape* tape, attn::AttendMode mode) {
    const ModelConfig& cfg = params.cfg;
    if (f_hidden.ndim() != 2 || f_hidden.dim(0) != cfg.seq_len ||
        f_hidden.dim(1) != cfg.d_model)
        throw ShapeError("encoder feature must be L x d_model, got " +
                         shape_str(f_hidden.shape()));
    Tensor x = embed(x_de, params.dec_embed, tape);
    Tensor self_out = attn::multi_head(x, params.decoder.self_attn, mode,
                                       cfg.scale_dim, attn::kPruneThreshold, tape);
    Tensor crossed =
        attn::cross_attend(self_out, f_hidden, params.decoder.cross, cfg.scale_dim, tape);
    Tensor flat = reshape(crossed, {1, cfg.seq_len * cfg.d_model}, tape);
    Tensor y = matmul(flat, params.decoder.full_w, tape);
    if (params.decoder.full_b.defined()) y = add_row_bias(y, params.decoder.full_b, tape);
    return y;
}

Tensor predict(const data::FaultWindow& window, const ModelParams& params,
               attn::AttendMode mode) {
    Tensor f_hidden = encoder_forward(window.x_en, params, nullptr, mode);
    return decoder_forward(window.x_de, f_hidden, params, nullptr, mode);
}

ForwardResult forward_loss(const data::FaultWindow& window, const ModelParams& params,
                           Tape* tape) {
    const ModelConfig& cfg = params.cfg;
    if (window.target.ndim() != 2 || window.target.dim(1) != cfg.horizon())
        throw ShapeError("window target must be 1 x " + std::to_string(cfg.horizon()) +
                         ", got " + shape_str(window.target.shape()));
    Tensor f_hidden = encoder_forward(window.x_en, params, tape);
    Tensor y_hat = decoder_forward(window.x_de, f_hidden, params, tape);
    Tensor loss = mse_loss(y_hat, window.target, tape);
    return {y_hat, loss};
}

}  // namespace glf::model
