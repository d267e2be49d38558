#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "glf/attention.hpp"
#include "glf/data.hpp"
#include "glf/rng.hpp"
#include "glf/tensor.hpp"

namespace glf::model {

struct ModelConfig {
    std::size_t channels = 5;  // signal rows F; the stamp row is extra
    std::size_t seq_len = 64;  // window length L
    std::size_t t_f = 16;      // fault index; prediction covers t_f..L-1
    std::size_t d_model = 32;  // hidden width, must be even (split embedding)
    std::size_t heads = 4;
    std::size_t kernel = 3;      // conv filter length
    std::size_t enc_layers = 2;
    std::size_t scale_dim = 0;   // attention score divisor; 0 = seq_len
    double wq_init = 0.02;       // query projection init scale
    double init = 0.08;          // all other weights
    bool bias = false;           // conv / output bias terms

    std::size_t horizon() const { return seq_len - t_f; }
    void validate() const;  // throws ConfigError
};

// Split embedding: signal rows and the stamp row get their own causal conv
// stacks, concatenated to d_model channels.
struct EmbeddingWeights {
    Tensor value_k;  // (d_model/2) x F x K
    Tensor stamp_k;  // (d_model/2) x 1 x K
    Tensor value_b, stamp_b;  // per-channel, undefined when bias is off
};

struct EncoderLayer {
    attn::AttentionWeights attn;
    Tensor conv_k;  // d_model x d_model x K, filtering along time
    Tensor conv_b;
};

struct Decoder {
    attn::AttentionWeights self_attn;
    attn::AttentionWeights cross;
    Tensor full_w;  // (L * d_model) x horizon
    Tensor full_b;
};

enum class ParamClass { Plain, Group };

// One enumerated parameter tensor. Group tensors are exactly the query
// projections of the group-sparse self-attention blocks (encoder layers and
// the decoder's first block); their columns are the penalty groups.
// Cross-attention stays dense, so its queries are Plain.
struct ParamRef {
    Tensor tensor;
    std::string name;
    ParamClass cls;
};

struct ModelParams {
    ModelConfig cfg;
    EmbeddingWeights enc_embed, dec_embed;
    std::vector<EncoderLayer> encoder;
    Decoder decoder;

    static ModelParams init(const ModelConfig& cfg, Rng& rng);
};

// Flat view over every trainable tensor, stable order, unique names.
std::vector<ParamRef> enumerate(const ModelParams& params);

std::size_t count_params(const std::vector<ParamRef>& refs);

// ELU(Concat(Conv1d(signals), Conv1d(stamp))) transposed to L x d_model.
// x_in rows: F signal channels then the stamp row. Causal convs keep output
// at time t independent of inputs after t.
Tensor embed(const Tensor& x_in, const EmbeddingWeights& w, Tape* tape = nullptr);

// Stack of identical layers, each ELU(Conv1d(Attn(X))) with group-sparse
// multi-head attention. Training runs Dense; Sparse is inference-only.
Tensor encoder_forward(const Tensor& x_en, const ModelParams& params,
                       Tape* tape = nullptr,
                       attn::AttendMode mode = attn::AttendMode::Dense);

// Group-sparse self-attention over the embedded decoder stream, canonical
// cross-attention against the encoder feature (decoder supplies queries),
// then one fully connected map onto the horizon. Returns 1 x (L - t_f).
Tensor decoder_forward(const Tensor& x_de, const Tensor& f_hidden,
                       const ModelParams& params, Tape* tape = nullptr,
                       attn::AttendMode mode = attn::AttendMode::Dense);

// Inference. Sparse mode routes the group-sparse self-attention blocks
// through the dead-row shortcut; cross-attention is never pruned and always
// runs dense. Both modes agree within numerical noise, exactly on dead rows.
Tensor predict(const data::FaultWindow& window, const ModelParams& params,
               attn::AttendMode mode = attn::AttendMode::Dense);

struct ForwardResult {
    Tensor y_hat;  // 1 x horizon
    Tensor loss;   // scalar MSE over the horizon
};

ForwardResult forward_loss(const data::FaultWindow& window, const ModelParams& params,
                           Tape* tape = nullptr);

}  // namespace glf::model
