#pragma once

#include <string>
#include <vector>

#include "glf/tensor.hpp"

namespace glf::attn {

/// Default dead-query threshold on a column's Euclidean norm.
inline constexpr double kPruneThreshold = 1e-5;

/// Per-head projection weights in the transposed formulation: W_Q, W_K, W_V
/// are each D_x x N (input feature dim x sequence length), so the projections
/// Q = W_Q^T X^T etc. are square N x N and column g of W_Q is group g, whose
/// removal zeroes query row g. Consequence: N is fixed per weight set. The
/// N x D_x `mix` map sends the averaged head output back to feature space.
struct AttentionWeights {
    std::vector<Tensor> wq, wk, wv;
    Tensor mix;

    std::size_t heads() const { return wq.size(); }
    std::size_t feature_dim() const { return wq.at(0).dim(0); }
    std::size_t seq_len() const { return wq.at(0).dim(1); }

    /// Gaussian init; W_Q gets its own scale so callers can place column
    /// norms relative to the penalty strength.
    static AttentionWeights init(std::size_t heads, std::size_t d_x, std::size_t n,
                                 Rng& rng, double wq_stddev, double stddev);
};

/// One flag per query row; true = live (column norm at or above threshold).
using QueryMask = std::vector<bool>;

std::size_t live_count(const QueryMask& mask);

/// Fraction of dead query rows, count(false)/N.
double pruning_rate(const QueryMask& mask);

struct Qkv {
    Tensor q, k, v;
};

/// Step 1 of the transposed attention: Q = W_Q^T x^T, K = W_K^T x^T,
/// V = W_V^T x^T for one head. x is N x D_x, all outputs N x N.
Qkv project_qkv(const Tensor& x, const AttentionWeights& w, std::size_t head,
                Tape* tape = nullptr);

/// V_hat = softmax_rows(Q K^T / sqrt(scale_dim)) V. scale_dim must be > 0;
/// the conventional choice in this formulation is N.
Tensor attend_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                    std::size_t scale_dim, Tape* tape = nullptr);

/// Fast path for mostly-dead queries (inference only). Live rows are computed
/// exactly as attend_dense computes them; dead rows all equal the column mean
/// of V, which is the exact dense result for a zero query row (uniform
/// softmax), not an approximation. Work is O(k N^2) for k live rows instead
/// of O(N^3).
Tensor attend_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                     const QueryMask& mask, std::size_t scale_dim);

/// Multi-head attention with Q from one stream and K, V from another; with
/// queries_from == keys_values_from this is exactly self-attention. Per-head
/// outputs are averaged, then mixed to N x D_x.
Tensor cross_attend(const Tensor& queries_from, const Tensor& keys_values_from,
                    const AttentionWeights& w, std::size_t scale_dim = 0,
                    Tape* tape = nullptr);

enum class AttendMode { Dense, Sparse };

/// Multi-head self-attention over x (N x D_x). Sparse mode derives each
/// head's mask from its W_Q column norms, projects only live columns, and is
/// value-only (training always runs dense).
Tensor multi_head(const Tensor& x, const AttentionWeights& w, AttendMode mode,
                  std::size_t scale_dim = 0, double threshold = kPruneThreshold,
                  Tape* tape = nullptr);

/// Euclidean norm of each W_Q column (one entry per group).
std::vector<double> column_norms(const Tensor& wq);

QueryMask extract_mask(const Tensor& wq, double threshold);

/// Per-head masks from each head's W_Q.
std::vector<QueryMask> extract_masks(const AttentionWeights& w, double threshold);

/// Writes one P2 graymap per head (mask_head{h}.pgm) showing |Q| on the
/// canonical basis-cycling reference input (so a square identity W_Q renders
/// as a diagonal), with dead rows forced black, plus masks.csv with schema
/// head,group_index,column_norm,is_live. dir must exist.
void emit_sparsity_mask(const AttentionWeights& w, double threshold,
                        const std::string& dir);

}  // namespace glf::attn
