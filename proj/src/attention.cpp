#include "glf/attention.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "glf/errors.hpp"
#include "glf/kernels.hpp"

namespace glf::attn {

AttentionWeights AttentionWeights::init(std::size_t heads, std::size_t d_x, std::size_t n,
                                        Rng& rng, double wq_stddev, double stddev) {
    if (heads == 0) throw ConfigError("attention: need at least one head");
    AttentionWeights w;
    for (std::size_t h = 0; h < heads; ++h) {
        w.wq.push_back(Tensor::randn({d_x, n}, rng, wq_stddev));
        w.wk.push_back(Tensor::randn({d_x, n}, rng, stddev));
        w.wv.push_back(Tensor::randn({d_x, n}, rng, stddev));
    }
    w.mix = Tensor::randn({n, d_x}, rng, stddev);
    return w;
}

std::size_t live_count(const QueryMask& mask) {
    std::size_t k = 0;
    for (bool b : mask) k += b ? 1 : 0;
    return k;
}

double pruning_rate(const QueryMask& mask) {
    if (mask.empty()) return 0.0;
    return static_cast<double>(mask.size() - live_count(mask)) /
           static_cast<double>(mask.size());
}

namespace {

void require_square_triple(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.ndim() != 2 || q.dim(0) != q.dim(1) || q.shape() != k.shape() ||
        q.shape() != v.shape())
        throw ShapeError("attend: need matching square Q/K/V, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
}

void require_input(const Tensor& x, const AttentionWeights& w) {
    if (x.ndim() != 2 || x.dim(0) != w.seq_len() || x.dim(1) != w.feature_dim())
        throw ShapeError("attention input must be " + std::to_string(w.seq_len()) + "x" +
                         std::to_string(w.feature_dim()) + ", got " + shape_str(x.shape()));
}

/// Column mean of v computed row-by-row with the same kernel arithmetic the
/// dense path uses for a uniform softmax row, so both paths agree bitwise.
Tensor column_mean(const Tensor& v) {
    const std::size_t n = v.dim(0), cols = v.dim(1);
    Tensor mean = Tensor::zeros({cols});
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        kernels::ops().axpy(inv_n, v.data().data() + r * cols, mean.data().data(), cols);
    return mean;
}

Tensor one_head_dense(const Tensor& qsrc, const Tensor& kvsrc, const AttentionWeights& w,
                      std::size_t head, std::size_t scale_dim, Tape* tape) {
    Tensor xt_q = transpose(qsrc, tape);
    Tensor xt_kv = qsrc.same_storage(kvsrc) ? xt_q : transpose(kvsrc, tape);
    Tensor q = matmul(transpose(w.wq[head], tape), xt_q, tape);
    Tensor k = matmul(transpose(w.wk[head], tape), xt_kv, tape);
    Tensor v = matmul(transpose(w.wv[head], tape), xt_kv, tape);
    return attend_dense(q, k, v, scale_dim, tape);
}

Tensor one_head_sparse(const Tensor& x, const AttentionWeights& w, std::size_t head,
                       std::size_t scale_dim, double threshold) {
    const std::size_t n = w.seq_len(), d_x = w.feature_dim();
    QueryMask mask = extract_mask(w.wq[head], threshold);
    const std::size_t live = live_count(mask);

    Tensor xt = transpose(x);
    Tensor k = matmul(transpose(w.wk[head]), xt);
    Tensor v = matmul(transpose(w.wv[head]), xt);

    Tensor out = Tensor::zeros({n, n});
    Tensor mean = column_mean(v);
    for (std::size_t g = 0; g < n; ++g)
        if (!mask[g])
            std::copy(mean.data().begin(), mean.data().end(), out.data().begin() + g * n);
    if (live == 0) return out;

    // project only the live columns of W_Q: rows of W_Q^T, gathered
    Tensor wqt_live = Tensor::zeros({live, d_x});
    std::size_t r = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (!mask[g]) continue;
        for (std::size_t d = 0; d < d_x; ++d) wqt_live.at(r, d) = w.wq[head].at(d, g);
        ++r;
    }
    Tensor q_live = matmul(wqt_live, xt);
    Tensor scores = scale(matmul(q_live, transpose(k)), 1.0 / std::sqrt(static_cast<double>(scale_dim)));
    Tensor probs = softmax_rows(scores);
    Tensor rows = matmul(probs, v);
    r = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (!mask[g]) continue;
        std::copy(rows.data().begin() + r * n, rows.data().begin() + (r + 1) * n,
                  out.data().begin() + g * n);
        ++r;
    }
    return out;
}

Tensor heads_mean_mix(const Tensor& qsrc, const Tensor& kvsrc, const AttentionWeights& w,
                      std::size_t scale_dim, AttendMode mode, double threshold, Tape* tape) {
    if (w.heads() == 0) throw ConfigError("attention: no heads configured");
    require_input(qsrc, w);
    require_input(kvsrc, w);
    if (scale_dim == 0) scale_dim = w.seq_len();

    Tensor acc;
    for (std::size_t h = 0; h < w.heads(); ++h) {
        Tensor head_out = mode == AttendMode::Dense
                              ? one_head_dense(qsrc, kvsrc, w, h, scale_dim, tape)
                              : one_head_sparse(qsrc, w, h, scale_dim, threshold);
        acc = h == 0 ? head_out : add(acc, head_out, tape);
    }
    Tensor avg = scale(acc, 1.0 / static_cast<double>(w.heads()), tape);
    return matmul(avg, w.mix, tape);
}

}  // namespace

Qkv project_qkv(const Tensor& x, const AttentionWeights& w, std::size_t head, Tape* tape) {
    require_input(x, w);
    if (head >= w.heads()) throw ConfigError("project_qkv: head index out of range");
    Tensor xt = transpose(x, tape);
    return Qkv{matmul(transpose(w.wq[head], tape), xt, tape),
               matmul(transpose(w.wk[head], tape), xt, tape),
               matmul(transpose(w.wv[head], tape), xt, tape)};
}

Tensor attend_dense(const Tensor& q, const Tensor& k, const Tensor& v,
                    std::size_t scale_dim, Tape* tape) {
    require_square_triple(q, k, v);
    if (scale_dim == 0) throw ConfigError("attend_dense: scale_dim must be positive");
    Tensor scores = scale(matmul(q, transpose(k, tape), tape),
                          1.0 / std::sqrt(static_cast<double>(scale_dim)), tape);
    return matmul(softmax_rows(scores, tape), v, tape);
}

Tensor attend_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                     const QueryMask& mask, std::size_t scale_dim) {
    require_square_triple(q, k, v);
    if (scale_dim == 0) throw ConfigError("attend_sparse: scale_dim must be positive");
    const std::size_t n = q.dim(0);
    if (mask.size() != n)
        throw ShapeError("attend_sparse: mask length " + std::to_string(mask.size()) +
                         " vs N " + std::to_string(n));
    const std::size_t live = live_count(mask);

    Tensor out = Tensor::zeros({n, n});
    Tensor mean = column_mean(v);
    for (std::size_t g = 0; g < n; ++g)
        if (!mask[g])
            std::copy(mean.data().begin(), mean.data().end(), out.data().begin() + g * n);
    if (live == 0) return out;

    Tensor q_live = Tensor::zeros({live, n});
    std::size_t r = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (!mask[g]) continue;
        std::copy(q.data().begin() + g * n, q.data().begin() + (g + 1) * n,
                  q_live.data().begin() + r * n);
        ++r;
    }
    Tensor scores = scale(matmul(q_live, transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(scale_dim)));
    Tensor rows = matmul(softmax_rows(scores), v);
    r = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (!mask[g]) continue;
        std::copy(rows.data().begin() + r * n, rows.data().begin() + (r + 1) * n,
                  out.data().begin() + g * n);
        ++r;
    }
    return out;
}

Tensor cross_attend(const Tensor& queries_from, const Tensor& keys_values_from,
                    const AttentionWeights& w, std::size_t scale_dim, Tape* tape) {
    return heads_mean_mix(queries_from, keys_values_from, w, scale_dim, AttendMode::Dense,
                          kPruneThreshold, tape);
}

Tensor multi_head(const Tensor& x, const AttentionWeights& w, AttendMode mode,
                  std::size_t scale_dim, double threshold, Tape* tape) {
    if (mode == AttendMode::Sparse && tape)
        throw ConfigError("sparse attention is inference-only; train with dense mode");
    return heads_mean_mix(x, x, w, scale_dim, mode, threshold, tape);
}

std::vector<double> column_norms(const Tensor& wq) {
    if (wq.ndim() != 2) throw ShapeError("column_norms: need 2-d weights");
    const std::size_t d_x = wq.dim(0), n = wq.dim(1);
    std::vector<double> norms(n);
    for (std::size_t g = 0; g < n; ++g) {
        double s = 0.0;
        for (std::size_t d = 0; d < d_x; ++d) {
            const double v = wq.at(d, g);
            s += v * v;
        }
        norms[g] = std::sqrt(s);
    }
    return norms;
}

QueryMask extract_mask(const Tensor& wq, double threshold) {
    if (threshold < 0.0) throw ConfigError("extract_mask: threshold must be nonnegative");
    QueryMask mask;
    for (double nrm : column_norms(wq)) mask.push_back(nrm >= threshold);
    return mask;
}

std::vector<QueryMask> extract_masks(const AttentionWeights& w, double threshold) {
    std::vector<QueryMask> masks;
    for (std::size_t h = 0; h < w.heads(); ++h)
        masks.push_back(extract_mask(w.wq[h], threshold));
    return masks;
}

void emit_sparsity_mask(const AttentionWeights& w, double threshold, const std::string& dir) {
    const std::size_t n = w.seq_len(), d_x = w.feature_dim();

    // canonical reference input: row j is basis vector e_{j mod D_x}, so for a
    // square identity W_Q the rendered |Q| is exactly the identity pattern
    Tensor x_ref = Tensor::zeros({n, d_x});
    for (std::size_t j = 0; j < n; ++j) x_ref.at(j, j % d_x) = 1.0;

    std::ofstream csv(dir + "/masks.csv");
    if (!csv) throw IoError("cannot write " + dir + "/masks.csv");
    csv << "head,group_index,column_norm,is_live\n";

    for (std::size_t h = 0; h < w.heads(); ++h) {
        const QueryMask mask = extract_mask(w.wq[h], threshold);
        const std::vector<double> norms = column_norms(w.wq[h]);
        for (std::size_t g = 0; g < n; ++g) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", norms[g]);
            csv << h << "," << g << "," << buf << "," << (mask[g] ? 1 : 0) << "\n";
        }

        Tensor q = matmul(transpose(w.wq[h]), transpose(x_ref));
        double max_abs = 0.0;
        for (double v : q.data()) max_abs = std::max(max_abs, std::fabs(v));

        const std::string path = dir + "/mask_head" + std::to_string(h) + ".pgm";
        std::ofstream pgm(path);
        if (!pgm) throw IoError("cannot write " + path);
        pgm << "P2\n" << n << " " << n << "\n255\n";
        for (std::size_t g = 0; g < n; ++g) {
            for (std::size_t j = 0; j < n; ++j) {
                int pix = 0;
                if (mask[g] && max_abs > 0.0)
                    pix = static_cast<int>(std::lround(255.0 * std::fabs(q.at(g, j)) / max_abs));
                pgm << pix << (j + 1 < n ? ' ' : '\n');
            }
        }
        if (!pgm) throw IoError("write failed: " + path);
    }
    if (!csv) throw IoError("write failed: " + dir + "/masks.csv");
}

}  // namespace glf::attn
