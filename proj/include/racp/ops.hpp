#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "racp/autodiff.hpp"
#include "racp/rng.hpp"

namespace racp::ops {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline ConstMapMat view(const Tensor& t) {
    return ConstMapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MapMat view(Tensor& t) {
    return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

inline void require_rank2(const Var& a, const char* op) {
    if (a.value().rank() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

inline void accumulate(Node& parent, const Tensor& delta) {
    if (!parent.requires_grad) return;
    bool fresh = false;
    auto& g = parent.grad_slot(fresh);
    if (fresh)
        std::copy_n(delta.data(), g.size(), g.data());
    else
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// g = f(i) on a fresh buffer, g += f(i) otherwise.
template <class F>
void accumulate_with(Node& parent, F&& f) {
    if (!parent.requires_grad) return;
    bool fresh = false;
    auto& g = parent.grad_slot(fresh);
    const std::size_t n = g.size();
    double* d = g.data();
    if (fresh)
        for (std::size_t i = 0; i < n; ++i) d[i] = f(i);
    else
        for (std::size_t i = 0; i < n; ++i) d[i] += f(i);
}

// Fixed-size blocks keep every element on the packet path, so results do
// not depend on buffer alignment.
inline void tanh_inplace(Tensor& t) {
    using Block = Eigen::Array<double, 8, 1>;
    double* d = t.data();
    const std::size_t n = t.size();
    Block x;
    for (std::size_t i = 0; i < n; i += 8) {
        const std::size_t m = std::min<std::size_t>(8, n - i);
        x.setZero();
        std::copy_n(d + i, m, x.data());
        const Block y = 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
        std::copy_n(y.data(), m, d + i);
    }
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

/// [m x k] . [k x n] -> [m x n]
inline Var matmul(const Var& a, const Var& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    Tensor out = Tensor::uninit({a.shape()[0], b.shape()[1]});
    detail::view(out).noalias() = detail::view(a.value()) * detail::view(b.value());
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto g = detail::view(self.grad);
        bool fresh = false;
        if (pa.requires_grad) {
            auto dst = detail::view(pa.grad_slot(fresh));
            if (fresh)
                dst.noalias() = g * detail::view(pb.value).transpose();
            else
                dst.noalias() += g * detail::view(pb.value).transpose();
        }
        if (pb.requires_grad) {
            auto dst = detail::view(pb.grad_slot(fresh));
            if (fresh)
                dst.noalias() = detail::view(pa.value).transpose() * g;
            else
                dst.noalias() += detail::view(pa.value).transpose() * g;
        }
    });
}

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate(*self.parents[1], self.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate_with(*self.parents[1], [&](std::size_t i) { return -self.grad[i]; });
    });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        detail::accumulate_with(pa, [&](std::size_t i) { return self.grad[i] * pb.value[i]; });
        detail::accumulate_with(pb, [&](std::size_t i) { return self.grad[i] * pa.value[i]; });
    });
}

/// scale * x + shift, both scalars.
inline Var affine(const Var& x, double scale, double shift = 0.0) {
    Tensor out = x.value();
    for (auto& v : out.values()) v = scale * v + shift;
    return make_result(std::move(out), {x}, [scale](Node& self) {
        detail::accumulate_with(*self.parents[0], [&](std::size_t i) { return scale * self.grad[i]; });
    });
}

inline Var scale(const Var& x, double factor) { return affine(x, factor, 0.0); }

/// Adds a bias vector [n] to every row of x [m x n].
inline Var add_bias(const Var& x, const Var& bias) {
    const std::size_t n = x.value().cols();
    if (bias.value().size() != n)
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    Tensor out = x.value();
    const std::size_t m = out.size() / n;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias.value()[c];
    return make_result(std::move(out), {x, bias}, [n](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        Node& pb = *self.parents[1];
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            const std::size_t m = self.grad.size() / n;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
        }
    });
}

inline Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (auto& v : out.values()) v = detail::stable_sigmoid(v);
    return make_result(std::move(out), {x}, [](Node& self) {
        detail::accumulate_with(*self.parents[0], [&](std::size_t i) {
            const double y = self.value[i];
            return self.grad[i] * y * (1.0 - y);
        });
    });
}

inline Var tanh(const Var& x) {
    Tensor out = x.value();
    detail::tanh_inplace(out);
    return make_result(std::move(out), {x}, [](Node& self) {
        detail::accumulate_with(*self.parents[0], [&](std::size_t i) {
            const double y = self.value[i];
            return self.grad[i] * (1.0 - y * y);
        });
    });
}

inline Var leaky_relu(const Var& x, double slope) {
    Tensor out = x.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : slope * v;
    return make_result(std::move(out), {x}, [slope](Node& self) {
        Node& p = *self.parents[0];
        detail::accumulate_with(p, [&](std::size_t i) { return self.grad[i] * (p.value[i] > 0.0 ? 1.0 : slope); });
    });
}

/// Concatenation along axis 0 (rows) or axis 1 (columns, rank 2 only).
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const std::size_t rank = parts.front().value().rank();
    if (axis >= rank) throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                                           std::to_string(rank));
    for (const auto& p : parts)
        if (p.value().rank() != rank) throw DimensionError("concat: rank mismatch");

    if (axis == 0) {
        const std::size_t cols = rank == 2 ? parts.front().shape()[1] : 1;
        std::size_t total = 0;
        for (const auto& p : parts) {
            if (rank == 2 && p.shape()[1] != cols)
                throw DimensionError("concat: column mismatch " + shape_str(p.shape()) + " vs " +
                                     shape_str(parts.front().shape()));
            total += p.shape()[0];
        }
        Tensor out = Tensor::uninit(rank == 2 ? Shape{total, cols} : Shape{total});
        std::size_t at = 0;
        for (const auto& p : parts) {
            std::copy_n(p.value().data(), p.value().size(), out.data() + at);
            at += p.value().size();
        }
        return make_result(std::move(out), parts, [](Node& self) {
            std::size_t offset = 0;
            for (auto& parent : self.parents) {
                const std::size_t n = parent->value.size();
                detail::accumulate_with(*parent, [&](std::size_t i) { return self.grad[offset + i]; });
                offset += n;
            }
        });
    }

    const std::size_t rows = parts.front().shape()[0];
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.shape()[0] != rows)
            throw DimensionError("concat: row mismatch " + shape_str(p.shape()) + " vs " +
                                 shape_str(parts.front().shape()));
        total += p.shape()[1];
    }
    Tensor out = Tensor::uninit({rows, total});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.shape()[1];
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(p.value().data() + r * c, c, out.data() + r * total + offset);
        offset += c;
    }
    return make_result(std::move(out), parts, [rows, total](Node& self) {
        std::size_t off = 0;
        for (auto& parent : self.parents) {
            const std::size_t c = parent->value.cols();
            if (parent->requires_grad) {
                bool fresh = false;
                auto& g = parent->grad_slot(fresh);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* src = self.grad.data() + r * total + off;
                    double* dst = g.data() + r * c;
                    if (fresh)
                        std::copy_n(src, c, dst);
                    else
                        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                }
            }
            off += c;
        }
    });
}

inline Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_result(Tensor::scalar(s), {x}, [](Node& self) {
        detail::accumulate_with(*self.parents[0], [&](std::size_t) { return self.grad[0]; });
    });
}

inline Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

inline Var reshape(const Var& x, Shape shape) {
    return make_result(x.value().reshaped(std::move(shape)), {x}, [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
    });
}

/**
 * Inverted dropout. Identity (same node) in eval mode or at rate 0; in
 * train mode each entry is zeroed with probability `rate` and survivors
 * are scaled by 1/(1-rate).
 */
inline Var dropout(const Var& x, double rate, bool train, Rng& rng) {
    if (!(rate >= 0.0) || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    if (!train || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(x.shape());
    for (auto& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return make_result(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
        detail::accumulate_with(*self.parents[0], [&](std::size_t i) { return self.grad[i] * mask[i]; });
    });
}

/**
 * Additive attention logits over `n` value rows per group:
 * logit[g, j] = w_out . tanh(hq[g] + values[g*n + j] W + b).
 * hq [G x K], values [(G*n) x Dv], W [Dv x K], b [K], w_out [K x 1] -> [G x n].
 */
inline Var additive_scores(const Var& hq, const Var& values, const Var& w, const Var& b, const Var& w_out,
                           std::size_t n) {
    detail::require_rank2(hq, "additive_scores");
    detail::require_rank2(values, "additive_scores");
    const std::size_t groups = hq.shape()[0];
    const std::size_t K = hq.shape()[1];
    if (values.shape()[0] != groups * n || w.shape() != Shape{values.shape()[1], K} || b.value().size() != K ||
        w_out.shape() != Shape{K, 1})
        throw DimensionError("additive_scores: values " + shape_str(values.shape()) + ", W " + shape_str(w.shape()) +
                             ", b " + shape_str(b.shape()) + ", w_out " + shape_str(w_out.shape()) + " for " +
                             std::to_string(groups) + " groups of " + std::to_string(n));
    const std::size_t rows = groups * n;
    Tensor h = Tensor::uninit({rows, K});
    detail::view(h).noalias() = detail::view(values.value()) * detail::view(w.value());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* q = hq.value().data() + (r / n) * K;
        double* dst = h.data() + r * K;
        for (std::size_t k = 0; k < K; ++k) dst[k] = (q[k] + dst[k]) + b.value()[k];
    }
    detail::tanh_inplace(h);
    Tensor out = Tensor::uninit({groups, n});
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(rows)).noalias() =
        detail::view(h) * Eigen::Map<const Eigen::VectorXd>(w_out.value().data(), static_cast<Eigen::Index>(K));
    return make_result(std::move(out), {hq, values, w, b, w_out}, [h = std::move(h), n, K](Node& self) {
        Node& pq = *self.parents[0];
        Node& pv = *self.parents[1];
        Node& pw = *self.parents[2];
        Node& pb = *self.parents[3];
        Node& po = *self.parents[4];
        const std::size_t rows = h.rows();
        const double* dl = self.grad.data();
        const double* wo = po.value.data();
        if (po.requires_grad) {
            auto& g = po.grad_buffer();
            Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(K)).noalias() +=
                detail::view(h).transpose() * Eigen::Map<const Eigen::VectorXd>(dl, static_cast<Eigen::Index>(rows));
        }
        // gradient at the tanh input
        Tensor d = Tensor::uninit({rows, K});
        for (std::size_t r = 0; r < rows; ++r) {
            const double* hr = h.data() + r * K;
            double* dr = d.data() + r * K;
            for (std::size_t k = 0; k < K; ++k) dr[k] = dl[r] * wo[k] * (1.0 - hr[k] * hr[k]);
        }
        bool fresh = false;
        if (pw.requires_grad) {
            auto dst = detail::view(pw.grad_slot(fresh));
            if (fresh)
                dst.noalias() = detail::view(pv.value).transpose() * detail::view(d);
            else
                dst.noalias() += detail::view(pv.value).transpose() * detail::view(d);
        }
        if (pv.requires_grad) {
            auto dst = detail::view(pv.grad_slot(fresh));
            if (fresh)
                dst.noalias() = detail::view(d) * detail::view(pw.value).transpose();
            else
                dst.noalias() += detail::view(d) * detail::view(pw.value).transpose();
        }
        if (pq.requires_grad) {
            auto& g = pq.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                double* dst = g.data() + (r / n) * K;
                const double* src = d.data() + r * K;
                for (std::size_t k = 0; k < K; ++k) dst[k] += src[k];
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* src = d.data() + r * K;
                for (std::size_t k = 0; k < K; ++k) g[k] += src[k];
            }
        }
    });
}

/// Rows `ids` of x [V x D] -> [n x D]; backward scatter-adds into those rows.
inline Var gather_rows(const Var& x, std::span<const std::size_t> ids) {
    detail::require_rank2(x, "gather_rows");
    const std::size_t v = x.shape()[0];
    const std::size_t d = x.shape()[1];
    Tensor out = Tensor::uninit({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v)
            throw IndexError("row index " + std::to_string(ids[i]) + " out of range for " + shape_str(x.shape()));
        std::copy_n(x.value().data() + ids[i] * d, d, out.data() + i * d);
    }
    return make_result(std::move(out), {x}, [idx = std::vector<std::size_t>(ids.begin(), ids.end()), d](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
    });
}

/**
 * Column concatenation of gathered rows: field f contributes rows
 * `ids[f]` of tables[f]. Equivalent to concat({gather_rows(t_f, ids_f)}, 1)
 * without the intermediate tensors. A table may appear more than once.
 */
inline Var gather_concat(const std::vector<Var>& tables, const std::vector<std::span<const std::size_t>>& ids) {
    if (tables.empty() || tables.size() != ids.size())
        throw DimensionError("gather_concat: " + std::to_string(tables.size()) + " tables for " +
                             std::to_string(ids.size()) + " index lists");
    const std::size_t n = ids.front().size();
    std::vector<std::size_t> widths, offsets;
    std::size_t total = 0;
    for (std::size_t f = 0; f < tables.size(); ++f) {
        detail::require_rank2(tables[f], "gather_concat");
        if (ids[f].size() != n) throw DimensionError("gather_concat: index lists differ in length");
        const std::size_t v = tables[f].shape()[0];
        for (std::size_t id : ids[f])
            if (id >= v)
                throw IndexError("row index " + std::to_string(id) + " out of range for " +
                                 shape_str(tables[f].shape()));
        offsets.push_back(total);
        widths.push_back(tables[f].shape()[1]);
        total += widths.back();
    }
    Tensor out = Tensor::uninit({n, total});
    for (std::size_t f = 0; f < tables.size(); ++f) {
        const double* src = tables[f].value().data();
        const std::size_t d = widths[f];
        for (std::size_t i = 0; i < n; ++i) std::copy_n(src + ids[f][i] * d, d, out.data() + i * total + offsets[f]);
    }
    std::vector<std::vector<std::size_t>> idx;
    idx.reserve(ids.size());
    for (const auto& s : ids) idx.emplace_back(s.begin(), s.end());
    return make_result(std::move(out), tables,
                       [idx = std::move(idx), widths = std::move(widths), offsets = std::move(offsets), n,
                        total](Node& self) {
                           for (std::size_t f = 0; f < idx.size(); ++f) {
                               Node& t = *self.parents[f];
                               if (!t.requires_grad) continue;
                               double* g = t.grad_buffer().data();
                               const std::size_t d = widths[f];
                               for (std::size_t i = 0; i < n; ++i) {
                                   const double* src = self.grad.data() + i * total + offsets[f];
                                   double* dst = g + idx[f][i] * d;
                                   for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                           }
                       });
}

/// Row `id` of table [V x D] as a vector [D].
inline Var embedding_lookup(const Var& table, std::size_t id) {
    const std::size_t ids[1] = {id};
    return reshape(gather_rows(table, ids), {table.shape()[1]});
}

/**
 * Row-wise softmax over a [rows x n] logit matrix restricted to `mask`
 * (row-major, rows*n entries). Masked entries are exactly 0. A row with
 * no unmasked entry is an error unless `allow_empty_rows`, in which case
 * it yields an all-zero row.
 */
inline Var masked_softmax_rows(const Var& logits, const std::vector<bool>& mask, bool allow_empty_rows) {
    detail::require_rank2(logits, "masked_softmax_rows");
    const std::size_t rows = logits.shape()[0];
    const std::size_t n = logits.shape()[1];
    if (mask.size() != rows * n)
        throw DimensionError("masked_softmax: mask has " + std::to_string(mask.size()) + " entries for " +
                             shape_str(logits.shape()));
    Tensor out({rows, n}, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (mask[r * n + j]) mx = std::max(mx, logits.value()[r * n + j]);
        if (mx == -std::numeric_limits<double>::infinity()) {
            if (!allow_empty_rows) throw EmptyGroupError("masked_softmax: every entry of a group is masked");
            continue;
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask[r * n + j]) continue;
            const double e = std::exp(logits.value()[r * n + j] - mx);
            out[r * n + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= z;
    }
    return make_result(std::move(out), {logits}, [rows, n](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += self.value[r * n + j] * self.grad[r * n + j];
            for (std::size_t j = 0; j < n; ++j)
                g[r * n + j] += self.value[r * n + j] * (self.grad[r * n + j] - dot);
        }
    });
}

/// Softmax of a logit vector [n] over its unmasked entries.
inline Var masked_softmax(const Var& logits, const std::vector<bool>& mask) {
    if (logits.value().rank() != 1) throw DimensionError("masked_softmax: expected a vector");
    const std::size_t n = logits.shape()[0];
    return reshape(masked_softmax_rows(reshape(logits, {1, n}), mask, false), {n});
}

/**
 * Per-group weighted sum: weights [R x n], values [(R*n) x D] where rows
 * r*n..r*n+n-1 belong to group r. Returns [R x D].
 */
inline Var group_weighted_sum(const Var& weights, const Var& values) {
    detail::require_rank2(weights, "group_weighted_sum");
    detail::require_rank2(values, "group_weighted_sum");
    const std::size_t groups = weights.shape()[0];
    const std::size_t n = weights.shape()[1];
    const std::size_t d = values.shape()[1];
    if (values.shape()[0] != groups * n)
        throw DimensionError("group_weighted_sum: weights " + shape_str(weights.shape()) + " vs values " +
                             shape_str(values.shape()));
    Tensor out({groups, d}, 0.0);
    const auto& w = weights.value();
    const auto& v = values.value();
    for (std::size_t r = 0; r < groups; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            const double a = w[r * n + j];
            if (a == 0.0) continue;
            const double* src = v.data() + (r * n + j) * d;
            double* dst = out.data() + r * d;
            for (std::size_t k = 0; k < d; ++k) dst[k] += a * src[k];
        }
    }
    return make_result(std::move(out), {weights, values}, [groups, n, d](Node& self) {
        Node& pw = *self.parents[0];
        Node& pv = *self.parents[1];
        if (pw.requires_grad) {
            auto& g = pw.grad_buffer();
            for (std::size_t r = 0; r < groups; ++r)
                for (std::size_t j = 0; j < n; ++j) {
                    const double* src = pv.value.data() + (r * n + j) * d;
                    const double* gr = self.grad.data() + r * d;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < d; ++k) acc += gr[k] * src[k];
                    g[r * n + j] += acc;
                }
        }
        if (pv.requires_grad) {
            auto& g = pv.grad_buffer();
            for (std::size_t r = 0; r < groups; ++r)
                for (std::size_t j = 0; j < n; ++j) {
                    const double a = pw.value[r * n + j];
                    if (a == 0.0) continue;
                    double* dst = g.data() + (r * n + j) * d;
                    const double* gr = self.grad.data() + r * d;
                    for (std::size_t k = 0; k < d; ++k) dst[k] += a * gr[k];
                }
        }
    });
}

/**
 * Mean binary cross-entropy of predictions in (0,1) against {0,1} labels.
 * Log arguments are clamped at 1e-12.
 */
inline Var bce_loss(const Var& preds, std::span<const double> labels) {
    constexpr double kClamp = 1e-12;
    const std::size_t n = preds.value().size();
    if (labels.size() != n)
        throw DimensionError("bce_loss: " + std::to_string(n) + " predictions vs " + std::to_string(labels.size()) +
                             " labels");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = preds.value()[i];
        const double t = labels[i];
        total -= t * std::log(std::max(y, kClamp)) + (1.0 - t) * std::log(std::max(1.0 - y, kClamp));
    }
    return make_result(Tensor::scalar(total / static_cast<double>(n)), {preds},
                       [lab = std::vector<double>(labels.begin(), labels.end()), n](Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           const double scale = self.grad[0] / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                               const double y = self.parents[0]->value[i];
                               const double t = lab[i];
                               double d = 0.0;
                               if (y > kClamp) d -= t / y;
                               if (1.0 - y > kClamp) d += (1.0 - t) / (1.0 - y);
                               g[i] += scale * d;
                           }
                       });
}

}  // namespace racp::ops
