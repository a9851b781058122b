#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "racp/autodiff.hpp"
#include "racp/rng.hpp"

namespace racp {

/// Named trainable parameters, iterated in insertion order.
class ParamStore {
public:
    Var& add(const std::string& path, Tensor value) {
        if (index_.contains(path)) throw ConfigError("duplicate parameter path: " + path);
        index_.emplace(path, entries_.size());
        entries_.emplace_back(path, Var::leaf(std::move(value)));
        return entries_.back().second;
    }

    bool contains(const std::string& path) const { return index_.contains(path); }

    const Var& get(const std::string& path) const {
        auto it = index_.find(path);
        if (it == index_.end()) throw ConfigError("unknown parameter path: " + path);
        return entries_[it->second].second;
    }

    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, v] : entries_) n += v.value().size();
        return n;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grad() {
        for (auto& [_, v] : entries_) v.zero_grad();
    }

    /// Deep copy: fresh leaves holding the same values.
    ParamStore clone() const {
        ParamStore out;
        for (const auto& [path, v] : entries_) out.add(path, v.value());
        return out;
    }

    /// Overwrite values from another store with identical layout.
    void assign(const ParamStore& other) {
        if (other.size() != size()) throw ConfigError("parameter layout mismatch");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto& [path, v] = entries_[i];
            const auto& [opath, ov] = other.entries_[i];
            if (path != opath || v.shape() != ov.shape())
                throw ConfigError("parameter layout mismatch at " + path);
            v.mutable_value() = ov.value();
        }
    }

private:
    std::vector<std::pair<std::string, Var>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace init {

inline Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Glorot-uniform for a [fan_in x fan_out] weight.
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform({fan_in, fan_out}, -limit, limit, rng);
}

}  // namespace init

/// Per-parameter first and second moment buffers.
using AdamState = std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>;

/**
 * One Adam update with bias correction at step t (t >= 1). Every
 * parameter must carry a gradient; gradients are cleared afterwards.
 */
inline void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps, long t,
                      AdamState& state) {
    if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
    for (auto& [path, var] : params)
        if (!var.has_grad()) throw GradientError("adam: parameter '" + path + "' has no gradient");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [path, var] : params) {
        auto& [m, v] = state[path];
        Tensor& w = var.mutable_value();
        const Tensor& g = var.grad();
        if (m.size() != w.size()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
    params.zero_grad();
}

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam optimizer owning its step counter and moment buffers.
class Adam {
public:
    explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

    const AdamOptions& options() const { return opts_; }
    long step_count() const { return t_; }

    void step(ParamStore& params) {
        adam_step(params, opts_.lr, opts_.beta1, opts_.beta2, opts_.eps, t_ + 1, state_);
        ++t_;
    }

private:
    AdamOptions opts_;
    long t_ = 0;
    AdamState state_;
};

}  // namespace racp
