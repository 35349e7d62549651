#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "aligntf/rng.hpp"
#include "aligntf/tensor.hpp"

namespace aligntf {

enum class Init {
    Zeros,
    Ones,
    Xavier,     // U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))
    Embedding,  // N(0, 0.02)
};

template <typename Real>
struct NamedParameter {
    std::string name;
    Tensor<Real> tensor;
};

/// Ordered registry of trainable tensors.
///
/// Initial values depend only on (seed, parameter name): each parameter draws
/// from its own stream, so adding or removing unrelated parameters never
/// changes the others.
template <typename Real>
class ParameterSet {
public:
    explicit ParameterSet(std::uint64_t seed = 0) : init_rng_(Rng(seed).split("init")) {}

    Tensor<Real> create(const std::string& name, Shape shape, Init init) {
        for (const auto& p : entries_) {
            if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
        }
        Tensor<Real> t(std::move(shape));
        fill(t, name, init);
        t.set_requires_grad();
        entries_.push_back({name, t});
        return t;
    }

    [[nodiscard]] const std::vector<NamedParameter<Real>>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

    [[nodiscard]] Tensor<Real> find(const std::string& name) const {
        for (const auto& p : entries_) {
            if (p.name == name) return p.tensor;
        }
        throw ConfigError("no parameter named " + name);
    }

    [[nodiscard]] std::vector<Tensor<Real>> tensors() const {
        std::vector<Tensor<Real>> out;
        out.reserve(entries_.size());
        for (const auto& p : entries_) out.push_back(p.tensor);
        return out;
    }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : entries_) n += p.tensor.size();
        return n;
    }

    /// Allocates zeroed gradient buffers for every parameter.
    void zero_grad() {
        for (auto& p : entries_) {
            p.tensor.grad_mut();
            p.tensor.zero_grad();
        }
    }

private:
    void fill(Tensor<Real>& t, const std::string& name, Init init) {
        Rng rng = init_rng_.split(name);
        auto v = t.values();
        switch (init) {
            case Init::Zeros:
                break;
            case Init::Ones:
                std::fill(v.begin(), v.end(), Real(1));
                break;
            case Init::Xavier: {
                const double fan_in = static_cast<double>(t.rank() >= 2 ? t.rows() : 1);
                const double fan_out = static_cast<double>(t.cols());
                const double bound = std::sqrt(6.0 / (fan_in + fan_out));
                for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
                break;
            }
            case Init::Embedding:
                for (auto& x : v) x = static_cast<Real>(0.02 * rng.normal());
                break;
        }
    }

    Rng init_rng_;
    std::vector<NamedParameter<Real>> entries_;
};

}  // namespace aligntf
