#include "aligntf/ops.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>

#include "aligntf/kernels.hpp"

namespace aligntf {

namespace {

template <typename Real>
Tape<Real>* recording(std::initializer_list<const Tensor<Real>*> inputs) {
    auto* tape = Tape<Real>::active();
    if (tape == nullptr) return nullptr;
    for (const auto* t : inputs) {
        if (t->requires_grad()) return tape;
    }
    return nullptr;
}

template <typename Real>
Tape<Real>* recording(const std::vector<Tensor<Real>>& inputs) {
    auto* tape = Tape<Real>::active();
    if (tape == nullptr) return nullptr;
    for (const auto& t : inputs) {
        if (t.requires_grad()) return tape;
    }
    return nullptr;
}

enum class Bcast { Same, Row };

template <typename Real>
Bcast broadcast_kind(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::Same;
    if (b.size() == a.cols() && b.rows() == 1) return Bcast::Row;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
}

template <typename Real>
Shape matrix_shape(std::size_t r, std::size_t c) {
    return Shape{r, c};
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    Tensor<Real> out(matrix_shape<Real>(m, n));
    kernels::gemm_nn(m, n, k, a.data(), b.data(), out.data(), false);
    if (auto* tape = recording({&a, &b})) {
        out.set_requires_grad();
        tape->record([a, b, out, m, n, k]() mutable {
            if (!out.has_grad()) return;
            const Real* g = out.grad().data();
            if (a.requires_grad()) kernels::gemm_nt(m, k, n, g, b.data(), a.grad_mut().data(), true);
            if (b.requires_grad()) kernels::gemm_tn(k, n, m, a.data(), g, b.grad_mut().data(), true);
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
    }
    Tensor<Real> out(matrix_shape<Real>(m, n));
    kernels::gemm_nt(m, n, k, a.data(), b.data(), out.data(), false);
    if (auto* tape = recording({&a, &b})) {
        out.set_requires_grad();
        tape->record([a, b, out, m, n, k]() mutable {
            if (!out.has_grad()) return;
            const Real* g = out.grad().data();
            if (a.requires_grad()) kernels::gemm_nn(m, k, n, g, b.data(), a.grad_mut().data(), true);
            if (b.requires_grad()) kernels::gemm_tn(n, k, m, g, a.data(), b.grad_mut().data(), true);
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
    const std::size_t r = a.rows(), c = a.cols();
    Tensor<Real> out(matrix_shape<Real>(c, r));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
    if (auto* tape = recording({&a})) {
        out.set_requires_grad();
        tape->record([a, out, r, c]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
        });
    }
    return out;
}

namespace {

// Shared implementation of add (sign = +1) and sub (sign = -1).
template <typename Real>
Tensor<Real> add_signed(const Tensor<Real>& a, const Tensor<Real>& b, Real sign, const char* name) {
    const Bcast kind = broadcast_kind(a, b, name);
    const std::size_t cols = a.cols();
    Tensor<Real> out(a.shape());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + sign * bv[kind == Bcast::Same ? i : i % cols];
    if (auto* tape = recording({&a, &b})) {
        out.set_requires_grad();
        tape->record([a, b, out, kind, cols, sign]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[kind == Bcast::Same ? i : i % cols] += sign * g[i];
            }
        });
    }
    return out;
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    return add_signed(a, b, Real(1), "add");
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    return add_signed(a, b, Real(-1), "sub");
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    const Bcast kind = broadcast_kind(a, b, "mul");
    const std::size_t cols = a.cols();
    Tensor<Real> out(a.shape());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[kind == Bcast::Same ? i : i % cols];
    if (auto* tape = recording({&a, &b})) {
        out.set_requires_grad();
        tape->record([a, b, out, kind, cols]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto av = a.values();
            auto bv = b.values();
            if (a.requires_grad()) {
                auto ga = a.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[kind == Bcast::Same ? i : i % cols];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[kind == Bcast::Same ? i : i % cols] += g[i] * av[i];
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> affine(const Tensor<Real>& a, Real s, Real shift) {
    Tensor<Real> out(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = s * av[i] + shift;
    if (auto* tape = recording({&a})) {
        out.set_requires_grad();
        tape->record([a, out, s]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
    return affine(a, s, Real(0));
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
    Tensor<Real> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > Real(0) ? xv[i] : Real(0);
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto xv = x.values();
            auto gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xv[i] > Real(0)) gx[i] += g[i];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
    Tensor<Real> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const Real v = xv[i];
        if (v >= Real(0)) {
            ov[i] = Real(1) / (Real(1) + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            ov[i] = e / (Real(1) + e);
        }
    }
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto y = out.values();
            auto gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (Real(1) - y[i]);
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x) {
    for (Real v : x.values()) {
        if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
    }
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor<Real> out(x.shape());
    kernels::softmax_rows(rows, cols, x.data(), out.data());
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out, rows, cols]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto y = out.values();
            auto gx = x.grad_mut();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t o = r * cols;
                Real dot = 0;
                for (std::size_t j = 0; j < cols; ++j) dot += g[o + j] * y[o + j];
                for (std::size_t j = 0; j < cols; ++j) gx[o + j] += y[o + j] * (g[o + j] - dot);
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw DimensionError("concat_cols: row counts disagree");
        total += p.cols();
    }
    Tensor<Real> out(matrix_shape<Real>(rows, total));
    std::size_t offset = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(p.data() + r * p.cols(), p.cols(), out.data() + r * total + offset);
        offset += p.cols();
    }
    if (auto* tape = recording(parts)) {
        out.set_requires_grad();
        tape->record([parts, out, rows, total]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            std::size_t offset = 0;
            for (auto& p : parts) {
                const std::size_t c = p.cols();
                if (p.requires_grad()) {
                    auto gp = p.grad_mut();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * total + offset + j];
                }
                offset += c;
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw DimensionError("concat_rows: column counts disagree");
        total += p.rows();
    }
    Tensor<Real> out(matrix_shape<Real>(total, cols));
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy_n(p.data(), p.size(), out.data() + offset);
        offset += p.size();
    }
    if (auto* tape = recording(parts)) {
        out.set_requires_grad();
        tape->record([parts, out]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            std::size_t offset = 0;
            for (auto& p : parts) {
                if (p.requires_grad()) {
                    auto gp = p.grad_mut();
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
                }
                offset += p.size();
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t start, std::size_t count) {
    const std::size_t rows = a.rows(), cols = a.cols();
    if (count == 0 || start + count > cols) {
        throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") outside " + shape_str(a.shape()));
    }
    Tensor<Real> out(matrix_shape<Real>(rows, count));
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(a.data() + r * cols + start, count, out.data() + r * count);
    if (auto* tape = recording({&a})) {
        out.set_requires_grad();
        tape->record([a, out, rows, cols, start, count]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto ga = a.grad_mut();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < count; ++j) ga[r * cols + start + j] += g[r * count + j];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& a, std::size_t start, std::size_t count) {
    const std::size_t rows = a.rows(), cols = a.cols();
    if (count == 0 || start + count > rows) {
        throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") outside " + shape_str(a.shape()));
    }
    Tensor<Real> out(matrix_shape<Real>(count, cols));
    std::copy_n(a.data() + start * cols, count * cols, out.data());
    if (auto* tape = recording({&a})) {
        out.set_requires_grad();
        tape->record([a, out, cols, start]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[start * cols + i] += g[i];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, std::span<const std::size_t> ids) {
    if (ids.empty()) throw DimensionError("embedding_lookup: empty id list");
    const std::size_t d = table.cols(), n = table.rows();
    Tensor<Real> out(matrix_shape<Real>(ids.size(), d));
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= n) {
            throw DimensionError("embedding_lookup: id " + std::to_string(ids[r]) + " outside table of " +
                                 std::to_string(n) + " rows");
        }
        std::copy_n(table.data() + ids[r] * d, d, out.data() + r * d);
    }
    if (auto* tape = recording({&table})) {
        out.set_requires_grad();
        std::vector<std::size_t> saved(ids.begin(), ids.end());
        tape->record([table, out, saved = std::move(saved), d]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gt = table.grad_mut();
            for (std::size_t r = 0; r < saved.size(); ++r)
                for (std::size_t j = 0; j < d; ++j) gt[saved[r] * d + j] += g[r * d + j];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real keep_prob, bool training, Rng& rng) {
    if (!training || keep_prob >= Real(1)) return x;
    if (keep_prob <= Real(0)) throw ConfigError("dropout: keep probability must be in (0, 1]");
    std::vector<Real> mask(x.size());
    const Real inv = Real(1) / keep_prob;
    for (auto& m : mask) m = rng.uniform() < static_cast<double>(keep_prob) ? inv : Real(0);
    Tensor<Real> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * mask[i];
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out, mask = std::move(mask)]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> normalize_rows(const Tensor<Real>& x, Real eps) {
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor<Real> out(x.shape());
    std::vector<Real> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x.data() + r * cols;
        Real mu = 0;
        for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
        mu /= Real(cols);
        Real var = 0;
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= Real(cols);
        inv_std[r] = Real(1) / std::sqrt(var + eps);
        Real* yr = out.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * inv_std[r];
    }
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out, inv_std = std::move(inv_std), rows, cols]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto y = out.values();
            auto gx = x.grad_mut();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t o = r * cols;
                Real gmean = 0, gy = 0;
                for (std::size_t j = 0; j < cols; ++j) {
                    gmean += g[o + j];
                    gy += g[o + j] * y[o + j];
                }
                gmean /= Real(cols);
                gy /= Real(cols);
                for (std::size_t j = 0; j < cols; ++j) gx[o + j] += inv_std[r] * (g[o + j] - gmean - y[o + j] * gy);
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias, Real eps) {
    return add(mul(normalize_rows(x, eps), gain), bias);
}

template <typename Real>
Tensor<Real> mean_rows(const Tensor<Real>& x) {
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor<Real> out(matrix_shape<Real>(1, cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) out[j] += x.at(r, j);
    for (std::size_t j = 0; j < cols; ++j) out[j] /= Real(rows);
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out, rows, cols]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            auto gx = x.grad_mut();
            const Real inv = Real(1) / Real(rows);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += g[j] * inv;
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
    Real s = 0;
    for (Real v : x.values()) s += v;
    auto out = Tensor<Real>::scalar(s);
    if (auto* tape = recording({&x})) {
        out.set_requires_grad();
        tape->record([x, out]() mutable {
            if (!out.has_grad()) return;
            const Real g = out.grad()[0];
            for (auto& v : x.grad_mut()) v += g;
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
    return scale(sum(x), Real(1) / Real(x.size()));
}

template <typename Real>
Tensor<Real> cross_entropy_sum(const Tensor<Real>& logits, std::span<const std::size_t> targets,
                               std::size_t ignore_index) {
    const std::size_t rows = logits.rows(), cols = logits.cols();
    if (targets.size() != rows) {
        throw DimensionError("cross_entropy_sum: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(rows) + " logit rows");
    }
    std::vector<Real> probs(logits.size());
    kernels::softmax_rows(rows, cols, logits.data(), probs.data());
    Real total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] == ignore_index) continue;
        if (targets[r] >= cols) throw DimensionError("cross_entropy_sum: target id outside vocabulary");
        const Real* lr = logits.data() + r * cols;
        Real mx = lr[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, lr[j]);
        Real s = 0;
        for (std::size_t j = 0; j < cols; ++j) s += std::exp(lr[j] - mx);
        total += -(lr[targets[r]] - mx - std::log(s));
    }
    auto out = Tensor<Real>::scalar(total);
    if (auto* tape = recording({&logits})) {
        out.set_requires_grad();
        std::vector<std::size_t> saved(targets.begin(), targets.end());
        tape->record([logits, out, probs = std::move(probs), saved = std::move(saved), ignore_index, rows,
                      cols]() mutable {
            if (!out.has_grad()) return;
            const Real g = out.grad()[0];
            auto gl = logits.grad_mut();
            for (std::size_t r = 0; r < rows; ++r) {
                if (saved[r] == ignore_index) continue;
                for (std::size_t j = 0; j < cols; ++j) {
                    const Real target = j == saved[r] ? Real(1) : Real(0);
                    gl[r * cols + j] += g * (probs[r * cols + j] - target);
                }
            }
        });
    }
    return out;
}

template <typename Real>
Tensor<Real> binary_cross_entropy(const Tensor<Real>& probs, std::span<const Real> targets, Real eps) {
    if (targets.size() != probs.size()) throw DimensionError("binary_cross_entropy: target length mismatch");
    const std::size_t n = probs.size();
    Real total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real p = std::clamp(probs[i], eps, Real(1) - eps);
        total += -(targets[i] * std::log(p) + (Real(1) - targets[i]) * std::log(Real(1) - p));
    }
    auto out = Tensor<Real>::scalar(total / Real(n));
    if (auto* tape = recording({&probs})) {
        out.set_requires_grad();
        std::vector<Real> saved(targets.begin(), targets.end());
        tape->record([probs, out, saved = std::move(saved), eps, n]() mutable {
            if (!out.has_grad()) return;
            const Real g = out.grad()[0] / Real(n);
            auto gp = probs.grad_mut();
            for (std::size_t i = 0; i < n; ++i) {
                const Real p = probs[i];
                if (p < eps || p > Real(1) - eps) continue;  // clamped: flat
                gp[i] += g * (p - saved[i]) / (p * (Real(1) - p));
            }
        });
    }
    return out;
}

#define ALIGNTF_INSTANTIATE_OPS(T)                                                                              \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> transpose(const Tensor<T>&);                                                             \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                 \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                 \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                 \
    template Tensor<T> scale(const Tensor<T>&, T);                                                              \
    template Tensor<T> affine(const Tensor<T>&, T, T);                                                          \
    template Tensor<T> relu(const Tensor<T>&);                                                                  \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                               \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                                          \
    template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                              \
    template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                              \
    template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                                  \
    template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                                  \
    template Tensor<T> embedding_lookup(const Tensor<T>&, std::span<const std::size_t>);                        \
    template Tensor<T> dropout(const Tensor<T>&, T, bool, Rng&);                                                \
    template Tensor<T> normalize_rows(const Tensor<T>&, T);                                                     \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                     \
    template Tensor<T> mean_rows(const Tensor<T>&);                                                             \
    template Tensor<T> sum(const Tensor<T>&);                                                                   \
    template Tensor<T> mean(const Tensor<T>&);                                                                  \
    template Tensor<T> cross_entropy_sum(const Tensor<T>&, std::span<const std::size_t>, std::size_t);          \
    template Tensor<T> binary_cross_entropy(const Tensor<T>&, std::span<const T>, T);

ALIGNTF_INSTANTIATE_OPS(float)
ALIGNTF_INSTANTIATE_OPS(double)

}  // namespace aligntf
