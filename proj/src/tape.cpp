#include "conslearn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <cblas.h>

namespace conslearn::diff {

const Array& Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::constant(Array value) { return record("constant", std::move(value), false, nullptr); }

Var Tape::leaf(Array value) { return record("leaf", std::move(value), true, nullptr); }

Var Tape::record(const char* op, Array value, bool requires_grad, Backprop backprop) {
    Entry e;
    e.value = std::move(value);
    e.requires_grad = requires_grad;
    e.op = op;
    if (requires_grad) e.backprop = std::move(backprop);
    entries_.push_back(std::move(e));
    return Var{this, entries_.size() - 1};
}

Array* Tape::grad_buffer(Var v) {
    Entry& e = entries_.at(v.id);
    if (!e.requires_grad) return nullptr;
    if (!e.has_grad) {
        e.grad = Array(e.value.shape(), 0.0);
        e.has_grad = true;
    }
    return &e.grad;
}

void Tape::accumulate(Var v, const Array& g) {
    Array* buf = grad_buffer(v);
    if (!buf) return;
    if (buf->size() != g.size()) {
        throw DimensionError("gradient " + shape_to_string(g.shape()) + " does not match value " +
                             shape_to_string(buf->shape()));
    }
    double* dst = buf->data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

Array Tape::grad(Var v) const {
    const Entry& e = entries_.at(v.id);
    if (e.has_grad) return e.grad;
    return Array(e.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
    if (value(loss).size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_to_string(value(loss).shape()));
    }
    for (auto& e : entries_) {
        e.has_grad = false;
        e.grad = Array();
    }
    last_sweep_.clear();
    if (!requires_grad(loss)) return;
    Array* seed = grad_buffer(loss);
    seed->fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Entry& e = entries_[i];
        if (!e.has_grad || !e.backprop) continue;
        last_sweep_.push_back(i);
        e.backprop(*this, e.grad, e.value);
    }
}

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.emplace_back(e.op);
    return names;
}

namespace {

void require_rank(const Array& a, std::size_t rank, const char* op, const char* what) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                             ", got " + shape_to_string(a.shape()));
    }
}

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands recorded on different tapes");
}

}  // namespace

Var linear(Var input, Var weight, Var bias) {
    require_same_tape(input, weight, "linear");
    require_same_tape(input, bias, "linear");
    const Array& x = input.value();
    const Array& w = weight.value();
    const Array& b = bias.value();
    require_rank(x, 2, "linear", "input");
    require_rank(w, 2, "linear", "weight");
    require_rank(b, 1, "linear", "bias");
    if (x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0)) {
        throw DimensionError("linear: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                             shape_to_string(w.shape()) + " and bias " + shape_to_string(b.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1), e = w.dim(1);
    Array out({n, e});
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * e;
        for (std::size_t k = 0; k < e; ++k) row[k] = b[k];
        for (std::size_t j = 0; j < d; ++j) {
            const double xv = x[i * d + j];
            const double* wrow = w.data() + j * e;
            for (std::size_t k = 0; k < e; ++k) row[k] += xv * wrow[k];
        }
    }
    const bool rg = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
    return input.tape->record("linear", std::move(out), rg, [=](Tape& t, const Array& g, const Array&) {
        const Array& xv = t.value(input);
        const Array& wv = t.value(weight);
        if (Array* gx = t.grad_buffer(input)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < e; ++k) acc += g[i * e + k] * wv[j * e + k];
                    (*gx)[i * d + j] += acc;
                }
        }
        if (Array* gw = t.grad_buffer(weight)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    const double xij = xv[i * d + j];
                    double* dst = gw->data() + j * e;
                    for (std::size_t k = 0; k < e; ++k) dst[k] += xij * g[i * e + k];
                }
        }
        if (Array* gb = t.grad_buffer(bias)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < e; ++k) (*gb)[k] += g[i * e + k];
        }
    });
}

namespace {

struct ConvGeometry {
    std::size_t n, c, h, w, k, kh, kw, stride, ph, pw, oh, ow;
};

ConvGeometry conv_geometry(const Array& x, const Array& kernel, std::size_t stride, Padding padding) {
    require_rank(x, 4, "conv2d", "input");
    require_rank(kernel, 4, "conv2d", "kernel");
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (kernel.dim(1) != x.dim(1)) {
        throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) + " channel count does not match input " +
                             shape_to_string(x.shape()));
    }
    ConvGeometry g{};
    g.n = x.dim(0);
    g.c = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.k = kernel.dim(0);
    g.kh = kernel.dim(2);
    g.kw = kernel.dim(3);
    g.stride = stride;
    g.ph = padding == Padding::same ? (g.kh - 1) / 2 : 0;
    g.pw = padding == Padding::same ? (g.kw - 1) / 2 : 0;
    if (g.kh > g.h + 2 * g.ph || g.kw > g.w + 2 * g.pw) {
        throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) + " larger than padded input " +
                             shape_to_string(x.shape()));
    }
    g.oh = (g.h + 2 * g.ph - g.kh) / stride + 1;
    g.ow = (g.w + 2 * g.pw - g.kw) / stride + 1;
    return g;
}

// Output column range [lo, hi) whose input column ox*stride + kx - pw is in [0, w).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t offset, std::size_t pad, std::size_t extent,
                                                       std::size_t stride, std::size_t out_extent) {
    // input = o*stride + offset - pad
    std::size_t lo = 0;
    if (offset < pad) lo = (pad - offset + stride - 1) / stride;
    // o*stride + offset - pad <= extent - 1  ->  o <= (extent - 1 + pad - offset) / stride
    if (extent + pad < offset + 1) return {0, 0};
    std::size_t hi = (extent - 1 + pad - offset) / stride + 1;
    hi = std::min(hi, out_extent);
    if (lo > hi) lo = hi;
    return {lo, hi};
}

}  // namespace

namespace {

// Unfolds x[N×C×H×W] into col[(C·kh·kw) × (N·OH·OW)]; out-of-range taps are 0.
void im2col(const double* x, const ConvGeometry& g, double* col) {
    const std::size_t p = g.oh * g.ow, np = g.n * p;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto [ylo, yhi] = valid_range(ky, g.ph, g.h, g.stride, g.oh);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto [xlo, xhi] = valid_range(kx, g.pw, g.w, g.stride, g.ow);
                double* row = col + ((c * g.kh + ky) * g.kw + kx) * np;
                std::fill(row, row + np, 0.0);
                for (std::size_t n = 0; n < g.n; ++n) {
                    const double* in = x + (n * g.c + c) * g.h * g.w;
                    double* dst = row + n * p;
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                        const double* irow = in + (oy * g.stride + ky - g.ph) * g.w;
                        double* drow = dst + oy * g.ow;
                        if (g.stride == 1) {
                            std::copy(irow + xlo + kx - g.pw, irow + xhi + kx - g.pw, drow + xlo);
                        } else {
                            for (std::size_t ox = xlo; ox < xhi; ++ox) drow[ox] = irow[ox * g.stride + kx - g.pw];
                        }
                    }
                }
            }
        }
}

// Adjoint of im2col: scatters col back onto gx, accumulating.
void col2im(const double* col, const ConvGeometry& g, double* gx) {
    const std::size_t p = g.oh * g.ow, np = g.n * p;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto [ylo, yhi] = valid_range(ky, g.ph, g.h, g.stride, g.oh);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto [xlo, xhi] = valid_range(kx, g.pw, g.w, g.stride, g.ow);
                const double* row = col + ((c * g.kh + ky) * g.kw + kx) * np;
                for (std::size_t n = 0; n < g.n; ++n) {
                    double* out = gx + (n * g.c + c) * g.h * g.w;
                    const double* src = row + n * p;
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                        double* orow = out + (oy * g.stride + ky - g.ph) * g.w;
                        const double* srow = src + oy * g.ow;
                        for (std::size_t ox = xlo; ox < xhi; ++ox) orow[ox * g.stride + kx - g.pw] += srow[ox];
                    }
                }
            }
        }
}

int blas_int(std::size_t v) { return static_cast<int>(v); }

}  // namespace

Var conv2d(Var input, Var kernel, std::size_t stride, Padding padding) {
    require_same_tape(input, kernel, "conv2d");
    const Array& x = input.value();
    const Array& wk = kernel.value();
    const ConvGeometry g = conv_geometry(x, wk, stride, padding);
    const std::size_t ckk = g.c * g.kh * g.kw, p = g.oh * g.ow, np = g.n * p;
    std::vector<double> col(ckk * np), prod(g.k * np);
    im2col(x.data(), g, col.data());
    // prod[K × NP] = W[K × CKK] · col[CKK × NP]
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(g.k), blas_int(np), blas_int(ckk), 1.0, wk.data(),
                blas_int(ckk), col.data(), blas_int(np), 0.0, prod.data(), blas_int(np));
    Array out({g.n, g.k, g.oh, g.ow});
    for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t k = 0; k < g.k; ++k)
            std::copy_n(prod.data() + k * np + n * p, p, out.data() + (n * g.k + k) * p);
    const bool rg = input.requires_grad() || kernel.requires_grad();
    return input.tape->record("conv2d", std::move(out), rg, [=](Tape& t, const Array& go, const Array&) {
        Array* gx = t.grad_buffer(input);
        Array* gk = t.grad_buffer(kernel);
        std::vector<double> gprod(g.k * np);
        for (std::size_t n = 0; n < g.n; ++n)
            for (std::size_t k = 0; k < g.k; ++k)
                std::copy_n(go.data() + (n * g.k + k) * p, p, gprod.data() + k * np + n * p);
        if (gk) {
            std::vector<double> cols(ckk * np);
            im2col(t.value(input).data(), g, cols.data());
            // gW[K × CKK] += G[K × NP] · colᵀ
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(g.k), blas_int(ckk), blas_int(np), 1.0,
                        gprod.data(), blas_int(np), cols.data(), blas_int(np), 1.0, gk->data(), blas_int(ckk));
        }
        if (gx) {
            std::vector<double> gcol(ckk * np);
            // gcol[CKK × NP] = Wᵀ · G
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(ckk), blas_int(np), blas_int(g.k), 1.0,
                        t.value(kernel).data(), blas_int(ckk), gprod.data(), blas_int(np), 0.0, gcol.data(),
                        blas_int(np));
            col2im(gcol.data(), g, gx->data());
        }
    });
}

Var add_channel_bias(Var input, Var bias) {
    require_same_tape(input, bias, "add_channel_bias");
    const Array& x = input.value();
    const Array& b = bias.value();
    require_rank(x, 4, "add_channel_bias", "input");
    require_rank(b, 1, "add_channel_bias", "bias");
    if (b.dim(0) != x.dim(1)) {
        throw DimensionError("add_channel_bias: bias " + shape_to_string(b.shape()) + " vs input " +
                             shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Array out = x;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            double* p = out.data() + (i * c + k) * plane;
            for (std::size_t j = 0; j < plane; ++j) p[j] += b[k];
        }
    const bool rg = input.requires_grad() || bias.requires_grad();
    return input.tape->record("add_channel_bias", std::move(out), rg, [=](Tape& t, const Array& g, const Array&) {
        t.accumulate(input, g);
        if (Array* gb = t.grad_buffer(bias)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < c; ++k) {
                    const double* p = g.data() + (i * c + k) * plane;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
                    (*gb)[k] += acc;
                }
        }
    });
}

Var relu(Var input) {
    const Array& x = input.value();
    Array out = x;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return input.tape->record("relu", std::move(out), input.requires_grad(), [=](Tape& t, const Array& g, const Array&) {
        const Array& xv = t.value(input);
        Array* gx = t.grad_buffer(input);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0.0) (*gx)[i] += g[i];
    });
}

Var global_avg_pool(Var input) {
    const Array& x = input.value();
    require_rank(x, 4, "global_avg_pool", "input");
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    if (plane == 0) throw DimensionError("global_avg_pool: empty spatial extent");
    Array out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        const double* p = x.data() + i * plane;
        double acc = 0.0;
        for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        out[i] = acc / static_cast<double>(plane);
    }
    return input.tape->record("global_avg_pool", std::move(out), input.requires_grad(), [=](Tape& t, const Array& g, const Array&) {
        Array* gx = t.grad_buffer(input);
        const double inv = 1.0 / static_cast<double>(plane);
        for (std::size_t i = 0; i < n * c; ++i) {
            double* p = gx->data() + i * plane;
            const double gi = g[i] * inv;
            for (std::size_t j = 0; j < plane; ++j) p[j] += gi;
        }
    });
}

Var softmax(Var input) {
    const Array& x = input.value();
    require_rank(x, 2, "softmax", "input");
    const std::size_t n = x.dim(0), m = x.dim(1);
    Array out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.data() + i * m;
        double* o = out.data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            o[j] = std::exp(row[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < m; ++j) o[j] /= total;
    }
    return input.tape->record("softmax", std::move(out), input.requires_grad(),
                              [=](Tape& t, const Array& g, const Array& y) {
                                  Array* gx = t.grad_buffer(input);
                                  for (std::size_t i = 0; i < n; ++i) {
                                      double dot = 0.0;
                                      for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * y[i * m + j];
                                      for (std::size_t j = 0; j < m; ++j)
                                          (*gx)[i * m + j] += y[i * m + j] * (g[i * m + j] - dot);
                                  }
                              });
}

Var mask_multiply(Var input, const Array& mask) {
    const Array& x = input.value();
    require_rank(x, 4, "mask_multiply", "input");
    require_rank(mask, 3, "mask_multiply", "mask");
    if (mask.dim(0) != x.dim(0) || mask.dim(1) != x.dim(2) || mask.dim(2) != x.dim(3)) {
        throw DimensionError("mask_multiply: mask " + shape_to_string(mask.shape()) + " vs input " +
                             shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Array out = x;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            double* p = out.data() + (i * c + k) * plane;
            const double* mp = mask.data() + i * plane;
            for (std::size_t j = 0; j < plane; ++j) p[j] *= mp[j];
        }
    return input.tape->record("mask_multiply", std::move(out), input.requires_grad(),
                              [=](Tape& t, const Array& g, const Array&) {
                                  Array* gx = t.grad_buffer(input);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t k = 0; k < c; ++k) {
                                          const std::size_t off = (i * c + k) * plane;
                                          const double* mp = mask.data() + i * plane;
                                          for (std::size_t j = 0; j < plane; ++j) (*gx)[off + j] += g[off + j] * mp[j];
                                      }
                              });
}

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    if (a.shape() != b.shape()) {
        throw DimensionError("add: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    }
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    const bool rg = a.requires_grad() || b.requires_grad();
    return a.tape->record("add", std::move(out), rg, [=](Tape& t, const Array& g, const Array&) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b, "mul");
    if (a.shape() != b.shape()) {
        throw DimensionError("mul: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    }
    Array out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    const bool rg = a.requires_grad() || b.requires_grad();
    return a.tape->record("mul", std::move(out), rg, [=](Tape& t, const Array& g, const Array&) {
        const Array& av = t.value(a);
        const Array& bv = t.value(b);
        if (Array* ga = t.grad_buffer(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        if (Array* gb = t.grad_buffer(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    });
}

Var scale(Var a, double factor) {
    Array out = a.value();
    for (auto& v : out.values()) v *= factor;
    return a.tape->record("scale", std::move(out), a.requires_grad(), [=](Tape& t, const Array& g, const Array&) {
        Array* ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
    });
}

Var sum(Var a) {
    double acc = 0.0;
    for (double v : a.value().values()) acc += v;
    return a.tape->record("sum", Array::scalar(acc), a.requires_grad(), [=](Tape& t, const Array& g, const Array&) {
        Array* ga = t.grad_buffer(a);
        for (auto& v : ga->values()) v += g[0];
    });
}

Var mean(Var a) {
    const std::size_t count = a.value().size();
    if (count == 0) return a.tape->constant(Array::scalar(0.0));
    return scale(sum(a), 1.0 / static_cast<double>(count));
}

Var soft_cross_entropy(const Array& target, Var probs, double floor) {
    const Array& p = probs.value();
    require_rank(p, 2, "soft_cross_entropy", "probs");
    if (target.shape() != p.shape()) {
        throw DimensionError("soft_cross_entropy: target " + shape_to_string(target.shape()) + " vs probs " +
                             shape_to_string(p.shape()));
    }
    const std::size_t n = p.dim(0);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) acc -= target[i] * std::log(std::max(p[i], floor));
    const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
    return probs.tape->record("soft_cross_entropy", Array::scalar(static_cast<double>(acc / static_cast<long double>(n ? n : 1))), probs.requires_grad(),
                              [=](Tape& t, const Array& g, const Array&) {
                                  const Array& pv = t.value(probs);
                                  Array* gp = t.grad_buffer(probs);
                                  for (std::size_t i = 0; i < pv.size(); ++i)
                                      if (pv[i] > floor) (*gp)[i] -= g[0] * inv_n * target[i] / pv[i];
                              });
}

Var nll_of_probs(Var probs, std::span<const int> labels, double floor) {
    const Array& p = probs.value();
    require_rank(p, 2, "nll_of_probs", "probs");
    if (labels.size() != p.dim(0)) {
        throw DimensionError("nll_of_probs: " + std::to_string(labels.size()) + " labels for probs " +
                             shape_to_string(p.shape()));
    }
    const std::size_t m = p.dim(1);
    std::vector<int> lab(labels.begin(), labels.end());
    std::size_t count = 0;
    long double acc = 0.0L;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        if (lab[i] < 0) continue;
        if (static_cast<std::size_t>(lab[i]) >= m) {
            throw ContractError("nll_of_probs: label " + std::to_string(lab[i]) + " >= class count " +
                                std::to_string(m));
        }
        acc -= std::log(std::max(p[i * m + static_cast<std::size_t>(lab[i])], floor));
        ++count;
    }
    const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
    return probs.tape->record("nll_of_probs", Array::scalar(count ? static_cast<double>(acc / static_cast<long double>(count)) : 0.0),
                              probs.requires_grad() && count > 0,
                              [=](Tape& t, const Array& g, const Array&) {
                                  const Array& pv = t.value(probs);
                                  Array* gp = t.grad_buffer(probs);
                                  for (std::size_t i = 0; i < lab.size(); ++i) {
                                      if (lab[i] < 0) continue;
                                      const std::size_t j = i * m + static_cast<std::size_t>(lab[i]);
                                      if (pv[j] > floor) (*gp)[j] -= g[0] * inv / pv[j];
                                  }
                              });
}

Var pair_distances(Var x, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    const Array& xv = x.value();
    require_rank(xv, 2, "pair_distances", "input");
    const std::size_t n = xv.dim(0), d = xv.dim(1);
    std::vector<std::pair<std::size_t, std::size_t>> pr(pairs.begin(), pairs.end());
    Array out({pr.size()});
    for (std::size_t p = 0; p < pr.size(); ++p) {
        const auto [a, b] = pr[p];
        if (a >= n || b >= n) throw DimensionError("pair_distances: index out of range");
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = xv[a * d + j] - xv[b * d + j];
            acc += diff * diff;
        }
        out[p] = std::sqrt(acc);
    }
    return x.tape->record("pair_distances", std::move(out), x.requires_grad(),
                          [=](Tape& t, const Array& g, const Array& dist) {
                              const Array& xs = t.value(x);
                              Array* gx = t.grad_buffer(x);
                              for (std::size_t p = 0; p < pr.size(); ++p) {
                                  if (dist[p] <= 0.0) continue;
                                  const auto [a, b] = pr[p];
                                  const double coef = g[p] / dist[p];
                                  for (std::size_t j = 0; j < d; ++j) {
                                      const double diff = xs[a * d + j] - xs[b * d + j];
                                      (*gx)[a * d + j] += coef * diff;
                                      (*gx)[b * d + j] -= coef * diff;
                                  }
                              }
                          });
}

Var softplus(Var x) {
    Array out = x.value();
    for (auto& v : out.values()) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return x.tape->record("softplus", std::move(out), x.requires_grad(), [=](Tape& t, const Array& g, const Array&) {
        const Array& xv = t.value(x);
        Array* gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = xv[i];
            const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            (*gx)[i] += g[i] * sig;
        }
    });
}

}  // namespace conslearn::diff
