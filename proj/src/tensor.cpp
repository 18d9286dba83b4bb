#include "sdabn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "sdabn/rng.hpp"

namespace sdabn {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::uint64_t g_tape_generation = 0;
std::atomic<bool> g_strict_numerics{true};

void check_finite(const Tensor& t, const char* op) {
    if (!g_strict_numerics.load(std::memory_order_relaxed)) return;
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericsError(std::string(op) + ": non-finite value in forward output");
        }
    }
}

bool grad_needed(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

/// Marks `out` as produced by the op being recorded and appends the rule.
void record(Tensor& out, std::function<void()> step) {
    Tape* tape = Tape::active();
    out.set_requires_grad(true);
    out.impl()->tape_generation = tape->generation();
    out.impl()->node = tape->record(std::move(step));
}

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e <= 0) throw ConfigError("tensor shape extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) {
    const std::int64_t n = shape_numel(shape);
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<std::size_t>(n), 0.0);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    const std::int64_t n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(values.size())) {
        throw ConfigError("tensor data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) throw UsageError("gradient requested but never populated");
    return impl_->grad;
}

void Tensor::accumulate_grad(std::span<const double> g) {
    if (static_cast<std::int64_t>(g.size()) != numel()) {
        throw UsageError("gradient size mismatch");
    }
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    double* dst = impl_->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::clone() const {
    Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
    return t;
}

Tensor Tensor::detach() const {
    Tensor t(impl_->shape, impl_->data, false);
    return t;
}

// ---- tape -------------------------------------------------------------------

Tape::Tape() {
    previous_ = g_active_tape;
    generation_ = ++g_tape_generation;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

std::int64_t Tape::record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
    return static_cast<std::int64_t>(steps_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw UsageError("tape already consumed; tapes are single-shot");
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward requires a scalar loss");
    }
    if (loss.impl()->tape_generation != generation_ || loss.impl()->node < 0) {
        throw UsageError("loss was not produced on the active tape");
    }
    consumed_ = true;
    const double one = 1.0;
    loss.impl()->grad.assign(1, one);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw UsageError("backward called with no active tape");
    tape->backward(loss);
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

void set_strict_numerics(bool on) { g_strict_numerics.store(on, std::memory_order_relaxed); }
bool strict_numerics() { return g_strict_numerics.load(std::memory_order_relaxed); }

// ---- conv2d -----------------------------------------------------------------

namespace {

struct ConvDims {
    std::int64_t batch, cin, h, w;
    std::int64_t cout, kh, kw;
    std::int64_t hout, wout;
    std::int64_t hp, wp;  // padded input extents
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, const Tensor& bias,
                   int stride, int padding, int dilation) {
    if (input.ndim() != 4) throw ConfigError("conv2d input must be [B,C,H,W], got " + shape_str(input.shape()));
    if (weight.ndim() != 4) throw ConfigError("conv2d weight must be [O,C,k,k], got " + shape_str(weight.shape()));
    ConvDims d{};
    d.batch = input.dim(0);
    d.cin = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.cout = weight.dim(0);
    d.kh = weight.dim(2);
    d.kw = weight.dim(3);
    if (weight.dim(1) != d.cin) {
        throw ConfigError("conv2d channel mismatch: input has " + std::to_string(d.cin) +
                          " channels, weight expects " + std::to_string(weight.dim(1)));
    }
    if (d.kh != d.kw || d.kh % 2 == 0) throw ConfigError("conv2d kernel must be square with odd extent");
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != d.cout)) {
        throw ConfigError("conv2d bias must be [Cout]");
    }
    if (stride < 1 || padding < 0 || dilation < 1) throw ConfigError("conv2d: invalid stride/padding/dilation");
    d.hout = (d.h + 2 * padding - dilation * (d.kh - 1) - 1) / stride + 1;
    d.wout = (d.w + 2 * padding - dilation * (d.kw - 1) - 1) / stride + 1;
    if (d.hout < 1 || d.wout < 1) throw ConfigError("conv2d produces a non-positive output extent");
    d.hp = d.h + 2 * padding;
    d.wp = d.w + 2 * padding;
    return d;
}

/// Copies [B,C,H,W] into a zero-padded [B,C,Hp,Wp] buffer.
std::vector<double> pad_input(const double* x, const ConvDims& d, int padding) {
    std::vector<double> xp(static_cast<std::size_t>(d.batch * d.cin * d.hp * d.wp), 0.0);
    if (padding == 0) {
        std::memcpy(xp.data(), x, xp.size() * sizeof(double));
        return xp;
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t bc = 0; bc < d.batch * d.cin; ++bc) {
        const double* src = x + bc * d.h * d.w;
        double* dst = xp.data() + bc * d.hp * d.wp + padding * d.wp + padding;
        for (std::int64_t y = 0; y < d.h; ++y) {
            std::memcpy(dst + y * d.wp, src + y * d.w, static_cast<std::size_t>(d.w) * sizeof(double));
        }
    }
    return xp;
}

void conv_forward_kernel(const double* __restrict xp, const double* __restrict wt,
                         const double* __restrict bias, double* __restrict out,
                         const ConvDims& d, int stride, int dilation) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < d.batch; ++b) {
        for (std::int64_t co = 0; co < d.cout; ++co) {
            double* oplane = out + (b * d.cout + co) * d.hout * d.wout;
            const double bv = bias ? bias[co] : 0.0;
            std::fill(oplane, oplane + d.hout * d.wout, bv);
            for (std::int64_t ci = 0; ci < d.cin; ++ci) {
                const double* xplane = xp + (b * d.cin + ci) * d.hp * d.wp;
                const double* wbase = wt + (co * d.cin + ci) * d.kh * d.kw;
                for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                    for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                        const double wv = wbase[kh * d.kw + kw];
                        for (std::int64_t ho = 0; ho < d.hout; ++ho) {
                            const double* __restrict xrow =
                                xplane + (ho * stride + kh * dilation) * d.wp + kw * dilation;
                            double* __restrict orow = oplane + ho * d.wout;
                            if (stride == 1) {
#pragma omp simd
                                for (std::int64_t wo = 0; wo < d.wout; ++wo) orow[wo] += wv * xrow[wo];
                            } else {
                                for (std::int64_t wo = 0; wo < d.wout; ++wo) orow[wo] += wv * xrow[wo * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_weight_kernel(const double* __restrict xp, const double* __restrict gout,
                                 double* __restrict dw, const ConvDims& d, int stride, int dilation) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t co = 0; co < d.cout; ++co) {
        for (std::int64_t ci = 0; ci < d.cin; ++ci) {
            double* dwbase = dw + (co * d.cin + ci) * d.kh * d.kw;
            for (std::int64_t b = 0; b < d.batch; ++b) {
                const double* xplane = xp + (b * d.cin + ci) * d.hp * d.wp;
                const double* gplane = gout + (b * d.cout + co) * d.hout * d.wout;
                for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                    for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                        double acc = 0.0;
                        for (std::int64_t ho = 0; ho < d.hout; ++ho) {
                            const double* __restrict xrow =
                                xplane + (ho * stride + kh * dilation) * d.wp + kw * dilation;
                            const double* __restrict grow = gplane + ho * d.wout;
                            if (stride == 1) {
#pragma omp simd reduction(+ : acc)
                                for (std::int64_t wo = 0; wo < d.wout; ++wo) acc += grow[wo] * xrow[wo];
                            } else {
                                for (std::int64_t wo = 0; wo < d.wout; ++wo) acc += grow[wo] * xrow[wo * stride];
                            }
                        }
                        dwbase[kh * d.kw + kw] += acc;
                    }
                }
            }
        }
    }
}

void conv_backward_input_kernel(const double* __restrict gout, const double* __restrict wt,
                                double* __restrict dxp, const ConvDims& d, int stride, int dilation) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < d.batch; ++b) {
        for (std::int64_t ci = 0; ci < d.cin; ++ci) {
            double* dxplane = dxp + (b * d.cin + ci) * d.hp * d.wp;
            for (std::int64_t co = 0; co < d.cout; ++co) {
                const double* gplane = gout + (b * d.cout + co) * d.hout * d.wout;
                const double* wbase = wt + (co * d.cin + ci) * d.kh * d.kw;
                for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                    for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                        const double wv = wbase[kh * d.kw + kw];
                        if (wv == 0.0) continue;
                        for (std::int64_t ho = 0; ho < d.hout; ++ho) {
                            const double* __restrict grow = gplane + ho * d.wout;
                            double* __restrict dxrow =
                                dxplane + (ho * stride + kh * dilation) * d.wp + kw * dilation;
                            if (stride == 1) {
#pragma omp simd
                                for (std::int64_t wo = 0; wo < d.wout; ++wo) dxrow[wo] += wv * grow[wo];
                            } else {
                                for (std::int64_t wo = 0; wo < d.wout; ++wo) dxrow[wo * stride] += wv * grow[wo];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding, int dilation) {
    const ConvDims d = conv_dims(input, weight, bias, stride, padding, dilation);
    std::vector<double> xp = pad_input(input.data(), d, padding);

    Tensor out({d.batch, d.cout, d.hout, d.wout});
    conv_forward_kernel(xp.data(), weight.data(), bias.defined() ? bias.data() : nullptr,
                        out.data(), d, stride, dilation);
    check_finite(out, "conv2d");

    if (grad_needed({&input, &weight, &bias})) {
        record(out, [input, weight, bias, out, d, stride, padding, dilation]() {
            if (!out.has_grad()) return;
            const double* gout = out.impl()->grad.data();
            if (bias.defined() && bias.requires_grad()) {
                std::vector<double> db(static_cast<std::size_t>(d.cout), 0.0);
                for (std::int64_t b = 0; b < d.batch; ++b) {
                    for (std::int64_t co = 0; co < d.cout; ++co) {
                        const double* g = gout + (b * d.cout + co) * d.hout * d.wout;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < d.hout * d.wout; ++i) acc += g[i];
                        db[static_cast<std::size_t>(co)] += acc;
                    }
                }
                const_cast<Tensor&>(bias).accumulate_grad(db);
            }
            if (weight.requires_grad()) {
                std::vector<double> xp2 = pad_input(input.data(), d, padding);
                std::vector<double> dw(static_cast<std::size_t>(weight.numel()), 0.0);
                conv_backward_weight_kernel(xp2.data(), gout, dw.data(), d, stride, dilation);
                const_cast<Tensor&>(weight).accumulate_grad(dw);
            }
            if (input.requires_grad()) {
                std::vector<double> dxp(static_cast<std::size_t>(d.batch * d.cin * d.hp * d.wp), 0.0);
                conv_backward_input_kernel(gout, weight.data(), dxp.data(), d, stride, dilation);
                if (padding == 0) {
                    const_cast<Tensor&>(input).accumulate_grad(dxp);
                } else {
                    std::vector<double> dx(static_cast<std::size_t>(input.numel()), 0.0);
                    for (std::int64_t bc = 0; bc < d.batch * d.cin; ++bc) {
                        const double* src = dxp.data() + bc * d.hp * d.wp + padding * d.wp + padding;
                        double* dst = dx.data() + bc * d.h * d.w;
                        for (std::int64_t y = 0; y < d.h; ++y) {
                            std::memcpy(dst + y * d.w, src + y * d.wp,
                                        static_cast<std::size_t>(d.w) * sizeof(double));
                        }
                    }
                    const_cast<Tensor&>(input).accumulate_grad(dx);
                }
            }
        });
    }
    return out;
}

// ---- elementwise family -----------------------------------------------------

Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    const double* x = input.data();
    double* y = out.data();
    const std::int64_t n = input.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    check_finite(out, "relu");

    if (grad_needed({&input})) {
        record(out, [input, out]() {
            if (!out.has_grad() || !input.requires_grad()) return;
            const double* g = out.impl()->grad.data();
            const double* x = input.data();
            std::vector<double> gx(static_cast<std::size_t>(input.numel()));
            for (std::int64_t i = 0; i < input.numel(); ++i) gx[static_cast<std::size_t>(i)] = x[i] > 0.0 ? g[i] : 0.0;
            const_cast<Tensor&>(input).accumulate_grad(gx);
        });
    }
    return out;
}

namespace {

// b may equal a's shape, or broadcast over a's leading batch extent:
// either b.shape == a.shape[1:] or b.shape == [1] + a.shape[1:].
enum class BroadcastMode { same, batch };

BroadcastMode broadcast_mode(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return BroadcastMode::same;
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    Shape tail(as.begin() + 1, as.end());
    if (bs == tail) return BroadcastMode::batch;
    Shape lead1 = tail;
    lead1.insert(lead1.begin(), 1);
    if (bs == lead1) return BroadcastMode::batch;
    throw ConfigError("elementwise shapes not broadcastable: " + shape_str(as) + " vs " + shape_str(bs));
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind) {
    const BroadcastMode mode = broadcast_mode(a, b);
    const std::int64_t n = a.numel();
    const std::int64_t bn = b.numel();
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    if (mode == BroadcastMode::same) {
        if (kind == ElementwiseKind::add) {
            for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        } else {
            for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
        }
    } else {
        for (std::int64_t off = 0; off < n; off += bn) {
            if (kind == ElementwiseKind::add) {
                for (std::int64_t i = 0; i < bn; ++i) po[off + i] = pa[off + i] + pb[i];
            } else {
                for (std::int64_t i = 0; i < bn; ++i) po[off + i] = pa[off + i] * pb[i];
            }
        }
    }
    check_finite(out, kind == ElementwiseKind::add ? "add" : "mul");

    if (grad_needed({&a, &b})) {
        record(out, [a, b, out, kind, mode]() {
            if (!out.has_grad()) return;
            const double* g = out.impl()->grad.data();
            const std::int64_t n = a.numel();
            const std::int64_t bn = b.numel();
            if (a.requires_grad()) {
                std::vector<double> ga(static_cast<std::size_t>(n));
                if (kind == ElementwiseKind::add) {
                    std::memcpy(ga.data(), g, static_cast<std::size_t>(n) * sizeof(double));
                } else {
                    const double* pb = b.data();
                    if (mode == BroadcastMode::same) {
                        for (std::int64_t i = 0; i < n; ++i) ga[static_cast<std::size_t>(i)] = g[i] * pb[i];
                    } else {
                        for (std::int64_t off = 0; off < n; off += bn) {
                            for (std::int64_t i = 0; i < bn; ++i) {
                                ga[static_cast<std::size_t>(off + i)] = g[off + i] * pb[i];
                            }
                        }
                    }
                }
                const_cast<Tensor&>(a).accumulate_grad(ga);
            }
            if (b.requires_grad()) {
                std::vector<double> gb(static_cast<std::size_t>(bn), 0.0);
                if (kind == ElementwiseKind::add) {
                    if (mode == BroadcastMode::same) {
                        std::memcpy(gb.data(), g, static_cast<std::size_t>(bn) * sizeof(double));
                    } else {
                        for (std::int64_t off = 0; off < n; off += bn) {
                            for (std::int64_t i = 0; i < bn; ++i) gb[static_cast<std::size_t>(i)] += g[off + i];
                        }
                    }
                } else {
                    const double* pa = a.data();
                    if (mode == BroadcastMode::same) {
                        for (std::int64_t i = 0; i < n; ++i) gb[static_cast<std::size_t>(i)] = g[i] * pa[i];
                    } else {
                        for (std::int64_t off = 0; off < n; off += bn) {
                            for (std::int64_t i = 0; i < bn; ++i) gb[static_cast<std::size_t>(i)] += g[off + i] * pa[off + i];
                        }
                    }
                }
                const_cast<Tensor&>(b).accumulate_grad(gb);
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::add); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::mul); }

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ConfigError("sub shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    check_finite(out, "sub");

    if (grad_needed({&a, &b})) {
        record(out, [a, b, out]() {
            if (!out.has_grad()) return;
            const double* g = out.impl()->grad.data();
            const std::int64_t n = a.numel();
            if (a.requires_grad()) {
                const_cast<Tensor&>(a).accumulate_grad(std::span<const double>(g, static_cast<std::size_t>(n)));
            }
            if (b.requires_grad()) {
                std::vector<double> gb(static_cast<std::size_t>(n));
                for (std::int64_t i = 0; i < n; ++i) gb[static_cast<std::size_t>(i)] = -g[i];
                const_cast<Tensor&>(b).accumulate_grad(gb);
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
    check_finite(out, "scale");

    if (grad_needed({&a})) {
        record(out, [a, out, factor]() {
            if (!out.has_grad() || !a.requires_grad()) return;
            const double* g = out.impl()->grad.data();
            std::vector<double> ga(static_cast<std::size_t>(a.numel()));
            for (std::int64_t i = 0; i < a.numel(); ++i) ga[static_cast<std::size_t>(i)] = g[i] * factor;
            const_cast<Tensor&>(a).accumulate_grad(ga);
        });
    }
    return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw ConfigError("concat_channels needs at least one part");
    for (const Tensor& p : parts) {
        if (p.ndim() != 4) throw ConfigError("concat_channels expects [B,C,H,W] parts");
        if (p.dim(0) != parts[0].dim(0) || p.dim(2) != parts[0].dim(2) || p.dim(3) != parts[0].dim(3)) {
            throw ConfigError("concat_channels: mismatched batch/spatial extents");
        }
    }
    const std::int64_t batch = parts[0].dim(0);
    const std::int64_t h = parts[0].dim(2);
    const std::int64_t w = parts[0].dim(3);
    std::int64_t ctotal = 0;
    for (const Tensor& p : parts) ctotal += p.dim(1);

    Tensor out({batch, ctotal, h, w});
    double* po = out.data();
    const std::int64_t plane = h * w;
    for (std::int64_t b = 0; b < batch; ++b) {
        std::int64_t coff = 0;
        for (const Tensor& p : parts) {
            const std::int64_t pc = p.dim(1);
            std::memcpy(po + (b * ctotal + coff) * plane, p.data() + b * pc * plane,
                        static_cast<std::size_t>(pc * plane) * sizeof(double));
            coff += pc;
        }
    }

    bool any_grad = false;
    if (Tape::active()) {
        for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    }
    if (any_grad) {
        std::vector<Tensor> held(parts.begin(), parts.end());
        record(out, [held, out, batch, ctotal, plane]() {
            if (!out.has_grad()) return;
            const double* g = out.impl()->grad.data();
            std::int64_t coff = 0;
            for (const Tensor& p : held) {
                const std::int64_t pc = p.dim(1);
                if (p.requires_grad()) {
                    std::vector<double> gp(static_cast<std::size_t>(p.numel()));
                    for (std::int64_t b = 0; b < batch; ++b) {
                        std::memcpy(gp.data() + b * pc * plane, g + (b * ctotal + coff) * plane,
                                    static_cast<std::size_t>(pc * plane) * sizeof(double));
                    }
                    const_cast<Tensor&>(p).accumulate_grad(gp);
                }
                coff += pc;
            }
        });
    }
    return out;
}

Tensor softmax_channels(const Tensor& logits) {
    if (logits.ndim() != 4) throw ConfigError("softmax_channels expects [B,N,H,W]");
    const std::int64_t batch = logits.dim(0), nc = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    if (nc < 2) throw ConfigError("softmax_channels needs at least 2 channels");
    Tensor out(logits.shape());
    const double* px = logits.data();
    double* po = out.data();
    const std::int64_t plane = h * w;
    for (std::int64_t b = 0; b < batch; ++b) {
        const double* xb = px + b * nc * plane;
        double* ob = po + b * nc * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            double m = xb[i];
            for (std::int64_t c = 1; c < nc; ++c) m = std::max(m, xb[c * plane + i]);
            double z = 0.0;
            for (std::int64_t c = 0; c < nc; ++c) {
                const double e = std::exp(xb[c * plane + i] - m);
                ob[c * plane + i] = e;
                z += e;
            }
            const double inv = 1.0 / z;
            for (std::int64_t c = 0; c < nc; ++c) ob[c * plane + i] *= inv;
        }
    }
    check_finite(out, "softmax_channels");

    if (grad_needed({&logits})) {
        record(out, [logits, out, batch, nc, plane]() {
            if (!out.has_grad() || !logits.requires_grad()) return;
            const double* g = out.impl()->grad.data();
            const double* s = out.data();
            std::vector<double> gx(static_cast<std::size_t>(logits.numel()));
            for (std::int64_t b = 0; b < batch; ++b) {
                const double* gb = g + b * nc * plane;
                const double* sb = s + b * nc * plane;
                double* xb = gx.data() + b * nc * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    double dot = 0.0;
                    for (std::int64_t c = 0; c < nc; ++c) dot += gb[c * plane + i] * sb[c * plane + i];
                    for (std::int64_t c = 0; c < nc; ++c) {
                        xb[c * plane + i] = sb[c * plane + i] * (gb[c * plane + i] - dot);
                    }
                }
            }
            const_cast<Tensor&>(logits).accumulate_grad(gx);
        });
    }
    return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
    if (input.ndim() != 4) throw ConfigError("upsample_nearest2x expects [B,C,H,W]");
    const std::int64_t batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out({batch, c, 2 * h, 2 * w});
    const double* px = input.data();
    double* po = out.data();
    for (std::int64_t bc = 0; bc < batch * c; ++bc) {
        const double* xplane = px + bc * h * w;
        double* oplane = po + bc * 4 * h * w;
        for (std::int64_t y = 0; y < h; ++y) {
            double* row0 = oplane + (2 * y) * 2 * w;
            double* row1 = row0 + 2 * w;
            const double* xrow = xplane + y * w;
            for (std::int64_t x = 0; x < w; ++x) {
                const double v = xrow[x];
                row0[2 * x] = v;
                row0[2 * x + 1] = v;
                row1[2 * x] = v;
                row1[2 * x + 1] = v;
            }
        }
    }

    if (grad_needed({&input})) {
        record(out, [input, out, batch, c, h, w]() {
            if (!out.has_grad() || !input.requires_grad()) return;
            const double* g = out.impl()->grad.data();
            std::vector<double> gx(static_cast<std::size_t>(input.numel()));
            for (std::int64_t bc = 0; bc < batch * c; ++bc) {
                const double* gplane = g + bc * 4 * h * w;
                double* xplane = gx.data() + bc * h * w;
                for (std::int64_t y = 0; y < h; ++y) {
                    const double* row0 = gplane + (2 * y) * 2 * w;
                    const double* row1 = row0 + 2 * w;
                    for (std::int64_t x = 0; x < w; ++x) {
                        xplane[y * w + x] = row0[2 * x] + row0[2 * x + 1] + row1[2 * x] + row1[2 * x + 1];
                    }
                }
            }
            const_cast<Tensor&>(input).accumulate_grad(gx);
        });
    }
    return out;
}

Tensor sum(const Tensor& input) {
    double acc = 0.0;
    for (double v : input.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "sum");
    if (grad_needed({&input})) {
        record(out, [input, out]() {
            if (!out.has_grad() || !input.requires_grad()) return;
            const double g = out.impl()->grad[0];
            std::vector<double> gx(static_cast<std::size_t>(input.numel()), g);
            const_cast<Tensor&>(input).accumulate_grad(gx);
        });
    }
    return out;
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        throw ConfigError("mse_loss shape mismatch: " + shape_str(prediction.shape()) + " vs " +
                          shape_str(target.shape()));
    }
    const std::int64_t n = prediction.numel();
    const double* pp = prediction.data();
    const double* pt = target.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double e = pp[i] - pt[i];
        acc += e * e;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    check_finite(out, "mse_loss");

    if (grad_needed({&prediction, &target})) {
        record(out, [prediction, target, out, n]() {
            if (!out.has_grad()) return;
            const double g = out.impl()->grad[0];
            const double* pp = prediction.data();
            const double* pt = target.data();
            const double k = 2.0 * g / static_cast<double>(n);
            if (prediction.requires_grad()) {
                std::vector<double> gp(static_cast<std::size_t>(n));
                for (std::int64_t i = 0; i < n; ++i) gp[static_cast<std::size_t>(i)] = k * (pp[i] - pt[i]);
                const_cast<Tensor&>(prediction).accumulate_grad(gp);
            }
            if (target.requires_grad()) {
                std::vector<double> gt(static_cast<std::size_t>(n));
                for (std::int64_t i = 0; i < n; ++i) gt[static_cast<std::size_t>(i)] = -k * (pp[i] - pt[i]);
                const_cast<Tensor&>(target).accumulate_grad(gt);
            }
        });
    }
    return out;
}

Tensor cross_entropy_loss(const Tensor& logits, const LabelBatch& labels) {
    if (logits.ndim() != 4) throw ConfigError("cross_entropy_loss expects logits [B,N,H,W]");
    const std::int64_t batch = logits.dim(0), nc = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    if (labels.batch != batch || labels.height != h || labels.width != w) {
        throw ConfigError("cross_entropy_loss label batch does not match logits");
    }
    const std::int64_t plane = h * w;
    const double* px = logits.data();

    // softmax probabilities are cached for the backward rule
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(logits.numel()));
    double loss_acc = 0.0;
    std::int64_t counted = 0;
    for (std::int64_t b = 0; b < batch; ++b) {
        const double* xb = px + b * nc * plane;
        double* sb = probs->data() + b * nc * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            const std::uint8_t lab = labels.labels[static_cast<std::size_t>(b * plane + i)];
            double m = xb[i];
            for (std::int64_t c = 1; c < nc; ++c) m = std::max(m, xb[c * plane + i]);
            double z = 0.0;
            for (std::int64_t c = 0; c < nc; ++c) {
                const double e = std::exp(xb[c * plane + i] - m);
                sb[c * plane + i] = e;
                z += e;
            }
            const double inv = 1.0 / z;
            for (std::int64_t c = 0; c < nc; ++c) sb[c * plane + i] *= inv;
            if (lab == LabelBatch::kIgnore) continue;
            if (lab >= nc) {
                throw DataError("cross_entropy_loss: label " + std::to_string(int(lab)) +
                                " out of range for " + std::to_string(nc) + " classes");
            }
            loss_acc += -(xb[lab * plane + i] - m - std::log(z));
            ++counted;
        }
    }
    if (counted == 0) throw DataError("cross_entropy_loss: every pixel is ignored");
    Tensor out = Tensor::scalar(loss_acc / static_cast<double>(counted));
    check_finite(out, "cross_entropy_loss");

    if (grad_needed({&logits})) {
        LabelBatch held = labels;
        record(out, [logits, held, out, probs, batch, nc, plane, counted]() {
            if (!out.has_grad() || !logits.requires_grad()) return;
            const double g = out.impl()->grad[0];
            const double k = g / static_cast<double>(counted);
            std::vector<double> gx(static_cast<std::size_t>(logits.numel()), 0.0);
            for (std::int64_t b = 0; b < batch; ++b) {
                const double* sb = probs->data() + b * nc * plane;
                double* xb = gx.data() + b * nc * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const std::uint8_t lab = held.labels[static_cast<std::size_t>(b * plane + i)];
                    if (lab == LabelBatch::kIgnore) continue;
                    for (std::int64_t c = 0; c < nc; ++c) {
                        xb[c * plane + i] = k * (sb[c * plane + i] - (c == lab ? 1.0 : 0.0));
                    }
                }
            }
            const_cast<Tensor&>(logits).accumulate_grad(gx);
        });
    }
    return out;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3) {
        throw UsageError("finite_difference_check epsilon must lie in [1e-7, 1e-3]");
    }
    Tensor x = point.clone();
    x.set_requires_grad(true);
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor loss = f(x);
        tape.backward(loss);
        analytic = x.has_grad() ? x.grad() : std::vector<double>(static_cast<std::size_t>(x.numel()), 0.0);
    }

    double max_rel = 0.0;
    NoGradGuard no_grad;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + epsilon;
        const double fp = f(x).item();
        x.data()[i] = saved - epsilon;
        const double fm = f(x).item();
        x.data()[i] = saved;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double a = analytic[static_cast<std::size_t>(i)];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

Tensor random_normal(Shape shape, std::uint64_t seed, double stddev) {
    Tensor t(std::move(shape));
    CounterRng rng(seed);
    for (double& v : t.values()) v = rng.next_normal() * stddev;
    return t;
}

}  // namespace sdabn
