#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdabn/errors.hpp"

namespace sdabn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    // Reference into the active computation graph: generation of the tape
    // that produced this tensor and the index of the producing operation.
    std::uint64_t tape_generation = 0;
    std::int64_t node = -1;
};
}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient storage.
/// Tensor is a shared handle: copies alias the same storage, which is what
/// parameter registries and backward closures rely on.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    /// Adds g elementwise into the gradient buffer, allocating it on first use.
    void accumulate_grad(std::span<const double> g);
    void zero_grad() { impl_->grad.clear(); }

    /// Deep copy of values; gradient state is not copied.
    Tensor clone() const;
    /// New handle on copied values with requires_grad off and no graph link.
    Tensor detach() const;

    detail::TensorImpl* impl() const { return impl_.get(); }

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Single-shot reverse-mode tape. Constructing a Tape makes it the active
/// recorder for the current thread; operations executed while it is active
/// append their backward rules in execution (= topological) order. The tape
/// is consumed by one backward() call and is rebuilt for every forward pass.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    /// Records one operation; returns its node index on this tape.
    std::int64_t record(std::function<void()> backward_step);

    std::uint64_t generation() const { return generation_; }
    std::size_t size() const { return steps_.size(); }

    /// Seeds d(loss)/d(loss)=1 and runs every recorded rule once, in reverse
    /// order. Gradients accumulate additively into every requires_grad tensor
    /// reachable from the loss. Errors if loss is not a scalar produced on
    /// this tape or if the tape was already consumed.
    void backward(const Tensor& loss);

  private:
    std::vector<std::function<void()>> steps_;
    std::uint64_t generation_ = 0;
    bool consumed_ = false;
    Tape* previous_ = nullptr;
};

/// Suspends recording on the active tape for the current scope.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    Tape* saved_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

/// Strict numerics: when on (the default), every forward kernel verifies its
/// output is free of NaN/inf and throws NumericsError otherwise.
void set_strict_numerics(bool on);
bool strict_numerics();

// ---- operations ------------------------------------------------------------

enum class ElementwiseKind { add, mul };

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0, int dilation = 1);
Tensor relu(const Tensor& input);
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor concat_channels(std::span<const Tensor> parts);
Tensor softmax_channels(const Tensor& logits);
Tensor upsample_nearest2x(const Tensor& input);
Tensor sum(const Tensor& input);
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// Per-pixel labels for a batch; values in [0, classes) or the ignore
/// sentinel 255.
struct LabelBatch {
    std::int64_t batch = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> labels;

    static constexpr std::uint8_t kIgnore = 255;

    std::int64_t numel() const { return batch * height * width; }
    std::uint8_t at(std::int64_t b, std::int64_t y, std::int64_t x) const {
        return labels[static_cast<std::size_t>((b * height + y) * width + x)];
    }
};

Tensor cross_entropy_loss(const Tensor& logits, const LabelBatch& labels);

/// Central-difference gradient check of a scalar-valued tensor function at
/// `point`. Returns the max relative error over all coordinates, with the
/// relative denominator max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double epsilon);

// ---- misc helpers ----------------------------------------------------------

/// Normal(0, stddev^2) fill from the project's counter-based stream.
Tensor random_normal(Shape shape, std::uint64_t seed, double stddev = 1.0);

}  // namespace sdabn
