#pragma once

#include <cstdint>
#include <vector>

#include "sdabn/models.hpp"

namespace sdabn {

/// Classical momentum SGD: v <- mu * v + g; p <- p - lr * v.
class SgdOptimizer {
  public:
    SgdOptimizer(ParamList params, double lr, double momentum);

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    /// Applies one update from the accumulated gradients, then clears them.
    void step();

  private:
    ParamList params_;
    double lr_;
    double momentum_;
    std::vector<std::vector<double>> velocity_;
};

/// Bias-corrected Adam.
class AdamOptimizer {
  public:
    AdamOptimizer(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8);

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    std::int64_t step_count() const { return step_; }
    void step();

  private:
    ParamList params_;
    double lr_, beta1_, beta2_, epsilon_;
    std::int64_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

void zero_all_grads(ParamList& params);

}  // namespace sdabn
