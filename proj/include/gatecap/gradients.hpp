#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gatecap/model.hpp"

namespace gatecap {

// Reverse-mode gradients of cross_entropy_loss + l2_coeff * l2_penalty with
// respect to every parameter tensor, backpropagated through time, through
// the gate and through the image projection. Embedding rows accumulate only
// for tokens that appear as inputs; L2 touches weight matrices only.
Gradients backward_sequence(const ModelParams& p, const ModelConfig& cfg,
                            const ForwardTrace& trace, const std::vector<int>& target_ids,
                            double l2_coeff);

// g += 2 * l2_coeff * W on every weight matrix (not embedding, not biases).
void add_l2_gradient(Gradients& g, const ModelParams& p, const ModelConfig& cfg,
                     double l2_coeff);

// (f(x+eps) - f(x-eps)) / (2 eps)
double central_difference(const std::function<double(double)>& f, double x, double eps);

struct FdResult {
  double derivative = 0.0;
  // ReLU only: some pre-activation along a perturbed forward pass sat within
  // 10*eps of the kink, where the finite difference is invalid.
  bool skipped = false;
};

// Central difference of the regularized sequence loss in one parameter
// coordinate, addressed as (tensor index, flat index) in tensor_refs order.
// Dropout is never applied here.
FdResult finite_difference_grad(const ModelParams& p, const ModelConfig& cfg,
                                const std::vector<int>& token_ids, const Vector& feature,
                                const std::vector<int>& target_ids, std::size_t tensor_idx,
                                std::size_t flat_idx, double eps = 1e-5, double l2_coeff = 0.0);

struct GradCheckOptions {
  Activation activation = Activation::kTanh;
  FeedMode feed_mode = FeedMode::kLearnedGate;
  std::size_t depth = 2;
  bool share_transition_weights = false;
  std::uint64_t seed = 0;
  std::size_t n_samples = 500;
  double eps = 1e-5;
  // The checked loss is the plain sequence loss: the L2 term's gradient is
  // linear in the weights and has its own exact oracle, and folding it in
  // here puts near-zero coordinates below the finite-difference noise floor.
  double l2_coeff = 0.0;
  double threshold = 1e-5;
  // Test hook: adds a constant to one analytic gradient so the check must fail.
  bool corrupt = false;
};

struct TensorCheckStats {
  std::string tensor;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheckStats> tensors;
  std::size_t n_checked = 0;
  std::size_t n_skipped = 0;
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double threshold = 1e-5;

  bool pass() const { return max_rel_err < threshold; }
  // One line per tensor plus a summary line, stable format.
  std::string text() const;
};

// Compares analytic and numeric gradients on a small fixed problem
// (V=20, D=8, H=10, F=16, sequence of 6 tokens), sampling at least
// options.n_samples coordinates spread over every tensor.
GradCheckReport gradient_check(const GradCheckOptions& options);

}  // namespace gatecap
