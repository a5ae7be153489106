// Finite-difference gradient oracle over random tiny models. Runs in
// double so central differences resolve far below the pass threshold.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/rng.hpp"

namespace testsupport {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  long long entries_checked = 0;
};

// Relative error with the denominator floored at 1e-3, so near-zero
// entries are compared absolutely instead of amplifying rounding noise.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

inline GradCheckResult gradcheck_tiny_model(uint64_t seed, bool input_feeding = true) {
  nmt::ModelConfig config;
  config.hidden_size = 4;
  config.num_layers = 2;
  config.dropout_prob = 0.0;
  config.batch_size = 3;
  config.src_vocab_size = 7;
  config.tgt_vocab_size = 7;
  config.max_decode_length = 8;
  config.input_feeding = input_feeding;
  config.seed = seed;

  nmt::ParamsT<double> params = nmt::init_params<double>(config);

  // ids 5..6 are regular tokens; lengths are mixed so padding and the
  // encoder freeze path are exercised.
  nmt::Rng rng(nmt::derive_seed(seed, 77));
  const auto draw = [&](int length) {
    std::vector<int> ids;
    for (int i = 0; i < length; ++i) ids.push_back(5 + static_cast<int>(rng.next_below(2)));
    return ids;
  };
  const std::vector<std::vector<int>> src{draw(4), draw(1),
                                          draw(1 + static_cast<int>(rng.next_below(4)))};
  const std::vector<std::vector<int>> tgt{draw(2), draw(1 + static_cast<int>(rng.next_below(4))),
                                          draw(3)};
  const nmt::Batch batch = nmt::make_batch(src, tgt);

  nmt::ParamsT<double> grads;
  nmt::batch_loss_and_grad(config, params, batch, false, 0, grads);

  std::vector<nmt::Mat<double>*> param_tensors, grad_tensors;
  std::vector<std::string> names;
  params.for_each_tensor([&](const std::string& name, nmt::Mat<double>& t) {
    param_tensors.push_back(&t);
    names.push_back(name);
  });
  grads.for_each_tensor(
      [&](const std::string&, nmt::Mat<double>& t) { grad_tensors.push_back(&t); });

  GradCheckResult result;
  const double eps = 1e-5;
  for (size_t k = 0; k < param_tensors.size(); ++k) {
    nmt::Mat<double>& tensor = *param_tensors[k];
    for (Eigen::Index j = 0; j < tensor.cols(); ++j) {
      for (Eigen::Index i = 0; i < tensor.rows(); ++i) {
        const double saved = tensor(i, j);
        tensor(i, j) = saved + eps;
        const double up = nmt::batch_loss(config, params, batch, false, 0).loss;
        tensor(i, j) = saved - eps;
        const double down = nmt::batch_loss(config, params, batch, false, 0).loss;
        tensor(i, j) = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double err = rel_err(fd, (*grad_tensors[k])(i, j));
        ++result.entries_checked;
        if (err > result.max_rel_err) {
          result.max_rel_err = err;
          result.worst_tensor = names[k];
        }
      }
    }
  }
  return result;
}

}  // namespace testsupport
