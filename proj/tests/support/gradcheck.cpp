#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace testing_support {

double gradcheck_error(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                       std::vector<torch::Tensor> inputs, double h, double floor) {
  for (auto& x : inputs) x = x.detach().clone().to(torch::kFloat64).requires_grad_(true);
  auto out = f(inputs);
  auto analytic = torch::autograd::grad({out}, inputs, {}, false, false, /*allow_unused=*/true);
  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto flat = inputs[k].view(-1);
    auto a = analytic[k].defined() ? analytic[k].reshape(-1) : torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = f(inputs).item<double>();
      flat[i] = orig - h;
      const double down = f(inputs).item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double an = a[i].item<double>();
      const double denom = std::max({std::abs(an), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(an - numeric) / denom);
    }
  }
  return worst;
}

void to_double(torch::nn::Module& module) { module.to(torch::kFloat64); }

}  // namespace testing_support
