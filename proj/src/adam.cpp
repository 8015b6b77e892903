#include "skyfall/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace skyfall::diff {

void Adam::step(std::span<const ParamRef> params, std::span<const Mat* const> grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: parameter/gradient count mismatch");

  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const ParamRef& p : params) {
      m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("adam: parameter list changed between steps");

  ++step_;
  const double corr1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double corr2 = 1.0 - std::pow(cfg_.beta2, step_);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& theta = *params[i].value;
    const Mat& g = *grads[i];
    if (g.rows() != theta.rows() || g.cols() != theta.cols())
      throw std::invalid_argument("adam: gradient shape mismatch for " + params[i].name);

    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    theta.array() -= cfg_.lr * (m_[i].array() / corr1) /
                     ((v_[i].array() / corr2).sqrt() + cfg_.epsilon);
  }
}

}  // namespace skyfall::diff
