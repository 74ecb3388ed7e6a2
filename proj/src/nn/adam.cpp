#include "vdfp/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace vdfp::nn {

void Adam::step(const ParamList& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter* p : params) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed between steps");

  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const double step_size = opts_.lr * std::sqrt(c2) / c1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    if (m_[i].rows() != p.value.rows() || m_[i].cols() != p.value.cols()) {
      throw std::logic_error("Adam: parameter shape changed for " + p.name);
    }
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() + opts_.eps * std::sqrt(c2));
    if (p.nonnegative) p.value = p.value.cwiseMax(0.0);
    p.zero_grad();
  }
}

void project_nonnegative(const ParamList& params) {
  for (Parameter* p : params) {
    if (p->nonnegative) p->value = p->value.cwiseMax(0.0);
  }
}

}  // namespace vdfp::nn
