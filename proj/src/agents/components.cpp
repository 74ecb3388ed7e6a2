#include "vdfp/agents/components.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vdfp::agents {

// ---- deterministic actor -----------------------------------------------------------

DeterministicActor::DeterministicActor(const std::string& name, const envs::EnvSpec& spec,
                                       const std::vector<int>& hidden, Rng& init)
    : net_(name, spec.state_dim, hidden, spec.action_dim, init, nn::Activation::kTanh),
      center_(spec.action_center().transpose()),
      half_(spec.action_half_range().transpose()),
      low_(spec.action_low),
      high_(spec.action_high) {}

nn::Var DeterministicActor::operator()(nn::Tape& tape, nn::Var states) {
  return nn::add_row(nn::mul_row(net_(tape, states), half_), center_);
}

Mat DeterministicActor::forward(const Mat& states) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  return (*this)(tape, tape.constant(states)).value();
}

Vec DeterministicActor::action(const Vec& s) { return forward(Mat(s.transpose())).row(0).transpose(); }

Vec DeterministicActor::explore(const Vec& s, double sigma, Rng& rng) {
  Vec a = action(s);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a[i] = std::clamp(a[i] + sigma * half_[i] * rng.normal(), low_[i], high_[i]);
  }
  return a;
}

Vec DeterministicActor::random_action(Rng& rng) const {
  Vec a(low_.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(low_[i], high_[i]);
  return a;
}

// ---- Gaussian policy -----------------------------------------------------------------

GaussianPolicy::GaussianPolicy(const envs::EnvSpec& spec, const std::vector<int>& hidden, double init_log_std,
                               Rng& init)
    : actor_("policy", spec, hidden, init),
      log_std_("policy.log_std", Mat::Constant(1, spec.action_dim, init_log_std)) {}

nn::Var GaussianPolicy::log_prob(nn::Tape& tape, nn::Var states, const Mat& actions) {
  nn::Var mu = mean(tape, states);
  nn::Var ls = tape.param(log_std_);
  // -0.5 ((a - mu) / sigma)^2 - log sigma - 0.5 log 2 pi, summed over dims
  nn::Var inv_sigma = nn::exp(nn::scale(ls, -1.0));
  nn::Var diff = nn::sub(tape.constant(actions), mu);
  nn::Var z = nn::mul_row(diff, inv_sigma);
  const double c = -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(actions.cols());
  nn::Var quad = nn::row_sum(nn::scale(nn::square(z), -0.5));
  nn::Var log_det = nn::sum(ls);  // 1x1
  nn::Var lp = nn::add_scalar(quad, c);
  return nn::add_row(lp, nn::scale(log_det, -1.0));
}

Vec GaussianPolicy::sample(const Vec& s, Rng& rng) {
  Vec a = actor_.action(s);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += std::exp(log_std_.value(0, i)) * rng.normal();
  return a;
}

nn::ParamList GaussianPolicy::params() {
  nn::ParamList p = actor_.params();
  p.push_back(&log_std_);
  return p;
}

// ---- Q critic ----------------------------------------------------------------------

QCritic::QCritic(const std::string& name, int state_dim, int action_dim, const std::vector<int>& hidden,
                 Rng& init) {
  if (hidden.size() != 2) throw std::invalid_argument("QCritic: expects two hidden widths");
  l1_ = nn::Linear(name + ".l0", state_dim, hidden[0], init);
  l2_ = nn::Linear(name + ".l1", hidden[0] + action_dim, hidden[1], init);
  out_ = nn::Linear(name + ".l2", hidden[1], 1, init);
}

nn::Var QCritic::operator()(nn::Tape& tape, nn::Var states, nn::Var actions) {
  nn::Var h = nn::relu(l1_(tape, states));
  h = nn::relu(l2_(tape, nn::concat_cols({h, actions})));
  return out_(tape, h);
}

Vec QCritic::evaluate(const Mat& states, const Mat& actions) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  return (*this)(tape, tape.constant(states), tape.constant(actions)).value().col(0);
}

nn::ParamList QCritic::params() {
  nn::ParamList p;
  l1_.collect(p);
  l2_.collect(p);
  out_.collect(p);
  return p;
}

// ---- transition buffer --------------------------------------------------------------

void TransitionBuffer::add(const Vec& s, const Vec& a, double r, const Vec& s2, bool terminal) {
  if (capacity_ < 1) throw std::invalid_argument("TransitionBuffer: capacity must be positive");
  if (s_.size() == 0) {
    s_.resize(capacity_, s.size());
    a_.resize(capacity_, a.size());
    r_.resize(capacity_);
    s2_.resize(capacity_, s.size());
    nt_.resize(capacity_);
  }
  s_.row(next_) = s.transpose();
  a_.row(next_) = a.transpose();
  r_[next_] = r;
  s2_.row(next_) = s2.transpose();
  nt_[next_] = terminal ? 0.0 : 1.0;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

TransitionBuffer::Batch TransitionBuffer::sample(int n, Rng& rng) const {
  if (n < 1) throw std::invalid_argument("TransitionBuffer: batch size must be positive");
  if (size_ == 0) throw std::logic_error("TransitionBuffer: empty");
  Batch b;
  b.s.resize(n, s_.cols());
  b.a.resize(n, a_.cols());
  b.r.resize(n);
  b.s2.resize(n, s2_.cols());
  b.not_terminal.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(size_)));
    b.s.row(i) = s_.row(k);
    b.a.row(i) = a_.row(k);
    b.r[i] = r_[k];
    b.s2.row(i) = s2_.row(k);
    b.not_terminal[i] = nt_[k];
  }
  return b;
}

// ---- update rules ---------------------------------------------------------------------

double q_td_step(QCritic& critic, QCritic& target, nn::Adam& opt, const TransitionBuffer::Batch& b,
                 const Mat& next_actions, double gamma) {
  const Vec q_next = target.evaluate(b.s2, next_actions);
  const Vec y = b.r + gamma * b.not_terminal.cwiseProduct(q_next);
  nn::Tape tape;
  nn::Var q = critic(tape, tape.constant(b.s), tape.constant(b.a));
  nn::Var loss = nn::mean(nn::square(nn::sub(q, tape.constant(Mat(y)))));
  const double value = loss.item();
  tape.backward(loss);
  opt.step(critic.params());
  return value;
}

double sr_td_step(nn::Mlp& sr, nn::Mlp& sr_target, nn::Adam& opt, const Mat& phi, const Mat& phi_next,
                  const Vec& not_terminal, double gamma) {
  Mat y = sr_target.forward(phi_next);
  y.array().colwise() *= (gamma * not_terminal).array();
  y += phi;
  nn::Tape tape;
  nn::Var psi = sr(tape, tape.constant(phi));
  nn::Var loss = nn::scale(nn::sum(nn::square(nn::sub(psi, tape.constant(y)))), 1.0 / static_cast<double>(phi.rows()));
  const double value = loss.item();
  tape.backward(loss);
  opt.step(sr.params());
  return value;
}

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<bool>& dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) throw std::invalid_argument("gae: size mismatch");
  std::vector<double> adv(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double mask = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * mask * values[i + 1] - values[i];
    next_adv = delta + gamma * lambda * mask * next_adv;
    adv[i] = next_adv;
  }
  return adv;
}

Vec return_advantages(const Vec& returns, const Vec& values) {
  if (returns.size() != values.size()) throw std::invalid_argument("return_advantages: size mismatch");
  return returns - values;
}

nn::Var clipped_surrogate(nn::Var ratio, const Mat& advantages, double eps) {
  nn::Var unclipped = nn::mul(ratio, advantages);
  nn::Var clipped = nn::mul(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), advantages);
  return nn::minimum(unclipped, clipped);
}

nn::Var vdfp_values(nn::Tape& tape, DeterministicActor& actor, dynamics::ConditionalVAE& vae, ret::ReturnHead& head,
                    const Mat& states, const Mat& eps) {
  nn::Var s = tape.constant(states);
  nn::Var a = actor(tape, s);
  nn::Var m = vae.decode(tape, tape.constant(eps), nn::concat_cols({s, a}));
  return head(tape, m);
}

nn::Var vdfp_objective(nn::Tape& tape, DeterministicActor& actor, dynamics::ConditionalVAE& vae,
                       ret::ReturnHead& head, const Mat& states, const Mat& eps) {
  return nn::mean(vdfp_values(tape, actor, vae, head, states, eps));
}

Vec vdfp_policy_gradient(DeterministicActor& actor, dynamics::ConditionalVAE& vae, ret::ReturnHead& head,
                         const Mat& states, const Mat& eps) {
  const nn::ParamList ap = actor.params();
  nn::zero_grad(ap);
  {
    nn::Tape tape;
    tape.freeze(vae.params());
    tape.freeze(head.params());
    tape.backward(vdfp_objective(tape, actor, vae, head, states, eps));
  }
  Vec g = nn::flatten_grads(ap);
  nn::zero_grad(ap);
  return g;
}

}  // namespace vdfp::agents
