#include "vdfp/returnmodel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vdfp/errors.hpp"

namespace vdfp::ret {

std::string to_string(ReturnKind kind) {
  switch (kind) {
    case ReturnKind::kLinear:
      return "linear";
    case ReturnKind::kLeakyRelu:
      return "leaky_relu";
    case ReturnKind::kIcnn:
      return "icnn";
    case ReturnKind::kNeIcnn:
      return "ne_icnn";
  }
  return "linear";
}

ReturnKind parse_return_kind(std::string_view s) {
  if (s == "linear") return ReturnKind::kLinear;
  if (s == "leaky_relu") return ReturnKind::kLeakyRelu;
  if (s == "icnn") return ReturnKind::kIcnn;
  if (s == "ne_icnn") return ReturnKind::kNeIcnn;
  throw std::invalid_argument("unknown return model kind '" + std::string(s) + "'");
}

void ReturnModelConfig::validate() const {
  if (!(leaky_slope > 0.0 && leaky_slope <= 1.0)) throw std::invalid_argument("return model: leaky_slope in (0,1]");
  if ((kind == ReturnKind::kIcnn || kind == ReturnKind::kNeIcnn) && icnn_hidden.empty()) {
    throw std::invalid_argument("return model: icnn needs at least one hidden layer");
  }
  for (int h : icnn_hidden) {
    if (h < 1) throw std::invalid_argument("return model: hidden widths must be positive");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("return model: lr must be positive");
}

// ---- head ------------------------------------------------------------------------

namespace {

void make_nonnegative(nn::Parameter& p) {
  p.value = p.value.cwiseAbs();
  p.nonnegative = true;
}

}  // namespace

ReturnHead::ReturnHead(const ReturnModelConfig& cfg, int repr_dim, Rng& init) : cfg_(cfg), repr_dim_(repr_dim) {
  cfg_.validate();
  if (repr_dim < 1) throw std::invalid_argument("ReturnHead: repr_dim must be positive");
  if (cfg_.kind == ReturnKind::kLinear || cfg_.kind == ReturnKind::kLeakyRelu) {
    affine_ = nn::Linear("return.affine", repr_dim, 1, init);
    return;
  }
  const bool ne = cfg_.kind == ReturnKind::kNeIcnn;
  const int in = ne ? 2 * repr_dim : repr_dim;
  std::vector<int> widths = cfg_.icnn_hidden;
  widths.push_back(1);
  for (std::size_t k = 0; k < widths.size(); ++k) {
    nn::Linear a("return.m" + std::to_string(k), in, widths[k], init);
    if (ne) make_nonnegative(a.weight);
    m_layers_.push_back(std::move(a));
    if (k > 0) {
      nn::Linear z("return.z" + std::to_string(k), widths[k - 1], widths[k], init, false);
      make_nonnegative(z.weight);
      z_layers_.push_back(std::move(z));
    }
  }
}

nn::Var ReturnHead::operator()(nn::Tape& tape, nn::Var m) {
  switch (cfg_.kind) {
    case ReturnKind::kLinear:
      return affine_(tape, m);
    case ReturnKind::kLeakyRelu:
      return nn::leaky_relu(affine_(tape, m), cfg_.leaky_slope);
    case ReturnKind::kIcnn:
    case ReturnKind::kNeIcnn:
      break;
  }
  nn::Var input = m;
  if (cfg_.kind == ReturnKind::kNeIcnn) input = nn::concat_cols({m, nn::scale(m, -1.0)});
  nn::Var z = nn::relu(m_layers_[0](tape, input));
  for (std::size_t k = 0; k < z_layers_.size(); ++k) {
    nn::Var pre = nn::add(z_layers_[k](tape, z), m_layers_[k + 1](tape, input));
    z = k + 1 == z_layers_.size() ? pre : nn::relu(pre);
  }
  return z;
}

double ReturnHead::evaluate(const Vec& m) { return evaluate(Mat(m.transpose()))(0); }

Vec ReturnHead::evaluate(const Mat& m) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  const Mat out = (*this)(tape, tape.constant(m)).value();
  return out.col(0);
}

void ReturnHead::project() { nn::project_nonnegative(params()); }

bool ReturnHead::certify_convexity(int trials, Rng& rng, double scale) {
  if (trials < 1) return true;
  Mat a(trials, repr_dim_);
  Mat b(trials, repr_dim_);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = scale * rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = scale * rng.normal();
  const Mat mid = 0.5 * (a + b);
  const Vec ua = evaluate(a);
  const Vec ub = evaluate(b);
  const Vec um = evaluate(mid);
  for (int i = 0; i < trials; ++i) {
    if (um(i) > 0.5 * (ua(i) + ub(i)) + 1e-6) return false;
  }
  return true;
}

nn::ParamList ReturnHead::params() {
  nn::ParamList p;
  if (cfg_.kind == ReturnKind::kLinear || cfg_.kind == ReturnKind::kLeakyRelu) {
    affine_.collect(p);
    return p;
  }
  for (nn::Linear& l : m_layers_) l.collect(p);
  for (nn::Linear& l : z_layers_) l.collect(p);
  return p;
}

// ---- joint model -----------------------------------------------------------------

ReturnBatch make_return_batch(const std::vector<trajstore::Segment>& segments, int max_len, double gamma) {
  ReturnBatch b;
  b.inputs = trajstore::pad_batch(segments, max_len, trajstore::agg_factor_for(max_len));
  b.labels.resize(static_cast<Eigen::Index>(segments.size()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    b.labels(static_cast<Eigen::Index>(i)) = trajstore::discounted_return(segments[i], gamma);
  }
  return b;
}

ReturnModel::ReturnModel(const repr::ReprConfig& repr_cfg, const ReturnModelConfig& cfg, int feature_dim,
                         Rng& init)
    : encoder_(repr_cfg, feature_dim, init), head_(cfg, repr_cfg.repr_dim, init), adam_(cfg.lr) {}

nn::Var ReturnModel::loss(nn::Tape& tape, const ReturnBatch& batch, Rng& dropout) {
  if (batch.labels.size() != batch.inputs.batch_size()) throw std::invalid_argument("return loss: label count");
  nn::Var m = encoder_.forward(tape, batch.inputs, true, &dropout);
  nn::Var u = head_(tape, m);
  nn::Var err = nn::sub(u, tape.constant(Mat(batch.labels)));
  return nn::mean(nn::square(err));
}

double ReturnModel::train_step(const ReturnBatch& batch, Rng& dropout) {
  nn::Tape tape;
  nn::Var l = loss(tape, batch, dropout);
  const double value = l.item();
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "return model loss is non-finite (" << value << ") after " << adam_.steps() << " updates; label range ["
       << batch.labels.minCoeff() << ", " << batch.labels.maxCoeff() << "]";
    throw DivergenceError(os.str());
  }
  tape.backward(l);
  adam_.step(params());
  return value;
}

Vec ReturnModel::predict(const trajstore::PaddedBatch& inputs) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  nn::Var m = encoder_.forward(tape, inputs, false);
  return head_(tape, m).value().col(0);
}

nn::ParamList ReturnModel::params() {
  nn::ParamList p = encoder_.params();
  for (nn::Parameter* q : head_.params()) p.push_back(q);
  return p;
}

}  // namespace vdfp::ret
