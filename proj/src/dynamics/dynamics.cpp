#include "vdfp/dynamics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vdfp/errors.hpp"

namespace vdfp::dynamics {

std::string to_string(Conditioning c) { return c == Conditioning::kProduct ? "product" : "concat"; }

Conditioning parse_conditioning(std::string_view s) {
  if (s == "product") return Conditioning::kProduct;
  if (s == "concat") return Conditioning::kConcat;
  throw std::invalid_argument("unknown conditioning '" + std::string(s) + "'");
}

void VAEConfig::validate() const {
  if (z_dim < 1) throw std::invalid_argument("vae: z_dim must be >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("vae: beta must be positive");
  if (!(clip_c >= 0.0)) throw std::invalid_argument("vae: clip_c must be >= 0 (or inf)");
  if (!(lr > 0.0)) throw std::invalid_argument("vae: lr must be positive");
  if (std::isnan(width_scale)) throw std::invalid_argument("vae: width_scale is NaN");
}

double VAEConfig::resolved_scale(int cond_dim) const {
  if (width_scale > 0.0) return width_scale;
  return cond_dim < 8 ? 0.25 : 1.0;
}

Vec gaussian_kl(const LatentDistribution& d) {
  const auto mu = d.mu.array();
  const auto ls = d.log_sigma.array();
  return (0.5 * (mu.square() + (2.0 * ls).exp() - 1.0 - 2.0 * ls)).rowwise().sum();
}

Mat reparameterize(const LatentDistribution& d, const Mat& noise) {
  if (noise.rows() != d.mu.rows() || noise.cols() != d.mu.cols()) {
    throw std::invalid_argument("reparameterize: noise shape differs from the posterior");
  }
  return d.mu.array() + d.log_sigma.array().exp() * noise.array();
}

namespace {

int scaled(int width, double s) { return std::max(1, static_cast<int>(std::lround(width * s))); }

}  // namespace

ConditionalVAE::ConditionalVAE(const VAEConfig& cfg, int cond_dim, int repr_dim, Rng& init)
    : cfg_(cfg), cond_dim_(cond_dim), repr_dim_(repr_dim), adam_(cfg.lr) {
  cfg_.validate();
  if (cond_dim < 1 || repr_dim < 1) throw std::invalid_argument("vae: dimensions must be positive");
  const double s = cfg_.resolved_scale(cond_dim);
  const int e1 = scaled(400, s);
  const int e2 = scaled(200, s);
  const int d1 = scaled(200, s);
  const int d2 = scaled(400, s);
  if (cfg_.conditioning == Conditioning::kProduct) {
    enc_main_ = nn::Linear("vae.enc.main", repr_dim, e1, init);
    enc_cond_ = nn::Linear("vae.enc.cond", cond_dim, e1, init);
    dec_latent_ = nn::Linear("vae.dec.latent", cfg_.z_dim, d1, init);
    dec_cond_ = nn::Linear("vae.dec.cond", cond_dim, d1, init);
  } else {
    enc_main_ = nn::Linear("vae.enc.main", repr_dim + cond_dim, e1, init);
    dec_latent_ = nn::Linear("vae.dec.latent", cfg_.z_dim + cond_dim, d1, init);
  }
  enc_hidden_ = nn::Linear("vae.enc.hidden", e1, e2, init);
  enc_mu_ = nn::Linear("vae.enc.mu", e2, cfg_.z_dim, init);
  enc_log_sigma_ = nn::Linear("vae.enc.log_sigma", e2, cfg_.z_dim, init);
  dec_hidden_ = nn::Linear("vae.dec.hidden", d1, d2, init);
  dec_out_ = nn::Linear("vae.dec.out", d2, repr_dim, init);
}

std::vector<int> ConditionalVAE::encoder_widths() const { return {enc_main_.out(), enc_hidden_.out(), cfg_.z_dim}; }
std::vector<int> ConditionalVAE::decoder_widths() const { return {dec_latent_.out(), dec_hidden_.out(), repr_dim_}; }

nn::Var ConditionalVAE::first_layer(nn::Tape& tape, nn::Var main, nn::Var cond, nn::Linear& main_fc,
                                    nn::Linear& cond_fc) {
  if (cond.cols() != cond_dim_) throw std::invalid_argument("vae: condition width mismatch");
  if (cfg_.conditioning == Conditioning::kProduct) {
    return nn::mul(nn::sigmoid(cond_fc(tape, cond)), nn::relu(main_fc(tape, main)));
  }
  return nn::relu(main_fc(tape, nn::concat_cols({main, cond})));
}

ConditionalVAE::PosteriorVars ConditionalVAE::posterior(nn::Tape& tape, nn::Var m, nn::Var cond) {
  if (m.cols() != repr_dim_) throw std::invalid_argument("vae: representation width mismatch");
  nn::Var h = first_layer(tape, m, cond, enc_main_, enc_cond_);
  h = nn::relu(enc_hidden_(tape, h));
  return {enc_mu_(tape, h), nn::clamp(enc_log_sigma_(tape, h), kLogSigmaMin, kLogSigmaMax)};
}

nn::Var ConditionalVAE::decode(nn::Tape& tape, nn::Var z, nn::Var cond) {
  if (z.cols() != cfg_.z_dim) throw std::invalid_argument("vae: latent width mismatch");
  nn::Var g = first_layer(tape, z, cond, dec_latent_, dec_cond_);
  g = nn::relu(dec_hidden_(tape, g));
  return dec_out_(tape, g);
}

LatentDistribution ConditionalVAE::posterior(const Mat& m, const Mat& cond) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  PosteriorVars p = posterior(tape, tape.constant(m), tape.constant(cond));
  return {p.mu.value(), p.log_sigma.value()};
}

Mat ConditionalVAE::decode(const Mat& z, const Mat& cond) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  return decode(tape, tape.constant(z), tape.constant(cond)).value();
}

ConditionalVAE::LossVars ConditionalVAE::elbo(nn::Tape& tape, const Mat& m, const Mat& cond, const Mat& noise) {
  if (m.rows() != cond.rows()) throw std::invalid_argument("vae: batch size mismatch");
  nn::Var mv = tape.constant(m);
  nn::Var cv = tape.constant(cond);
  PosteriorVars p = posterior(tape, mv, cv);
  nn::Var z = nn::add(p.mu, nn::mul(nn::exp(p.log_sigma), noise));
  nn::Var recon_m = decode(tape, z, cv);
  const double inv_b = 1.0 / static_cast<double>(m.rows());
  nn::Var recon = nn::scale(nn::sum(nn::square(nn::sub(mv, recon_m))), inv_b);
  // 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma)
  nn::Var kl_terms = nn::sub(nn::add(nn::square(p.mu), nn::exp(nn::scale(p.log_sigma, 2.0))),
                             nn::add_scalar(nn::scale(p.log_sigma, 2.0), 1.0));
  nn::Var kl = nn::scale(nn::sum(kl_terms), 0.5 * inv_b);
  nn::Var total = nn::add(recon, nn::scale(kl, cfg_.beta));
  return {recon, kl, total};
}

Mat ConditionalVAE::sample_clipped_noise(Eigen::Index rows, double clip_c, Rng& eps_rng) const {
  Mat eps(rows, cfg_.z_dim);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = std::clamp(eps_rng.normal(), -clip_c, clip_c);
  return eps;
}

ElboLosses ConditionalVAE::elbo_step(const Mat& m, const Mat& cond, Rng& noise) {
  Mat eps(m.rows(), cfg_.z_dim);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = noise.normal();
  nn::Tape tape;
  LossVars l = elbo(tape, m, cond, eps);
  ElboLosses out{l.recon.item(), l.kl.item(), l.total.item()};
  if (!std::isfinite(out.total)) {
    std::ostringstream os;
    os << "VAE loss is non-finite (recon " << out.recon << ", kl " << out.kl << ") after " << adam_.steps()
       << " updates";
    throw DivergenceError(os.str());
  }
  tape.backward(l.total);
  adam_.step(params());
  return out;
}

Mat ConditionalVAE::predict(const Mat& cond, double clip_c, Rng& eps_rng) {
  if (!(clip_c >= 0.0)) throw std::invalid_argument("predict: clip_c must be >= 0");
  return decode(sample_clipped_noise(cond.rows(), clip_c, eps_rng), cond);
}

nn::ParamList ConditionalVAE::encoder_params() {
  nn::ParamList p;
  enc_main_.collect(p);
  if (cfg_.conditioning == Conditioning::kProduct) enc_cond_.collect(p);
  enc_hidden_.collect(p);
  enc_mu_.collect(p);
  enc_log_sigma_.collect(p);
  return p;
}

nn::ParamList ConditionalVAE::decoder_params() {
  nn::ParamList p;
  dec_latent_.collect(p);
  if (cfg_.conditioning == Conditioning::kProduct) dec_cond_.collect(p);
  dec_hidden_.collect(p);
  dec_out_.collect(p);
  return p;
}

nn::ParamList ConditionalVAE::params() {
  nn::ParamList p = encoder_params();
  for (nn::Parameter* q : decoder_params()) p.push_back(q);
  return p;
}

// ---- MLP ablation -------------------------------------------------------------------

MlpPredictor::MlpPredictor(int cond_dim, int repr_dim, Rng& init, double lr)
    : net_("mlp_predictor", cond_dim, {200, 100}, repr_dim, init), adam_(lr) {}

double MlpPredictor::train_step(const Mat& m, const Mat& cond) {
  nn::Tape tape;
  nn::Var pred = net_(tape, tape.constant(cond));
  nn::Var loss =
      nn::scale(nn::sum(nn::square(nn::sub(pred, tape.constant(m)))), 1.0 / static_cast<double>(m.rows()));
  const double value = loss.item();
  if (!std::isfinite(value)) throw DivergenceError("MLP predictor loss is non-finite");
  tape.backward(loss);
  adam_.step(params());
  return value;
}

}  // namespace vdfp::dynamics
