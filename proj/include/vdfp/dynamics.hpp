#pragma once

#include <limits>
#include <string>

#include "vdfp/nn/adam.hpp"
#include "vdfp/nn/autodiff.hpp"
#include "vdfp/nn/layers.hpp"
#include "vdfp/nn/rng.hpp"

namespace vdfp::dynamics {

enum class Conditioning { kProduct, kConcat };

std::string to_string(Conditioning c);
Conditioning parse_conditioning(std::string_view s);

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 2.0;

struct VAEConfig {
  int z_dim = 50;
  double beta = 1000.0;
  /// Latent clip for prediction; +infinity disables clipping.
  double clip_c = 0.2;
  Conditioning conditioning = Conditioning::kProduct;
  /// Multiplies the 400/200 encoder and 200/400 decoder widths. A value
  /// <= 0 picks 0.25 for condition inputs narrower than 8, else 1.
  double width_scale = 0.0;
  double lr = 1e-3;

  void validate() const;
  /// Resolved width multiplier for a given condition width.
  double resolved_scale(int cond_dim) const;
};

struct LatentDistribution {
  Mat mu;         // B x z_dim
  Mat log_sigma;  // B x z_dim, clamped
  Mat sigma() const { return log_sigma.array().exp(); }
};

/// Closed-form KL(N(mu, sigma^2) || N(0, I)) per row, summed over dims.
Vec gaussian_kl(const LatentDistribution& d);

/// z = mu + sigma * noise.
Mat reparameterize(const LatentDistribution& d, const Mat& noise);

struct ElboLosses {
  double recon = 0.0;  // mean over the batch of ||m - m~||^2
  double kl = 0.0;     // mean over the batch of the closed-form KL
  double total = 0.0;  // recon + beta * kl
};

/// Conditional beta-VAE modelling m | c, where c = s (+) a, or just s for the
/// state-value variant.
///
/// Encoder: h = sigmoid(C c) * relu(M m) -> relu(400->200) -> (mu, log_sigma)
/// Decoder: g = sigmoid(C' c) * relu(Z z) -> relu(200->400) -> m~
/// With concatenation the first layer is relu(F [m, c]) (resp. [z, c]).
class ConditionalVAE {
 public:
  ConditionalVAE() = default;
  ConditionalVAE(const VAEConfig& cfg, int cond_dim, int repr_dim, Rng& init);

  struct PosteriorVars {
    nn::Var mu;
    nn::Var log_sigma;
  };
  PosteriorVars posterior(nn::Tape& tape, nn::Var m, nn::Var cond);
  nn::Var decode(nn::Tape& tape, nn::Var z, nn::Var cond);

  LatentDistribution posterior(const Mat& m, const Mat& cond);
  Mat decode(const Mat& z, const Mat& cond);

  struct LossVars {
    nn::Var recon;
    nn::Var kl;
    nn::Var total;
  };
  /// recon + beta * KL on the tape, with the given standard-normal noise.
  LossVars elbo(nn::Tape& tape, const Mat& m, const Mat& cond, const Mat& noise);
  /// One Adam step on both halves. Throws DivergenceError on a non-finite loss.
  ElboLosses elbo_step(const Mat& m, const Mat& cond, Rng& noise);

  /// Draws eps ~ N(0, I), clamps it to [-c, c] and decodes.
  Mat predict(const Mat& cond, double clip_c, Rng& eps_rng);
  Mat predict(const Mat& cond, Rng& eps_rng) { return predict(cond, cfg_.clip_c, eps_rng); }
  /// Clipped latent noise of shape (rows x z_dim).
  Mat sample_clipped_noise(Eigen::Index rows, double clip_c, Rng& eps_rng) const;

  const VAEConfig& config() const { return cfg_; }
  int cond_dim() const { return cond_dim_; }
  int repr_dim() const { return repr_dim_; }
  int z_dim() const { return cfg_.z_dim; }
  std::vector<int> encoder_widths() const;
  std::vector<int> decoder_widths() const;

  nn::ParamList encoder_params();
  nn::ParamList decoder_params();
  nn::ParamList params();
  nn::Adam& optimizer() { return adam_; }

 private:
  nn::Var first_layer(nn::Tape& tape, nn::Var main, nn::Var cond, nn::Linear& main_fc, nn::Linear& cond_fc);

  VAEConfig cfg_;
  int cond_dim_ = 0;
  int repr_dim_ = 0;
  // encoder (phi)
  nn::Linear enc_main_;
  nn::Linear enc_cond_;
  nn::Linear enc_hidden_;
  nn::Linear enc_mu_;
  nn::Linear enc_log_sigma_;
  // decoder (phi')
  nn::Linear dec_latent_;
  nn::Linear dec_cond_;
  nn::Linear dec_hidden_;
  nn::Linear dec_out_;
  nn::Adam adam_;
};

/// Deterministic ablation P^MLP: c -> 200 -> 100 -> m, squared-error fit.
class MlpPredictor {
 public:
  MlpPredictor() = default;
  MlpPredictor(int cond_dim, int repr_dim, Rng& init, double lr = 1e-3);

  nn::Var operator()(nn::Tape& tape, nn::Var cond) { return net_(tape, cond); }
  Mat predict(const Mat& cond) { return net_.forward(cond); }
  /// Mean over the batch of ||m - P(c)||^2; one Adam step.
  double train_step(const Mat& m, const Mat& cond);

  nn::Mlp& net() { return net_; }
  nn::ParamList params() { return net_.params(); }
  nn::Adam& optimizer() { return adam_; }

 private:
  nn::Mlp net_;
  nn::Adam adam_;
};

}  // namespace vdfp::dynamics
