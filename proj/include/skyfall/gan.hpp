#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skyfall/lstm.hpp"
#include "skyfall/rng.hpp"
#include "skyfall/trajectory.hpp"

namespace skyfall {

struct AffineParams {
  diff::Mat w;  // out x in
  diff::Mat b;  // out x 1

  static AffineParams init(Eigen::Index out, Eigen::Index in, Rng& rng);
  void collect_params(const std::string& prefix, std::vector<diff::ParamRef>& out_list);
};

// Generator: embed -> LSTM encoder -> pooling perceptron (with noise and
// optional environment factors) -> LSTM decoder -> displacement head.
// All sequence inputs/outputs are normalized relative displacements;
// absolute positions are reconstructed at the boundary.
struct GeneratorParams {
  Eigen::Index embed_dim = 16;
  Eigen::Index hidden_dim = 32;
  Eigen::Index noise_dim = 8;
  Eigen::Index env_dim = 0;
  Eigen::Index mlp_hidden = 32;

  AffineParams embed;        // embed_dim x 3
  diff::LstmParams encoder;  // input embed_dim
  AffineParams pool_hidden;  // mlp_hidden x (hidden + noise + env)
  AffineParams pool_out;     // hidden x mlp_hidden
  diff::LstmParams decoder;  // input embed_dim
  AffineParams out;          // 3 x hidden

  static GeneratorParams init(Eigen::Index embed_dim, Eigen::Index hidden_dim,
                              Eigen::Index noise_dim, Eigen::Index env_dim,
                              Eigen::Index mlp_hidden, Rng& rng);
  std::vector<diff::ParamRef> named_params();
};

// Discriminator: embeds the 20 displacements of a full trajectory, runs
// an LSTM, and scores the final hidden state with a raw affine head.
struct DiscriminatorParams {
  Eigen::Index embed_dim = 16;
  Eigen::Index hidden_dim = 32;

  AffineParams embed;  // embed_dim x 3
  diff::LstmParams lstm;
  AffineParams head;   // 1 x hidden

  static DiscriminatorParams init(Eigen::Index embed_dim, Eigen::Index hidden_dim,
                                  Rng& rng);
  std::vector<diff::ParamRef> named_params();
};

struct TrainConfig {
  int epochs = 200;
  int batch = 64;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  Eigen::Index noise_dim = 8;
  double l2_weight = 1.0;  // lambda on the best-of-k L2 term
  int best_of_k = 1;
  int d_steps = 1;  // discriminator updates per generator update
  std::uint64_t seed = 0;
  std::vector<double> environment;  // fixed per dataset; may be empty

  Eigen::Index embed_dim = 16;
  Eigen::Index hidden_dim = 32;
  Eigen::Index mlp_hidden = 32;
  int log_every = 10;  // progress print period, epochs

  void validate() const;
};

struct EpochStats {
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_l2 = 0.0;
  double eval_ade = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct GanModel {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  NormStats norm;
  TrainConfig config;
};

// --- generator stages (plain inference path, normalized space) ---

// Relative displacements with a leading zero, so a segment of P points
// yields exactly P inputs and constant segments map to all-zero inputs.
std::array<Point3, kSplitIndex> segment_displacements(const Segment& seg);

Eigen::VectorXd embed_point(const GeneratorParams& g, const Point3& displacement);
Eigen::VectorXd encode_observed(const GeneratorParams& g, const Segment& observed_norm);
Eigen::VectorXd pool_context(const GeneratorParams& g, const Eigen::VectorXd& h_enc,
                             const Eigen::VectorXd& z, const std::vector<double>& env);
// Decoder run from initial hidden state p; positions accumulate from the
// last observed point and are denormalized through `norm` at the end.
Segment decode_future(const GeneratorParams& g, const Eigen::VectorXd& p,
                      const Point3& last_observed_norm, const Point3& last_disp_norm,
                      const NormStats& norm);

Segment generate(const GeneratorParams& g, const NormStats& norm, const Segment& observed,
                 const Eigen::VectorXd& z, const std::vector<double>& env);

// Convenience wrapper drawing z from rng.
Segment gan_predict(const GanModel& model, const Segment& observed, Rng& rng);

double discriminate(const DiscriminatorParams& d, const NormStats& norm,
                    const Trajectory& trajectory);

// --- losses ---

struct GanLosses {
  double d_loss = 0.0;  // mean BCE over all real+fake scores
  double g_adv = 0.0;   // mean BCE of fake scores against label 1
  double g_l2 = 0.0;    // mean over segments of best-of-k squared L2
  double g_loss = 0.0;  // g_adv + lambda * g_l2
};

// preds holds k noise-conditioned samples per truth segment.
GanLosses gan_losses(const std::vector<double>& d_scores_real,
                     const std::vector<double>& d_scores_fake,
                     const std::vector<std::vector<Segment>>& preds,
                     const std::vector<Segment>& truths, double lambda, int best_of_k);

// --- training ---

struct TrainResult {
  GanModel model;
  TrainHistory history;
};

// Alternating adversarial training. Fake trajectories are the observed
// segment with the generated future appended. If eval is non-null the
// per-epoch ADE snapshot is computed on it, otherwise on (up to) the
// first 100 training trajectories.
TrainResult train_gan(const Dataset& train, const TrainConfig& cfg,
                      const Dataset* eval = nullptr);

// L2 training loss of one batched generator pass (10-step encode plus
// 10-step decode) under a fixed noise draw, with gradients in
// named_params order when requested. This runs the same tape graph the
// trainer uses; it exists so the full unrolled gradient can be verified
// against finite differences.
double generator_l2_with_grads(GeneratorParams& g, const std::vector<Trajectory>& batch,
                               const NormStats& norm, const diff::Mat& z,
                               const std::vector<double>& env,
                               std::vector<diff::Mat>* grads);

void save_gan(const GanModel& model, const std::string& path);
GanModel load_gan(const std::string& path);

}  // namespace skyfall
