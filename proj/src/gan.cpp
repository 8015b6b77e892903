#include "skyfall/gan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "skyfall/adam.hpp"
#include "skyfall/errors.hpp"
#include "skyfall/serialize.hpp"

namespace skyfall {

using diff::Mat;
using diff::ParamRef;
using diff::Tape;
using diff::Var;

AffineParams AffineParams::init(Eigen::Index out, Eigen::Index in, Rng& rng) {
  AffineParams p;
  p.w = diff::uniform_init(out, in, in, rng);
  p.b = Mat::Zero(out, 1);
  return p;
}

void AffineParams::collect_params(const std::string& prefix,
                                  std::vector<ParamRef>& out_list) {
  out_list.push_back({prefix + ".w", &w});
  out_list.push_back({prefix + ".b", &b});
}

GeneratorParams GeneratorParams::init(Eigen::Index embed_dim, Eigen::Index hidden_dim,
                                      Eigen::Index noise_dim, Eigen::Index env_dim,
                                      Eigen::Index mlp_hidden, Rng& rng) {
  GeneratorParams g;
  g.embed_dim = embed_dim;
  g.hidden_dim = hidden_dim;
  g.noise_dim = noise_dim;
  g.env_dim = env_dim;
  g.mlp_hidden = mlp_hidden;
  g.embed = AffineParams::init(embed_dim, 3, rng);
  g.encoder = diff::LstmParams::init(embed_dim, hidden_dim, rng);
  g.pool_hidden = AffineParams::init(mlp_hidden, hidden_dim + noise_dim + env_dim, rng);
  g.pool_out = AffineParams::init(hidden_dim, mlp_hidden, rng);
  g.decoder = diff::LstmParams::init(embed_dim, hidden_dim, rng);
  g.out = AffineParams::init(3, hidden_dim, rng);
  return g;
}

std::vector<ParamRef> GeneratorParams::named_params() {
  std::vector<ParamRef> refs;
  embed.collect_params("embed", refs);
  encoder.collect_params("encoder", refs);
  pool_hidden.collect_params("pool_hidden", refs);
  pool_out.collect_params("pool_out", refs);
  decoder.collect_params("decoder", refs);
  out.collect_params("out", refs);
  return refs;
}

DiscriminatorParams DiscriminatorParams::init(Eigen::Index embed_dim,
                                              Eigen::Index hidden_dim, Rng& rng) {
  DiscriminatorParams d;
  d.embed_dim = embed_dim;
  d.hidden_dim = hidden_dim;
  d.embed = AffineParams::init(embed_dim, 3, rng);
  d.lstm = diff::LstmParams::init(embed_dim, hidden_dim, rng);
  d.head = AffineParams::init(1, hidden_dim, rng);
  return d;
}

std::vector<ParamRef> DiscriminatorParams::named_params() {
  std::vector<ParamRef> refs;
  embed.collect_params("embed", refs);
  lstm.collect_params("lstm", refs);
  head.collect_params("head", refs);
  return refs;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch < 1 || best_of_k < 1 || d_steps < 1)
    throw DataError("train config counts must be >= 1");
  if (noise_dim < 1 || embed_dim < 1 || hidden_dim < 1 || mlp_hidden < 1)
    throw DataError("train config dimensions must be >= 1");
  if (l2_weight < 0.0) throw DataError("train config lambda must be >= 0");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw DataError("train config learning rates must be > 0");
}

// --- plain inference path -------------------------------------------------

std::array<Point3, kSplitIndex> segment_displacements(const Segment& seg) {
  std::array<Point3, kSplitIndex> d{};
  d[0] = {0.0, 0.0, 0.0};
  for (std::size_t i = 1; i < kSplitIndex; ++i) d[i] = seg[i] - seg[i - 1];
  return d;
}

namespace {

std::array<Point3, kTrajectoryLen> trajectory_displacements(const Trajectory& t) {
  std::array<Point3, kTrajectoryLen> d{};
  d[0] = {0.0, 0.0, 0.0};
  for (std::size_t i = 1; i < kTrajectoryLen; ++i) d[i] = t.points[i] - t.points[i - 1];
  return d;
}

Eigen::Vector3d to_vec(const Point3& p) { return {p.x, p.y, p.z}; }

}  // namespace

Eigen::VectorXd embed_point(const GeneratorParams& g, const Point3& displacement) {
  return g.embed.w * to_vec(displacement) + g.embed.b.col(0);
}

Eigen::VectorXd encode_observed(const GeneratorParams& g, const Segment& observed_norm) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(g.hidden_dim);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(g.hidden_dim);
  for (const Point3& d : segment_displacements(observed_norm))
    diff::lstm_step(g.encoder, embed_point(g, d), h, c);
  return h;
}

Eigen::VectorXd pool_context(const GeneratorParams& g, const Eigen::VectorXd& h_enc,
                             const Eigen::VectorXd& z, const std::vector<double>& env) {
  if (h_enc.size() != g.hidden_dim || z.size() != g.noise_dim ||
      static_cast<Eigen::Index>(env.size()) != g.env_dim)
    throw std::invalid_argument("pool_context: dimension mismatch");
  Eigen::VectorXd joint(g.hidden_dim + g.noise_dim + g.env_dim);
  joint.head(g.hidden_dim) = h_enc;
  joint.segment(g.hidden_dim, g.noise_dim) = z;
  for (Eigen::Index i = 0; i < g.env_dim; ++i) joint[g.hidden_dim + g.noise_dim + i] = env[i];
  const Eigen::VectorXd hidden =
      (g.pool_hidden.w * joint + g.pool_hidden.b.col(0)).cwiseMax(0.0);
  return g.pool_out.w * hidden + g.pool_out.b.col(0);
}

Segment decode_future(const GeneratorParams& g, const Eigen::VectorXd& p,
                      const Point3& last_observed_norm, const Point3& last_disp_norm,
                      const NormStats& norm) {
  Eigen::VectorXd h = p;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(g.hidden_dim);
  Eigen::VectorXd e = embed_point(g, last_disp_norm);
  Point3 pos = last_observed_norm;
  Segment out;
  for (std::size_t t = 0; t < kSplitIndex; ++t) {
    diff::lstm_step(g.decoder, e, h, c);
    const Eigen::Vector3d d3 = g.out.w * h + g.out.b.col(0);
    const Point3 disp{d3[0], d3[1], d3[2]};
    pos = pos + disp;
    out[t] = denormalize(pos, norm);
    e = embed_point(g, disp);
  }
  return out;
}

Segment generate(const GeneratorParams& g, const NormStats& norm, const Segment& observed,
                 const Eigen::VectorXd& z, const std::vector<double>& env) {
  const Segment obs_n = normalize(observed, norm);
  const auto disps = segment_displacements(obs_n);
  const Eigen::VectorXd h_enc = encode_observed(g, obs_n);
  const Eigen::VectorXd p = pool_context(g, h_enc, z, env);
  return decode_future(g, p, obs_n.back(), disps.back(), norm);
}

Segment gan_predict(const GanModel& model, const Segment& observed, Rng& rng) {
  Eigen::VectorXd z(model.generator.noise_dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return generate(model.generator, model.norm, observed, z, model.config.environment);
}

double discriminate(const DiscriminatorParams& d, const NormStats& norm,
                    const Trajectory& trajectory) {
  const Trajectory t = normalize(trajectory, norm);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(d.hidden_dim);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d.hidden_dim);
  for (const Point3& disp : trajectory_displacements(t))
    diff::lstm_step(d.lstm, d.embed.w * to_vec(disp) + d.embed.b.col(0), h, c);
  return (d.head.w * h + d.head.b.col(0))(0);
}

// --- losses ---------------------------------------------------------------

namespace {

double bce_logit(double score, double label) {
  return std::max(score, 0.0) - score * label + std::log1p(std::exp(-std::fabs(score)));
}

double segment_sqdist(const Segment& a, const Segment& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kSplitIndex; ++i) {
    const Point3 d = a[i] - b[i];
    s += d.x * d.x + d.y * d.y + d.z * d.z;
  }
  return s;
}

}  // namespace

GanLosses gan_losses(const std::vector<double>& d_scores_real,
                     const std::vector<double>& d_scores_fake,
                     const std::vector<std::vector<Segment>>& preds,
                     const std::vector<Segment>& truths, double lambda, int best_of_k) {
  if (d_scores_real.size() != d_scores_fake.size())
    throw std::invalid_argument("gan_losses: real/fake score batches must match");
  if (preds.size() != truths.size())
    throw std::invalid_argument("gan_losses: prediction/truth batches must match");

  GanLosses out;
  if (!d_scores_real.empty()) {
    double d_sum = 0.0;
    double adv_sum = 0.0;
    for (double s : d_scores_real) d_sum += bce_logit(s, 1.0);
    for (double s : d_scores_fake) {
      d_sum += bce_logit(s, 0.0);
      adv_sum += bce_logit(s, 1.0);
    }
    out.d_loss = d_sum / static_cast<double>(d_scores_real.size() + d_scores_fake.size());
    out.g_adv = adv_sum / static_cast<double>(d_scores_fake.size());
  }
  if (!truths.empty()) {
    double l2_sum = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (static_cast<int>(preds[i].size()) != best_of_k)
        throw std::invalid_argument("gan_losses: expected best_of_k samples per segment");
      double best = segment_sqdist(preds[i][0], truths[i]);
      for (int s = 1; s < best_of_k; ++s)
        best = std::min(best, segment_sqdist(preds[i][s], truths[i]));
      l2_sum += best;
    }
    out.g_l2 = l2_sum / static_cast<double>(truths.size());
  }
  out.g_loss = out.g_adv + lambda * out.g_l2;
  return out;
}

// --- training -------------------------------------------------------------

namespace {

struct AffineVars {
  Var w, b;
};

AffineVars insert(Tape& tape, const AffineParams& p) {
  return {tape.input(p.w), tape.input(p.b)};
}

Var apply(Tape& tape, const AffineVars& a, Var x) { return tape.affine(a.w, a.b, x); }

struct GenVars {
  AffineVars embed;
  diff::LstmVars encoder;
  AffineVars pool_hidden, pool_out;
  diff::LstmVars decoder;
  AffineVars out;
};

GenVars insert_gen(Tape& tape, const GeneratorParams& g) {
  // Insertion order mirrors GeneratorParams::named_params.
  GenVars v;
  v.embed = insert(tape, g.embed);
  v.encoder = diff::insert(tape, g.encoder);
  v.pool_hidden = insert(tape, g.pool_hidden);
  v.pool_out = insert(tape, g.pool_out);
  v.decoder = diff::insert(tape, g.decoder);
  v.out = insert(tape, g.out);
  return v;
}

void append_vars(const diff::LstmVars& l, std::vector<Var>& out) {
  out.insert(out.end(), {l.w_i, l.w_f, l.w_o, l.w_g, l.b_i, l.b_f, l.b_o, l.b_g});
}

std::vector<Var> var_list(const GenVars& v) {
  std::vector<Var> out{v.embed.w, v.embed.b};
  append_vars(v.encoder, out);
  out.insert(out.end(), {v.pool_hidden.w, v.pool_hidden.b, v.pool_out.w, v.pool_out.b});
  append_vars(v.decoder, out);
  out.insert(out.end(), {v.out.w, v.out.b});
  return out;
}

struct DisVars {
  AffineVars embed;
  diff::LstmVars lstm;
  AffineVars head;
};

DisVars insert_dis(Tape& tape, const DiscriminatorParams& d) {
  DisVars v;
  v.embed = insert(tape, d.embed);
  v.lstm = diff::insert(tape, d.lstm);
  v.head = insert(tape, d.head);
  return v;
}

std::vector<Var> var_list(const DisVars& v) {
  std::vector<Var> out{v.embed.w, v.embed.b};
  append_vars(v.lstm, out);
  out.insert(out.end(), {v.head.w, v.head.b});
  return out;
}

// Normalized per-trajectory matrices, one column per trajectory, time
// steps stacked 3 rows at a stride.
struct SeqCache {
  Mat obs_disp;   // 3*10 x N observed displacements (leading zero)
  Mat full_disp;  // 3*20 x N full-trajectory displacements
  Mat fut_pos;    // 3*10 x N future absolute positions
  Mat last_obs;   // 3 x N last observed point
  Mat last_disp;  // 3 x N last observed displacement
};

SeqCache build_cache(const Dataset& data, const NormStats& norm) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  SeqCache cache;
  cache.obs_disp.resize(3 * kSplitIndex, n);
  cache.full_disp.resize(3 * kTrajectoryLen, n);
  cache.fut_pos.resize(3 * kSplitIndex, n);
  cache.last_obs.resize(3, n);
  cache.last_disp.resize(3, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Trajectory t = normalize(data.trajectories[i], norm);
    const auto [obs, fut] = split_obs_future(t);
    const auto obs_d = segment_displacements(obs);
    const auto full_d = trajectory_displacements(t);
    for (std::size_t s = 0; s < kSplitIndex; ++s) {
      cache.obs_disp.block<3, 1>(3 * s, i) = to_vec(obs_d[s]);
      cache.fut_pos.block<3, 1>(3 * s, i) = to_vec(fut[s]);
    }
    for (std::size_t s = 0; s < kTrajectoryLen; ++s)
      cache.full_disp.block<3, 1>(3 * s, i) = to_vec(full_d[s]);
    cache.last_obs.col(i) = to_vec(obs.back());
    cache.last_disp.col(i) = to_vec(obs_d.back());
  }
  return cache;
}

Mat gather(const Mat& cache, const std::size_t* idx, Eigen::Index count) {
  Mat out(cache.rows(), count);
  for (Eigen::Index i = 0; i < count; ++i)
    out.col(i) = cache.col(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Mat draw_noise(Rng& rng, Eigen::Index dim, Eigen::Index batch) {
  Mat z(dim, batch);
  for (Eigen::Index c = 0; c < batch; ++c)
    for (Eigen::Index r = 0; r < dim; ++r) z(r, c) = rng.normal();
  return z;
}

// Runs the batched discriminator over 20 displacement steps of 3xB.
Var dis_forward(Tape& tape, const DisVars& d, Eigen::Index hidden_dim,
                std::span<const Var> disp_steps) {
  diff::LstmState state =
      diff::zero_state(tape, hidden_dim, tape.value(disp_steps[0]).cols());
  for (Var step : disp_steps)
    state = diff::lstm_step(tape, d.lstm, apply(tape, d.embed, step), state);
  return apply(tape, d.head, state.h);
}

struct GenForward {
  std::vector<Var> disp;  // 10 generated displacement steps, 3xB
  std::vector<Var> pos;   // 10 absolute normalized position steps, 3xB
};

// Batched generator forward for one noise sample.
GenForward gen_forward(Tape& tape, const GenVars& g, const GeneratorParams& gp,
                       Var h_enc, const Mat& last_obs, const Mat& last_disp,
                       const Mat& z, const Mat& env) {
  std::vector<Var> pool_parts{h_enc, tape.input(z)};
  if (env.rows() > 0) pool_parts.push_back(tape.input(env));
  const Var pooled = apply(
      tape, g.pool_out,
      tape.relu(apply(tape, g.pool_hidden, tape.concat_rows(pool_parts))));

  diff::LstmState state{pooled, tape.input(Mat::Zero(gp.hidden_dim, last_obs.cols()))};
  Var prev_embed = apply(tape, g.embed, tape.input(last_disp));
  Var pos = tape.input(last_obs);

  GenForward out;
  out.disp.reserve(kSplitIndex);
  out.pos.reserve(kSplitIndex);
  for (std::size_t t = 0; t < kSplitIndex; ++t) {
    state = diff::lstm_step(tape, g.decoder, prev_embed, state);
    const Var disp = apply(tape, g.out, state.h);
    pos = tape.add(pos, disp);
    out.disp.push_back(disp);
    out.pos.push_back(pos);
    prev_embed = apply(tape, g.embed, disp);
  }
  return out;
}

Var encode_batch(Tape& tape, const GenVars& g, const GeneratorParams& gp,
                 const Mat& obs_disp) {
  diff::LstmState state = diff::zero_state(tape, gp.hidden_dim, obs_disp.cols());
  for (std::size_t t = 0; t < kSplitIndex; ++t)
    state = diff::lstm_step(
        tape, g.encoder,
        apply(tape, g.embed, tape.input(obs_disp.middleRows(3 * t, 3))), state);
  return state.h;
}

std::vector<const Mat*> collect_grads(const Tape& tape, const std::vector<Var>& vars) {
  std::vector<const Mat*> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(&tape.grad(v));
  return grads;
}

double ade_snapshot(const GeneratorParams& g, const NormStats& stats,
                    const TrainConfig& cfg, const Dataset& data, std::size_t limit) {
  const std::size_t n = std::min(limit, data.size());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [obs, fut] = split_obs_future(data.trajectories[i]);
    Rng rng(sub_seed(cfg.seed ^ 0x65766164u, i));  // stable across epochs
    Eigen::VectorXd z(g.noise_dim);
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
    const Segment pred = generate(g, stats, obs, z, cfg.environment);
    for (std::size_t p = 0; p < kSplitIndex; ++p) total += norm(pred[p] - fut[p]);
  }
  return total / static_cast<double>(n * kSplitIndex);
}

}  // namespace

TrainResult train_gan(const Dataset& train, const TrainConfig& cfg, const Dataset* eval) {
  cfg.validate();
  if (train.size() < static_cast<std::size_t>(cfg.batch))
    throw DataError("training set smaller than the batch size");

  const Eigen::Index env_dim = static_cast<Eigen::Index>(cfg.environment.size());

  TrainResult result;
  result.model.norm = compute_norm(train);
  result.model.config = cfg;

  Rng init_rng(sub_seed(cfg.seed, 0xC0DE));
  result.model.generator = GeneratorParams::init(cfg.embed_dim, cfg.hidden_dim,
                                                 cfg.noise_dim, env_dim,
                                                 cfg.mlp_hidden, init_rng);
  result.model.discriminator =
      DiscriminatorParams::init(cfg.embed_dim, cfg.hidden_dim, init_rng);
  GeneratorParams& gp = result.model.generator;
  DiscriminatorParams& dp = result.model.discriminator;
  const NormStats& norm = result.model.norm;

  const SeqCache cache = build_cache(train, norm);
  Mat env_col(env_dim, 1);
  for (Eigen::Index i = 0; i < env_dim; ++i) env_col(i, 0) = cfg.environment[i];

  diff::Adam adam_g({cfg.lr_g});
  diff::Adam adam_d({cfg.lr_d});
  std::vector<ParamRef> g_refs = gp.named_params();
  std::vector<ParamRef> d_refs = dp.named_params();

  Rng rng(sub_seed(cfg.seed, 1));  // shuffling + noise, single stream
  Tape tape;
  const std::size_t n = train.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> perm = rng.permutation(n);
    double d_loss_sum = 0.0, g_adv_sum = 0.0, g_l2_sum = 0.0;
    std::size_t d_updates = 0, g_updates = 0;

    for (std::size_t start = 0, batch_index = 0; start < n;
         start += cfg.batch, ++batch_index) {
      const Eigen::Index b =
          static_cast<Eigen::Index>(std::min<std::size_t>(cfg.batch, n - start));
      try {
        const Mat obs_disp = gather(cache.obs_disp, perm.data() + start, b);
        const Mat full_disp = gather(cache.full_disp, perm.data() + start, b);
        const Mat fut_pos = gather(cache.fut_pos, perm.data() + start, b);
        const Mat last_obs = gather(cache.last_obs, perm.data() + start, b);
        const Mat last_disp = gather(cache.last_disp, perm.data() + start, b);
        const Mat env_b = env_col.replicate(1, b);

        // Discriminator updates; fakes are detached generator outputs.
        for (int ds = 0; ds < cfg.d_steps; ++ds) {
          tape.reset();
          GenVars gtv = insert_gen(tape, gp);
          const Var h_enc = encode_batch(tape, gtv, gp, obs_disp);
          const GenForward fake = gen_forward(
              tape, gtv, gp, h_enc, last_obs, last_disp,
              draw_noise(rng, cfg.noise_dim, b), env_b);
          std::vector<Mat> fake_disp_values;
          fake_disp_values.reserve(kSplitIndex);
          for (Var v : fake.disp) fake_disp_values.push_back(tape.value(v));

          tape.reset();
          DisVars dtv = insert_dis(tape, dp);
          std::vector<Var> real_steps, fake_steps;
          for (std::size_t t = 0; t < kTrajectoryLen; ++t)
            real_steps.push_back(tape.input(full_disp.middleRows(3 * t, 3)));
          for (std::size_t t = 0; t < kSplitIndex; ++t)
            fake_steps.push_back(tape.input(obs_disp.middleRows(3 * t, 3)));
          for (const Mat& m : fake_disp_values) fake_steps.push_back(tape.input(m));

          const Var real_scores = dis_forward(tape, dtv, dp.hidden_dim, real_steps);
          const Var fake_scores = dis_forward(tape, dtv, dp.hidden_dim, fake_steps);
          const Var d_loss = tape.scale(
              tape.add(tape.bce_with_logits(real_scores, 1.0),
                       tape.bce_with_logits(fake_scores, 0.0)),
              0.5);
          tape.backward(d_loss);
          d_loss_sum += tape.value(d_loss)(0, 0);
          ++d_updates;
          const std::vector<Var> d_vars = var_list(dtv);
          adam_d.step(d_refs, collect_grads(tape, d_vars));
        }

        // Generator update through the (frozen) discriminator.
        tape.reset();
        GenVars gtv = insert_gen(tape, gp);
        DisVars dtv = insert_dis(tape, dp);
        const Var h_enc = encode_batch(tape, gtv, gp, obs_disp);

        Var l2_best;  // 1xB best-of-k squared L2 on future positions
        Var adv_scores;
        for (int s = 0; s < cfg.best_of_k; ++s) {
          const GenForward fake = gen_forward(
              tape, gtv, gp, h_enc, last_obs, last_disp,
              draw_noise(rng, cfg.noise_dim, b), env_b);
          Var l2;
          for (std::size_t t = 0; t < kSplitIndex; ++t) {
            const Var diff_t = tape.sub(
                fake.pos[t], tape.input(fut_pos.middleRows(3 * t, 3)));
            const Var step_sq = tape.colwise_sumsq(diff_t);
            l2 = (t == 0) ? step_sq : tape.add(l2, step_sq);
          }
          l2_best = (s == 0) ? l2 : tape.cmin(l2_best, l2);
          if (s == 0) {
            // Adversarial term scores the first sample's trajectory.
            std::vector<Var> fake_steps;
            for (std::size_t t = 0; t < kSplitIndex; ++t)
              fake_steps.push_back(tape.input(obs_disp.middleRows(3 * t, 3)));
            for (Var v : fake.disp) fake_steps.push_back(v);
            adv_scores = dis_forward(tape, dtv, dp.hidden_dim, fake_steps);
          }
        }
        const Var g_adv = tape.bce_with_logits(adv_scores, 1.0);
        const Var g_l2 = tape.mean(l2_best);
        const Var g_loss = tape.add(g_adv, tape.scale(g_l2, cfg.l2_weight));
        tape.backward(g_loss);
        g_adv_sum += tape.value(g_adv)(0, 0);
        g_l2_sum += tape.value(g_l2)(0, 0);
        ++g_updates;
        const std::vector<Var> g_vars = var_list(gtv);
        adam_g.step(g_refs, collect_grads(tape, g_vars));
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }

    EpochStats stats;
    stats.d_loss = d_updates ? d_loss_sum / static_cast<double>(d_updates) : 0.0;
    stats.g_adv = g_updates ? g_adv_sum / static_cast<double>(g_updates) : 0.0;
    stats.g_l2 = g_updates ? g_l2_sum / static_cast<double>(g_updates) : 0.0;
    stats.eval_ade = eval ? ade_snapshot(gp, norm, cfg, *eval, eval->size())
                          : ade_snapshot(gp, norm, cfg, train, 100);
    result.history.push_back(stats);

    if ((epoch + 1) % cfg.log_every == 0 || epoch + 1 == cfg.epochs)
      std::cerr << "skyfall: epoch " << (epoch + 1) << "/" << cfg.epochs
                << " d_loss=" << stats.d_loss << " g_adv=" << stats.g_adv
                << " g_l2=" << stats.g_l2 << " eval_ade=" << stats.eval_ade << "\n";
  }
  return result;
}

double generator_l2_with_grads(GeneratorParams& g, const std::vector<Trajectory>& batch,
                               const NormStats& norm, const Mat& z,
                               const std::vector<double>& env,
                               std::vector<Mat>* grads) {
  Dataset data;
  data.trajectories = batch;
  const SeqCache cache = build_cache(data, norm);
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  if (z.rows() != g.noise_dim || z.cols() != b)
    throw std::invalid_argument("generator_l2_with_grads: noise shape mismatch");
  Mat env_b(static_cast<Eigen::Index>(env.size()), b);
  for (Eigen::Index r = 0; r < env_b.rows(); ++r) env_b.row(r).setConstant(env[r]);

  Tape tape;
  GenVars vars = insert_gen(tape, g);
  const Var h_enc = encode_batch(tape, vars, g, cache.obs_disp);
  const GenForward fake =
      gen_forward(tape, vars, g, h_enc, cache.last_obs, cache.last_disp, z, env_b);
  Var l2;
  for (std::size_t t = 0; t < kSplitIndex; ++t) {
    const Var diff_t =
        tape.sub(fake.pos[t], tape.input(cache.fut_pos.middleRows(3 * t, 3)));
    const Var step_sq = tape.colwise_sumsq(diff_t);
    l2 = (t == 0) ? step_sq : tape.add(l2, step_sq);
  }
  const Var loss = tape.mean(l2);
  if (grads != nullptr) {
    tape.backward(loss);
    grads->clear();
    for (Var v : var_list(vars)) grads->push_back(tape.grad(v));
  }
  return tape.value(loss)(0, 0);
}

// --- serialization ----------------------------------------------------------

namespace {

nlohmann::json params_to_json(std::vector<ParamRef> refs) {
  nlohmann::json obj = nlohmann::json::object();
  for (const ParamRef& r : refs) obj[r.name] = to_json(*r.value);
  return obj;
}

void params_from_json(const nlohmann::json& obj, std::vector<ParamRef> refs,
                      const std::string& path) {
  for (const ParamRef& r : refs) {
    if (!obj.contains(r.name)) throw DataError(path + ": missing parameter " + r.name);
    Mat m = matrix_from_json(obj.at(r.name));
    if (m.rows() != r.value->rows() || m.cols() != r.value->cols())
      throw DataError(path + ": parameter " + r.name + " has wrong shape");
    *r.value = std::move(m);
  }
}

}  // namespace

void save_gan(const GanModel& model, const std::string& path) {
  GanModel copy = model;
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["kind"] = "gan";
  doc["generator"] = {
      {"embed_dim", copy.generator.embed_dim},
      {"hidden_dim", copy.generator.hidden_dim},
      {"noise_dim", copy.generator.noise_dim},
      {"env_dim", copy.generator.env_dim},
      {"mlp_hidden", copy.generator.mlp_hidden},
      {"params", params_to_json(copy.generator.named_params())},
  };
  doc["discriminator"] = {
      {"embed_dim", copy.discriminator.embed_dim},
      {"hidden_dim", copy.discriminator.hidden_dim},
      {"params", params_to_json(copy.discriminator.named_params())},
  };
  doc["norm_stats"] = to_json(copy.norm);
  doc["config_echo"] = {
      {"epochs", copy.config.epochs},
      {"batch", copy.config.batch},
      {"lr_g", copy.config.lr_g},
      {"lr_d", copy.config.lr_d},
      {"noise_dim", copy.config.noise_dim},
      {"l2_weight", copy.config.l2_weight},
      {"best_of_k", copy.config.best_of_k},
      {"d_steps", copy.config.d_steps},
      {"seed", copy.config.seed},
      {"environment", copy.config.environment},
      {"embed_dim", copy.config.embed_dim},
      {"hidden_dim", copy.config.hidden_dim},
      {"mlp_hidden", copy.config.mlp_hidden},
  };
  write_json(doc, path);
}

GanModel load_gan(const std::string& path) {
  const nlohmann::json doc = read_json(path);
  expect_format(doc, "gan", 1, path);

  GanModel model;
  const auto& cfg = doc.at("config_echo");
  model.config.epochs = cfg.at("epochs").get<int>();
  model.config.batch = cfg.at("batch").get<int>();
  model.config.lr_g = cfg.at("lr_g").get<double>();
  model.config.lr_d = cfg.at("lr_d").get<double>();
  model.config.noise_dim = cfg.at("noise_dim").get<Eigen::Index>();
  model.config.l2_weight = cfg.at("l2_weight").get<double>();
  model.config.best_of_k = cfg.at("best_of_k").get<int>();
  model.config.d_steps = cfg.at("d_steps").get<int>();
  model.config.seed = cfg.at("seed").get<std::uint64_t>();
  model.config.environment = cfg.at("environment").get<std::vector<double>>();
  model.config.embed_dim = cfg.at("embed_dim").get<Eigen::Index>();
  model.config.hidden_dim = cfg.at("hidden_dim").get<Eigen::Index>();
  model.config.mlp_hidden = cfg.at("mlp_hidden").get<Eigen::Index>();

  const auto& gen = doc.at("generator");
  Rng dummy(0);
  model.generator = GeneratorParams::init(
      gen.at("embed_dim").get<Eigen::Index>(), gen.at("hidden_dim").get<Eigen::Index>(),
      gen.at("noise_dim").get<Eigen::Index>(), gen.at("env_dim").get<Eigen::Index>(),
      gen.at("mlp_hidden").get<Eigen::Index>(), dummy);
  params_from_json(gen.at("params"), model.generator.named_params(), path);

  const auto& dis = doc.at("discriminator");
  model.discriminator = DiscriminatorParams::init(
      dis.at("embed_dim").get<Eigen::Index>(), dis.at("hidden_dim").get<Eigen::Index>(),
      dummy);
  params_from_json(dis.at("params"), model.discriminator.named_params(), path);

  model.norm = norm_from_json(doc.at("norm_stats"));
  return model;
}

}  // namespace skyfall
