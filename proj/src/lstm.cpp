#include "skyfall/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace skyfall::diff {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

LstmParams LstmParams::init(Eigen::Index input_dim, Eigen::Index hidden_dim, Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  const Eigen::Index fan_in = input_dim + hidden_dim;
  p.w_i = uniform_init(hidden_dim, fan_in, fan_in, rng);
  p.w_f = uniform_init(hidden_dim, fan_in, fan_in, rng);
  p.w_o = uniform_init(hidden_dim, fan_in, fan_in, rng);
  p.w_g = uniform_init(hidden_dim, fan_in, fan_in, rng);
  p.b_i = Mat::Zero(hidden_dim, 1);
  p.b_f = Mat::Constant(hidden_dim, 1, 1.0);
  p.b_o = Mat::Zero(hidden_dim, 1);
  p.b_g = Mat::Zero(hidden_dim, 1);
  return p;
}

void LstmParams::validate() const {
  const Eigen::Index fan_in = input_dim + hidden_dim;
  for (const Mat* w : {&w_i, &w_f, &w_o, &w_g})
    if (w->rows() != hidden_dim || w->cols() != fan_in)
      throw std::invalid_argument("lstm: gate weight shape mismatch");
  for (const Mat* b : {&b_i, &b_f, &b_o, &b_g})
    if (b->rows() != hidden_dim || b->cols() != 1)
      throw std::invalid_argument("lstm: gate bias shape mismatch");
}

void LstmParams::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w_i", &w_i});
  out.push_back({prefix + ".w_f", &w_f});
  out.push_back({prefix + ".w_o", &w_o});
  out.push_back({prefix + ".w_g", &w_g});
  out.push_back({prefix + ".b_i", &b_i});
  out.push_back({prefix + ".b_f", &b_f});
  out.push_back({prefix + ".b_o", &b_o});
  out.push_back({prefix + ".b_g", &b_g});
}

LstmVars insert(Tape& tape, const LstmParams& p) {
  return {tape.input(p.w_i), tape.input(p.w_f), tape.input(p.w_o), tape.input(p.w_g),
          tape.input(p.b_i), tape.input(p.b_f), tape.input(p.b_o), tape.input(p.b_g)};
}

LstmState zero_state(Tape& tape, Eigen::Index hidden_dim, Eigen::Index batch) {
  return {tape.input(Mat::Zero(hidden_dim, batch)),
          tape.input(Mat::Zero(hidden_dim, batch))};
}

LstmState lstm_step(Tape& tape, const LstmVars& p, Var input, LstmState state) {
  const std::array<Var, 2> xh_parts{input, state.h};
  const Var xh = tape.concat_rows(xh_parts);
  const Var gate_i = tape.logistic(tape.affine(p.w_i, p.b_i, xh));
  const Var gate_f = tape.logistic(tape.affine(p.w_f, p.b_f, xh));
  const Var gate_o = tape.logistic(tape.affine(p.w_o, p.b_o, xh));
  const Var cand = tape.tanh(tape.affine(p.w_g, p.b_g, xh));
  const Var c_next = tape.add(tape.mul(gate_f, state.c), tape.mul(gate_i, cand));
  const Var h_next = tape.mul(gate_o, tape.tanh(c_next));
  return {h_next, c_next};
}

void lstm_step(const LstmParams& p, const Eigen::VectorXd& input,
               Eigen::VectorXd& h, Eigen::VectorXd& c) {
  if (input.size() != p.input_dim || h.size() != p.hidden_dim || c.size() != p.hidden_dim)
    throw std::invalid_argument("lstm: input/state dimension mismatch");
  Eigen::VectorXd xh(p.input_dim + p.hidden_dim);
  xh << input, h;
  auto sigmoid = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  const Eigen::VectorXd gate_i = ((p.w_i * xh + p.b_i).array()).unaryExpr(sigmoid);
  const Eigen::VectorXd gate_f = ((p.w_f * xh + p.b_f).array()).unaryExpr(sigmoid);
  const Eigen::VectorXd gate_o = ((p.w_o * xh + p.b_o).array()).unaryExpr(sigmoid);
  const Eigen::VectorXd cand = (p.w_g * xh + p.b_g).array().tanh();
  c = gate_f.cwiseProduct(c) + gate_i.cwiseProduct(cand);
  h = gate_o.cwiseProduct(c.array().tanh().matrix());
}

}  // namespace skyfall::diff
