#pragma once

#include <string>
#include <vector>

#include "skyfall/rng.hpp"
#include "skyfall/tape.hpp"

namespace skyfall::diff {

// Named view of one learnable matrix; the registry order is the
// contract shared by the optimizer, the tape and serialization.
struct ParamRef {
  std::string name;
  Mat* value = nullptr;
};

struct LstmParams {
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;
  // Gate weights act on the concatenated [input; hidden] vector.
  Mat w_i, w_f, w_o, w_g;  // hidden x (input + hidden)
  Mat b_i, b_f, b_o, b_g;  // hidden x 1

  // Weights uniform in +-1/sqrt(fan_in); forget-gate bias starts at 1.
  static LstmParams init(Eigen::Index input_dim, Eigen::Index hidden_dim, Rng& rng);

  void validate() const;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
};

// Tape handles for one cell's parameters, inserted once per tape and
// shared by every time step.
struct LstmVars {
  Var w_i, w_f, w_o, w_g, b_i, b_f, b_o, b_g;
};

LstmVars insert(Tape& tape, const LstmParams& p);

struct LstmState {
  Var h, c;
};

LstmState zero_state(Tape& tape, Eigen::Index hidden_dim, Eigen::Index batch);

// One recurrence step: logistic input/forget/output gates, tanh
// candidate, c' = f.c + i.g, h' = o.tanh(c'). Columns are batch elements.
LstmState lstm_step(Tape& tape, const LstmVars& p, Var input, LstmState state);

// Plain forward step (no tape); reference path for inference and tests.
void lstm_step(const LstmParams& p, const Eigen::VectorXd& input,
               Eigen::VectorXd& h, Eigen::VectorXd& c);

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);

}  // namespace skyfall::diff
