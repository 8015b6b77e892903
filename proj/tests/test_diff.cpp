#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "grad_check.hpp"
#include "skyfall/adam.hpp"
#include "skyfall/errors.hpp"
#include "skyfall/lstm.hpp"
#include "skyfall/rng.hpp"
#include "skyfall/tape.hpp"

using namespace skyfall;
using diff::Mat;
using diff::Tape;
using diff::Var;
using skyfall::test::max_grad_error;

namespace {

Mat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("all-zero LSTM parameters fix zero state at zero") {
  Rng rng(1);
  diff::LstmParams p = diff::LstmParams::init(2, 3, rng);
  p.w_i.setZero();
  p.w_f.setZero();
  p.w_o.setZero();
  p.w_g.setZero();
  p.b_i.setZero();
  p.b_f.setZero();
  p.b_o.setZero();
  p.b_g.setZero();

  Eigen::VectorXd h = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd input(2);
  input << 4.2, -1.3;
  diff::lstm_step(p, input, h, c);
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm_step output shapes follow the hidden dimension") {
  Rng rng(2);
  const diff::LstmParams p = diff::LstmParams::init(2, 3, rng);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  diff::lstm_step(p, Eigen::Vector2d(0.5, -0.5), h, c);
  CHECK(h.size() == 3);
  CHECK(c.size() == 3);
  CHECK(h.allFinite());

  Eigen::VectorXd wrong = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(diff::lstm_step(p, Eigen::Vector2d(0.0, 0.0), wrong, c),
                  std::invalid_argument);
}

TEST_CASE("tape and plain LSTM steps agree") {
  Rng rng(3);
  const diff::LstmParams p = diff::LstmParams::init(2, 3, rng);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  const Eigen::Vector2d input(0.7, -0.2);
  diff::lstm_step(p, input, h, c);

  Tape tape;
  const diff::LstmVars vars = diff::insert(tape, p);
  diff::LstmState state = diff::zero_state(tape, 3, 1);
  state = diff::lstm_step(tape, vars, tape.input(input), state);
  CHECK((tape.value(state.h).col(0) - h).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((tape.value(state.c).col(0) - c).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("affine with identity weights is the identity") {
  Tape tape;
  const Var w = tape.input(Mat::Identity(3, 3));
  const Var b = tape.input(Mat::Zero(3, 1));
  Mat x(3, 2);
  x << 1, 4, 2, 5, 3, 6;
  const Var y = tape.affine(w, b, tape.input(x));
  CHECK((tape.value(y) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pointwise nonlinearities at zero") {
  Tape tape;
  const Var x = tape.input(Mat::Zero(2, 2));
  CHECK(tape.value(tape.tanh(x)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tape.value(tape.logistic(x)).array() - 0.5).abs().maxCoeff() == 0.0);
  CHECK(tape.value(tape.relu(x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient check: affine and pointwise ops") {
  Rng rng(4);
  const std::vector<Mat> params{random_mat(3, 4, rng), random_mat(3, 1, rng),
                                random_mat(4, 5, rng)};

  auto with_activation = [](auto activation) {
    return [activation](Tape& t, const std::vector<Var>& vars) {
      const Var y = activation(t, t.affine(vars[0], vars[1], vars[2]));
      return t.sumsq(y);
    };
  };

  CHECK(max_grad_error(params, with_activation([](Tape& t, Var v) { return t.tanh(v); })) <
        1e-4);
  CHECK(max_grad_error(params, with_activation([](Tape& t, Var v) {
          return t.logistic(v);
        })) < 1e-4);
  CHECK(max_grad_error(params, with_activation([](Tape& t, Var v) {
          return t.leaky_relu(v, 0.1);
        })) < 1e-4);
  CHECK(max_grad_error(params, with_activation([](Tape& t, Var v) {
          return t.relu(v);
        })) < 1e-4);
}

TEST_CASE("gradient check: 10-step LSTM unroll") {
  Rng rng(5);
  diff::LstmParams p = diff::LstmParams::init(2, 3, rng);
  std::vector<Mat> params;
  for (const diff::ParamRef& r : [&] {
         std::vector<diff::ParamRef> refs;
         p.collect_params("lstm", refs);
         return refs;
       }())
    params.push_back(*r.value);

  std::vector<Mat> inputs;
  for (int t = 0; t < 10; ++t) inputs.push_back(random_mat(2, 1, rng, 0.5));

  auto build = [&inputs](Tape& t, const std::vector<Var>& vars) {
    const diff::LstmVars lv{vars[0], vars[1], vars[2], vars[3],
                            vars[4], vars[5], vars[6], vars[7]};
    diff::LstmState state = diff::zero_state(t, 3, 1);
    Var acc;
    for (int step = 0; step < 10; ++step) {
      state = diff::lstm_step(t, lv, t.input(inputs[step]), state);
      const Var sq = t.sumsq(state.h);
      acc = (step == 0) ? sq : t.add(acc, sq);
    }
    return acc;
  };

  CHECK(max_grad_error(params, build) < 1e-4);
}

TEST_CASE("backward of a pure quadratic returns the input exactly") {
  Rng rng(6);
  const Mat x = random_mat(4, 3, rng);
  Tape tape;
  const Var vx = tape.input(x);
  const Var loss = tape.scale(tape.sumsq(vx), 0.5);
  tape.backward(loss);
  CHECK((tape.grad(vx) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameters the loss does not touch get exactly zero gradient") {
  Rng rng(7);
  Tape tape;
  const Var used = tape.input(random_mat(2, 2, rng));
  const Var unused = tape.input(random_mat(3, 3, rng));
  tape.backward(tape.sumsq(used));
  CHECK(tape.grad(unused).cwiseAbs().maxCoeff() == 0.0);
  CHECK(tape.grad(unused).rows() == 3);
}

TEST_CASE("backward misuse is rejected") {
  Rng rng(8);
  Tape tape;
  const Var x = tape.input(random_mat(2, 2, rng));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);  // non-scalar loss
  const Var loss = tape.sumsq(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);  // no reset between
  CHECK_THROWS_AS(tape.grad(Var{}), std::logic_error);      // stale handle
}

TEST_CASE("gradient accumulation is linear in the loss") {
  Rng rng(9);
  const Mat x = random_mat(3, 3, rng);
  const double a = 1.7, b = -0.4;

  auto grad_of = [&x](auto make_loss) {
    Tape t;
    const Var vx = t.input(x);
    t.backward(make_loss(t, vx));
    return Mat(t.grad(vx));
  };

  const Mat g1 = grad_of([](Tape& t, Var v) { return t.sumsq(v); });
  const Mat g2 = grad_of([](Tape& t, Var v) { return t.sum(t.tanh(v)); });
  const Mat combined = grad_of([&](Tape& t, Var v) {
    return t.add(t.scale(t.sumsq(v), a), t.scale(t.sum(t.tanh(v)), b));
  });
  CHECK((combined - (a * g1 + b * g2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(10);
  const Mat w = random_mat(4, 4, rng);
  const Mat x = random_mat(4, 2, rng);
  auto run = [&] {
    Tape t;
    return Mat(t.value(t.tanh(t.matmul(t.input(w), t.input(x)))));
  };
  const Mat first = run();
  const Mat second = run();
  CHECK((first - second).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite results raise an error naming the op") {
  Tape tape;
  const Var big = tape.input(Mat::Constant(1, 1, 1e308));
  try {
    tape.scale(big, 10.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
  Mat theta = Mat::Constant(2, 2, 3.0);
  const Mat zero = Mat::Zero(2, 2);
  diff::Adam adam;
  std::vector<diff::ParamRef> refs{{"theta", &theta}};
  adam.step(refs, std::vector<const Mat*>{&zero});
  CHECK((theta.array() == 3.0).all());
}

TEST_CASE("adam: first step from zero state moves by ~lr against the gradient") {
  Mat theta = Mat::Zero(1, 1);
  const Mat g = Mat::Constant(1, 1, 1.0);
  diff::AdamConfig cfg;
  diff::Adam adam(cfg);
  std::vector<diff::ParamRef> refs{{"theta", &theta}};
  adam.step(refs, std::vector<const Mat*>{&g});
  const double expected = -cfg.lr / (1.0 + cfg.epsilon);
  CHECK(std::fabs(theta(0, 0) - expected) <= 1e-15);
}

TEST_CASE("adam: constant gradient gives steps bounded by ~lr") {
  Mat theta = Mat::Zero(1, 1);
  const Mat g = Mat::Constant(1, 1, 2.5);
  diff::AdamConfig cfg;
  diff::Adam adam(cfg);
  std::vector<diff::ParamRef> refs{{"theta", &theta}};
  double prev = 0.0;
  for (int i = 0; i < 200; ++i) {
    adam.step(refs, std::vector<const Mat*>{&g});
    const double step = theta(0, 0) - prev;
    prev = theta(0, 0);
    CHECK(std::fabs(step) <= cfg.lr * 1.000001);
    CHECK(step < 0.0);
  }
  // After warmup the step settles at lr within a tiny epsilon slack.
  CHECK(std::fabs(prev + 200.0 * cfg.lr) <= 200.0 * cfg.lr * 1e-6);
}
