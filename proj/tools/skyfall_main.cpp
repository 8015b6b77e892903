#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skyfall/dataset_io.hpp"
#include "skyfall/errors.hpp"
#include "skyfall/gan.hpp"
#include "skyfall/gmm.hpp"
#include "skyfall/metrics.hpp"
#include "skyfall/rng.hpp"
#include "skyfall/serialize.hpp"
#include "skyfall/trajectory.hpp"

namespace {

using namespace skyfall;

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

Point3 parse_point3(const std::string& s) {
  Point3 p;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> p.x >> c1 >> p.y >> c2 >> p.z) || c1 != ',' || c2 != ',')
    throw DataError("expected 'x,y,z', got '" + s + "'");
  std::string rest;
  if (in >> rest) throw DataError("trailing characters in point '" + s + "'");
  return p;
}

// Every run logs its resolved configuration, defaults included, so any
// output can be reproduced from the log alone.
class ConfigEcho {
 public:
  explicit ConfigEcho(const std::string& command) { out_ << "skyfall: config: command=" << command; }
  template <typename T>
  ConfigEcho& field(const std::string& key, const T& value) {
    out_ << " " << key << "=" << value;
    return *this;
  }
  void emit() { std::cerr << out_.str() << "\n"; }

 private:
  std::ostringstream out_;
};

std::string file_label(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

std::string model_kind(const std::string& path) {
  return read_json(path).value("kind", "");
}

std::string default_eval_path(std::string model_path) {
  const std::string suffix = ".json";
  if (model_path.size() > suffix.size() &&
      model_path.compare(model_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    model_path.resize(model_path.size() - suffix.size());
  return model_path + "_eval.csv";
}

struct GenArgs {
  std::string kind = "vertical";
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<double> xy_sigma, z_sigma;
  std::optional<std::string> dest;
  std::array<std::optional<std::string>, 4> means;
};

int run_gen(const GenArgs& a) {
  const DatasetKind kind = dataset_kind_from_string(a.kind);
  if (kind == DatasetKind::real)
    throw DataError("gen-data generates vertical or linear datasets only");
  GenSpec spec = kind == DatasetKind::vertical ? GenSpec::vertical_default()
                                               : GenSpec::linear_default();
  if (a.xy_sigma) spec.xy_sigma = *a.xy_sigma;
  if (a.z_sigma) spec.z_sigma = *a.z_sigma;
  if (a.dest) spec.destination = parse_point3(*a.dest);
  for (std::size_t i = 0; i < 4; ++i)
    if (a.means[i]) spec.direction_means[i] = parse_point3(*a.means[i]);

  ConfigEcho echo("gen-data");
  echo.field("kind", a.kind)
      .field("n", a.n)
      .field("seed", a.seed)
      .field("out", a.out)
      .field("xy_sigma", spec.xy_sigma)
      .field("z_sigma", spec.z_sigma)
      .field("threads", thread_count());
  echo.emit();

  const Dataset d = kind == DatasetKind::vertical ? generate_vertical(a.n, a.seed, spec)
                                                  : generate_linear(a.n, a.seed, spec);
  write_dataset(d, a.out);
  std::cerr << "skyfall: wrote " << d.size() << " trajectories to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string method = "gan";
  std::string data;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t holdout = 100;
  std::string eval_out;
  // gmr
  int k = 4;
  EmConfig em;
  // gan
  TrainConfig gan;
};

int run_train(const TrainArgs& a) {
  Dataset all = read_dataset(a.data);
  if (all.size() == 0) throw DataError(a.data + ": dataset is empty");
  const std::size_t holdout = std::min(a.holdout, all.size() - 1);
  auto [train, eval] = split_train_eval(all, holdout, a.seed);

  ConfigEcho echo("train");
  echo.field("method", a.method)
      .field("data", a.data)
      .field("seed", a.seed)
      .field("out", a.out)
      .field("n_total", all.size())
      .field("n_train", train.size())
      .field("n_eval", eval.size());

  const std::string eval_path = a.eval_out.empty() ? default_eval_path(a.out) : a.eval_out;

  if (a.method == "gmr") {
    EmConfig cfg = a.em;
    cfg.seed = a.seed;
    echo.field("k", a.k)
        .field("em_max_iters", cfg.max_iters)
        .field("em_ll_tolerance", cfg.ll_tolerance)
        .field("em_cov_regularization", cfg.cov_regularization)
        .field("em_restarts", cfg.n_restarts);
    echo.emit();
    const GmrModel model = fit_gmr(train, a.k, cfg);
    save_gmr(model, a.out);
  } else if (a.method == "gan") {
    TrainConfig cfg = a.gan;
    cfg.seed = a.seed;
    echo.field("epochs", cfg.epochs)
        .field("batch", cfg.batch)
        .field("lr_g", cfg.lr_g)
        .field("lr_d", cfg.lr_d)
        .field("lambda", cfg.l2_weight)
        .field("best_of_k", cfg.best_of_k)
        .field("noise_dim", cfg.noise_dim)
        .field("d_steps", cfg.d_steps)
        .field("embed_dim", cfg.embed_dim)
        .field("hidden_dim", cfg.hidden_dim)
        .field("mlp_hidden", cfg.mlp_hidden);
    echo.emit();
    const TrainResult result = train_gan(train, cfg, eval.size() ? &eval : nullptr);
    save_gan(result.model, a.out);
  } else {
    throw DataError("unknown training method '" + a.method + "'");
  }

  if (!eval.trajectories.empty()) {
    write_dataset(eval, eval_path);
    std::cerr << "skyfall: wrote holdout evaluation split to " << eval_path << "\n";
  }
  std::cerr << "skyfall: wrote model to " << a.out << "\n";
  return 0;
}

// Predicted future segments for every trajectory of a dataset.
std::vector<Segment> predict_all(const std::string& model_path, const Dataset& data,
                                 std::uint64_t seed, std::string* method_out) {
  const std::string kind = model_kind(model_path);
  std::vector<Segment> preds;
  preds.reserve(data.size());
  if (kind == "gmr") {
    const GmrModel model = load_gmr(model_path);
    for (const Trajectory& t : data.trajectories)
      preds.push_back(gmr_predict(model, split_obs_future(t).first));
  } else if (kind == "gan") {
    const GanModel model = load_gan(model_path);
    for (std::size_t i = 0; i < data.size(); ++i) {
      Rng rng(sub_seed(seed, i));
      preds.push_back(gan_predict(model, split_obs_future(data.trajectories[i]).first, rng));
    }
  } else {
    throw DataError(model_path + ": unknown model kind '" + kind + "'");
  }
  if (method_out != nullptr) *method_out = kind;
  return preds;
}

struct PredictArgs {
  std::string model, data, out;
  std::uint64_t seed = 0;
};

int run_predict(const PredictArgs& a) {
  ConfigEcho echo("predict");
  echo.field("model", a.model).field("data", a.data).field("out", a.out).field("seed", a.seed);
  echo.emit();

  const Dataset data = read_dataset(a.data);
  std::string method;
  const std::vector<Segment> preds = predict_all(a.model, data, a.seed, &method);

  Dataset out;
  out.kind = data.kind;
  out.trajectories.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out.trajectories.push_back(
        join_segments(split_obs_future(data.trajectories[i]).first, preds[i]));
  write_dataset(out, a.out);
  std::cerr << "skyfall: wrote " << method << " predictions for " << out.size()
            << " trajectories to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, pred, data, out_dir, label;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  if (a.model.empty() == a.pred.empty())
    throw DataError("eval needs exactly one of --model or --pred");

  ConfigEcho echo("eval");
  echo.field("model", a.model.empty() ? "-" : a.model)
      .field("pred", a.pred.empty() ? "-" : a.pred)
      .field("data", a.data)
      .field("out_dir", a.out_dir)
      .field("seed", a.seed);
  echo.emit();

  const Dataset data = read_dataset(a.data);
  if (data.size() == 0) throw DataError(a.data + ": dataset is empty");

  std::string method = "external";
  std::vector<Segment> preds;
  if (!a.model.empty()) {
    preds = predict_all(a.model, data, a.seed, &method);
  } else {
    const Dataset pred_data = read_dataset(a.pred);
    if (pred_data.size() != data.size())
      throw DataError(a.pred + ": prediction set size differs from --data");
    for (const Trajectory& t : pred_data.trajectories)
      preds.push_back(split_obs_future(t).second);
  }

  std::vector<Segment> truths;
  truths.reserve(data.size());
  for (const Trajectory& t : data.trajectories)
    truths.push_back(split_obs_future(t).second);

  const std::string label = a.label.empty() ? file_label(a.data) : a.label;
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);

  const AdeReport ade = ade_report(preds, truths, label, method);
  const AxisReport axis = axis_report(preds, truths, label, method);
  const std::string stem = label + "_" + method;
  render_report(ade, ReportFormat::csv, (dir / (stem + "_ade.csv")).string());
  render_report(ade, ReportFormat::json, (dir / (stem + "_ade.json")).string());
  render_report(axis, ReportFormat::csv, (dir / (stem + "_axis.csv")).string());
  render_report(axis, ReportFormat::json, (dir / (stem + "_axis.json")).string());
  std::cerr << "skyfall: wrote ADE and axis reports to " << a.out_dir << "\n";
  std::cout << "point1_ade=" << ade.mean[0] << " point10_ade=" << ade.mean[9] << "\n";
  return 0;
}

struct ScoreArgs {
  std::string model, data, out;
  std::uint64_t seed = 0;
  std::size_t n = 100;
};

int run_score(const ScoreArgs& a) {
  ConfigEcho echo("score");
  echo.field("model", a.model)
      .field("data", a.data)
      .field("out", a.out)
      .field("seed", a.seed)
      .field("n", a.n);
  echo.emit();

  if (model_kind(a.model) != "gan")
    throw DataError(a.model + ": score needs a gan model (discriminator)");
  const GanModel model = load_gan(a.model);
  const Dataset data = read_dataset(a.data);
  const std::size_t n = std::min(a.n, data.size());
  if (n == 0) throw DataError(a.data + ": dataset is empty");

  // Fake trajectories: generated futures appended to true observed segments.
  std::vector<Trajectory> true_set, fake_set;
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& t = data.trajectories[i];
    true_set.push_back(t);
    Rng rng(sub_seed(a.seed, i));
    const Segment obs = split_obs_future(t).first;
    fake_set.push_back(join_segments(obs, gan_predict(model, obs, rng)));
  }

  const ScoreReport report =
      score_report(model.discriminator, model.norm, true_set, fake_set, file_label(a.data));
  render_report(report, ReportFormat::csv, a.out);
  std::cout << "true_mean=" << report.true_mean << " fake_mean=" << report.fake_mean << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "skyfall: synthetic UAV landing-trajectory datasets, GMR and LSTM-GAN "
      "predictors, and displacement-error benchmarks"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic landing dataset");
  cmd_gen->add_option("--kind", gen.kind, "vertical|linear")->required();
  cmd_gen->add_option("--n", gen.n, "number of trajectories")->required();
  cmd_gen->add_option("--seed", gen.seed, "generation seed (default 0)");
  cmd_gen->add_option("--out", gen.out, "output CSV path")->required();
  cmd_gen->add_option("--xy-sigma", gen.xy_sigma, "initial-position sigma, x/y axes");
  cmd_gen->add_option("--z-sigma", gen.z_sigma, "initial-position sigma, z axis");
  cmd_gen->add_option("--dest", gen.dest, "destination 'x,y,z'");
  cmd_gen->add_option("--mean1", gen.means[0], "direction-1 initial mean 'x,y,z'");
  cmd_gen->add_option("--mean2", gen.means[1], "direction-2 initial mean 'x,y,z'");
  cmd_gen->add_option("--mean3", gen.means[2], "direction-3 initial mean 'x,y,z'");
  cmd_gen->add_option("--mean4", gen.means[3], "direction-4 initial mean 'x,y,z'");

  TrainArgs train;
  CLI::App* cmd_train = app.add_subcommand("train", "fit a gmr or gan predictor");
  cmd_train->add_option("--method", train.method, "gmr|gan")->required();
  cmd_train->add_option("--data", train.data, "training dataset CSV")->required();
  cmd_train->add_option("--seed", train.seed, "training seed (default 0)");
  cmd_train->add_option("--out", train.out, "output model JSON path")->required();
  cmd_train->add_option("--holdout", train.holdout, "trajectories held out for evaluation (default 100)");
  cmd_train->add_option("--eval-out", train.eval_out, "holdout CSV path (default <out>_eval.csv)");
  cmd_train->add_option("--k", train.k, "gmr mixture components (default 4)");
  cmd_train->add_option("--em-max-iters", train.em.max_iters, "EM iteration cap");
  cmd_train->add_option("--em-tol", train.em.ll_tolerance, "EM log-likelihood tolerance");
  cmd_train->add_option("--em-reg", train.em.cov_regularization, "EM covariance regularization");
  cmd_train->add_option("--restarts", train.em.n_restarts, "EM restarts");
  cmd_train->add_option("--epochs", train.gan.epochs, "gan training epochs");
  cmd_train->add_option("--batch", train.gan.batch, "gan batch size");
  cmd_train->add_option("--lr-g", train.gan.lr_g, "generator learning rate");
  cmd_train->add_option("--lr-d", train.gan.lr_d, "discriminator learning rate");
  cmd_train->add_option("--lambda", train.gan.l2_weight, "L2 loss weight");
  cmd_train->add_option("--best-of-k", train.gan.best_of_k, "variety-loss sample count");
  cmd_train->add_option("--noise-dim", train.gan.noise_dim, "noise vector dimension");
  cmd_train->add_option("--d-steps", train.gan.d_steps, "discriminator steps per generator step");
  cmd_train->add_option("--embed-dim", train.gan.embed_dim, "embedding dimension");
  cmd_train->add_option("--hidden-dim", train.gan.hidden_dim, "LSTM hidden dimension");
  cmd_train->add_option("--mlp-hidden", train.gan.mlp_hidden, "pooling hidden width");
  cmd_train->add_option("--env", train.gan.environment, "environment factor values");

  PredictArgs predict;
  CLI::App* cmd_predict = app.add_subcommand("predict", "predict future segments");
  cmd_predict->add_option("--model", predict.model, "model JSON path")->required();
  cmd_predict->add_option("--data", predict.data, "dataset CSV with observed segments")->required();
  cmd_predict->add_option("--out", predict.out, "output CSV (observed + predicted)")->required();
  cmd_predict->add_option("--seed", predict.seed, "noise seed for gan predictions");

  EvalArgs eval;
  CLI::App* cmd_eval = app.add_subcommand("eval", "ADE and per-axis reports");
  cmd_eval->add_option("--model", eval.model, "model JSON path");
  cmd_eval->add_option("--pred", eval.pred, "predicted dataset CSV instead of a model");
  cmd_eval->add_option("--data", eval.data, "ground-truth dataset CSV")->required();
  cmd_eval->add_option("--out-dir", eval.out_dir, "report output directory")->required();
  cmd_eval->add_option("--seed", eval.seed, "noise seed for gan predictions");
  cmd_eval->add_option("--label", eval.label, "dataset label (default: data file stem)");

  ScoreArgs score;
  CLI::App* cmd_score = app.add_subcommand("score", "discriminator true/fake score report");
  cmd_score->add_option("--model", score.model, "gan model JSON path")->required();
  cmd_score->add_option("--data", score.data, "dataset CSV of true trajectories")->required();
  cmd_score->add_option("--out", score.out, "output CSV path")->required();
  cmd_score->add_option("--seed", score.seed, "noise seed for fakes");
  cmd_score->add_option("--n", score.n, "set size (default 100)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "skyfall: usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_predict->parsed()) return run_predict(predict);
    if (cmd_eval->parsed()) return run_eval(eval);
    if (cmd_score->parsed()) return run_score(score);
    std::cerr << "skyfall: no command\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "skyfall: io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DataError& e) {
    std::cerr << "skyfall: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "skyfall: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "skyfall: error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
