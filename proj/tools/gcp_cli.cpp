// gcp: command-line driver for Gaussian conformal prediction experiments.
//
//   gcp <synth|train|calibrate|predict|eval|reveal|project|missing>
//       [--config cfg.json] [--out dir] [--seed n] [--model model.json]
//       [--predictor predictor.json] [--input rows.csv]
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure, 1 anything unexpected.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcp/conformal.hpp"
#include "gcp/eval.hpp"
#include "gcp/io.hpp"
#include "gcp/json_util.hpp"
#include "gcp/stats.hpp"
#include "gcp/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string command;
  std::optional<fs::path> config_path;
  fs::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> model_path;
  std::optional<fs::path> predictor_path;
  std::optional<fs::path> input;
};

struct Prepared {
  gcp::Splits splits;
  std::optional<gcp::GeneratorSpec> generator;
  std::optional<gcp::QuantileTransform> qx;
  std::optional<gcp::QuantileTransform> qy;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw gcp::Error(gcp::ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw gcp::Error(gcp::ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw gcp::Error(gcp::ErrorCode::Io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw gcp::Error(gcp::ErrorCode::Config, path.string() + ": " + e.what());
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

gcp::GeneratorSpec generator_for(const gcp::ExperimentConfig& cfg) { return gcp::make_generator(cfg.generator, cfg.seed); }

Prepared prepare(const gcp::ExperimentConfig& cfg) {
  Prepared p;
  gcp::Dataset data;
  if (cfg.data_path) {
    data = gcp::load_dataset(*cfg.data_path);
  } else {
    p.generator = generator_for(cfg);
    data = gcp::sample(*p.generator, cfg.synthetic_samples, cfg.seed);
  }
  p.splits = gcp::split(data, cfg.fractions, cfg.seed);
  if (cfg.quantile_transform) {
    p.qx = gcp::QuantileTransform::fit(p.splits.train.x);
    p.qy = gcp::QuantileTransform::fit(p.splits.train.y);
    for (gcp::Dataset* d : {&p.splits.train, &p.splits.val, &p.splits.cal, &p.splits.test}) {
      d->x = p.qx->apply(d->x);
      d->y = p.qy->apply(d->y);
    }
  }
  return p;
}

std::string history_csv(const gcp::FitResult& fit) {
  std::string out = "stage,epoch,train_loss,val_loss\n";
  const auto add = [&](const char* stage, const gcp::TrainResult& r) {
    for (const auto& h : r.history) {
      out += std::string(stage) + "," + std::to_string(h.epoch) + "," + gcp::format_real(h.train_loss) + "," +
             gcp::format_real(h.val_loss) + "\n";
    }
  };
  if (fit.mean_stage) add("mean", *fit.mean_stage);
  add(fit.mean_stage ? "covariance" : "joint", fit.covariance_stage);
  return out;
}

std::shared_ptr<const gcp::GaussianDensityModel> obtain_model(const Options& opt, const gcp::ExperimentConfig& cfg,
                                                              const Prepared& p, json& results) {
  if (opt.model_path) {
    return std::make_shared<const gcp::GaussianDensityModel>(gcp::load_model(*opt.model_path));
  }
  auto fit = gcp::fit_model(p.splits.train, p.splits.val, cfg.fit, cfg.seed);
  gcp::save_model(*fit.model, opt.out / "model.json");
  write_text(opt.out / "train_history.csv", history_csv(fit));
  results["training"] = {{"best_epoch", fit.covariance_stage.best_epoch},
                         {"best_val_loss", fit.covariance_stage.best_val_loss}};
  return fit.model;
}

gcp::Matrix load_transform(const gcp::ExperimentConfig& cfg, std::size_t k) {
  gcp::Matrix m = cfg.transform ? *cfg.transform : gcp::load_matrix_csv(*cfg.transform_path);
  if (m.cols() != k) throw gcp::Error(gcp::ErrorCode::Config, "config.score.transform: need k columns");
  if (m.rows() == 0 || m.rows() > k) {
    throw gcp::Error(gcp::ErrorCode::RankDeficientTransform, "transform must have between 1 and k rows");
  }
  try {
    const auto mmt = gcp::matmul(m, gcp::transpose(m));
    double scale = 0.0;
    for (std::size_t i = 0; i < mmt.rows(); ++i) scale = std::max(scale, mmt(i, i));
    (void)gcp::cholesky(gcp::scale(mmt, 1.0 / scale));
  } catch (const gcp::Error&) {
    throw gcp::Error(gcp::ErrorCode::RankDeficientTransform, "transform is not of full row rank");
  }
  return m;
}

gcp::ScoreSpec score_spec(const gcp::ExperimentConfig& cfg, gcp::ScoreKind kind,
                          const gcp::GaussianDensityModel& model, const Prepared& p) {
  switch (kind) {
    case gcp::ScoreKind::Ecm:
      return gcp::ScoreSpec::ecm_score(gcp::fit_ecm(model, p.splits.train));
    case gcp::ScoreKind::Revealed:
      return gcp::ScoreSpec::revealed_outputs(cfg.revealed);
    case gcp::ScoreKind::LinearTransform:
      return gcp::ScoreSpec::linear_transform(load_transform(cfg, model.output_dim()));
    default:
      return {kind, {}, {}, {}};
  }
}

json volume_json(const gcp::CalibratedPredictor& cp, const gcp::Matrix& x, const gcp::Matrix& y) {
  try {
    return gcp::mean_normalized_volume(cp, x, y);
  } catch (const gcp::Error& e) {
    if (e.code() != gcp::ErrorCode::InfiniteSet) throw;
    return "inf";
  }
}

json coverage_block(const gcp::CalibratedPredictor& cp, const gcp::Matrix& x, const gcp::Matrix& y) {
  return {{"score", gcp::to_string(cp.spec.kind)},
          {"threshold", gcp::real_to_json(cp.threshold)},
          {"calibration_size", cp.calibration_size},
          {"test_size", x.rows()},
          {"marginal_coverage", gcp::marginal_coverage(cp, x, y)},
          {"mean_normalized_volume", volume_json(cp, x, y)}};
}

// ---------------------------------------------------------------------------
// Subcommands

json cmd_synth(const Options& opt, const gcp::ExperimentConfig& cfg) {
  if (cfg.data_path) throw gcp::Error(gcp::ErrorCode::Config, "config.data.path: synth generates its own data");
  const auto gen = generator_for(cfg);
  const auto data = gcp::sample(gen, cfg.synthetic_samples, cfg.seed);
  gcp::save_dataset(data, opt.out / "data.csv");
  write_json(opt.out / "generator.json", gcp::to_json(gen));
  return {{"rows", data.size()}, {"d", data.feature_dim()}, {"k", data.response_dim()}};
}

json cmd_train(const Options& opt, const gcp::ExperimentConfig& cfg) {
  const auto p = prepare(cfg);
  auto fit = gcp::fit_model(p.splits.train, p.splits.val, cfg.fit, cfg.seed);
  gcp::save_model(*fit.model, opt.out / "model.json");
  write_text(opt.out / "train_history.csv", history_csv(fit));
  json r{{"train_size", p.splits.train.size()},
         {"val_size", p.splits.val.size()},
         {"best_epoch", fit.covariance_stage.best_epoch},
         {"best_val_loss", fit.covariance_stage.best_val_loss}};
  if (fit.mean_stage) r["mean_best_val_loss"] = fit.mean_stage->best_val_loss;
  return r;
}

json cmd_calibrate(const Options& opt, const gcp::ExperimentConfig& cfg) {
  const auto p = prepare(cfg);
  json r;
  const auto model = obtain_model(opt, cfg, p, r);
  const auto cp = gcp::calibrate(model, score_spec(cfg, cfg.score, *model, p), p.splits.cal.x, p.splits.cal.y,
                                 cfg.alpha);
  write_json(opt.out / "predictor.json", gcp::to_json(cp));
  r["score"] = gcp::to_string(cp.spec.kind);
  r["threshold"] = gcp::real_to_json(cp.threshold);
  r["alpha"] = cp.alpha;
  r["calibration_size"] = cp.calibration_size;
  return r;
}

json cmd_predict(const Options& opt, const gcp::ExperimentConfig&) {
  if (!opt.input) throw gcp::Error(gcp::ErrorCode::Config, "--input: required for predict");
  const fs::path predictor = opt.predictor_path.value_or(opt.out / "predictor.json");
  const auto cp = gcp::predictor_from_json(read_json(predictor));
  // rows: a dataset CSV (x*, y* columns) or a bare feature matrix
  gcp::Matrix x;
  gcp::Matrix y;
  std::ifstream in(*opt.input);
  if (!in) throw gcp::Error(gcp::ErrorCode::Io, "cannot read " + opt.input->string());
  std::string first;
  std::getline(in, first);
  if (first.find('x') != std::string::npos && first.find('y') != std::string::npos) {
    const auto d = gcp::load_dataset(*opt.input);
    x = d.x;
    y = d.y;
  } else if (first.find('x') != std::string::npos) {
    std::ostringstream rest;
    rest << in.rdbuf();
    x = gcp::parse_matrix_csv(rest.str(), opt.input->string());
  } else {
    x = gcp::load_matrix_csv(*opt.input);
  }
  if (cp.spec.kind == gcp::ScoreKind::Revealed && y.rows() != x.rows()) {
    throw gcp::Error(gcp::ErrorCode::MissingFeature, "revealed predictor needs y columns with revealed values");
  }
  auto sets = json::array();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto yi = y.rows() == x.rows() ? y.row(i) : std::span<const double>{};
    const auto set = gcp::predict_set(cp, x.row(i), yi);
    auto record = gcp::set_to_json(set, cp);
    std::cout << record.dump() << '\n';
    sets.push_back(std::move(record));
  }
  write_json(opt.out / "sets.json", sets);
  return {{"rows", x.rows()}, {"score", gcp::to_string(cp.spec.kind)}};
}

json cmd_eval(const Options& opt, const gcp::ExperimentConfig& cfg) {
  const auto p = prepare(cfg);
  json r;
  const auto model = obtain_model(opt, cfg, p, r);
  const auto cp = gcp::calibrate(model, score_spec(cfg, cfg.score, *model, p), p.splits.cal.x, p.splits.cal.y,
                                 cfg.alpha);
  write_json(opt.out / "predictor.json", gcp::to_json(cp));
  r["result"] = coverage_block(cp, p.splits.test.x, p.splits.test.y);
  if (p.generator && !cfg.quantile_transform) {
    const std::size_t points = std::min(cfg.conditional_points, p.splits.test.size());
    std::vector<double> cc;
    std::string csv = "index,conditional_coverage\n";
    for (std::size_t i = 0; i < points; ++i) {
      cc.push_back(gcp::conditional_coverage(cp, *p.generator, p.splits.test.x.row(i), cfg.conditional_samples,
                                             cfg.seed * 1000003 + i));
      csv += std::to_string(i) + "," + gcp::format_real(cc.back()) + "\n";
    }
    write_text(opt.out / "conditional_coverage.csv", csv);
    const auto hist = gcp::coverage_histogram(cc, cfg.histogram_bins);
    std::string hcsv = "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < hist.size(); ++b) {
      hcsv += gcp::format_real(static_cast<double>(b) / hist.size()) + "," +
              gcp::format_real(static_cast<double>(b + 1) / hist.size()) + "," + std::to_string(hist[b]) + "\n";
    }
    write_text(opt.out / "histogram.csv", hcsv);
    r["conditional_coverage"] = {{"points", points},
                                 {"samples_per_point", cfg.conditional_samples},
                                 {"mean", gcp::mean(cc)},
                                 {"std", gcp::stddev(cc)}};
  }
  return r;
}

json cmd_reveal(const Options& opt, const gcp::ExperimentConfig& cfg) {
  if (cfg.revealed.empty()) throw gcp::Error(gcp::ErrorCode::Config, "config.score.revealed: required for reveal");
  const auto p = prepare(cfg);
  json r;
  const auto model = obtain_model(opt, cfg, p, r);
  const auto& cal = p.splits.cal;
  const auto& test = p.splits.test;
  const auto bayes = gcp::calibrate(model, gcp::ScoreSpec::revealed_outputs(cfg.revealed), cal.x, cal.y, cfg.alpha);
  const auto mah = gcp::calibrate(model, gcp::ScoreSpec::mahalanobis(), cal.x, cal.y, cfg.alpha);
  write_json(opt.out / "predictor.json", gcp::to_json(bayes));

  const auto hidden = gcp::complement(cfg.revealed, model->output_dim());
  std::size_t hits = 0;
  double vol = 0.0;
  bool infinite = false;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto pred = model->predict(test.x.row(i));
    const auto yr = gcp::subvector(test.y.row(i), cfg.revealed);
    const auto set = gcp::mahalanobis_section(pred, mah.threshold, cfg.revealed, yr);
    hits += set.contains(gcp::subvector(test.y.row(i), hidden)) ? 1 : 0;
    if (set.whole_space()) {
      infinite = true;
    } else {
      vol += gcp::normalized_volume(set);
    }
  }
  r["revealed"] = cfg.revealed;
  r["bayes"] = coverage_block(bayes, test.x, test.y);
  r["section"] = {{"score", "mahalanobis_section"},
                  {"threshold", gcp::real_to_json(mah.threshold)},
                  {"marginal_coverage", static_cast<double>(hits) / static_cast<double>(test.size())},
                  {"mean_normalized_volume", infinite ? json("inf") : json(vol / static_cast<double>(test.size()))}};
  return r;
}

json cmd_project(const Options& opt, const gcp::ExperimentConfig& cfg) {
  if (!cfg.transform && !cfg.transform_path) {
    throw gcp::Error(gcp::ErrorCode::Config, "config.score: transform or transform_path required for project");
  }
  const auto p = prepare(cfg);
  json r;
  const auto model = obtain_model(opt, cfg, p, r);
  const auto spec = score_spec(cfg, gcp::ScoreKind::LinearTransform, *model, p);
  const auto cp = gcp::calibrate(model, spec, p.splits.cal.x, p.splits.cal.y, cfg.alpha);
  write_json(opt.out / "predictor.json", gcp::to_json(cp));
  r["result"] = coverage_block(cp, p.splits.test.x, p.splits.test.y);
  r["transform"] = gcp::matrix_to_json(cp.spec.transform);
  return r;
}

json cmd_missing(const Options& opt, const gcp::ExperimentConfig& cfg) {
  const auto p = prepare(cfg);
  json r;
  const auto model = obtain_model(opt, cfg, p, r);
  const std::size_t k = model->output_dim();
  const std::size_t hi = cfg.mask_max == 0 ? k - 1 : cfg.mask_max;
  if (k < 2 && cfg.mask_max == 0) throw gcp::Error(gcp::ErrorCode::Config, "config.missing: k must be at least 2");
  gcp::Dataset cal = p.splits.cal;
  gcp::Dataset test_masked = p.splits.test;
  gcp::mask_random_outputs(cal, cfg.mask_min, hi, cfg.seed * 2 + 1);
  gcp::mask_random_outputs(test_masked, cfg.mask_min, hi, cfg.seed * 2 + 2);
  const auto cp = gcp::calibrate(model, gcp::ScoreSpec::missing(), cal.x, cal.y, cfg.alpha);
  write_json(opt.out / "predictor.json", gcp::to_json(cp));
  r["masked"] = {{"threshold", gcp::real_to_json(cp.threshold)},
                 {"calibration_size", cp.calibration_size},
                 {"marginal_coverage", gcp::marginal_coverage(cp, test_masked.x, test_masked.y)}};
  const bool complete = p.splits.test.missing_count() == 0;
  if (complete) {
    r["full_output"] = {{"marginal_coverage", gcp::full_section_coverage(cp, p.splits.test.x, p.splits.test.y)},
                        {"mean_normalized_volume", volume_json(cp, p.splits.test.x, p.splits.test.y)}};
  }
  return r;
}

int exit_code(const gcp::Error& e) {
  switch (e.category()) {
    case gcp::ErrorCategory::Config:
      return 2;
    case gcp::ErrorCategory::Data:
      return 3;
    case gcp::ErrorCategory::Numeric:
      return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian conformal prediction experiments"};
  app.require_subcommand(1, 1);
  Options opt;
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::string model;
  std::string predictor;
  std::string input;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "generate a synthetic dataset and its generator spec"},
      {"train", "fit the Gaussian model"},
      {"calibrate", "fit (or load) a model and calibrate the configured score"},
      {"predict", "print prediction sets for the feature rows in --input"},
      {"eval", "coverage, volume and (synthetic) conditional coverage"},
      {"reveal", "sets for hidden outputs given revealed ones"},
      {"project", "sets for a linear transform of the outputs"},
      {"missing", "calibration and evaluation with masked outputs"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "experiment configuration (JSON)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "overrides the configured seed");
    sub->add_option("--model", model, "use this trained model instead of training");
    if (name == "predict") {
      sub->add_option("--predictor", predictor, "calibrated predictor (default <out>/predictor.json)");
      sub->add_option("--input", input, "CSV of feature rows")->required();
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  for (const auto* sub : app.get_subcommands()) {
    opt.command = sub->get_name();
    if (sub->count("--seed")) opt.seed = seed;
  }
  if (!config.empty()) opt.config_path = config;
  if (!model.empty()) opt.model_path = model;
  if (!predictor.empty()) opt.predictor_path = predictor;
  if (!input.empty()) opt.input = input;
  opt.out = out;

  try {
    gcp::ExperimentConfig cfg = opt.config_path ? gcp::load_config(*opt.config_path)
                                                : gcp::parse_config(json{{"version", gcp::ExperimentConfig::kVersion}});
    if (opt.seed) cfg.seed = *opt.seed;
    fs::create_directories(opt.out);

    json result;
    if (opt.command == "synth") result = cmd_synth(opt, cfg);
    else if (opt.command == "train") result = cmd_train(opt, cfg);
    else if (opt.command == "calibrate") result = cmd_calibrate(opt, cfg);
    else if (opt.command == "predict") result = cmd_predict(opt, cfg);
    else if (opt.command == "eval") result = cmd_eval(opt, cfg);
    else if (opt.command == "reveal") result = cmd_reveal(opt, cfg);
    else if (opt.command == "project") result = cmd_project(opt, cfg);
    else result = cmd_missing(opt, cfg);

    result["command"] = opt.command;
    result["seed"] = cfg.seed;
    write_json(opt.out / "results.json", result);
    write_json(opt.out / "metadata.json",
               {{"command", opt.command}, {"timestamp", utc_timestamp()}, {"config", gcp::to_json(cfg)}});
    if (opt.command != "predict") std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const gcp::Error& e) {
    std::cerr << "gcp " << opt.command << ": " << e.what() << '\n';
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "gcp " << opt.command << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "gcp " << opt.command << ": unexpected failure: " << e.what() << '\n';
    return 1;
  }
}
