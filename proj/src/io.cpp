#include "gcp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gcp/json_util.hpp"
#include "gcp/random.hpp"

namespace gcp {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view all(text);
  std::size_t start = 0;
  while (start <= all.size()) {
    auto nl = all.find('\n', start);
    if (nl == std::string_view::npos) nl = all.size();
    lines.push_back(all.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool is_missing_token(std::string_view s) { return s.empty() || s == "NaN" || s == "nan" || s == "NA"; }

std::optional<double> parse_real(std::string_view s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Dataset parse_dataset(const std::string& text, const std::string& source) {
  const auto lines = lines_of(text);
  std::size_t header_line = 0;
  while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) throw Error(ErrorCode::MalformedRow, source + ": missing header");
  const auto header = split_fields(lines[header_line]);
  std::vector<std::size_t> xcols;
  std::vector<std::size_t> ycols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!header[c].empty() && header[c].front() == 'x') {
      xcols.push_back(c);
    } else if (!header[c].empty() && header[c].front() == 'y') {
      ycols.push_back(c);
    } else {
      throw Error(ErrorCode::MalformedRow,
                  where(source, header_line + 1) + ": column '" + std::string(header[c]) + "' is neither x* nor y*");
    }
  }
  if (xcols.empty() || ycols.empty()) {
    throw Error(ErrorCode::MalformedRow, where(source, header_line + 1) + ": need at least one x and one y column");
  }

  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<std::uint8_t> mask;
  bool any_missing = false;
  std::size_t rows = 0;
  for (std::size_t l = header_line + 1; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    const auto fields = split_fields(lines[l]);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, where(source, l + 1) + ": expected " + std::to_string(header.size()) +
                                               " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t c : xcols) {
      if (is_missing_token(fields[c])) {
        throw Error(ErrorCode::MissingFeature,
                    where(source, l + 1) + ": feature '" + std::string(header[c]) + "' is missing");
      }
      const auto v = parse_real(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedRow, where(source, l + 1) + ": bad number '" + std::string(fields[c]) + "'");
      }
      xs.push_back(*v);
    }
    for (std::size_t c : ycols) {
      if (is_missing_token(fields[c])) {
        ys.push_back(std::numeric_limits<double>::quiet_NaN());
        mask.push_back(0);
        any_missing = true;
        continue;
      }
      const auto v = parse_real(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedRow, where(source, l + 1) + ": bad number '" + std::string(fields[c]) + "'");
      }
      ys.push_back(*v);
      mask.push_back(1);
    }
    ++rows;
  }
  if (!any_missing) mask.clear();
  return Dataset(Matrix(rows, xcols.size(), std::move(xs)), Matrix(rows, ycols.size(), std::move(ys)),
                 std::move(mask));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path), path.string()); }

std::string format_dataset(const Dataset& data) {
  std::string out;
  for (std::size_t j = 0; j < data.feature_dim(); ++j) out += (j ? ",x" : "x") + std::to_string(j + 1);
  for (std::size_t j = 0; j < data.response_dim(); ++j) out += ",y" + std::to_string(j + 1);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.feature_dim(); ++j) {
      if (j) out += ',';
      out += format_real(data.x(i, j));
    }
    for (std::size_t j = 0; j < data.response_dim(); ++j) {
      out += ',';
      if (data.is_observed(i, j)) out += format_real(data.y(i, j));
    }
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) { write_file(path, format_dataset(data)); }

Matrix parse_matrix_csv(const std::string& text, const std::string& source) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  const auto lines = lines_of(text);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    const auto fields = split_fields(lines[l]);
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) throw Error(ErrorCode::MalformedRow, where(source, l + 1) + ": ragged row");
    for (auto f : fields) {
      const auto v = parse_real(f);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedRow, where(source, l + 1) + ": bad number '" + std::string(f) + "'");
      }
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::MalformedRow, source + ": no rows");
  return Matrix(rows, cols, std::move(values));
}

Matrix load_matrix_csv(const std::filesystem::path& path) { return parse_matrix_csv(read_file(path), path.string()); }

Splits split(const Dataset& data, const Fractions& fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw Error(ErrorCode::FractionSumError, "split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::FractionSumError, "split fractions sum to " + format_real(sum) + ", not 1");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, 0x73706c6974);
  std::shuffle(order.begin(), order.end(), rng);
  std::array<std::size_t, 5> bounds{0, 0, 0, 0, n};
  double cum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    cum += fractions[i];
    bounds[i + 1] = std::min(n, static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
  }
  std::array<Dataset, 4> parts;
  for (std::size_t p = 0; p < 4; ++p) {
    const std::span<const std::size_t> rows(order.data() + bounds[p], bounds[p + 1] - bounds[p]);
    parts[p] = data.subset(rows);
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), std::move(parts[3])};
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

/// Object reader that remembers which keys were consumed so the rest can be
/// reported as unknown.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::Config, path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::Config, field(key) + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), field(key));
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string field(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error(ErrorCode::Config, field(key) + ": unknown field");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <class F>
auto with_field(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw Error(ErrorCode::Config, field + ": " + e.what());
    throw;
  }
}

MissingMode missing_from_string(const std::string& s) {
  if (s == "none") return MissingMode::None;
  if (s == "impute") return MissingMode::Impute;
  if (s == "adapted") return MissingMode::Adapted;
  throw Error(ErrorCode::Config, "unknown missing mode '" + s + "'");
}

std::string to_string(MissingMode m) {
  return m == MissingMode::None ? "none" : m == MissingMode::Impute ? "impute" : "adapted";
}

Imputation imputation_from_string(const std::string& s) {
  if (s == "predicted") return Imputation::Predicted;
  if (s == "column_mean") return Imputation::ColumnMean;
  throw Error(ErrorCode::Config, "unknown imputation '" + s + "'");
}

Schedule schedule_from_string(const std::string& s) {
  if (s == "cosine") return Schedule::Cosine;
  if (s == "constant") return Schedule::Constant;
  throw Error(ErrorCode::Config, "unknown schedule '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Config, "config.alpha: must lie in (0, 1)");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw Error(ErrorCode::FractionSumError, "config.data.fractions: must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::FractionSumError, "config.data.fractions: must sum to 1");
  with_field("config.train", [&] {
    fit.train.validate();
    return 0;
  });
  if (score == ScoreKind::Revealed && revealed.empty()) {
    throw Error(ErrorCode::Config, "config.score.revealed: required for the revealed score");
  }
  if (score == ScoreKind::LinearTransform && !transform && !transform_path) {
    throw Error(ErrorCode::Config, "config.score: transform or transform_path required for linear_transform");
  }
  if (conditional_samples == 0 || histogram_bins == 0) {
    throw Error(ErrorCode::Config, "config.eval: sample and bin counts must be positive");
  }
  if (!data_path && synthetic_samples < 8) throw Error(ErrorCode::Config, "config.data.synthetic.samples: too few");
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base) {
  ExperimentConfig c;
  Section root(j, "config");
  const int version = root.get<int>("version", -1);
  if (version != ExperimentConfig::kVersion) {
    throw Error(ErrorCode::Config, "config.version: expected " + std::to_string(ExperimentConfig::kVersion));
  }
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.alpha = root.get<double>("alpha", c.alpha);

  if (root.has("data")) {
    auto data = root.child("data");
    if (data.has("path")) c.data_path = resolve(base, data.get<std::string>("path", ""));
    if (data.has("fractions")) {
      const auto f = data.get<std::vector<double>>("fractions", {});
      if (f.size() != 4) throw Error(ErrorCode::Config, data.field("fractions") + ": need four values");
      std::copy(f.begin(), f.end(), c.fractions.begin());
    }
    if (data.has("synthetic")) {
      auto s = data.child("synthetic");
      auto& g = c.generator;
      g.d = s.get<std::size_t>("d", g.d);
      g.k = s.get<std::size_t>("k", g.k);
      g.anchors = s.get<std::size_t>("anchors", g.anchors);
      if (s.has("noise")) {
        g.noise = with_field(s.field("noise"), [&] { return noise_kind_from_string(s.get<std::string>("noise", "")); });
      }
      g.heteroskedastic = s.get<bool>("heteroskedastic", g.heteroskedastic);
      g.noise_scales = s.get<Vector>("noise_scales", g.noise_scales);
      g.skew_std = s.get<double>("skew_std", g.skew_std);
      g.v_scale = s.get<double>("v_scale", g.v_scale);
      c.synthetic_samples = s.get<std::size_t>("samples", c.synthetic_samples);
      s.finish();
      if (!g.noise_scales.empty() && g.noise_scales.size() != g.k) {
        throw Error(ErrorCode::Config, s.field("noise_scales") + ": need k values");
      }
    }
    data.finish();
  }

  if (root.has("score")) {
    auto s = root.child("score");
    if (s.has("kind")) {
      c.score = with_field(s.field("kind"), [&] { return score_kind_from_string(s.get<std::string>("kind", "")); });
    }
    c.revealed = s.get<Index>("revealed", c.revealed);
    if (s.has("transform_path")) c.transform_path = resolve(base, s.get<std::string>("transform_path", ""));
    if (s.has("transform")) c.transform = with_field(s.field("transform"), [&] { return matrix_from_json(s.raw("transform")); });
    s.finish();
  }

  if (root.has("model")) {
    auto m = root.child("model");
    auto& n = c.fit.network;
    n.mean_hidden = m.get<std::vector<std::size_t>>("mean_hidden", n.mean_hidden);
    n.factor_hidden = m.get<std::vector<std::size_t>>("factor_hidden", n.factor_hidden);
    if (m.has("activation")) {
      n.activation = with_field(m.field("activation"),
                                [&] { return activation_from_string(m.get<std::string>("activation", "")); });
    }
    m.finish();
  }

  if (root.has("train")) {
    auto t = root.child("train");
    auto& tc = c.fit.train;
    tc.epochs = t.get<std::size_t>("epochs", tc.epochs);
    tc.batch_size = t.get<std::size_t>("batch_size", tc.batch_size);
    tc.lr_mean = t.get<double>("lr_mean", tc.lr_mean);
    tc.lr_factor = t.get<double>("lr_factor", tc.lr_factor);
    if (t.has("schedule")) {
      tc.schedule = with_field(t.field("schedule"), [&] { return schedule_from_string(t.get<std::string>("schedule", "")); });
    }
    c.fit.joint = t.get<bool>("joint", c.fit.joint);
    if (t.has("missing")) {
      c.fit.missing = with_field(t.field("missing"), [&] { return missing_from_string(t.get<std::string>("missing", "")); });
    }
    if (t.has("imputation")) {
      c.fit.imputation =
          with_field(t.field("imputation"), [&] { return imputation_from_string(t.get<std::string>("imputation", "")); });
    }
    t.finish();
  }

  if (root.has("missing")) {
    auto m = root.child("missing");
    c.mask_min = m.get<std::size_t>("mask_min", c.mask_min);
    c.mask_max = m.get<std::size_t>("mask_max", c.mask_max);
    m.finish();
  }

  if (root.has("preprocess")) {
    auto p = root.child("preprocess");
    c.quantile_transform = p.get<bool>("quantile_transform", c.quantile_transform);
    p.finish();
  }

  if (root.has("eval")) {
    auto e = root.child("eval");
    c.conditional_points = e.get<std::size_t>("conditional_points", c.conditional_points);
    c.conditional_samples = e.get<std::size_t>("conditional_samples", c.conditional_samples);
    c.histogram_bins = e.get<std::size_t>("histogram_bins", c.histogram_bins);
    e.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json data{{"fractions", c.fractions}};
  if (c.data_path) {
    data["path"] = c.data_path->string();
  } else {
    const auto& g = c.generator;
    data["synthetic"] = {{"d", g.d},
                         {"k", g.k},
                         {"anchors", g.anchors},
                         {"noise", to_string(g.noise)},
                         {"heteroskedastic", g.heteroskedastic},
                         {"noise_scales", g.noise_scales},
                         {"skew_std", g.skew_std},
                         {"v_scale", g.v_scale},
                         {"samples", c.synthetic_samples}};
  }
  nlohmann::json score{{"kind", to_string(c.score)}};
  if (!c.revealed.empty()) score["revealed"] = c.revealed;
  if (c.transform_path) score["transform_path"] = c.transform_path->string();
  if (c.transform) score["transform"] = matrix_to_json(*c.transform);
  const auto& tc = c.fit.train;
  return {{"version", ExperimentConfig::kVersion},
          {"seed", c.seed},
          {"alpha", c.alpha},
          {"data", data},
          {"score", score},
          {"model",
           {{"mean_hidden", c.fit.network.mean_hidden},
            {"factor_hidden", c.fit.network.factor_hidden},
            {"activation", to_string(c.fit.network.activation)}}},
          {"train",
           {{"epochs", tc.epochs},
            {"batch_size", tc.batch_size},
            {"lr_mean", tc.lr_mean},
            {"lr_factor", tc.lr_factor},
            {"schedule", tc.schedule == Schedule::Cosine ? "cosine" : "constant"},
            {"joint", c.fit.joint},
            {"missing", to_string(c.fit.missing)},
            {"imputation", c.fit.imputation == Imputation::Predicted ? "predicted" : "column_mean"}}},
          {"missing", {{"mask_min", c.mask_min}, {"mask_max", c.mask_max}}},
          {"preprocess", {{"quantile_transform", c.quantile_transform}}},
          {"eval",
           {{"conditional_points", c.conditional_points},
            {"conditional_samples", c.conditional_samples},
            {"histogram_bins", c.histogram_bins}}}};
}

}  // namespace gcp
