#include "arks/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "arks/errors.hpp"
#include "arks/random.hpp"

namespace arks {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view cell, std::size_t line, std::size_t col) {
  double v = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw ParseError("column " + std::to_string(col + 1) + ": '" + std::string(cell) + "' is not a number", line);
  }
  return v;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<Sample> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0, width = 0;
  bool header = false;
  std::vector<Sample> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (!header) {
      if (cells.size() < 2) throw ParseError("header needs at least one feature and a target", lineno);
      width = cells.size();
      header = true;
      continue;
    }
    if (cells.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()), lineno);
    }
    Sample s;
    s.x.reserve(width - 1);
    for (std::size_t c = 0; c + 1 < width; ++c) s.x.push_back(parse_number(cells[c], lineno, c));
    s.y = parse_number(cells[width - 1], lineno, width - 1);
    out.push_back(std::move(s));
  }
  if (!header) throw ParseError("empty file", lineno == 0 ? 1 : lineno);
  if (out.empty()) throw ParseError("no data rows after the header", lineno);
  return out;
}

std::vector<Sample> load_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

std::string format_csv(const std::vector<Sample>& data) {
  std::string out;
  const std::size_t d = data.empty() ? 0 : data[0].x.size();
  for (std::size_t j = 0; j < d; ++j) out += "x" + std::to_string(j) + ",";
  out += "y\n";
  for (const Sample& s : data) {
    if (s.x.size() != d) throw ShapeError("samples differ in feature count");
    for (double v : s.x) out += fmt(v) + ",";
    out += fmt(s.y) + "\n";
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const std::vector<Sample>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << format_csv(data);
  if (!f) throw IoError("write failed for " + path.string());
}

Standardizer Standardizer::fit(const std::vector<Sample>& train) {
  if (train.empty()) throw DomainError("cannot standardize with an empty split");
  const std::size_t d = train[0].x.size();
  Standardizer st{Vector(d, 0.0), Vector(d, 0.0)};
  for (const Sample& s : train) {
    for (std::size_t j = 0; j < d; ++j) st.mean[j] += s.x[j];
  }
  const auto n = static_cast<double>(train.size());
  for (double& m : st.mean) m /= n;
  for (const Sample& s : train) {
    for (std::size_t j = 0; j < d; ++j) st.scale[j] += (s.x[j] - st.mean[j]) * (s.x[j] - st.mean[j]);
  }
  // constant columns are centred but not scaled
  for (double& v : st.scale) v = v > 0.0 ? std::sqrt(v / n) : 1.0;
  return st;
}

std::vector<Sample> Standardizer::apply(const std::vector<Sample>& data) const {
  std::vector<Sample> out = data;
  for (Sample& s : out) {
    if (s.x.size() != mean.size()) throw ShapeError("feature count differs from the fitted split");
    for (std::size_t j = 0; j < s.x.size(); ++j) s.x[j] = (s.x[j] - mean[j]) / scale[j];
  }
  return out;
}

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::two_moons: return "two-moons";
    case SyntheticKind::linear_regression: return "linear-regression";
    case SyntheticKind::rls: return "rls";
  }
  return "?";
}

SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "two-moons") return SyntheticKind::two_moons;
  if (s == "linear-regression") return SyntheticKind::linear_regression;
  if (s == "rls") return SyntheticKind::rls;
  throw ConfigError("unknown synthetic data kind '" + s + "'");
}

void SyntheticSpec::validate() const {
  if (n_train < 1) throw ConfigError("synthetic n_train must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("synthetic noise must be >= 0");
  if (dim < 1 || rls_rows < 1) throw ConfigError("synthetic dimensions must be >= 1");
}

std::vector<Sample> make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool upper = i % 2 == 0;
    const double t = std::numbers::pi * rng.uniform();
    Vector x = upper ? Vector{std::cos(t), std::sin(t)} : Vector{1.0 - std::cos(t), 0.5 - std::sin(t)};
    for (double& v : x) v += noise * rng.normal();
    out.push_back({std::move(x), upper ? 0.0 : 1.0});
  }
  return out;
}

std::vector<Sample> make_linear_regression(std::size_t n, std::size_t dim, double noise, std::uint64_t seed) {
  Rng wrng(derive_seed(seed, 0));
  Vector w(dim);
  for (double& v : w) v = wrng.normal();
  Rng rng(derive_seed(seed, 1));
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s{Vector(dim), 0.0};
    for (std::size_t j = 0; j < dim; ++j) {
      s.x[j] = rng.normal();
      s.y += w[j] * s.x[j];
    }
    s.y += noise * rng.normal();
    out.push_back(std::move(s));
  }
  return out;
}

RlsProblem make_rls_problem(std::size_t rows, std::size_t cols, double a1_scale, std::uint64_t seed) {
  Rng rng(seed);
  Vector a0(rows * cols), a1(rows * cols), b(rows);
  for (double& v : a0) v = rng.normal();
  for (double& v : a1) v = a1_scale * rng.normal();
  for (double& v : b) v = rng.normal();
  RlsProblem p{Tensor::matrix(rows, cols, std::move(a0)), Tensor::matrix(rows, cols, std::move(a1)), std::move(b)};
  p.validate();
  return p;
}

std::vector<double> sample_xi(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform(-1.0, 1.0);
  return out;
}

Dataset make_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Dataset d;
  switch (spec.kind) {
    case SyntheticKind::two_moons:
      d.train = make_two_moons(spec.n_train, spec.noise, derive_seed(spec.seed, 1));
      if (spec.n_test > 0) d.test = make_two_moons(spec.n_test, spec.noise, derive_seed(spec.seed, 2));
      break;
    case SyntheticKind::linear_regression: {
      // one draw so train and test share w
      auto all = make_linear_regression(spec.n_train + spec.n_test, spec.dim, spec.noise, spec.seed);
      d.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.n_train));
      d.test.assign(all.begin() + static_cast<std::ptrdiff_t>(spec.n_train), all.end());
      break;
    }
    case SyntheticKind::rls: {
      // xi samples as 1-d features with a zero target
      for (double xi : sample_xi(spec.n_train, derive_seed(spec.seed, 1))) d.train.push_back({{xi}, 0.0});
      for (double xi : sample_xi(spec.n_test, derive_seed(spec.seed, 2))) d.test.push_back({{xi}, 0.0});
      break;
    }
  }
  return d;
}

}  // namespace arks
