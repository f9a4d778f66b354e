#include "ectr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ectr/error.hpp"
#include "ectr/rng.hpp"

namespace ectr {

Batch Batch::select(std::span<const std::size_t> rows) const {
  Batch out;
  out.x = x.select_rows(rows);
  out.aux = aux.select_rows(rows);
  out.y.reserve(rows.size());
  for (auto r : rows) out.y.push_back(y[r]);
  if (has_env_ids()) {
    out.env.reserve(rows.size());
    for (auto r : rows) out.env.push_back(env[r]);
  }
  return out;
}

Batch concat(std::span<const Batch> parts) {
  Batch out;
  if (parts.empty()) return out;
  const auto d = parts.front().x.cols();
  const auto a = parts.front().aux.cols();
  std::size_t n = 0;
  bool ids = true;
  for (const auto& p : parts) {
    if (p.x.cols() != d || p.aux.cols() != a) throw ShapeError("cannot concatenate batches of different widths");
    n += p.size();
    ids = ids && p.has_env_ids();
  }
  out.x = Matrix(n, d);
  out.aux = Matrix(n, a);
  std::size_t row = 0;
  for (const auto& p : parts) {
    std::copy(p.x.data().begin(), p.x.data().end(), out.x.data().begin() + static_cast<std::ptrdiff_t>(row * d));
    std::copy(p.aux.data().begin(), p.aux.data().end(),
              out.aux.data().begin() + static_cast<std::ptrdiff_t>(row * a));
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    if (ids) out.env.insert(out.env.end(), p.env.begin(), p.env.end());
    row += p.size();
  }
  return out;
}

Batch Dataset::train_env(std::size_t e) const {
  if (!train.has_env_ids()) throw ConfigError("training environment ids are not available");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.env[i] == static_cast<int>(e)) rows.push_back(i);
  return train.select(rows);
}

// --- simulation ------------------------------------------------------------

void SimulationSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (n_per_env == 0) throw ConfigError("simulation.n_per_env must be positive");
  if (!(p_v > 0.5 && p_v <= 1.0)) throw ConfigError("simulation.p_v must lie in (0.5, 1]");
  if (!prob(p_s_minus) || !prob(p_s_plus)) throw ConfigError("simulation.p_s_train entries must lie in [0, 1]");
  if (p_s_test.empty()) throw ConfigError("simulation.p_s_test must list at least one environment");
  for (double p : p_s_test)
    if (!prob(p)) throw ConfigError("simulation.p_s_test entries must lie in [0, 1]");
  if (!(invariant_scale > 0.0) || !(spurious_scale > 0.0))
    throw ConfigError("simulation feature scales must be positive");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("simulation.noise_std must be nonnegative");
}

namespace {

Batch simulate_env(const SimulationSpec& spec, Rng& rng, double t_lo, double t_hi, double p_s_fixed,
                   bool time_varying, int env_id) {
  Batch b;
  const auto n = spec.n_per_env;
  b.x = Matrix(n, 2);
  b.aux = Matrix(n, 1);
  b.y.resize(n);
  b.env.assign(n, env_id);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(t_lo, t_hi);
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    const int y_inv = rng.bernoulli(spec.p_v) ? y : 1 - y;
    const double x_inv = (2.0 * y_inv - 1.0) * spec.invariant_scale + spec.noise_std * rng.normal();
    const double p_s = time_varying ? (t < 0.5 ? spec.p_s_minus : spec.p_s_plus) : p_s_fixed;
    const int y_sp = rng.bernoulli(p_s) ? y : 1 - y;
    const double x_sp = (2.0 * y_sp - 1.0) * spec.spurious_scale + spec.noise_std * rng.normal();
    b.x(i, 0) = x_inv;
    b.x(i, 1) = x_sp;
    b.aux(i, 0) = t;
    b.y[i] = y;
  }
  return b;
}

std::string format_prob(double p) {
  std::ostringstream os;
  os << "p_s=" << p;
  return os.str();
}

}  // namespace

Dataset generate_simulation(const SimulationSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  ds.feature_names = {"x_inv", "x_sp"};
  ds.aux_names = {"t"};
  // The upper segment is closed at 1 in principle; uniform() never returns the endpoint,
  // which has probability zero anyway.
  std::vector<Batch> train;
  train.push_back(simulate_env(spec, rng, 0.0, 0.5, 0.0, true, 0));
  train.push_back(simulate_env(spec, rng, 0.5, 1.0, 0.0, true, 1));
  ds.train = concat(train);
  ds.num_train_envs = 2;
  for (std::size_t k = 0; k < spec.p_s_test.size(); ++k) {
    ds.test.push_back(simulate_env(spec, rng, 0.0, 1.0, spec.p_s_test[k], false, static_cast<int>(k)));
    ds.test_names.push_back(format_prob(spec.p_s_test[k]));
  }
  return ds;
}

ReferenceAccuracies split_metrics_oracle(const Dataset& dataset) {
  auto rule_accuracy = [](const Batch& b, std::size_t column) {
    if (b.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double pred = b.x(i, column) > 0.0 ? 1.0 : 0.0;
      hits += pred == b.y[i];
    }
    return static_cast<double>(hits) / static_cast<double>(b.size());
  };
  if (dataset.train.x.cols() < 2) throw InputError("reference rules need the (x_inv, x_sp) columns");
  ReferenceAccuracies out;
  for (std::size_t e = 0; e < dataset.num_train_envs; ++e) {
    const auto b = dataset.train_env(e);
    out.invariant_train.push_back(rule_accuracy(b, 0));
    out.spurious_train.push_back(rule_accuracy(b, 1));
  }
  for (const auto& b : dataset.test) {
    out.invariant_test.push_back(rule_accuracy(b, 0));
    out.spurious_test.push_back(rule_accuracy(b, 1));
  }
  return out;
}

// --- delimited text --------------------------------------------------------

ColumnRole parse_column_role(std::string_view name) {
  if (name == "feature") return ColumnRole::feature;
  if (name == "label") return ColumnRole::label;
  if (name == "env_id" || name == "env") return ColumnRole::env_id;
  if (name == "aux") return ColumnRole::aux;
  if (name == "ignore") return ColumnRole::ignore;
  throw SchemaError("unknown column role '" + std::string(name) +
                    "' (expected feature, label, env_id, aux, ignore)");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Schema parse_schema(std::string_view text) {
  Schema schema;
  for (auto item : split(text, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.rfind(':');
    if (colon == std::string_view::npos) throw SchemaError("schema entry '" + std::string(item) + "' lacks ':role'");
    const auto name = std::string(trim(item.substr(0, colon)));
    if (!schema.emplace(name, parse_column_role(trim(item.substr(colon + 1)))).second)
      throw SchemaError("column '" + name + "' listed twice in schema");
  }
  if (schema.empty()) throw SchemaError("empty schema");
  return schema;
}

LoadedTable load_delimited(const std::filesystem::path& path, const Schema& schema, char delimiter) {
  if (delimiter != ',' && delimiter != '\t') throw InputError("delimiter must be ',' or tab");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row", 1, 0);
  const auto header = split(line, delimiter);

  std::vector<ColumnRole> roles;
  LoadedTable out;
  std::size_t label_count = 0, env_count = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = trim(header[c]);
    if (name.find('"') != std::string_view::npos)
      throw ParseError(path.string() + ": quoted fields are not supported", 1, c + 1);
    const auto it = schema.find(name);
    if (it == schema.end()) throw SchemaError(path.string() + ": column '" + std::string(name) + "' is not covered by the schema");
    roles.push_back(it->second);
    if (it->second == ColumnRole::feature) out.feature_names.emplace_back(name);
    if (it->second == ColumnRole::aux) out.aux_names.emplace_back(name);
    label_count += it->second == ColumnRole::label;
    env_count += it->second == ColumnRole::env_id;
  }
  if (label_count != 1) throw SchemaError(path.string() + ": exactly one label column is required");
  if (env_count > 1) throw SchemaError(path.string() + ": at most one env_id column is allowed");
  for (const auto& [name, role] : schema) {
    if (role == ColumnRole::ignore) continue;
    if (std::none_of(header.begin(), header.end(), [&](auto h) { return trim(h) == name; }))
      throw SchemaError(path.string() + ": schema column '" + name + "' missing from header");
  }

  Vector feats, auxv;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line, delimiter);
    if (cells.size() != header.size())
      throw ParseError(path.string() + ": expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row, 0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (roles[c] == ColumnRole::ignore) continue;
      const auto cell = trim(cells[c]);
      if (cell.find('"') != std::string_view::npos)
        throw ParseError(path.string() + ": quoted fields are not supported", row, c + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ParseError(path.string() + ": malformed number '" + std::string(cell) + "'", row, c + 1);
      switch (roles[c]) {
        case ColumnRole::feature: feats.push_back(v); break;
        case ColumnRole::aux: auxv.push_back(v); break;
        case ColumnRole::label: out.batch.y.push_back(v); break;
        case ColumnRole::env_id:
          if (v < 0.0 || v != std::floor(v))
            throw ParseError(path.string() + ": environment id must be a nonnegative integer", row, c + 1);
          out.batch.env.push_back(static_cast<int>(v));
          break;
        case ColumnRole::ignore: break;
      }
    }
  }
  const auto n = out.batch.y.size();
  out.batch.x = Matrix(n, out.feature_names.size(), std::move(feats));
  out.batch.aux = Matrix(n, out.aux_names.size(), std::move(auxv));
  return out;
}

namespace {

void standardize_columns(Matrix& train, std::span<Batch> tests, Matrix Batch::*member) {
  const auto n = train.rows();
  for (std::size_t c = 0; c < train.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += train(i, c);
    mean /= static_cast<double>(std::max<std::size_t>(n, 1));
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (train(i, c) - mean) * (train(i, c) - mean);
    var /= static_cast<double>(std::max<std::size_t>(n, 1));
    const double sd = std::max(std::sqrt(var), 1e-12);
    for (std::size_t i = 0; i < n; ++i) train(i, c) = (train(i, c) - mean) / sd;
    for (auto& t : tests) {
      Matrix& m = t.*member;
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, c) = (m(i, c) - mean) / sd;
    }
  }
}

}  // namespace

Dataset load_dataset(std::span<const std::filesystem::path> train_files,
                     std::span<const std::filesystem::path> test_files, const Schema& schema,
                     char delimiter) {
  if (train_files.empty()) throw ConfigError("no training files given");
  if (test_files.empty()) throw ConfigError("no test files given");
  Dataset ds;
  std::vector<Batch> train_parts;
  for (const auto& f : train_files) {
    auto t = load_delimited(f, schema, delimiter);
    if (ds.feature_names.empty()) {
      ds.feature_names = t.feature_names;
      ds.aux_names = t.aux_names;
    }
    train_parts.push_back(std::move(t.batch));
  }
  ds.train = concat(train_parts);
  if (ds.train.size() == 0) throw ConfigError("training files contain no rows");
  if (ds.train.has_env_ids()) {
    const std::set<int> ids(ds.train.env.begin(), ds.train.env.end());
    const std::vector<int> sorted(ids.begin(), ids.end());
    for (int& e : ds.train.env)
      e = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), e) - sorted.begin());
    ds.num_train_envs = sorted.size();
  }
  for (const auto& f : test_files) {
    auto t = load_delimited(f, schema, delimiter);
    if (t.batch.x.cols() != ds.train.x.cols() || t.batch.aux.cols() != ds.train.aux.cols())
      throw SchemaError(f.string() + ": column layout differs from the training files");
    ds.test.push_back(std::move(t.batch));
    ds.test_names.push_back(f.stem().string());
  }
  standardize_columns(ds.train.x, ds.test, &Batch::x);
  standardize_columns(ds.train.aux, ds.test, &Batch::aux);
  return ds;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void write_delimited(const std::filesystem::path& path, const Batch& batch,
                     std::span<const std::string> feature_names,
                     std::span<const std::string> aux_names, char delimiter) {
  if (feature_names.size() != batch.x.cols() || aux_names.size() != batch.aux.cols())
    throw ShapeError("column names do not match batch widths");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  std::string header;
  auto add = [&](std::string_view s) {
    if (!header.empty()) header += delimiter;
    header += s;
  };
  for (const auto& f : feature_names) add(f);
  for (const auto& a : aux_names) add(a);
  add("y");
  if (batch.has_env_ids()) add("env");
  out << header << '\n';
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::string line;
    auto cell = [&](const std::string& s) {
      if (!line.empty()) line += delimiter;
      line += s;
    };
    for (double v : batch.x.row(i)) cell(shortest(v));
    for (double v : batch.aux.row(i)) cell(shortest(v));
    cell(shortest(batch.y[i]));
    if (batch.has_env_ids()) cell(std::to_string(batch.env[i]));
    out << line << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace ectr
