#include "ectr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ectr/error.hpp"

namespace ectr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = v.find(',');
    const auto item = trim(v.substr(0, pos));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  return v;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source + ":" + std::to_string(line_no) + ": unterminated section");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (cfg.entries_.count(full)) throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + full + "'");
    cfg.entries_.emplace(std::move(full), std::string(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool Config::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string_view> Config::lookup(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  used_.insert(it->first);
  return std::string_view(it->second);
}

std::string Config::get_string(std::string_view key, std::string_view fallback) const {
  const auto v = lookup(key);
  return std::string(v ? *v : fallback);
}

double Config::get_double(std::string_view key, double fallback) const {
  const auto v = lookup(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::size_t Config::get_size(std::string_view key, std::size_t fallback) const {
  const auto v = lookup(key);
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t Config::get_u64(std::string_view key, std::uint64_t fallback) const {
  const auto v = lookup(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

std::vector<double> Config::get_doubles(std::string_view key, std::vector<double> fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (auto item : split_list(*v)) out.push_back(parse_number<double>(key, item));
  return out;
}

std::vector<std::size_t> Config::get_sizes(std::string_view key, std::vector<std::size_t> fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  for (auto item : split_list(*v)) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::vector<std::uint64_t> Config::get_u64s(std::string_view key, std::vector<std::uint64_t> fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  std::vector<std::uint64_t> out;
  for (auto item : split_list(*v)) out.push_back(parse_number<std::uint64_t>(key, item));
  return out;
}

std::vector<std::string> Config::get_strings(std::string_view key, std::vector<std::string> fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (auto item : split_list(*v)) out.emplace_back(item);
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

void reject_unused(const Config& cfg) {
  const auto unused = cfg.unused_keys();
  if (unused.empty()) return;
  std::string msg = "unrecognized config keys:";
  for (const auto& k : unused) msg += " " + k;
  throw ConfigError(msg);
}

namespace {

OptimizerConfig optimizer_from(const Config& cfg, const std::string& player, OptimizerConfig d) {
  const std::string p = "optim." + player + ".";
  d.kind = parse_optimizer(cfg.get_string(p + "kind", to_string(d.kind)));
  d.step = cfg.get_double(p + "step", d.step);
  d.momentum = cfg.get_double(p + "momentum", d.momentum);
  d.beta1 = cfg.get_double(p + "beta1", d.beta1);
  d.beta2 = cfg.get_double(p + "beta2", d.beta2);
  d.eps = cfg.get_double(p + "eps", d.eps);
  return d;
}

}  // namespace

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig c;
  if (!cfg.has("method")) throw ConfigError("config key 'method' is required; valid methods: " + method_names());
  c.method = parse_method(cfg.get_string("method", ""));
  c.loss.kind = parse_loss(cfg.get_string("loss", to_string(c.loss.kind)));
  c.num_classes = cfg.get_size("num_classes", c.num_classes);
  c.seed = cfg.get_u64("seed", c.seed);

  c.hidden = cfg.get_sizes("predictor.hidden", c.hidden);
  c.activation = parse_activation(cfg.get_string("predictor.activation", to_string(c.activation)));
  c.init_gain = cfg.get_double("predictor.init_gain", c.init_gain);

  c.beta = cfg.get_double("objective.beta", c.beta);
  c.gamma = cfg.get_double("objective.gamma", c.gamma);
  c.tv_lambda = cfg.get_double("objective.tv_lambda", c.tv_lambda);
  c.tv_variant = parse_tv_variant(cfg.get_string("objective.tv_variant", to_string(c.tv_variant)));
  c.psi_init = cfg.get_double("objective.psi_init", c.psi_init);
  c.epsilon = cfg.get_double("objective.epsilon", c.epsilon);
  c.group_dro_step = cfg.get_double("objective.group_dro_step", c.group_dro_step);

  const auto tail_mode = cfg.get_string("tail.mode", "score_network");
  if (tail_mode == "score_network") c.tail_mode = TailMode::score_network;
  else if (tail_mode == "free_scores") c.tail_mode = TailMode::free_scores;
  else throw ConfigError("tail.mode must be score_network or free_scores");
  c.tail_inputs = parse_tail_inputs(cfg.get_string("tail.inputs", to_string(c.tail_inputs)));
  c.tail_hidden = cfg.get_sizes("tail.hidden", c.tail_hidden);
  c.tail_init_gain = cfg.get_double("tail.init_gain", c.tail_init_gain);

  c.latent_envs = cfg.get_size("infer.latent_envs", c.latent_envs);
  c.infer_hidden = cfg.get_sizes("infer.hidden", c.infer_hidden);
  c.infer_temperature = cfg.get_double("infer.temperature", c.infer_temperature);
  c.infer_init_gain = cfg.get_double("infer.init_gain", c.infer_init_gain);
  c.k_inner = cfg.get_size("infer.k_inner", c.k_inner);

  c.epochs = cfg.get_size("train.epochs", c.epochs);
  c.batch_size = cfg.get_size("train.batch_size", c.batch_size);
  c.eval_every = cfg.get_size("train.eval_every", c.eval_every);

  c.opt_phi = optimizer_from(cfg, "phi", c.opt_phi);
  c.opt_theta = optimizer_from(cfg, "theta", c.opt_theta);
  c.opt_psi = optimizer_from(cfg, "psi", c.opt_psi);
  c.opt_eta = optimizer_from(cfg, "eta", c.opt_eta);
  c.validate();
  return c;
}

SimulationSpec simulation_spec_from(const Config& cfg) {
  SimulationSpec s;
  s.n_per_env = cfg.get_size("simulation.n_per_env", s.n_per_env);
  s.p_v = cfg.get_double("simulation.p_v", s.p_v);
  const auto train = cfg.get_doubles("simulation.p_s_train", {s.p_s_minus, s.p_s_plus});
  if (train.size() != 2) throw ConfigError("simulation.p_s_train must hold exactly two values");
  s.p_s_minus = train[0];
  s.p_s_plus = train[1];
  s.p_s_test = cfg.get_doubles("simulation.p_s_test", s.p_s_test);
  s.invariant_scale = cfg.get_double("simulation.invariant_scale", s.invariant_scale);
  s.spurious_scale = cfg.get_double("simulation.spurious_scale", s.spurious_scale);
  s.noise_std = cfg.get_double("simulation.noise_std", s.noise_std);
  s.seed = cfg.get_u64("simulation.seed", s.seed);
  s.validate();
  return s;
}

std::vector<std::pair<std::string, std::string>> describe(const SimulationSpec& s) {
  auto num = [](double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  };
  std::string test;
  for (double p : s.p_s_test) test += (test.empty() ? "" : ",") + num(p);
  return {
      {"simulation.n_per_env", std::to_string(s.n_per_env)},
      {"simulation.p_v", num(s.p_v)},
      {"simulation.p_s_train", num(s.p_s_minus) + "," + num(s.p_s_plus)},
      {"simulation.p_s_test", test},
      {"simulation.invariant_scale", num(s.invariant_scale)},
      {"simulation.spurious_scale", num(s.spurious_scale)},
      {"simulation.noise_std", num(s.noise_std)},
      {"simulation.seed", std::to_string(s.seed)},
  };
}

Dataset dataset_from(const Config& cfg, const std::filesystem::path& base_dir) {
  namespace fs = std::filesystem;
  const auto source = cfg.get_string("data.source", "files");
  if (source == "simulation") return generate_simulation(simulation_spec_from(cfg));
  if (source != "files") throw ConfigError("data.source must be 'files' or 'simulation'");

  const auto delim_name = cfg.get_string("data.delimiter", "comma");
  char delim = ',';
  if (delim_name == "tab") delim = '\t';
  else if (delim_name != "comma") throw ConfigError("data.delimiter must be comma or tab");
  const auto schema = parse_schema(cfg.get_string("data.schema", "x_inv:feature,x_sp:feature,t:aux,y:label,env:env_id"));

  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  std::vector<fs::path> train, test;
  if (cfg.has("data.dir")) {
    const auto dir = resolve(cfg.get_string("data.dir", ""));
    if (!fs::is_directory(dir)) throw ConfigError("data.dir " + dir.string() + " is not a directory");
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.path().extension() != ".csv" && entry.path().extension() != ".tsv") continue;
      if (name.rfind("train_", 0) == 0) train.push_back(entry.path());
      if (name.rfind("test_", 0) == 0) test.push_back(entry.path());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
  } else {
    for (const auto& f : cfg.get_strings("data.train", {})) train.push_back(resolve(f));
    for (const auto& f : cfg.get_strings("data.test", {})) test.push_back(resolve(f));
  }
  return load_dataset(train, test, schema, delim);
}

}  // namespace ectr
