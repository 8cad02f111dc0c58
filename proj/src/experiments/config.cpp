#include "csm/experiments/config.hpp"

#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "csm/data/csv.hpp"
#include "toml.hpp"

namespace csm::exp {

namespace {

constexpr std::array<std::pair<ExperimentKind, const char*>, 8> kExperimentNames{{
    {ExperimentKind::kBenchTiming, "bench-timing"},
    {ExperimentKind::kBenchVariance, "bench-variance"},
    {ExperimentKind::kNll, "nll"},
    {ExperimentKind::kFit, "fit"},
    {ExperimentKind::kSample, "sample"},
    {ExperimentKind::kDenoise, "denoise"},
    {ExperimentKind::kOod, "ood"},
    {ExperimentKind::kVae, "vae"},
}};

// Every serialisable field, in snapshot order. `f(section, key, ref)`.
template <class F>
void for_each_field(ExperimentConfig& c, F&& f) {
  f("", "experiment", c.experiment);
  f("", "seed", c.seed);
  f("", "threads", c.threads);
  f("", "output_dir", c.output_dir);

  auto& d = c.data;
  f("data", "kind", d.kind);
  f("data", "n_train", d.n_train);
  f("data", "n_test", d.n_test);
  f("data", "dim", d.dim);
  f("data", "std", d.std);
  f("data", "mean", d.mean);
  f("data", "cov", d.cov);
  f("data", "offset", d.offset);
  f("data", "modes", d.modes);
  f("data", "radius", d.radius);
  f("data", "mode_std", d.mode_std);
  f("data", "ring_radii", d.ring_radii);
  f("data", "ring_width", d.ring_width);
  f("data", "grid", d.grid);
  f("data", "cell", d.cell);

  auto& m = c.model;
  f("model", "kind", m.kind);
  f("model", "context_width", m.context_width);
  f("model", "made_hidden", m.made_hidden);
  f("model", "head_hidden", m.head_hidden);
  f("model", "hidden", m.hidden);
  f("model", "components", m.components);
  f("model", "activation", m.activation);

  f("objective", "kind", c.objective.kind);
  f("objective", "dsm_sigma", c.objective.dsm_sigma);
  f("objective", "n_proj", c.objective.n_proj);

  f("schedule", "sigma_first", c.schedule.sigma_first);
  f("schedule", "sigma_last", c.schedule.sigma_last);
  f("schedule", "levels", c.schedule.levels);

  auto& o = c.optim;
  f("optim", "lr", o.lr);
  f("optim", "beta1", o.beta1);
  f("optim", "beta2", o.beta2);
  f("optim", "eps", o.eps);
  f("optim", "batch_size", o.batch_size);
  f("optim", "max_epochs", o.max_epochs);
  f("optim", "max_iters", o.max_iters);
  f("optim", "min_iters", o.min_iters);
  f("optim", "window", o.window);
  f("optim", "tolerance", o.tolerance);
  f("optim", "clip_norm", o.clip_norm);

  f("sampler", "eps0", c.sampler.eps0);
  f("sampler", "steps", c.sampler.steps);
  f("sampler", "n_samples", c.sampler.n_samples);
  f("sampler", "divergence_bound", c.sampler.divergence_bound);

  auto& b = c.bench;
  f("bench", "dims", b.dims);
  f("bench", "batch_size", b.batch_size);
  f("bench", "reps", b.reps);
  f("bench", "param_budget", b.param_budget);
  f("bench", "csm_context_width", b.csm_context_width);
  f("bench", "csm_head_hidden", b.csm_head_hidden);
  f("bench", "dim", b.dim);
  f("bench", "data_std", b.data_std);
  f("bench", "n_trials", b.n_trials);
  f("bench", "n_proj", b.n_proj);
  f("bench", "field", b.field);

  f("nll", "dsm_sigmas", c.nll.dsm_sigmas);
  f("nll", "ssm", c.nll.ssm);
  f("nll", "csm", c.nll.csm);

  f("fit", "baseline", c.fit.baseline);
  f("fit", "grid", c.fit.grid);
  f("fit", "grid_min", c.fit.grid_min);
  f("fit", "grid_max", c.fit.grid_max);

  f("denoise", "sigma", c.denoise.sigma);
  f("denoise", "n", c.denoise.n);
  f("denoise", "outlier_fraction", c.denoise.outlier_fraction);
  f("denoise", "outlier_value", c.denoise.outlier_value);

  f("ood", "n_ood", c.ood.n_ood);
  f("ood", "box", c.ood.box);

  auto& v = c.vae;
  f("vae", "problem", v.problem);
  f("vae", "latent_dim", v.latent_dim);
  f("vae", "obs_dim", v.obs_dim);
  f("vae", "iters", v.iters);
  f("vae", "batch_size", v.batch_size);
  f("vae", "score_steps", v.score_steps);
  f("vae", "n_mc", v.n_mc);
  f("vae", "lr", v.lr);
  f("vae", "score_lr", v.score_lr);
  f("vae", "decoder_hidden", v.decoder_hidden);
  f("vae", "encoder_hidden", v.encoder_hidden);
  f("vae", "explicit_baseline", v.explicit_baseline);
  f("vae", "eval_samples", v.eval_samples);
}

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

[[noreturn]] void bad(const std::string& name, const std::string& expected) {
  throw ConfigError("config: " + name + " must be " + expected);
}

// ---- reading ----------------------------------------------------------------

void read(const toml::node& n, const std::string& name, double& out) {
  if (auto v = n.value_exact<double>()) {
    out = *v;
  } else if (auto i = n.value_exact<std::int64_t>()) {
    out = static_cast<double>(*i);
  } else {
    bad(name, "a number");
  }
}

void read(const toml::node& n, const std::string& name, std::size_t& out) {
  auto v = n.value_exact<std::int64_t>();
  if (!v || *v < 0) bad(name, "a non-negative integer");
  out = static_cast<std::size_t>(*v);
}

void read(const toml::node& n, const std::string& name, bool& out) {
  auto v = n.value_exact<bool>();
  if (!v) bad(name, "true or false");
  out = *v;
}

void read(const toml::node& n, const std::string& name, std::string& out) {
  auto v = n.value_exact<std::string>();
  if (!v) bad(name, "a string");
  out = *v;
}

template <class E>
void read_enum(const toml::node& n, const std::string& name, E& out, E (*parse)(const std::string&)) {
  std::string s;
  read(n, name, s);
  try {
    out = parse(s);
  } catch (const std::exception& e) {
    throw ConfigError("config: " + name + ": " + e.what());
  }
}

void read(const toml::node& n, const std::string& name, DatasetKind& out) {
  read_enum(n, name, out, &parse_dataset_kind);
}
void read(const toml::node& n, const std::string& name, ObjectiveKind& out) {
  read_enum(n, name, out, &parse_objective);
}
void read(const toml::node& n, const std::string& name, nn::Activation& out) {
  read_enum(n, name, out, &nn::parse_activation);
}
void read(const toml::node& n, const std::string& name, ExperimentKind& out) {
  read_enum(n, name, out, &parse_experiment);
}

template <class T>
void read(const toml::node& n, const std::string& name, std::vector<T>& out) {
  const auto* arr = n.as_array();
  if (!arr) bad(name, "an array");
  std::vector<T> v(arr->size());
  for (std::size_t i = 0; i < arr->size(); ++i) read(*arr->get(i), name, v[i]);
  out = std::move(v);
}

void read(const toml::node& n, const std::string& name, std::array<double, 2>& out) {
  std::vector<double> v;
  read(n, name, v);
  if (v.size() != 2) bad(name, "an array of two numbers");
  out = {v[0], v[1]};
}

// ---- writing ----------------------------------------------------------------

std::string emit(double v) {
  std::string s = format_double(v);
  if (s == "inf" || s == "-inf" || s == "nan") return s;
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}
std::string emit(std::size_t v) { return std::to_string(v); }
std::string emit(bool v) { return v ? "true" : "false"; }
std::string emit(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}
std::string emit(DatasetKind k) { return emit(to_string(k)); }
std::string emit(ObjectiveKind k) { return emit(to_string(k)); }
std::string emit(nn::Activation a) { return emit(nn::to_string(a)); }
std::string emit(ExperimentKind k) { return emit(to_string(k)); }
template <class T>
std::string emit(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + emit(v[i]);
  return out + "]";
}
std::string emit(const std::array<double, 2>& v) { return "[" + emit(v[0]) + ", " + emit(v[1]) + "]"; }

}  // namespace

ExperimentKind parse_experiment(const std::string& name) {
  for (const auto& [k, n] : kExperimentNames) {
    if (name == n) return k;
  }
  throw InputError("unknown experiment '" + name + "'");
}

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, n] : kExperimentNames) {
    if (k == kind) return n;
  }
  return "?";
}

NoiseSchedule ScheduleConfig::build() const {
  if (levels == 1) return NoiseSchedule({sigma_last});
  return geometric_schedule(sigma_first, sigma_last, levels);
}

LangevinConfig SamplerConfig::build(const NoiseSchedule& schedule) const {
  if (!(eps0 > 0.0) || steps == 0) throw InputError("sampler: eps0 must be positive and steps >= 1");
  LangevinConfig c;
  c.eps0 = eps0;
  c.steps = steps;
  c.schedule = schedule;
  c.divergence_bound = divergence_bound;
  return c;
}

DatasetSpec ExperimentConfig::dataset() const {
  DatasetSpec s = data;
  s.seed = mix_seed(seed ^ 0x64617461ULL);
  return s;
}

void apply_toml(ExperimentConfig& config, const std::string& text, const std::string& origin) {
  toml::table doc;
  try {
    doc = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << origin << ": " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  std::set<std::string> known;
  for_each_field(config, [&](const std::string& section, const std::string& key, auto& ref) {
    known.insert(where(section, key));
    const toml::node* node = nullptr;
    if (section.empty()) {
      node = doc.get(key);
    } else if (const auto* tbl = doc.get_as<toml::table>(section)) {
      node = tbl->get(key);
    }
    if (node) read(*node, where(section, key), ref);
  });
  for (const auto& [k, v] : doc) {
    const std::string key(k.str());
    if (const auto* tbl = v.as_table()) {
      for (const auto& [k2, v2] : *tbl) {
        const std::string name = key + "." + std::string(k2.str());
        if (!known.count(name)) throw ConfigError("config: unknown key '" + name + "'");
      }
    } else if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
}

void apply_file(ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_toml(config, ss.str(), path.string());
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string name = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const auto dot = name.rfind('.');
  const std::string section = dot == std::string::npos ? "" : name.substr(0, dot);
  const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
  const std::string head = section.empty() ? "" : "[" + section + "]\n";
  try {
    apply_toml(config, head + key + " = " + value + "\n", "--set " + name);
  } catch (const ConfigError&) {
    // Bare words are strings.
    apply_toml(config, head + key + " = " + emit(value) + "\n", "--set " + name);
  }
}

std::string to_toml(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::string out;
  std::string current;
  for_each_field(copy, [&](const std::string& section, const std::string& key, auto& ref) {
    if (section != current) {
      out += "\n[" + section + "]\n";
      current = section;
    }
    out += key + " = " + emit(ref) + "\n";
  });
  return out;
}

}  // namespace csm::exp
