#include "csm/experiments/models.hpp"

#include <sstream>

#include "csm/data/csv.hpp"
#include "csm/fields/ar_csm_model.hpp"
#include "csm/fields/tractable_ar_model.hpp"

namespace csm::exp {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

template <class T>
std::vector<T> split(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v)) throw InputError("checkpoint: malformed list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::size_t to_size(const std::string& s) {
  const auto v = split<std::size_t>(s);
  if (v.size() != 1) throw InputError("checkpoint: malformed integer '" + s + "'");
  return v[0];
}

double to_double(const std::string& s) {
  const auto v = split<double>(s);
  if (v.size() != 1) throw InputError("checkpoint: malformed number '" + s + "'");
  return v[0];
}

}  // namespace

std::unique_ptr<Trainable> build_model(const ModelConfig& config, std::size_t dim, Rng& init_rng) {
  if (config.kind == "ar-csm") {
    ArCsmOptions o;
    o.dim = dim;
    o.context_width = config.context_width;
    o.made_hidden = config.made_hidden;
    o.head_hidden = config.head_hidden;
    o.activation = config.activation;
    return std::make_unique<ArCsmModel>(o, init_rng);
  }
  if (config.kind == "tractable-ar") {
    TractableArOptions o;
    o.dim = dim;
    o.made_hidden = config.made_hidden;
    o.components = config.components;
    o.activation = config.activation;
    return std::make_unique<TractableArModel>(o, init_rng);
  }
  if (config.kind == "energy-mlp") {
    return std::make_unique<EnergyMlp>(dim, config.hidden, config.activation, init_rng);
  }
  throw InputError("unknown model kind '" + config.kind + "'");
}

const ScoreField& as_field(const Trainable& model) {
  const auto* field = dynamic_cast<const ScoreField*>(&model);
  if (!field) throw ContractError("model has no conditional scores");
  return *field;
}

StagedField StagedModel::fields() const {
  if (stages.size() == 1) return repeat_stages(as_field(*stages[0]), schedule.size());
  StagedField out;
  for (const auto& m : stages) out.push_back(&as_field(*m));
  return out;
}

StagedModel staged_from(const ModelConfig& config, std::size_t dim,
                        const std::vector<std::vector<double>>& stage_params,
                        const NoiseSchedule& schedule, const LangevinConfig& sampler) {
  if (stage_params.empty()) throw ContractError("staged_from: no stages");
  if (stage_params.size() != 1 && stage_params.size() != schedule.size()) {
    throw ContractError("staged_from: stage count does not match the schedule");
  }
  StagedModel out;
  out.config = config;
  out.dim = dim;
  out.schedule = schedule;
  out.sampler = sampler;
  out.sampler.schedule = schedule;
  Rng unused(0);
  for (const auto& p : stage_params) {
    auto m = build_model(config, dim, unused);
    if (m->params().size() != p.size()) throw ContractError("staged_from: parameter count mismatch");
    std::copy(p.begin(), p.end(), m->params().flat().begin());
    out.stages.push_back(std::move(m));
  }
  return out;
}

Checkpoint make_checkpoint(const StagedModel& model, std::uint64_t seed) {
  Checkpoint c;
  const auto& m = model.config;
  c.set("model", m.kind);
  c.set("dim", std::to_string(model.dim));
  c.set("context_width", std::to_string(m.context_width));
  c.set("made_hidden", join(m.made_hidden));
  c.set("head_hidden", join(m.head_hidden));
  c.set("hidden", join(m.hidden));
  c.set("components", std::to_string(m.components));
  c.set("activation", nn::to_string(m.activation));
  c.set("schedule", join(model.schedule.levels()));
  c.set("eps0", format_double(model.sampler.eps0));
  c.set("steps", std::to_string(model.sampler.steps));
  c.set("divergence_bound", format_double(model.sampler.divergence_bound));
  c.seed = seed;
  c.manifest = manifest_of(model.stages.front()->params());
  for (const auto& s : model.stages) {
    const auto flat = s->params().flat();
    c.stages.emplace_back(flat.begin(), flat.end());
  }
  return c;
}

StagedModel load_staged(const Checkpoint& checkpoint) {
  ModelConfig m;
  m.kind = checkpoint.get("model");
  m.context_width = to_size(checkpoint.get("context_width"));
  m.made_hidden = split<std::size_t>(checkpoint.get("made_hidden"));
  m.head_hidden = split<std::size_t>(checkpoint.get("head_hidden"));
  m.hidden = split<std::size_t>(checkpoint.get("hidden"));
  m.components = to_size(checkpoint.get("components"));
  m.activation = nn::parse_activation(checkpoint.get("activation"));
  const std::size_t dim = to_size(checkpoint.get("dim"));
  const NoiseSchedule schedule(split<double>(checkpoint.get("schedule")));
  LangevinConfig sampler;
  sampler.eps0 = to_double(checkpoint.get("eps0"));
  sampler.steps = to_size(checkpoint.get("steps"));
  sampler.divergence_bound = to_double(checkpoint.get("divergence_bound"));
  StagedModel out = staged_from(m, dim, checkpoint.stages, schedule, sampler);
  check_manifest(checkpoint, out.stages.front()->params());
  return out;
}

}  // namespace csm::exp
