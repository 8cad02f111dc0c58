#include "csm/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "csm/core/errors.hpp"

namespace csm {

namespace {

constexpr const char* kMagic = "csm-checkpoint 1";

void put_le(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw InputError("checkpoint: truncated parameter data");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

const std::string& Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : architecture) {
    if (k == key) return v;
  }
  throw InputError("checkpoint: missing field " + key);
}

void Checkpoint::set(const std::string& key, std::string value) {
  for (auto& [k, v] : architecture) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  architecture.emplace_back(key, std::move(value));
}

std::size_t Checkpoint::param_count() const {
  std::size_t n = 0;
  for (const auto& e : manifest) n += e.size;
  return n;
}

std::vector<ad::ParamStore::Entry> manifest_of(const ad::ParamStore& store) { return store.entries(); }

void check_manifest(const Checkpoint& ckpt, const ad::ParamStore& store) {
  const auto& ours = store.entries();
  if (ours.size() != ckpt.manifest.size()) throw ContractError("checkpoint: parameter manifest differs from the model");
  for (std::size_t i = 0; i < ours.size(); ++i) {
    const auto& a = ours[i];
    const auto& b = ckpt.manifest[i];
    if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) {
      throw ContractError("checkpoint: parameter " + b.name + " does not match the model");
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::size_t n = ckpt.param_count();
  for (const auto& s : ckpt.stages) {
    if (s.size() != n) throw ContractError("checkpoint: stage length does not match the manifest");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMagic << '\n';
  for (const auto& [k, v] : ckpt.architecture) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw InputError("checkpoint: bad header field " + k);
    }
    out << "arch " << k << ' ' << v << '\n';
  }
  out << "seed " << ckpt.seed << '\n';
  out << "stages " << ckpt.stages.size() << '\n';
  out << "params " << n << '\n';
  for (const auto& e : ckpt.manifest) {
    out << "param " << e.name;
    for (std::size_t d : e.shape) out << ' ' << d;
    out << '\n';
  }
  out << "end\n";
  for (const auto& s : ckpt.stages) {
    for (double v : s) put_le(out, v);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw InputError(path.string() + ": not a checkpoint");
  Checkpoint ckpt;
  std::size_t stages = 0, params = 0, offset = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "arch") {
      std::string key, value;
      ss >> key;
      std::getline(ss >> std::ws, value);
      ckpt.architecture.emplace_back(key, value);
    } else if (tag == "seed") {
      ss >> ckpt.seed;
    } else if (tag == "stages") {
      ss >> stages;
    } else if (tag == "params") {
      ss >> params;
    } else if (tag == "param") {
      ad::ParamStore::Entry e;
      ss >> e.name;
      std::size_t d = 0, size = 1;
      while (ss >> d) {
        e.shape.push_back(d);
        size *= d;
      }
      e.offset = offset;
      e.size = size;
      offset += size;
      ckpt.manifest.push_back(std::move(e));
    } else {
      throw InputError(path.string() + ": unknown header line: " + line);
    }
  }
  if (!ended) throw InputError(path.string() + ": header has no end line");
  if (offset != params) throw InputError(path.string() + ": manifest does not add up to the parameter count");
  ckpt.stages.assign(stages, std::vector<double>(params));
  for (auto& s : ckpt.stages) {
    for (double& v : s) v = get_le(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw InputError(path.string() + ": trailing data");
  return ckpt;
}

}  // namespace csm
