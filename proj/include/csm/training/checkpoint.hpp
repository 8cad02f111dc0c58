#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "csm/ad/param_store.hpp"

namespace csm {

/// Parameter snapshots with the architecture needed to rebuild the model.
///
/// On disk: a plain-text header (one "key value" per line: format tag,
/// architecture fields, seed, stage and parameter counts, one "param" line
/// per tensor with its shape), an "end" line, then stages x n_params
/// little-endian 64-bit floats.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> architecture;
  std::uint64_t seed = 0;
  std::vector<ad::ParamStore::Entry> manifest;
  std::vector<std::vector<double>> stages;

  /// Value of an architecture key; InputError if absent.
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value);
  std::size_t param_count() const;
};

std::vector<ad::ParamStore::Entry> manifest_of(const ad::ParamStore& store);

/// ContractError unless names, shapes and offsets agree.
void check_manifest(const Checkpoint& ckpt, const ad::ParamStore& store);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csm
