#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "phyvae/nn.hpp"
#include "phyvae/tensor.hpp"

namespace phyvae {

/// Text checkpoint: a header with the variant tag and config hash, then every
/// tensor keyed by its module path. Values are written as hexfloats so a
/// reload is bit-exact.
struct Checkpoint {
    std::string variant;
    std::string config_hash;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const ParameterSet& params, std::string variant, std::string config_hash);
/// Copies tensors into `params` by path. Throws DataError when a path is
/// missing on either side or a shape differs.
void load_parameters(const Checkpoint& ckpt, ParameterSet& params);

}  // namespace phyvae
