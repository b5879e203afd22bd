// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "lexkit/optimizer.hpp"
#include "lexkit/tensor.hpp"

namespace lexkit::nn {

/// Checkpoint file layout: one JSON header line listing
/// {name, shape, offset} per tensor (offset in bytes into the data
/// section), a newline, then the tensors as raw little-endian float32 in
/// listed order. Values are stored at float32 precision regardless of the
/// in-memory width.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params,
                     const std::map<std::string, std::string>& meta = {});

Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into same-named parameters. Throws with a
/// message listing every missing or shape-mismatched tensor.
void load_into_params(const Checkpoint& ckpt, const std::vector<Parameter*>& params);

}  // namespace lexkit::nn
