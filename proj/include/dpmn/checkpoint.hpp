#pragma once

#include <map>
#include <string>
#include <vector>

#include "dpmn/common.hpp"

namespace dpmn {

// Parameter checkpoint, little-endian binary:
//   magic "DPMN", format version u32, tensor count u32, then per tensor:
//   name length u16, UTF-8 name, rank u8, dims u32 x rank, fp32 values.
// The byte layout is stable and part of the tested surface.

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

inline constexpr u64 kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// Plain key=value sidecar used as the model manifest.
void save_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv);
std::map<std::string, std::string> load_manifest(const std::string& path);

}  // namespace dpmn
