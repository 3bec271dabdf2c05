#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trd/tensor.hpp"

namespace trd {

// Named-tensor archive: magic, little-endian u64 manifest length, JSON
// manifest (metadata plus ordered tensor names/shapes), then raw
// little-endian doubles in manifest order. Used for checkpoints and
// backbone weight files.
struct TensorArchive {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void save(const std::string& path) const;
    static TensorArchive load(const std::string& path);
};

}  // namespace trd
