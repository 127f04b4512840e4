#pragma once

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "lhc/nn.hpp"

namespace lhc {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'L', 'H', 'C', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet params;
  nlohmann::json hyperparameters;
  nlohmann::json model;  // network layout and bookkeeping
};

// Layout: "LHC1", one line of compact UTF-8 JSON manifest terminated by '\n',
// then the parameters as little-endian float64 arrays in manifest order.
// Manifest byte offsets are relative to the first payload byte.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lhc
