#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "byolim/models.hpp"

namespace byolim {

// Binary layout, all integers little-endian:
//   "BYIM" | u16 version | u32 record count
//   per record: u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 data
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

using Checkpoint = std::vector<CheckpointRecord>;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter (running statistics included). A name
/// starting with strip_prefix loses that prefix.
Checkpoint make_checkpoint(const std::vector<const Parameter<float>*>& params, std::string_view strip_prefix = {});

/// Copies records into same-named parameters. A record whose name matches a
/// parameter with a different shape raises CheckpointIncompatible naming
/// that record. Without allow_partial every parameter must be present and
/// every record consumed; with it, parameters absent from the checkpoint keep
/// their values. Returns the number of parameters loaded.
std::size_t apply_checkpoint(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
                             bool allow_partial = false);

/// Rebuilds the classifier architecture described by a checkpoint's record
/// shapes and loads it. The spatial input size is not stored and is taken
/// from input_size.
ClassifierModel<float> classifier_from_checkpoint(const Checkpoint& ckpt, std::size_t input_size = 224);

}  // namespace byolim
