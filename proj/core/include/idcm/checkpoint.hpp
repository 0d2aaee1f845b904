#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "idcm/ck_model.hpp"
#include "idcm/corpus_io.hpp"

namespace idcm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything the cascade needs from a training run: the CK parameters, the
/// aggregation weights, the vocabulary the ids refer to, and the config snapshot.
struct Checkpoint {
    CkModel model;
    std::vector<double> w_ps;
    double w_ps_bias = 0.0;
    Vocabulary vocabulary;
    std::string config_snapshot;
};

/// Binary container: "IDCMCKPT", u32 version, config snapshot, vocabulary, then named
/// tensors (u16 name length, name, u8 rank, u64 dims, little-endian float32 data).
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace idcm
