#pragma once

#include "rlqe/lds.hpp"

#include <json.hpp>

#include <string>

namespace rlqe {

using json = nlohmann::json;

json matrix_to_json(const MatrixXd& M);
MatrixXd matrix_from_json(const json& j);

json model_to_json(const SystemModel& model);
SystemModel model_from_json(const json& j);

/// {model, seed, x_star, y_star, a_star, y}. Noise sequences are rebuilt from the trajectory on load.
json episode_to_json(const EpisodeData& ep);
EpisodeData episode_from_json(const json& j);

void save_episode_json(const EpisodeData& ep, const std::string& path);
EpisodeData load_episode_json(const std::string& path);

/// Binary layout (little-endian):
///   bytes 0-7   magic "RLQE-EP\0"
///   bytes 8-11  u32 version
///   bytes 12-15 u32 reserved (0)
///   u32 T, u32 d, u32 m, u32 reserved, u64 seed
///   f64 sigma2, tau2, R2; A (d*d), B (m*d) row-major
///   x_star (T*d), y_star (T*m), a_star (T, as 0.0/1.0), y (T*m), all row-major f64
inline constexpr std::uint32_t kEpisodeBinaryVersion = 1;

void save_episode_binary(const EpisodeData& ep, const std::string& path);
EpisodeData load_episode_binary(const std::string& path);

/// Loads either format, choosing by the file's leading bytes.
EpisodeData load_episode(const std::string& path);

json read_json_file(const std::string& path);
void write_json_file(const json& j, const std::string& path);

}  // namespace rlqe
