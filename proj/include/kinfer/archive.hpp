#pragma once

// Trajectory archive: a directory holding
//   manifest.json  system JSON, M, L, T, seed, tolerances, derivs_source,
//                  block layout and the byte count of data.bin
//   data.bin       little-endian IEEE-754 doubles laid out [m][l][block] with
//                  block = X (N*d) | V (N*d) | Xi (N or 0) | accel (N*d) | xidot (N or 0)
// Xi and xidot are empty when the system has no environment variable.

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "kinfer/simulate.hpp"

namespace kinfer {

std::size_t archive_block_doubles(const TrajectoryDataset& ds);

nlohmann::json archive_manifest(const TrajectoryDataset& ds);

// `extra` entries (e.g. the initial distribution) are merged into the manifest.
void write_archive(const std::filesystem::path& dir, const TrajectoryDataset& ds,
                   const nlohmann::json& extra = nlohmann::json::object());

// Throws ConfigError when the directory, manifest or data file is missing or
// inconsistent.
TrajectoryDataset read_archive(const std::filesystem::path& dir);

nlohmann::json read_manifest(const std::filesystem::path& dir);

// One row per (m, l, i).
void export_csv(const std::filesystem::path& file, const TrajectoryDataset& ds);

}  // namespace kinfer
