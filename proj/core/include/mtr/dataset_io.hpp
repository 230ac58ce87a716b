#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtr/synthdata.hpp"

namespace mtr {

/// Everything `mtr generate` reads from its JSON config. Keys mirror the
/// SceneSpec field names plus `n_train` and `n_val`; unknown keys are errors.
struct GenerateConfig {
    SceneSpec scene;
    std::size_t n_train = 1000;
    std::size_t n_val = 300;

    void validate() const;
};

/// Throws ConfigError on malformed JSON, unknown keys or invalid values.
GenerateConfig parse_generate_config(std::string_view json_text);
/// Canonical JSON (sorted keys, every field present); its hash identifies the config.
std::string generate_config_json(const GenerateConfig& cfg);

/// Validation scenes are seeded from this offset so that n_train does not
/// shift the validation split.
inline constexpr std::uint64_t kValSeedOffset = 1ULL << 32;

struct Dataset {
    GenerateConfig config;
    std::string config_hash;
    std::string dataset_hash;  // empty until written or read
    std::vector<Scene> train;
    std::vector<Scene> val;
};

Dataset generate_synthetic(const GenerateConfig& cfg, std::size_t threads = 1);

// Directory layout:
//   manifest.json   format, version, config, config_hash, per-file sha256, dataset_hash
//   train.jsonl     one scene per line (see encode_scene_record)
//   train.bin       canvases as raw u8 planes, concatenated in record order
//   val.jsonl, val.bin
inline constexpr int kDatasetVersion = 1;

/// Writes into a sibling temporary directory and renames it into place, so a
/// failure never leaves a partially written dataset. Returns the dataset hash.
std::string write_dataset(const std::filesystem::path& dir, Dataset& dataset);
/// Reads and verifies every file hash against the manifest.
Dataset read_dataset(const std::filesystem::path& dir);

/// One scene as a JSON line:
///   {"index", "seed", "canvas": {"width","height","channels","offset","bytes"},
///    "instances": [{"box": [x0,y0,x1,y1], "keypoints": [[x,y,v] x13], "action": name}],
///    "objects": [{"box": [...], "class": name}], "proposals": [[x0,y0,x1,y1], ...]}
std::string encode_scene_record(const Scene& scene, std::size_t index, std::size_t offset);
Scene decode_scene_record(std::string_view line, std::string_view sidecar);

/// RGB preview of a canvas (torso red, right limbs green, left limbs blue,
/// objects gray) as a binary PPM.
void export_ppm(const Canvas& canvas, const std::filesystem::path& path);

}  // namespace mtr
