#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "collage/collage.hpp"

namespace collage {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "collage.json";

using AssetLoader = std::function<Image8(const std::string& relative_path)>;

// Manifest JSON for a collage. Layers without an image_file get a generated
// asset name, which is also written back into the returned JSON only.
nlohmann::json to_manifest(const Collage& collage);

// Parses a manifest, resolving images through `load_asset`, and validates
// the result. Throws ValidationError on schema or content problems.
Collage from_manifest(const nlohmann::json& manifest, const AssetLoader& load_asset);

// Writes `dir/collage.json` plus one PNG per layer.
void save_project(const Collage& collage, const std::filesystem::path& dir);

// Accepts either a project directory or the manifest path itself.
Collage load_project(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& path);

// Generated asset name used for layers saved without one.
std::string default_asset_name(const Layer& layer, std::size_t index);

}  // namespace collage
