#include "collage/project_io.hpp"

#include <cctype>

#include "collage/errors.hpp"

namespace collage {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_relative(const std::string& path, const std::string& what) {
    const fs::path p(path);
    if (path.empty() || p.is_absolute()) {
        throw ValidationError(what + " must be a non-empty relative path: '" + path + "'");
    }
    for (const auto& part : p) {
        if (part == "..") {
            throw ValidationError(what + " must not leave the project directory: '" + path + "'");
        }
    }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) {
        throw ValidationError(where + ": missing field '" + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": field '" + key + "' has the wrong type");
    }
}

}  // namespace

std::string default_asset_name(const Layer& layer, std::size_t index) {
    std::string slug;
    for (char c : layer.name) {
        const auto uc = static_cast<unsigned char>(c);
        slug += std::isalnum(uc) ? static_cast<char>(std::tolower(uc)) : '_';
    }
    return "layer_" + std::to_string(index + 1) + (slug.empty() ? "" : "_" + slug) + ".png";
}

json to_manifest(const Collage& collage) {
    json layers = json::array();
    for (std::size_t i = 0; i < collage.layers.size(); ++i) {
        const Layer& l = collage.layers[i];
        json entry = {
            {"name", l.name},
            {"image", l.image_file.empty() ? default_asset_name(l, i) : l.image_file},
            {"placement", {{"x", l.placement.x}, {"y", l.placement.y}, {"scale", l.placement.scale}}},
            {"text", l.text},
            {"span", {l.span.begin, l.span.end}},
            {"noise_level", l.noise_level},
            {"controlnet_weight", l.controlnet_weight},
            {"attn_pos", l.attn_pos},
            {"attn_neg", l.attn_neg},
        };
        if (l.inverted_token) {
            entry["inverted_token"] = *l.inverted_token;
        }
        layers.push_back(std::move(entry));
    }
    return {
        {"version", kManifestVersion},
        {"prompt", collage.prompt},
        {"negative_prompt", collage.negative_prompt},
        {"canvas", {{"w", collage.canvas.width}, {"h", collage.canvas.height}}},
        {"layers", std::move(layers)},
    };
}

Collage from_manifest(const json& manifest, const AssetLoader& load_asset) {
    if (!manifest.is_object()) {
        throw ValidationError("manifest must be a JSON object");
    }
    const int version = field<int>(manifest, "version", "manifest");
    if (version != kManifestVersion) {
        throw ValidationError("unsupported manifest version " + std::to_string(version) + " (expected " +
                              std::to_string(kManifestVersion) + ")");
    }
    Collage c;
    c.prompt = field<std::string>(manifest, "prompt", "manifest");
    c.negative_prompt = manifest.value("negative_prompt", std::string{});
    const json canvas = field<json>(manifest, "canvas", "manifest");
    c.canvas = {field<int>(canvas, "w", "canvas"), field<int>(canvas, "h", "canvas")};

    const json layers = field<json>(manifest, "layers", "manifest");
    if (!layers.is_array()) {
        throw ValidationError("manifest: 'layers' must be an array");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const json& entry = layers[i];
        Layer l;
        l.name = field<std::string>(entry, "name", "layer " + std::to_string(i + 1));
        const std::string where = "layer " + std::to_string(i + 1) + " ('" + l.name + "')";
        l.image_file = field<std::string>(entry, "image", where);
        require_relative(l.image_file, where + " image");
        const json placement = field<json>(entry, "placement", where);
        l.placement = {field<double>(placement, "x", where + " placement"),
                       field<double>(placement, "y", where + " placement"),
                       field<double>(placement, "scale", where + " placement")};
        l.text = field<std::string>(entry, "text", where);
        const auto span = field<std::vector<std::size_t>>(entry, "span", where);
        if (span.size() != 2) {
            throw ValidationError(where + ": span must be [start, end)");
        }
        l.span = {span[0], span[1]};
        l.noise_level = field<double>(entry, "noise_level", where);
        l.controlnet_weight = field<double>(entry, "controlnet_weight", where);
        l.attn_pos = field<double>(entry, "attn_pos", where);
        l.attn_neg = field<double>(entry, "attn_neg", where);
        if (entry.contains("inverted_token") && !entry.at("inverted_token").is_null()) {
            l.inverted_token = field<std::string>(entry, "inverted_token", where);
            require_relative(*l.inverted_token, where + " inverted_token");
        }
        try {
            l.image = load_asset(l.image_file);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& e) {
            throw ValidationError(where + ": cannot load image asset '" + l.image_file + "': " + e.what());
        }
        c.layers.push_back(std::move(l));
    }
    validate_collage(c);
    return c;
}

fs::path manifest_path(const fs::path& path) {
    return fs::is_directory(path) ? path / kManifestName : path;
}

void save_project(const Collage& collage, const fs::path& dir) {
    validate_collage(collage);
    fs::create_directories(dir);
    json manifest = to_manifest(collage);
    for (std::size_t i = 0; i < collage.layers.size(); ++i) {
        const std::string name = manifest["layers"][i]["image"].get<std::string>();
        require_relative(name, "layer image");
        write_png(dir / name, collage.layers[i].image);
    }
    const std::string text = manifest.dump(2) + "\n";
    write_file_bytes(dir / kManifestName,
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Collage load_project(const fs::path& path) {
    const fs::path manifest_file = manifest_path(path);
    if (!fs::exists(manifest_file)) {
        throw ValidationError("project manifest not found: " + manifest_file.string());
    }
    json manifest;
    try {
        const auto bytes = read_file_bytes(manifest_file);
        manifest = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest " + manifest_file.string() + " is not valid JSON: " + e.what());
    }
    const fs::path root = manifest_file.parent_path();
    Collage c = from_manifest(manifest, [&](const std::string& rel) {
        const fs::path asset = root / rel;
        if (!fs::exists(asset)) {
            throw ValidationError("missing image asset: " + asset.string());
        }
        return read_png(asset);
    });
    return c;
}

}  // namespace collage
