#include "collage/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "collage/errors.hpp"
#include "collage/rng.hpp"

namespace collage {

namespace {

constexpr int kPool = 8;
constexpr int kImageFeatures = kPool * kPool * 3;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string fmt(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed << *v;
    return os.str();
}

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

MockEmbeddingModel::MockEmbeddingModel(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    NormalRng rng(derive_seed(seed, 100));
    projection_.resize(static_cast<std::size_t>(dim) * kImageFeatures);
    for (double& v : projection_) {
        v = rng.normal();
    }
}

std::string MockEmbeddingModel::identifier() const {
    return "mock-embedder/seed=" + std::to_string(seed_) + "/dim=" + std::to_string(dim_);
}

std::vector<double> MockEmbeddingModel::embed_text(const std::string& text) const {
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    std::string word;
    int words = 0;
    auto flush = [&] {
        if (word.empty()) return;
        NormalRng rng(derive_seed(seed_, fnv1a(word)));
        for (double& v : out) v += rng.normal();
        ++words;
        word.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            word.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    if (words > 0) {
        for (double& v : out) v /= words;
    }
    return out;
}

std::vector<double> MockEmbeddingModel::embed_image(const Image8& image) const {
    if (image.width <= 0 || image.height <= 0) {
        throw ValidationError("cannot embed an empty image");
    }
    const ImageF f = to_float(image);
    std::vector<double> feats(kImageFeatures, 0.0);
    for (int ch = 0; ch < 3; ++ch) {
        GridD plane(f.dims());
        for (int r = 0; r < f.height; ++r) {
            for (int c = 0; c < f.width; ++c) {
                const float* px = f.pixel(r, c);
                plane.at(r, c) = static_cast<double>(px[ch]) * px[3];
            }
        }
        const GridD pooled = area_resample(plane, {kPool, kPool});
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            feats[ch * kPool * kPool + i] = pooled[i] - 0.5;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    for (int d = 0; d < dim_; ++d) {
        double s = 0.0;
        for (int k = 0; k < kImageFeatures; ++k) {
            s += projection_[static_cast<std::size_t>(d) * kImageFeatures + k] * feats[k];
        }
        out[d] = s;
    }
    return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: vector sizes differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

MaskedRegion masked_region(const Image8& image, const VisibilityMap& visibility, int layer_index) {
    if (visibility.resolution() != image.dims()) {
        throw ValidationError("visibility map resolution differs from the image");
    }
    MaskedRegion out;
    out.image = image;
    bool any = false;
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            if (visibility.at(r, c) == layer_index) {
                any = true;
                continue;
            }
            std::uint8_t* px = out.image.pixel(r, c);
            px[0] = px[1] = px[2] = 0;
            px[3] = 255;
        }
    }
    out.absent = !any;
    return out;
}

std::optional<double> spatial_fidelity(const EmbeddingModel& model, const std::string& layer_text,
                                       const MaskedRegion& region) {
    if (region.absent) return std::nullopt;
    return cosine_similarity(model.embed_text(layer_text), model.embed_image(region.image));
}

std::optional<double> appearance_fidelity(const EmbeddingModel& model, const Image8& layer_image,
                                          const MaskedRegion& region) {
    if (region.absent) return std::nullopt;
    return cosine_similarity(model.embed_image(layer_image), model.embed_image(region.image));
}

MethodScores score_gallery(const EmbeddingModel& model, const Collage& collage, const std::string& method,
                           const std::vector<std::uint64_t>& seeds, const std::vector<Image8>& images) {
    if (seeds.size() != images.size()) {
        throw ValidationError("gallery '" + method + "' has " + std::to_string(images.size()) + " images for " +
                              std::to_string(seeds.size()) + " seeds");
    }
    const auto placed = rasterize_layers(collage);
    const VisibilityMap vis = compute_visibility(placed, collage.canvas);
    std::vector<Image8> layer_images;
    for (const auto& p : placed) {
        ImageF over_black = p;
        for (int r = 0; r < p.height; ++r) {
            for (int c = 0; c < p.width; ++c) {
                float* px = over_black.pixel(r, c);
                for (int k = 0; k < 3; ++k) px[k] *= px[3];
                px[3] = 1.0f;
            }
        }
        layer_images.push_back(to_bytes(over_black));
    }
    MethodScores out;
    out.method = method;
    out.seeds = seeds;
    for (const Image8& img : images) {
        if (img.dims() != collage.canvas) {
            throw ValidationError("gallery '" + method + "' image size differs from the canvas");
        }
        std::vector<LayerScore> row;
        for (std::size_t j = 0; j < collage.layers.size(); ++j) {
            const MaskedRegion region = masked_region(img, vis, static_cast<int>(j) + 1);
            row.push_back({spatial_fidelity(model, collage.layers[j].text, region),
                           appearance_fidelity(model, layer_images[j], region)});
        }
        out.scores.push_back(std::move(row));
    }
    return out;
}

Report build_report(const Collage& collage, const std::vector<MethodScores>& methods) {
    Report report;
    for (const auto& l : collage.layers) {
        report.layer_names.push_back(l.name);
    }
    const std::size_t n_layers = collage.layers.size();
    for (const auto& m : methods) {
        if (!methods.empty() && m.seeds != methods.front().seeds) {
            throw ValidationError("gallery '" + m.method + "' is not aligned by seed with '" +
                                  methods.front().method + "'");
        }
        if (m.scores.size() != m.seeds.size()) {
            throw ValidationError("gallery '" + m.method + "' seed count mismatch");
        }
        ReportRow row;
        row.method = m.method;
        std::vector<double> all_s, all_a;
        std::vector<std::vector<double>> layer_s(n_layers), layer_a(n_layers);
        for (const auto& per_seed : m.scores) {
            if (per_seed.size() != n_layers) {
                throw ValidationError("gallery '" + m.method + "' layer count mismatch");
            }
            for (std::size_t j = 0; j < n_layers; ++j) {
                if (per_seed[j].spatial) {
                    all_s.push_back(*per_seed[j].spatial);
                    layer_s[j].push_back(*per_seed[j].spatial);
                }
                if (per_seed[j].appearance) {
                    all_a.push_back(*per_seed[j].appearance);
                    layer_a[j].push_back(*per_seed[j].appearance);
                }
            }
        }
        row.spatial = mean_of(all_s);
        row.appearance = mean_of(all_a);
        row.samples = static_cast<int>(all_s.size());
        for (std::size_t j = 0; j < n_layers; ++j) {
            row.per_layer.push_back({mean_of(layer_s[j]), mean_of(layer_a[j])});
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string report_csv(const Report& report) {
    std::ostringstream os;
    os << "method,layer,text_image,image_image\n";
    for (const auto& row : report.rows) {
        os << row.method << ",all," << fmt(row.spatial) << "," << fmt(row.appearance) << "\n";
        for (std::size_t j = 0; j < row.per_layer.size(); ++j) {
            os << row.method << "," << report.layer_names[j] << "," << fmt(row.per_layer[j].spatial) << ","
               << fmt(row.per_layer[j].appearance) << "\n";
        }
    }
    return os.str();
}

nlohmann::json report_json(const Report& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json layers = nlohmann::json::array();
        for (std::size_t j = 0; j < row.per_layer.size(); ++j) {
            layers.push_back({{"layer", report.layer_names[j]},
                              {"text_image", opt_json(row.per_layer[j].spatial)},
                              {"image_image", opt_json(row.per_layer[j].appearance)}});
        }
        rows.push_back({{"method", row.method},
                        {"text_image", opt_json(row.spatial)},
                        {"image_image", opt_json(row.appearance)},
                        {"samples", row.samples},
                        {"layers", layers}});
    }
    return {{"methods", rows}};
}

bool ordering_holds(const Report& report, const std::vector<std::string>& methods) {
    std::vector<const ReportRow*> ordered;
    for (const auto& name : methods) {
        const ReportRow* found = nullptr;
        for (const auto& row : report.rows) {
            if (row.method == name) found = &row;
        }
        if (found == nullptr || !found->spatial || !found->appearance) {
            return false;
        }
        ordered.push_back(found);
    }
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (!(*ordered[i]->spatial > *ordered[i - 1]->spatial) ||
            !(*ordered[i]->appearance > *ordered[i - 1]->appearance)) {
            return false;
        }
    }
    return true;
}

nlohmann::json rubric_template(const Collage& collage, const std::vector<std::string>& methods,
                               const std::vector<std::uint64_t>& seeds) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& l : collage.layers) {
        objects.push_back({{"layer", l.name},
                           {"text", l.text},
                           {"spatial_fidelity", nullptr},
                           {"appearance_attributes", nlohmann::json::array()}});
    }
    nlohmann::json sheets = nlohmann::json::array();
    for (const auto& m : methods) {
        for (const auto seed : seeds) {
            sheets.push_back({{"method", m}, {"seed", seed}, {"image_quality", nullptr}, {"objects", objects}});
        }
    }
    return {
        {"prompt", collage.prompt},
        {"axes",
         {{{"name", "image_quality"},
           {"question", "Is the image high quality and globally coherent?"},
           {"scale", "0 = no, 1 = yes"}},
          {{"name", "spatial_fidelity"},
           {"question", "For each desired object, is it generated in the desired position?"},
           {"scale", "0 = no, 1 = yes"}},
          {{"name", "appearance_fidelity"},
           {"question",
            "For each desired object, how closely do its visual attributes match the layer image? "
            "Requires spatial fidelity."},
           {"scale", "list visual attributes; score each from 0.0 to 1.0"}}}},
        {"sheets", sheets},
    };
}

}  // namespace collage
