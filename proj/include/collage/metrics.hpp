#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "collage/collage.hpp"

namespace collage {

// Vision-language embedding model (text and image towers in one space).
class EmbeddingModel {
public:
    virtual ~EmbeddingModel() = default;
    virtual std::string identifier() const = 0;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
    virtual std::vector<double> embed_image(const Image8& image) const = 0;
};

// Deterministic stand-in: images are area-pooled to 8x8 RGB and projected by
// a seeded random matrix; text is the mean of seeded per-word vectors.
class MockEmbeddingModel final : public EmbeddingModel {
public:
    explicit MockEmbeddingModel(std::uint64_t seed = 7, int dim = 64);
    std::string identifier() const override;
    std::vector<double> embed_text(const std::string& text) const override;
    std::vector<double> embed_image(const Image8& image) const override;

private:
    std::uint64_t seed_;
    int dim_;
    std::vector<double> projection_;  // dim x 192
};

// Cosine similarity of the normalized vectors; 0 when either is zero.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct MaskedRegion {
    Image8 image;  // pixels outside the layer's visible region set to opaque black
    bool absent = false;
};

// `visibility` must be at the image resolution.
MaskedRegion masked_region(const Image8& image, const VisibilityMap& visibility, int layer_index);

// Text-image similarity; nullopt when the region is absent.
std::optional<double> spatial_fidelity(const EmbeddingModel& model, const std::string& layer_text,
                                       const MaskedRegion& region);
// Image-image similarity between the layer image and the region.
std::optional<double> appearance_fidelity(const EmbeddingModel& model, const Image8& layer_image,
                                          const MaskedRegion& region);

struct LayerScore {
    std::optional<double> spatial;
    std::optional<double> appearance;
};

// scores[seed][layer]
struct MethodScores {
    std::string method;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<LayerScore>> scores;
};

// Scores every image of a gallery (one per seed) for every layer of the collage.
MethodScores score_gallery(const EmbeddingModel& model, const Collage& collage, const std::string& method,
                           const std::vector<std::uint64_t>& seeds, const std::vector<Image8>& images);

struct ReportRow {
    std::string method;
    std::optional<double> spatial;
    std::optional<double> appearance;
    // Per-layer means over seeds.
    std::vector<LayerScore> per_layer;
    int samples = 0;
};

struct Report {
    std::vector<std::string> layer_names;
    std::vector<ReportRow> rows;
};

// Averages over seeds and layers, skipping absent regions. Throws
// ValidationError when methods disagree on seeds or layer counts.
Report build_report(const Collage& collage, const std::vector<MethodScores>& methods);

std::string report_csv(const Report& report);
nlohmann::json report_json(const Report& report);

// True when both metrics strictly increase along `methods` (in that order).
bool ordering_holds(const Report& report, const std::vector<std::string>& methods);

// Human-rating form for image quality, spatial and appearance fidelity.
nlohmann::json rubric_template(const Collage& collage, const std::vector<std::string>& methods,
                               const std::vector<std::uint64_t>& seeds);

}  // namespace collage
