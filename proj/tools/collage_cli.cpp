#include <CLI11.hpp>

#include <algorithm>
#include <cctype>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "collage/autoparams.hpp"
#include "collage/errors.hpp"
#include "collage/layer_inversion.hpp"
#include "collage/metrics.hpp"
#include "collage/pipeline.hpp"
#include "collage/project_io.hpp"
#include "collage/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace collage;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;

struct Common {
    bool json_mode = false;
    std::string backend_config;
};

json load_backend_config(const Common& common) {
    if (common.backend_config.empty()) {
        return backend_config_from_env();
    }
    std::ifstream in(common.backend_config);
    if (!in) throw ValidationError("cannot read backend config: " + common.backend_config);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("invalid backend config: " + std::string(e.what()));
    }
}

std::string seed_stem(std::uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seed_%04llu", static_cast<unsigned long long>(seed));
    return buf;
}

std::vector<std::uint64_t> seed_list(int count, std::uint64_t first) {
    if (count < 1) throw ValidationError("--seeds must be >= 1");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
    return seeds;
}

void write_output(const fs::path& out_dir, const GenerationResult& r, json& outputs) {
    const fs::path png = out_dir / (seed_stem(r.seed) + ".png");
    const fs::path meta = out_dir / (seed_stem(r.seed) + ".json");
    write_png(png, r.image);
    std::ofstream(meta) << r.sidecar.dump(2) << "\n";
    outputs.push_back(png.string());
}

std::size_t find_layer(const Collage& c, const std::string& name) {
    for (std::size_t i = 0; i < c.layers.size(); ++i) {
        if (c.layers[i].name == name) return i + 1;
    }
    throw ValidationError("no layer named '" + name + "' in the project");
}

std::string slug(const std::string& s) {
    std::string out;
    for (unsigned char c : s) out.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_');
    return out.empty() ? "layer" : out;
}

struct GenerateArgs {
    std::string project;
    int seeds = 1;
    std::uint64_t first_seed = 0;
    std::string ablation = "gh";
    bool controlnet = false;
    bool auto_params = false;
    std::string out;
    int steps = 50;
    double start_noise = 0.75;
    double guidance = 7.5;
    double blur = 1.0;
};

json run_generate(const Common& common, const GenerateArgs& a) {
    const fs::path project_dir = fs::is_directory(a.project) ? fs::path(a.project) : fs::path(a.project).parent_path();
    Collage collage = load_project(a.project);
    if (a.auto_params) collage = apply_auto_params(collage);
    GenerationConfig cfg;
    cfg.ablation = parse_ablation(a.ablation);
    cfg.ablation.cn = cfg.ablation.cn || a.controlnet;
    cfg.steps = a.steps;
    cfg.start_noise = a.start_noise;
    cfg.guidance_scale = a.guidance;
    cfg.blur_sigma = a.blur;
    validate_config(cfg);
    const TokenSet tokens = cfg.ablation.ti ? load_project_tokens(collage, project_dir) : TokenSet{};
    auto backend = make_backend(load_backend_config(common));
    json outputs = json::array();
    for (const auto seed : seed_list(a.seeds, a.first_seed)) {
        cfg.seed = seed;
        write_output(a.out, harmonize(*backend, collage, cfg, tokens), outputs);
    }
    return {{"outputs", outputs}, {"ablation", ablation_name(cfg.ablation)}};
}

struct InvertArgs {
    std::string project;
    std::string layer;
    int steps = 500;
    double lr = 5e-3;
    std::uint64_t seed = 0;
};

json run_invert(const Common& common, const InvertArgs& a) {
    const fs::path dir = fs::is_directory(a.project) ? fs::path(a.project) : fs::path(a.project).parent_path();
    Collage collage = load_project(a.project);
    auto backend = make_backend(load_backend_config(common));
    InversionConfig ic;
    ic.steps = a.steps;
    ic.learning_rate = a.lr;
    ic.seed = a.seed;
    std::vector<std::size_t> targets;
    if (a.layer.empty()) {
        for (std::size_t i = 1; i <= collage.layers.size(); ++i) targets.push_back(i);
    } else {
        targets.push_back(find_layer(collage, a.layer));
    }
    json tokens = json::array();
    for (const std::size_t k : targets) {
        const InvertedToken t = invert_layer(*backend, collage, k, ic);
        const std::string rel = "tokens/" + slug(collage.layers[k - 1].name) + ".tok";
        save_token(dir / rel, t);
        collage.layers[k - 1].inverted_token = rel;
        tokens.push_back({{"layer", t.layer_name},
                          {"token", rel},
                          {"initial_loss", t.initial_loss},
                          {"final_loss", t.final_loss}});
    }
    save_project(collage, dir);
    return {{"tokens", tokens}};
}

struct RefineArgs {
    std::string image;
    std::string project;
    std::string layer;
    int seeds = 1;
    std::uint64_t first_seed = 0;
    std::string out;
    int steps = 50;
    double start_noise = 0.75;
    double guidance = 7.5;
    double blur = 1.0;
    std::string ablation = "gh";
    bool allow_empty = false;
};

json run_refine(const Common& common, const RefineArgs& a) {
    const Collage collage = load_project(a.project);
    const Image8 base = read_png(a.image);
    const Layer& layer = collage.layers[find_layer(collage, a.layer) - 1];
    GenerationConfig cfg;
    cfg.ablation = parse_ablation(a.ablation);
    cfg.steps = a.steps;
    cfg.start_noise = a.start_noise;
    cfg.guidance_scale = a.guidance;
    cfg.blur_sigma = a.blur;
    RefineOptions opts;
    if (cfg.ablation.ti && layer.inverted_token) {
        const fs::path dir = fs::is_directory(a.project) ? fs::path(a.project) : fs::path(a.project).parent_path();
        opts.token = load_token(dir / *layer.inverted_token);
    }
    opts.allow_empty_foreground = a.allow_empty;
    auto backend = make_backend(load_backend_config(common));
    json outputs = json::array();
    for (const auto seed : seed_list(a.seeds, a.first_seed)) {
        cfg.seed = seed;
        write_output(a.out, refine_layer(*backend, base, layer, collage, cfg, opts), outputs);
    }
    return {{"outputs", outputs}};
}

struct EvalArgs {
    std::string project;
    std::vector<std::string> galleries;
    std::string out = "report.csv";
    std::string json_out;
    std::string rubric;
    std::uint64_t embedder_seed = 7;
};

json run_eval(const EvalArgs& a) {
    const Collage collage = load_project(a.project);
    const MockEmbeddingModel model(a.embedder_seed);
    std::vector<MethodScores> methods;
    std::vector<std::string> names;
    std::vector<std::uint64_t> rubric_seeds;
    for (const auto& g : a.galleries) {
        std::vector<std::pair<std::uint64_t, fs::path>> files;
        for (const auto& e : fs::directory_iterator(g)) {
            const std::string stem = e.path().stem().string();
            if (e.path().extension() == ".png" && stem.rfind("seed_", 0) == 0) {
                files.emplace_back(std::stoull(stem.substr(5)), e.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::vector<std::uint64_t> seeds;
        std::vector<Image8> images;
        for (const auto& [seed, path] : files) {
            seeds.push_back(seed);
            images.push_back(read_png(path));
        }
        const std::string name = fs::path(g).lexically_normal().filename().string().empty()
                                     ? fs::path(g).lexically_normal().parent_path().filename().string()
                                     : fs::path(g).lexically_normal().filename().string();
        names.push_back(name);
        rubric_seeds = seeds;
        methods.push_back(score_gallery(model, collage, name, seeds, images));
    }
    const Report report = build_report(collage, methods);
    {
        std::ofstream out(a.out);
        if (!out) throw ValidationError("cannot write " + a.out);
        out << report_csv(report);
    }
    json result = report_json(report);
    if (!a.json_out.empty()) std::ofstream(a.json_out) << result.dump(2) << "\n";
    if (!a.rubric.empty()) std::ofstream(a.rubric) << rubric_template(collage, names, rubric_seeds).dump(2) << "\n";
    result["csv"] = a.out;
    result["embedder"] = model.identifier();
    return result;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-conditioned diffusion harmonization"};
    app.require_subcommand(1);
    Common common;
    app.add_flag("--json", common.json_mode, "Machine-readable JSON output");
    app.add_option("--backend-config", common.backend_config,
                   "Backend JSON config (default: $COLLAGE_BACKEND_CONFIG or the mock backend)");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Harmonize a collage for a range of seeds");
    g->add_option("--project", gen.project, "Project directory or manifest")->required();
    g->add_option("--seeds", gen.seeds, "Number of seeds");
    g->add_option("--first-seed", gen.first_seed, "First seed");
    g->add_option("--ablation", gen.ablation, "gh | gh+ca | gh+ca+ti | gh+ca+ti+ln");
    g->add_flag("--controlnet", gen.controlnet, "Per-layer ControlNet weighting");
    g->add_flag("--auto-params", gen.auto_params, "Initialize layer parameters heuristically");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--steps", gen.steps, "Solver steps over the full schedule");
    g->add_option("--start-noise", gen.start_noise, "Global SDEdit strength in [0, 1]");
    g->add_option("--guidance", gen.guidance, "Classifier-free guidance scale");
    g->add_option("--blur", gen.blur, "Noise-image blur in latent cells");

    InvertArgs inv;
    auto* i = app.add_subcommand("invert", "Learn modifier tokens for layers");
    i->add_option("--project", inv.project, "Project directory or manifest")->required();
    i->add_option("--layer", inv.layer, "Layer name (default: all layers)");
    i->add_option("--steps", inv.steps, "Optimization steps");
    i->add_option("--lr", inv.lr, "Learning rate");
    i->add_option("--seed", inv.seed, "Noise seed");

    RefineArgs ref;
    auto* r = app.add_subcommand("refine", "Re-generate one layer on top of a generated image");
    r->add_option("--image", ref.image, "Base image (PNG)")->required();
    r->add_option("--project", ref.project, "Project directory or manifest")->required();
    r->add_option("--layer", ref.layer, "Layer name")->required();
    r->add_option("--seeds", ref.seeds, "Number of seeds");
    r->add_option("--first-seed", ref.first_seed, "First seed");
    r->add_option("--out", ref.out, "Output directory")->required();
    r->add_option("--steps", ref.steps, "Solver steps over the full schedule");
    r->add_option("--start-noise", ref.start_noise, "Global SDEdit strength in [0, 1]");
    r->add_option("--guidance", ref.guidance, "Classifier-free guidance scale");
    r->add_option("--blur", ref.blur, "Noise-image blur in latent cells");
    r->add_option("--ablation", ref.ablation, "Components for the refinement run (LN is always on)");
    r->add_flag("--allow-empty", ref.allow_empty, "Return the base image when the layer is not visible");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Per-layer similarity report over galleries");
    e->add_option("--project", ev.project, "Project directory or manifest")->required();
    e->add_option("--galleries", ev.galleries, "Gallery directories (one per method)")->required();
    e->add_option("--out", ev.out, "CSV report path");
    e->add_option("--json-out", ev.json_out, "JSON report path");
    e->add_option("--rubric", ev.rubric, "Write a human-rating rubric template here");
    e->add_option("--embedder-seed", ev.embedder_seed, "Seed of the mock embedding model");

    std::string ap_project;
    bool ap_write = false;
    auto* ap = app.add_subcommand("autoparams", "Print heuristic layer parameters as a manifest");
    ap->add_option("--project", ap_project, "Project directory or manifest")->required();
    ap->add_flag("--write", ap_write, "Write the parameters back into the project");

    std::string data_dir = "collage-data";
    std::string host = "127.0.0.1";
    int port = 8080;
    int workers = 1;
    auto* s = app.add_subcommand("serve", "Run the HTTP service");
    s->add_option("--data", data_dir, "Data directory");
    s->add_option("--host", host, "Bind address");
    s->add_option("--port", port, "Port");
    s->add_option("--workers", workers, "Backend instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitValidation;
    }

    int code = 0;
    json result;
    try {
        if (*g) {
            result = run_generate(common, gen);
        } else if (*i) {
            result = run_invert(common, inv);
        } else if (*r) {
            result = run_refine(common, ref);
        } else if (*e) {
            result = run_eval(ev);
        } else if (*ap) {
            Collage c = apply_auto_params(load_project(ap_project));
            if (ap_write) {
                save_project(c, fs::is_directory(ap_project) ? fs::path(ap_project) : fs::path(ap_project).parent_path());
            }
            result = {{"manifest", to_manifest(c)}};
        } else if (*s) {
            ServiceConfig cfg;
            cfg.data_dir = data_dir;
            cfg.backend = load_backend_config(common);
            cfg.workers = workers;
            Service service(cfg);
            std::cerr << "listening on http://" << host << ":" << port << "/v1\n";
            service.listen(host, port);
            return 0;
        }
    } catch (const ValidationError& ex) {
        code = kExitValidation;
        result = {{"error", ex.what()}};
    } catch (const OccludedLayerError& ex) {
        code = kExitValidation;
        result = {{"error", ex.what()}};
    } catch (const InversionDivergedError& ex) {
        code = kExitBackend;
        result = {{"error", ex.what()}, {"step", ex.step()}};
    } catch (const BackendError& ex) {
        code = kExitBackend;
        result = {{"error", ex.what()}};
    } catch (const std::exception& ex) {
        code = 1;
        result = {{"error", ex.what()}};
    }
    result["ok"] = code == 0;
    result["exit_code"] = code;
    if (common.json_mode) {
        std::cout << result.dump() << "\n";
    } else if (code != 0) {
        std::cerr << "error: " << result["error"].get<std::string>() << "\n";
    } else if (result.contains("outputs")) {
        for (const auto& o : result["outputs"]) std::cout << o.get<std::string>() << "\n";
    } else {
        std::cout << result.dump(2) << "\n";
    }
    return code;
}
