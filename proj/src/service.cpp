#include "collage/service.hpp"

#include <httplib.h>

#include <fstream>
#include <random>
#include <set>

#include "collage/autoparams.hpp"
#include "collage/errors.hpp"
#include "collage/hash.hpp"
#include "collage/layer_inversion.hpp"
#include "collage/pipeline.hpp"
#include "collage/project_io.hpp"

namespace collage {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 128 &&
           std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

void require_id(const std::string& id, const char* what) {
    if (!valid_id(id)) {
        throw NotFound(std::string("unknown ") + what + " '" + id + "'");
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw std::runtime_error("cannot write " + p.string());
    }
    fs::rename(tmp, p);
}

fs::path make_staging(const fs::path& root) {
    std::random_device rd;
    const fs::path dir = root / "staging" / (std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
    return dir;
}

struct StagingGuard {
    fs::path dir;
    ~StagingGuard() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

// Layer reference: 1-based index or layer name.
std::size_t resolve_layer(const Collage& collage, const std::string& ref) {
    if (!ref.empty() && std::all_of(ref.begin(), ref.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const std::size_t k = std::stoul(ref);
        if (k >= 1 && k <= collage.layers.size()) return k;
    }
    for (std::size_t i = 0; i < collage.layers.size(); ++i) {
        if (collage.layers[i].name == ref) return i + 1;
    }
    throw ValidationError("no layer '" + ref + "' in collage");
}

std::string layer_ref(const json& v) {
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_string()) return v.get<std::string>();
    throw ValidationError("layer must be a name or 1-based index");
}

std::vector<std::uint64_t> seeds_of(const json& body, std::uint64_t fallback) {
    std::vector<std::uint64_t> seeds;
    if (body.contains("seeds")) {
        for (const auto& s : body.at("seeds")) seeds.push_back(s.get<std::uint64_t>());
        if (seeds.empty()) throw ValidationError("seeds must not be empty");
    } else {
        seeds.push_back(fallback);
    }
    return seeds;
}

std::string slug(const std::string& s) {
    std::string out;
    for (unsigned char c : s) out.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_');
    return out.empty() ? "layer" : out;
}

}  // namespace

// ---------------------------------------------------------------- Store

Store::Store(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "images");
    fs::create_directories(root_ / "revisions");
    fs::create_directories(root_ / "collages");
}

std::string Store::put_image(const Image8& image) {
    const auto png = encode_png(image);
    const std::string id = sha256_hex(png);
    const fs::path p = root_ / "images" / (id + ".png");
    std::lock_guard lock(mutex_);
    if (!fs::exists(p)) {
        const fs::path tmp = p.string() + ".tmp";
        write_file_bytes(tmp, png);
        fs::rename(tmp, p);
    }
    return id;
}

bool Store::has_image(const std::string& id) const {
    return valid_id(id) && fs::exists(root_ / "images" / (id + ".png"));
}

std::vector<std::uint8_t> Store::image_png(const std::string& id) const {
    if (!has_image(id)) throw NotFound("unknown image '" + id + "'");
    return read_file_bytes(root_ / "images" / (id + ".png"));
}

Image8 Store::image(const std::string& id) const {
    return decode_png(image_png(id));
}

bool Store::put_meta(const std::string& id, const json& meta) {
    const fs::path p = root_ / "images" / (id + ".json");
    std::lock_guard lock(mutex_);
    if (fs::exists(p)) return false;
    write_text(p, meta.dump(2));
    return true;
}

json Store::meta(const std::string& id) const {
    require_id(id, "image");
    const fs::path p = root_ / "images" / (id + ".json");
    if (!fs::exists(p)) throw NotFound("no metadata for image '" + id + "'");
    return json::parse(read_text(p));
}

std::string Store::save_revision(const Collage& collage, const fs::path& token_dir) {
    const fs::path staging = make_staging(root_);
    StagingGuard guard{staging};
    save_project(collage, staging);
    std::vector<std::uint8_t> digest_input;
    auto add = [&](const fs::path& p) {
        const auto bytes = read_file_bytes(p);
        const std::string h = sha256_hex(bytes);
        digest_input.insert(digest_input.end(), h.begin(), h.end());
    };
    add(staging / kManifestName);
    for (const auto& layer : collage.layers) {
        if (layer.inverted_token) {
            const fs::path src = token_dir / *layer.inverted_token;
            if (!fs::exists(src)) {
                throw ValidationError("missing inverted token: " + layer.inverted_token.value());
            }
            const fs::path dst = staging / *layer.inverted_token;
            fs::create_directories(dst.parent_path());
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
            add(dst);
        }
    }
    for (const auto& entry : fs::directory_iterator(staging)) {
        if (entry.path().extension() == ".png") add(entry.path());
    }
    const std::string rev = sha256_hex(digest_input).substr(0, 32);
    const fs::path dst = root_ / "revisions" / rev;
    std::lock_guard lock(mutex_);
    if (!fs::exists(dst)) {
        fs::rename(staging, dst);
    }
    return rev;
}

Collage Store::load_revision(const std::string& revision) const {
    return load_project(revision_dir(revision));
}

fs::path Store::revision_dir(const std::string& revision) const {
    require_id(revision, "revision");
    const fs::path p = root_ / "revisions" / revision;
    if (!fs::exists(p)) throw NotFound("unknown revision '" + revision + "'");
    return p;
}

std::string Store::create_collage(const std::string& revision) {
    std::lock_guard lock(mutex_);
    std::size_t n = 1;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(root_ / "collages")) ++n;
    std::string id;
    do {
        id = "c" + std::to_string(n++);
    } while (fs::exists(root_ / "collages" / id));
    write_text(root_ / "collages" / id, revision);
    return id;
}

void Store::set_head(const std::string& collage_id, const std::string& revision) {
    if (!has_collage(collage_id)) throw NotFound("unknown collage '" + collage_id + "'");
    std::lock_guard lock(mutex_);
    write_text(root_ / "collages" / collage_id, revision);
}

std::string Store::head(const std::string& collage_id) const {
    if (!has_collage(collage_id)) throw NotFound("unknown collage '" + collage_id + "'");
    std::lock_guard lock(mutex_);
    return read_text(root_ / "collages" / collage_id);
}

bool Store::has_collage(const std::string& collage_id) const {
    return valid_id(collage_id) && fs::exists(root_ / "collages" / collage_id);
}

void Store::append_log(const json& record) {
    std::lock_guard lock(mutex_);
    std::ofstream out(root_ / "jobs.jsonl", std::ios::app);
    out << record.dump() << "\n";
}

std::vector<json> Store::read_log() const {
    std::lock_guard lock(mutex_);
    std::vector<json> out;
    std::ifstream in(root_ / "jobs.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

// ---------------------------------------------------------------- jobs

std::string to_string(JobState state) {
    switch (state) {
        case JobState::Queued: return "queued";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "unknown";
}

json GenerationJob::to_json() const {
    json j = {{"id", id},
              {"kind", kind},
              {"collage", collage_id},
              {"revision", revision},
              {"request", request},
              {"state", collage::to_string(state)},
              {"progress", {{"step", progress_step}, {"total", progress_total}}},
              {"outputs", outputs}};
    j["error"] = error ? json(*error) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------- service

Service::Service(ServiceConfig config)
    : config_(std::move(config)), store_(config_.data_dir), embedder_(config_.embedder_seed) {
    if (config_.workers < 1) {
        throw ValidationError("service needs at least one worker");
    }
    std::set<std::string> seen;
    for (const auto& rec : store_.read_log()) {
        seen.insert(rec.value("id", ""));
    }
    next_job_ = seen.size() + 1;
    for (int i = 0; i < config_.workers; ++i) {
        backends_.push_back(make_backend(config_.backend));
    }
    for (int i = 0; i < config_.workers; ++i) {
        workers_.emplace_back([this, i] { worker(i); });
    }
    server_ = std::make_unique<httplib::Server>();
    routes();
}

Service::~Service() {
    stop();
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    changed_.notify_all();
    for (auto& t : workers_) {
        if (t.joinable()) t.join();
    }
}

int Service::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    server_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) {
        throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
    }
}

void Service::stop() {
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

std::optional<GenerationJob> Service::job(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

GenerationJob Service::wait(const std::string& id) const {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [&] {
        const auto it = jobs_.find(id);
        return it == jobs_.end() || it->second.state == JobState::Done || it->second.state == JobState::Failed;
    });
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw NotFound("unknown job '" + id + "'");
    return it->second;
}

std::string Service::enqueue(GenerationJob job) {
    std::string id;
    {
        std::lock_guard lock(mutex_);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "j%06llu", static_cast<unsigned long long>(next_job_++));
        id = buf;
        job.id = id;
        job.state = JobState::Queued;
        jobs_[id] = job;
        queue_.push_back({id});
    }
    store_.append_log(job.to_json());
    changed_.notify_all();
    return id;
}

void Service::update(const std::string& id, const std::function<void(GenerationJob&)>& fn) {
    {
        std::lock_guard lock(mutex_);
        fn(jobs_.at(id));
    }
    changed_.notify_all();
}

void Service::worker(int index) {
    DiffusionBackend& backend = *backends_[static_cast<std::size_t>(index)];
    for (;;) {
        Task task;
        {
            std::unique_lock lock(mutex_);
            changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_ && queue_.empty()) return;
            task = queue_.front();
            queue_.pop_front();
            jobs_.at(task.job_id).state = JobState::Running;
        }
        changed_.notify_all();
        try {
            auto outputs = run_job(backend, task.job_id);
            update(task.job_id, [&](GenerationJob& j) {
                j.outputs = std::move(outputs);
                j.state = j.outputs.empty() ? JobState::Failed : JobState::Done;
                if (j.outputs.empty()) j.error = "job produced no outputs";
            });
        } catch (const std::exception& e) {
            const std::string msg = e.what();
            update(task.job_id, [&](GenerationJob& j) {
                j.state = JobState::Failed;
                j.outputs.clear();
                j.error = msg;
            });
        }
        if (backend.installed_hooks() != 0) {
            backend.set_attention_processor(nullptr);
        }
        const auto final_job = job(task.job_id);
        if (final_job) store_.append_log(final_job->to_json());
    }
}

std::string Service::submit_generate(const std::string& collage_id, const json& body) {
    GenerationJob job;
    job.kind = "generate";
    job.collage_id = collage_id;
    job.revision = store_.head(collage_id);
    const GenerationConfig cfg = config_from_json(body.value("config", json::object()));
    validate_config(cfg);
    seeds_of(body, cfg.seed);
    job.request = body;
    return enqueue(std::move(job));
}

std::string Service::submit_refine(const std::string& image_id, const json& body) {
    if (!store_.has_image(image_id)) throw NotFound("unknown image '" + image_id + "'");
    const json meta = store_.meta(image_id);
    GenerationJob job;
    job.kind = "refine";
    if (body.contains("collage")) {
        job.collage_id = body.at("collage").get<std::string>();
        job.revision = store_.head(job.collage_id);
    } else {
        job.collage_id = meta.value("collage", "");
        job.revision = meta.value("revision", "");
    }
    if (!body.contains("layer")) throw ValidationError("refine requires a layer");
    const Collage c = store_.load_revision(job.revision);
    resolve_layer(c, layer_ref(body.at("layer")));
    validate_config(config_from_json(body.value("config", json::object())));
    job.request = body;
    job.request["image"] = image_id;
    return enqueue(std::move(job));
}

std::string Service::submit_invert(const std::string& collage_id, const std::string& layer, const json& body) {
    GenerationJob job;
    job.kind = "invert";
    job.collage_id = collage_id;
    job.revision = store_.head(collage_id);
    resolve_layer(store_.load_revision(job.revision), layer);
    job.request = body;
    job.request["layer"] = layer;
    return enqueue(std::move(job));
}

std::vector<std::string> Service::run_job(DiffusionBackend& backend, const std::string& id) {
    const GenerationJob job = *this->job(id);
    const json& req = job.request;
    Collage collage = store_.load_revision(job.revision);
    const fs::path rev_dir = store_.revision_dir(job.revision);

    if (job.kind == "invert") {
        const std::size_t k = resolve_layer(collage, req.at("layer").get<std::string>());
        InversionConfig ic;
        ic.steps = req.value("steps", ic.steps);
        ic.learning_rate = req.value("lr", ic.learning_rate);
        ic.seed = req.value("seed", ic.seed);
        update(id, [&](GenerationJob& j) { j.progress_total = ic.steps; });
        const InvertedToken token = invert_layer(backend, collage, k, ic, [&](const InversionProgress& p) {
            update(id, [&](GenerationJob& j) { j.progress_step = p.step; });
        });
        const fs::path staging = make_staging(store_.root());
        StagingGuard guard{staging};
        if (fs::exists(rev_dir / "tokens")) {
            fs::copy(rev_dir / "tokens", staging / "tokens", fs::copy_options::recursive);
        }
        const std::string rel = "tokens/" + slug(collage.layers[k - 1].name) + ".tok";
        save_token(staging / rel, token);
        for (const auto& l : collage.layers) {
            if (l.inverted_token && !fs::exists(staging / *l.inverted_token)) {
                fs::create_directories((staging / *l.inverted_token).parent_path());
                fs::copy_file(rev_dir / *l.inverted_token, staging / *l.inverted_token);
            }
        }
        collage.layers[k - 1].inverted_token = rel;
        const std::string rev = store_.save_revision(collage, staging);
        store_.set_head(job.collage_id, rev);
        update(id, [&](GenerationJob& j) {
            j.request["final_loss"] = token.final_loss;
            j.request["initial_loss"] = token.initial_loss;
        });
        return {rev};
    }

    const GenerationConfig base_cfg = config_from_json(req.value("config", json::object()));
    const auto seeds = seeds_of(req, base_cfg.seed);
    int total_steps = 0;
    update(id, [&](GenerationJob& j) { j.progress_total = 0; });
    int done_steps = 0;
    std::vector<std::string> outputs;
    auto on_step = [&](const StepInfo&) {
        ++done_steps;
        update(id, [&](GenerationJob& j) {
            j.progress_step = done_steps;
            j.progress_total = std::max(j.progress_total, total_steps);
        });
    };

    if (job.kind == "generate") {
        const bool auto_p = req.value("auto_params", false);
        if (auto_p) collage = apply_auto_params(collage);
        const TokenSet tokens = base_cfg.ablation.ti ? load_project_tokens(collage, rev_dir) : TokenSet{};
        total_steps = static_cast<int>(seeds.size()) *
                      (static_cast<int>(std::ceil(base_cfg.steps * base_cfg.start_noise - 1e-9)));
        for (const auto seed : seeds) {
            GenerationConfig cfg = base_cfg;
            cfg.seed = seed;
            GenerationResult r = harmonize(backend, collage, cfg, tokens, on_step);
            const std::string image_id = store_.put_image(r.image);
            json meta = r.sidecar;
            meta["collage"] = job.collage_id;
            meta["revision"] = job.revision;
            meta["auto_params"] = auto_p;
            meta["job"] = id;
            meta["image"] = image_id;
            store_.put_meta(image_id, meta);
            outputs.push_back(image_id);
        }
        return outputs;
    }

    if (job.kind == "refine") {
        const std::string base_id = req.at("image").get<std::string>();
        const Image8 base = store_.image(base_id);
        const std::size_t k = resolve_layer(collage, layer_ref(req.at("layer")));
        RefineOptions opts;
        opts.allow_empty_foreground = req.value("allow_empty_foreground", false);
        const Layer& layer = collage.layers[k - 1];
        if (base_cfg.ablation.ti && layer.inverted_token) {
            opts.token = load_token(rev_dir / *layer.inverted_token);
        }
        total_steps = static_cast<int>(seeds.size()) *
                      (static_cast<int>(std::ceil(base_cfg.steps * base_cfg.start_noise - 1e-9)));
        for (const auto seed : seeds) {
            GenerationConfig cfg = base_cfg;
            cfg.seed = seed;
            GenerationResult r = refine_layer(backend, base, layer, collage, cfg, opts, on_step);
            const std::string image_id = store_.put_image(r.image);
            json meta = r.sidecar;
            meta["collage"] = job.collage_id;
            meta["revision"] = job.revision;
            meta["base_image"] = base_id;
            meta["layer"] = layer.name;
            meta["allow_empty_foreground"] = opts.allow_empty_foreground;
            meta["job"] = id;
            meta["image"] = image_id;
            store_.put_meta(image_id, meta);
            outputs.push_back(image_id);
        }
        return outputs;
    }
    throw ValidationError("unknown job kind '" + job.kind + "'");
}

Image8 Service::replay(const std::string& image_id) {
    const json meta = store_.meta(image_id);
    const std::string rev = meta.at("revision").get<std::string>();
    Collage collage = store_.load_revision(rev);
    const fs::path rev_dir = store_.revision_dir(rev);
    const GenerationConfig cfg = config_from_json(meta.at("config"));
    auto backend = make_backend(config_.backend);
    if (backend->identifier() != meta.value("backend", "")) {
        throw BackendError("sidecar was produced by backend '" + meta.value("backend", "") + "'");
    }
    if (meta.at("kind") == "refine") {
        RefineOptions opts;
        opts.allow_empty_foreground = meta.value("allow_empty_foreground", false);
        const std::size_t k = resolve_layer(collage, meta.at("layer").get<std::string>());
        const Layer& layer = collage.layers[k - 1];
        if (cfg.ablation.ti && layer.inverted_token) {
            opts.token = load_token(rev_dir / *layer.inverted_token);
        }
        return refine_layer(*backend, store_.image(meta.at("base_image").get<std::string>()), layer, collage, cfg,
                            opts)
            .image;
    }
    if (meta.value("auto_params", false)) collage = apply_auto_params(collage);
    const TokenSet tokens = cfg.ablation.ti ? load_project_tokens(collage, rev_dir) : TokenSet{};
    return harmonize(*backend, collage, cfg, tokens).image;
}

// ---------------------------------------------------------------- HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& fn) {
    return [fn = std::forward<F>(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const NotFound& e) {
            send_json(res, 404, {{"error", e.what()}});
        } catch (const ValidationError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const OccludedLayerError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const json::exception& e) {
            send_json(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", e.what()}});
        }
    };
}

json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

// Writes the manifest and every uploaded file into `dir`; missing assets are
// taken from `fallback` when given.
Collage read_upload(const httplib::Request& req, const fs::path& dir, const std::optional<fs::path>& fallback) {
    json manifest;
    if (req.is_multipart_form_data()) {
        if (!req.has_file("manifest")) throw ValidationError("multipart upload needs a 'manifest' part");
        manifest = json::parse(req.get_file_value("manifest").content);
        for (const auto& [name, file] : req.files) {
            if (name == "manifest") continue;
            const std::string rel = file.filename.empty() ? name : file.filename;
            const fs::path p = fs::path(rel).lexically_normal();
            if (p.is_absolute() || rel.find("..") != std::string::npos) {
                throw ValidationError("asset path must be relative: " + rel);
            }
            write_file_bytes(dir / p, std::span(reinterpret_cast<const std::uint8_t*>(file.content.data()),
                                                file.content.size()));
        }
    } else {
        manifest = json::parse(req.body);
    }
    if (fallback) {
        auto copy_missing = [&](const std::string& rel) {
            if (!fs::exists(dir / rel) && fs::exists(*fallback / rel)) {
                fs::create_directories((dir / rel).parent_path());
                fs::copy_file(*fallback / rel, dir / rel);
            }
        };
        for (const auto& l : manifest.value("layers", json::array())) {
            if (l.contains("image") && l.at("image").is_string()) copy_missing(l.at("image").get<std::string>());
            if (l.contains("inverted_token") && l.at("inverted_token").is_string()) {
                copy_missing(l.at("inverted_token").get<std::string>());
            }
        }
    }
    write_text(dir / kManifestName, manifest.dump(2));
    return load_project(dir);
}

json collage_body(Store& store, const std::string& id) {
    const std::string rev = store.head(id);
    const Collage c = store.load_revision(rev);
    return {{"id", id}, {"revision", rev}, {"manifest", json::parse(read_text(store.revision_dir(rev) / kManifestName))},
            {"layers", c.layers.size()}};
}

}  // namespace

void Service::routes() {
    auto& s = *server_;
    s.Post("/v1/collages", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const fs::path staging = make_staging(store_.root());
               StagingGuard guard{staging};
               const Collage c = read_upload(req, staging, std::nullopt);
               const std::string rev = store_.save_revision(c, staging);
               const std::string id = store_.create_collage(rev);
               send_json(res, 201, {{"id", id}, {"revision", rev}});
           }));
    s.Get(R"(/v1/collages/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, collage_body(store_, req.matches[1]));
          }));
    s.Put(R"(/v1/collages/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              const fs::path current = store_.revision_dir(store_.head(id));
              const fs::path staging = make_staging(store_.root());
              StagingGuard guard{staging};
              const Collage c = read_upload(req, staging, current);
              const std::string rev = store_.save_revision(c, staging);
              store_.set_head(id, rev);
              send_json(res, 200, collage_body(store_, id));
          }));
    s.Get(R"(/v1/collages/([A-Za-z0-9_-]+)/assets/(.+))",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              const fs::path dir = store_.revision_dir(store_.head(req.matches[1]));
              const std::string rel = req.matches[2];
              if (rel.find("..") != std::string::npos || !fs::exists(dir / rel)) {
                  throw NotFound("unknown asset '" + rel + "'");
              }
              const auto bytes = read_file_bytes(dir / rel);
              res.set_content(std::string(bytes.begin(), bytes.end()),
                              fs::path(rel).extension() == ".png" ? "image/png" : "application/octet-stream");
          }));
    s.Get(R"(/v1/collages/([A-Za-z0-9_-]+)/visibility)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              const Collage c = store_.load_revision(store_.head(req.matches[1]));
              const VisibilityMap vis = compute_visibility(c, c.canvas);
              send_json(res, 200, {{"w", c.canvas.width}, {"h", c.canvas.height}, {"indices", vis.indices.data()}});
          }));
    s.Post(R"(/v1/collages/([A-Za-z0-9_-]+)/autoparams)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
               const Collage c = store_.load_revision(store_.head(req.matches[1]));
               const json body = body_json(req);
               AutoParamsConfig cfg;
               if (body.contains("small_threshold")) cfg.small_threshold = body.at("small_threshold").get<double>();
               const auto params = auto_params(c, cfg);
               json manifest = to_manifest(apply_auto_params(c, cfg));
               json per_layer = json::array();
               for (std::size_t i = 0; i < params.size(); ++i) {
                   per_layer.push_back({{"name", c.layers[i].name},
                                        {"visible_fraction", params[i].visible_fraction},
                                        {"boosted", params[i].boosted}});
               }
               send_json(res, 200, {{"manifest", manifest}, {"layers", per_layer}});
           }));
    s.Post(R"(/v1/collages/([A-Za-z0-9_-]+)/invert)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
               if (!req.has_param("layer")) throw ValidationError("invert requires ?layer=");
               const std::string id =
                   submit_invert(req.matches[1], req.get_param_value("layer"), body_json(req));
               send_json(res, 202, {{"job", id}});
           }));
    s.Post(R"(/v1/collages/([A-Za-z0-9_-]+)/generate)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
               json body = body_json(req);
               if (req.has_param("auto_params")) body["auto_params"] = req.get_param_value("auto_params") != "0";
               send_json(res, 202, {{"job", submit_generate(req.matches[1], body)}});
           }));
    s.Post(R"(/v1/images/([A-Za-z0-9_-]+)/refine)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 202, {{"job", submit_refine(req.matches[1], body_json(req))}});
           }));
    s.Get(R"(/v1/jobs/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto j = job(req.matches[1]);
              if (!j) throw NotFound("unknown job '" + std::string(req.matches[1]) + "'");
              send_json(res, 200, j->to_json());
          }));
    s.Get(R"(/v1/images/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto png = store_.image_png(req.matches[1]);
              res.set_content(std::string(png.begin(), png.end()), "image/png");
          }));
    s.Get(R"(/v1/images/([A-Za-z0-9_-]+)/meta)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, store_.meta(req.matches[1]));
          }));
    s.Post(R"(/v1/collages/([A-Za-z0-9_-]+)/eval)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
               const Collage c = store_.load_revision(store_.head(req.matches[1]));
               const json body = body_json(req);
               if (!body.contains("galleries") || !body.at("galleries").is_object()) {
                   throw ValidationError("eval requires {galleries: {method: [image ids]}}");
               }
               std::vector<MethodScores> methods;
               for (const auto& [method, ids] : body.at("galleries").items()) {
                   std::vector<Image8> images;
                   std::vector<std::uint64_t> seeds;
                   for (const auto& image_id : ids) {
                       const std::string iid = image_id.get<std::string>();
                       images.push_back(store_.image(iid));
                       const json meta = store_.has_image(iid) ? store_.meta(iid) : json::object();
                       seeds.push_back(meta.value("seed", std::uint64_t{0}));
                   }
                   methods.push_back(score_gallery(embedder_, c, method, seeds, images));
               }
               const Report report = build_report(c, methods);
               json out = report_json(report);
               out["csv"] = report_csv(report);
               out["embedder"] = embedder_.identifier();
               send_json(res, 200, out);
           }));
}

}  // namespace collage
