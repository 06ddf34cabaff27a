#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "collage/backend.hpp"
#include "collage/collage.hpp"
#include "collage/metrics.hpp"

namespace httplib {
class Server;
}

namespace collage {

// On-disk state: a content-addressed image store with write-once sidecars,
// immutable collage revisions, mutable collage heads and an append-only job
// log.
class Store {
public:
    explicit Store(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    // Image id = SHA-256 of the PNG bytes.
    std::string put_image(const Image8& image);
    bool has_image(const std::string& id) const;
    std::vector<std::uint8_t> image_png(const std::string& id) const;
    Image8 image(const std::string& id) const;
    // Keeps the first sidecar written for an id; returns false when one existed.
    bool put_meta(const std::string& id, const nlohmann::json& meta);
    nlohmann::json meta(const std::string& id) const;

    // Saves an immutable snapshot; token blobs referenced by layers are copied
    // from `token_dir`. Returns the revision id (content hash).
    std::string save_revision(const Collage& collage, const std::filesystem::path& token_dir);
    Collage load_revision(const std::string& revision) const;
    std::filesystem::path revision_dir(const std::string& revision) const;

    std::string create_collage(const std::string& revision);
    void set_head(const std::string& collage_id, const std::string& revision);
    std::string head(const std::string& collage_id) const;
    bool has_collage(const std::string& collage_id) const;

    void append_log(const nlohmann::json& record);
    std::vector<nlohmann::json> read_log() const;

private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

enum class JobState { Queued, Running, Done, Failed };
std::string to_string(JobState state);

struct GenerationJob {
    std::string id;
    std::string kind;  // generate | refine | invert
    std::string collage_id;
    std::string revision;
    nlohmann::json request;
    JobState state = JobState::Queued;
    int progress_step = 0;
    int progress_total = 0;
    std::vector<std::string> outputs;
    std::optional<std::string> error;

    nlohmann::json to_json() const;
};

struct ServiceConfig {
    std::filesystem::path data_dir;
    nlohmann::json backend{{"kind", "mock"}};
    // Backend instances; each has one worker.
    int workers = 1;
    std::uint64_t embedder_seed = 7;
};

class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds to `port` (0 picks a free one) and serves in a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    Store& store() { return store_; }
    std::optional<GenerationJob> job(const std::string& id) const;
    // Blocks until the job leaves queued/running.
    GenerationJob wait(const std::string& id) const;

    // Regenerates the image described by a stored sidecar.
    Image8 replay(const std::string& image_id);

    // Library-level entry points used by the HTTP handlers.
    std::string submit_generate(const std::string& collage_id, const nlohmann::json& body);
    std::string submit_refine(const std::string& image_id, const nlohmann::json& body);
    std::string submit_invert(const std::string& collage_id, const std::string& layer, const nlohmann::json& body);

private:
    struct Task {
        std::string job_id;
    };

    void routes();
    void worker(int index);
    std::string enqueue(GenerationJob job);
    void update(const std::string& id, const std::function<void(GenerationJob&)>& fn);
    // Returns the output ids; they are published only when the job is done.
    std::vector<std::string> run_job(DiffusionBackend& backend, const std::string& id);

    ServiceConfig config_;
    Store store_;
    std::unique_ptr<httplib::Server> server_;
    std::thread server_thread_;
    std::vector<std::unique_ptr<DiffusionBackend>> backends_;
    std::vector<std::thread> workers_;
    MockEmbeddingModel embedder_;

    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::deque<Task> queue_;
    std::map<std::string, GenerationJob> jobs_;
    std::uint64_t next_job_ = 1;
    bool stopping_ = false;
};

}  // namespace collage
