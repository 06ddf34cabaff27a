#include "collage/layer_inversion.hpp"

#include <cmath>
#include <cstring>

#include "collage/errors.hpp"
#include "collage/image.hpp"
#include "collage/sampler.hpp"

namespace collage {

namespace {

constexpr char kTokenMagic[4] = {'C', 'L', 'T', 'K'};
constexpr std::uint32_t kTokenVersion = 1;

void check_layer_index(const Collage& collage, std::size_t layer_index) {
    if (layer_index < 1 || layer_index > collage.layers.size()) {
        throw ValidationError("layer index " + std::to_string(layer_index) + " out of range 1.." +
                              std::to_string(collage.layers.size()));
    }
}

struct Problem {
    Latent target;
    GridD mask;
    Matrix embeddings;
    int position = 1;
};

Problem make_problem(const DiffusionBackend& backend, const Collage& collage, std::size_t layer_index,
                     const std::vector<double>& embedding) {
    const auto t = build_inversion_target(collage, layer_index);
    Problem p;
    p.target = backend.encode_image(t.target);
    p.mask = area_resample(t.mask, p.target.dims());
    const auto& layer = collage.layers[layer_index - 1];
    p.embeddings = backend.token_embeddings(
        inversion_prompt(backend.tokenizer(), layer, embedding, static_cast<int>(layer_index)));
    return p;
}

void set_row(Matrix& m, int row, const std::vector<double>& v) {
    std::copy(v.begin(), v.end(), m.row(row));
}

double loss_at(DiffusionBackend& backend, const Problem& p, double sigma, const Latent& noise) {
    Latent x = p.target;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        x.data[i] += sigma * noise.data[i];
    }
    const Matrix ctx = backend.encode_text(p.embeddings);
    const Latent pred = backend.denoise(x, sigma, ctx, ContextKind::Prompt, nullptr);
    return inversion_loss(p.target, pred, p.mask);
}

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), b, b + sizeof(T));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw ValidationError("truncated token blob: " + source_);
        }
    }
    const std::vector<std::uint8_t>& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

InversionTarget build_inversion_target(const Collage& collage, std::size_t layer_index) {
    check_layer_index(collage, layer_index);
    const auto placed = rasterize_layers(collage);
    InversionTarget out;
    out.target = composite_layers(placed, layer_index);
    out.mask = alpha_channel(placed[layer_index - 1]);
    return out;
}

double inversion_loss(const Latent& target, const Latent& pred, const GridD& mask) {
    require_same_shape(target, pred, "inversion_loss");
    if (mask.dims() != target.dims()) {
        throw std::invalid_argument("inversion_loss: mask resolution differs from the latent");
    }
    const std::size_t plane = target.plane();
    double sum = 0.0;
    for (int c = 0; c < target.channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double r = mask[i] * (target.data[c * plane + i] - pred.data[c * plane + i]);
            sum += r * r;
        }
    }
    return sum / static_cast<double>(target.data.size());
}

Latent inversion_loss_grad(const Latent& target, const Latent& pred, const GridD& mask) {
    require_same_shape(target, pred, "inversion_loss_grad");
    const std::size_t plane = target.plane();
    const double n = static_cast<double>(target.data.size());
    Latent g(target.channels, target.height, target.width);
    for (int c = 0; c < target.channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t k = c * plane + i;
            g.data[k] = -2.0 * mask[i] * mask[i] * (target.data[k] - pred.data[k]) / n;
        }
    }
    return g;
}

PromptEncoding inversion_prompt(const Tokenizer& tokenizer, const Layer& layer, std::vector<double> embedding,
                                int layer_index) {
    PromptEncoding enc;
    enc.max_length = tokenizer.max_length();
    enc.pad_id = tokenizer.pad_token();
    PromptToken start;
    start.id = tokenizer.start_token();
    start.kind = TokenKind::Start;
    enc.tokens.push_back(start);
    PromptToken injected;
    injected.id = tokenizer.end_token();
    injected.kind = TokenKind::Injected;
    injected.injected_layer = layer_index;
    injected.embedding = std::move(embedding);
    enc.tokens.push_back(std::move(injected));
    for (const Token& t : tokenizer.tokenize(layer.text)) {
        PromptToken p;
        p.id = t.id;
        p.kind = TokenKind::Text;
        p.byte_begin = t.byte_begin;
        p.byte_end = t.byte_end;
        enc.tokens.push_back(p);
    }
    PromptToken end;
    end.id = tokenizer.end_token();
    end.kind = TokenKind::End;
    enc.tokens.push_back(end);
    if (enc.tokens.size() > static_cast<std::size_t>(enc.max_length)) {
        throw ValidationError("layer text of '" + layer.name + "' exceeds the token limit");
    }
    return enc;
}

double evaluate_inversion_loss(DiffusionBackend& backend, const Collage& collage, std::size_t layer_index,
                               const std::vector<double>& embedding, const InversionConfig& config) {
    check_layer_index(collage, layer_index);
    const Problem p = make_problem(backend, collage, layer_index, embedding);
    NormalRng rng = make_rng(config.seed, RngStream::InversionEval);
    double total = 0.0;
    const int draws = std::max(1, config.eval_draws);
    for (int k = 0; k < draws; ++k) {
        const double sigma = backend.sample_training_sigma(rng);
        const Latent noise = gaussian_like(p.target, rng);
        total += loss_at(backend, p, sigma, noise);
    }
    return total / draws;
}

InvertedToken invert_layer(DiffusionBackend& backend, const Collage& collage, std::size_t layer_index,
                           const InversionConfig& config,
                           const std::function<void(const InversionProgress&)>& progress) {
    check_layer_index(collage, layer_index);
    if (backend.installed_hooks() != 0) {
        throw BackendError("layer inversion requires a backend without attention hooks");
    }
    if (config.steps < 0 || !(config.learning_rate >= 0.0) || !(config.beta >= 0.0 && config.beta < 1.0)) {
        throw ValidationError("invalid inversion config");
    }
    const Layer& layer = collage.layers[layer_index - 1];
    std::vector<double> embedding = backend.embedding_of(config.init_word);

    InvertedToken token;
    token.layer_name = layer.name;
    token.backend_id = backend.identifier();
    token.initial_loss = evaluate_inversion_loss(backend, collage, layer_index, embedding, config);

    Problem p = make_problem(backend, collage, layer_index, embedding);
    NormalRng rng = make_rng(config.seed, RngStream::Inversion);
    std::vector<double> second(embedding.size(), 0.0);
    double beta_power = 1.0;
    for (int step = 1; step <= config.steps; ++step) {
        const double sigma = backend.sample_training_sigma(rng);
        Latent x = p.target;
        for (double& v : x.data) {
            v += sigma * rng.normal();
        }
        const Matrix ctx = backend.encode_text(p.embeddings);
        const Latent pred = backend.denoise(x, sigma, ctx, ContextKind::Prompt, nullptr);
        const double loss = inversion_loss(p.target, pred, p.mask);
        if (!std::isfinite(loss)) {
            throw InversionDivergedError(step, "inversion diverged at step " + std::to_string(step) +
                                                   " (non-finite loss)");
        }
        const Latent g_pred = inversion_loss_grad(p.target, pred, p.mask);
        const auto grad = backend.denoise_embedding_vjp(x, sigma, p.embeddings, p.position, g_pred);
        beta_power *= config.beta;
        for (std::size_t i = 0; i < embedding.size(); ++i) {
            if (!std::isfinite(grad[i])) {
                throw InversionDivergedError(step, "inversion diverged at step " + std::to_string(step) +
                                                       " (non-finite gradient)");
            }
            second[i] = config.beta * second[i] + (1.0 - config.beta) * grad[i] * grad[i];
            const double v_hat = second[i] / (1.0 - beta_power);
            embedding[i] -= config.learning_rate * grad[i] / (std::sqrt(v_hat) + config.epsilon);
        }
        set_row(p.embeddings, p.position, embedding);
        if (progress) {
            progress({step, config.steps, loss});
        }
    }
    token.embedding = embedding;
    token.steps_trained = config.steps;
    token.final_loss = evaluate_inversion_loss(backend, collage, layer_index, embedding, config);
    return token;
}

Injection inject_token(const Collage& collage, const PromptEncoding& encoding, const InvertedToken& token,
                       int layer_index) {
    if (layer_index < 1 || static_cast<std::size_t>(layer_index) > collage.layers.size()) {
        throw ValidationError("layer index out of range for token injection");
    }
    const Layer& layer = collage.layers[static_cast<std::size_t>(layer_index) - 1];
    if (token.layer_name != layer.name) {
        throw ValidationError("token was trained for layer '" + token.layer_name + "', not '" + layer.name + "'");
    }
    for (const auto& t : encoding.tokens) {
        if (t.kind == TokenKind::Injected && t.injected_layer == layer_index) {
            throw ValidationError("a token is already injected for layer '" + layer.name + "'");
        }
    }
    const TokenRoleMap roles = classify_tokens(collage, encoding);
    std::size_t insert_at = encoding.tokens.size();
    for (std::size_t p = 0; p < encoding.tokens.size(); ++p) {
        if (encoding.tokens[p].kind == TokenKind::Text && roles.roles[p] == layer_index) {
            insert_at = p;
            break;
        }
    }
    if (insert_at == encoding.tokens.size()) {
        throw ValidationError("layer '" + layer.name + "' has no layer tokens to attach a modifier token to");
    }
    Injection out;
    out.encoding = encoding;
    PromptToken injected;
    injected.id = encoding.pad_id;
    injected.kind = TokenKind::Injected;
    injected.injected_layer = layer_index;
    injected.embedding = token.embedding;
    out.encoding.tokens.insert(out.encoding.tokens.begin() + static_cast<std::ptrdiff_t>(insert_at), injected);
    if (out.encoding.tokens.size() > static_cast<std::size_t>(out.encoding.max_length)) {
        throw ValidationError("prompt exceeds the token limit of " + std::to_string(out.encoding.max_length) +
                              " after injecting a token for layer '" + layer.name + "'");
    }
    out.roles = classify_tokens(collage, out.encoding);
    return out;
}

PromptEncoding remove_token(const PromptEncoding& encoding, int layer_index) {
    PromptEncoding out = encoding;
    std::erase_if(out.tokens, [&](const PromptToken& t) {
        return t.kind == TokenKind::Injected && t.injected_layer == layer_index;
    });
    return out;
}

void save_token(const std::filesystem::path& path, const InvertedToken& token) {
    std::vector<std::uint8_t> out(kTokenMagic, kTokenMagic + 4);
    put(out, kTokenVersion);
    put(out, static_cast<std::uint32_t>(token.embedding.size()));
    put(out, static_cast<std::int32_t>(token.steps_trained));
    put(out, token.initial_loss);
    put(out, token.final_loss);
    put_string(out, token.backend_id);
    put_string(out, token.layer_name);
    for (double v : token.embedding) {
        put(out, v);
    }
    write_file_bytes(path, out);
}

InvertedToken load_token(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ValidationError("missing inverted token: " + path.string());
    }
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kTokenMagic, 4) != 0) {
        throw ValidationError("not a token blob: " + path.string());
    }
    std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
    Reader r(body, path.string());
    if (r.get<std::uint32_t>() != kTokenVersion) {
        throw ValidationError("unsupported token blob version: " + path.string());
    }
    InvertedToken t;
    const auto width = r.get<std::uint32_t>();
    t.steps_trained = r.get<std::int32_t>();
    t.initial_loss = r.get<double>();
    t.final_loss = r.get<double>();
    t.backend_id = r.get_string();
    t.layer_name = r.get_string();
    t.embedding.resize(width);
    for (double& v : t.embedding) {
        v = r.get<double>();
    }
    return t;
}

void check_token_compatible(const InvertedToken& token, const DiffusionBackend& backend) {
    if (token.backend_id != backend.identifier()) {
        throw ValidationError("token for layer '" + token.layer_name + "' was trained on backend '" +
                              token.backend_id + "', not '" + backend.identifier() + "'");
    }
    if (static_cast<int>(token.embedding.size()) != backend.embedding_width()) {
        throw ValidationError("token for layer '" + token.layer_name + "' has embedding width " +
                              std::to_string(token.embedding.size()));
    }
}

}  // namespace collage
