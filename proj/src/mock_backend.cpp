#include "collage/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "collage/errors.hpp"
#include "collage/hash.hpp"

namespace collage {

namespace {

constexpr int kChannels = 4;

const std::vector<std::string>& tokenizer_corpus() {
    static const std::vector<std::string> corpus = {
        "a bento box with rice, edamame, ginger, and sushi",
        "a photo of a blue and green striped sweater on a wooden table",
        "a ship sailing past the rocks and a lighthouse at sunset",
        "a birthday cake with strawberries and candles on a plate",
        "a nice photo of a cat sitting next to a red apple",
        "the ocean, the sky, the mountains and the forest",
        "a painting of a house with a garden and flowers",
        "low quality, blurry, distorted, ugly, bad anatomy, watermark",
        "red potatoes, red apples, green beans and yellow bananas",
        "a dog running on the beach with waves in the background",
        "a nice wooden chair beside a window with curtains",
    };
    return corpus;
}

Matrix random_matrix(NormalRng& rng, int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data) {
        v = rng.normal() * scale;
    }
    return m;
}

void softmax_rows(Matrix& m) {
    for (int i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        double mx = -INFINITY;
        for (int j = 0; j < m.cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (int j = 0; j < m.cols; ++j) r[j] /= sum;
    }
}

void append_bytes(std::vector<std::uint8_t>& out, const std::vector<double>& values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    out.insert(out.end(), p, p + values.size() * sizeof(double));
}

}  // namespace

Matrix pool_cells(const Tensor3& x, int factor) {
    if (factor <= 0 || x.height % factor != 0 || x.width % factor != 0) {
        throw std::invalid_argument("pool_cells: factor must divide the tensor dims");
    }
    const int h = x.height / factor;
    const int w = x.width / factor;
    Matrix out(h * w, x.channels);
    const double inv = 1.0 / (factor * factor);
    for (int c = 0; c < x.channels; ++c) {
        for (int r = 0; r < h; ++r) {
            for (int col = 0; col < w; ++col) {
                double s = 0.0;
                for (int dr = 0; dr < factor; ++dr) {
                    for (int dc = 0; dc < factor; ++dc) {
                        s += x.at(c, r * factor + dr, col * factor + dc);
                    }
                }
                out.at(r * w + col, c) = s * inv;
            }
        }
    }
    return out;
}

MockBackend::MockBackend(MockBackendConfig config) : config_(std::move(config)) {
    if (config_.latent.width <= 0 || config_.latent.height <= 0 || config_.latent.width > 16 ||
        config_.latent.height > 16) {
        throw ValidationError("mock backend latent dims must be within 1..16");
    }
    if (config_.token_width <= 0 || config_.heads <= 0 || config_.head_dim <= 0 || config_.max_length < 2) {
        throw ValidationError("mock backend widths must be positive");
    }
    if (config_.attention_resolutions.empty()) {
        throw ValidationError("mock backend needs at least one attention resolution");
    }
    tokenizer_ = std::make_unique<BpeTokenizer>(
        learn_bpe_merges(tokenizer_corpus(), static_cast<std::size_t>(config_.merges)), config_.max_length);

    NormalRng rng(config_.seed);
    const int w = config_.token_width;
    const int d = model_dim();
    embed_ = random_matrix(rng, tokenizer_->vocab_size(), w, 0.5);
    position_ = random_matrix(rng, config_.max_length, w, 0.1);
    w_text_ = random_matrix(rng, w, w, 1.0 / std::sqrt(w));
    b_text_ = random_matrix(rng, 1, w, 0.1);
    conv_.resize(static_cast<std::size_t>(kChannels) * kChannels * 9);
    for (double& v : conv_) {
        v = rng.normal() * 0.1;
    }
    for (const Dims& res : config_.attention_resolutions) {
        if (res.width <= 0 || res.height <= 0 || config_.latent.width % res.width != 0 ||
            config_.latent.height % res.height != 0 ||
            config_.latent.width / res.width != config_.latent.height / res.height) {
            throw ValidationError("attention resolution " + std::to_string(res.width) + "x" +
                                  std::to_string(res.height) + " must evenly divide the latent dims");
        }
        SiteWeights s;
        s.pool = config_.latent.width / res.width;
        s.w_in = random_matrix(rng, kChannels, d, 1.0 / std::sqrt(kChannels));
        s.b_in = random_matrix(rng, 1, d, 0.1);
        s.t_vec = random_matrix(rng, 1, d, 0.2);
        for (int h = 0; h < config_.heads; ++h) {
            s.wq.push_back(random_matrix(rng, d, config_.head_dim, 1.0 / std::sqrt(d)));
            s.wk.push_back(random_matrix(rng, w, config_.head_dim, 1.0 / std::sqrt(w)));
            s.wv.push_back(random_matrix(rng, w, config_.head_dim, 1.0 / std::sqrt(w)));
        }
        s.w_out = random_matrix(rng, d, kChannels, 0.5 / std::sqrt(d));
        s.cn_hint = random_matrix(rng, 1, d, 1.0);
        s.cn_x = random_matrix(rng, kChannels, d, 0.5);
        s.cn_bias = random_matrix(rng, 1, d, 0.1);
        sites_.push_back(std::move(s));
    }
}

std::string MockBackend::identifier() const {
    return "mock-v1/seed=" + std::to_string(config_.seed) + "/w=" + std::to_string(config_.token_width);
}

double MockBackend::sample_training_sigma(NormalRng& rng) const {
    return sigma(std::max(rng.uniform(), 1e-3));
}

Matrix MockBackend::token_embeddings(const PromptEncoding& encoding) const {
    const int length = config_.max_length;
    if (static_cast<int>(encoding.size()) > length) {
        throw ValidationError("prompt encoding exceeds the token limit of " + std::to_string(length));
    }
    const int w = config_.token_width;
    Matrix out(length, w);
    for (int p = 0; p < length; ++p) {
        const PromptToken tok = encoding.at(static_cast<std::size_t>(p));
        double* row = out.row(p);
        if (tok.kind == TokenKind::Injected) {
            if (static_cast<int>(tok.embedding.size()) != w) {
                throw BackendError("injected token embedding has width " + std::to_string(tok.embedding.size()) +
                                   ", backend expects " + std::to_string(w));
            }
            std::copy(tok.embedding.begin(), tok.embedding.end(), row);
        } else {
            if (tok.id < 0 || tok.id >= embed_.rows) {
                throw BackendError("token id out of vocabulary: " + std::to_string(tok.id));
            }
            std::copy(embed_.row(tok.id), embed_.row(tok.id) + w, row);
        }
    }
    return out;
}

Matrix MockBackend::encode_text(const Matrix& token_embeddings) const {
    if (token_embeddings.rows != config_.max_length || token_embeddings.cols != config_.token_width) {
        throw BackendError("token embeddings must be " + std::to_string(config_.max_length) + "x" +
                           std::to_string(config_.token_width));
    }
    Matrix u = token_embeddings;
    for (std::size_t i = 0; i < u.data.size(); ++i) {
        u.data[i] += position_.data[i];
    }
    Matrix z = matmul(u, w_text_);
    for (int r = 0; r < z.rows; ++r) {
        double* row = z.row(r);
        for (int c = 0; c < z.cols; ++c) {
            row[c] = std::tanh(row[c] + b_text_.data[c]);
        }
    }
    return z;
}

std::vector<double> MockBackend::embedding_of(const std::string& text) const {
    const auto tokens = tokenizer_->tokenize(text);
    if (tokens.empty()) {
        throw ValidationError("cannot embed empty text");
    }
    std::vector<double> out(static_cast<std::size_t>(config_.token_width), 0.0);
    for (const Token& t : tokens) {
        for (int c = 0; c < config_.token_width; ++c) {
            out[c] += embed_.at(t.id, c);
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(tokens.size());
    }
    return out;
}

Latent MockBackend::encode_image(const ImageF& image) const {
    const Dims latent = latent_dims(image.dims());
    Latent out(kChannels, latent.height, latent.width);
    const int s = latent_stride();
    const double inv = 1.0 / (s * s);
    for (int r = 0; r < latent.height; ++r) {
        for (int c = 0; c < latent.width; ++c) {
            double rgb[3] = {0.0, 0.0, 0.0};
            for (int dr = 0; dr < s; ++dr) {
                for (int dc = 0; dc < s; ++dc) {
                    const float* px = image.pixel(r * s + dr, c * s + dc);
                    for (int k = 0; k < 3; ++k) {
                        rgb[k] += static_cast<double>(px[k]) * px[3];
                    }
                }
            }
            for (double& v : rgb) v *= inv;
            for (int k = 0; k < 3; ++k) {
                out.at(k, r, c) = 2.0 * rgb[k] - 1.0;
            }
            out.at(3, r, c) = 2.0 * (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]) - 1.0;
        }
    }
    return out;
}

ImageF MockBackend::decode_latent(const Latent& latent) const {
    check_latent(latent);
    const int s = latent_stride();
    ImageF out(latent.width * s, latent.height * s);
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            float* px = out.pixel(r, c);
            for (int k = 0; k < 3; ++k) {
                px[k] = static_cast<float>(std::clamp((latent.at(k, r / s, c / s) + 1.0) * 0.5, 0.0, 1.0));
            }
            px[3] = 1.0f;
        }
    }
    return out;
}

std::vector<AttentionSite> MockBackend::attention_sites(Dims latent) const {
    std::vector<AttentionSite> out;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        const int pool = sites_[i].pool;
        if (latent.width % pool != 0 || latent.height % pool != 0) {
            throw BackendError("latent dims are not divisible by attention pooling factor " + std::to_string(pool));
        }
        AttentionSite site;
        site.name = "xattn" + std::to_string(i) + "@" + std::to_string(latent.width / pool) + "x" +
                    std::to_string(latent.height / pool);
        site.resolution = {latent.width / pool, latent.height / pool};
        site.heads = config_.heads;
        site.head_dim = config_.head_dim;
        out.push_back(site);
    }
    return out;
}

void MockBackend::check_latent(const Latent& x) const {
    if (x.channels != kChannels || x.width <= 0 || x.height <= 0) {
        throw BackendError("latent must have 4 channels and positive dims");
    }
}

Matrix MockBackend::site_features(const SiteWeights& w, const Latent& x_in, double sigma) const {
    Matrix f = matmul(pool_cells(x_in, w.pool), w.w_in);
    const double c_noise = 0.25 * std::log(std::max(sigma, 1e-4));
    for (int i = 0; i < f.rows; ++i) {
        double* row = f.row(i);
        for (int d = 0; d < f.cols; ++d) {
            row[d] += w.b_in.data[d] + c_noise * w.t_vec.data[d];
        }
    }
    return f;
}

Latent MockBackend::denoise(const Latent& x, double sigma, const Matrix& context, ContextKind kind,
                            const std::vector<Tensor3>* control) {
    check_latent(x);
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw BackendError("denoise: sigma must be finite and >= 0");
    }
    if (context.rows != config_.max_length || context.cols != config_.token_width) {
        throw BackendError("denoise: context has the wrong shape");
    }
    const auto sites = attention_sites(x.dims());
    if (control != nullptr && control->size() != sites.size()) {
        throw BackendError("denoise: expected one control residual per attention site");
    }
    const double c_in = 1.0 / std::sqrt(sigma * sigma + 1.0);
    Latent x_in = x;
    for (double& v : x_in.data) v *= c_in;

    // residual = conv3x3(x_in) + sum over sites of upsampled attention output
    Latent residual(kChannels, x.height, x.width);
    for (int co = 0; co < kChannels; ++co) {
        for (int r = 0; r < x.height; ++r) {
            for (int c = 0; c < x.width; ++c) {
                double s = 0.0;
                for (int ci = 0; ci < kChannels; ++ci) {
                    for (int dr = -1; dr <= 1; ++dr) {
                        for (int dc = -1; dc <= 1; ++dc) {
                            const int rr = r + dr;
                            const int cc = c + dc;
                            if (rr < 0 || cc < 0 || rr >= x.height || cc >= x.width) continue;
                            s += conv_[((co * kChannels + ci) * 3 + (dr + 1)) * 3 + (dc + 1)] * x_in.at(ci, rr, cc);
                        }
                    }
                }
                residual.at(co, r, c) = s;
            }
        }
    }

    const int hd = config_.head_dim;
    for (std::size_t si = 0; si < sites.size(); ++si) {
        const SiteWeights& w = sites_[si];
        const Matrix feats = site_features(w, x_in, sigma);
        Matrix attn(feats.rows, model_dim());
        for (int h = 0; h < config_.heads; ++h) {
            const Matrix q = matmul(feats, w.wq[h]);
            const Matrix k = matmul(context, w.wk[h]);
            const Matrix v = matmul(context, w.wv[h]);
            AttentionCall call;
            call.site = &sites[si];
            call.head = h;
            call.sigma = sigma;
            call.context = kind;
            call.q = &q;
            call.k = &k;
            call.v = &v;
            const AttentionResult res = run_attention(call);
            if (res.output.rows != feats.rows || res.output.cols != hd) {
                throw BackendError("attention processor returned the wrong shape at site '" + sites[si].name + "'");
            }
            for (int i = 0; i < feats.rows; ++i) {
                std::copy(res.output.row(i), res.output.row(i) + hd, attn.row(i) + h * hd);
            }
        }
        if (control != nullptr) {
            const Tensor3& ctl = (*control)[si];
            if (ctl.channels != model_dim() || ctl.height != sites[si].resolution.height ||
                ctl.width != sites[si].resolution.width) {
                throw BackendError("control residual shape mismatch at site '" + sites[si].name + "'");
            }
            for (int i = 0; i < attn.rows; ++i) {
                for (int d = 0; d < attn.cols; ++d) {
                    attn.at(i, d) += ctl.data[d * ctl.plane() + i];
                }
            }
        }
        const Matrix out = matmul(attn, w.w_out);
        const int sw = sites[si].resolution.width;
        for (int c = 0; c < kChannels; ++c) {
            for (int r = 0; r < x.height; ++r) {
                for (int col = 0; col < x.width; ++col) {
                    residual.at(c, r, col) += out.at((r / w.pool) * sw + col / w.pool, c);
                }
            }
        }
    }

    Latent denoised = x;
    const double gain = config_.residual_gain;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double eps = x_in.data[i] * sigma * c_in + gain * residual.data[i];
        denoised.data[i] = x.data[i] - sigma * eps;
    }
    return denoised;
}

std::vector<double> MockBackend::denoise_embedding_vjp(const Latent& x, double sigma, const Matrix& embeddings,
                                                       int position, const Latent& grad_output) const {
    check_latent(x);
    require_same_shape(x, grad_output, "denoise_embedding_vjp");
    if (installed_hooks() != 0) {
        throw BackendError("embedding gradients require a backend without attention hooks");
    }
    if (position < 0 || position >= config_.max_length) {
        throw BackendError("embedding position out of range");
    }
    const Matrix context = encode_text(embeddings);
    const auto sites = attention_sites(x.dims());
    const double c_in = 1.0 / std::sqrt(sigma * sigma + 1.0);
    Latent x_in = x;
    for (double& v : x_in.data) v *= c_in;

    const int w_text = config_.token_width;
    const int hd = config_.head_dim;
    const double scale = std::sqrt(static_cast<double>(hd));
    // d loss / d eps = -sigma * grad_output, then scaled by the residual gain
    const double g_res = -sigma * config_.residual_gain;
    std::vector<double> g_ctx(static_cast<std::size_t>(w_text), 0.0);

    for (std::size_t si = 0; si < sites.size(); ++si) {
        const SiteWeights& w = sites_[si];
        const int sw = sites[si].resolution.width;
        const Matrix feats = site_features(w, x_in, sigma);
        // adjoint of nearest upsampling: block sums
        Matrix g_out(feats.rows, kChannels);
        for (int c = 0; c < kChannels; ++c) {
            for (int r = 0; r < x.height; ++r) {
                for (int col = 0; col < x.width; ++col) {
                    g_out.at((r / w.pool) * sw + col / w.pool, c) += g_res * grad_output.at(c, r, col);
                }
            }
        }
        const Matrix g_attn = matmul_transposed(g_out, w.w_out);  // N_v x D
        for (int h = 0; h < config_.heads; ++h) {
            const Matrix q = matmul(feats, w.wq[h]);
            const Matrix k = matmul(context, w.wk[h]);
            const Matrix v = matmul(context, w.wv[h]);
            Matrix p = matmul_transposed(q, k);
            for (double& e : p.data) e /= scale;
            softmax_rows(p);
            std::vector<double> g_k(static_cast<std::size_t>(hd), 0.0);
            std::vector<double> g_v(static_cast<std::size_t>(hd), 0.0);
            for (int i = 0; i < p.rows; ++i) {
                const double* ga = g_attn.row(i) + h * hd;
                double dot_sum = 0.0;
                double gp_pos = 0.0;
                for (int j = 0; j < p.cols; ++j) {
                    double gp = 0.0;
                    for (int e = 0; e < hd; ++e) gp += ga[e] * v.at(j, e);
                    dot_sum += p.at(i, j) * gp;
                    if (j == position) gp_pos = gp;
                }
                const double pip = p.at(i, position);
                const double gs = pip * (gp_pos - dot_sum);
                for (int e = 0; e < hd; ++e) {
                    g_k[e] += gs * q.at(i, e) / scale;
                    g_v[e] += pip * ga[e];
                }
            }
            for (int a = 0; a < w_text; ++a) {
                double s = 0.0;
                for (int e = 0; e < hd; ++e) {
                    s += w.wk[h].at(a, e) * g_k[e] + w.wv[h].at(a, e) * g_v[e];
                }
                g_ctx[a] += s;
            }
        }
    }
    // ctx = tanh(u W + b): d/du_j = sum_i W[j][i] (1 - ctx_i^2) g_ctx_i
    std::vector<double> g_z(static_cast<std::size_t>(w_text));
    for (int i = 0; i < w_text; ++i) {
        const double c = context.at(position, i);
        g_z[i] = g_ctx[i] * (1.0 - c * c);
    }
    std::vector<double> g_e(static_cast<std::size_t>(w_text), 0.0);
    for (int j = 0; j < w_text; ++j) {
        double s = 0.0;
        for (int i = 0; i < w_text; ++i) s += w_text_.at(j, i) * g_z[i];
        g_e[j] = s;
    }
    return g_e;
}

std::vector<Tensor3> MockBackend::control_features(const GridD& hint, const Latent& x, double sigma,
                                                   const Matrix& context) const {
    (void)context;
    check_latent(x);
    const auto sites = attention_sites(x.dims());
    const double c_in = 1.0 / std::sqrt(sigma * sigma + 1.0);
    Latent x_in = x;
    for (double& v : x_in.data) v *= c_in;
    std::vector<Tensor3> out;
    for (std::size_t si = 0; si < sites.size(); ++si) {
        const SiteWeights& w = sites_[si];
        const Dims res = sites[si].resolution;
        const GridD h = area_resample(hint, res);
        const Matrix px = matmul(pool_cells(x_in, w.pool), w.cn_x);
        Tensor3 f(model_dim(), res.height, res.width);
        for (int i = 0; i < px.rows; ++i) {
            for (int d = 0; d < px.cols; ++d) {
                f.data[d * f.plane() + i] =
                    cn_gain_ * std::tanh(h[i] * w.cn_hint.data[d] + 0.3 * px.at(i, d) + w.cn_bias.data[d]);
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::string MockBackend::weights_checksum() const {
    std::vector<std::uint8_t> bytes;
    append_bytes(bytes, embed_.data);
    append_bytes(bytes, position_.data);
    append_bytes(bytes, w_text_.data);
    append_bytes(bytes, b_text_.data);
    append_bytes(bytes, conv_);
    for (const auto& s : sites_) {
        for (const Matrix* m : {&s.w_in, &s.b_in, &s.t_vec, &s.w_out, &s.cn_hint, &s.cn_x, &s.cn_bias}) {
            append_bytes(bytes, m->data);
        }
        for (std::size_t h = 0; h < s.wq.size(); ++h) {
            append_bytes(bytes, s.wq[h].data);
            append_bytes(bytes, s.wk[h].data);
            append_bytes(bytes, s.wv[h].data);
        }
    }
    for (const auto& [a, b] : tokenizer_->merges()) {
        bytes.insert(bytes.end(), a.begin(), a.end());
        bytes.push_back(' ');
        bytes.insert(bytes.end(), b.begin(), b.end());
        bytes.push_back('\n');
    }
    return sha256_hex(bytes);
}

}  // namespace collage
