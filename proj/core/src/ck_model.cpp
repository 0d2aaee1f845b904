#include "idcm/ck_model.hpp"

#include <cmath>

#include "idcm/util.hpp"

namespace idcm {

KernelBank KernelBank::knrm() {
    KernelBank bank;
    bank.mus = {1.0, 0.9, 0.7, 0.5, 0.3, 0.1, -0.1, -0.3, -0.5, -0.7, -0.9};
    bank.sigmas.assign(bank.mus.size(), 0.1);
    bank.sigmas[0] = 1e-3;
    return bank;
}

void KernelBank::validate() const {
    if (mus.empty() || mus.size() != sigmas.size()) {
        throw ConfigError("kernel bank needs matching, non-empty mu and sigma lists");
    }
    for (std::size_t k = 0; k < mus.size(); ++k) {
        if (!(mus[k] >= -1.0 && mus[k] <= 1.0)) {
            throw ConfigError("kernel mu must lie in [-1, 1]");
        }
        if (!(sigmas[k] > 0.0)) {
            throw ConfigError("kernel sigma must be positive");
        }
        if (k > 0 && !(mus[k] < mus[k - 1])) {
            throw ConfigError("kernel mus must be strictly descending");
        }
    }
}

std::vector<std::uint8_t> full_mask(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

template <typename T>
std::vector<typename CkModelT<T>::Tensor> CkModelT<T>::tensors() {
    std::vector<Tensor> out;
    out.push_back({"embeddings", {dims.vocab_size, dims.d_emb}, embeddings});
    if (has_projection()) {
        out.push_back({"projection", {dims.d_emb, dims.d_proj}, projection});
    }
    out.push_back({"conv_weight", {kConvContext, dims.d_out, dims.d_in()}, conv_weight});
    out.push_back({"conv_bias", {dims.d_out}, conv_bias});
    out.push_back({"kernel_weights", {kernels.size()}, kernel_weights});
    out.push_back({"kernel_bias", {1}, kernel_bias});
    return out;
}

template <typename T>
std::vector<typename CkModelT<T>::ConstTensor> CkModelT<T>::tensors() const {
    std::vector<ConstTensor> out;
    for (auto& t : const_cast<CkModelT*>(this)->tensors()) {
        out.push_back({t.name, t.shape, std::span<const T>(t.data)});
    }
    return out;
}

template <typename T>
CkModelT<T> CkModelT<T>::zeros_like() const {
    CkModelT out;
    out.dims = dims;
    out.kernels = kernels;
    out.embeddings.assign(embeddings.size(), T{0});
    out.projection.assign(projection.size(), T{0});
    out.conv_weight.assign(conv_weight.size(), T{0});
    out.conv_bias.assign(conv_bias.size(), T{0});
    out.kernel_weights.assign(kernel_weights.size(), T{0});
    out.kernel_bias.assign(kernel_bias.size(), T{0});
    return out;
}

template <typename T>
void CkModelT<T>::set_zero() {
    for (auto& t : tensors()) {
        std::fill(t.data.begin(), t.data.end(), T{0});
    }
}

template <typename T>
CkModelT<T> init_ck(const CkConfig& config, std::size_t vocab_size, std::uint64_t seed) {
    config.kernels.validate();
    if (vocab_size < 2 || config.dims.d_emb == 0 || config.dims.d_out == 0) {
        throw ConfigError("CK model needs vocab_size >= 2 and positive dimensions");
    }
    CkModelT<T> m;
    m.dims = config.dims;
    m.dims.vocab_size = vocab_size;
    m.kernels = config.kernels;
    const auto& d = m.dims;

    SplitMix rng(seed);
    m.embeddings.resize(vocab_size * d.d_emb);
    for (auto& v : m.embeddings) {
        v = static_cast<T>(rng.uniform(-0.1, 0.1));
    }
    std::fill(m.embeddings.begin(), m.embeddings.begin() + static_cast<std::ptrdiff_t>(d.d_emb), T{0});

    if (d.d_proj != 0) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d.d_emb));
        m.projection.resize(d.d_emb * d.d_proj);
        for (auto& v : m.projection) {
            v = static_cast<T>(rng.uniform(-bound, bound));
        }
    }
    const double conv_bound = 1.0 / std::sqrt(static_cast<double>(kConvContext * d.d_in()));
    m.conv_weight.resize(kConvContext * d.d_out * d.d_in());
    for (auto& v : m.conv_weight) {
        v = static_cast<T>(rng.uniform(-conv_bound, conv_bound));
    }
    m.conv_bias.resize(d.d_out);
    for (auto& v : m.conv_bias) {
        v = static_cast<T>(rng.uniform(-conv_bound, conv_bound));
    }
    m.kernel_weights.assign(m.kernels.size(), T{0});
    m.kernel_bias.assign(1, T{0});
    return m;
}

template <typename To, typename From>
CkModelT<To> convert_model(const CkModelT<From>& model) {
    auto cast = [](const std::vector<From>& src) {
        std::vector<To> out(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) {
            out[i] = static_cast<To>(src[i]);
        }
        return out;
    };
    CkModelT<To> out;
    out.dims = model.dims;
    out.kernels = model.kernels;
    out.embeddings = cast(model.embeddings);
    out.projection = cast(model.projection);
    out.conv_weight = cast(model.conv_weight);
    out.conv_bias = cast(model.conv_bias);
    out.kernel_weights = cast(model.kernel_weights);
    out.kernel_bias = cast(model.kernel_bias);
    return out;
}

namespace {

constexpr double kNormEps = 1e-12;

// Contextualized, unit-normalized representation of one token sequence.
template <typename T>
struct Encoded {
    std::size_t n = 0;
    std::vector<std::size_t> real;  // positions with mask = 1
    std::vector<std::uint8_t> is_real;
    std::vector<T> x;               // n x d_in (zero at masked positions)
    std::vector<T> y;               // n x d_out (filled at real positions only)
    std::vector<T> norm;            // n
    std::vector<T> unit;            // n x d_out
};

template <typename T>
void check_tokens(const CkModelT<T>& model, MaskedTokens tokens, const char* what) {
    if (tokens.ids.size() != tokens.mask.size()) {
        throw Error(std::string(what) + ": token and mask lengths differ");
    }
    bool any = false;
    for (std::size_t t = 0; t < tokens.ids.size(); ++t) {
        if (tokens.mask[t] == 0) {
            continue;
        }
        if (tokens.ids[t] >= model.dims.vocab_size) {
            throw Error(std::string(what) + ": token id " + std::to_string(tokens.ids[t]) +
                        " outside vocabulary of size " + std::to_string(model.dims.vocab_size));
        }
        any = true;
    }
    if (!any) {
        throw Error(std::string(what) + " has no real tokens");
    }
}

template <typename T>
Encoded<T> encode(const CkModelT<T>& model, MaskedTokens tokens) {
    const auto& d = model.dims;
    const std::size_t d_in = d.d_in();
    const std::size_t d_out = d.d_out;
    Encoded<T> enc;
    enc.n = tokens.ids.size();
    enc.is_real.assign(enc.n, 0);
    enc.x.assign(enc.n * d_in, T{0});
    enc.y.assign(enc.n * d_out, T{0});
    enc.norm.assign(enc.n, T{0});
    enc.unit.assign(enc.n * d_out, T{0});

    for (std::size_t t = 0; t < enc.n; ++t) {
        if (tokens.mask[t] == 0 || tokens.ids[t] == kPadId) {
            continue;
        }
        const T* e = model.embeddings.data() + static_cast<std::size_t>(tokens.ids[t]) * d.d_emb;
        T* x = enc.x.data() + t * d_in;
        if (d.d_proj == 0) {
            std::copy(e, e + d.d_emb, x);
        } else {
            for (std::size_t a = 0; a < d.d_emb; ++a) {
                const T ea = e[a];
                const T* prow = model.projection.data() + a * d.d_proj;
                for (std::size_t c = 0; c < d.d_proj; ++c) {
                    x[c] += ea * prow[c];
                }
            }
        }
    }
    for (std::size_t t = 0; t < enc.n; ++t) {
        if (tokens.mask[t] != 0) {
            enc.real.push_back(t);
            enc.is_real[t] = 1;
        }
    }

    for (std::size_t t : enc.real) {
        T* y = enc.y.data() + t * d_out;
        std::copy(model.conv_bias.begin(), model.conv_bias.end(), y);
        for (std::size_t s = 0; s < kConvContext; ++s) {
            const auto src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(s) - 1;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(enc.n)) {
                continue;
            }
            const T* x = enc.x.data() + static_cast<std::size_t>(src) * d_in;
            const T* w = model.conv_weight.data() + s * d_out * d_in;
            for (std::size_t o = 0; o < d_out; ++o) {
                const T* wrow = w + o * d_in;
                T acc{0};
                for (std::size_t c = 0; c < d_in; ++c) {
                    acc += wrow[c] * x[c];
                }
                y[o] += acc;
            }
        }
        T sq{0};
        for (std::size_t o = 0; o < d_out; ++o) {
            sq += y[o] * y[o];
        }
        const T r = static_cast<T>(std::sqrt(static_cast<double>(sq) + kNormEps));
        enc.norm[t] = r;
        T* u = enc.unit.data() + t * d_out;
        for (std::size_t o = 0; o < d_out; ++o) {
            u[o] = y[o] / r;
        }
    }
    return enc;
}

// Match matrix and kernel pooling. cos is |real q| x |real p|; kernel sums |real q| x K.
template <typename T>
struct Matched {
    std::vector<double> cos;
    std::vector<double> sums;
    std::vector<double> features;
    double score = 0.0;
};

template <typename T>
Matched<T> match(const CkModelT<T>& model, const Encoded<T>& q, const Encoded<T>& p) {
    const std::size_t d_out = model.dims.d_out;
    const std::size_t nq = q.real.size();
    const std::size_t np = p.real.size();
    const std::size_t nk = model.kernels.size();
    Matched<T> m;
    m.cos.assign(nq * np, 0.0);
    m.sums.assign(nq * nk, 0.0);
    m.features.assign(nk, 0.0);

    for (std::size_t i = 0; i < nq; ++i) {
        const T* uq = q.unit.data() + q.real[i] * d_out;
        for (std::size_t j = 0; j < np; ++j) {
            const T* up = p.unit.data() + p.real[j] * d_out;
            T dot{0};
            for (std::size_t o = 0; o < d_out; ++o) {
                dot += uq[o] * up[o];
            }
            m.cos[i * np + j] = static_cast<double>(dot);
        }
    }
    for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t k = 0; k < nk; ++k) {
            const double mu = model.kernels.mus[k];
            const double inv = 1.0 / (2.0 * model.kernels.sigmas[k] * model.kernels.sigmas[k]);
            double s = 0.0;
            for (std::size_t j = 0; j < np; ++j) {
                const double diff = m.cos[i * np + j] - mu;
                s += std::exp(-diff * diff * inv);
            }
            m.sums[i * nk + k] = s;
            m.features[k] += std::log1p(s);
        }
    }
    double score = static_cast<double>(model.kernel_bias[0]);
    for (std::size_t k = 0; k < nk; ++k) {
        score += static_cast<double>(model.kernel_weights[k]) * m.features[k];
    }
    m.score = score;
    return m;
}

template <typename T>
void backprop_sequence(const CkModelT<T>& model, MaskedTokens tokens, const Encoded<T>& enc,
                       const std::vector<double>& d_unit, CkModelT<T>& grad) {
    const auto& d = model.dims;
    const std::size_t d_in = d.d_in();
    const std::size_t d_out = d.d_out;

    // through the normalization: dy = du / r - y (y . du) / r^3
    std::vector<double> dy(enc.n * d_out, 0.0);
    for (std::size_t t : enc.real) {
        const T* y = enc.y.data() + t * d_out;
        const double* du = d_unit.data() + t * d_out;
        const double r = static_cast<double>(enc.norm[t]);
        double ydu = 0.0;
        for (std::size_t o = 0; o < d_out; ++o) {
            ydu += static_cast<double>(y[o]) * du[o];
        }
        const double r3 = r * r * r;
        double* out = dy.data() + t * d_out;
        for (std::size_t o = 0; o < d_out; ++o) {
            out[o] = du[o] / r - static_cast<double>(y[o]) * ydu / r3;
        }
    }

    // through the convolution
    std::vector<double> dx(enc.n * d_in, 0.0);
    for (std::size_t t : enc.real) {
        const double* g = dy.data() + t * d_out;
        for (std::size_t o = 0; o < d_out; ++o) {
            grad.conv_bias[o] += static_cast<T>(g[o]);
        }
        for (std::size_t s = 0; s < kConvContext; ++s) {
            const auto src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(s) - 1;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(enc.n)) {
                continue;
            }
            const auto srcu = static_cast<std::size_t>(src);
            const T* x = enc.x.data() + srcu * d_in;
            const T* w = model.conv_weight.data() + s * d_out * d_in;
            T* gw = grad.conv_weight.data() + s * d_out * d_in;
            double* gx = dx.data() + srcu * d_in;
            const bool live = enc.is_real[srcu] != 0 && tokens.ids[srcu] != kPadId;
            for (std::size_t o = 0; o < d_out; ++o) {
                const double go = g[o];
                if (go == 0.0) {
                    continue;
                }
                const T* wrow = w + o * d_in;
                T* gwrow = gw + o * d_in;
                for (std::size_t c = 0; c < d_in; ++c) {
                    gwrow[c] += static_cast<T>(go * static_cast<double>(x[c]));
                }
                if (live) {
                    for (std::size_t c = 0; c < d_in; ++c) {
                        gx[c] += go * static_cast<double>(wrow[c]);
                    }
                }
            }
        }
    }

    // through the projection into the embeddings
    std::vector<double> de(d.d_emb);
    for (std::size_t t : enc.real) {
        const TokenId id = tokens.ids[t];
        if (id == kPadId) {
            continue;
        }
        const double* gx = dx.data() + t * d_in;
        const T* e = model.embeddings.data() + static_cast<std::size_t>(id) * d.d_emb;
        T* ge = grad.embeddings.data() + static_cast<std::size_t>(id) * d.d_emb;
        if (d.d_proj == 0) {
            for (std::size_t a = 0; a < d.d_emb; ++a) {
                ge[a] += static_cast<T>(gx[a]);
            }
            continue;
        }
        for (std::size_t a = 0; a < d.d_emb; ++a) {
            const T* prow = model.projection.data() + a * d.d_proj;
            T* gprow = grad.projection.data() + a * d.d_proj;
            const double ea = static_cast<double>(e[a]);
            double acc = 0.0;
            for (std::size_t c = 0; c < d.d_proj; ++c) {
                gprow[c] += static_cast<T>(ea * gx[c]);
                acc += static_cast<double>(prow[c]) * gx[c];
            }
            ge[a] += static_cast<T>(acc);
        }
    }
}

template <typename T>
void check_grad_shape(const CkModelT<T>& model, const CkModelT<T>& grad) {
    if (grad.embeddings.size() != model.embeddings.size() || grad.projection.size() != model.projection.size() ||
        grad.conv_weight.size() != model.conv_weight.size() || grad.conv_bias.size() != model.conv_bias.size() ||
        grad.kernel_weights.size() != model.kernel_weights.size() ||
        grad.kernel_bias.size() != model.kernel_bias.size()) {
        throw Error("gradient buffer does not match the model shape");
    }
}

} // namespace

template <typename T>
CkScore ck_forward(const CkModelT<T>& model, MaskedTokens query, MaskedTokens passage) {
    check_tokens(model, query, "query");
    check_tokens(model, passage, "passage");
    auto q = encode(model, query);
    auto p = encode(model, passage);
    auto m = match(model, q, p);
    return CkScore{m.score, std::move(m.features)};
}

template <typename T>
std::vector<double> ck_score_passages(const CkModelT<T>& model, MaskedTokens query,
                                      std::span<const MaskedTokens> passages) {
    check_tokens(model, query, "query");
    auto q = encode(model, query);
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto& passage : passages) {
        check_tokens(model, passage, "passage");
        auto p = encode(model, passage);
        out.push_back(match(model, q, p).score);
    }
    return out;
}

template <typename T>
double ck_backward(const CkModelT<T>& model, MaskedTokens query, MaskedTokens passage, double upstream,
                   CkModelT<T>& grad) {
    check_tokens(model, query, "query");
    check_tokens(model, passage, "passage");
    check_grad_shape(model, grad);
    auto q = encode(model, query);
    auto p = encode(model, passage);
    auto m = match(model, q, p);
    if (upstream == 0.0) {
        return m.score;
    }

    const std::size_t nq = q.real.size();
    const std::size_t np = p.real.size();
    const std::size_t nk = model.kernels.size();
    const std::size_t d_out = model.dims.d_out;

    grad.kernel_bias[0] += static_cast<T>(upstream);
    for (std::size_t k = 0; k < nk; ++k) {
        grad.kernel_weights[k] += static_cast<T>(upstream * m.features[k]);
    }

    // d score / d cos(i, j) = sum_k upstream * w_k / (1 + S_ik) * K_ijk * -(cos - mu_k) / sigma_k^2
    std::vector<double> dcos(nq * np, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t k = 0; k < nk; ++k) {
            const double ds = upstream * static_cast<double>(model.kernel_weights[k]) / (1.0 + m.sums[i * nk + k]);
            if (ds == 0.0) {
                continue;
            }
            const double mu = model.kernels.mus[k];
            const double s2 = model.kernels.sigmas[k] * model.kernels.sigmas[k];
            for (std::size_t j = 0; j < np; ++j) {
                const double diff = m.cos[i * np + j] - mu;
                const double kv = std::exp(-diff * diff / (2.0 * s2));
                dcos[i * np + j] += ds * kv * (-diff / s2);
            }
        }
    }

    std::vector<double> dq(q.n * d_out, 0.0);
    std::vector<double> dp(p.n * d_out, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        const T* uq = q.unit.data() + q.real[i] * d_out;
        double* gq = dq.data() + q.real[i] * d_out;
        for (std::size_t j = 0; j < np; ++j) {
            const double g = dcos[i * np + j];
            if (g == 0.0) {
                continue;
            }
            const T* up = p.unit.data() + p.real[j] * d_out;
            double* gp = dp.data() + p.real[j] * d_out;
            for (std::size_t o = 0; o < d_out; ++o) {
                gq[o] += g * static_cast<double>(up[o]);
                gp[o] += g * static_cast<double>(uq[o]);
            }
        }
    }
    backprop_sequence(model, query, q, dq, grad);
    backprop_sequence(model, passage, p, dp, grad);

    // PAD row stays frozen
    std::fill(grad.embeddings.begin(), grad.embeddings.begin() + static_cast<std::ptrdiff_t>(model.dims.d_emb), T{0});
    return m.score;
}

template struct CkModelT<float>;
template struct CkModelT<double>;
template CkModelT<float> init_ck<float>(const CkConfig&, std::size_t, std::uint64_t);
template CkModelT<double> init_ck<double>(const CkConfig&, std::size_t, std::uint64_t);
template CkScore ck_forward<float>(const CkModelT<float>&, MaskedTokens, MaskedTokens);
template CkScore ck_forward<double>(const CkModelT<double>&, MaskedTokens, MaskedTokens);
template std::vector<double> ck_score_passages<float>(const CkModelT<float>&, MaskedTokens,
                                                     std::span<const MaskedTokens>);
template std::vector<double> ck_score_passages<double>(const CkModelT<double>&, MaskedTokens,
                                                      std::span<const MaskedTokens>);
template double ck_backward<float>(const CkModelT<float>&, MaskedTokens, MaskedTokens, double, CkModelT<float>&);
template double ck_backward<double>(const CkModelT<double>&, MaskedTokens, MaskedTokens, double, CkModelT<double>&);
template CkModelT<double> convert_model<double, float>(const CkModelT<float>&);
template CkModelT<float> convert_model<float, double>(const CkModelT<double>&);

} // namespace idcm
