#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "idcm/corpus_io.hpp"

namespace idcm {

/// Gaussian kernels over cosine similarity. Means strictly descending in [-1, 1].
struct KernelBank {
    std::vector<double> mus;
    std::vector<double> sigmas;

    /// Exact-match kernel (mu = 1, sigma = 1e-3) plus ten soft kernels from 0.9 to -0.9, sigma = 0.1.
    static KernelBank knrm();
    std::size_t size() const noexcept { return mus.size(); }
    void validate() const;

    friend bool operator==(const KernelBank&, const KernelBank&) = default;
};

struct CkDims {
    std::size_t vocab_size = 0;
    std::size_t d_emb = 768;
    std::size_t d_proj = 0;  // 0 = no pre-projection (full CK); CKS uses 384
    std::size_t d_out = 768;

    std::size_t d_in() const noexcept { return d_proj == 0 ? d_emb : d_proj; }

    friend bool operator==(const CkDims&, const CkDims&) = default;
};

inline constexpr std::size_t kConvContext = 3;

/// Trainable parameters of the CK selection model. The same layout doubles as the
/// gradient container.
template <typename T>
struct CkModelT {
    CkDims dims;
    KernelBank kernels;
    std::vector<T> embeddings;      // vocab_size x d_emb, row kPadId is zero
    std::vector<T> projection;      // d_emb x d_proj, empty without pre-projection
    std::vector<T> conv_weight;     // kConvContext x d_out x d_in
    std::vector<T> conv_bias;       // d_out
    std::vector<T> kernel_weights;  // one per kernel
    std::vector<T> kernel_bias;     // single element

    struct Tensor {
        std::string name;
        std::vector<std::size_t> shape;
        std::span<T> data;
    };
    struct ConstTensor {
        std::string name;
        std::vector<std::size_t> shape;
        std::span<const T> data;
    };

    /// Trainable tensors in a fixed order.
    std::vector<Tensor> tensors();
    std::vector<ConstTensor> tensors() const;

    /// Same shape, every value zero.
    CkModelT zeros_like() const;
    void set_zero();

    bool has_projection() const noexcept { return dims.d_proj != 0; }

    friend bool operator==(const CkModelT&, const CkModelT&) = default;
};

using CkModel = CkModelT<float>;
using CkModel64 = CkModelT<double>;

/// Token ids plus a mask (1 = real). Masked positions behave exactly like PAD.
struct MaskedTokens {
    std::span<const TokenId> ids;
    std::span<const std::uint8_t> mask;
};

struct CkConfig {
    CkDims dims;
    KernelBank kernels = KernelBank::knrm();
};

struct CkScore {
    double value = 0.0;
    std::vector<double> kernel_features;  // sum over query tokens of log(1 + kernel sum)
};

/// Embeddings uniform in [-0.1, 0.1] (PAD row zero), convolution and projection uniform in
/// +-1/sqrt(fan_in), kernel weights zero. Deterministic for a fixed seed.
template <typename T>
CkModelT<T> init_ck(const CkConfig& config, std::size_t vocab_size, std::uint64_t seed);

/// Throws when either side has no real tokens or ids exceed the vocabulary.
template <typename T>
CkScore ck_forward(const CkModelT<T>& model, MaskedTokens query, MaskedTokens passage);

/// Scores many passages against one query, encoding the query once. Same values as ck_forward.
template <typename T>
std::vector<double> ck_score_passages(const CkModelT<T>& model, MaskedTokens query,
                                      std::span<const MaskedTokens> passages);

/// Adds upstream * d(score)/d(params) into `grad` (which must have the model's shape) and
/// returns the forward score. The PAD embedding row never receives gradient.
template <typename T>
double ck_backward(const CkModelT<T>& model, MaskedTokens query, MaskedTokens passage, double upstream,
                   CkModelT<T>& grad);

/// Convert between precisions (used by the 64-bit gradient checks and checkpoints).
template <typename To, typename From>
CkModelT<To> convert_model(const CkModelT<From>& model);

/// All-ones mask helper for queries and unpadded token lists.
std::vector<std::uint8_t> full_mask(std::size_t n);

} // namespace idcm
